use pomp::exec::{validate, ValidationMode, Verdict};
use pomp::ground::prepare;
use pomp::linearize::shortest_linearization;
use pomp::parse::{parse_domain, parse_problem};
use pomp::planner::{plan, PlanOutcome, PlannerConfig};

fn main() {
    for (dom, prob) in [("tables", "tables"), ("swap", "swap")] {
        let d = parse_domain(&std::fs::read_to_string(format!("crates/pomp/corpus/{dom}.pomp")).unwrap()).unwrap();
        let p = parse_problem(&std::fs::read_to_string(format!("crates/pomp/corpus/{prob}.prob")).unwrap()).unwrap();
        let prepared = prepare(&d, &p).unwrap();
        let t0 = std::time::Instant::now();
        let out = plan(&prepared, &PlannerConfig::default());
        let dt = t0.elapsed();
        let PlanOutcome::Solved(plan, stats) = out else { panic!("{dom}: {out:?}") };
        println!("== {dom}: solved in {dt:?}, nodes {}", stats.nodes);
        let t1 = std::time::Instant::now();
        let verdict = validate(&plan, &prepared, ValidationMode::Exhaustive { bound: None }).unwrap();
        println!("   validate in {:?}: {:?}", t1.elapsed(), match &verdict {
            Verdict::Pass { groundings, linearizations } => format!("PASS ({groundings} groundings, {linearizations} linearizations)"),
            Verdict::Fail(ce) => format!("FAIL {ce:?}"),
        });
        // shortest linearization of the first grounding
        let steps: Vec<_> = plan.steps.iter().map(|s| (s.id, pomp::model::GroundAction {
            name: s.name.clone(),
            args: s.args.iter().map(|t| t.name.clone()).collect(),
        })).collect();
        if steps.iter().all(|(_, g)| g.args.iter().all(|a| !a.starts_with('?'))) {
            let lin = shortest_linearization(&steps, &plan.orderings, &plan.agents).unwrap();
            println!("   shortest: {} ticks", lin.ticks.len());
            for (i, t) in lin.ticks.iter().enumerate() { println!("     tick {}: {}", i + 1, t); }
        } else {
            println!("   residual vars present: {:?}", plan.residual_vars());
        }
    }
}
