//! Command-line front end: plan, validate, linearize, oracle, esa, lint.
//!
//! Exit codes are a stable contract: 0 success/PASS, 1 unsolvable or FAIL
//! or diagnostics, 2 resource or guard limits, 3 input errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use pomp::exec::{validate, ValidationMode, Verdict};
use pomp::ground::{prepare, Prepared};
use pomp::linearize::{enumerate_linearizations, shortest_linearization, Linearization};
use pomp::lint::{fix_nonconcurrent, lint_domain};
use pomp::model::{Domain, GroundAction, Problem, StepId};
use pomp::oracle::{esa_compile, esa_problem, oracle_solve, EsaCaps, OracleConfig, OracleOutcome};
use pomp::parse::{check_problem, parse_domain, parse_plan, parse_problem};
use pomp::plan::{plan_from_doc, ConcurrentPlan};
use pomp::planner::{plan as run_planner, PlanOutcome, PlannerConfig, Strategy};
use pomp::print::{format_linearization, print_domain, print_linearization, print_plan};

const EXIT_OK: u8 = 0;
const EXIT_NEGATIVE: u8 = 1;
const EXIT_RESOURCE: u8 = 2;
const EXIT_INPUT: u8 = 3;

#[derive(Parser)]
#[command(name = "pomp", about = "Partial-order planning with concurrent interacting actions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Lifo,
    Fifo,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputArg {
    Text,
    Machine,
}

#[derive(Args)]
struct PlanArgs {
    domain: PathBuf,
    problem: PathBuf,
    /// Goal selection strategy.
    #[arg(long, value_enum, default_value = "lifo")]
    strategy: StrategyArg,
    /// Iterative-deepening cap on plan steps.
    #[arg(long, default_value_t = 16)]
    max_steps: usize,
    /// Search node budget.
    #[arg(long, default_value_t = 5_000_000)]
    max_nodes: u64,
    /// RNG seed; the POMP_SEED environment variable overrides it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Forbid concurrent precondition clobbering in emitted plans.
    #[arg(long)]
    no_concurrent_clobber: bool,
    #[arg(long, value_enum, default_value = "text")]
    output: OutputArg,
}

#[derive(Args)]
struct ValidateArgs {
    domain: PathBuf,
    problem: PathBuf,
    plan: PathBuf,
    /// Check every dense n-linearization up to the bound (default: the
    /// step count).
    #[arg(long)]
    bound: Option<usize>,
    /// Check k random linearizations instead of all of them.
    #[arg(long)]
    sampled: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct LinearizeArgs {
    plan: PathBuf,
    /// Print one shortest linearization.
    #[arg(long, conflicts_with = "enumerate")]
    shortest: bool,
    /// Enumerate every linearization of at most BOUND joint actions.
    #[arg(long, value_name = "BOUND")]
    enumerate: Option<usize>,
}

#[derive(Args)]
struct OracleArgs {
    domain: PathBuf,
    problem: PathBuf,
    /// Joint-action horizon; omit to search to the reachability fixpoint.
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long, default_value_t = 1_000_000)]
    max_states: usize,
}

#[derive(Args)]
struct EsaArgs {
    domain: PathBuf,
    problem: PathBuf,
    /// Where to write the compiled single-agent domain.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct LintArgs {
    domain: PathBuf,
    /// Emit a repaired domain with nonconcurrency constraints added for
    /// conflicting-effect pairs.
    #[arg(long)]
    fix_nonconcurrent: bool,
    /// Where to write the repaired domain (defaults to stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a concurrent nonlinear plan.
    Plan(PlanArgs),
    /// Execute every linearization of a plan file against the problem.
    Validate(ValidateArgs),
    /// Linearize a plan file into sequences of joint actions.
    Linearize(LinearizeArgs),
    /// Breadth-first search over ground joint actions.
    Oracle(OracleArgs),
    /// Compile the equivalent single-agent domain.
    Esa(EsaArgs),
    /// Report domain diagnostics.
    Lint(LintArgs),
}

fn fail_input(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(EXIT_INPUT)
}

fn read(path: &PathBuf) -> Result<String, String> {
    std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn load_pair(domain: &PathBuf, problem: &PathBuf) -> Result<(Domain, Problem), String> {
    let d = parse_domain(&read(domain)?).map_err(|e| format!("{}: {e}", domain.display()))?;
    let p = parse_problem(&read(problem)?).map_err(|e| format!("{}: {e}", problem.display()))?;
    check_problem(&p, &d)?;
    Ok((d, p))
}

fn seed_of(flag: u64) -> u64 {
    match std::env::var("POMP_SEED") {
        Ok(v) => v.parse().unwrap_or(flag),
        Err(_) => flag,
    }
}

/// Ground step list of a plan under its first consistent grounding
/// (deterministic); None when the plan cannot be grounded.
fn grounded_steps(plan: &ConcurrentPlan, prepared: &Prepared) -> Option<Vec<(StepId, GroundAction)>> {
    let residual = plan.residual_vars();
    let grounding = if residual.is_empty() {
        Default::default()
    } else {
        plan.bindings
            .enumerate_assignments(&prepared.universe, &residual)
            .into_iter()
            .next()?
    };
    let mut out = Vec::new();
    for step in &plan.steps {
        let mut args = Vec::new();
        for t in &step.args {
            let name = if t.is_var() {
                grounding.get(&t.name)?.clone()
            } else {
                t.name.clone()
            };
            args.push(name);
        }
        out.push((step.id, GroundAction { name: step.name.clone(), args }));
    }
    Some(out)
}

fn cmd_plan(args: PlanArgs) -> ExitCode {
    let (d, p) = match load_pair(&args.domain, &args.problem) {
        Ok(v) => v,
        Err(e) => return fail_input(e),
    };
    let prepared = match prepare(&d, &p) {
        Ok(v) => v,
        Err(e) => return fail_input(e),
    };
    let config = PlannerConfig {
        strategy: match args.strategy {
            StrategyArg::Lifo => Strategy::Lifo,
            StrategyArg::Fifo => Strategy::Fifo,
        },
        max_steps: args.max_steps,
        max_nodes: args.max_nodes,
        no_concurrent_clobber: args.no_concurrent_clobber,
        seed: seed_of(args.seed),
    };
    match run_planner(&prepared, &config) {
        PlanOutcome::Solved(plan, stats) => {
            let text = print_plan(&plan);
            let shortest = grounded_steps(&plan, &prepared)
                .and_then(|steps| shortest_linearization(&steps, &plan.orderings, &plan.agents));
            match args.output {
                OutputArg::Text => {
                    println!(
                        "solved: {} steps, {} nodes, {} deepening rounds",
                        plan.steps.len(),
                        stats.nodes,
                        stats.rounds
                    );
                    print!("{text}");
                    match shortest {
                        Some(lin) => {
                            println!("shortest linearization ({} ticks):", lin.ticks.len());
                            print!("{}", format_linearization(&lin.ticks));
                        }
                        None => println!("no linearization exists for the first grounding"),
                    }
                }
                OutputArg::Machine => {
                    print!("{text}");
                    if let Some(lin) = shortest {
                        print!("{}", print_linearization(&lin.ticks, &plan.agents));
                    }
                }
            }
            ExitCode::from(EXIT_OK)
        }
        PlanOutcome::Unsolvable(stats) => {
            eprintln!("unsolvable ({} nodes)", stats.nodes);
            ExitCode::from(EXIT_NEGATIVE)
        }
        PlanOutcome::Exhausted(stats) => {
            eprintln!("resource limit hit ({} nodes, {} rounds)", stats.nodes, stats.rounds);
            ExitCode::from(EXIT_RESOURCE)
        }
    }
}

fn cmd_validate(args: ValidateArgs) -> ExitCode {
    let (d, p) = match load_pair(&args.domain, &args.problem) {
        Ok(v) => v,
        Err(e) => return fail_input(e),
    };
    let prepared = match prepare(&d, &p) {
        Ok(v) => v,
        Err(e) => return fail_input(e),
    };
    let doc = match read(&args.plan).and_then(|t| parse_plan(&t).map_err(|e| e.to_string())) {
        Ok(v) => v,
        Err(e) => return fail_input(e),
    };
    let plan = match plan_from_doc(&doc, Some(&prepared.domain)) {
        Ok(v) => v,
        Err(e) => return fail_input(e),
    };
    let mode = match args.sampled {
        Some(k) => ValidationMode::Sampled { k, seed: seed_of(args.seed) },
        None => ValidationMode::Exhaustive { bound: args.bound },
    };
    match validate(&plan, &prepared, mode) {
        Ok(Verdict::Pass { groundings, linearizations }) => {
            println!("PASS: {linearizations} linearizations over {groundings} groundings reach the goal");
            ExitCode::from(EXIT_OK)
        }
        Ok(Verdict::Fail(ce)) => {
            println!("FAIL: {}", ce.reason);
            if !ce.grounding.is_empty() {
                println!("grounding: {:?}", ce.grounding);
            }
            match ce.failed_tick {
                Some(t) => println!("failing tick: {t}"),
                None => println!("all ticks executed; the goal does not hold in the final state"),
            }
            print!("{}", format_linearization(&ce.ticks));
            ExitCode::from(EXIT_NEGATIVE)
        }
        Err(e) => fail_input(e),
    }
}

fn cmd_linearize(args: LinearizeArgs) -> ExitCode {
    let doc = match read(&args.plan).and_then(|t| parse_plan(&t).map_err(|e| e.to_string())) {
        Ok(v) => v,
        Err(e) => return fail_input(e),
    };
    let plan = match plan_from_doc(&doc, None) {
        Ok(v) => v,
        Err(e) => return fail_input(e),
    };
    let steps: Option<Vec<(StepId, GroundAction)>> = plan
        .steps
        .iter()
        .map(|s| {
            if s.args.iter().any(|a| a.is_var()) {
                None
            } else {
                Some((
                    s.id,
                    GroundAction {
                        name: s.name.clone(),
                        args: s.args.iter().map(|a| a.name.clone()).collect(),
                    },
                ))
            }
        })
        .collect();
    let Some(steps) = steps else {
        return fail_input("linearize needs ground step arguments");
    };
    if args.shortest {
        match shortest_linearization(&steps, &plan.orderings, &plan.agents) {
            Some(lin) => {
                println!("shortest linearization ({} ticks):", lin.ticks.len());
                print!("{}", format_linearization(&lin.ticks));
                ExitCode::from(EXIT_OK)
            }
            None => {
                eprintln!("plan admits no linearization");
                ExitCode::from(EXIT_NEGATIVE)
            }
        }
    } else if let Some(bound) = args.enumerate {
        let mut all: Vec<Linearization> = Vec::new();
        enumerate_linearizations(&steps, &plan.orderings, &plan.agents, bound, false, &mut |lin| {
            all.push(lin.clone());
            true
        });
        for (i, lin) in all.iter().enumerate() {
            println!("linearization {} ({} ticks):", i + 1, lin.ticks.len());
            print!("{}", format_linearization(&lin.ticks));
        }
        println!("{} linearizations of length <= {bound}", all.len());
        ExitCode::from(EXIT_OK)
    } else {
        fail_input("pass --shortest or --enumerate BOUND")
    }
}

fn cmd_oracle(args: OracleArgs) -> ExitCode {
    let (d, p) = match load_pair(&args.domain, &args.problem) {
        Ok(v) => v,
        Err(e) => return fail_input(e),
    };
    let prepared = match prepare(&d, &p) {
        Ok(v) => v,
        Err(e) => return fail_input(e),
    };
    let config = OracleConfig { horizon: args.horizon, max_states: args.max_states, ..Default::default() };
    match oracle_solve(&prepared, &config) {
        Ok(OracleOutcome::Found(seq)) => {
            println!("found a {}-tick joint-action sequence:", seq.len());
            print!("{}", format_linearization(&seq));
            ExitCode::from(EXIT_OK)
        }
        Ok(OracleOutcome::Unsolvable) => {
            println!("none");
            ExitCode::from(EXIT_NEGATIVE)
        }
        Ok(OracleOutcome::HorizonExhausted) => {
            println!("none (horizon)");
            ExitCode::from(EXIT_RESOURCE)
        }
        Ok(OracleOutcome::StateCapExhausted) => {
            println!("none (state cap)");
            ExitCode::from(EXIT_RESOURCE)
        }
        Err(e) => {
            eprintln!("guard: {e}");
            ExitCode::from(EXIT_RESOURCE)
        }
    }
}

fn cmd_esa(args: EsaArgs) -> ExitCode {
    let (d, p) = match load_pair(&args.domain, &args.problem) {
        Ok(v) => v,
        Err(e) => return fail_input(e),
    };
    let prepared = match prepare(&d, &p) {
        Ok(v) => v,
        Err(e) => return fail_input(e),
    };
    match esa_compile(&prepared, &EsaCaps::default()) {
        Ok(esa) => {
            let text = print_domain(&esa);
            if let Err(e) = std::fs::write(&args.out, text) {
                return fail_input(format!("{}: {e}", args.out.display()));
            }
            let companion = esa_problem(&prepared.problem);
            println!(
                "wrote {} with {} joint operators (single agent: {})",
                args.out.display(),
                esa.schemata.len(),
                companion.agents[0]
            );
            ExitCode::from(EXIT_OK)
        }
        Err(e) => {
            eprintln!("guard: {e}");
            ExitCode::from(EXIT_RESOURCE)
        }
    }
}

fn cmd_lint(args: LintArgs) -> ExitCode {
    let domain = match read(&args.domain).and_then(|t| parse_domain(&t).map_err(|e| e.to_string())) {
        Ok(v) => v,
        Err(e) => return fail_input(e),
    };
    let diags = lint_domain(&domain);
    for d in &diags {
        println!("{d}");
    }
    if args.fix_nonconcurrent {
        let fixed = fix_nonconcurrent(&domain);
        let text = print_domain(&fixed);
        match &args.out {
            Some(path) => {
                if let Err(e) = std::fs::write(path, text) {
                    return fail_input(format!("{}: {e}", path.display()));
                }
            }
            None => print!("{text}"),
        }
    }
    if diags.is_empty() {
        println!("clean");
        ExitCode::from(EXIT_OK)
    } else {
        ExitCode::from(EXIT_NEGATIVE)
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Plan(args) => cmd_plan(args),
        Command::Validate(args) => cmd_validate(args),
        Command::Linearize(args) => cmd_linearize(args),
        Command::Oracle(args) => cmd_oracle(args),
        Command::Esa(args) => cmd_esa(args),
        Command::Lint(args) => cmd_lint(args),
    }
}
