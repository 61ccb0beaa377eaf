//! Brute-force planning over the ground joint-action space: breadth-first
//! search used as the independent oracle for the planner, plus the
//! reduction to an equivalent single-agent domain whose actions are joint
//! actions (unconstrained singles, minimal required-concurrency sets, and
//! minimal self-clobbering sets).

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use thiserror::Error;

use crate::exec::{
    apply_joint, instance_from_schema, joint_consistent_whenless, joint_of, matches_ground,
    GroundInstance,
};
use crate::ground::Prepared;
use crate::model::{
    ActionSchema, Domain, ItemPolarity, JointAction, Literal, Problem, State, Term, VarConstraint,
    WhenClause,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("ground action universe exceeds the cap of {0}")]
    InstanceBlowup(usize),
    #[error("joint action set exceeds the cap of {0}")]
    ActionBlowup(usize),
    #[error("{0}")]
    DomainSpec(String),
}

/// Every ground instantiation of every schema, with per-agent indexing.
#[derive(Debug, Clone)]
pub struct GroundTable {
    pub instances: Vec<GroundInstance>,
    pub per_agent: Vec<Vec<usize>>,
}

pub fn build_ground_table(prepared: &Prepared, cap: usize) -> Result<GroundTable, OracleError> {
    let mut instances = Vec::new();
    for schema in &prepared.domain.schemata {
        if schema.params.is_empty() {
            continue;
        }
        let mut candidates: Vec<Vec<String>> = Vec::new();
        candidates.push(prepared.problem.agents.clone());
        for p in &schema.params[1..] {
            candidates
                .push(prepared.universe.compatible(p.ty.as_deref()).map(String::from).collect());
        }
        let mut assignment: Vec<String> = Vec::new();
        expand(schema, &candidates, &mut assignment, &mut instances, cap)?;
    }
    let per_agent = prepared
        .problem
        .agents
        .iter()
        .map(|agent| {
            instances
                .iter()
                .enumerate()
                .filter(|(_, inst)| inst.action.agent() == agent)
                .map(|(i, _)| i)
                .collect()
        })
        .collect();
    Ok(GroundTable { instances, per_agent })
}

fn expand(
    schema: &ActionSchema,
    candidates: &[Vec<String>],
    assignment: &mut Vec<String>,
    out: &mut Vec<GroundInstance>,
    cap: usize,
) -> Result<(), OracleError> {
    if assignment.len() == candidates.len() {
        if out.len() >= cap {
            return Err(OracleError::InstanceBlowup(cap));
        }
        out.push(instance_from_schema(schema, assignment));
        return Ok(());
    }
    for value in &candidates[assignment.len()] {
        assignment.push(value.clone());
        expand(schema, candidates, assignment, out, cap)?;
        assignment.pop();
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OracleOutcome {
    /// A shortest goal-reaching joint-action sequence.
    Found(Vec<JointAction>),
    /// The reachable state space was exhausted below the horizon: no plan
    /// of any length exists.
    Unsolvable,
    /// The horizon was hit with frontier states left.
    HorizonExhausted,
    /// The visited-state cap was hit.
    StateCapExhausted,
}

#[derive(Debug, Clone)]
pub struct OracleConfig {
    /// `None` searches to the reachability fixpoint.
    pub horizon: Option<usize>,
    pub max_states: usize,
    pub instance_cap: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { horizon: None, max_states: 1_000_000, instance_cap: 100_000 }
    }
}

fn goal_holds(state: &State, goal: &[Literal]) -> bool {
    goal.iter().all(|g| state.satisfies(g))
}

fn successors(state: &State, table: &GroundTable) -> Result<Vec<(JointAction, State)>, OracleError> {
    // Per-agent choices, noop included as None.
    let choices: Vec<Vec<Option<usize>>> = table
        .per_agent
        .iter()
        .map(|ids| {
            let mut v: Vec<Option<usize>> = vec![None];
            v.extend(ids.iter().map(|&i| Some(i)));
            v
        })
        .collect();
    let mut out = Vec::new();
    let mut slots: Vec<Option<usize>> = Vec::with_capacity(choices.len());
    fn product(
        choices: &[Vec<Option<usize>>],
        slots: &mut Vec<Option<usize>>,
        table: &GroundTable,
        state: &State,
        out: &mut Vec<(JointAction, State)>,
    ) -> Result<(), OracleError> {
        if slots.len() == choices.len() {
            if slots.iter().all(Option::is_none) {
                return Ok(());
            }
            let elements: Vec<Option<&GroundInstance>> =
                slots.iter().map(|s| s.map(|i| &table.instances[i])).collect();
            match apply_joint(&elements, state) {
                Ok(next) => out.push((joint_of(&elements), next)),
                Err(crate::exec::ExecFailure::DomainSpec(msg)) => {
                    return Err(OracleError::DomainSpec(msg))
                }
                Err(_) => {}
            }
            return Ok(());
        }
        for choice in &choices[slots.len()] {
            slots.push(*choice);
            product(choices, slots, table, state, out)?;
            slots.pop();
        }
        Ok(())
    }
    product(&choices, &mut slots, table, state, &mut out)?;
    Ok(out)
}

/// Breadth-first search over consistent, applicable ground joint actions.
/// Returns a shortest goal-reaching sequence within the horizon.
pub fn oracle_solve(prepared: &Prepared, config: &OracleConfig) -> Result<OracleOutcome, OracleError> {
    let table = build_ground_table(prepared, config.instance_cap)?;
    oracle_solve_with_table(prepared, &table, config)
}

pub fn oracle_solve_with_table(
    prepared: &Prepared,
    table: &GroundTable,
    config: &OracleConfig,
) -> Result<OracleOutcome, OracleError> {
    let init = prepared.problem.init.clone();
    if goal_holds(&init, &prepared.problem.goal) {
        return Ok(OracleOutcome::Found(Vec::new()));
    }
    let mut visited: HashSet<State> = HashSet::new();
    visited.insert(init.clone());
    let mut parents: HashMap<State, (State, JointAction)> = HashMap::new();
    let mut frontier = vec![init];
    let mut depth = 0usize;
    loop {
        if let Some(h) = config.horizon {
            if depth >= h {
                return Ok(OracleOutcome::HorizonExhausted);
            }
        }
        depth += 1;
        let expansions: Vec<Result<Vec<(JointAction, State)>, OracleError>> =
            crate::par::map_slice(&frontier, |s| successors(s, table));
        let mut next_frontier = Vec::new();
        for (state, expansion) in frontier.iter().zip(expansions) {
            for (joint, next) in expansion? {
                if visited.contains(&next) {
                    continue;
                }
                visited.insert(next.clone());
                parents.insert(next.clone(), (state.clone(), joint));
                if goal_holds(&next, &prepared.problem.goal) {
                    let mut seq = Vec::new();
                    let mut cur = &next;
                    while let Some((prev, joint)) = parents.get(cur) {
                        seq.push(joint.clone());
                        cur = prev;
                    }
                    seq.reverse();
                    return Ok(OracleOutcome::Found(seq));
                }
                next_frontier.push(next);
                if visited.len() > config.max_states {
                    return Ok(OracleOutcome::StateCapExhausted);
                }
            }
        }
        if next_frontier.is_empty() {
            return Ok(OracleOutcome::Unsolvable);
        }
        frontier = next_frontier;
    }
}

#[derive(Debug, Clone)]
pub struct EsaCaps {
    pub instance_cap: usize,
    pub action_cap: usize,
}

impl Default for EsaCaps {
    fn default() -> Self {
        EsaCaps { instance_cap: 100_000, action_cap: 100_000 }
    }
}

/// Positional element layout for a member set, one slot per agent.
fn layout<'a>(
    members: &[usize],
    table: &'a GroundTable,
    agents: &[String],
) -> Option<Vec<Option<&'a GroundInstance>>> {
    let mut slots: Vec<Option<&GroundInstance>> = vec![None; agents.len()];
    for &m in members {
        let inst = &table.instances[m];
        let slot = agents.iter().position(|a| a == inst.action.agent())?;
        if slots[slot].is_some() {
            return None;
        }
        slots[slot] = Some(inst);
    }
    Some(slots)
}

fn consistent_set(members: &[usize], table: &GroundTable, agents: &[String]) -> bool {
    match layout(members, table, agents) {
        Some(slots) => joint_consistent_whenless(&slots).is_ok(),
        None => false,
    }
}

/// Clobbering between ground parts: some effect of `a` negates some
/// precondition of `b`.
fn clobbers(a: &GroundInstance, b: &GroundInstance) -> bool {
    a.effect.iter().any(|e| {
        e.is_ground()
            && b.pre.iter().any(|p| {
                p.is_ground()
                    && p.predicate == e.predicate
                    && p.args == e.args
                    && p.polarity != e.polarity
            })
    })
}

/// Closes `set` under required-concurrency items, branching over partner
/// choices; records every closed, consistent set.
fn close_required(
    set: &mut Vec<usize>,
    table: &GroundTable,
    agents: &[String],
    out: &mut BTreeSet<Vec<usize>>,
    cap: usize,
) -> Result<(), OracleError> {
    if out.len() > cap {
        return Err(OracleError::ActionBlowup(cap));
    }
    // First member whose required item is unsatisfied within the set.
    let mut pending: Option<(usize, usize)> = None;
    'outer: for &m in set.iter() {
        let inst = &table.instances[m];
        for (ii, item) in inst.concurrency.iter().enumerate() {
            if item.polarity != ItemPolarity::Required {
                continue;
            }
            let satisfied = set.iter().any(|&o| {
                o != m && matches_ground(&table.instances[o].action, item, &BTreeMap::new())
            });
            if !satisfied {
                pending = Some((m, ii));
                break 'outer;
            }
        }
    }
    match pending {
        None => {
            if consistent_set(set, table, agents) {
                let mut sorted = set.clone();
                sorted.sort_unstable();
                out.insert(sorted);
            }
            Ok(())
        }
        Some((m, ii)) => {
            if set.len() >= agents.len() {
                return Ok(()); // no free agent left
            }
            let item = table.instances[m].concurrency[ii].clone();
            let used: Vec<String> =
                set.iter().map(|&s| table.instances[s].action.agent().to_string()).collect();
            for (c, cand) in table.instances.iter().enumerate() {
                if set.contains(&c) || used.iter().any(|u| u == cand.action.agent()) {
                    continue;
                }
                if matches_ground(&cand.action, &item, &BTreeMap::new()) {
                    set.push(c);
                    close_required(set, table, agents, out, cap)?;
                    set.pop();
                }
            }
            Ok(())
        }
    }
}

fn self_clobbering_sets(
    table: &GroundTable,
    agents: &[String],
    cap: usize,
) -> Result<BTreeSet<Vec<usize>>, OracleError> {
    let n = agents.len();
    let mut out = BTreeSet::new();
    let mut stack: Vec<usize> = Vec::new();
    fn rec(
        start: usize,
        stack: &mut Vec<usize>,
        table: &GroundTable,
        agents: &[String],
        n: usize,
        out: &mut BTreeSet<Vec<usize>>,
        cap: usize,
    ) -> Result<(), OracleError> {
        if out.len() > cap {
            return Err(OracleError::ActionBlowup(cap));
        }
        if stack.len() >= 2 {
            let all_clobber = |set: &[usize]| {
                set.iter().all(|&a| {
                    set.iter().any(|&b| a != b && clobbers(&table.instances[a], &table.instances[b]))
                })
            };
            if all_clobber(stack) && consistent_set(stack, table, agents) {
                // Minimal: removing any element destroys the property.
                let minimal = stack.iter().all(|&drop| {
                    let rest: Vec<usize> = stack.iter().copied().filter(|&x| x != drop).collect();
                    rest.len() < 2 || !(all_clobber(&rest) && consistent_set(&rest, table, agents))
                });
                if minimal {
                    out.insert(stack.clone());
                }
            }
        }
        if stack.len() == n {
            return Ok(());
        }
        for c in start..table.instances.len() {
            let agent = table.instances[c].action.agent();
            if stack.iter().any(|&s| table.instances[s].action.agent() == agent) {
                continue;
            }
            stack.push(c);
            rec(c + 1, stack, table, agents, n, out, cap)?;
            stack.pop();
        }
        Ok(())
    }
    rec(0, &mut stack, table, agents, n, &mut out, cap)?;
    Ok(out)
}

fn rename_suffix(t: &Term, k: usize) -> Term {
    if t.is_var() {
        Term { kind: t.kind, name: format!("{}~{k}", t.name), ty: t.ty.clone() }
    } else {
        t.clone()
    }
}

fn rename_lit(l: &Literal, k: usize) -> Literal {
    Literal {
        polarity: l.polarity,
        predicate: l.predicate.clone(),
        args: l.args.iter().map(|t| rename_suffix(t, k)).collect(),
    }
}

fn rename_constraint(c: &VarConstraint, k: usize) -> VarConstraint {
    match c {
        VarConstraint::Eq(a, b) => VarConstraint::Eq(rename_suffix(a, k), rename_suffix(b, k)),
        VarConstraint::Ne(a, b) => VarConstraint::Ne(rename_suffix(a, k), rename_suffix(b, k)),
    }
}

/// Compiles the multiagent domain into an equivalent single-agent domain:
/// one operator per joint action. Within a fixed member set a when
/// clause's concurrency part is statically decided, so surviving clauses
/// keep only their state antecedent.
pub fn esa_compile(prepared: &Prepared, caps: &EsaCaps) -> Result<Domain, OracleError> {
    let table = build_ground_table(prepared, caps.instance_cap)?;
    let agents: Vec<String> = prepared.problem.agents.clone();
    let mut sets: BTreeSet<Vec<usize>> = BTreeSet::new();

    for i in 0..table.instances.len() {
        let mut set = vec![i];
        close_required(&mut set, &table, &agents, &mut sets, caps.action_cap)?;
    }
    for s in self_clobbering_sets(&table, &agents, caps.action_cap)? {
        sets.insert(s);
    }

    let mut schemata = Vec::new();
    let mut group = 1_000_000;
    for set in &sets {
        let members: Vec<&GroundInstance> = set.iter().map(|&i| &table.instances[i]).collect();
        let name = members
            .iter()
            .map(|m| {
                let mut parts = vec![m.action.name.clone()];
                parts.extend(m.action.args.iter().cloned());
                parts.join("-")
            })
            .collect::<Vec<_>>()
            .join("+");
        let mut pre = Vec::new();
        let mut pre_constraints = Vec::new();
        let mut effect = Vec::new();
        let mut whens: Vec<WhenClause> = Vec::new();
        for (k, m) in members.iter().enumerate() {
            for l in &m.pre {
                let r = rename_lit(l, k);
                if !pre.contains(&r) {
                    pre.push(r);
                }
            }
            for c in &m.pre_constraints {
                let r = rename_constraint(c, k);
                if !pre_constraints.contains(&r) {
                    pre_constraints.push(r);
                }
            }
            for l in &m.effect {
                let r = rename_lit(l, k);
                if !effect.contains(&r) {
                    effect.push(r);
                }
            }
            for w in &m.whens {
                let kept = w.concurrency.iter().all(|item| match item.polarity {
                    ItemPolarity::Required => members
                        .iter()
                        .enumerate()
                        .any(|(j, o)| j != k && matches_ground(&o.action, item, &BTreeMap::new())),
                    ItemPolarity::Forbidden => {
                        !members.iter().any(|o| matches_ground(&o.action, item, &BTreeMap::new()))
                    }
                });
                if kept {
                    whens.push(WhenClause {
                        pre: w.pre.iter().map(|l| rename_lit(l, k)).collect(),
                        pre_constraints: w
                            .pre_constraints
                            .iter()
                            .map(|c| rename_constraint(c, k))
                            .collect(),
                        concurrency: Vec::new(),
                        effect: w.effect.iter().map(|l| rename_lit(l, k)).collect(),
                        // Clauses of distinct members may fire together, so
                        // every clause of one joint operator shares a group.
                        group: Some(group),
                    });
                }
            }
        }
        group += 1;
        schemata.push(ActionSchema {
            name,
            params: vec![Term::var("?e")],
            pre,
            pre_constraints,
            concurrency: Vec::new(),
            effect,
            whens,
            foralls: Vec::new(),
        });
    }

    Ok(Domain {
        name: format!("{}-esa", prepared.domain.name),
        schemata,
        predicates: prepared.domain.predicates.clone(),
    })
}

/// The single-agent companion problem for an ESA domain: one executor
/// agent; the original agents stay as ordinary typed objects.
pub fn esa_problem(problem: &Problem) -> Problem {
    let executor = ["Exec", "Executor", "Exec0"]
        .into_iter()
        .find(|c| !problem.objects.contains_key(*c))
        .unwrap_or("Exec")
        .to_string();
    let mut objects = problem.objects.clone();
    objects.insert(executor.clone(), Some("agent".into()));
    Problem {
        name: format!("{}-esa", problem.name),
        objects,
        agents: vec![executor],
        init: problem.init.clone(),
        goal: problem.goal.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ground::prepare;
    use crate::parse::{parse_domain, parse_problem};

    fn swap() -> Prepared {
        let d = parse_domain(
            "(define (domain swap) \
             (define (operator acta) :parameters (?g1) :precondition (p) :effect (q)) \
             (define (operator actb) :parameters (?g1) :precondition (not (q)) :effect (not (p))))",
        )
        .unwrap();
        let p = parse_problem(
            "(define (problem swap) (:objects) (:agents A1 A2) (:init (p)) \
             (:goal (and (not (p)) (q))))",
        )
        .unwrap();
        prepare(&d, &p).unwrap()
    }

    #[test]
    fn swap_is_solved_in_one_joint_action() {
        let prepared = swap();
        let out = oracle_solve(&prepared, &OracleConfig { horizon: Some(1), ..Default::default() })
            .unwrap();
        let OracleOutcome::Found(seq) = out else { panic!("expected a plan, got {out:?}") };
        assert_eq!(seq.len(), 1);
        assert_eq!(seq[0].real_actions().count(), 2);
    }

    #[test]
    fn unreachable_goal_reports_unsolvable_not_horizon() {
        let d = parse_domain(
            "(define (domain d) (define (operator o) :parameters (?g) :precondition (p) :effect (q)))",
        )
        .unwrap();
        let p = parse_problem(
            "(define (problem p) (:objects) (:agents A1) (:init (p)) (:goal (r)))",
        )
        .unwrap();
        let prepared = prepare(&d, &p).unwrap();
        let out = oracle_solve(&prepared, &OracleConfig::default()).unwrap();
        assert_eq!(out, OracleOutcome::Unsolvable);
    }

    #[test]
    fn horizon_zero_on_a_nontrivial_goal() {
        let prepared = swap();
        let out = oracle_solve(&prepared, &OracleConfig { horizon: Some(0), ..Default::default() })
            .unwrap();
        assert_eq!(out, OracleOutcome::HorizonExhausted);
    }

    #[test]
    fn esa_includes_the_self_clobbering_pair() {
        let prepared = swap();
        let esa = esa_compile(&prepared, &EsaCaps::default()).unwrap();
        let names: Vec<&str> = esa.schemata.iter().map(|s| s.name.as_str()).collect();
        assert!(names.iter().any(|n| n.contains("acta") && n.contains("actb")), "{names:?}");
        assert!(names.contains(&"acta-A1"));
        assert!(names.contains(&"actb-A2"));
        let pair = esa.schemata.iter().find(|s| s.name.contains('+')).unwrap();
        assert_eq!(pair.pre.len(), 2);
        assert_eq!(pair.effect.len(), 2);
    }

    #[test]
    fn esa_solvability_matches_native_on_swap() {
        let prepared = swap();
        let esa_domain = esa_compile(&prepared, &EsaCaps::default()).unwrap();
        let esa_prob = esa_problem(&prepared.problem);
        let esa_prepared = prepare(&esa_domain, &esa_prob).unwrap();
        let native = oracle_solve(&prepared, &OracleConfig::default()).unwrap();
        let single = oracle_solve(&esa_prepared, &OracleConfig::default()).unwrap();
        assert!(matches!(native, OracleOutcome::Found(_)));
        assert!(matches!(single, OracleOutcome::Found(_)));
    }

    #[test]
    fn required_concurrency_closure_pairs_distinct_agents() {
        let d = parse_domain(
            "(define (domain d) (define (operator mt) :parameters (?a1 ?r1) \
             :precondition (at ?a1 ?r1) \
             :concurrent (and (mt ?a2 ?r1) (not (= ?a1 ?a2))) \
             :effect (moved ?r1)))",
        )
        .unwrap();
        let p = parse_problem(
            "(define (problem p) (:objects R1 R2 - room) (:agents A1 A2) \
             (:init (at A1 R1) (at A2 R1)) (:goal (moved R1)))",
        )
        .unwrap();
        let prepared = prepare(&d, &p).unwrap();
        let esa = esa_compile(&prepared, &EsaCaps::default()).unwrap();
        for s in &esa.schemata {
            assert!(s.name.contains('+'), "unexpected singleton {}", s.name);
        }
        assert!(esa.schemata.iter().any(|s| s.name == "mt-A1-R1+mt-A2-R1"));
        assert!(!esa.schemata.iter().any(|s| s.name == "mt-A1-R1+mt-A2-R2"));
    }
}
