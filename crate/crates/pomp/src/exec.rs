//! Executable joint-action semantics: active when clauses, joint
//! consistency (both the whenless and the state-relative definitions),
//! joint application, and plan validation over n-linearizations.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::ground::Prepared;
use crate::linearize::{self, Linearization};
use crate::model::{
    ActionSchema, ConcurrencyItem, GroundAction, ItemPolarity, JointAction, Literal, Polarity,
    State, Term, VarConstraint, WhenClause,
};
use crate::plan::ConcurrentPlan;

/// A schema instance with its parameters substituted by constants. Body
/// literals may still contain variables: those are existentials resolved
/// against the state at execution time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundInstance {
    pub action: GroundAction,
    pub pre: Vec<Literal>,
    pub pre_constraints: Vec<VarConstraint>,
    pub concurrency: Vec<ConcurrencyItem>,
    pub effect: Vec<Literal>,
    pub whens: Vec<WhenClause>,
}

pub fn instance_from_schema(schema: &ActionSchema, args: &[String]) -> GroundInstance {
    let map: BTreeMap<String, Term> = schema
        .params
        .iter()
        .zip(args)
        .map(|(p, a)| (p.name.clone(), Term::typed_const(a.clone(), p.ty.clone())))
        .collect();
    let sub = |t: &Term| map.get(&t.name).cloned().unwrap_or_else(|| t.clone());
    let sub_lit = |l: &Literal| Literal {
        polarity: l.polarity,
        predicate: l.predicate.clone(),
        args: l.args.iter().map(sub).collect(),
    };
    let sub_cons = |cs: &[VarConstraint]| {
        cs.iter()
            .map(|c| match c {
                VarConstraint::Eq(a, b) => VarConstraint::Eq(sub(a), sub(b)),
                VarConstraint::Ne(a, b) => VarConstraint::Ne(sub(a), sub(b)),
            })
            .collect::<Vec<_>>()
    };
    let sub_items = |items: &[ConcurrencyItem]| {
        items
            .iter()
            .map(|item| ConcurrencyItem {
                polarity: item.polarity,
                pattern: crate::model::SchemaPattern {
                    schema: item.pattern.schema.clone(),
                    args: item.pattern.args.iter().map(sub).collect(),
                },
                constraints: sub_cons(&item.constraints),
            })
            .collect::<Vec<_>>()
    };
    GroundInstance {
        action: GroundAction { name: schema.name.clone(), args: args.to_vec() },
        pre: schema.pre.iter().map(sub_lit).collect(),
        pre_constraints: sub_cons(&schema.pre_constraints),
        concurrency: sub_items(&schema.concurrency),
        effect: schema.effect.iter().map(sub_lit).collect(),
        whens: schema
            .whens
            .iter()
            .map(|w| WhenClause {
                pre: w.pre.iter().map(sub_lit).collect(),
                pre_constraints: sub_cons(&w.pre_constraints),
                concurrency: sub_items(&w.concurrency),
                effect: w.effect.iter().map(sub_lit).collect(),
                group: w.group,
            })
            .collect(),
    }
}

/// Why a joint action cannot run.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExecFailure {
    #[error("inconsistent joint action: {0}")]
    Inconsistent(String),
    #[error("inapplicable joint action: {0}")]
    Inapplicable(String),
    #[error("domain specification error: {0}")]
    DomainSpec(String),
}

type Witness = BTreeMap<String, String>;

fn subst_witness(l: &Literal, w: &Witness) -> Literal {
    Literal {
        polarity: l.polarity,
        predicate: l.predicate.clone(),
        args: l
            .args
            .iter()
            .map(|t| match w.get(&t.name) {
                Some(v) if t.is_var() => Term::constant(v.clone()),
                _ => t.clone(),
            })
            .collect(),
    }
}

fn eval_constraint(c: &VarConstraint, w: &Witness) -> Option<bool> {
    let value = |t: &Term| -> Option<String> {
        if t.is_const() {
            Some(t.name.clone())
        } else {
            w.get(&t.name).cloned()
        }
    };
    let (a, b) = c.terms();
    let (va, vb) = (value(a)?, value(b)?);
    Some(match c {
        VarConstraint::Eq(_, _) => va == vb,
        VarConstraint::Ne(_, _) => va != vb,
    })
}

/// All assignments of the free variables that make every literal hold in
/// `state` (closed world). A negative literal with unbound variables holds
/// iff no state atom matches its pattern.
fn satisfy_all(
    state: &State,
    lits: &[Literal],
    constraints: &[VarConstraint],
    seed: Witness,
) -> Vec<Witness> {
    let positives: Vec<&Literal> = lits.iter().filter(|l| l.polarity == Polarity::Pos).collect();
    let negatives: Vec<&Literal> = lits.iter().filter(|l| l.polarity == Polarity::Neg).collect();
    let mut out = Vec::new();
    fn go(
        state: &State,
        positives: &[&Literal],
        negatives: &[&Literal],
        constraints: &[VarConstraint],
        binding: &mut Witness,
        out: &mut Vec<Witness>,
    ) {
        if constraints.iter().any(|c| eval_constraint(c, binding) == Some(false)) {
            return;
        }
        match positives.split_first() {
            None => {
                for neg in negatives {
                    let pat = subst_witness(neg, binding);
                    let blocked = state.atoms().any(|atom| {
                        atom.predicate == pat.predicate
                            && atom.args.len() == pat.args.len()
                            && pat
                                .args
                                .iter()
                                .zip(&atom.args)
                                .all(|(t, a)| t.is_var() || &t.name == a)
                    });
                    if blocked {
                        return;
                    }
                }
                out.push(binding.clone());
            }
            Some((first, rest)) => {
                let pat = subst_witness(first, binding);
                for atom in state.atoms() {
                    if atom.predicate != pat.predicate || atom.args.len() != pat.args.len() {
                        continue;
                    }
                    let mut extended = binding.clone();
                    let mut ok = true;
                    for (t, a) in pat.args.iter().zip(&atom.args) {
                        if t.is_const() {
                            if &t.name != a {
                                ok = false;
                                break;
                            }
                        } else {
                            match extended.get(&t.name) {
                                Some(v) if v != a => {
                                    ok = false;
                                    break;
                                }
                                Some(_) => {}
                                None => {
                                    extended.insert(t.name.clone(), a.clone());
                                }
                            }
                        }
                    }
                    if ok {
                        go(state, rest, negatives, constraints, &mut extended, out);
                    }
                }
            }
        }
    }
    let mut seed = seed;
    go(state, &positives, &negatives, constraints, &mut seed, &mut out);
    out.sort();
    out.dedup();
    out
}

fn preconditions_hold(state: &State, inst: &GroundInstance) -> bool {
    !satisfy_all(state, &inst.pre, &inst.pre_constraints, Witness::new()).is_empty()
}

/// Does `candidate` match the pattern under its side constraints? Pattern
/// variables bind existentially; a constraint with an unbound side does
/// not veto the match.
pub fn matches_ground(candidate: &GroundAction, item: &ConcurrencyItem, outer: &Witness) -> bool {
    if candidate.name != item.pattern.schema || candidate.args.len() != item.pattern.args.len() {
        return false;
    }
    let mut binding = outer.clone();
    for (t, a) in item.pattern.args.iter().zip(&candidate.args) {
        if t.is_const() {
            if &t.name != a {
                return false;
            }
        } else {
            match binding.get(&t.name) {
                Some(v) if v != a => return false,
                Some(_) => {}
                None => {
                    binding.insert(t.name.clone(), a.clone());
                }
            }
        }
    }
    item.constraints.iter().all(|c| eval_constraint(c, &binding) != Some(false))
}

/// Is the element's concurrent action list satisfied with respect to the
/// joint action? Required entries need some *other* element; forbidden
/// entries quantify over every element, self included.
fn concurrency_satisfied(
    idx: usize,
    items: &[ConcurrencyItem],
    elements: &[Option<&GroundInstance>],
    outer: &Witness,
) -> Result<(), String> {
    for item in items {
        match item.polarity {
            ItemPolarity::Required => {
                let found = elements.iter().enumerate().any(|(j, e)| {
                    j != idx
                        && e.map(|e| matches_ground(&e.action, item, outer)).unwrap_or(false)
                });
                if !found {
                    return Err(format!(
                        "required concurrent action ({} ...) has no partner",
                        item.pattern.schema
                    ));
                }
            }
            ItemPolarity::Forbidden => {
                for e in elements.iter().flatten() {
                    if matches_ground(&e.action, item, outer) {
                        return Err(format!(
                            "forbidden concurrent action matched by {}",
                            e.action
                        ));
                    }
                }
            }
        }
    }
    Ok(())
}

/// Per-element result of when-clause selection: the ground effects of the
/// active clause(s) and their precondition instances.
#[derive(Debug, Clone, Default)]
pub struct ActiveWhens {
    pub effects: Vec<Literal>,
    pub pres: Vec<Literal>,
}

/// Selects the active when clause of one element relative to the state and
/// the joint action. Clauses expanded from one forall block share a group
/// and may be active together; two active clauses from distinct groups
/// violate the disjointness requirement and raise a specification error.
pub fn active_whens(
    idx: usize,
    inst: &GroundInstance,
    elements: &[Option<&GroundInstance>],
    state: &State,
) -> Result<ActiveWhens, ExecFailure> {
    let mut active = ActiveWhens::default();
    let mut active_groups: BTreeSet<(bool, usize)> = BTreeSet::new();
    for (ci, clause) in inst.whens.iter().enumerate() {
        let witnesses = satisfy_all(state, &clause.pre, &clause.pre_constraints, Witness::new());
        let mut clause_active = false;
        for w in witnesses {
            let items: Vec<ConcurrencyItem> = clause
                .concurrency
                .iter()
                .map(|item| ConcurrencyItem {
                    polarity: item.polarity,
                    pattern: crate::model::SchemaPattern {
                        schema: item.pattern.schema.clone(),
                        args: item
                            .pattern
                            .args
                            .iter()
                            .map(|t| match w.get(&t.name) {
                                Some(v) if t.is_var() => Term::constant(v.clone()),
                                _ => t.clone(),
                            })
                            .collect(),
                    },
                    constraints: item.constraints.clone(),
                })
                .collect();
            if concurrency_satisfied(idx, &items, elements, &w).is_err() {
                continue;
            }
            clause_active = true;
            for e in &clause.effect {
                let ground = subst_witness(e, &w);
                if !active.effects.contains(&ground) {
                    active.effects.push(ground);
                }
            }
            for p in &clause.pre {
                let ground = subst_witness(p, &w);
                if !active.pres.contains(&ground) {
                    active.pres.push(ground);
                }
            }
        }
        if clause_active {
            active_groups.insert(match clause.group {
                Some(g) => (false, g),
                None => (true, ci),
            });
        }
    }
    if active_groups.len() > 1 {
        return Err(ExecFailure::DomainSpec(format!(
            "{}: multiple when clauses active (preconditions not disjoint)",
            inst.action
        )));
    }
    Ok(active)
}

fn mutual_consistency(lists: &[Vec<Literal>], what: &str) -> Result<(), ExecFailure> {
    let mut pos: BTreeSet<(String, Vec<String>)> = BTreeSet::new();
    let mut neg: BTreeSet<(String, Vec<String>)> = BTreeSet::new();
    for lits in lists {
        for l in lits {
            if !l.is_ground() {
                continue;
            }
            let key = (l.predicate.clone(), l.args.iter().map(|t| t.name.clone()).collect());
            match l.polarity {
                Polarity::Pos => pos.insert(key),
                Polarity::Neg => neg.insert(key),
            };
        }
    }
    if let Some(conflict) = pos.intersection(&neg).next() {
        return Err(ExecFailure::Inconsistent(format!(
            "{what} assert both ({} {}) and its negation",
            conflict.0,
            conflict.1.join(" ")
        )));
    }
    Ok(())
}

/// Joint consistency ignoring when clauses entirely (the paper's whenless
/// definition; state-independent).
pub fn joint_consistent_whenless(elements: &[Option<&GroundInstance>]) -> Result<(), ExecFailure> {
    let pres: Vec<Vec<Literal>> = elements.iter().flatten().map(|e| e.pre.clone()).collect();
    mutual_consistency(&pres, "preconditions")?;
    let effs: Vec<Vec<Literal>> = elements.iter().flatten().map(|e| e.effect.clone()).collect();
    mutual_consistency(&effs, "effects")?;
    for (i, e) in elements.iter().enumerate() {
        if let Some(e) = e {
            concurrency_satisfied(i, &e.concurrency, elements, &Witness::new())
                .map_err(ExecFailure::Inconsistent)?;
        }
    }
    Ok(())
}

/// Joint consistency relative to a state: preconditions plus active
/// when-preconditions are mutually consistent, likewise the effects, and
/// every concurrent action list is satisfied.
pub fn joint_consistent_at(
    elements: &[Option<&GroundInstance>],
    state: &State,
) -> Result<(), ExecFailure> {
    let mut pres = Vec::new();
    let mut effs = Vec::new();
    for (i, e) in elements.iter().enumerate() {
        let Some(e) = e else { continue };
        let active = active_whens(i, e, elements, state)?;
        let mut p = e.pre.clone();
        p.extend(active.pres);
        pres.push(p);
        let mut eff = e.effect.clone();
        eff.extend(active.effects);
        effs.push(eff);
        concurrency_satisfied(i, &e.concurrency, elements, &Witness::new())
            .map_err(ExecFailure::Inconsistent)?;
    }
    mutual_consistency(&pres, "preconditions")?;
    mutual_consistency(&effs, "effects")?;
    Ok(())
}

/// Executes a consistent, applicable joint action: the union of all effect
/// lists and active when-effects, deletions first, then additions.
pub fn apply_joint(
    elements: &[Option<&GroundInstance>],
    state: &State,
) -> Result<State, ExecFailure> {
    joint_consistent_at(elements, state)?;
    for e in elements.iter().flatten() {
        if !preconditions_hold(state, e) {
            return Err(ExecFailure::Inapplicable(format!(
                "{}: precondition does not hold",
                e.action
            )));
        }
    }
    let mut adds = Vec::new();
    let mut dels = Vec::new();
    for (i, e) in elements.iter().enumerate() {
        let Some(e) = e else { continue };
        let active = active_whens(i, e, elements, state)?;
        for l in e.effect.iter().chain(&active.effects) {
            match l.to_atom() {
                Some(atom) => match l.polarity {
                    Polarity::Pos => adds.push(atom),
                    Polarity::Neg => dels.push(atom),
                },
                None => {
                    return Err(ExecFailure::DomainSpec(format!(
                        "{}: effect {} is not ground",
                        e.action, l
                    )))
                }
            }
        }
    }
    let mut next = state.clone();
    for d in dels {
        next.remove(&d);
    }
    for a in adds {
        next.insert(a);
    }
    Ok(next)
}

/// Builds the joint-action tuple for printing/keying from resolved slots.
pub fn joint_of(elements: &[Option<&GroundInstance>]) -> JointAction {
    JointAction { elements: elements.iter().map(|e| e.map(|e| e.action.clone())).collect() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValidationMode {
    /// Check every dense n-linearization up to the bound (default: the
    /// number of real steps). All-noop ticks change nothing and are not
    /// enumerated.
    Exhaustive { bound: Option<usize> },
    Sampled { k: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Counterexample {
    pub grounding: BTreeMap<String, String>,
    pub ticks: Vec<JointAction>,
    /// 1-based tick of the failure; None when the goal was missed at the end.
    pub failed_tick: Option<usize>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Pass { groundings: usize, linearizations: usize },
    Fail(Box<Counterexample>),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ValidateError {
    #[error("plan has residual variables with no consistent grounding")]
    Ungroundable,
    #[error("plan was loaded without a domain; step bodies are unknown")]
    NeedsDomain,
    #[error("step {0} names agent '{1}' outside the agent roster")]
    UnknownAgent(String, String),
    #[error("plan orderings admit no linearization")]
    NoLinearization,
}

struct GroundedSteps {
    grounding: BTreeMap<String, String>,
    steps: Vec<(crate::model::StepId, GroundInstance)>,
}

fn ground_plan_steps(
    plan: &ConcurrentPlan,
    grounding: &BTreeMap<String, String>,
) -> Result<GroundedSteps, ValidateError> {
    let resolve = |t: &Term| -> Term {
        let r = plan.bindings.resolve(t);
        if r.is_var() {
            match grounding.get(&r.name) {
                Some(v) => Term::constant(v.clone()),
                None => r,
            }
        } else {
            r
        }
    };
    let mut steps = Vec::new();
    for step in &plan.steps {
        let inst = plan.instances.get(&step.id).ok_or(ValidateError::NeedsDomain)?;
        let sub_lit = |l: &Literal| Literal {
            polarity: l.polarity,
            predicate: l.predicate.clone(),
            args: l.args.iter().map(resolve).collect(),
        };
        let sub_cons = |cs: &[VarConstraint]| {
            cs.iter()
                .map(|c| match c {
                    VarConstraint::Eq(a, b) => VarConstraint::Eq(resolve(a), resolve(b)),
                    VarConstraint::Ne(a, b) => VarConstraint::Ne(resolve(a), resolve(b)),
                })
                .collect::<Vec<_>>()
        };
        let sub_items = |items: &[ConcurrencyItem]| {
            items
                .iter()
                .map(|item| ConcurrencyItem {
                    polarity: item.polarity,
                    pattern: crate::model::SchemaPattern {
                        schema: item.pattern.schema.clone(),
                        args: item.pattern.args.iter().map(resolve).collect(),
                    },
                    constraints: sub_cons(&item.constraints),
                })
                .collect::<Vec<_>>()
        };
        let args: Vec<Term> = inst.args.iter().map(resolve).collect();
        let agent = args
            .first()
            .ok_or_else(|| ValidateError::UnknownAgent(step.label(), "<none>".into()))?;
        if agent.is_var() || !plan.agents.iter().any(|a| *a == agent.name) {
            return Err(ValidateError::UnknownAgent(step.label(), agent.name.clone()));
        }
        let ground = GroundInstance {
            action: GroundAction {
                name: inst.name.clone(),
                args: args.iter().map(|t| t.name.clone()).collect(),
            },
            pre: inst.pre.iter().map(sub_lit).collect(),
            pre_constraints: sub_cons(&inst.pre_constraints),
            concurrency: sub_items(&inst.concurrency),
            effect: inst.effect.iter().map(sub_lit).collect(),
            whens: inst
                .whens
                .iter()
                .map(|w| WhenClause {
                    pre: w.pre.iter().map(sub_lit).collect(),
                    pre_constraints: sub_cons(&w.pre_constraints),
                    concurrency: sub_items(&w.concurrency),
                    effect: w.effect.iter().map(sub_lit).collect(),
                    group: w.group,
                })
                .collect(),
        };
        steps.push((step.id, ground));
    }
    Ok(GroundedSteps { grounding: grounding.clone(), steps })
}

/// Runs one linearization from the initial state; Ok(n) counts executed
/// ticks, Err carries the 1-based failing tick or the goal miss.
fn run_linearization(
    lin: &Linearization,
    steps: &[(crate::model::StepId, GroundInstance)],
    prepared: &Prepared,
) -> Result<usize, (Option<usize>, String)> {
    let by_action: BTreeMap<&GroundAction, &GroundInstance> =
        steps.iter().map(|(_, g)| (&g.action, g)).collect();
    let mut state = prepared.problem.init.clone();
    for (i, joint) in lin.ticks.iter().enumerate() {
        let elements: Vec<Option<&GroundInstance>> = joint
            .elements
            .iter()
            .map(|e| e.as_ref().and_then(|a| by_action.get(a).copied()))
            .collect();
        match apply_joint(&elements, &state) {
            Ok(next) => state = next,
            Err(e) => return Err((Some(i + 1), e.to_string())),
        }
    }
    for g in &prepared.problem.goal {
        if !state.satisfies(g) {
            return Err((None, format!("goal literal {g} does not hold in the final state")));
        }
    }
    Ok(lin.ticks.len())
}

/// Validates a plan against the problem: PASS iff every examined
/// n-linearization of every consistent grounding of the residual
/// variables executes from init to a goal state.
pub fn validate(
    plan: &ConcurrentPlan,
    prepared: &Prepared,
    mode: ValidationMode,
) -> Result<Verdict, ValidateError> {
    let residual = plan.residual_vars();
    let groundings: Vec<BTreeMap<String, String>> = if residual.is_empty() {
        vec![BTreeMap::new()]
    } else {
        plan.bindings.enumerate_assignments(&prepared.universe, &residual)
    };
    if groundings.is_empty() {
        return Err(ValidateError::Ungroundable);
    }

    let grounded: Vec<GroundedSteps> = groundings
        .iter()
        .map(|g| ground_plan_steps(plan, g))
        .collect::<Result<_, _>>()?;

    let run_one = |gs: &GroundedSteps| -> Result<usize, Box<Counterexample>> {
        let actions: Vec<(crate::model::StepId, GroundAction)> =
            gs.steps.iter().map(|(id, g)| (*id, g.action.clone())).collect();
        let mut count = 0usize;
        let mut failure: Option<Box<Counterexample>> = None;
        let bound = match mode {
            ValidationMode::Exhaustive { bound } => bound.unwrap_or(gs.steps.len()),
            ValidationMode::Sampled { .. } => gs.steps.len(),
        };
        let mut consider = |lin: &Linearization| -> bool {
            count += 1;
            if let Err((tick, reason)) = run_linearization(lin, &gs.steps, prepared) {
                failure = Some(Box::new(Counterexample {
                    grounding: gs.grounding.clone(),
                    ticks: lin.ticks.clone(),
                    failed_tick: tick,
                    reason,
                }));
                return false;
            }
            true
        };
        match mode {
            ValidationMode::Exhaustive { .. } => {
                linearize::enumerate_linearizations(
                    &actions,
                    &plan.orderings,
                    &plan.agents,
                    bound,
                    true,
                    &mut consider,
                );
            }
            ValidationMode::Sampled { k, seed } => {
                for lin in linearize::sample_linearizations(&actions, &plan.orderings, &plan.agents, bound, k, seed) {
                    if !consider(&lin) {
                        break;
                    }
                }
            }
        }
        match failure {
            Some(f) => Err(f),
            None => {
                if count == 0 {
                    Err(Box::new(Counterexample {
                        grounding: gs.grounding.clone(),
                        ticks: Vec::new(),
                        failed_tick: None,
                        reason: "orderings admit no linearization".into(),
                    }))
                } else {
                    Ok(count)
                }
            }
        }
    };

    let results: Vec<Result<usize, Box<Counterexample>>> =
        crate::par::map_slice(&grounded, |gs| run_one(gs));
    let mut total = 0usize;
    for r in results {
        match r {
            Ok(n) => total += n,
            Err(ce) => return Ok(Verdict::Fail(ce)),
        }
    }
    Ok(Verdict::Pass { groundings: grounded.len(), linearizations: total })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_domain;

    fn inst(domain: &crate::model::Domain, name: &str, args: &[&str]) -> GroundInstance {
        let schema = domain.schema(name).unwrap();
        instance_from_schema(schema, &args.iter().map(|s| s.to_string()).collect::<Vec<_>>())
    }

    fn swap_domain() -> crate::model::Domain {
        parse_domain(
            "(define (domain swap) \
             (define (operator acta) :parameters (?g1) :precondition (p) :effect (q)) \
             (define (operator actb) :parameters (?g1) :precondition (not (q)) :effect (not (p))))",
        )
        .unwrap()
    }

    #[test]
    fn swap_pair_executes_to_the_goal_state() {
        let d = swap_domain();
        let a = inst(&d, "acta", &["A1"]);
        let b = inst(&d, "actb", &["A2"]);
        let s = State::new([crate::model::Atom::new("p", vec![])]);
        let next = apply_joint(&[Some(&a), Some(&b)], &s).unwrap();
        assert!(next.contains(&crate::model::Atom::new("q", vec![])));
        assert!(!next.contains(&crate::model::Atom::new("p", vec![])));
    }

    #[test]
    fn serialized_swap_fails_on_the_second_action() {
        let d = swap_domain();
        let a = inst(&d, "acta", &["A1"]);
        let b = inst(&d, "actb", &["A2"]);
        let s = State::new([crate::model::Atom::new("p", vec![])]);
        let after_a = apply_joint(&[Some(&a), None], &s).unwrap();
        let err = apply_joint(&[None, Some(&b)], &after_a).unwrap_err();
        assert!(matches!(err, ExecFailure::Inapplicable(_)));
    }

    #[test]
    fn conflicting_effects_are_inconsistent_not_inapplicable() {
        let d = parse_domain(
            "(define (domain d) \
             (define (operator mk) :parameters (?g) :effect (r)) \
             (define (operator rm) :parameters (?g) :effect (not (r))))",
        )
        .unwrap();
        let a = inst(&d, "mk", &["A1"]);
        let b = inst(&d, "rm", &["A2"]);
        let err = apply_joint(&[Some(&a), Some(&b)], &State::default()).unwrap_err();
        assert!(matches!(err, ExecFailure::Inconsistent(_)));
    }

    #[test]
    fn forbidden_item_rejects_the_matching_pair() {
        let d = parse_domain(
            "(define (domain d) (define (operator pickup) :parameters (?a1 ?x) \
             :precondition (onfloor ?x) \
             :concurrent (not (and (pickup ?a2 ?x) (not (= ?a1 ?a2)))) \
             :effect (holding ?a1 ?x)))",
        )
        .unwrap();
        let a = inst(&d, "pickup", &["A1", "B"]);
        let b = inst(&d, "pickup", &["A2", "B"]);
        let err = joint_consistent_whenless(&[Some(&a), Some(&b)]).unwrap_err();
        assert!(matches!(err, ExecFailure::Inconsistent(_)));
        // Same agent pattern is exempted by the side constraint.
        assert!(joint_consistent_whenless(&[Some(&a), None]).is_ok());
    }

    #[test]
    fn required_item_needs_a_distinct_partner() {
        let d = parse_domain(
            "(define (domain d) (define (operator movetable) :parameters (?a1 ?r1) \
             :concurrent (and (movetable ?a2 ?r1) (not (= ?a1 ?a2))) \
             :effect (moved ?r1)))",
        )
        .unwrap();
        let a = inst(&d, "movetable", &["A1", "Room2"]);
        let b = inst(&d, "movetable", &["A2", "Room2"]);
        assert!(joint_consistent_whenless(&[Some(&a), None]).is_err());
        assert!(joint_consistent_whenless(&[Some(&a), Some(&b)]).is_ok());
        // A partner moving to a different room does not satisfy the item.
        let c = inst(&d, "movetable", &["A2", "Room1"]);
        assert!(joint_consistent_whenless(&[Some(&a), Some(&c)]).is_err());
    }

    #[test]
    fn singleton_with_empty_concurrency_list_is_consistent() {
        let d = swap_domain();
        let a = inst(&d, "acta", &["A1"]);
        assert!(joint_consistent_whenless(&[Some(&a), None]).is_ok());
    }

    #[test]
    fn noop_joint_leaves_the_state_unchanged() {
        let s = State::new([crate::model::Atom::new("p", vec![])]);
        let next = apply_joint(&[None, None], &s).unwrap();
        assert_eq!(s, next);
    }
}
