//! Concurrent nonlinear plans as produced by the planner and exchanged
//! through plan files: steps, point-algebra orderings, causal links,
//! nonconcurrency constraints, and residual binding constraints.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::bindings::BindingStore;
use crate::model::{
    instantiate, ActionInstance, ConcurrencyItem, Domain, Literal, StepId, Term,
    STEP_GOAL, STEP_INIT,
};
use crate::ordering::{self, OrderingStore};
use crate::parse::PlanDoc;

/// `producer --condition--> consumer`: the producer's effect supplies the
/// consumer's precondition and must precede it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CausalLink {
    pub producer: StepId,
    pub condition: Literal,
    pub consumer: StepId,
}

/// "No instance of the pattern may run concurrently with the anchor."
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NcConstraint {
    pub pattern: ConcurrencyItem,
    pub anchor: StepId,
}

/// One real step of a finished plan. `args` are resolved through the
/// plan's bindings: constants where forced, canonical variables otherwise.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanStep {
    pub id: StepId,
    pub name: String,
    pub args: Vec<Term>,
}

impl PlanStep {
    pub fn label(&self) -> String {
        format!("s{}", self.id)
    }
}

/// A finished concurrent nonlinear plan.
#[derive(Debug, Clone)]
pub struct ConcurrentPlan {
    pub steps: Vec<PlanStep>,
    pub orderings: OrderingStore,
    pub links: Vec<CausalLink>,
    pub nonconcurrency: Vec<NcConstraint>,
    pub bindings: BindingStore,
    pub agents: Vec<String>,
    /// Full step bodies, keyed by step id, when the plan was built against
    /// a domain. Validation needs them; pure linearization does not.
    pub instances: BTreeMap<StepId, ActionInstance>,
}

impl ConcurrentPlan {
    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn step(&self, id: StepId) -> Option<&PlanStep> {
        self.steps.iter().find(|s| s.id == id)
    }

    pub fn step_by_label(&self, label: &str) -> Option<&PlanStep> {
        self.steps.iter().find(|s| s.label() == label)
    }

    /// Residual variables among the step arguments, deduplicated.
    pub fn residual_vars(&self) -> Vec<Term> {
        let mut out: Vec<Term> = Vec::new();
        for step in &self.steps {
            for arg in &step.args {
                if arg.is_var() && !out.contains(arg) {
                    out.push(arg.clone());
                }
            }
        }
        out
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlanBuildError {
    #[error("plan declares no agents")]
    NoAgents,
    #[error("step '{0}' names unknown schema '{1}'")]
    UnknownSchema(String, String),
    #[error("step '{0}': schema '{1}' takes {2} args, found {3}")]
    ArityMismatch(String, String, usize, usize),
    #[error("step '{0}' has arguments incompatible with its schema")]
    BadArguments(String),
    #[error("ordering constraints are inconsistent")]
    InconsistentOrderings,
    #[error("binding constraints are inconsistent")]
    InconsistentBindings,
    #[error("link names unknown step '{0}'")]
    UnknownLinkStep(String),
    #[error("nonconcurrency anchor '{0}' is unknown")]
    UnknownAnchor(String),
}

/// Builds a plan from a parsed plan file. With a domain, each step is
/// instantiated from its schema and its file arguments are unified into
/// the plan bindings, so validation sees full bodies.
pub fn plan_from_doc(doc: &PlanDoc, domain: Option<&Domain>) -> Result<ConcurrentPlan, PlanBuildError> {
    if doc.agents.is_empty() {
        return Err(PlanBuildError::NoAgents);
    }
    let mut orderings = OrderingStore::new();
    let mut bindings = BindingStore::new();
    let mut labels: BTreeMap<String, StepId> = BTreeMap::new();
    let mut steps = Vec::new();
    let mut instances = BTreeMap::new();

    for (label, schema_name, args) in &doc.steps {
        let id = orderings.register_step();
        labels.insert(label.clone(), id);
        if let Some(domain) = domain {
            let schema = domain
                .schema(schema_name)
                .ok_or_else(|| PlanBuildError::UnknownSchema(label.clone(), schema_name.clone()))?;
            if schema.params.len() != args.len() {
                return Err(PlanBuildError::ArityMismatch(
                    label.clone(),
                    schema_name.clone(),
                    schema.params.len(),
                    args.len(),
                ));
            }
            let instance = instantiate(schema, id);
            for (param, arg) in instance.args.iter().zip(args) {
                bindings
                    .unify_terms(param, arg)
                    .map_err(|_| PlanBuildError::BadArguments(label.clone()))?;
            }
            instances.insert(id, instance);
        }
        steps.push(PlanStep { id, name: schema_name.clone(), args: args.clone() });
    }

    for c in &doc.bindings {
        bindings.apply_constraint(c).map_err(|_| PlanBuildError::InconsistentBindings)?;
    }

    for (a, b, rel) in &doc.orderings {
        let (&ia, &ib) = (labels.get(a).unwrap(), labels.get(b).unwrap());
        orderings.add_ordering(ia, ib, *rel).map_err(|_| PlanBuildError::InconsistentOrderings)?;
    }

    let step_id = |label: &str| -> Result<StepId, PlanBuildError> {
        match label {
            "init" => Ok(STEP_INIT),
            "goal" => Ok(STEP_GOAL),
            _ => labels.get(label).copied().ok_or_else(|| PlanBuildError::UnknownLinkStep(label.into())),
        }
    };
    let mut links = Vec::new();
    for (p, condition, c) in &doc.links {
        links.push(CausalLink { producer: step_id(p)?, condition: condition.clone(), consumer: step_id(c)? });
    }
    let mut nonconcurrency = Vec::new();
    for (anchor, item) in &doc.nonconcurrency {
        let anchor = labels
            .get(anchor)
            .copied()
            .ok_or_else(|| PlanBuildError::UnknownAnchor(anchor.clone()))?;
        nonconcurrency.push(NcConstraint { pattern: item.clone(), anchor });
    }

    // Resolve arguments now that file-level bindings are in.
    for step in &mut steps {
        for arg in &mut step.args {
            *arg = bindings.resolve(arg);
        }
    }

    Ok(ConcurrentPlan {
        steps,
        orderings,
        links,
        nonconcurrency,
        bindings,
        agents: doc.agents.clone(),
        instances,
    })
}

/// The printable ordering entries of a plan: non-trivial relations between
/// real steps, each pair once, in a canonical spelling.
pub fn printable_orderings(plan: &ConcurrentPlan) -> Vec<(String, String, &'static str)> {
    let mut out = Vec::new();
    let ids: Vec<StepId> = plan.steps.iter().map(|s| s.id).collect();
    for (i, &a) in ids.iter().enumerate() {
        for &b in &ids[i + 1..] {
            let r = plan.orderings.rel(a, b);
            let (x, y, r) = if r == ordering::GT || r == ordering::GE {
                (b, a, ordering::converse(r))
            } else {
                (a, b, r)
            };
            if r == ordering::ANY {
                continue;
            }
            let name = ordering::rel_name(r);
            if name == "?" {
                continue;
            }
            out.push((format!("s{x}"), format!("s{y}"), name));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_plan;

    #[test]
    fn plan_doc_round_trips_into_a_consistent_plan() {
        let doc = parse_plan(
            "(plan (:agents A1 A2 A3) \
              (:steps (a (acta A1)) (b (actb A2)) (c (actc A2)) (d (actd A3)) (e (acte A1)) (f (actf A2))) \
              (:orderings (= e b) (!= c d) (< a e) (< d f)))",
        )
        .unwrap();
        let plan = plan_from_doc(&doc, None).unwrap();
        assert_eq!(plan.steps.len(), 6);
        assert!(plan.orderings.consistent());
        let e = plan.step_by_label("s6").unwrap().id;
        let b = plan.step_by_label("s3").unwrap().id;
        assert_eq!(plan.orderings.rel(e, b), ordering::EQ);
    }

    #[test]
    fn inconsistent_plan_files_are_rejected() {
        let doc = parse_plan(
            "(plan (:agents A1) (:steps (a (acta A1)) (b (actb A1))) \
             (:orderings (< a b) (< b a)))",
        )
        .unwrap();
        let err = plan_from_doc(&doc, None).err();
        assert_eq!(err, Some(PlanBuildError::InconsistentOrderings));
    }
}
