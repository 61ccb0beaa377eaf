//! Preprocessing that turns a parsed domain/problem pair into the form the
//! planner and executor work on:
//!
//! * constant and variable types are inferred from the object declarations
//!   and predicate usage (the first parameter of every schema is the agent
//!   variable by convention);
//! * `forall` blocks are expanded over the finite typed object universe,
//!   one clause or effect copy per matching object;
//! * negative preconditions whose variable occurs nowhere else are read as
//!   universally quantified under the closed world and expanded likewise.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::bindings::Universe;
use crate::model::{
    ActionSchema, ConcurrencyItem, Domain, ForallBlock, ForallBody, Literal, Polarity, Problem,
    Term, TermKind, VarConstraint, WhenClause,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PrepareError {
    #[error("operator '{schema}': cannot type forall variable '{var}' (no typed usage)")]
    UntypedForallVar { schema: String, var: String },
    #[error("problem declares no agents")]
    NoAgents,
}

/// Three-point lattice for inferred types.
#[derive(Debug, Clone, PartialEq, Eq)]
enum Ty {
    Unknown,
    Exact(String),
    Any,
}

impl Ty {
    fn join(&mut self, other: &Ty) {
        *self = match (&*self, other) {
            (Ty::Unknown, t) => t.clone(),
            (t, Ty::Unknown) => t.clone(),
            (Ty::Exact(a), Ty::Exact(b)) if a == b => Ty::Exact(a.clone()),
            (Ty::Any, _) | (_, Ty::Any) | (Ty::Exact(_), Ty::Exact(_)) => Ty::Any,
        };
    }

    fn exact(&self) -> Option<&str> {
        match self {
            Ty::Exact(t) => Some(t),
            _ => None,
        }
    }
}

/// A prepared domain/problem pair plus the typed constant universe.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub domain: Domain,
    pub problem: Problem,
    pub universe: Universe,
}

struct Inference {
    /// predicate -> per-position type.
    sig: BTreeMap<String, Vec<Ty>>,
    /// schema -> per-parameter-position type.
    param_sig: BTreeMap<String, Vec<Ty>>,
    /// (schema, var) -> type.
    vars: BTreeMap<(String, String), Ty>,
    consts: BTreeMap<String, Option<String>>,
}

impl Inference {
    fn term_ty(&self, schema: &str, t: &Term) -> Ty {
        match t.kind {
            TermKind::Const => match self.consts.get(&t.name) {
                Some(Some(ty)) => Ty::Exact(ty.clone()),
                _ => Ty::Unknown,
            },
            TermKind::Var => self
                .vars
                .get(&(schema.to_string(), t.name.clone()))
                .cloned()
                .unwrap_or(Ty::Unknown),
        }
    }

    fn feed_literal(&mut self, schema: &str, lit: &Literal) {
        let arity = lit.args.len();
        let known = self
            .sig
            .entry(lit.predicate.clone())
            .or_insert_with(|| vec![Ty::Unknown; arity])
            .len();
        if known != arity {
            return;
        }
        for (i, t) in lit.args.iter().enumerate() {
            let ty = self.term_ty(schema, t);
            let slot = &mut self.sig.get_mut(&lit.predicate).unwrap()[i];
            slot.join(&ty);
        }
    }

    fn feed_pattern(&mut self, schema: &str, item: &ConcurrencyItem) {
        let arity = item.pattern.args.len();
        let known = self
            .param_sig
            .entry(item.pattern.schema.clone())
            .or_insert_with(|| vec![Ty::Unknown; arity])
            .len();
        if known != arity {
            return;
        }
        for (i, t) in item.pattern.args.iter().enumerate() {
            let ty = self.term_ty(schema, t);
            let slot = &mut self.param_sig.get_mut(&item.pattern.schema).unwrap()[i];
            slot.join(&ty);
        }
    }

    /// Recomputes a variable's type as the agreement of every position it
    /// occupies; conflicting exact types degrade to Any.
    fn pull_var(&self, schema: &ActionSchema, var: &str) -> Ty {
        let mut votes: Vec<Ty> = Vec::new();
        let from_lit = |lit: &Literal, votes: &mut Vec<Ty>| {
            for (i, t) in lit.args.iter().enumerate() {
                if t.is_var() && t.name == var {
                    if let Some(slot) = self.sig.get(&lit.predicate) {
                        if i < slot.len() {
                            votes.push(slot[i].clone());
                        }
                    }
                }
            }
        };
        for l in schema.pre.iter().chain(&schema.effect) {
            from_lit(l, &mut votes);
        }
        for w in &schema.whens {
            for l in w.pre.iter().chain(&w.effect) {
                from_lit(l, &mut votes);
            }
        }
        for fb in &schema.foralls {
            match &fb.body {
                ForallBody::Effects(lits) => {
                    for l in lits {
                        from_lit(l, &mut votes);
                    }
                }
                ForallBody::When(w) => {
                    for l in w.pre.iter().chain(&w.effect) {
                        from_lit(l, &mut votes);
                    }
                }
            }
        }
        let pattern_votes = |items: &[ConcurrencyItem], votes: &mut Vec<Ty>| {
            for item in items {
                for (i, t) in item.pattern.args.iter().enumerate() {
                    if t.is_var() && t.name == var {
                        if let Some(slot) = self.param_sig.get(&item.pattern.schema) {
                            if i < slot.len() {
                                votes.push(slot[i].clone());
                            }
                        }
                    }
                }
            }
        };
        pattern_votes(&schema.concurrency, &mut votes);
        for w in &schema.whens {
            pattern_votes(&w.concurrency, &mut votes);
        }
        if let Some(i) = schema.params.iter().position(|p| p.name == var) {
            if let Some(slot) = self.param_sig.get(&schema.name) {
                if i < slot.len() {
                    votes.push(slot[i].clone());
                }
            }
        }
        let mut out = Ty::Unknown;
        for v in votes {
            if let Ty::Exact(_) = v {
                out.join(&v);
            }
        }
        out
    }
}

fn infer(domain: &Domain, problem: &Problem) -> Inference {
    let mut inf = Inference {
        sig: BTreeMap::new(),
        param_sig: BTreeMap::new(),
        vars: BTreeMap::new(),
        consts: problem.objects.clone(),
    };
    // Ground usage in the problem.
    for atom in problem.init.atoms() {
        let lit = Literal::pos(
            atom.predicate.clone(),
            atom.args.iter().map(Term::constant).collect(),
        );
        inf.feed_literal("", &lit);
    }
    for lit in &problem.goal {
        inf.feed_literal("", lit);
    }
    // The agent convention seeds every first parameter.
    for schema in &domain.schemata {
        if let Some(agent) = schema.params.first() {
            inf.vars
                .insert((schema.name.clone(), agent.name.clone()), Ty::Exact("agent".into()));
        }
    }
    for _round in 0..8 {
        let mut changed = false;
        for schema in &domain.schemata {
            for l in schema.pre.iter().chain(&schema.effect) {
                inf.feed_literal(&schema.name, l);
            }
            for w in &schema.whens {
                for l in w.pre.iter().chain(&w.effect) {
                    inf.feed_literal(&schema.name, l);
                }
                for item in &w.concurrency {
                    inf.feed_pattern(&schema.name, item);
                }
            }
            for fb in &schema.foralls {
                match &fb.body {
                    ForallBody::Effects(lits) => {
                        for l in lits {
                            inf.feed_literal(&schema.name, l);
                        }
                    }
                    ForallBody::When(w) => {
                        for l in w.pre.iter().chain(&w.effect) {
                            inf.feed_literal(&schema.name, l);
                        }
                        for item in &w.concurrency {
                            inf.feed_pattern(&schema.name, item);
                        }
                    }
                }
            }
            for item in &schema.concurrency {
                inf.feed_pattern(&schema.name, item);
            }
            // Own parameters feed the schema's pattern signature.
            {
                let arity = schema.params.len();
                let known = inf
                    .param_sig
                    .entry(schema.name.clone())
                    .or_insert_with(|| vec![Ty::Unknown; arity])
                    .len();
                if known == arity {
                    for (i, p) in schema.params.iter().enumerate() {
                        let ty = inf.term_ty(&schema.name, p);
                        let slot = &mut inf.param_sig.get_mut(&schema.name).unwrap()[i];
                        slot.join(&ty);
                    }
                }
            }
            for var in schema.all_vars() {
                let key = (schema.name.clone(), var.clone());
                if schema.params.first().map(|p| p.name == var).unwrap_or(false) {
                    continue; // agent seed is authoritative
                }
                let desired = match inf.pull_var(schema, &var) {
                    Ty::Exact(t) => Some(Ty::Exact(t)),
                    _ => None,
                };
                match desired {
                    Some(t) => {
                        if inf.vars.get(&key) != Some(&t) {
                            inf.vars.insert(key, t);
                            changed = true;
                        }
                    }
                    None => {
                        if inf.vars.remove(&key).is_some() {
                            changed = true;
                        }
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    inf
}

fn annotate_term(inf: &Inference, schema: &str, t: &Term) -> Term {
    let ty = match t.kind {
        TermKind::Const => inf.consts.get(&t.name).cloned().flatten(),
        TermKind::Var => inf
            .vars
            .get(&(schema.to_string(), t.name.clone()))
            .and_then(|ty| ty.exact().map(String::from)),
    };
    Term { kind: t.kind, name: t.name.clone(), ty }
}

fn annotate_literal(inf: &Inference, schema: &str, l: &Literal) -> Literal {
    Literal {
        polarity: l.polarity,
        predicate: l.predicate.clone(),
        args: l.args.iter().map(|t| annotate_term(inf, schema, t)).collect(),
    }
}

fn annotate_constraints(inf: &Inference, schema: &str, cs: &[VarConstraint]) -> Vec<VarConstraint> {
    cs.iter()
        .map(|c| match c {
            VarConstraint::Eq(a, b) => {
                VarConstraint::Eq(annotate_term(inf, schema, a), annotate_term(inf, schema, b))
            }
            VarConstraint::Ne(a, b) => {
                VarConstraint::Ne(annotate_term(inf, schema, a), annotate_term(inf, schema, b))
            }
        })
        .collect()
}

fn annotate_items(inf: &Inference, schema: &str, items: &[ConcurrencyItem]) -> Vec<ConcurrencyItem> {
    items
        .iter()
        .map(|item| ConcurrencyItem {
            polarity: item.polarity,
            pattern: crate::model::SchemaPattern {
                schema: item.pattern.schema.clone(),
                args: item.pattern.args.iter().map(|t| annotate_term(inf, schema, t)).collect(),
            },
            constraints: annotate_constraints(inf, schema, &item.constraints),
        })
        .collect()
}

fn annotate_when(inf: &Inference, schema: &str, w: &WhenClause) -> WhenClause {
    WhenClause {
        pre: w.pre.iter().map(|l| annotate_literal(inf, schema, l)).collect(),
        pre_constraints: annotate_constraints(inf, schema, &w.pre_constraints),
        concurrency: annotate_items(inf, schema, &w.concurrency),
        effect: w.effect.iter().map(|l| annotate_literal(inf, schema, l)).collect(),
        group: w.group,
    }
}

fn substitute_term(t: &Term, var: &str, value: &Term) -> Term {
    if t.is_var() && t.name == var {
        value.clone()
    } else {
        t.clone()
    }
}

fn substitute_literal(l: &Literal, var: &str, value: &Term) -> Literal {
    Literal {
        polarity: l.polarity,
        predicate: l.predicate.clone(),
        args: l.args.iter().map(|t| substitute_term(t, var, value)).collect(),
    }
}

fn substitute_when(w: &WhenClause, var: &str, value: &Term) -> WhenClause {
    WhenClause {
        pre: w.pre.iter().map(|l| substitute_literal(l, var, value)).collect(),
        pre_constraints: w
            .pre_constraints
            .iter()
            .map(|c| match c {
                VarConstraint::Eq(a, b) => {
                    VarConstraint::Eq(substitute_term(a, var, value), substitute_term(b, var, value))
                }
                VarConstraint::Ne(a, b) => {
                    VarConstraint::Ne(substitute_term(a, var, value), substitute_term(b, var, value))
                }
            })
            .collect(),
        concurrency: w
            .concurrency
            .iter()
            .map(|item| ConcurrencyItem {
                polarity: item.polarity,
                pattern: crate::model::SchemaPattern {
                    schema: item.pattern.schema.clone(),
                    args: item.pattern.args.iter().map(|t| substitute_term(t, var, value)).collect(),
                },
                constraints: item
                    .constraints
                    .iter()
                    .map(|c| match c {
                        VarConstraint::Eq(a, b) => VarConstraint::Eq(
                            substitute_term(a, var, value),
                            substitute_term(b, var, value),
                        ),
                        VarConstraint::Ne(a, b) => VarConstraint::Ne(
                            substitute_term(a, var, value),
                            substitute_term(b, var, value),
                        ),
                    })
                    .collect(),
            })
            .collect(),
        effect: w.effect.iter().map(|l| substitute_literal(l, var, value)).collect(),
        group: w.group,
    }
}

/// Expands every `forall` block of `schema` over the object universe.
/// Returns a schema without forall blocks; already-ground schemata come
/// back equal (the operation is idempotent).
pub fn ground_foralls(
    schema: &ActionSchema,
    universe: &Universe,
    next_group: &mut usize,
) -> Result<ActionSchema, PrepareError> {
    let mut out = schema.clone();
    let blocks = std::mem::take(&mut out.foralls);
    for block in blocks {
        // One assignment per tuple of matching objects.
        let mut bodies: Vec<ForallBody> = vec![block.body.clone()];
        for var in &block.vars {
            let ty = var.ty.clone();
            if ty.is_none() {
                return Err(PrepareError::UntypedForallVar {
                    schema: schema.name.clone(),
                    var: var.name.clone(),
                });
            }
            let values: Vec<Term> = universe
                .compatible(ty.as_deref())
                .map(|name| Term::typed_const(name, ty.clone()))
                .collect();
            let mut next = Vec::new();
            for body in &bodies {
                for value in &values {
                    next.push(match body {
                        ForallBody::Effects(lits) => ForallBody::Effects(
                            lits.iter().map(|l| substitute_literal(l, &var.name, value)).collect(),
                        ),
                        ForallBody::When(w) => {
                            ForallBody::When(substitute_when(w, &var.name, value))
                        }
                    });
                }
            }
            bodies = next;
        }
        let group = *next_group;
        *next_group += 1;
        for body in bodies {
            match body {
                ForallBody::Effects(lits) => out.effect.extend(lits),
                ForallBody::When(mut w) => {
                    w.group = Some(group);
                    out.whens.push(w);
                }
            }
        }
    }
    Ok(out)
}

/// Variables that occur only in negative precondition literals (and in no
/// parameter, positive literal, effect, or concurrency pattern) are read
/// as universally quantified under the closed world and expanded over
/// their type.
fn expand_universal_negatives(schema: &mut ActionSchema, universe: &Universe) {
    let mut positives: Vec<String> = schema.params.iter().map(|p| p.name.clone()).collect();
    let note = |t: &Term, positives: &mut Vec<String>| {
        if t.is_var() && !positives.contains(&t.name) {
            positives.push(t.name.clone());
        }
    };
    for l in &schema.pre {
        if l.polarity == Polarity::Pos {
            for t in &l.args {
                note(t, &mut positives);
            }
        }
    }
    for l in &schema.effect {
        for t in &l.args {
            note(t, &mut positives);
        }
    }
    for w in &schema.whens {
        for l in w.pre.iter().chain(&w.effect) {
            for t in &l.args {
                note(t, &mut positives);
            }
        }
    }
    // Concurrency-pattern variables are local to their item and do not
    // bind precondition occurrences of the same name.

    let universal: Vec<Term> = schema
        .pre
        .iter()
        .filter(|l| l.polarity == Polarity::Neg)
        .flat_map(|l| l.args.iter())
        .filter(|t| t.is_var() && !positives.contains(&t.name))
        .cloned()
        .collect();
    let mut universal: Vec<Term> = universal;
    universal.dedup_by(|a, b| a.name == b.name);

    for var in universal {
        let values: Vec<Term> = universe
            .compatible(var.ty.as_deref())
            .map(|name| Term::typed_const(name, var.ty.clone()))
            .collect();
        let mut pre = Vec::new();
        for l in &schema.pre {
            if l.args.iter().any(|t| t.is_var() && t.name == var.name) {
                for value in &values {
                    pre.push(substitute_literal(l, &var.name, value));
                }
            } else {
                pre.push(l.clone());
            }
        }
        schema.pre = pre;
    }
}

/// Full preprocessing pipeline for one domain/problem pair.
pub fn prepare(domain: &Domain, problem: &Problem) -> Result<Prepared, PrepareError> {
    if problem.agents.is_empty() {
        return Err(PrepareError::NoAgents);
    }
    let inf = infer(domain, problem);
    let universe = Universe {
        constants: problem.objects.iter().map(|(n, t)| (n.clone(), t.clone())).collect(),
    };

    let mut schemata = Vec::new();
    let mut next_group = 0;
    for schema in &domain.schemata {
        let annotated = ActionSchema {
            name: schema.name.clone(),
            params: schema.params.iter().map(|p| annotate_term(&inf, &schema.name, p)).collect(),
            pre: schema.pre.iter().map(|l| annotate_literal(&inf, &schema.name, l)).collect(),
            pre_constraints: annotate_constraints(&inf, &schema.name, &schema.pre_constraints),
            concurrency: annotate_items(&inf, &schema.name, &schema.concurrency),
            effect: schema.effect.iter().map(|l| annotate_literal(&inf, &schema.name, l)).collect(),
            whens: schema.whens.iter().map(|w| annotate_when(&inf, &schema.name, w)).collect(),
            foralls: schema
                .foralls
                .iter()
                .map(|fb| ForallBlock {
                    // An explicit `- type` on a binder wins over inference.
                    vars: fb
                        .vars
                        .iter()
                        .map(|v| {
                            if v.ty.is_some() {
                                v.clone()
                            } else {
                                annotate_term(&inf, &schema.name, v)
                            }
                        })
                        .collect(),
                    body: match &fb.body {
                        ForallBody::Effects(lits) => ForallBody::Effects(
                            lits.iter().map(|l| annotate_literal(&inf, &schema.name, l)).collect(),
                        ),
                        ForallBody::When(w) => ForallBody::When(annotate_when(&inf, &schema.name, w)),
                    },
                })
                .collect(),
        };
        let mut grounded = ground_foralls(&annotated, &universe, &mut next_group)?;
        expand_universal_negatives(&mut grounded, &universe);
        schemata.push(grounded);
    }

    let mut goal = Vec::new();
    for l in &problem.goal {
        goal.push(annotate_literal(&inf, "", l));
    }
    let prepared_problem = Problem { goal, ..problem.clone() };

    Ok(Prepared {
        domain: Domain {
            name: domain.name.clone(),
            schemata,
            predicates: domain.predicates.clone(),
        },
        problem: prepared_problem,
        universe,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::{parse_domain, parse_problem};

    fn fig4_with_problem(blocks: &[&str]) -> (Domain, Problem) {
        let d = parse_domain(
            r#"
(define (domain fig4)
  (define (operator lower)
    :parameters (?a1 ?s1)
    :precondition (and (holding ?a1 ?s1) (raised ?s1))
    :effect (and (not (raised ?s1))
                 (forall (?x - block)
                   (when ((ontable ?x)
                          (not (and (lower ?a2 ?s2) (not (= ?s1 ?s2)))))
                     (and (onfloor ?x) (not (ontable ?x))))))))
"#,
        )
        .unwrap();
        let objects = blocks.iter().map(|b| format!("{b} ")).collect::<String>();
        let blockdecl = if blocks.is_empty() { String::new() } else { format!("{objects}- block") };
        let p = parse_problem(&format!(
            "(define (problem p) (:objects {blockdecl} L R - side) (:agents A1 A2) \
             (:init (raised L)) (:goal ()))",
        ))
        .unwrap();
        (d, p)
    }

    #[test]
    fn forall_expands_one_clause_per_block() {
        let (d, p) = fig4_with_problem(&["B"]);
        let prepared = prepare(&d, &p).unwrap();
        let lower = prepared.domain.schema("lower").unwrap();
        assert!(lower.foralls.is_empty());
        assert_eq!(lower.whens.len(), 1);
        assert_eq!(lower.whens[0].pre[0].args[0].name, "B");
    }

    #[test]
    fn two_blocks_expand_to_two_clauses_in_one_group() {
        let (d, p) = fig4_with_problem(&["B1", "B2"]);
        let prepared = prepare(&d, &p).unwrap();
        let lower = prepared.domain.schema("lower").unwrap();
        assert_eq!(lower.whens.len(), 2);
        assert_eq!(lower.whens[0].group, lower.whens[1].group);
        assert!(lower.whens[0].group.is_some());
    }

    #[test]
    fn empty_object_set_removes_the_block() {
        let (d, p) = fig4_with_problem(&[]);
        let prepared = prepare(&d, &p).unwrap();
        let lower = prepared.domain.schema("lower").unwrap();
        assert!(lower.whens.is_empty());
        assert!(lower.foralls.is_empty());
    }

    #[test]
    fn untyped_forall_var_with_no_usage_is_an_error() {
        let d = parse_domain(
            "(define (domain d) (define (operator o) :parameters (?a) \
             :effect (forall ?x (touched ?x))))",
        )
        .unwrap();
        let p = parse_problem(
            "(define (problem p) (:objects) (:agents A1) (:init) (:goal ()))",
        )
        .unwrap();
        let err = prepare(&d, &p).unwrap_err();
        assert!(matches!(err, PrepareError::UntypedForallVar { .. }));
    }

    #[test]
    fn grounding_is_idempotent() {
        let (d, p) = fig4_with_problem(&["B1", "B2"]);
        let prepared = prepare(&d, &p).unwrap();
        let lower = prepared.domain.schema("lower").unwrap();
        let mut group = 100;
        let again = ground_foralls(lower, &prepared.universe, &mut group).unwrap();
        assert_eq!(&again, lower);
    }

    #[test]
    fn universal_negative_precondition_expands_over_agents() {
        let d = parse_domain(
            "(define (domain d) (define (operator totable) \
             :parameters (?a1 ?s1) \
             :precondition (and (free ?s1) (not (atside ?a2 ?s1))) \
             :effect (atside ?a1 ?s1)))",
        )
        .unwrap();
        let p = parse_problem(
            "(define (problem p) (:objects L R - side) (:agents A1 A2) \
             (:init (free L) (free R)) (:goal ()))",
        )
        .unwrap();
        let prepared = prepare(&d, &p).unwrap();
        let totable = prepared.domain.schema("totable").unwrap();
        let negs: Vec<&Literal> =
            totable.pre.iter().filter(|l| l.polarity == Polarity::Neg).collect();
        assert_eq!(negs.len(), 2);
        assert!(negs.iter().all(|l| l.args[0].is_const()));
        assert!(negs.iter().any(|l| l.args[0].name == "A1"));
        assert!(negs.iter().any(|l| l.args[0].name == "A2"));
    }

    #[test]
    fn holding_stays_polymorphic_but_side_vars_get_typed() {
        let d = parse_domain(
            "(define (domain d) \
             (define (operator pickup) :parameters (?a1 ?x) \
              :precondition (and (onfloor ?x) (handempty ?a1)) \
              :effect (holding ?a1 ?x)) \
             (define (operator lift) :parameters (?a1 ?s1) \
              :precondition (down ?s1) \
              :effect (holding ?a1 ?s1)))",
        )
        .unwrap();
        let p = parse_problem(
            "(define (problem p) (:objects B - block L - table-side) (:agents A1) \
             (:init (onfloor B) (handempty A1) (down L)) (:goal ()))",
        )
        .unwrap();
        let prepared = prepare(&d, &p).unwrap();
        let lift = prepared.domain.schema("lift").unwrap();
        assert_eq!(lift.params[1].ty.as_deref(), Some("table-side"));
        let pickup = prepared.domain.schema("pickup").unwrap();
        assert_eq!(pickup.params[1].ty.as_deref(), Some("block"));
    }
}
