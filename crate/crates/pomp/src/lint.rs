//! Domain diagnostics: schema pairs with jointly unifiable conflicting
//! unconditional effects and no mutual nonconcurrency protection,
//! incongruous concurrency lists (a requires b concurrent while b forbids
//! a), non-disjoint when-clause preconditions, and structural nits.

use std::fmt;

use crate::bindings::BindingStore;
use crate::model::{
    ActionSchema, ConcurrencyItem, Domain, ItemPolarity, Literal, SchemaPattern, Term,
    VarConstraint,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LintDiag {
    /// Unconditional effects of the two schemata can clash in one joint
    /// action (distinct agents) and neither forbids the other.
    ConflictingEffects { a: String, b: String, effect: String },
    /// `requirer` requires an instance of `target` concurrently, while
    /// `target` forbids concurrent instances of `requirer`.
    Incongruous { requirer: String, target: String },
    /// A required item can never be satisfied: no schema has its name.
    UnknownPatternSchema { schema: String, pattern: String },
    /// Explicit when clauses whose preconditions are not visibly disjoint.
    NonDisjointWhens { schema: String, first: usize, second: usize },
    /// No agent parameter; the schema cannot be planned for.
    NoAgentParam { schema: String },
}

impl fmt::Display for LintDiag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LintDiag::ConflictingEffects { a, b, effect } => write!(
                f,
                "conflict: '{a}' and '{b}' have unifiable conflicting effects on {effect} \
                 and no mutual nonconcurrency constraint"
            ),
            LintDiag::Incongruous { requirer, target } => write!(
                f,
                "incongruous: '{requirer}' requires a concurrent '{target}' but '{target}' \
                 forbids concurrent '{requirer}'"
            ),
            LintDiag::UnknownPatternSchema { schema, pattern } => {
                write!(f, "'{schema}' constrains unknown action '{pattern}'")
            }
            LintDiag::NonDisjointWhens { schema, first, second } => write!(
                f,
                "'{schema}': when clauses {first} and {second} have preconditions that are \
                 not visibly disjoint"
            ),
            LintDiag::NoAgentParam { schema } => {
                write!(f, "'{schema}' has no parameters; the first parameter names the agent")
            }
        }
    }
}

fn rename(l: &Literal, tag: &str) -> Literal {
    Literal {
        polarity: l.polarity,
        predicate: l.predicate.clone(),
        args: l
            .args
            .iter()
            .map(|t| {
                if t.is_var() {
                    Term::var(format!("{}{}", t.name, tag))
                } else {
                    t.clone()
                }
            })
            .collect(),
    }
}

/// Can `pos` and `neg` denote the same atom with the two acting agents
/// distinct? Same-agent-only clashes are impossible inside one joint
/// action (one action per agent).
fn conflict_possible(a: &ActionSchema, pos: &Literal, b: &ActionSchema, neg: &Literal) -> bool {
    if pos.predicate != neg.predicate || pos.args.len() != neg.args.len() {
        return false;
    }
    let mut store = BindingStore::new();
    let la = rename(pos, "@a");
    let lb = rename(neg, "@b");
    if store.mgu_literals(&la, &lb.negated()).is_err() {
        return false;
    }
    match (a.agent_var(), b.agent_var()) {
        (Some(ga), Some(gb)) => {
            let ga = Term::var(format!("{}@a", ga.name));
            let gb = Term::var(format!("{}@b", gb.name));
            store.separate_terms(&ga, &gb).is_ok()
        }
        _ => true,
    }
}

fn forbids(schema: &ActionSchema, other: &str) -> bool {
    schema
        .concurrency
        .iter()
        .any(|i| i.polarity == ItemPolarity::Forbidden && i.pattern.schema == other)
}

/// Visibly disjoint: some literal of one precondition appears negated
/// (same predicate, identical arguments) in the other.
fn visibly_disjoint(a: &[Literal], b: &[Literal]) -> bool {
    a.iter().any(|la| {
        b.iter().any(|lb| {
            la.predicate == lb.predicate && la.args == lb.args && la.polarity != lb.polarity
        })
    })
}

pub fn lint_domain(domain: &Domain) -> Vec<LintDiag> {
    let mut out = Vec::new();
    for (i, a) in domain.schemata.iter().enumerate() {
        if a.params.is_empty() {
            out.push(LintDiag::NoAgentParam { schema: a.name.clone() });
        }
        for item in &a.concurrency {
            if domain.schema(&item.pattern.schema).is_none() {
                out.push(LintDiag::UnknownPatternSchema {
                    schema: a.name.clone(),
                    pattern: item.pattern.schema.clone(),
                });
            }
            if item.polarity == ItemPolarity::Required {
                if let Some(target) = domain.schema(&item.pattern.schema) {
                    if forbids(target, &a.name) {
                        out.push(LintDiag::Incongruous {
                            requirer: a.name.clone(),
                            target: target.name.clone(),
                        });
                    }
                }
            }
        }
        for b in &domain.schemata[i..] {
            if forbids(a, &b.name) || forbids(b, &a.name) {
                continue;
            }
            let mut reported = false;
            for pos in a.effect.iter().filter(|l| l.is_positive()) {
                for neg in b.effect.iter().filter(|l| !l.is_positive()) {
                    if !reported && conflict_possible(a, pos, b, neg) {
                        out.push(LintDiag::ConflictingEffects {
                            a: a.name.clone(),
                            b: b.name.clone(),
                            effect: format!("({})", pos.predicate),
                        });
                        reported = true;
                    }
                }
            }
            for pos in b.effect.iter().filter(|l| l.is_positive()) {
                for neg in a.effect.iter().filter(|l| !l.is_positive()) {
                    if !reported && a.name != b.name && conflict_possible(b, pos, a, neg) {
                        out.push(LintDiag::ConflictingEffects {
                            a: a.name.clone(),
                            b: b.name.clone(),
                            effect: format!("({})", pos.predicate),
                        });
                        reported = true;
                    }
                }
            }
        }
        for (wi, wa) in a.whens.iter().enumerate() {
            for (wj, wb) in a.whens.iter().enumerate().skip(wi + 1) {
                if wa.group.is_some() && wa.group == wb.group {
                    continue; // same forall family, may fire together
                }
                if !visibly_disjoint(&wa.pre, &wb.pre) {
                    out.push(LintDiag::NonDisjointWhens {
                        schema: a.name.clone(),
                        first: wi,
                        second: wj,
                    });
                }
            }
        }
    }
    out
}

/// Footnote-6 repair: for every reported effect conflict, add forbidden
/// items to both schemata so the pair can never share a joint action
/// (other than by the same agent, which the `!=` side constraint exempts).
pub fn fix_nonconcurrent(domain: &Domain) -> Domain {
    let mut fixed = domain.clone();
    let diags = lint_domain(domain);
    for d in diags {
        let LintDiag::ConflictingEffects { a, b, .. } = d else { continue };
        add_forbid(&mut fixed, &a, &b);
        if a != b {
            add_forbid(&mut fixed, &b, &a);
        }
    }
    fixed
}

fn add_forbid(domain: &mut Domain, on: &str, target_name: &str) {
    let arity = match domain.schema(target_name) {
        Some(t) => t.params.len(),
        None => return,
    };
    let Some(schema) = domain.schemata.iter_mut().find(|s| s.name == on) else { return };
    if schema
        .concurrency
        .iter()
        .any(|i| i.polarity == ItemPolarity::Forbidden && i.pattern.schema == target_name)
    {
        return;
    }
    let args: Vec<Term> = (0..arity).map(|k| Term::var(format!("?nc{k}"))).collect();
    let mut constraints = Vec::new();
    if let (Some(agent), Some(first)) = (schema.agent_var(), args.first()) {
        constraints.push(VarConstraint::Ne(agent.clone(), first.clone()));
    }
    schema.concurrency.push(ConcurrencyItem {
        polarity: ItemPolarity::Forbidden,
        pattern: SchemaPattern { schema: target_name.to_string(), args },
        constraints,
    });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_domain;

    #[test]
    fn conflicting_effects_without_protection_are_reported() {
        let d = parse_domain(
            "(define (domain d) \
             (define (operator mk) :parameters (?g) :effect (r)) \
             (define (operator rm) :parameters (?g) :effect (not (r))))",
        )
        .unwrap();
        let diags = lint_domain(&d);
        assert!(diags.iter().any(|x| matches!(x, LintDiag::ConflictingEffects { .. })), "{diags:?}");
    }

    #[test]
    fn same_agent_only_clashes_are_not_reported() {
        // handempty flips only for the acting agent itself.
        let d = parse_domain(
            "(define (domain d) \
             (define (operator take) :parameters (?g) :effect (not (handempty ?g))) \
             (define (operator drop) :parameters (?g) :effect (handempty ?g)))",
        )
        .unwrap();
        let diags = lint_domain(&d);
        assert!(!diags.iter().any(|x| matches!(x, LintDiag::ConflictingEffects { .. })), "{diags:?}");
    }

    #[test]
    fn incongruous_lists_are_reported() {
        let d = parse_domain(
            "(define (domain d) \
             (define (operator a) :parameters (?g) :concurrent (b ?h) :effect (x)) \
             (define (operator b) :parameters (?g) :concurrent (not (a ?h)) :effect (y)))",
        )
        .unwrap();
        let diags = lint_domain(&d);
        assert!(diags.iter().any(|x| matches!(x, LintDiag::Incongruous { .. })), "{diags:?}");
    }

    #[test]
    fn fix_adds_mutual_forbidden_items() {
        let d = parse_domain(
            "(define (domain d) \
             (define (operator mk) :parameters (?g) :effect (r)) \
             (define (operator rm) :parameters (?g) :effect (not (r))))",
        )
        .unwrap();
        let fixed = fix_nonconcurrent(&d);
        assert!(forbids(fixed.schema("mk").unwrap(), "rm"));
        assert!(forbids(fixed.schema("rm").unwrap(), "mk"));
        // The fixed domain is clean.
        let diags = lint_domain(&fixed);
        assert!(!diags.iter().any(|x| matches!(x, LintDiag::ConflictingEffects { .. })), "{diags:?}");
    }
}
