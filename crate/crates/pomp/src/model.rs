//! Core domain types: terms, literals, states, action schemata and their
//! instantiations, joint actions, and planning problems.
//!
//! All values here are immutable after construction and safe to share
//! across concurrent searches.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// A flat term: a variable (name starts with `?`) or a constant.
/// Optional type annotations are attached by [`crate::ground::prepare`];
/// they never participate in equality or hashing.
#[derive(Debug, Clone)]
pub struct Term {
    pub kind: TermKind,
    pub name: String,
    pub ty: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TermKind {
    Var,
    Const,
}

impl Term {
    pub fn var(name: impl Into<String>) -> Self {
        Term { kind: TermKind::Var, name: name.into(), ty: None }
    }

    pub fn constant(name: impl Into<String>) -> Self {
        Term { kind: TermKind::Const, name: name.into(), ty: None }
    }

    pub fn typed_const(name: impl Into<String>, ty: Option<String>) -> Self {
        Term { kind: TermKind::Const, name: name.into(), ty }
    }

    pub fn is_var(&self) -> bool {
        self.kind == TermKind::Var
    }

    pub fn is_const(&self) -> bool {
        self.kind == TermKind::Const
    }
}

impl PartialEq for Term {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.name == other.name
    }
}

impl Eq for Term {}

impl PartialOrd for Term {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Term {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.kind, &self.name).cmp(&(other.kind, &other.name))
    }
}

impl std::hash::Hash for Term {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.kind.hash(state);
        self.name.hash(state);
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Polarity {
    Pos,
    Neg,
}

impl Polarity {
    pub fn negated(self) -> Self {
        match self {
            Polarity::Pos => Polarity::Neg,
            Polarity::Neg => Polarity::Pos,
        }
    }
}

/// A possibly negated predicate application.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Literal {
    pub polarity: Polarity,
    pub predicate: String,
    pub args: Vec<Term>,
}

impl Literal {
    pub fn pos(predicate: impl Into<String>, args: Vec<Term>) -> Self {
        Literal { polarity: Polarity::Pos, predicate: predicate.into(), args }
    }

    pub fn neg(predicate: impl Into<String>, args: Vec<Term>) -> Self {
        Literal { polarity: Polarity::Neg, predicate: predicate.into(), args }
    }

    pub fn is_positive(&self) -> bool {
        self.polarity == Polarity::Pos
    }

    pub fn negated(&self) -> Literal {
        Literal { polarity: self.polarity.negated(), ..self.clone() }
    }

    pub fn is_ground(&self) -> bool {
        self.args.iter().all(Term::is_const)
    }

    /// Variables occurring in the literal, in order of first occurrence.
    pub fn vars(&self) -> Vec<&Term> {
        let mut seen = BTreeSet::new();
        self.args.iter().filter(|t| t.is_var() && seen.insert(&t.name)).collect()
    }

    pub fn to_atom(&self) -> Option<Atom> {
        if !self.is_ground() {
            return None;
        }
        Some(Atom {
            predicate: self.predicate.clone(),
            args: self.args.iter().map(|t| t.name.clone()).collect(),
        })
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.polarity == Polarity::Neg {
            write!(f, "(not ")?;
        }
        write!(f, "({}", self.predicate)?;
        for a in &self.args {
            write!(f, " {}", a.name)?;
        }
        write!(f, ")")?;
        if self.polarity == Polarity::Neg {
            write!(f, ")")?;
        }
        Ok(())
    }
}

/// A ground positive atom.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom {
    pub predicate: String,
    pub args: Vec<String>,
}

impl Atom {
    pub fn new(predicate: impl Into<String>, args: Vec<&str>) -> Self {
        Atom { predicate: predicate.into(), args: args.into_iter().map(String::from).collect() }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.predicate)?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        write!(f, ")")
    }
}

/// A set of ground atoms under the closed-world assumption: a negative
/// literal holds exactly when its atom is absent.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct State {
    atoms: BTreeSet<Atom>,
}

impl State {
    pub fn new(atoms: impl IntoIterator<Item = Atom>) -> Self {
        State { atoms: atoms.into_iter().collect() }
    }

    pub fn contains(&self, atom: &Atom) -> bool {
        self.atoms.contains(atom)
    }

    pub fn atoms(&self) -> impl Iterator<Item = &Atom> {
        self.atoms.iter()
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// True iff the ground literal holds here.
    pub fn satisfies(&self, lit: &Literal) -> bool {
        match lit.to_atom() {
            Some(atom) => (lit.polarity == Polarity::Pos) == self.atoms.contains(&atom),
            None => false,
        }
    }

    pub fn insert(&mut self, atom: Atom) {
        self.atoms.insert(atom);
    }

    pub fn remove(&mut self, atom: &Atom) {
        self.atoms.remove(atom);
    }
}

/// Equality (`=`) or distinctness (`!=`) required between two terms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VarConstraint {
    Eq(Term, Term),
    Ne(Term, Term),
}

impl VarConstraint {
    pub fn terms(&self) -> (&Term, &Term) {
        match self {
            VarConstraint::Eq(a, b) | VarConstraint::Ne(a, b) => (a, b),
        }
    }
}

/// An action pattern appearing in a concurrent action list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaPattern {
    pub schema: String,
    pub args: Vec<Term>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ItemPolarity {
    /// Some other element of the joint action must match the pattern.
    Required,
    /// No element of the joint action may match the pattern.
    Forbidden,
}

/// One entry of a concurrent action list. Required entries are existential
/// over the other elements of a joint action; forbidden entries are
/// universal over all elements.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConcurrencyItem {
    pub polarity: ItemPolarity,
    pub pattern: SchemaPattern,
    pub constraints: Vec<VarConstraint>,
}

/// A conditional effect. The antecedent has a state part (`pre`, plus
/// equality constraints) and a concurrency part.
///
/// Clauses produced by expanding one `forall` block share a `group` id;
/// several clauses of the same group may be active simultaneously, while
/// clauses of distinct groups must have disjoint preconditions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WhenClause {
    pub pre: Vec<Literal>,
    pub pre_constraints: Vec<VarConstraint>,
    pub concurrency: Vec<ConcurrencyItem>,
    pub effect: Vec<Literal>,
    pub group: Option<usize>,
}

/// Body of a `forall` block: either bare effect literals or a when clause.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ForallBody {
    Effects(Vec<Literal>),
    When(WhenClause),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForallBlock {
    pub vars: Vec<Term>,
    pub body: ForallBody,
}

/// A parameterized operator. By convention the first parameter is the
/// variable naming the acting agent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionSchema {
    pub name: String,
    pub params: Vec<Term>,
    pub pre: Vec<Literal>,
    pub pre_constraints: Vec<VarConstraint>,
    pub concurrency: Vec<ConcurrencyItem>,
    pub effect: Vec<Literal>,
    pub whens: Vec<WhenClause>,
    pub foralls: Vec<ForallBlock>,
}

impl ActionSchema {
    pub fn agent_var(&self) -> Option<&Term> {
        self.params.first()
    }

    /// All variables mentioned anywhere in the schema.
    pub fn all_vars(&self) -> BTreeSet<String> {
        fn take(t: &Term, out: &mut BTreeSet<String>) {
            if t.is_var() {
                out.insert(t.name.clone());
            }
        }
        fn lits(ls: &[Literal], out: &mut BTreeSet<String>) {
            for l in ls {
                for t in &l.args {
                    take(t, out);
                }
            }
        }
        fn cons(cs: &[VarConstraint], out: &mut BTreeSet<String>) {
            for c in cs {
                let (a, b) = c.terms();
                take(a, out);
                take(b, out);
            }
        }
        fn items(is: &[ConcurrencyItem], out: &mut BTreeSet<String>) {
            for item in is {
                for t in &item.pattern.args {
                    take(t, out);
                }
                cons(&item.constraints, out);
            }
        }
        let mut out = BTreeSet::new();
        for p in &self.params {
            take(p, &mut out);
        }
        lits(&self.pre, &mut out);
        lits(&self.effect, &mut out);
        cons(&self.pre_constraints, &mut out);
        items(&self.concurrency, &mut out);
        for w in &self.whens {
            lits(&w.pre, &mut out);
            lits(&w.effect, &mut out);
            cons(&w.pre_constraints, &mut out);
            items(&w.concurrency, &mut out);
        }
        for fb in &self.foralls {
            for v in &fb.vars {
                take(v, &mut out);
            }
            match &fb.body {
                ForallBody::Effects(ls) => lits(ls, &mut out),
                ForallBody::When(w) => {
                    lits(&w.pre, &mut out);
                    lits(&w.effect, &mut out);
                    cons(&w.pre_constraints, &mut out);
                    items(&w.concurrency, &mut out);
                }
            }
        }
        out
    }
}

/// A parsed domain: uniquely named schemata plus the predicate arity
/// table inferred from every usage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Domain {
    pub name: String,
    pub schemata: Vec<ActionSchema>,
    pub predicates: BTreeMap<String, usize>,
}

impl Domain {
    pub fn schema(&self, name: &str) -> Option<&ActionSchema> {
        self.schemata.iter().find(|s| s.name == name)
    }
}

/// A planning problem: typed object universe, agent roster (fixing the
/// joint-action width `n`), initial state, and ground goal literals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Problem {
    pub name: String,
    /// Constant name -> optional type. Includes the agents.
    pub objects: BTreeMap<String, Option<String>>,
    pub agents: Vec<String>,
    pub init: State,
    pub goal: Vec<Literal>,
}

impl Problem {
    pub fn n_agents(&self) -> usize {
        self.agents.len()
    }
}

/// Identifier of a plan step. 0 is the initial fictitious step and 1 the
/// final one; real steps start at 2.
pub type StepId = u32;

pub const STEP_INIT: StepId = 0;
pub const STEP_GOAL: StepId = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    Initial,
    Final,
    Regular,
}

/// A step of a plan: a schema instantiation with freshly renamed
/// variables, or one of the two fictitious endpoint steps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionInstance {
    pub id: StepId,
    pub kind: StepKind,
    pub name: String,
    /// Renamed copies of the schema parameters; first is the agent.
    pub args: Vec<Term>,
    pub pre: Vec<Literal>,
    pub pre_constraints: Vec<VarConstraint>,
    pub concurrency: Vec<ConcurrencyItem>,
    pub effect: Vec<Literal>,
    pub whens: Vec<WhenClause>,
}

impl ActionInstance {
    pub fn is_fictitious(&self) -> bool {
        self.kind != StepKind::Regular
    }

    pub fn agent(&self) -> Option<&Term> {
        if self.is_fictitious() {
            None
        } else {
            self.args.first()
        }
    }
}

fn rename_term(t: &Term, suffix: &str) -> Term {
    if t.is_var() {
        Term { kind: TermKind::Var, name: format!("{}#{}", t.name, suffix), ty: t.ty.clone() }
    } else {
        t.clone()
    }
}

fn rename_lits(lits: &[Literal], suffix: &str) -> Vec<Literal> {
    lits.iter()
        .map(|l| Literal {
            polarity: l.polarity,
            predicate: l.predicate.clone(),
            args: l.args.iter().map(|t| rename_term(t, suffix)).collect(),
        })
        .collect()
}

fn rename_constraints(cs: &[VarConstraint], suffix: &str) -> Vec<VarConstraint> {
    cs.iter()
        .map(|c| match c {
            VarConstraint::Eq(a, b) => {
                VarConstraint::Eq(rename_term(a, suffix), rename_term(b, suffix))
            }
            VarConstraint::Ne(a, b) => {
                VarConstraint::Ne(rename_term(a, suffix), rename_term(b, suffix))
            }
        })
        .collect()
}

fn rename_items(items: &[ConcurrencyItem], suffix: &str) -> Vec<ConcurrencyItem> {
    items
        .iter()
        .map(|item| ConcurrencyItem {
            polarity: item.polarity,
            pattern: SchemaPattern {
                schema: item.pattern.schema.clone(),
                args: item.pattern.args.iter().map(|t| rename_term(t, suffix)).collect(),
            },
            constraints: rename_constraints(&item.constraints, suffix),
        })
        .collect()
}

fn rename_whens(whens: &[WhenClause], suffix: &str) -> Vec<WhenClause> {
    whens
        .iter()
        .map(|w| WhenClause {
            pre: rename_lits(&w.pre, suffix),
            pre_constraints: rename_constraints(&w.pre_constraints, suffix),
            concurrency: rename_items(&w.concurrency, suffix),
            effect: rename_lits(&w.effect, suffix),
            group: w.group,
        })
        .collect()
}

/// Instantiates a schema as a plan step, renaming every variable with a
/// `#id` suffix so that no two instantiations share variables. Remaining
/// `forall` blocks are dropped: schemata are grounded before planning.
pub fn instantiate(schema: &ActionSchema, id: StepId) -> ActionInstance {
    let suffix = id.to_string();
    ActionInstance {
        id,
        kind: StepKind::Regular,
        name: schema.name.clone(),
        args: schema.params.iter().map(|t| rename_term(t, &suffix)).collect(),
        pre: rename_lits(&schema.pre, &suffix),
        pre_constraints: rename_constraints(&schema.pre_constraints, &suffix),
        concurrency: rename_items(&schema.concurrency, &suffix),
        effect: rename_lits(&schema.effect, &suffix),
        whens: rename_whens(&schema.whens, &suffix),
    }
}

/// The fictitious initial step: no preconditions, initial-state atoms as
/// effects. Constants are annotated from the problem's object
/// declarations so typed unification sees them.
pub fn initial_step(problem: &Problem) -> ActionInstance {
    let typed = |name: &String| Term {
        kind: TermKind::Const,
        name: name.clone(),
        ty: problem.objects.get(name).cloned().flatten(),
    };
    ActionInstance {
        id: STEP_INIT,
        kind: StepKind::Initial,
        name: "<init>".into(),
        args: Vec::new(),
        pre: Vec::new(),
        pre_constraints: Vec::new(),
        concurrency: Vec::new(),
        effect: problem
            .init
            .atoms()
            .map(|a| Literal::pos(a.predicate.clone(), a.args.iter().map(typed).collect()))
            .collect(),
        whens: Vec::new(),
    }
}

/// The fictitious final step: goal literals as preconditions, no effects.
pub fn final_step(goal: &[Literal]) -> ActionInstance {
    ActionInstance {
        id: STEP_GOAL,
        kind: StepKind::Final,
        name: "<goal>".into(),
        args: Vec::new(),
        pre: goal.to_vec(),
        pre_constraints: Vec::new(),
        concurrency: Vec::new(),
        effect: Vec::new(),
        whens: Vec::new(),
    }
}

/// A fully resolved plan step: schema name plus argument names (constants,
/// or residual variable names when the plan leaves them open).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GroundAction {
    pub name: String,
    pub args: Vec<String>,
}

impl fmt::Display for GroundAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.name)?;
        for a in &self.args {
            write!(f, " {a}")?;
        }
        write!(f, ")")
    }
}

impl GroundAction {
    pub fn agent(&self) -> &str {
        &self.args[0]
    }
}

/// An n-tuple of individual actions, one slot per agent; `None` is the
/// agent's no-op.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct JointAction {
    pub elements: Vec<Option<GroundAction>>,
}

impl JointAction {
    pub fn noop(n: usize) -> Self {
        JointAction { elements: vec![None; n] }
    }

    pub fn real_actions(&self) -> impl Iterator<Item = &GroundAction> {
        self.elements.iter().flatten()
    }

    pub fn is_all_noop(&self) -> bool {
        self.elements.iter().all(Option::is_none)
    }
}

impl fmt::Display for JointAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<")?;
        for (i, e) in self.elements.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            match e {
                Some(a) => write!(f, "{a}")?,
                None => write!(f, "noop")?,
            }
        }
        write!(f, ">")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pickup_schema() -> ActionSchema {
        ActionSchema {
            name: "pickup".into(),
            params: vec![Term::var("?a1"), Term::var("?x")],
            pre: vec![
                Literal::pos("inroom", vec![Term::var("?a1"), Term::var("?r1")]),
                Literal::pos("handempty", vec![Term::var("?a1")]),
            ],
            pre_constraints: vec![],
            concurrency: vec![ConcurrencyItem {
                polarity: ItemPolarity::Forbidden,
                pattern: SchemaPattern {
                    schema: "pickup".into(),
                    args: vec![Term::var("?a2"), Term::var("?x")],
                },
                constraints: vec![VarConstraint::Ne(Term::var("?a1"), Term::var("?a2"))],
            }],
            effect: vec![Literal::pos("holding", vec![Term::var("?a1"), Term::var("?x")])],
            whens: vec![],
            foralls: vec![],
        }
    }

    #[test]
    fn instantiate_renames_all_variables() {
        let s = pickup_schema();
        let inst = instantiate(&s, 7);
        assert_eq!(inst.args[0].name, "?a1#7");
        assert_eq!(inst.args[1].name, "?x#7");
        assert_eq!(inst.pre[0].args[1].name, "?r1#7");
        assert_eq!(inst.concurrency[0].pattern.args[0].name, "?a2#7");
    }

    #[test]
    fn instantiations_share_no_variables() {
        let s = pickup_schema();
        let a = instantiate(&s, 2);
        let b = instantiate(&s, 3);
        let vars = |i: &ActionInstance| {
            let mut v = BTreeSet::new();
            for t in i.args.iter().chain(i.pre.iter().flat_map(|l| l.args.iter())) {
                if t.is_var() {
                    v.insert(t.name.clone());
                }
            }
            v
        };
        assert!(vars(&a).is_disjoint(&vars(&b)));
    }

    #[test]
    fn closed_world_state_queries() {
        let s = State::new([Atom::new("p", vec!["a"])]);
        assert!(s.satisfies(&Literal::pos("p", vec![Term::constant("a")])));
        assert!(s.satisfies(&Literal::neg("q", vec![Term::constant("a")])));
        assert!(!s.satisfies(&Literal::neg("p", vec![Term::constant("a")])));
    }

    #[test]
    fn fictitious_steps_carry_init_and_goal() {
        let problem = Problem {
            name: "t".into(),
            objects: BTreeMap::new(),
            agents: vec!["A1".into()],
            init: State::new([Atom::new("p", vec![])]),
            goal: vec![],
        };
        let a0 = initial_step(&problem);
        assert!(a0.pre.is_empty());
        assert_eq!(a0.effect.len(), 1);
        let goal = vec![Literal::neg("p", vec![])];
        let ainf = final_step(&goal);
        assert_eq!(ainf.pre, goal);
        assert!(ainf.effect.is_empty());
    }
}
