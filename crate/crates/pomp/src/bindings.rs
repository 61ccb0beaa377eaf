//! Codesignation / non-codesignation constraints over flat terms, with
//! most-general unification of literals.
//!
//! The store is a union-find over interned terms plus a set of required
//! distinctions. Every mutation is recorded on a trail; search code takes
//! a [`Mark`] before speculating and rolls back with [`BindingStore::undo_to`],
//! which restores query answers exactly.

use std::collections::BTreeMap;
use std::collections::HashMap;

use crate::model::{Literal, Term, TermKind, VarConstraint};

/// Inconsistency signal from a constraint addition. Not a fault: callers
/// backtrack on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Inconsistent;

/// The typed constant universe assignments are drawn from.
#[derive(Debug, Clone, Default)]
pub struct Universe {
    pub constants: Vec<(String, Option<String>)>,
}

impl Universe {
    pub fn compatible<'a>(&'a self, ty: Option<&'a str>) -> impl Iterator<Item = &'a str> + 'a {
        self.constants
            .iter()
            .filter(move |(_, t)| match (ty, t) {
                (Some(want), Some(have)) => want == have,
                _ => true,
            })
            .map(|(name, _)| name.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Mark(usize);

#[derive(Debug, Clone)]
enum TrailOp {
    Intern,
    Union { child_root: usize, parent_root: usize, old_const: Option<usize>, old_ty: Option<String>, old_size: u32 },
    Distinction,
}

#[derive(Debug, Clone)]
pub struct BindingStore {
    terms: Vec<Term>,
    index: HashMap<(TermKind, String), usize>,
    parent: Vec<usize>,
    size: Vec<u32>,
    /// Root-indexed: the constant member of the class, if any.
    constant: Vec<Option<usize>>,
    /// Root-indexed: the meet of the member types (None = unconstrained).
    ty: Vec<Option<String>>,
    distinctions: Vec<(usize, usize)>,
    trail: Vec<TrailOp>,
}

impl Default for BindingStore {
    fn default() -> Self {
        Self::new()
    }
}

impl BindingStore {
    pub fn new() -> Self {
        BindingStore {
            terms: Vec::new(),
            index: HashMap::new(),
            parent: Vec::new(),
            size: Vec::new(),
            constant: Vec::new(),
            ty: Vec::new(),
            distinctions: Vec::new(),
            trail: Vec::new(),
        }
    }

    pub fn mark(&self) -> Mark {
        Mark(self.trail.len())
    }

    pub fn undo_to(&mut self, mark: Mark) {
        while self.trail.len() > mark.0 {
            match self.trail.pop().unwrap() {
                TrailOp::Intern => {
                    let t = self.terms.pop().unwrap();
                    self.index.remove(&(t.kind, t.name));
                    self.parent.pop();
                    self.size.pop();
                    self.constant.pop();
                    self.ty.pop();
                }
                TrailOp::Union { child_root, parent_root, old_const, old_ty, old_size } => {
                    self.parent[child_root] = child_root;
                    self.constant[parent_root] = old_const;
                    self.ty[parent_root] = old_ty;
                    self.size[parent_root] = old_size;
                }
                TrailOp::Distinction => {
                    self.distinctions.pop();
                }
            }
        }
    }

    fn intern(&mut self, t: &Term) -> usize {
        let key = (t.kind, t.name.clone());
        if let Some(&id) = self.index.get(&key) {
            // A later mention may carry a type annotation the first one
            // lacked; tighten in place (class meet is rechecked on union).
            if self.ty[self.find(id)].is_none() && t.ty.is_some() {
                let root = self.find(id);
                self.trail.push(TrailOp::Union {
                    child_root: root,
                    parent_root: root,
                    old_const: self.constant[root],
                    old_ty: self.ty[root].clone(),
                    old_size: self.size[root],
                });
                self.ty[root] = t.ty.clone();
            }
            return id;
        }
        let id = self.terms.len();
        self.terms.push(t.clone());
        self.index.insert(key, id);
        self.parent.push(id);
        self.size.push(1);
        self.constant.push(if t.is_const() { Some(id) } else { None });
        self.ty.push(t.ty.clone());
        self.trail.push(TrailOp::Intern);
        id
    }

    fn find(&self, mut x: usize) -> usize {
        while self.parent[x] != x {
            x = self.parent[x];
        }
        x
    }

    fn roots_distinct(&self, ra: usize, rb: usize) -> bool {
        self.distinctions.iter().any(|&(p, q)| {
            let (rp, rq) = (self.find(p), self.find(q));
            (rp == ra && rq == rb) || (rp == rb && rq == ra)
        })
    }

    fn meet_ty(a: &Option<String>, b: &Option<String>) -> Result<Option<String>, Inconsistent> {
        match (a, b) {
            (None, other) | (other, None) => Ok(other.clone()),
            (Some(x), Some(y)) if x == y => Ok(Some(x.clone())),
            _ => Err(Inconsistent),
        }
    }

    /// Adds `x = y`. Fails if the classes hold distinct constants, carry
    /// incompatible types, or are required distinct. On failure the store
    /// is untouched.
    pub fn unify_terms(&mut self, x: &Term, y: &Term) -> Result<(), Inconsistent> {
        let before = self.mark();
        match self.unify_inner(x, y) {
            Ok(()) => Ok(()),
            Err(e) => {
                self.undo_to(before);
                Err(e)
            }
        }
    }

    fn unify_inner(&mut self, x: &Term, y: &Term) -> Result<(), Inconsistent> {
        let a = self.intern(x);
        let b = self.intern(y);
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return Ok(());
        }
        match (self.constant[ra], self.constant[rb]) {
            (Some(ca), Some(cb)) if ca != cb => return Err(Inconsistent),
            _ => {}
        }
        if self.roots_distinct(ra, rb) {
            return Err(Inconsistent);
        }
        let merged_ty = Self::meet_ty(&self.ty[ra], &self.ty[rb])?;
        let merged_const = self.constant[ra].or(self.constant[rb]);
        let (child, parent) = if self.size[ra] <= self.size[rb] { (ra, rb) } else { (rb, ra) };
        self.trail.push(TrailOp::Union {
            child_root: child,
            parent_root: parent,
            old_const: self.constant[parent],
            old_ty: self.ty[parent].clone(),
            old_size: self.size[parent],
        });
        self.parent[child] = parent;
        self.size[parent] += self.size[child];
        self.constant[parent] = merged_const;
        self.ty[parent] = merged_ty;
        Ok(())
    }

    /// Adds `x != y`. Fails iff they already codesignate.
    pub fn separate_terms(&mut self, x: &Term, y: &Term) -> Result<(), Inconsistent> {
        let before = self.mark();
        let a = self.intern(x);
        let b = self.intern(y);
        if self.find(a) == self.find(b) {
            self.undo_to(before);
            return Err(Inconsistent);
        }
        self.distinctions.push((a, b));
        self.trail.push(TrailOp::Distinction);
        Ok(())
    }

    pub fn apply_constraint(&mut self, c: &VarConstraint) -> Result<(), Inconsistent> {
        match c {
            VarConstraint::Eq(a, b) => self.unify_terms(a, b),
            VarConstraint::Ne(a, b) => self.separate_terms(a, b),
        }
    }

    /// Most general unifier of two literals: predicate, arity, and polarity
    /// must match, then arguments unify pairwise. All-or-nothing.
    pub fn mgu_literals(&mut self, q: &Literal, r: &Literal) -> Result<(), Inconsistent> {
        if q.predicate != r.predicate || q.polarity != r.polarity || q.args.len() != r.args.len() {
            return Err(Inconsistent);
        }
        let before = self.mark();
        for (a, b) in q.args.iter().zip(&r.args) {
            if let Err(e) = self.unify_terms(a, b) {
                self.undo_to(before);
                return Err(e);
            }
        }
        Ok(())
    }

    /// True iff the two terms are forced to denote the same object.
    pub fn codesignated(&self, x: &Term, y: &Term) -> bool {
        if x == y {
            return true;
        }
        match (self.lookup(x), self.lookup(y)) {
            (Some(a), Some(b)) => self.find(a) == self.find(b),
            _ => false,
        }
    }

    /// True iff the two terms can never denote the same object: distinct
    /// constants, a recorded distinction, or incompatible types.
    pub fn separated(&self, x: &Term, y: &Term) -> bool {
        if x.is_const() && y.is_const() {
            return x.name != y.name;
        }
        let (Some(a), Some(b)) = (self.lookup(x), self.lookup(y)) else { return false };
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.roots_distinct(ra, rb) {
            return true;
        }
        if let (Some(_), Some(_)) = (self.constant[ra], self.constant[rb]) {
            return true;
        }
        Self::meet_ty(&self.ty[ra], &self.ty[rb]).is_err()
    }

    fn lookup(&self, t: &Term) -> Option<usize> {
        self.index.get(&(t.kind, t.name.clone())).copied()
    }

    /// Non-destructive probe of [`unify_terms`].
    pub fn can_unify(&mut self, x: &Term, y: &Term) -> bool {
        let before = self.mark();
        let ok = self.unify_terms(x, y).is_ok();
        self.undo_to(before);
        ok
    }

    /// The bound constant of a term's class, if any.
    pub fn bound_constant(&self, t: &Term) -> Option<String> {
        if t.is_const() {
            return Some(t.name.clone());
        }
        let id = self.lookup(t)?;
        self.constant[self.find(id)].map(|c| self.terms[c].name.clone())
    }

    /// Canonical form: the class constant if bound, otherwise the
    /// lowest-numbered variable of the class (stable across runs).
    pub fn resolve(&self, t: &Term) -> Term {
        if t.is_const() {
            return t.clone();
        }
        let Some(id) = self.lookup(t) else { return t.clone() };
        let root = self.find(id);
        if let Some(c) = self.constant[root] {
            return self.terms[c].clone();
        }
        let rep = (0..self.terms.len()).find(|&i| self.find(i) == root).unwrap_or(id);
        self.terms[rep].clone()
    }

    fn class_of(&self, t: &Term) -> Option<usize> {
        self.lookup(t).map(|id| self.find(id))
    }

    /// Distinction pairs in canonical form (class constant or lowest
    /// variable), deduplicated, skipping pairs that two distinct constants
    /// already decide.
    pub fn residual_distinctions(&self) -> Vec<(Term, Term)> {
        let mut out = Vec::new();
        for &(p, q) in &self.distinctions {
            let a = self.resolve(&self.terms[p]);
            let b = self.resolve(&self.terms[q]);
            if a.is_const() && b.is_const() {
                continue;
            }
            let pair = if a <= b { (a, b) } else { (b, a) };
            if !out.contains(&pair) {
                out.push(pair);
            }
        }
        out
    }

    /// Exhaustive satisfiability over the universe: does some assignment of
    /// every variable class to a type-compatible constant respect all
    /// distinctions? Complete where the eager per-operation checks are not
    /// (e.g. pigeonhole over a finite agent set).
    pub fn satisfiable(&self, universe: &Universe) -> bool {
        self.solve(universe, None, &mut |_| true)
    }

    /// Enumerates all consistent assignments, projected onto `vars`.
    /// Variables the store has never seen range over their whole type.
    pub fn enumerate_assignments(
        &self,
        universe: &Universe,
        vars: &[Term],
    ) -> Vec<BTreeMap<String, String>> {
        let mut out = Vec::new();
        let extra: Vec<&Term> = vars.iter().filter(|v| self.lookup(v).is_none()).collect();
        self.solve(universe, Some(&extra), &mut |assignment| {
            let mut projected = BTreeMap::new();
            for v in vars {
                let value = match self.class_of(v) {
                    Some(root) => assignment.get(&ClassKey::Root(root)).cloned(),
                    None => assignment.get(&ClassKey::Free(v.name.clone())).cloned(),
                };
                if let Some(value) = value {
                    projected.insert(v.name.clone(), value);
                }
            }
            out.push(projected);
            false
        });
        out.sort();
        out.dedup();
        out
    }

    /// Backtracking assignment search. `on_solution` returning true stops
    /// after the first hit (used by `satisfiable`).
    fn solve(
        &self,
        universe: &Universe,
        extra_vars: Option<&[&Term]>,
        on_solution: &mut dyn FnMut(&BTreeMap<ClassKey, String>) -> bool,
    ) -> bool {
        // Variable classes, most-constrained first (those under distinctions).
        let mut classes: Vec<usize> = (0..self.terms.len())
            .filter(|&i| self.find(i) == i && self.constant[i].is_none())
            .collect();
        let involved = |root: usize| {
            self.distinctions
                .iter()
                .any(|&(p, q)| self.find(p) == root || self.find(q) == root)
        };
        classes.sort_by_key(|&r| (!involved(r), r));
        let mut keys: Vec<ClassKey> = classes.iter().map(|&r| ClassKey::Root(r)).collect();
        let mut types: Vec<Option<String>> = classes.iter().map(|&r| self.ty[r].clone()).collect();
        if let Some(extra) = extra_vars {
            for v in extra {
                keys.push(ClassKey::Free(v.name.clone()));
                types.push(v.ty.clone());
            }
        }
        let mut assignment: BTreeMap<ClassKey, String> = BTreeMap::new();
        self.assign(universe, &classes, &keys, &types, 0, &mut assignment, on_solution)
    }

    #[allow(clippy::too_many_arguments)]
    fn assign(
        &self,
        universe: &Universe,
        classes: &[usize],
        keys: &[ClassKey],
        types: &[Option<String>],
        i: usize,
        assignment: &mut BTreeMap<ClassKey, String>,
        on_solution: &mut dyn FnMut(&BTreeMap<ClassKey, String>) -> bool,
    ) -> bool {
        if i == keys.len() {
            return on_solution(assignment);
        }
        let candidates: Vec<String> =
            universe.compatible(types[i].as_deref()).map(String::from).collect();
        for value in candidates {
            if let ClassKey::Root(root) = keys[i] {
                if !self.value_respects_distinctions(classes, assignment, root, &value) {
                    continue;
                }
            }
            assignment.insert(keys[i].clone(), value);
            if self.assign(universe, classes, keys, types, i + 1, assignment, on_solution) {
                return true;
            }
            assignment.remove(&keys[i]);
        }
        false
    }

    fn value_respects_distinctions(
        &self,
        _classes: &[usize],
        assignment: &BTreeMap<ClassKey, String>,
        root: usize,
        value: &str,
    ) -> bool {
        for &(p, q) in &self.distinctions {
            let (rp, rq) = (self.find(p), self.find(q));
            let other = if rp == root {
                rq
            } else if rq == root {
                rp
            } else {
                continue;
            };
            let other_value = self.constant[other]
                .map(|c| self.terms[c].name.clone())
                .or_else(|| assignment.get(&ClassKey::Root(other)).cloned());
            if other_value.as_deref() == Some(value) {
                return false;
            }
        }
        true
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum ClassKey {
    Root(usize),
    Free(String),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Literal;

    fn v(name: &str) -> Term {
        Term::var(name)
    }

    fn c(name: &str) -> Term {
        Term::constant(name)
    }

    #[test]
    fn unify_binds_variable_to_constant() {
        let mut b = BindingStore::new();
        b.unify_terms(&v("?a"), &c("Agent1")).unwrap();
        assert_eq!(b.bound_constant(&v("?a")).as_deref(), Some("Agent1"));
    }

    #[test]
    fn constant_clash_fails() {
        let mut b = BindingStore::new();
        b.unify_terms(&v("?a"), &c("Agent1")).unwrap();
        assert_eq!(b.unify_terms(&v("?a"), &c("Agent2")), Err(Inconsistent));
        // Failed ops leave the store untouched.
        assert_eq!(b.bound_constant(&v("?a")).as_deref(), Some("Agent1"));
    }

    #[test]
    fn distinction_blocks_unification_in_both_orders() {
        let mut b = BindingStore::new();
        b.unify_terms(&v("?a1"), &c("Agent1")).unwrap();
        b.separate_terms(&v("?a1"), &v("?a2")).unwrap();
        assert_eq!(b.unify_terms(&v("?a2"), &c("Agent1")), Err(Inconsistent));

        let mut b = BindingStore::new();
        b.separate_terms(&v("?x"), &c("B")).unwrap();
        assert_eq!(b.unify_terms(&v("?x"), &c("B")), Err(Inconsistent));

        let mut b = BindingStore::new();
        b.unify_terms(&v("?x"), &c("B")).unwrap();
        assert_eq!(b.separate_terms(&v("?x"), &c("B")), Err(Inconsistent));
    }

    #[test]
    fn mgu_of_literals() {
        let mut b = BindingStore::new();
        let q = Literal::pos("holding", vec![v("?a"), v("?x")]);
        let r = Literal::pos("holding", vec![c("Agent1"), c("B")]);
        b.mgu_literals(&q, &r).unwrap();
        assert_eq!(b.bound_constant(&v("?a")).as_deref(), Some("Agent1"));
        assert_eq!(b.bound_constant(&v("?x")).as_deref(), Some("B"));
    }

    #[test]
    fn mgu_repeated_variable_rejects_distinct_constants() {
        let mut b = BindingStore::new();
        let q = Literal::pos("on", vec![v("?x"), v("?x")]);
        let r = Literal::pos("on", vec![c("A"), c("B")]);
        assert_eq!(b.mgu_literals(&q, &r), Err(Inconsistent));
    }

    #[test]
    fn typed_unification_rejects_mismatched_types() {
        let mut b = BindingStore::new();
        let side = Term { kind: TermKind::Var, name: "?s1".into(), ty: Some("table-side".into()) };
        let table = Term::typed_const("Table", Some("table".into()));
        assert_eq!(b.unify_terms(&side, &table), Err(Inconsistent));
    }

    #[test]
    fn undo_restores_query_answers_exactly() {
        let mut b = BindingStore::new();
        b.unify_terms(&v("?a"), &v("?b")).unwrap();
        let before = b.mark();
        let snapshot = format!("{:?}", (b.bound_constant(&v("?a")), b.codesignated(&v("?a"), &v("?b"))));
        b.unify_terms(&v("?a"), &c("X")).unwrap();
        b.separate_terms(&v("?c"), &v("?d")).unwrap();
        b.undo_to(before);
        let after = format!("{:?}", (b.bound_constant(&v("?a")), b.codesignated(&v("?a"), &v("?b"))));
        assert_eq!(snapshot, after);
        assert!(!b.separated(&v("?c"), &v("?d")));
    }

    #[test]
    fn pigeonhole_detected_only_by_satisfiable() {
        let mut b = BindingStore::new();
        let agent = |n: &str| Term { kind: TermKind::Var, name: n.into(), ty: Some("agent".into()) };
        b.separate_terms(&agent("?a1"), &agent("?a2")).unwrap();
        b.separate_terms(&agent("?a1"), &agent("?a3")).unwrap();
        b.separate_terms(&agent("?a2"), &agent("?a3")).unwrap();
        let two_agents = Universe {
            constants: vec![
                ("Agent1".into(), Some("agent".into())),
                ("Agent2".into(), Some("agent".into())),
            ],
        };
        assert!(!b.satisfiable(&two_agents));
        let three_agents = Universe {
            constants: vec![
                ("Agent1".into(), Some("agent".into())),
                ("Agent2".into(), Some("agent".into())),
                ("Agent3".into(), Some("agent".into())),
            ],
        };
        assert!(b.satisfiable(&three_agents));
    }

    #[test]
    fn enumerate_assignments_projects_requested_vars() {
        let mut b = BindingStore::new();
        let agent = |n: &str| Term { kind: TermKind::Var, name: n.into(), ty: Some("agent".into()) };
        b.separate_terms(&agent("?a1"), &agent("?a2")).unwrap();
        let uni = Universe {
            constants: vec![
                ("Agent1".into(), Some("agent".into())),
                ("Agent2".into(), Some("agent".into())),
            ],
        };
        let solutions = b.enumerate_assignments(&uni, &[agent("?a1"), agent("?a2")]);
        assert_eq!(solutions.len(), 2);
        for s in &solutions {
            assert_ne!(s["?a1"], s["?a2"]);
        }
    }
}
