//! Ordering constraints over plan steps in the point algebra {<, =, >},
//! with `!=`, `<=`, `>=` as relation sets.
//!
//! Additions intersect the stored relation, propagate by composition
//! closure, and finish with a constructive satisfiability check: steps are
//! mapped onto the strongly connected components of the "must not follow"
//! graph, which is exact for this algebra (unlike path consistency alone,
//! which is incomplete once `!=` is involved).

use crate::bindings::Inconsistent;
use crate::model::{StepId, STEP_GOAL, STEP_INIT};

pub const LT: u8 = 0b001;
pub const EQ: u8 = 0b010;
pub const GT: u8 = 0b100;
pub const ANY: u8 = LT | EQ | GT;
pub const NE: u8 = LT | GT;
pub const LE: u8 = LT | EQ;
pub const GE: u8 = GT | EQ;

pub fn converse(r: u8) -> u8 {
    (r & EQ) | ((r & LT) << 2) | ((r & GT) >> 2)
}

/// Composition of two point relations, lifted to sets.
pub fn compose(a: u8, b: u8) -> u8 {
    let mut out = 0;
    for (bit, row) in [(LT, [LT, LT, ANY]), (EQ, [LT, EQ, GT]), (GT, [ANY, GT, GT])] {
        if a & bit != 0 {
            for (i, other) in [LT, EQ, GT].into_iter().enumerate() {
                if b & other != 0 {
                    out |= row[i];
                }
            }
        }
    }
    out
}

/// Renders a relation set the way the plan format spells it.
pub fn rel_name(r: u8) -> &'static str {
    match r {
        LT => "<",
        GT => ">",
        EQ => "=",
        NE => "!=",
        LE => "<=",
        GE => ">=",
        _ => "?",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct OrderMark(usize);

#[derive(Debug, Clone)]
enum TrailOp {
    SetRel { a: usize, b: usize, old: u8 },
    AddStep,
}

#[derive(Debug, Clone)]
pub struct OrderingStore {
    n: usize,
    rels: Vec<Vec<u8>>,
    trail: Vec<TrailOp>,
}

impl Default for OrderingStore {
    fn default() -> Self {
        Self::new()
    }
}

impl OrderingStore {
    /// A store holding only the fictitious endpoints: step 0 precedes
    /// everything, step 1 follows everything.
    pub fn new() -> Self {
        let mut store = OrderingStore { n: 0, rels: Vec::new(), trail: Vec::new() };
        store.push_step();
        store.push_step();
        store.rels[STEP_INIT as usize][STEP_GOAL as usize] = LT;
        store.rels[STEP_GOAL as usize][STEP_INIT as usize] = GT;
        store.trail.clear();
        store
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn steps(&self) -> impl Iterator<Item = StepId> {
        (0..self.n as StepId).collect::<Vec<_>>().into_iter()
    }

    pub fn real_steps(&self) -> impl Iterator<Item = StepId> {
        (2..self.n as StepId).collect::<Vec<_>>().into_iter()
    }

    pub fn mark(&self) -> OrderMark {
        OrderMark(self.trail.len())
    }

    pub fn undo_to(&mut self, mark: OrderMark) {
        while self.trail.len() > mark.0 {
            match self.trail.pop().unwrap() {
                TrailOp::SetRel { a, b, old } => self.rels[a][b] = old,
                TrailOp::AddStep => {
                    self.n -= 1;
                    self.rels.pop();
                    for row in &mut self.rels {
                        row.pop();
                    }
                }
            }
        }
    }

    fn push_step(&mut self) -> StepId {
        let id = self.n;
        self.n += 1;
        for row in &mut self.rels {
            row.push(ANY);
        }
        let mut row = vec![ANY; self.n];
        row[id] = EQ;
        self.rels.push(row);
        self.trail.push(TrailOp::AddStep);
        id as StepId
    }

    /// Registers a real plan step, constrained strictly between the
    /// endpoints.
    pub fn register_step(&mut self) -> StepId {
        let id = self.push_step();
        let i = id as usize;
        self.set(STEP_INIT as usize, i, LT);
        self.set(i, STEP_GOAL as usize, LT);
        id
    }

    fn set(&mut self, a: usize, b: usize, r: u8) {
        self.trail.push(TrailOp::SetRel { a, b, old: self.rels[a][b] });
        self.trail.push(TrailOp::SetRel { a: b, b: a, old: self.rels[b][a] });
        self.rels[a][b] = r;
        self.rels[b][a] = converse(r);
    }

    /// Current relation set, after whatever propagation has run.
    pub fn rel(&self, a: StepId, b: StepId) -> u8 {
        self.rels[a as usize][b as usize]
    }

    fn constrain(&mut self, a: usize, b: usize, s: u8, queue: &mut Vec<(usize, usize)>) -> Result<(), Inconsistent> {
        let r = self.rels[a][b] & s;
        if r == 0 {
            return Err(Inconsistent);
        }
        if r != self.rels[a][b] {
            self.set(a, b, r);
            queue.push((a, b));
        }
        Ok(())
    }

    fn propagate(&mut self, a: usize, b: usize, s: u8) -> Result<(), Inconsistent> {
        let mut queue = Vec::new();
        self.constrain(a, b, s, &mut queue)?;
        while let Some((x, y)) = queue.pop() {
            let rxy = self.rels[x][y];
            for z in 0..self.n {
                if z == x || z == y {
                    continue;
                }
                let xz = compose(rxy, self.rels[y][z]);
                self.constrain(x, z, xz, &mut queue)?;
                let zy = compose(self.rels[z][x], rxy);
                self.constrain(z, y, zy, &mut queue)?;
            }
        }
        Ok(())
    }

    /// Strongly connected components of the digraph with an edge a -> b
    /// whenever a cannot follow b (GT excluded). Steps in one component
    /// are forced simultaneous.
    fn scc_ids(&self) -> Vec<usize> {
        // Boolean reachability closure; n stays small in this planner.
        let mut reach = vec![vec![false; self.n]; self.n];
        for a in 0..self.n {
            reach[a][a] = true;
            for b in 0..self.n {
                if a != b && self.rels[a][b] & GT == 0 {
                    reach[a][b] = true;
                }
            }
        }
        for k in 0..self.n {
            for i in 0..self.n {
                if reach[i][k] {
                    for j in 0..self.n {
                        if reach[k][j] {
                            reach[i][j] = true;
                        }
                    }
                }
            }
        }
        let mut id = vec![usize::MAX; self.n];
        let mut next = 0;
        for i in 0..self.n {
            if id[i] != usize::MAX {
                continue;
            }
            id[i] = next;
            for j in i + 1..self.n {
                if reach[i][j] && reach[j][i] {
                    id[j] = next;
                }
            }
            next += 1;
        }
        id
    }

    /// True iff some assignment of steps to integer time points satisfies
    /// every relation set.
    pub fn consistent(&self) -> bool {
        let id = self.scc_ids();
        for a in 0..self.n {
            for b in a + 1..self.n {
                if id[a] == id[b] && self.rels[a][b] & EQ == 0 {
                    return false;
                }
            }
        }
        true
    }

    /// Intersects rel(a, b) with `s`, propagates, and checks consistency.
    /// On failure the store is rolled back and unchanged.
    pub fn add_ordering(&mut self, a: StepId, b: StepId, s: u8) -> Result<(), Inconsistent> {
        let mark = self.mark();
        if self.propagate(a as usize, b as usize, s).is_err() || !self.consistent() {
            self.undo_to(mark);
            return Err(Inconsistent);
        }
        Ok(())
    }

    /// Non-destructive probe: would `add_ordering(a, b, s)` succeed?
    pub fn possibly(&mut self, a: StepId, b: StepId, s: u8) -> bool {
        if a == b {
            return s & EQ != 0;
        }
        let mark = self.mark();
        let ok = self.add_ordering(a, b, s).is_ok();
        self.undo_to(mark);
        ok
    }

    /// Must-be-concurrent groups over the real steps, each sorted, ordered
    /// by smallest member. Singletons included.
    pub fn clusters(&self) -> Vec<Vec<StepId>> {
        let id = self.scc_ids();
        let mut groups: Vec<Vec<StepId>> = Vec::new();
        let mut seen: Vec<usize> = Vec::new();
        for step in 2..self.n {
            let c = id[step];
            match seen.iter().position(|&s| s == c) {
                Some(i) => groups[i].push(step as StepId),
                None => {
                    seen.push(c);
                    groups.push(vec![step as StepId]);
                }
            }
        }
        groups
    }

    /// The cluster containing `step`.
    pub fn cluster_of(&self, step: StepId) -> Vec<StepId> {
        let id = self.scc_ids();
        (2..self.n)
            .filter(|&s| id[s] == id[step as usize])
            .map(|s| s as StepId)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transitivity_narrows_relations() {
        let mut o = OrderingStore::new();
        let a = o.register_step();
        let b = o.register_step();
        let c = o.register_step();
        o.add_ordering(a, b, LT).unwrap();
        o.add_ordering(b, c, LT).unwrap();
        assert_eq!(o.rel(a, c), LT);
    }

    #[test]
    fn cycle_through_merged_cluster_fails() {
        let mut o = OrderingStore::new();
        let a = o.register_step();
        let b = o.register_step();
        let c = o.register_step();
        o.add_ordering(a, b, EQ).unwrap();
        o.add_ordering(b, c, LT).unwrap();
        assert!(o.add_ordering(c, a, LT).is_err());
        // Failed additions leave no residue.
        assert!(o.consistent());
        assert_eq!(o.rel(a, b), EQ);
    }

    #[test]
    fn paper_constraint_set_is_consistent() {
        // {e = b, c != d, a < e, d < f} over six steps.
        let mut o = OrderingStore::new();
        let [a, b, c, d, e, f] = std::array::from_fn(|_| o.register_step());
        o.add_ordering(e, b, EQ).unwrap();
        o.add_ordering(c, d, NE).unwrap();
        o.add_ordering(a, e, LT).unwrap();
        o.add_ordering(d, f, LT).unwrap();
        assert!(o.consistent());
        assert!(!o.possibly(c, d, EQ));
        assert!(o.possibly(a, f, LT));
        let _ = (b,);
    }

    #[test]
    fn weak_promotion_pair_collapses_to_equality() {
        let mut o = OrderingStore::new();
        let a = o.register_step();
        let b = o.register_step();
        o.add_ordering(a, b, GE).unwrap();
        o.add_ordering(b, a, GE).unwrap();
        assert_eq!(o.rel(a, b), EQ);
        assert_eq!(o.clusters(), vec![vec![a, b]]);
    }

    #[test]
    fn le_both_ways_plus_ne_is_inconsistent() {
        let mut o = OrderingStore::new();
        let a = o.register_step();
        let b = o.register_step();
        o.add_ordering(a, b, LE).unwrap();
        o.add_ordering(b, a, LE).unwrap();
        assert!(o.add_ordering(a, b, NE).is_err());
    }

    #[test]
    fn endpoints_bound_every_step() {
        let mut o = OrderingStore::new();
        let a = o.register_step();
        assert_eq!(o.rel(STEP_INIT, a), LT);
        assert!(!o.possibly(STEP_GOAL, a, LT));
        assert!(!o.possibly(a, STEP_INIT, LT));
    }

    #[test]
    fn probes_do_not_change_later_answers() {
        let mut o = OrderingStore::new();
        let a = o.register_step();
        let b = o.register_step();
        let c = o.register_step();
        o.add_ordering(a, b, LE).unwrap();
        let before: Vec<u8> = (0..o.len() as StepId)
            .flat_map(|x| (0..o.len() as StepId).map(move |y| (x, y)))
            .map(|(x, y)| o.rel(x, y))
            .collect();
        for s in [LT, EQ, GT, NE, LE, GE] {
            o.possibly(b, c, s);
            o.possibly(a, b, s);
        }
        let after: Vec<u8> = (0..o.len() as StepId)
            .flat_map(|x| (0..o.len() as StepId).map(move |y| (x, y)))
            .map(|(x, y)| o.rel(x, y))
            .collect();
        assert_eq!(before, after);
    }
}
