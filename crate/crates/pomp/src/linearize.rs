//! n-linearizations of concurrent nonlinear plans: every step lands in
//! exactly one joint action, equality-clustered steps share a tick,
//! `!=` pairs never do, every ordering holds tick-wise, and no agent acts
//! twice in one tick. Unassigned agent slots are no-ops.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::{GroundAction, JointAction, StepId};
use crate::ordering::{self, OrderingStore};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Linearization {
    pub ticks: Vec<JointAction>,
}

struct Enumerator<'a> {
    steps: &'a [(StepId, GroundAction)],
    orderings: &'a OrderingStore,
    agents: &'a [String],
    clusters: Vec<Vec<usize>>,
    dense: bool,
}

impl<'a> Enumerator<'a> {
    fn new(
        steps: &'a [(StepId, GroundAction)],
        orderings: &'a OrderingStore,
        agents: &'a [String],
        dense: bool,
    ) -> Self {
        // Clusters of forced-simultaneous steps, as indices into `steps`.
        let mut clusters: Vec<Vec<usize>> = Vec::new();
        for group in orderings.clusters() {
            let members: Vec<usize> = group
                .iter()
                .filter_map(|id| steps.iter().position(|(sid, _)| sid == id))
                .collect();
            if !members.is_empty() {
                clusters.push(members);
            }
        }
        Enumerator { steps, orderings, agents, clusters, dense }
    }

    fn rel_ok(&self, ta: usize, tb: usize, a: StepId, b: StepId) -> bool {
        let bit = match ta.cmp(&tb) {
            std::cmp::Ordering::Less => ordering::LT,
            std::cmp::Ordering::Equal => ordering::EQ,
            std::cmp::Ordering::Greater => ordering::GT,
        };
        self.orderings.rel(a, b) & bit != 0
    }

    fn admissible(&self, assignment: &[usize], next_cluster: usize, tick: usize) -> bool {
        for &m in &self.clusters[next_cluster] {
            let (id_m, ref act_m) = self.steps[m];
            for (ci, &t) in assignment.iter().enumerate() {
                for &o in &self.clusters[ci] {
                    let (id_o, ref act_o) = self.steps[o];
                    if !self.rel_ok(tick, t, id_m, id_o) {
                        return false;
                    }
                    if tick == t && act_m.agent() == act_o.agent() {
                        return false;
                    }
                }
            }
            // Two same-agent steps inside one cluster can never linearize.
            for &o in &self.clusters[next_cluster] {
                if o != m && self.steps[o].1.agent() == act_m.agent() {
                    return false;
                }
            }
        }
        true
    }

    fn emit(&self, assignment: &[usize]) -> Option<Linearization> {
        let max_tick = assignment.iter().copied().max().unwrap_or(0);
        if self.dense {
            for t in 1..=max_tick {
                if !assignment.contains(&t) {
                    return None;
                }
            }
        }
        let n = self.agents.len();
        let mut ticks = vec![JointAction::noop(n); max_tick];
        for (ci, &t) in assignment.iter().enumerate() {
            for &m in &self.clusters[ci] {
                let (_, ref action) = self.steps[m];
                let slot = self.agents.iter().position(|a| a == action.agent())?;
                if ticks[t - 1].elements[slot].is_some() {
                    return None;
                }
                ticks[t - 1].elements[slot] = Some(action.clone());
            }
        }
        Some(Linearization { ticks })
    }

    /// Depth-first over tick assignments; `f` returning false stops the
    /// whole enumeration. `order` gives the tick values to try per level.
    fn walk(
        &self,
        assignment: &mut Vec<usize>,
        order: &dyn Fn(usize) -> Vec<usize>,
        f: &mut dyn FnMut(&Linearization) -> bool,
    ) -> bool {
        if assignment.len() == self.clusters.len() {
            if let Some(lin) = self.emit(assignment) {
                return f(&lin);
            }
            return true;
        }
        let level = assignment.len();
        for t in order(level) {
            if self.admissible(assignment, level, t) {
                assignment.push(t);
                let keep_going = self.walk(assignment, order, f);
                assignment.pop();
                if !keep_going {
                    return false;
                }
            }
        }
        true
    }
}

/// Enumerates n-linearizations with at most `bound` joint actions, in a
/// deterministic order. With `dense`, sequences containing an all-noop
/// tick are skipped (they execute identically to their dense core).
/// The visitor returns false to stop early.
pub fn enumerate_linearizations(
    steps: &[(StepId, GroundAction)],
    orderings: &OrderingStore,
    agents: &[String],
    bound: usize,
    dense: bool,
    f: &mut dyn FnMut(&Linearization) -> bool,
) {
    let e = Enumerator::new(steps, orderings, agents, dense);
    let ticks: Vec<usize> = (1..=bound).collect();
    e.walk(&mut Vec::new(), &|_| ticks.clone(), f);
}

/// A linearization with the fewest joint actions, or None when the
/// constraints admit no linearization at all.
pub fn shortest_linearization(
    steps: &[(StepId, GroundAction)],
    orderings: &OrderingStore,
    agents: &[String],
) -> Option<Linearization> {
    for bound in 0..=steps.len() {
        let mut found = None;
        enumerate_linearizations(steps, orderings, agents, bound, true, &mut |lin| {
            found = Some(lin.clone());
            false
        });
        if found.is_some() {
            return found;
        }
    }
    None
}

/// Draws up to `k` linearizations by randomized descent; deterministic in
/// `seed`. Repeats are possible, as in any sampling mode.
pub fn sample_linearizations(
    steps: &[(StepId, GroundAction)],
    orderings: &OrderingStore,
    agents: &[String],
    bound: usize,
    k: usize,
    seed: u64,
) -> Vec<Linearization> {
    let e = Enumerator::new(steps, orderings, agents, false);
    let mut out = Vec::new();
    for round in 0..k {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(round as u64));
        let mut orders: Vec<Vec<usize>> = Vec::new();
        for _ in 0..e.clusters.len() {
            let mut ticks: Vec<usize> = (1..=bound).collect();
            ticks.shuffle(&mut rng);
            orders.push(ticks);
        }
        let order = |level: usize| orders.get(level).cloned().unwrap_or_default();
        e.walk(&mut Vec::new(), &order, &mut |lin| {
            out.push(lin.clone());
            false
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ordering::{OrderingStore, EQ, LT, NE};

    /// The six-step, four-constraint example plan: agents 1..3, steps
    /// a(1), b(2), c(2), d(3), e(1), f(2) with e=b, c!=d, a<e, d<f.
    fn example_plan() -> (Vec<(StepId, GroundAction)>, OrderingStore, Vec<String>) {
        let mut o = OrderingStore::new();
        let agents = vec!["Ag1".to_string(), "Ag2".to_string(), "Ag3".to_string()];
        let mk = |name: &str, agent: &str| GroundAction {
            name: name.into(),
            args: vec![agent.into()],
        };
        let a = o.register_step();
        let b = o.register_step();
        let c = o.register_step();
        let d = o.register_step();
        let e = o.register_step();
        let f = o.register_step();
        o.add_ordering(e, b, EQ).unwrap();
        o.add_ordering(c, d, NE).unwrap();
        o.add_ordering(a, e, LT).unwrap();
        o.add_ordering(d, f, LT).unwrap();
        let steps = vec![
            (a, mk("acta", "Ag1")),
            (b, mk("actb", "Ag2")),
            (c, mk("actc", "Ag2")),
            (d, mk("actd", "Ag3")),
            (e, mk("acte", "Ag1")),
            (f, mk("actf", "Ag2")),
        ];
        (steps, o, agents)
    }

    fn tick_names(lin: &Linearization) -> Vec<Vec<Option<String>>> {
        lin.ticks
            .iter()
            .map(|j| j.elements.iter().map(|e| e.as_ref().map(|a| a.name.clone())).collect())
            .collect()
    }

    #[test]
    fn shortest_of_the_example_plan_is_three_ticks() {
        let (steps, o, agents) = example_plan();
        let lin = shortest_linearization(&steps, &o, &agents).unwrap();
        assert_eq!(lin.ticks.len(), 3);
    }

    #[test]
    fn enumerate_finds_both_published_linearizations() {
        let (steps, o, agents) = example_plan();
        let strung = vec![
            vec![Some("acta".into()), None, None],
            vec![Some("acte".into()), Some("actb".into()), None],
            vec![None, Some("actc".into()), None],
            vec![None, None, Some("actd".into())],
            vec![None, Some("actf".into()), None],
        ];
        let compact = vec![
            vec![Some("acta".into()), Some("actc".into()), None],
            vec![Some("acte".into()), Some("actb".into()), Some("actd".into())],
            vec![None, Some("actf".into()), None],
        ];
        let mut seen_strung = false;
        let mut seen_compact = false;
        enumerate_linearizations(&steps, &o, &agents, 5, false, &mut |lin| {
            let names = tick_names(lin);
            if names == strung {
                seen_strung = true;
            }
            if names == compact {
                seen_compact = true;
            }
            true
        });
        assert!(seen_strung, "the 5-tick strung-out linearization was not produced");
        assert!(seen_compact, "the shortest 3-tick linearization was not produced");
    }

    #[test]
    fn every_emitted_linearization_rechecks_against_the_constraints() {
        let (steps, o, agents) = example_plan();
        let mut count = 0;
        enumerate_linearizations(&steps, &o, &agents, 4, false, &mut |lin| {
            count += 1;
            // Recheck conditions 1-4 directly.
            let mut tick_of = std::collections::BTreeMap::new();
            for (t, joint) in lin.ticks.iter().enumerate() {
                for a in joint.real_actions() {
                    assert!(
                        tick_of.insert(a.name.clone(), t).is_none(),
                        "a step appeared in two joint actions"
                    );
                }
            }
            assert_eq!(tick_of.len(), steps.len(), "every step occurs exactly once");
            for (i, (ida, aa)) in steps.iter().enumerate() {
                for (idb, ab) in &steps[i + 1..] {
                    let (ta, tb) = (tick_of[&aa.name], tick_of[&ab.name]);
                    let bit = match ta.cmp(&tb) {
                        std::cmp::Ordering::Less => crate::ordering::LT,
                        std::cmp::Ordering::Equal => crate::ordering::EQ,
                        std::cmp::Ordering::Greater => crate::ordering::GT,
                    };
                    assert!(o.rel(*ida, *idb) & bit != 0, "ordering violated");
                }
            }
            true
        });
        assert!(count > 0);
    }

    #[test]
    fn one_unordered_step_single_agent() {
        let mut o = OrderingStore::new();
        let s = o.register_step();
        let steps =
            vec![(s, GroundAction { name: "solo".into(), args: vec!["Ag1".into()] })];
        let agents = vec!["Ag1".to_string()];
        let mut all = Vec::new();
        enumerate_linearizations(&steps, &o, &agents, 1, true, &mut |lin| {
            all.push(lin.clone());
            true
        });
        assert_eq!(all.len(), 1);
        assert_eq!(all[0].ticks.len(), 1);
    }

    #[test]
    fn same_agent_steps_never_share_a_tick() {
        let mut o = OrderingStore::new();
        let x = o.register_step();
        let y = o.register_step();
        let steps = vec![
            (x, GroundAction { name: "one".into(), args: vec!["Ag1".into()] }),
            (y, GroundAction { name: "two".into(), args: vec!["Ag1".into()] }),
        ];
        let agents = vec!["Ag1".to_string(), "Ag2".to_string()];
        enumerate_linearizations(&steps, &o, &agents, 3, false, &mut |lin| {
            for joint in &lin.ticks {
                assert!(joint.real_actions().count() <= 1);
            }
            true
        });
        let lin = shortest_linearization(&steps, &o, &agents).unwrap();
        assert_eq!(lin.ticks.len(), 2);
    }
}
