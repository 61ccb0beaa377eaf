//! The partial-order search over concurrent nonlinear plans: goal
//! selection, action selection (existing-step reuse before fresh
//! instantiation, conditional effects included), concurrent action
//! selection for required-concurrency items, causal-link protection by
//! demotion / weak promotion / separation / confrontation, and
//! nonconcurrency enforcement, all under depth-first backtracking with
//! iterative deepening on the number of real steps.

use std::collections::BTreeMap;

use crate::bindings::BindingStore;
use crate::ground::Prepared;
use crate::model::{
    final_step, initial_step, instantiate, ActionInstance, ConcurrencyItem, ItemPolarity, Literal,
    StepId, Term, VarConstraint, STEP_GOAL, STEP_INIT,
};
use crate::ordering::{self, OrderingStore};
use crate::plan::{CausalLink, ConcurrentPlan, NcConstraint, PlanStep};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Lifo,
    Fifo,
}

#[derive(Debug, Clone)]
pub struct PlannerConfig {
    pub strategy: Strategy,
    /// Iterative-deepening cap on the number of real steps.
    pub max_steps: usize,
    /// Total search-node budget across deepening rounds.
    pub max_nodes: u64,
    /// Exclude concurrent precondition clobbering: widen the threat window
    /// to `producer <= threat <= consumer` and promote strictly.
    pub no_concurrent_clobber: bool,
    /// Recorded for reproducibility; the search itself is deterministic.
    pub seed: u64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            strategy: Strategy::Lifo,
            max_steps: 16,
            max_nodes: 5_000_000,
            no_concurrent_clobber: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SearchStats {
    pub nodes: u64,
    pub rounds: usize,
}

#[derive(Debug)]
pub enum PlanOutcome {
    Solved(Box<ConcurrentPlan>, SearchStats),
    /// The bounded search space was exhausted without a step-limit cut:
    /// no plan of any size exists.
    Unsolvable(SearchStats),
    /// A node or step budget was hit.
    Exhausted(SearchStats),
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct AgendaItem {
    condition: Literal,
    consumer: StepId,
    /// Set when the condition comes from a when-clause antecedent.
    antecedent_of: Option<(StepId, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ThreatTarget {
    Link(usize),
    Nc(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Threat {
    threatener: StepId,
    target: ThreatTarget,
    /// When-clause index of the threatening conditional effect.
    via: Option<usize>,
    effect_idx: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ConfrontKind {
    NegatedPre,
    ConcNegator,
    NcOffset,
}

#[derive(Debug, Clone)]
enum Obligation {
    /// Choose a partner for a required-concurrency item of `anchor`.
    Partner { anchor: StepId, item: ConcurrencyItem },
}

#[derive(Debug, Clone)]
enum Op {
    PushStep,
    PushLink,
    PushNc,
    PushAgenda,
    RemoveAgenda(usize, AgendaItem),
    PushThreat,
    RemoveThreat(usize, Threat),
    PushObligation,
    PopObligation(Obligation),
    PushConfront,
    PushCommit,
}

#[derive(Debug, Clone, Copy)]
struct PlanMark {
    trail: usize,
    orderings: crate::ordering::OrderMark,
    bindings: crate::bindings::Mark,
}

enum Wave {
    Solution,
    Failed,
    Exhausted,
}

enum Liveness {
    Dead,
    Separable,
    Definite,
}

#[derive(Debug, Clone)]
enum ProducerSource {
    Effect(usize),
    When { clause: usize, effect_idx: usize },
}

/// Closed-world support from the initial step uses this sentinel index.
const CLOSED_WORLD: usize = usize::MAX;

#[derive(Debug, Clone)]
enum ProducerChoice {
    Existing { step: StepId, source: ProducerSource },
    Fresh { schema_idx: usize, source: ProducerSource },
}

#[derive(Debug, Clone)]
enum Resolution {
    Order { a: StepId, b: StepId, rel: u8 },
    Separate { x: Term, y: Term },
    NegatePre { step: StepId, clause: usize, pre_idx: usize },
    AddConcNegator { step: StepId, clause: usize, item_idx: usize },
    OffsetRequired { step: StepId, clause: usize, item_idx: usize },
}

struct Search<'a> {
    prepared: &'a Prepared,
    config: &'a PlannerConfig,
    steps: Vec<ActionInstance>,
    orderings: OrderingStore,
    bindings: BindingStore,
    links: Vec<CausalLink>,
    ncs: Vec<NcConstraint>,
    agenda: Vec<AgendaItem>,
    threats: Vec<Threat>,
    obligations: Vec<Obligation>,
    confronted: Vec<(StepId, usize, ConfrontKind)>,
    committed: Vec<(StepId, usize)>,
    trail: Vec<Op>,
    nodes: u64,
    step_budget: usize,
    hit_step_limit: bool,
}

impl<'a> Search<'a> {
    fn new(prepared: &'a Prepared, config: &'a PlannerConfig, step_budget: usize) -> Self {
        let a0 = initial_step(&prepared.problem);
        let ainf = final_step(&prepared.problem.goal);
        // Reversed so the LIFO strategy works the goals in listed order.
        let agenda = ainf
            .pre
            .iter()
            .rev()
            .map(|g| AgendaItem { condition: g.clone(), consumer: STEP_GOAL, antecedent_of: None })
            .collect();
        Search {
            prepared,
            config,
            steps: vec![a0, ainf],
            orderings: OrderingStore::new(),
            bindings: BindingStore::new(),
            links: Vec::new(),
            ncs: Vec::new(),
            agenda,
            threats: Vec::new(),
            obligations: Vec::new(),
            confronted: Vec::new(),
            committed: Vec::new(),
            trail: Vec::new(),
            nodes: 0,
            step_budget,
            hit_step_limit: false,
        }
    }

    fn mark(&self) -> PlanMark {
        PlanMark {
            trail: self.trail.len(),
            orderings: self.orderings.mark(),
            bindings: self.bindings.mark(),
        }
    }

    fn undo_to(&mut self, mark: PlanMark) {
        while self.trail.len() > mark.trail {
            match self.trail.pop().unwrap() {
                Op::PushStep => {
                    self.steps.pop();
                }
                Op::PushLink => {
                    self.links.pop();
                }
                Op::PushNc => {
                    self.ncs.pop();
                }
                Op::PushAgenda => {
                    self.agenda.pop();
                }
                Op::RemoveAgenda(i, item) => self.agenda.insert(i, item),
                Op::PushThreat => {
                    self.threats.pop();
                }
                Op::RemoveThreat(i, t) => self.threats.insert(i, t),
                Op::PushObligation => {
                    self.obligations.pop();
                }
                Op::PopObligation(o) => self.obligations.push(o),
                Op::PushConfront => {
                    self.confronted.pop();
                }
                Op::PushCommit => {
                    self.committed.pop();
                }
            }
        }
        self.orderings.undo_to(mark.orderings);
        self.bindings.undo_to(mark.bindings);
    }

    fn push_agenda(&mut self, item: AgendaItem) {
        self.agenda.push(item);
        self.trail.push(Op::PushAgenda);
    }

    fn push_threat(&mut self, t: Threat) {
        if !self.threats.contains(&t) {
            self.threats.push(t);
            self.trail.push(Op::PushThreat);
        }
    }

    fn push_obligation(&mut self, o: Obligation) {
        self.obligations.push(o);
        self.trail.push(Op::PushObligation);
    }

    fn real_step_count(&self) -> usize {
        self.steps.len() - 2
    }

    // ---- constraint helpers -------------------------------------------

    fn apply_constraints(&mut self, cs: &[VarConstraint]) -> bool {
        cs.iter().all(|c| self.bindings.apply_constraint(c).is_ok())
    }

    /// One action per agent and per tick: members of an equality cluster
    /// carry pairwise-distinct agents, and some assignment from the roster
    /// must exist.
    fn enforce_cluster_agents(&mut self, step: StepId) -> bool {
        if step == STEP_INIT || step == STEP_GOAL {
            return true;
        }
        let cluster = self.orderings.cluster_of(step);
        if cluster.len() < 2 {
            return true;
        }
        if cluster.len() > self.prepared.problem.agents.len() {
            return false;
        }
        for (i, &a) in cluster.iter().enumerate() {
            for &b in &cluster[i + 1..] {
                let (Some(aa), Some(ab)) = (
                    self.steps[a as usize].agent().cloned(),
                    self.steps[b as usize].agent().cloned(),
                ) else {
                    return false;
                };
                if self.bindings.separated(&aa, &ab) {
                    continue;
                }
                if self.bindings.separate_terms(&aa, &ab).is_err() {
                    return false;
                }
            }
        }
        self.bindings.satisfiable(&self.prepared.universe)
    }

    /// The free-agent test: can the cluster's agent arguments take
    /// pairwise-distinct agents from the roster? Non-destructive.
    #[allow(dead_code)]
    fn check_agent_capacity(&mut self, step: StepId) -> bool {
        let mark = self.mark();
        let ok = self.enforce_cluster_agents(step);
        self.undo_to(mark);
        ok
    }

    fn add_ordering_checked(&mut self, a: StepId, b: StepId, rel: u8) -> bool {
        if self.orderings.add_ordering(a, b, rel).is_err() {
            return false;
        }
        self.enforce_cluster_agents(a) && self.enforce_cluster_agents(b)
    }

    // ---- threat machinery ---------------------------------------------

    /// Is a term's value visible to execution-time grounding: a constant,
    /// bound to one, or codesignated with some step argument? Separation
    /// on invisible (clause-local) variables would not constrain
    /// execution and is never offered.
    fn exec_visible(&self, t: &Term) -> bool {
        if t.is_const() || self.bindings.bound_constant(t).is_some() {
            return true;
        }
        self.steps.iter().skip(2).any(|s| s.args.iter().any(|p| self.bindings.codesignated(t, p)))
    }

    fn separable_positions(&mut self, a: &Literal, b: &Literal) -> Vec<(Term, Term)> {
        let mut out = Vec::new();
        if a.args.len() != b.args.len() {
            return out;
        }
        for (x, y) in a.args.iter().zip(&b.args) {
            if self.bindings.codesignated(x, y) {
                continue;
            }
            if !self.exec_visible(x) || !self.exec_visible(y) {
                continue;
            }
            let mark = self.bindings.mark();
            let ok = self.bindings.separate_terms(x, y).is_ok();
            self.bindings.undo_to(mark);
            if ok {
                out.push((x.clone(), y.clone()));
            }
        }
        out
    }

    fn threat_effect(&self, t: &Threat) -> &Literal {
        let step = &self.steps[t.threatener as usize];
        match t.via {
            None => &step.effect[t.effect_idx],
            Some(w) => &step.whens[w].effect[t.effect_idx],
        }
    }

    fn clause_dead(&self, step: StepId, clause: usize) -> bool {
        self.confronted.iter().any(|&(s, w, _)| s == step && w == clause)
    }

    fn clause_committed(&self, step: StepId, clause: usize) -> bool {
        self.committed.iter().any(|&(s, w)| s == step && w == clause)
    }

    fn threat_liveness(&mut self, t: &Threat) -> Liveness {
        if let Some(w) = t.via {
            if self.clause_dead(t.threatener, w) {
                return Liveness::Dead;
            }
        }
        match t.target {
            ThreatTarget::Link(li) => {
                let link = self.links[li].clone();
                if t.threatener == link.consumer {
                    return Liveness::Dead;
                }
                let consumer_bound =
                    if self.config.no_concurrent_clobber { ordering::LE } else { ordering::LT };
                if !self.orderings.possibly(link.producer, t.threatener, ordering::LE)
                    || !self.orderings.possibly(t.threatener, link.consumer, consumer_bound)
                {
                    return Liveness::Dead;
                }
                let effect = self.threat_effect(t).clone();
                let negated = link.condition.negated();
                if effect.polarity != negated.polarity
                    || effect.predicate != negated.predicate
                    || effect.args.len() != negated.args.len()
                {
                    return Liveness::Dead;
                }
                let mark = self.bindings.mark();
                let unifiable = self.bindings.mgu_literals(&effect, &negated).is_ok();
                self.bindings.undo_to(mark);
                if !unifiable {
                    return Liveness::Dead;
                }
                if self.separable_positions(&effect, &negated).is_empty() {
                    Liveness::Definite
                } else {
                    Liveness::Separable
                }
            }
            ThreatTarget::Nc(ni) => {
                let nc = self.ncs[ni].clone();
                if !self.orderings.possibly(t.threatener, nc.anchor, ordering::EQ) {
                    return Liveness::Dead;
                }
                let step = &self.steps[t.threatener as usize];
                if step.name != nc.pattern.pattern.schema
                    || step.args.len() != nc.pattern.pattern.args.len()
                {
                    return Liveness::Dead;
                }
                let inst = Literal::pos(step.name.clone(), step.args.clone());
                let pat =
                    Literal::pos(nc.pattern.pattern.schema.clone(), nc.pattern.pattern.args.clone());
                let mark = self.bindings.mark();
                let unifiable = self.bindings.mgu_literals(&inst, &pat).is_ok();
                self.bindings.undo_to(mark);
                if !unifiable {
                    return Liveness::Dead;
                }
                if self.separable_positions(&inst, &pat).is_empty() {
                    Liveness::Definite
                } else {
                    Liveness::Separable
                }
            }
        }
    }

    fn detect_step_vs_link(&mut self, sid: StepId, link_idx: usize) {
        let n_effects = self.steps[sid as usize].effect.len();
        for e in 0..n_effects {
            let t =
                Threat { threatener: sid, target: ThreatTarget::Link(link_idx), via: None, effect_idx: e };
            if matches!(self.threat_liveness(&t), Liveness::Definite) {
                self.push_threat(t);
            }
        }
        let n_whens = self.steps[sid as usize].whens.len();
        for w in 0..n_whens {
            let n = self.steps[sid as usize].whens[w].effect.len();
            for e in 0..n {
                let t = Threat {
                    threatener: sid,
                    target: ThreatTarget::Link(link_idx),
                    via: Some(w),
                    effect_idx: e,
                };
                if matches!(self.threat_liveness(&t), Liveness::Definite) {
                    self.push_threat(t);
                }
            }
        }
    }

    /// Queues definite threats created by a new link.
    fn detect_for_link(&mut self, link_idx: usize) {
        for sid in 0..self.steps.len() as StepId {
            if sid == STEP_GOAL {
                continue;
            }
            self.detect_step_vs_link(sid, link_idx);
        }
    }

    /// Queues definite threats created by a new step.
    fn detect_for_step(&mut self, sid: StepId) {
        for li in 0..self.links.len() {
            self.detect_step_vs_link(sid, li);
        }
        for ni in 0..self.ncs.len() {
            let t = Threat { threatener: sid, target: ThreatTarget::Nc(ni), via: None, effect_idx: 0 };
            if matches!(self.threat_liveness(&t), Liveness::Definite) {
                self.push_threat(t);
            }
        }
    }

    fn detect_for_nc(&mut self, nc_idx: usize) {
        for sid in self.orderings.real_steps() {
            let t = Threat { threatener: sid, target: ThreatTarget::Nc(nc_idx), via: None, effect_idx: 0 };
            if matches!(self.threat_liveness(&t), Liveness::Definite) {
                self.push_threat(t);
            }
        }
    }

    /// Full sweep run at candidate solutions: every threat some grounding
    /// could still realize (the ones deferred as separable included) must
    /// be resolved before the plan is returned.
    fn sweep_possible_threats(&mut self) -> Vec<Threat> {
        let mut out = Vec::new();
        for sid in 0..self.steps.len() as StepId {
            if sid == STEP_GOAL {
                continue;
            }
            for li in 0..self.links.len() {
                let n_effects = self.steps[sid as usize].effect.len();
                for e in 0..n_effects {
                    let t = Threat {
                        threatener: sid,
                        target: ThreatTarget::Link(li),
                        via: None,
                        effect_idx: e,
                    };
                    if !matches!(self.threat_liveness(&t), Liveness::Dead) {
                        out.push(t);
                    }
                }
                let n_whens = self.steps[sid as usize].whens.len();
                for w in 0..n_whens {
                    let n = self.steps[sid as usize].whens[w].effect.len();
                    for e in 0..n {
                        let t = Threat {
                            threatener: sid,
                            target: ThreatTarget::Link(li),
                            via: Some(w),
                            effect_idx: e,
                        };
                        if !matches!(self.threat_liveness(&t), Liveness::Dead) {
                            out.push(t);
                        }
                    }
                }
            }
            if sid != STEP_INIT {
                for ni in 0..self.ncs.len() {
                    let t =
                        Threat { threatener: sid, target: ThreatTarget::Nc(ni), via: None, effect_idx: 0 };
                    if !matches!(self.threat_liveness(&t), Liveness::Dead) {
                        out.push(t);
                    }
                }
            }
        }
        out
    }

    /// Resolution branches in the fixed order: demotion, weak promotion,
    /// separation, confrontation.
    fn resolutions(&mut self, t: &Threat) -> Vec<Resolution> {
        let mut out = Vec::new();
        match t.target {
            ThreatTarget::Link(li) => {
                let link = self.links[li].clone();
                if t.threatener != link.producer {
                    out.push(Resolution::Order { a: t.threatener, b: link.producer, rel: ordering::LT });
                }
                let strict = self.config.no_concurrent_clobber
                    || !self.weak_promotion_feasible(t.threatener, link.consumer);
                out.push(Resolution::Order {
                    a: t.threatener,
                    b: link.consumer,
                    rel: if strict { ordering::GT } else { ordering::GE },
                });
                let effect = self.threat_effect(t).clone();
                for (x, y) in self.separable_positions(&effect, &link.condition.negated()) {
                    out.push(Resolution::Separate { x, y });
                }
                if let Some(w) = t.via {
                    if !self.clause_committed(t.threatener, w) && !self.clause_dead(t.threatener, w) {
                        let clause = self.steps[t.threatener as usize].whens[w].clone();
                        for pre_idx in 0..clause.pre.len() {
                            out.push(Resolution::NegatePre { step: t.threatener, clause: w, pre_idx });
                        }
                        for (item_idx, item) in clause.concurrency.iter().enumerate() {
                            match item.polarity {
                                ItemPolarity::Forbidden => out.push(Resolution::AddConcNegator {
                                    step: t.threatener,
                                    clause: w,
                                    item_idx,
                                }),
                                ItemPolarity::Required => out.push(Resolution::OffsetRequired {
                                    step: t.threatener,
                                    clause: w,
                                    item_idx,
                                }),
                            }
                        }
                    }
                }
            }
            ThreatTarget::Nc(ni) => {
                let nc = self.ncs[ni].clone();
                if t.threatener != nc.anchor {
                    out.push(Resolution::Order { a: t.threatener, b: nc.anchor, rel: ordering::LT });
                    out.push(Resolution::Order { a: t.threatener, b: nc.anchor, rel: ordering::GT });
                }
                let step = &self.steps[t.threatener as usize];
                let inst = Literal::pos(step.name.clone(), step.args.clone());
                let pat =
                    Literal::pos(nc.pattern.pattern.schema.clone(), nc.pattern.pattern.args.clone());
                for (x, y) in self.separable_positions(&inst, &pat) {
                    out.push(Resolution::Separate { x, y });
                }
            }
        }
        out
    }

    /// Weak promotion stays weak only if some agent could perform the
    /// threatener concurrently with the consumer.
    fn weak_promotion_feasible(&mut self, threatener: StepId, consumer: StepId) -> bool {
        if consumer == STEP_GOAL || consumer == STEP_INIT || threatener == STEP_INIT {
            return false;
        }
        let mark = self.mark();
        let feasible = self.orderings.add_ordering(threatener, consumer, ordering::EQ).is_ok()
            && self.enforce_cluster_agents(threatener);
        self.undo_to(mark);
        feasible
    }

    fn apply_resolution(&mut self, t: &Threat, r: &Resolution) -> bool {
        match r {
            Resolution::Order { a, b, rel } => self.add_ordering_checked(*a, *b, *rel),
            Resolution::Separate { x, y } => self.bindings.separate_terms(x, y).is_ok(),
            Resolution::NegatePre { step, clause, pre_idx } => {
                if !self.unify_threat(t) {
                    return false;
                }
                let lit = self.steps[*step as usize].whens[*clause].pre[*pre_idx].negated();
                self.push_agenda(AgendaItem {
                    condition: lit,
                    consumer: *step,
                    antecedent_of: Some((*step, *clause)),
                });
                self.confronted.push((*step, *clause, ConfrontKind::NegatedPre));
                self.trail.push(Op::PushConfront);
                true
            }
            Resolution::AddConcNegator { step, clause, item_idx } => {
                if !self.unify_threat(t) {
                    return false;
                }
                let mut item =
                    self.steps[*step as usize].whens[*clause].concurrency[*item_idx].clone();
                item.polarity = ItemPolarity::Required;
                self.confronted.push((*step, *clause, ConfrontKind::ConcNegator));
                self.trail.push(Op::PushConfront);
                self.push_obligation(Obligation::Partner { anchor: *step, item });
                true
            }
            Resolution::OffsetRequired { step, clause, item_idx } => {
                if !self.unify_threat(t) {
                    return false;
                }
                let mut item =
                    self.steps[*step as usize].whens[*clause].concurrency[*item_idx].clone();
                item.polarity = ItemPolarity::Forbidden;
                self.confronted.push((*step, *clause, ConfrontKind::NcOffset));
                self.trail.push(Op::PushConfront);
                self.add_nc(item, *step)
            }
        }
    }

    /// Commits the unifier under which the conditional effect clobbers the
    /// protected condition; confrontation then falsifies the antecedent
    /// for exactly that instantiation.
    fn unify_threat(&mut self, t: &Threat) -> bool {
        match t.target {
            ThreatTarget::Link(li) => {
                let condition = self.links[li].condition.negated();
                let effect = self.threat_effect(t).clone();
                self.bindings.mgu_literals(&effect, &condition).is_ok()
            }
            ThreatTarget::Nc(_) => true,
        }
    }

    fn add_nc(&mut self, pattern: ConcurrencyItem, anchor: StepId) -> bool {
        // Fig. 6 records the pattern's codesignation constraints in B; the
        // pattern variables are instance-local, so matching probes see them.
        if !self.apply_constraints(&pattern.constraints) {
            return false;
        }
        self.ncs.push(NcConstraint { pattern, anchor });
        self.trail.push(Op::PushNc);
        self.detect_for_nc(self.ncs.len() - 1);
        true
    }

    // ---- action selection ----------------------------------------------

    fn action_choices(&mut self, item: &AgendaItem) -> Vec<ProducerChoice> {
        let mut out = Vec::new();
        let q = item.condition.clone();
        for sid in 0..self.steps.len() as StepId {
            if sid == STEP_GOAL || sid == item.consumer {
                continue;
            }
            if !self.orderings.possibly(sid, item.consumer, ordering::LT) {
                continue;
            }
            let mut sources: Vec<ProducerSource> = Vec::new();
            {
                let step = &self.steps[sid as usize];
                for (i, e) in step.effect.iter().enumerate() {
                    if e.predicate == q.predicate && e.polarity == q.polarity {
                        sources.push(ProducerSource::Effect(i));
                    }
                }
                for (w, clause) in step.whens.iter().enumerate() {
                    for (i, e) in clause.effect.iter().enumerate() {
                        if e.predicate == q.predicate && e.polarity == q.polarity {
                            sources.push(ProducerSource::When { clause: w, effect_idx: i });
                        }
                    }
                }
            }
            if sid == STEP_INIT && q.polarity == crate::model::Polarity::Neg {
                // Closed-world support: the absence needs no producer;
                // conflicting init atoms surface as threats on the link.
                sources.push(ProducerSource::Effect(CLOSED_WORLD));
            }
            for source in sources {
                if let ProducerSource::When { clause, .. } = &source {
                    if self.clause_dead(sid, *clause) {
                        continue;
                    }
                }
                if self.probe_source(sid, &source, &q) {
                    out.push(ProducerChoice::Existing { step: sid, source });
                }
            }
        }
        if self.real_step_count() >= self.step_budget {
            if self.any_fresh_producer(&q) {
                self.hit_step_limit = true;
            }
            return out;
        }
        for si in 0..self.prepared.domain.schemata.len() {
            let scratch = instantiate(&self.prepared.domain.schemata[si], self.steps.len() as StepId);
            let mut sources: Vec<ProducerSource> = Vec::new();
            for (i, e) in scratch.effect.iter().enumerate() {
                if e.predicate == q.predicate && e.polarity == q.polarity {
                    sources.push(ProducerSource::Effect(i));
                }
            }
            for (w, clause) in scratch.whens.iter().enumerate() {
                for (i, e) in clause.effect.iter().enumerate() {
                    if e.predicate == q.predicate && e.polarity == q.polarity {
                        sources.push(ProducerSource::When { clause: w, effect_idx: i });
                    }
                }
            }
            for source in sources {
                let effect = match &source {
                    ProducerSource::Effect(i) => &scratch.effect[*i],
                    ProducerSource::When { clause, effect_idx } => {
                        &scratch.whens[*clause].effect[*effect_idx]
                    }
                };
                let mark = self.bindings.mark();
                let ok = self.bindings.mgu_literals(effect, &q).is_ok();
                self.bindings.undo_to(mark);
                if ok {
                    out.push(ProducerChoice::Fresh { schema_idx: si, source });
                }
            }
        }
        out
    }

    fn any_fresh_producer(&self, q: &Literal) -> bool {
        self.prepared.domain.schemata.iter().any(|s| {
            s.effect.iter().any(|e| e.predicate == q.predicate && e.polarity == q.polarity)
                || s.whens.iter().any(|w| {
                    w.effect.iter().any(|e| e.predicate == q.predicate && e.polarity == q.polarity)
                })
        })
    }

    fn probe_source(&mut self, sid: StepId, source: &ProducerSource, q: &Literal) -> bool {
        let effect = match source {
            ProducerSource::Effect(i) if *i == CLOSED_WORLD => return true,
            ProducerSource::Effect(i) => self.steps[sid as usize].effect[*i].clone(),
            ProducerSource::When { clause, effect_idx } => {
                self.steps[sid as usize].whens[*clause].effect[*effect_idx].clone()
            }
        };
        let mark = self.bindings.mark();
        let ok = self.bindings.mgu_literals(&effect, q).is_ok();
        self.bindings.undo_to(mark);
        ok
    }

    /// Installs one producer choice: bindings, link, ordering, agenda and
    /// concurrency updates, threat detection. Returns false when some
    /// constraint fails; the caller unwinds to the mark.
    fn apply_choice(&mut self, choice: &ProducerChoice, item: &AgendaItem) -> bool {
        let (producer, fresh) = match choice {
            ProducerChoice::Existing { step, .. } => (*step, false),
            ProducerChoice::Fresh { schema_idx, .. } => {
                let schema = &self.prepared.domain.schemata[*schema_idx];
                let inst = instantiate_isolated(schema, self.steps.len() as StepId);
                let sid = self.orderings.register_step();
                debug_assert_eq!(sid as usize, self.steps.len());
                self.steps.push(inst);
                self.trail.push(Op::PushStep);
                (sid, true)
            }
        };
        let source = match choice {
            ProducerChoice::Existing { source, .. } | ProducerChoice::Fresh { source, .. } => {
                source.clone()
            }
        };

        match &source {
            ProducerSource::Effect(i) if *i == CLOSED_WORLD => {}
            ProducerSource::Effect(i) => {
                let e = self.steps[producer as usize].effect[*i].clone();
                if self.bindings.mgu_literals(&e, &item.condition).is_err() {
                    return false;
                }
            }
            ProducerSource::When { clause, effect_idx } => {
                let e = self.steps[producer as usize].whens[*clause].effect[*effect_idx].clone();
                if self.bindings.mgu_literals(&e, &item.condition).is_err() {
                    return false;
                }
            }
        }

        if !self.add_ordering_checked(producer, item.consumer, ordering::LT) {
            return false;
        }
        self.links.push(CausalLink {
            producer,
            condition: item.condition.clone(),
            consumer: item.consumer,
        });
        self.trail.push(Op::PushLink);

        // Selecting a conditional effect commits its clause: antecedent
        // preconditions join the agenda and its concurrency part is
        // processed like a regular concurrent action list.
        if let ProducerSource::When { clause, .. } = &source {
            if self.clause_dead(producer, *clause) {
                return false;
            }
            if !self.clause_committed(producer, *clause) {
                self.committed.push((producer, *clause));
                self.trail.push(Op::PushCommit);
                let w = self.steps[producer as usize].whens[*clause].clone();
                if !self.apply_constraints(&w.pre_constraints) {
                    return false;
                }
                for lit in &w.pre {
                    self.push_agenda(AgendaItem {
                        condition: lit.clone(),
                        consumer: producer,
                        antecedent_of: Some((producer, *clause)),
                    });
                }
                for citem in &w.concurrency {
                    match citem.polarity {
                        ItemPolarity::Required => self.push_obligation(Obligation::Partner {
                            anchor: producer,
                            item: citem.clone(),
                        }),
                        ItemPolarity::Forbidden => {
                            if !self.add_nc(citem.clone(), producer) {
                                return false;
                            }
                        }
                    }
                }
            }
        }

        if fresh {
            let inst = self.steps[producer as usize].clone();
            if !self.apply_constraints(&inst.pre_constraints) {
                return false;
            }
            for lit in &inst.pre {
                self.push_agenda(AgendaItem {
                    condition: lit.clone(),
                    consumer: producer,
                    antecedent_of: None,
                });
            }
            for citem in &inst.concurrency {
                match citem.polarity {
                    ItemPolarity::Required => self
                        .push_obligation(Obligation::Partner { anchor: producer, item: citem.clone() }),
                    ItemPolarity::Forbidden => {
                        if !self.add_nc(citem.clone(), producer) {
                            return false;
                        }
                    }
                }
            }
            self.detect_for_step(producer);
        }

        self.detect_for_link(self.links.len() - 1);
        true
    }

    // ---- concurrent action selection ------------------------------------

    fn partner_candidates(&mut self, anchor: StepId, item: &ConcurrencyItem) -> Vec<Option<StepId>> {
        let mut out: Vec<Option<StepId>> = Vec::new();
        for sid in self.orderings.real_steps() {
            if sid == anchor || self.steps[sid as usize].name != item.pattern.schema {
                continue;
            }
            if self.steps[sid as usize].args.len() != item.pattern.args.len() {
                continue;
            }
            let mark = self.mark();
            let ok = self.commit_partner(anchor, item, sid);
            self.undo_to(mark);
            if ok {
                out.push(Some(sid));
            }
        }
        if self.prepared.domain.schema(&item.pattern.schema).is_some() {
            if self.real_step_count() < self.step_budget {
                out.push(None);
            } else {
                self.hit_step_limit = true;
            }
        }
        out
    }

    /// Links the partner to the item: shared variables unify exactly as
    /// instantiated in the anchor, side constraints are posted, the pair
    /// is equality-ordered, and the cluster keeps a free agent.
    fn commit_partner(&mut self, anchor: StepId, item: &ConcurrencyItem, sid: StepId) -> bool {
        let args = self.steps[sid as usize].args.clone();
        for (p, a) in item.pattern.args.iter().zip(&args) {
            if self.bindings.unify_terms(p, a).is_err() {
                return false;
            }
        }
        if !self.apply_constraints(&item.constraints) {
            return false;
        }
        self.add_ordering_checked(anchor, sid, ordering::EQ)
    }

    fn apply_partner(
        &mut self,
        anchor: StepId,
        item: &ConcurrencyItem,
        partner: Option<StepId>,
    ) -> bool {
        let sid = match partner {
            Some(sid) => sid,
            None => {
                let Some(schema) = self.prepared.domain.schema(&item.pattern.schema) else {
                    return false;
                };
                if schema.params.len() != item.pattern.args.len() {
                    return false;
                }
                let inst = instantiate_isolated(schema, self.steps.len() as StepId);
                let sid = self.orderings.register_step();
                debug_assert_eq!(sid as usize, self.steps.len());
                self.steps.push(inst.clone());
                self.trail.push(Op::PushStep);
                if !self.apply_constraints(&inst.pre_constraints) {
                    return false;
                }
                for lit in &inst.pre {
                    self.push_agenda(AgendaItem {
                        condition: lit.clone(),
                        consumer: sid,
                        antecedent_of: None,
                    });
                }
                for citem in &inst.concurrency {
                    match citem.polarity {
                        ItemPolarity::Required => self
                            .push_obligation(Obligation::Partner { anchor: sid, item: citem.clone() }),
                        ItemPolarity::Forbidden => {
                            if !self.add_nc(citem.clone(), sid) {
                                return false;
                            }
                        }
                    }
                }
                sid
            }
        };
        if !self.commit_partner(anchor, item, sid) {
            return false;
        }
        if partner.is_none() {
            self.detect_for_step(sid);
        }
        true
    }

    /// A lower bound on the fresh steps the open agenda still demands: a
    /// condition no existing step can supply needs a new producer, and
    /// conditions of distinct predicate/polarity need distinct ones.
    fn fresh_steps_needed(&self) -> usize {
        let mut needed: Vec<(&str, crate::model::Polarity)> = Vec::new();
        'items: for item in &self.agenda {
            let q = &item.condition;
            if q.polarity == crate::model::Polarity::Neg {
                continue; // the closed world can always be tried
            }
            for step in &self.steps {
                if step.kind == crate::model::StepKind::Final {
                    continue;
                }
                let hit = step
                    .effect
                    .iter()
                    .chain(step.whens.iter().flat_map(|w| w.effect.iter()))
                    .any(|e| e.predicate == q.predicate && e.polarity == q.polarity);
                if hit {
                    continue 'items;
                }
            }
            let key = (q.predicate.as_str(), q.polarity);
            if !needed.contains(&key) {
                needed.push(key);
            }
        }
        needed.len()
    }

    // ---- the search loop -------------------------------------------------

    fn solve(&mut self) -> Wave {
        self.nodes += 1;
        if self.nodes > self.config.max_nodes {
            return Wave::Exhausted;
        }
        let demand = self.fresh_steps_needed();
        if demand > 0 && self.real_step_count() + demand > self.step_budget {
            self.hit_step_limit = true;
            return Wave::Failed;
        }

        // Required-concurrency obligations complete the planner step that
        // spawned them and run first.
        if let Some(ob) = self.obligations.last().cloned() {
            self.obligations.pop();
            self.trail.push(Op::PopObligation(ob.clone()));
            let Obligation::Partner { anchor, item } = &ob;
            for cand in self.partner_candidates(*anchor, item) {
                let mark = self.mark();
                if self.apply_partner(*anchor, item, cand) {
                    match self.solve() {
                        Wave::Solution => return Wave::Solution,
                        Wave::Exhausted => {
                            self.undo_to(mark);
                            return Wave::Exhausted;
                        }
                        Wave::Failed => {}
                    }
                }
                self.undo_to(mark);
            }
            return Wave::Failed;
        }

        // Unresolved threats next. Entries may have gone stale (their
        // window closed or their unifier died); drop those.
        while !self.threats.is_empty() {
            let pos = self.threats.len() - 1;
            let t = self.threats.remove(pos);
            self.trail.push(Op::RemoveThreat(pos, t));
            match self.threat_liveness(&t) {
                Liveness::Dead | Liveness::Separable => continue,
                Liveness::Definite => {
                    let resolutions = self.resolutions(&t);
                    for r in resolutions {
                        let mark = self.mark();
                        if self.apply_resolution(&t, &r) {
                            match self.solve() {
                                Wave::Solution => return Wave::Solution,
                                Wave::Exhausted => {
                                    self.undo_to(mark);
                                    return Wave::Exhausted;
                                }
                                Wave::Failed => {}
                            }
                        }
                        self.undo_to(mark);
                    }
                    return Wave::Failed;
                }
            }
        }

        // Then the agenda.
        if !self.agenda.is_empty() {
            let pos = match self.config.strategy {
                Strategy::Lifo => self.agenda.len() - 1,
                Strategy::Fifo => 0,
            };
            let item = self.agenda.remove(pos);
            self.trail.push(Op::RemoveAgenda(pos, item.clone()));
            let choices = self.action_choices(&item);
            for choice in choices {
                let mark = self.mark();
                if self.apply_choice(&choice, &item) {
                    match self.solve() {
                        Wave::Solution => return Wave::Solution,
                        Wave::Exhausted => {
                            self.undo_to(mark);
                            return Wave::Exhausted;
                        }
                        Wave::Failed => {}
                    }
                }
                self.undo_to(mark);
            }
            return Wave::Failed;
        }

        // Candidate solution: nothing a grounding could still realize may
        // remain threatened.
        let pending = self.sweep_possible_threats();
        let Some(t) = pending.first().copied() else { return Wave::Solution };
        let resolutions = self.resolutions(&t);
        for r in resolutions {
            let mark = self.mark();
            if self.apply_resolution(&t, &r) {
                match self.solve() {
                    Wave::Solution => return Wave::Solution,
                    Wave::Exhausted => {
                        self.undo_to(mark);
                        return Wave::Exhausted;
                    }
                    Wave::Failed => {}
                }
            }
            self.undo_to(mark);
        }
        Wave::Failed
    }

    fn extract(&self) -> ConcurrentPlan {
        let steps = self
            .steps
            .iter()
            .skip(2)
            .map(|inst| PlanStep {
                id: inst.id,
                name: inst.name.clone(),
                args: inst.args.iter().map(|t| self.bindings.resolve(t)).collect(),
            })
            .collect();
        let instances: BTreeMap<StepId, ActionInstance> =
            self.steps.iter().skip(2).map(|i| (i.id, i.clone())).collect();
        ConcurrentPlan {
            steps,
            orderings: self.orderings.clone(),
            links: self.links.clone(),
            nonconcurrency: self.ncs.clone(),
            bindings: self.bindings.clone(),
            agents: self.prepared.problem.agents.clone(),
            instances,
        }
    }
}

/// Instantiation that additionally isolates concurrency-pattern variables
/// per item, so two items reusing a local name never alias.
fn instantiate_isolated(schema: &crate::model::ActionSchema, id: StepId) -> ActionInstance {
    let mut inst = instantiate(schema, id);
    let shared: std::collections::BTreeSet<String> = {
        let mut s = std::collections::BTreeSet::new();
        for t in &inst.args {
            s.insert(t.name.clone());
        }
        for l in inst.pre.iter().chain(&inst.effect) {
            for t in &l.args {
                if t.is_var() {
                    s.insert(t.name.clone());
                }
            }
        }
        for w in &inst.whens {
            for l in w.pre.iter().chain(&w.effect) {
                for t in &l.args {
                    if t.is_var() {
                        s.insert(t.name.clone());
                    }
                }
            }
        }
        s
    };
    let isolate = |item: &mut ConcurrencyItem, tag: &str| {
        let rename = |t: &mut Term| {
            if t.is_var() && !shared.contains(&t.name) {
                t.name = format!("{}{}", t.name, tag);
            }
        };
        for t in &mut item.pattern.args {
            rename(t);
        }
        for c in &mut item.constraints {
            match c {
                VarConstraint::Eq(a, b) | VarConstraint::Ne(a, b) => {
                    rename(a);
                    rename(b);
                }
            }
        }
    };
    for (k, item) in inst.concurrency.iter_mut().enumerate() {
        isolate(item, &format!("i{k}"));
    }
    for (wi, w) in inst.whens.iter_mut().enumerate() {
        for (k, item) in w.concurrency.iter_mut().enumerate() {
            isolate(item, &format!("w{wi}i{k}"));
        }
    }
    inst
}

/// Plans with iterative deepening on the number of real steps. The
/// outcome distinguishes a genuinely exhausted search space from hitting
/// the node or step budget.
pub fn plan(prepared: &Prepared, config: &PlannerConfig) -> PlanOutcome {
    let mut total_nodes = 0u64;
    for limit in 0..=config.max_steps {
        let mut search = Search::new(prepared, config, limit);
        search.nodes = total_nodes;
        let wave = search.solve();
        total_nodes = search.nodes;
        let stats = SearchStats { nodes: total_nodes, rounds: limit + 1 };
        match wave {
            Wave::Solution => return PlanOutcome::Solved(Box::new(search.extract()), stats),
            Wave::Exhausted => return PlanOutcome::Exhausted(stats),
            Wave::Failed => {
                if !search.hit_step_limit {
                    return PlanOutcome::Unsolvable(stats);
                }
            }
        }
    }
    PlanOutcome::Exhausted(SearchStats { nodes: total_nodes, rounds: config.max_steps + 1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ground::prepare;
    use crate::parse::{parse_domain, parse_problem};

    fn plan_text(domain: &str, problem: &str, config: &PlannerConfig) -> PlanOutcome {
        let d = parse_domain(domain).unwrap();
        let p = parse_problem(problem).unwrap();
        let prepared = prepare(&d, &p).unwrap();
        plan(&prepared, config)
    }

    const SWAP_DOMAIN: &str = "(define (domain swap) \
        (define (operator acta) :parameters (?g1) :precondition (p) :effect (q)) \
        (define (operator actb) :parameters (?g1) :precondition (not (q)) :effect (not (p))))";
    const SWAP_PROBLEM: &str = "(define (problem swap) (:objects) (:agents A1 A2) \
        (:init (p)) (:goal (and (not (p)) (q))))";

    #[test]
    fn swap_is_solved_with_two_steps_ordered_equal() {
        let out = plan_text(SWAP_DOMAIN, SWAP_PROBLEM, &PlannerConfig::default());
        let PlanOutcome::Solved(plan, _) = out else { panic!("expected a plan, got {out:?}") };
        assert_eq!(plan.steps.len(), 2);
        let (a, b) = (plan.steps[0].id, plan.steps[1].id);
        assert_eq!(plan.orderings.rel(a, b), ordering::EQ);
        let (ga, gb) = (&plan.steps[0].args[0], &plan.steps[1].args[0]);
        assert!(plan.bindings.separated(ga, gb), "cluster agents must be distinct");
    }

    #[test]
    fn swap_solves_under_both_strategies() {
        for strategy in [Strategy::Lifo, Strategy::Fifo] {
            let config = PlannerConfig { strategy, ..Default::default() };
            let out = plan_text(SWAP_DOMAIN, SWAP_PROBLEM, &config);
            assert!(matches!(out, PlanOutcome::Solved(_, _)), "strategy {strategy:?}");
        }
    }

    #[test]
    fn goal_subset_of_init_needs_zero_steps() {
        let out = plan_text(
            SWAP_DOMAIN,
            "(define (problem p0) (:objects) (:agents A1 A2) (:init (p)) (:goal (and (p) (not (q)))))",
            &PlannerConfig::default(),
        );
        let PlanOutcome::Solved(plan, _) = out else { panic!("expected a plan, got {out:?}") };
        assert!(plan.steps.is_empty());
    }

    #[test]
    fn unachievable_predicate_reports_unsolvable() {
        let out = plan_text(
            SWAP_DOMAIN,
            "(define (problem p) (:objects) (:agents A1 A2) (:init (p)) (:goal (r)))",
            &PlannerConfig::default(),
        );
        assert!(matches!(out, PlanOutcome::Unsolvable(_)), "{out:?}");
    }

    #[test]
    fn step_budget_zero_on_a_nonempty_goal_is_exhausted() {
        let out = plan_text(
            SWAP_DOMAIN,
            SWAP_PROBLEM,
            &PlannerConfig { max_steps: 0, ..Default::default() },
        );
        assert!(matches!(out, PlanOutcome::Exhausted(_)), "{out:?}");
    }

    #[test]
    fn required_concurrency_spawns_a_distinct_agent_partner() {
        let out = plan_text(
            "(define (domain d) (define (operator mt) :parameters (?a1 ?r1) \
             :precondition (at ?a1 ?r1) \
             :concurrent (and (mt ?a2 ?r1) (not (= ?a1 ?a2))) \
             :effect (moved ?r1)))",
            "(define (problem p) (:objects R1 - room) (:agents A1 A2) \
             (:init (at A1 R1) (at A2 R1)) (:goal (moved R1)))",
            &PlannerConfig::default(),
        );
        let PlanOutcome::Solved(plan, _) = out else { panic!("expected a plan, got {out:?}") };
        assert_eq!(plan.steps.len(), 2);
        let (a, b) = (plan.steps[0].id, plan.steps[1].id);
        assert_eq!(plan.orderings.rel(a, b), ordering::EQ);
    }

    #[test]
    fn required_concurrency_fails_when_only_one_agent_exists() {
        let out = plan_text(
            "(define (domain d) (define (operator mt) :parameters (?a1 ?r1) \
             :precondition (at ?a1 ?r1) \
             :concurrent (and (mt ?a2 ?r1) (not (= ?a1 ?a2))) \
             :effect (moved ?r1)))",
            "(define (problem p) (:objects R1 - room) (:agents A1) \
             (:init (at A1 R1)) (:goal (moved R1)))",
            &PlannerConfig::default(),
        );
        assert!(matches!(out, PlanOutcome::Unsolvable(_)), "{out:?}");
    }

    #[test]
    fn forbidden_concurrency_forces_nonconcurrent_execution() {
        let out = plan_text(
            "(define (domain d) \
             (define (operator opa) :parameters (?g) :concurrent (not (opb ?h)) :effect (x)) \
             (define (operator opb) :parameters (?g) :effect (y)))",
            "(define (problem p) (:objects) (:agents A1 A2) (:init) (:goal (and (x) (y))))",
            &PlannerConfig::default(),
        );
        let PlanOutcome::Solved(plan, _) = out else { panic!("expected a plan, got {out:?}") };
        let a = plan.steps.iter().find(|s| s.name == "opa").unwrap().id;
        let b = plan.steps.iter().find(|s| s.name == "opb").unwrap().id;
        let rel = plan.orderings.rel(a, b);
        assert_eq!(rel & ordering::EQ, 0, "opa and opb may still coincide: {rel:#b}");
    }

    #[test]
    fn closed_world_link_is_protected_against_init_atoms() {
        let out = plan_text(
            "(define (domain d) \
             (define (operator free) :parameters (?g ?x) :precondition (busy ?x) \
              :effect (and (not (busy ?x)) (done ?x))) \
             (define (operator check) :parameters (?g ?x) :precondition (not (busy ?x)) \
              :effect (ok ?x)))",
            "(define (problem p) (:objects B - thing) (:agents A1) \
             (:init (busy B)) (:goal (ok B)))",
            &PlannerConfig::default(),
        );
        let PlanOutcome::Solved(plan, _) = out else { panic!("expected a plan, got {out:?}") };
        let f = plan.steps.iter().find(|s| s.name == "free").unwrap().id;
        let c = plan.steps.iter().find(|s| s.name == "check").unwrap().id;
        assert_eq!(plan.orderings.rel(f, c), ordering::LT);
    }
}
