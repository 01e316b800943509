//! The Rmax exploration template shared by Cover-Rmax and KWIK_LR-Rmax.
//!
//! Each episode the agent queries its estimator for every `(s, a)` under the
//! revealed context, builds the induced MDP (known states keep predicted
//! rows; unknown states self-loop with reward 1), plans once, and then acts:
//! known states follow the induced-optimal policy, unknown states take the
//! least-attempted unknown action and feed the observed transition back to
//! the estimator.

use rand::Rng;

use crate::env::Context;
use crate::mdp::{plan_optimal, EpisodeTrace, Plan, Policy, TabularMdp};

/// A model estimate for one `(s, a)` under one context.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub transition: Vec<f64>,
    pub reward: f64,
}

/// The Initialize / Predict / Update contract of an Rmax estimator.
///
/// Initialization is the implementor's constructor. `predict` must not change
/// state; `update` applies the estimator's own gate and reports whether the
/// sample was absorbed.
pub trait Estimator {
    fn num_states(&self) -> usize;
    fn num_actions(&self) -> usize;

    /// Called once per episode when the context is revealed, before planning.
    fn observe_context(&mut self, _c: &Context) {}

    /// `None` means unknown.
    fn predict(&self, c: &Context, s: usize, a: usize) -> Option<Prediction>;

    /// The prediction in the form consumed by planning. Must be `Some`
    /// exactly when [`Estimator::predict`] is, and return a valid
    /// distribution and a reward in `[0, 1]`.
    fn planning_prediction(&self, c: &Context, s: usize, a: usize) -> Option<Prediction> {
        self.predict(c, s, a)
    }

    fn update(&mut self, c: &Context, s: usize, a: usize, s_next: usize, reward: f64) -> bool;

    /// Which set of balanced-wandering counters applies under `c`.
    fn counter_scope(&self, _c: &Context) -> usize {
        0
    }
}

/// Per-scope `(s, a)` attempt counts for balanced wandering.
#[derive(Clone, Debug, Default)]
pub struct VisitCounters {
    num_states: usize,
    num_actions: usize,
    scopes: Vec<Vec<u64>>,
}

impl VisitCounters {
    pub fn new(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_states,
            num_actions,
            scopes: Vec::new(),
        }
    }

    pub fn get(&self, scope: usize, s: usize, a: usize) -> u64 {
        self.scopes
            .get(scope)
            .map_or(0, |counts| counts[s * self.num_actions + a])
    }

    pub fn increment(&mut self, scope: usize, s: usize, a: usize) {
        if self.scopes.len() <= scope {
            self.scopes
                .resize_with(scope + 1, || vec![0; self.num_states * self.num_actions]);
        }
        self.scopes[scope][s * self.num_actions + a] += 1;
    }

    /// Least-attempted action among `candidates`, lowest index on ties.
    pub fn least_attempted(&self, scope: usize, s: usize, candidates: impl IntoIterator<Item = usize>) -> Option<usize> {
        candidates.into_iter().min_by_key(|&a| (self.get(scope, s, a), a))
    }

    pub fn total(&self) -> u64 {
        self.scopes.iter().flatten().sum()
    }
}

/// An induced MDP together with its known-state set.
#[derive(Clone, Debug)]
pub struct InducedMdp {
    pub mdp: TabularMdp,
    pub known: Vec<bool>,
}

impl InducedMdp {
    pub fn known_count(&self) -> usize {
        self.known.iter().filter(|&&k| k).count()
    }
}

fn optimistic_rows(num_states: usize, num_actions: usize, s: usize, transitions: &mut Vec<f64>, rewards: &mut Vec<f64>) {
    for _ in 0..num_actions {
        let mut row = vec![0.0; num_states];
        row[s] = 1.0;
        transitions.extend(row);
        rewards.push(1.0);
    }
}

/// Builds the induced MDP from estimator predictions under `c`.
///
/// `s` is known iff every action at `s` has a prediction.
pub fn build_induced<E: Estimator + ?Sized>(c: &Context, estimator: &E, horizon: usize) -> InducedMdp {
    let (ns, na) = (estimator.num_states(), estimator.num_actions());
    let mut transitions = Vec::with_capacity(ns * na * ns);
    let mut rewards = Vec::with_capacity(ns * na);
    let mut known = vec![false; ns];
    for (s, is_known) in known.iter_mut().enumerate() {
        let predictions: Option<Vec<Prediction>> = (0..na).map(|a| estimator.planning_prediction(c, s, a)).collect();
        match predictions {
            Some(rows) => {
                *is_known = true;
                for p in rows {
                    transitions.extend(p.transition);
                    rewards.push(p.reward);
                }
            }
            None => optimistic_rows(ns, na, s, &mut transitions, &mut rewards),
        }
    }
    let mdp = TabularMdp::from_flat(ns, na, horizon, transitions, rewards, vec![1.0 / ns as f64; ns])
        .expect("estimators return valid planning rows");
    InducedMdp { mdp, known }
}

/// The induced MDP of a known model: rows of known states are copied,
/// unknown states self-loop with reward 1.
pub fn induce(mdp: &TabularMdp, known: &[bool]) -> TabularMdp {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let mut transitions = Vec::with_capacity(ns * na * ns);
    let mut rewards = Vec::with_capacity(ns * na);
    for s in 0..ns {
        if known[s] {
            for a in 0..na {
                transitions.extend_from_slice(mdp.transition_row(s, a));
                rewards.push(mdp.reward(s, a));
            }
        } else {
            optimistic_rows(ns, na, s, &mut transitions, &mut rewards);
        }
    }
    TabularMdp::from_flat(ns, na, mdp.horizon(), transitions, rewards, mdp.initial().to_vec())
        .expect("induced rows are valid")
}

/// Probability, per start state, that `policy` in `mdp` occupies a state
/// outside `known` at some step `h < H`.
pub fn escape_probability(mdp: &TabularMdp, policy: &Policy, known: &[bool]) -> Vec<f64> {
    let ns = mdp.num_states();
    (0..ns)
        .map(|start| {
            if !known[start] {
                return 1.0;
            }
            let mut mass = vec![0.0; ns];
            mass[start] = 1.0;
            let mut escaped = 0.0;
            for h in 0..mdp.horizon().saturating_sub(1) {
                let mut next = vec![0.0; ns];
                for s in (0..ns).filter(|&s| mass[s] > 0.0) {
                    let row = mdp.transition_row(s, policy.action(h, s));
                    for (t, p) in row.iter().enumerate() {
                        next[t] += mass[s] * p;
                    }
                }
                for t in 0..ns {
                    if !known[t] {
                        escaped += next[t];
                        next[t] = 0.0;
                    }
                }
                mass = next;
            }
            escaped
        })
        .collect()
}

/// What the agent commits to at the start of an episode.
#[derive(Clone, Debug)]
pub struct EpisodePlan {
    pub induced: InducedMdp,
    /// Optimal policy of the induced MDP.
    pub induced_plan: Plan,
    /// Induced-optimal actions on known states, frozen least-attempted
    /// unknown actions elsewhere.
    pub committed: Policy,
    pub scope: usize,
}

#[derive(Clone, Debug)]
pub struct EpisodeOutcome {
    pub trace: EpisodeTrace,
    pub plan: EpisodePlan,
    /// Estimator updates accepted during this episode.
    pub updates: u64,
}

/// An Rmax agent around any [`Estimator`].
#[derive(Clone, Debug)]
pub struct RmaxAgent<E> {
    estimator: E,
    horizon: usize,
    counters: VisitCounters,
    total_updates: u64,
    planning_calls: u64,
}

impl<E: Estimator> RmaxAgent<E> {
    pub fn new(estimator: E, horizon: usize) -> Self {
        let counters = VisitCounters::new(estimator.num_states(), estimator.num_actions());
        Self {
            estimator,
            horizon,
            counters,
            total_updates: 0,
            planning_calls: 0,
        }
    }

    pub fn estimator(&self) -> &E {
        &self.estimator
    }

    pub fn counters(&self) -> &VisitCounters {
        &self.counters
    }

    pub fn total_updates(&self) -> u64 {
        self.total_updates
    }

    /// Number of times the induced MDP has been planned.
    pub fn planning_calls(&self) -> u64 {
        self.planning_calls
    }

    fn unknown_actions(&self, c: &Context, s: usize) -> Vec<usize> {
        (0..self.estimator.num_actions())
            .filter(|&a| self.estimator.predict(c, s, a).is_none())
            .collect()
    }

    /// Reveals `c`, builds the induced MDP, and plans once.
    pub fn plan(&mut self, c: &Context) -> EpisodePlan {
        self.estimator.observe_context(c);
        let induced = build_induced(c, &self.estimator, self.horizon);
        let induced_plan = plan_optimal(&induced.mdp);
        self.planning_calls += 1;
        let scope = self.estimator.counter_scope(c);
        let mut committed = induced_plan.policy.clone();
        for s in (0..induced.known.len()).filter(|&s| !induced.known[s]) {
            if let Some(a) = self.counters.least_attempted(scope, s, self.unknown_actions(c, s)) {
                for h in 0..self.horizon {
                    committed.set_action(h, s, a);
                }
            }
        }
        EpisodePlan {
            induced,
            induced_plan,
            committed,
            scope,
        }
    }

    /// Plans for `c` and runs one episode in `env_mdp`.
    pub fn run_episode<R: Rng + ?Sized>(&mut self, c: &Context, env_mdp: &TabularMdp, rng: &mut R) -> EpisodeOutcome {
        let plan = self.plan(c);
        self.execute(c, plan, env_mdp, rng)
    }

    /// Runs one episode following a plan produced by [`RmaxAgent::plan`].
    ///
    /// The known set stays fixed for the whole episode; only the choice among
    /// unknown actions re-queries the estimator.
    pub fn execute<R: Rng + ?Sized>(
        &mut self,
        c: &Context,
        plan: EpisodePlan,
        env_mdp: &TabularMdp,
        rng: &mut R,
    ) -> EpisodeOutcome {
        let mut trace = EpisodeTrace::with_capacity(self.horizon);
        let mut updates = 0;
        let mut s = env_mdp.sample_initial(rng);
        trace.states.push(s);
        for h in 0..self.horizon {
            let policy_action = plan.induced_plan.policy.action(h, s);
            let wander = if plan.induced.known[s] {
                None
            } else {
                self.counters.least_attempted(plan.scope, s, self.unknown_actions(c, s))
            };
            let a = wander.unwrap_or(policy_action);
            let (next, r) = env_mdp.step(s, a, rng);
            if wander.is_some() {
                self.counters.increment(plan.scope, s, a);
                if self.estimator.update(c, s, a, next, r) {
                    updates += 1;
                }
            }
            trace.actions.push(a);
            trace.rewards.push(r);
            trace.states.push(next);
            s = next;
        }
        self.total_updates += updates;
        EpisodeOutcome { trace, plan, updates }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{random_mdp, state_values};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Estimator that knows a fixed set of states exactly.
    struct Exact {
        mdp: TabularMdp,
        known: Vec<bool>,
        updates: usize,
    }

    impl Estimator for Exact {
        fn num_states(&self) -> usize {
            self.mdp.num_states()
        }
        fn num_actions(&self) -> usize {
            self.mdp.num_actions()
        }
        fn predict(&self, _c: &Context, s: usize, a: usize) -> Option<Prediction> {
            self.known[s].then(|| Prediction {
                transition: self.mdp.transition_row(s, a).to_vec(),
                reward: self.mdp.reward(s, a),
            })
        }
        fn update(&mut self, _c: &Context, _s: usize, _a: usize, _n: usize, _r: f64) -> bool {
            self.updates += 1;
            true
        }
    }

    fn ctx() -> Context {
        Context::new(vec![0.0])
    }

    #[test]
    fn nothing_known_is_fully_optimistic() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mdp = random_mdp(3, 2, 4, 1.0, None, &mut rng).unwrap();
        let est = Exact { mdp, known: vec![false; 3], updates: 0 };
        let induced = build_induced(&ctx(), &est, 4);
        assert_eq!(induced.known_count(), 0);
        assert!((plan_optimal(&induced.mdp).value - 1.0).abs() < 1e-12);
        for s in 0..3 {
            assert_eq!(induced.mdp.transition_row(s, 1)[s], 1.0);
        }
    }

    #[test]
    fn fully_known_recovers_true_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mdp = random_mdp(4, 3, 5, 0.5, None, &mut rng).unwrap();
        let est = Exact { mdp: mdp.clone(), known: vec![true; 4], updates: 0 };
        let induced = build_induced(&ctx(), &est, 5);
        let plan = plan_optimal(&induced.mdp);
        let truth = plan_optimal(&mdp);
        for s in 0..4 {
            assert!((plan.state_values[s] - truth.state_values[s]).abs() < 1e-9);
        }
        let mut agent = RmaxAgent::new(est, 5);
        for _ in 0..10 {
            let out = agent.run_episode(&ctx(), &mdp, &mut rng);
            assert_eq!(out.updates, 0);
        }
        assert_eq!(agent.estimator().updates, 0);
    }

    #[test]
    fn reachable_unknown_state_attracts_planner() {
        // state 0 known with reward 0.2; action 1 moves to unknown state 1.
        let mdp = TabularMdp::new(
            3,
            vec![
                vec![vec![1.0, 0.0], vec![0.0, 1.0]],
                vec![vec![0.0, 1.0], vec![0.0, 1.0]],
            ],
            vec![vec![0.2, 0.0], vec![0.0, 0.0]],
            vec![1.0, 0.0],
        )
        .unwrap();
        let est = Exact { mdp: mdp.clone(), known: vec![true, false], updates: 0 };
        let induced = build_induced(&ctx(), &est, 3);
        let plan = plan_optimal(&induced.mdp);
        assert_eq!(plan.policy.action(0, 0), 1);
        let escape = escape_probability(&mdp, &plan.policy, &induced.known);
        assert!(escape[0] > 0.0);
    }

    #[test]
    fn balanced_wandering_alternates() {
        let mdp = TabularMdp::new(2, vec![vec![vec![1.0]; 2]], vec![vec![0.5; 2]], vec![1.0]).unwrap();
        let est = Exact { mdp: mdp.clone(), known: vec![false], updates: 0 };
        let mut agent = RmaxAgent::new(est, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = agent.run_episode(&ctx(), &mdp, &mut rng);
        assert_eq!(out.trace.actions, vec![0, 1]);
        assert_eq!(out.updates, 2);
        assert_eq!(out.plan.committed.action(1, 0), 0);
    }

    #[test]
    fn plans_once_per_episode() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mdp = random_mdp(3, 2, 4, 1.0, None, &mut rng).unwrap();
        let est = Exact { mdp: mdp.clone(), known: vec![true, false, true], updates: 0 };
        let mut agent = RmaxAgent::new(est, 4);
        for t in 1..=7 {
            agent.run_episode(&ctx(), &mdp, &mut rng);
            assert_eq!(agent.planning_calls(), t);
        }
    }

    #[test]
    fn escape_is_zero_when_all_known() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mdp = random_mdp(3, 2, 4, 1.0, None, &mut rng).unwrap();
        let plan = plan_optimal(&mdp);
        assert_eq!(escape_probability(&mdp, &plan.policy, &[true; 3]), vec![0.0; 3]);
        assert_eq!(escape_probability(&mdp, &plan.policy, &[false, true, true])[0], 1.0);
    }

    #[test]
    fn induced_dominates_true_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..50 {
            let mdp = random_mdp(3, 2, 3, 0.7, None, &mut rng).unwrap();
            let known: Vec<bool> = (0..3).map(|_| rng.random_bool(0.5)).collect();
            let induced = induce(&mdp, &known);
            for policy in Policy::enumerate(3, 3, 2).step_by(7) {
                let vk = state_values(&induced, &policy).unwrap();
                let vm = state_values(&mdp, &policy).unwrap();
                let esc = escape_probability(&mdp, &policy, &known);
                for s in 0..3 {
                    assert!(vk[s] >= vm[s] - 1e-9);
                    assert!(vm[s] >= vk[s] - esc[s] - 1e-9);
                }
            }
        }
    }
}
