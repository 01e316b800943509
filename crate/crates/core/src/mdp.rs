//! Finite tabular episodic MDPs: representation, exact planning and
//! evaluation, trajectory enumeration, and simulation.
//!
//! Values are normalized by the horizon, so every value lies in `[0, 1]`:
//! `V = E[(1/H) * sum_{h<H} r(s_h, pi_h(s_h))]` with `s_0 ~ initial`.

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when validating probability vectors at construction.
pub const PROB_TOLERANCE: f64 = 1e-9;

/// Maximum number of length-H paths [`brute_force_value`] will enumerate.
pub const ENUMERATION_LIMIT: f64 = 1e6;

/// A finite MDP with a fixed horizon.
///
/// Transitions are stored flat in `[s][a][s']` order and rewards in `[s][a]`
/// order. Instances are validated on construction and immutable afterwards.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpDocument", into = "MdpDocument")]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    transitions: Vec<f64>,
    rewards: Vec<f64>,
    initial: Vec<f64>,
}

/// Nested on-disk layout of a [`TabularMdp`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MdpDocument {
    pub horizon: usize,
    /// `transitions[s][a][s']`
    pub transitions: Vec<Vec<Vec<f64>>>,
    /// `rewards[s][a]`
    pub rewards: Vec<Vec<f64>>,
    pub initial: Vec<f64>,
}

impl TryFrom<MdpDocument> for TabularMdp {
    type Error = Error;

    fn try_from(doc: MdpDocument) -> Result<Self> {
        TabularMdp::new(doc.horizon, doc.transitions, doc.rewards, doc.initial)
    }
}

impl From<TabularMdp> for MdpDocument {
    fn from(mdp: TabularMdp) -> Self {
        let (ns, na) = (mdp.num_states, mdp.num_actions);
        MdpDocument {
            horizon: mdp.horizon,
            transitions: (0..ns)
                .map(|s| (0..na).map(|a| mdp.transition_row(s, a).to_vec()).collect())
                .collect(),
            rewards: (0..ns)
                .map(|s| (0..na).map(|a| mdp.reward(s, a)).collect())
                .collect(),
            initial: mdp.initial,
        }
    }
}

fn check_distribution(row: &[f64], what: &str) -> Result<()> {
    if let Some(p) = row.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return Err(Error::InvalidMdp(format!("{what} has invalid entry {p}")));
    }
    let total: f64 = row.iter().sum();
    if (total - 1.0).abs() > PROB_TOLERANCE {
        return Err(Error::InvalidMdp(format!("{what} sums to {total}")));
    }
    Ok(())
}

impl TabularMdp {
    /// Builds an MDP from nested tables, validating every invariant.
    pub fn new(
        horizon: usize,
        transitions: Vec<Vec<Vec<f64>>>,
        rewards: Vec<Vec<f64>>,
        initial: Vec<f64>,
    ) -> Result<Self> {
        let num_states = transitions.len();
        let num_actions = transitions.first().map_or(0, Vec::len);
        if transitions.iter().any(|per_s| per_s.len() != num_actions) {
            return Err(Error::InvalidMdp("ragged transition table".into()));
        }
        let flat_t: Vec<f64> = transitions.into_iter().flatten().flatten().collect();
        if rewards.len() != num_states || rewards.iter().any(|r| r.len() != num_actions) {
            return Err(Error::InvalidMdp("reward table shape mismatch".into()));
        }
        let flat_r = rewards.into_iter().flatten().collect();
        Self::from_flat(num_states, num_actions, horizon, flat_t, flat_r, initial)
    }

    /// Builds an MDP from flat `[s][a][s']` transitions and `[s][a]` rewards.
    pub fn from_flat(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        transitions: Vec<f64>,
        rewards: Vec<f64>,
        initial: Vec<f64>,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 || horizon == 0 {
            return Err(Error::InvalidMdp(format!(
                "empty MDP (S={num_states}, A={num_actions}, H={horizon})"
            )));
        }
        if transitions.len() != num_states * num_actions * num_states {
            return Err(Error::InvalidMdp(format!(
                "transition tensor has {} entries, expected {}",
                transitions.len(),
                num_states * num_actions * num_states
            )));
        }
        if rewards.len() != num_states * num_actions {
            return Err(Error::InvalidMdp("reward table shape mismatch".into()));
        }
        if initial.len() != num_states {
            return Err(Error::InvalidMdp("initial distribution length mismatch".into()));
        }
        for (i, row) in transitions.chunks(num_states).enumerate() {
            check_distribution(
                row,
                &format!("p(.|s={}, a={})", i / num_actions, i % num_actions),
            )?;
        }
        if let Some(r) = rewards.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(Error::InvalidMdp(format!("reward {r} outside [0, 1]")));
        }
        check_distribution(&initial, "initial distribution")?;
        Ok(Self {
            num_states,
            num_actions,
            horizon,
            transitions,
            rewards,
            initial,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.num_actions + a) * self.num_states;
        &self.transitions[start..start + self.num_states]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.rewards[s * self.num_actions + a]
    }

    /// Same dynamics and rewards with a different horizon.
    pub fn with_horizon(&self, horizon: usize) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidMdp("horizon must be positive".into()));
        }
        Ok(Self {
            horizon,
            ..self.clone()
        })
    }

    /// Largest `max_{s,a} ||p(.|s,a) - p'(.|s,a)||_1` and
    /// `max_{s,a} |r(s,a) - r'(s,a)|` between two same-shape MDPs.
    pub fn max_gaps(&self, other: &TabularMdp) -> (f64, f64) {
        assert_eq!(self.num_states, other.num_states);
        assert_eq!(self.num_actions, other.num_actions);
        let mut transition_gap: f64 = 0.0;
        let mut reward_gap: f64 = 0.0;
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                transition_gap = transition_gap
                    .max(l1_distance(self.transition_row(s, a), other.transition_row(s, a)));
                reward_gap = reward_gap.max((self.reward(s, a) - other.reward(s, a)).abs());
            }
        }
        (transition_gap, reward_gap)
    }

    /// Samples the initial state.
    pub fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_index(&self.initial, rng)
    }

    /// Takes one step and returns `(next_state, realized_reward)`.
    ///
    /// Rewards are deterministic given `(s, a)`.
    pub fn step<R: Rng + ?Sized>(&self, s: usize, a: usize, rng: &mut R) -> (usize, f64) {
        (sample_index(self.transition_row(s, a), rng), self.reward(s, a))
    }
}

pub fn l1_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum()
}

/// Draws an index from a (possibly slightly unnormalized) probability vector.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let total: f64 = probs.iter().sum();
    let mut u = rng.random::<f64>() * total;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            if u < p {
                return i;
            }
            u -= p;
            last_positive = i;
        }
    }
    last_positive
}

/// A deterministic nonstationary policy: one action per `(h, s)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Policy {
    horizon: usize,
    num_states: usize,
    actions: Vec<usize>,
}

impl Policy {
    /// Builds a policy from an `[h][s]` table.
    pub fn new(table: Vec<Vec<usize>>) -> Result<Self> {
        let horizon = table.len();
        let num_states = table.first().map_or(0, Vec::len);
        if horizon == 0 || num_states == 0 || table.iter().any(|row| row.len() != num_states) {
            return Err(Error::InvalidParameter("policy table must be a nonempty H x S grid".into()));
        }
        Ok(Self {
            horizon,
            num_states,
            actions: table.into_iter().flatten().collect(),
        })
    }

    pub fn from_fn(horizon: usize, num_states: usize, mut f: impl FnMut(usize, usize) -> usize) -> Self {
        let mut actions = Vec::with_capacity(horizon * num_states);
        for h in 0..horizon {
            for s in 0..num_states {
                actions.push(f(h, s));
            }
        }
        Self {
            horizon,
            num_states,
            actions,
        }
    }

    /// The policy that always takes `action`.
    pub fn constant(horizon: usize, num_states: usize, action: usize) -> Self {
        Self::from_fn(horizon, num_states, |_, _| action)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn action(&self, h: usize, s: usize) -> usize {
        self.actions[h * self.num_states + s]
    }

    pub fn set_action(&mut self, h: usize, s: usize, a: usize) {
        self.actions[h * self.num_states + s] = a;
    }

    /// Checks that the policy can act in `mdp`.
    pub fn check_compatible(&self, mdp: &TabularMdp) -> Result<()> {
        if self.horizon != mdp.horizon || self.num_states != mdp.num_states {
            return Err(Error::ShapeMismatch {
                policy_horizon: self.horizon,
                policy_states: self.num_states,
                mdp_horizon: mdp.horizon,
                mdp_states: mdp.num_states,
            });
        }
        if let Some(a) = self.actions.iter().find(|&&a| a >= mdp.num_actions) {
            return Err(Error::InvalidParameter(format!(
                "policy action {a} out of range for A={}",
                mdp.num_actions
            )));
        }
        Ok(())
    }

    /// Enumerates all `A^(H*S)` deterministic policies.
    pub fn enumerate(horizon: usize, num_states: usize, num_actions: usize) -> impl Iterator<Item = Policy> {
        let cells = horizon * num_states;
        let total = (num_actions as u64).pow(cells as u32);
        (0..total).map(move |mut code| {
            let mut actions = Vec::with_capacity(cells);
            for _ in 0..cells {
                actions.push((code % num_actions as u64) as usize);
                code /= num_actions as u64;
            }
            Policy {
                horizon,
                num_states,
                actions,
            }
        })
    }
}

/// Result of finite-horizon backward induction.
#[derive(Clone, Debug)]
pub struct Plan {
    pub policy: Policy,
    /// Optimal normalized value from the initial distribution.
    pub value: f64,
    /// Optimal normalized value when starting in each state at `h = 0`.
    pub state_values: Vec<f64>,
}

/// Optimal nonstationary policy by backward induction.
///
/// Ties go to the lowest action index.
pub fn plan_optimal(mdp: &TabularMdp) -> Plan {
    let (ns, na, horizon) = (mdp.num_states, mdp.num_actions, mdp.horizon);
    let mut policy = Policy::constant(horizon, ns, 0);
    // Unnormalized values-to-go at step h+1.
    let mut next = vec![0.0; ns];
    let mut current = vec![0.0; ns];
    for h in (0..horizon).rev() {
        for s in 0..ns {
            let mut best = f64::NEG_INFINITY;
            let mut best_action = 0;
            for a in 0..na {
                let q = mdp.reward(s, a) + dot(mdp.transition_row(s, a), &next);
                if q > best {
                    best = q;
                    best_action = a;
                }
            }
            current[s] = best;
            policy.set_action(h, s, best_action);
        }
        std::mem::swap(&mut next, &mut current);
    }
    let scale = 1.0 / horizon as f64;
    let state_values: Vec<f64> = next.iter().map(|v| v * scale).collect();
    let value = dot(mdp.initial(), &state_values);
    Plan {
        policy,
        value,
        state_values,
    }
}

/// Exact normalized value of `policy` by propagating the state-occupancy
/// distribution forward from the initial distribution.
pub fn evaluate_policy(mdp: &TabularMdp, policy: &Policy) -> Result<f64> {
    policy.check_compatible(mdp)?;
    let ns = mdp.num_states;
    let mut occupancy = mdp.initial.clone();
    let mut next = vec![0.0; ns];
    let mut total = 0.0;
    for h in 0..mdp.horizon {
        next.iter_mut().for_each(|x| *x = 0.0);
        for s in 0..ns {
            let mass = occupancy[s];
            if mass == 0.0 {
                continue;
            }
            let a = policy.action(h, s);
            total += mass * mdp.reward(s, a);
            for (n, p) in next.iter_mut().zip(mdp.transition_row(s, a)) {
                *n += mass * p;
            }
        }
        std::mem::swap(&mut occupancy, &mut next);
    }
    Ok(total / mdp.horizon as f64)
}

/// Normalized value of `policy` when started in each state at `h = 0`,
/// computed by backward recursion.
pub fn state_values(mdp: &TabularMdp, policy: &Policy) -> Result<Vec<f64>> {
    policy.check_compatible(mdp)?;
    let ns = mdp.num_states;
    let mut next = vec![0.0; ns];
    let mut current = vec![0.0; ns];
    for h in (0..mdp.horizon).rev() {
        for s in 0..ns {
            let a = policy.action(h, s);
            current[s] = mdp.reward(s, a) + dot(mdp.transition_row(s, a), &next);
        }
        std::mem::swap(&mut next, &mut current);
    }
    let scale = 1.0 / mdp.horizon as f64;
    Ok(next.into_iter().map(|v| v * scale).collect())
}

/// Value of `policy` by summing over every length-H state sequence.
///
/// Independent of the dynamic-programming routes; refuses when `S^H`
/// exceeds [`ENUMERATION_LIMIT`].
pub fn brute_force_value(mdp: &TabularMdp, policy: &Policy) -> Result<f64> {
    policy.check_compatible(mdp)?;
    let needed = (mdp.num_states as f64).powi(mdp.horizon as i32);
    if needed > ENUMERATION_LIMIT {
        return Err(Error::EnumerationTooLarge {
            needed,
            limit: ENUMERATION_LIMIT,
        });
    }
    let (ns, horizon) = (mdp.num_states, mdp.horizon);
    let mut path = vec![0usize; horizon];
    let mut total = 0.0;
    // Odometer over all S^H state sequences s_0..s_{H-1}.
    loop {
        let mut prob = mdp.initial[path[0]];
        let mut reward_sum = 0.0;
        for h in 0..horizon {
            if prob == 0.0 {
                break;
            }
            let a = policy.action(h, path[h]);
            reward_sum += mdp.reward(path[h], a);
            if h + 1 < horizon {
                prob *= mdp.transition_row(path[h], a)[path[h + 1]];
            }
        }
        total += prob * reward_sum / horizon as f64;

        let mut pos = horizon;
        loop {
            if pos == 0 {
                return Ok(total);
            }
            pos -= 1;
            path[pos] += 1;
            if path[pos] < ns {
                break;
            }
            path[pos] = 0;
        }
    }
}

/// One realized episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    /// `H + 1` visited states.
    pub states: Vec<usize>,
    /// `H` chosen actions.
    pub actions: Vec<usize>,
    /// `H` realized rewards.
    pub rewards: Vec<f64>,
}

impl EpisodeTrace {
    pub fn with_capacity(horizon: usize) -> Self {
        Self {
            states: Vec::with_capacity(horizon + 1),
            actions: Vec::with_capacity(horizon),
            rewards: Vec::with_capacity(horizon),
        }
    }

    /// Normalized realized return.
    pub fn average_reward(&self) -> f64 {
        if self.rewards.is_empty() {
            return 0.0;
        }
        self.rewards.iter().sum::<f64>() / self.rewards.len() as f64
    }
}

/// Simulates one episode, asking `action_source(h, s)` for each action.
pub fn sample_episode<R, F>(mdp: &TabularMdp, mut action_source: F, rng: &mut R) -> EpisodeTrace
where
    R: Rng + ?Sized,
    F: FnMut(usize, usize) -> usize,
{
    let mut trace = EpisodeTrace::with_capacity(mdp.horizon);
    let mut s = mdp.sample_initial(rng);
    trace.states.push(s);
    for h in 0..mdp.horizon {
        let a = action_source(h, s);
        let (next, r) = mdp.step(s, a, rng);
        trace.actions.push(a);
        trace.rewards.push(r);
        trace.states.push(next);
        s = next;
    }
    trace
}

/// Random MDP with Dirichlet(`concentration`) transition rows, uniform
/// rewards in `[0, 1]`, and the given initial distribution (uniform when
/// `None`).
pub fn random_mdp<R: Rng + ?Sized>(
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    concentration: f64,
    initial: Option<Vec<f64>>,
    rng: &mut R,
) -> Result<TabularMdp> {
    let mut transitions = Vec::with_capacity(num_states * num_actions * num_states);
    for _ in 0..num_states * num_actions {
        transitions.extend(random_distribution(num_states, concentration, rng)?);
    }
    let rewards = (0..num_states * num_actions).map(|_| rng.random::<f64>()).collect();
    let initial = initial.unwrap_or_else(|| vec![1.0 / num_states as f64; num_states]);
    TabularMdp::from_flat(num_states, num_actions, horizon, transitions, rewards, initial)
}

/// A draw from the symmetric Dirichlet distribution.
pub fn random_distribution<R: Rng + ?Sized>(len: usize, concentration: f64, rng: &mut R) -> Result<Vec<f64>> {
    let gamma = Gamma::new(concentration, 1.0)
        .map_err(|e| Error::InvalidParameter(format!("dirichlet concentration {concentration}: {e}")))?;
    loop {
        let raw: Vec<f64> = (0..len).map(|_| gamma.sample(rng)).collect();
        let total: f64 = raw.iter().sum();
        if total > 0.0 && total.is_finite() {
            return Ok(raw.into_iter().map(|x| x / total).collect());
        }
    }
}

pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}
