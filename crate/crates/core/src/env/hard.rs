//! Hard episodic instances and the packing-based hard CMDP built from them.
//!
//! State layout for `n` bandit states: `0` is the start state, `1..=n` are
//! bandit states, `n + 1` is the absorbing `+` state (reward 1) and `n + 2`
//! the absorbing `-` state (reward 0). Every action at the start state leads
//! uniformly to a bandit state; bandit actions lead to `+` or `-`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::context::{Context, ContextSpace};
use super::packing::min_pairwise_distance;
use crate::error::{Error, Result};
use crate::mdp::TabularMdp;

/// Index of the `+` state.
pub fn plus_state(bandit_states: usize) -> usize {
    bandit_states + 1
}

/// Index of the `-` state.
pub fn minus_state(bandit_states: usize) -> usize {
    bandit_states + 2
}

/// `p(+ | i, a)` for a single hard instance where bandit state `i` has
/// better action `z_i` (`0` meaning no better action).
pub fn hard_plus_probability(best_action: usize, action: usize, gap: f64) -> f64 {
    if action == 0 {
        0.5 + gap / 2.0
    } else if action == best_action {
        0.5 + gap
    } else {
        0.5
    }
}

fn check_gap(gap: f64) -> Result<()> {
    if !(gap > 0.0 && gap <= 0.5) {
        return Err(Error::InvalidParameter(format!("hard-instance gap must be in (0, 1/2], got {gap}")));
    }
    Ok(())
}

/// Assembles a hard MDP from per-bandit-state `p(+ | i, a)` values.
fn assemble(plus: &[Vec<f64>], num_actions: usize, horizon: usize) -> Result<TabularMdp> {
    let n = plus.len();
    let ns = n + 3;
    let (ps, ms) = (plus_state(n), minus_state(n));
    let mut transitions = vec![0.0; ns * num_actions * ns];
    let mut rewards = vec![0.0; ns * num_actions];
    let idx = |s: usize, a: usize, t: usize| (s * num_actions + a) * ns + t;
    for a in 0..num_actions {
        for i in 1..=n {
            transitions[idx(0, a, i)] = 1.0 / n as f64;
            let p = plus[i - 1][a];
            transitions[idx(i, a, ps)] = p;
            transitions[idx(i, a, ms)] = 1.0 - p;
        }
        transitions[idx(ps, a, ps)] = 1.0;
        transitions[idx(ms, a, ms)] = 1.0;
        rewards[ps * num_actions + a] = 1.0;
    }
    let mut initial = vec![0.0; ns];
    initial[0] = 1.0;
    TabularMdp::from_flat(ns, num_actions, horizon, transitions, rewards, initial)
}

/// The hard episodic MDP for assignment `z` (one entry per bandit state).
pub fn build_hard_mdp(
    assignment: &[usize],
    gap: f64,
    num_actions: usize,
    horizon: usize,
) -> Result<TabularMdp> {
    check_gap(gap)?;
    if assignment.is_empty() {
        return Err(Error::InvalidParameter("need at least one bandit state".into()));
    }
    if let Some(z) = assignment.iter().find(|&&z| z >= num_actions) {
        return Err(Error::InvalidParameter(format!("assignment {z} out of range for A={num_actions}")));
    }
    let plus: Vec<Vec<f64>> = assignment
        .iter()
        .map(|&z| (0..num_actions).map(|a| hard_plus_probability(z, a, gap)).collect())
        .collect();
    assemble(&plus, num_actions, horizon)
}

/// `p_c(+ | i, a) = max_{c' in Z} max(1/2, p_{c'}(+ | i, a) - dist(c, c') / 2)`.
///
/// `assignments[j][i - 1]` is the better action of bandit state `i` at
/// packing point `j`.
pub fn hard_cmdp_transition(
    c: &Context,
    packing: &[Context],
    assignments: &[Vec<usize>],
    gap: f64,
    bandit_state: usize,
    action: usize,
) -> f64 {
    packing
        .iter()
        .zip(assignments)
        .map(|(point, z)| {
            let own = hard_plus_probability(z[bandit_state - 1], action, gap);
            (own - c.distance(point) / 2.0).max(0.5)
        })
        .fold(0.5, f64::max)
}

/// `epsilon' = 160 H eps e^4 / (H - 2)`.
pub fn epsilon_prime(epsilon: f64, horizon: usize) -> Result<f64> {
    if horizon < 3 {
        return Err(Error::InvalidParameter(format!("horizon must be at least 3, got {horizon}")));
    }
    let h = horizon as f64;
    Ok(160.0 * h * epsilon * 4f64.exp() / (h - 2.0))
}

/// `epsilon_1 = 8 epsilon'`, the packing radius of the hard CMDP.
pub fn epsilon_one(epsilon: f64, horizon: usize) -> Result<f64> {
    Ok(8.0 * epsilon_prime(epsilon, horizon)?)
}

/// Packing points carrying independently chosen hard instances, with the
/// interpolation rule above everywhere else.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HardInstanceCmdp {
    space: ContextSpace,
    packing: Vec<Context>,
    /// `[point][bandit_state - 1]`
    assignments: Vec<Vec<usize>>,
    gap: f64,
    bandit_states: usize,
    num_actions: usize,
    horizon: usize,
}

impl HardInstanceCmdp {
    pub fn new(
        space: ContextSpace,
        packing: Vec<Context>,
        assignments: Vec<Vec<usize>>,
        gap: f64,
        num_actions: usize,
        horizon: usize,
    ) -> Result<Self> {
        space.validate()?;
        check_gap(gap)?;
        if packing.is_empty() || packing.len() != assignments.len() {
            return Err(Error::InvalidParameter("need one assignment per packing point".into()));
        }
        let bandit_states = assignments[0].len();
        if bandit_states == 0 || assignments.iter().any(|z| z.len() != bandit_states) {
            return Err(Error::InvalidParameter("ragged assignments".into()));
        }
        if assignments.iter().flatten().any(|&z| z >= num_actions) {
            return Err(Error::InvalidParameter("assignment out of action range".into()));
        }
        for c in &packing {
            space.check(c)?;
        }
        let separation = min_pairwise_distance(&packing);
        if separation < 8.0 * gap - 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "packing points {separation} apart, need at least 8 * gap = {}",
                8.0 * gap
            )));
        }
        Ok(Self {
            space,
            packing,
            assignments,
            gap,
            bandit_states,
            num_actions,
            horizon,
        })
    }

    /// Draws every assignment `z_i` uniformly from `0..num_actions`,
    /// independently per packing point and bandit state.
    pub fn random<R: Rng + ?Sized>(
        space: ContextSpace,
        packing: Vec<Context>,
        bandit_states: usize,
        gap: f64,
        num_actions: usize,
        horizon: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let assignments = packing
            .iter()
            .map(|_| (0..bandit_states).map(|_| rng.random_range(0..num_actions)).collect())
            .collect();
        Self::new(space, packing, assignments, gap, num_actions, horizon)
    }

    pub fn space(&self) -> &ContextSpace {
        &self.space
    }

    pub fn packing(&self) -> &[Context] {
        &self.packing
    }

    pub fn assignments(&self) -> &[Vec<usize>] {
        &self.assignments
    }

    pub fn gap(&self) -> f64 {
        self.gap
    }

    pub fn bandit_states(&self) -> usize {
        self.bandit_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn plus_probability(&self, c: &Context, bandit_state: usize, action: usize) -> f64 {
        hard_cmdp_transition(c, &self.packing, &self.assignments, self.gap, bandit_state, action)
    }

    pub fn instantiate(&self, c: &Context) -> Result<TabularMdp> {
        self.space.check(c)?;
        let plus: Vec<Vec<f64>> = (1..=self.bandit_states)
            .map(|i| (0..self.num_actions).map(|a| self.plus_probability(c, i, a)).collect())
            .collect();
        assemble(&plus, self.num_actions, self.horizon)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{brute_force_value, plan_optimal};

    #[test]
    fn figure_probabilities() {
        let mdp = build_hard_mdp(&[2], 0.1, 3, 4).unwrap();
        let probs: Vec<f64> = (0..3).map(|a| mdp.transition_row(1, a)[plus_state(1)]).collect();
        for (p, expected) in probs.iter().zip([0.55, 0.5, 0.6]) {
            assert!((p - expected).abs() < 1e-12);
        }
        let none = build_hard_mdp(&[0], 0.1, 3, 4).unwrap();
        let probs: Vec<f64> = (0..3).map(|a| none.transition_row(1, a)[plus_state(1)]).collect();
        for (p, expected) in probs.iter().zip([0.55, 0.5, 0.5]) {
            assert!((p - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn start_state_spreads_uniformly() {
        let mdp = build_hard_mdp(&[1, 0, 2], 0.2, 3, 5).unwrap();
        assert_eq!(mdp.num_states(), 6);
        for a in 0..3 {
            let row = mdp.transition_row(0, a);
            for i in 1..=3 {
                assert!((row[i] - 1.0 / 3.0).abs() < 1e-15);
            }
        }
        assert_eq!(mdp.reward(plus_state(3), 1), 1.0);
        assert_eq!(mdp.reward(minus_state(3), 1), 0.0);
        assert_eq!(mdp.transition_row(minus_state(3), 2)[minus_state(3)], 1.0);
    }

    #[test]
    fn optimal_value_small_instance() {
        let mdp = build_hard_mdp(&[1], 0.1, 2, 4).unwrap();
        let plan = plan_optimal(&mdp);
        assert!((plan.value - 0.3).abs() < 1e-12);
        assert!((brute_force_value(&mdp, &plan.policy).unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn rejects_large_gap() {
        assert!(build_hard_mdp(&[1], 0.6, 2, 4).is_err());
    }

    #[test]
    fn interpolation_examples() {
        let points = vec![Context::new(vec![0.0])];
        // assignment z=1 under gap 0.1 -> p(+|1,a1) = 0.6
        let z = vec![vec![1]];
        let at = |x: f64| hard_cmdp_transition(&Context::new(vec![x]), &points, &z, 0.1, 1, 1);
        assert!((at(0.0) - 0.6).abs() < 1e-12);
        assert!((at(0.1) - 0.55).abs() < 1e-12);
        assert!((at(0.3) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn packing_point_keeps_its_own_instance() {
        let points = vec![Context::new(vec![0.0]), Context::new(vec![1.0])];
        let cmdp = HardInstanceCmdp::new(ContextSpace::unit_box(1), points.clone(), vec![vec![1, 0], vec![0, 1]], 0.1, 2, 4).unwrap();
        let at0 = cmdp.instantiate(&points[0]).unwrap();
        assert_eq!(at0, build_hard_mdp(&[1, 0], 0.1, 2, 4).unwrap());
        let at1 = cmdp.instantiate(&points[1]).unwrap();
        assert_eq!(at1, build_hard_mdp(&[0, 1], 0.1, 2, 4).unwrap());
    }

    #[test]
    fn rejects_dense_packing() {
        let points = vec![Context::new(vec![0.0]), Context::new(vec![0.5])];
        assert!(HardInstanceCmdp::new(ContextSpace::unit_box(1), points, vec![vec![0], vec![0]], 0.1, 2, 4).is_err());
    }

    #[test]
    fn epsilon_constants() {
        for (eps, h) in [(0.01, 3), (1e-4, 10), (0.2, 50)] {
            let ratio = epsilon_one(eps, h).unwrap() / epsilon_prime(eps, h).unwrap();
            assert!((ratio - 8.0).abs() < 1e-12);
        }
        assert!((epsilon_prime(1e-4, 10).unwrap() - 1.091963).abs() < 1e-6);
        let limit = 160.0 * 1e-3 * 4f64.exp();
        assert!((epsilon_prime(1e-3, 1_000_000).unwrap() / limit - 1.0).abs() < 1e-5);
        assert!(epsilon_prime(0.1, 2).is_err());
    }
}
