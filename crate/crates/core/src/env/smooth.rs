use rand::Rng;
use serde::{Deserialize, Serialize};

use super::context::{Context, ContextSpace};
use crate::error::{Error, Result};
use crate::mdp::{l1_distance, random_mdp, TabularMdp};

/// A smooth CMDP over a box: one anchor MDP at the origin plus one per
/// coordinate axis. With `u_k = (c_k - lower) / (upper - lower)`,
///
/// `p^c = p_0 + gamma_p * sum_k (u_k / d) (p_k - p_0)` and likewise for `r^c`
/// with `gamma_r`. Because `sum_k u_k / d <= 1` and `gamma <= 1`, every
/// instantiated row is a convex combination of anchor rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothCmdp {
    space: ContextSpace,
    anchors: Vec<TabularMdp>,
    transition_scale: f64,
    reward_scale: f64,
    lipschitz_p: f64,
    lipschitz_r: f64,
}

impl SmoothCmdp {
    /// Scales the anchor interpolation so the resulting Lipschitz constants
    /// do not exceed `target_lp` / `target_lr`.
    pub fn new(space: ContextSpace, anchors: Vec<TabularMdp>, target_lp: f64, target_lr: f64) -> Result<Self> {
        space.validate()?;
        let ContextSpace::Box { dim, lower, upper } = space else {
            return Err(Error::InvalidParameter("smooth CMDP needs a box context space".into()));
        };
        if anchors.len() != dim + 1 {
            return Err(Error::InvalidParameter(format!(
                "smooth CMDP over {dim} dimensions needs {} anchors, got {}",
                dim + 1,
                anchors.len()
            )));
        }
        if !(target_lp >= 0.0) || !(target_lr >= 0.0) {
            return Err(Error::InvalidParameter("Lipschitz targets must be nonnegative".into()));
        }
        let base = &anchors[0];
        for a in &anchors[1..] {
            if a.num_states() != base.num_states()
                || a.num_actions() != base.num_actions()
                || a.horizon() != base.horizon()
                || l1_distance(a.initial(), base.initial()) > 1e-12
            {
                return Err(Error::InvalidParameter("smooth CMDP anchors must share shape and initial distribution".into()));
            }
        }
        // Per-unit-distance sensitivity along axis k is gap_k / (d * width).
        let denom = dim as f64 * (upper - lower);
        let mut natural_p: f64 = 0.0;
        let mut natural_r: f64 = 0.0;
        for s in 0..base.num_states() {
            for a in 0..base.num_actions() {
                let mut sq_p = 0.0;
                let mut sq_r = 0.0;
                for anchor in &anchors[1..] {
                    let gp = l1_distance(anchor.transition_row(s, a), base.transition_row(s, a));
                    let gr = anchor.reward(s, a) - base.reward(s, a);
                    sq_p += gp * gp;
                    sq_r += gr * gr;
                }
                natural_p = natural_p.max(sq_p.sqrt() / denom);
                natural_r = natural_r.max(sq_r.sqrt() / denom);
            }
        }
        let scale_for = |natural: f64, target: f64| {
            if natural > 0.0 {
                (target / natural).min(1.0)
            } else {
                1.0
            }
        };
        let transition_scale = scale_for(natural_p, target_lp);
        let reward_scale = scale_for(natural_r, target_lr);
        Ok(Self {
            space,
            anchors,
            transition_scale,
            reward_scale,
            lipschitz_p: transition_scale * natural_p,
            lipschitz_r: reward_scale * natural_r,
        })
    }

    /// Random anchors on the unit box.
    #[allow(clippy::too_many_arguments)]
    pub fn random<R: Rng + ?Sized>(
        dim: usize,
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        target_lp: f64,
        target_lr: f64,
        concentration: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let anchors = (0..=dim)
            .map(|_| random_mdp(num_states, num_actions, horizon, concentration, None, rng))
            .collect::<Result<Vec<_>>>()?;
        Self::new(ContextSpace::unit_box(dim), anchors, target_lp, target_lr)
    }

    pub fn space(&self) -> &ContextSpace {
        &self.space
    }

    pub fn anchors(&self) -> &[TabularMdp] {
        &self.anchors
    }

    /// Reported Lipschitz constants `(L_p, L_r)`.
    pub fn lipschitz(&self) -> (f64, f64) {
        (self.lipschitz_p, self.lipschitz_r)
    }

    fn weights(&self, c: &Context) -> Vec<f64> {
        let ContextSpace::Box { dim, lower, upper } = self.space else {
            unreachable!("validated at construction")
        };
        c.coords()
            .iter()
            .map(|&x| ((x - lower) / (upper - lower)).clamp(0.0, 1.0) / dim as f64)
            .collect()
    }

    pub fn instantiate(&self, c: &Context) -> Result<TabularMdp> {
        self.space.check(c)?;
        let weights = self.weights(c);
        let base = &self.anchors[0];
        let (ns, na) = (base.num_states(), base.num_actions());
        let mut transitions = Vec::with_capacity(ns * na * ns);
        let mut rewards = Vec::with_capacity(ns * na);
        for s in 0..ns {
            for a in 0..na {
                let base_row = base.transition_row(s, a);
                let mut row = base_row.to_vec();
                let mut reward = base.reward(s, a);
                for (w, anchor) in weights.iter().zip(&self.anchors[1..]) {
                    let wp = self.transition_scale * w;
                    for ((r, p), p0) in row.iter_mut().zip(anchor.transition_row(s, a)).zip(base_row) {
                        *r += wp * (p - p0);
                    }
                    reward += self.reward_scale * w * (anchor.reward(s, a) - base.reward(s, a));
                }
                row.iter_mut().for_each(|p| *p = p.max(0.0));
                transitions.extend(row);
                rewards.push(reward.clamp(0.0, 1.0));
            }
        }
        TabularMdp::from_flat(ns, na, base.horizon(), transitions, rewards, base.initial().to_vec())
    }
}
