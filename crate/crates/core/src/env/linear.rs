use rand::Rng;
use serde::{Deserialize, Serialize};

use super::context::{Context, ContextSpace};
use crate::error::{Error, Result};
use crate::mdp::{l1_distance, random_mdp, TabularMdp};

/// A CMDP whose parameters are the context-weighted mixture of `d` base MDPs:
/// `p^c(s'|s,a) = sum_i c_i p_i(s'|s,a)` and `r^c(s,a) = sum_i c_i r_i(s,a)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearCmdp {
    bases: Vec<TabularMdp>,
}

impl LinearCmdp {
    /// Bases must share `(S, A, H, initial distribution)`.
    pub fn new(bases: Vec<TabularMdp>) -> Result<Self> {
        let first = bases
            .first()
            .ok_or_else(|| Error::InvalidParameter("linear CMDP needs at least one base MDP".into()))?;
        for (i, b) in bases.iter().enumerate().skip(1) {
            if b.num_states() != first.num_states()
                || b.num_actions() != first.num_actions()
                || b.horizon() != first.horizon()
            {
                return Err(Error::InvalidParameter(format!("base MDP {i} has a different shape")));
            }
            if l1_distance(b.initial(), first.initial()) > 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "base MDP {i} has a different initial distribution"
                )));
            }
        }
        Ok(Self { bases })
    }

    /// `dim` random bases with Dirichlet(`concentration`) rows, sharing a
    /// uniform initial distribution.
    pub fn random<R: Rng + ?Sized>(
        dim: usize,
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        concentration: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let bases = (0..dim)
            .map(|_| random_mdp(num_states, num_actions, horizon, concentration, None, rng))
            .collect::<Result<Vec<_>>>()?;
        Self::new(bases)
    }

    pub fn dim(&self) -> usize {
        self.bases.len()
    }

    pub fn bases(&self) -> &[TabularMdp] {
        &self.bases
    }

    pub fn space(&self) -> ContextSpace {
        ContextSpace::Simplex { dim: self.dim() }
    }

    pub fn template(&self) -> &TabularMdp {
        &self.bases[0]
    }

    /// True mixture row `p^c(.|s,a)`.
    pub fn transition_row(&self, c: &Context, s: usize, a: usize) -> Vec<f64> {
        let mut row = vec![0.0; self.template().num_states()];
        for (w, base) in c.coords().iter().zip(&self.bases) {
            for (r, p) in row.iter_mut().zip(base.transition_row(s, a)) {
                *r += w * p;
            }
        }
        row
    }

    pub fn reward(&self, c: &Context, s: usize, a: usize) -> f64 {
        c.coords()
            .iter()
            .zip(&self.bases)
            .map(|(w, base)| w * base.reward(s, a))
            .sum()
    }

    /// The MDP for context `c`, which must lie on the simplex.
    pub fn instantiate(&self, c: &Context) -> Result<TabularMdp> {
        if c.dim() != self.dim() {
            return Err(Error::OffSimplex(format!(
                "context has dimension {}, expected {}",
                c.dim(),
                self.dim()
            )));
        }
        self.space().check(c)?;
        let t = self.template();
        let (ns, na) = (t.num_states(), t.num_actions());
        let mut transitions = Vec::with_capacity(ns * na * ns);
        let mut rewards = Vec::with_capacity(ns * na);
        for s in 0..ns {
            for a in 0..na {
                transitions.extend(self.transition_row(c, s, a));
                rewards.push(self.reward(c, s, a).clamp(0.0, 1.0));
            }
        }
        TabularMdp::from_flat(ns, na, t.horizon(), transitions, rewards, t.initial().to_vec())
    }

    /// Lipschitz bounds `(L_p, L_r)` w.r.t. the Euclidean metric on the
    /// simplex. For `c1 - c2 = delta` (which sums to zero), the mixture gap
    /// is at most `||delta||_1 / 2` times the largest pairwise base gap, and
    /// `||delta||_1 <= sqrt(d) ||delta||_2`.
    pub fn lipschitz(&self) -> (f64, f64) {
        let t = self.template();
        let mut max_p: f64 = 0.0;
        let mut max_r: f64 = 0.0;
        for s in 0..t.num_states() {
            for a in 0..t.num_actions() {
                for (i, bi) in self.bases.iter().enumerate() {
                    for bj in &self.bases[i + 1..] {
                        max_p = max_p.max(l1_distance(bi.transition_row(s, a), bj.transition_row(s, a)));
                        max_r = max_r.max((bi.reward(s, a) - bj.reward(s, a)).abs());
                    }
                }
            }
        }
        let scale = (self.dim() as f64).sqrt() / 2.0;
        (scale * max_p, scale * max_r)
    }
}
