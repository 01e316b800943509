//! KWIK online linear regression with distribution-valued labels.
//!
//! For each `(s, a)` the learner keeps `Q = (I + C^T C)^{-1}` over the
//! contexts `C` it has learned from, `W = sum c y^T` over one-hot next-state
//! labels `y`, and `w_r = sum c r`. A query context `c` is known when
//! `||Q c|| <= alpha`; the prediction is then `c^T Q W` (and `c^T Q w_r` for
//! the reward). Updates happen only on unknown queries.

use serde::{Deserialize, Serialize};

use crate::env::Context;
use crate::error::{Error, Result};
use crate::rmax::{Estimator, Prediction};

/// Norm used in the knownness test `||Q c|| <= alpha`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KnownnessNorm {
    L1,
    #[default]
    L2,
}

impl KnownnessNorm {
    pub fn apply(self, v: &[f64]) -> f64 {
        match self {
            KnownnessNorm::L1 => v.iter().map(|x| x.abs()).sum(),
            KnownnessNorm::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
        }
    }
}

/// Inputs to the knownness threshold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaParams {
    pub b1: f64,
    pub b2: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub dim: usize,
    pub num_states: usize,
}

/// `min{ b1 eps^2 / d^{3/2}, b2 eps^2 / (sqrt(d) (S ln 2 + ln(d / delta))), eps / (2 sqrt(d)) }`.
pub fn compute_alpha(params: &AlphaParams) -> Result<f64> {
    let AlphaParams {
        b1,
        b2,
        epsilon,
        delta,
        dim,
        num_states,
    } = *params;
    if !(epsilon > 0.0 && epsilon < 1.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha needs epsilon, delta in (0, 1), got {epsilon}, {delta}"
        )));
    }
    if !(b1 > 0.0) || !(b2 > 0.0) || dim == 0 || num_states == 0 {
        return Err(Error::InvalidParameter("alpha needs b1, b2 > 0 and d, S >= 1".into()));
    }
    let d = dim as f64;
    let log_term = num_states as f64 * std::f64::consts::LN_2 + (d / delta).ln();
    let eps2 = epsilon * epsilon;
    Ok((b1 * eps2 / d.powf(1.5))
        .min(b2 * eps2 / (d.sqrt() * log_term))
        .min(epsilon / (2.0 * d.sqrt())))
}

/// Euclidean projection onto the probability simplex (sort and threshold).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    if v.is_empty() {
        return Vec::new();
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - 1.0) / (j + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Regression state for one `(s, a)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KwikBlock {
    dim: usize,
    num_states: usize,
    /// `Q`, row-major `d x d`.
    q: Vec<f64>,
    /// `W`, row-major `d x S`.
    w: Vec<f64>,
    /// `w_r`, length `d`.
    w_r: Vec<f64>,
    updates: u64,
}

impl KwikBlock {
    pub fn new(dim: usize, num_states: usize) -> Self {
        let mut q = vec![0.0; dim * dim];
        for i in 0..dim {
            q[i * dim + i] = 1.0;
        }
        Self {
            dim,
            num_states,
            q,
            w: vec![0.0; dim * num_states],
            w_r: vec![0.0; dim],
            updates: 0,
        }
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn w_r(&self) -> &[f64] {
        &self.w_r
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// `Q c`
    pub fn q_times(&self, c: &[f64]) -> Vec<f64> {
        self.q
            .chunks(self.dim)
            .map(|row| row.iter().zip(c).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `(c^T Q W, c^T Q w_r)` from a precomputed `Q c` (`Q` is symmetric).
    fn estimate_from(&self, qc: &[f64]) -> (Vec<f64>, f64) {
        let mut row = vec![0.0; self.num_states];
        for (i, &x) in qc.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            for (r, wv) in row.iter_mut().zip(&self.w[i * self.num_states..(i + 1) * self.num_states]) {
                *r += x * wv;
            }
        }
        let reward = qc.iter().zip(&self.w_r).map(|(a, b)| a * b).sum();
        (row, reward)
    }

    /// Ungated learning step: Sherman-Morrison downdate of `Q` and
    /// accumulation of `c y^T` into `W` and `c r` into `w_r`.
    pub fn absorb(&mut self, c: &[f64], s_next: usize, reward: f64) {
        let qc = self.q_times(c);
        let denom = 1.0 + qc.iter().zip(c).map(|(a, b)| a * b).sum::<f64>();
        let d = self.dim;
        for i in 0..d {
            for j in 0..d {
                self.q[i * d + j] -= qc[i] * qc[j] / denom;
            }
        }
        for (i, &ci) in c.iter().enumerate() {
            self.w[i * self.num_states + s_next] += ci;
            self.w_r[i] += ci * reward;
        }
        self.updates += 1;
    }
}

/// KWIK_LR estimator over all `(s, a)`; serializes as a checkpoint snapshot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KwikEstimator {
    num_states: usize,
    num_actions: usize,
    dim: usize,
    alpha: f64,
    norm: KnownnessNorm,
    blocks: Vec<KwikBlock>,
}

impl KwikEstimator {
    pub fn new(num_states: usize, num_actions: usize, dim: usize, alpha: f64, norm: KnownnessNorm) -> Result<Self> {
        if num_states == 0 || num_actions == 0 || dim == 0 {
            return Err(Error::InvalidParameter("KWIK estimator needs S, A, d > 0".into()));
        }
        if !(alpha > 0.0) {
            return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
        }
        Ok(Self {
            num_states,
            num_actions,
            dim,
            alpha,
            norm,
            blocks: (0..num_states * num_actions)
                .map(|_| KwikBlock::new(dim, num_states))
                .collect(),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn block(&self, s: usize, a: usize) -> &KwikBlock {
        &self.blocks[s * self.num_actions + a]
    }

    /// `||Q(s, a) c||` under the configured norm.
    pub fn uncertainty(&self, c: &Context, s: usize, a: usize) -> f64 {
        self.norm.apply(&self.block(s, a).q_times(c.coords()))
    }

    pub fn is_known(&self, c: &Context, s: usize, a: usize) -> bool {
        self.uncertainty(c, s, a) <= self.alpha
    }

    pub fn total_updates(&self) -> u64 {
        self.blocks.iter().map(KwikBlock::updates).sum()
    }
}

impl Estimator for KwikEstimator {
    fn num_states(&self) -> usize {
        self.num_states
    }

    fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// Raw (unprojected) row `c^T Q W`; the reward is clipped to `[0, 1]`.
    fn predict(&self, c: &Context, s: usize, a: usize) -> Option<Prediction> {
        let block = self.block(s, a);
        let qc = block.q_times(c.coords());
        if self.norm.apply(&qc) > self.alpha {
            return None;
        }
        let (transition, reward) = block.estimate_from(&qc);
        Some(Prediction {
            transition,
            reward: reward.clamp(0.0, 1.0),
        })
    }

    fn planning_prediction(&self, c: &Context, s: usize, a: usize) -> Option<Prediction> {
        self.predict(c, s, a).map(|p| Prediction {
            transition: project_simplex(&p.transition),
            reward: p.reward,
        })
    }

    fn update(&mut self, c: &Context, s: usize, a: usize, s_next: usize, reward: f64) -> bool {
        if self.is_known(c, s, a) {
            return false;
        }
        self.blocks[s * self.num_actions + a].absorb(c.coords(), s_next, reward);
        true
    }
}
