//! Cover-Rmax estimator: an online greedy cover of the context space with
//! per-ball empirical models.
//!
//! Contexts are assigned to the nearest existing center within `r0`; a
//! context with no such center becomes a new center. Each ball pools the
//! transitions observed under all of its contexts, and `(s, a)` is known in a
//! ball once it has `m` samples there.

use std::collections::HashMap;

use serde::{Deserialize, Deserializer, Serialize};

use crate::env::Context;
use crate::error::{Error, Result};
use crate::rmax::{Estimator, Prediction};

/// `r0 = min(eps / (8 H L_p), eps / (8 L_r))`, with a zero constant
/// dropping its term.
pub fn compute_r0(epsilon: f64, horizon: usize, lipschitz_p: f64, lipschitz_r: f64) -> Result<f64> {
    if !(epsilon > 0.0) || horizon == 0 {
        return Err(Error::InvalidParameter(format!(
            "r0 needs epsilon > 0 and H > 0, got epsilon={epsilon}, H={horizon}"
        )));
    }
    if !(lipschitz_p >= 0.0) || !(lipschitz_r >= 0.0) {
        return Err(Error::InvalidParameter("Lipschitz constants must be nonnegative".into()));
    }
    let term = |denominator: f64| {
        if denominator > 0.0 {
            epsilon / denominator
        } else {
            f64::INFINITY
        }
    };
    Ok(term(8.0 * horizon as f64 * lipschitz_p).min(term(8.0 * lipschitz_r)))
}

/// `128 (S ln 2 + ln(SA / delta)) H^2 / eps^2` before rounding.
pub fn theoretical_m(epsilon: f64, delta: f64, num_states: usize, num_actions: usize, horizon: usize) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon <= 1.0) || !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "m needs epsilon in (0, 1] and delta > 0, got {epsilon}, {delta}"
        )));
    }
    let (s, a, h) = (num_states as f64, num_actions as f64, horizon as f64);
    Ok(128.0 * (s * std::f64::consts::LN_2 + (s * a / delta).ln()) * h * h / (epsilon * epsilon))
}

/// Known-threshold `m`, rounded up.
pub fn compute_m(epsilon: f64, delta: f64, num_states: usize, num_actions: usize, horizon: usize) -> Result<u64> {
    Ok(theoretical_m(epsilon, delta, num_states, num_actions, horizon)?.ceil() as u64)
}

/// Sufficient statistics for one ball.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Context,
    /// `n_j(s, a)`
    pub visits: Vec<u64>,
    /// `n_j(s, a, s')`
    pub transitions: Vec<u64>,
    /// `R_j(s, a)`
    pub reward_sums: Vec<f64>,
}

/// Grid of cells with side `radius` over ball centers. A center within
/// `radius` of a query lies in one of the `3^d` cells around the query's cell.
#[derive(Clone, Debug, Default, PartialEq)]
struct CellIndex {
    side: f64,
    cells: HashMap<Vec<i64>, Vec<usize>>,
}

impl CellIndex {
    fn new(side: f64) -> Self {
        Self {
            side,
            cells: HashMap::new(),
        }
    }

    fn key(&self, c: &Context) -> Vec<i64> {
        c.coords().iter().map(|x| (x / self.side).floor() as i64).collect()
    }

    fn insert(&mut self, c: &Context, ball: usize) {
        let key = self.key(c);
        self.cells.entry(key).or_default().push(ball);
    }

    /// Balls in the neighbouring cells, or `None` when scanning every ball is
    /// cheaper than visiting `3^d` cells.
    fn candidates(&self, c: &Context, num_balls: usize) -> Option<Vec<usize>> {
        let dim = c.dim() as u32;
        let neighbours = 3usize.checked_pow(dim)?;
        if !self.side.is_finite() || neighbours > num_balls {
            return None;
        }
        let base = self.key(c);
        let mut found = Vec::new();
        let mut key = base.clone();
        for code in 0..neighbours {
            let mut rest = code;
            for (k, b) in key.iter_mut().zip(&base) {
                *k = b + (rest % 3) as i64 - 1;
                rest /= 3;
            }
            if let Some(balls) = self.cells.get(&key) {
                found.extend_from_slice(balls);
            }
        }
        Some(found)
    }
}

/// Cover-Rmax estimator state; serializes as a checkpoint snapshot.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoverEstimator {
    num_states: usize,
    num_actions: usize,
    radius: f64,
    threshold: u64,
    balls: Vec<Ball>,
    #[serde(skip)]
    index: CellIndex,
}

#[derive(Deserialize)]
struct Snapshot {
    num_states: usize,
    num_actions: usize,
    radius: f64,
    threshold: u64,
    balls: Vec<Ball>,
}

impl<'de> Deserialize<'de> for CoverEstimator {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let snap = Snapshot::deserialize(deserializer)?;
        let mut cover = CoverEstimator::new(snap.num_states, snap.num_actions, snap.radius, snap.threshold)
            .map_err(serde::de::Error::custom)?;
        for ball in snap.balls {
            cover.index.insert(&ball.center, cover.balls.len());
            cover.balls.push(ball);
        }
        Ok(cover)
    }
}

impl CoverEstimator {
    pub fn new(num_states: usize, num_actions: usize, radius: f64, threshold: u64) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::InvalidParameter("cover estimator needs S, A > 0".into()));
        }
        if !(radius > 0.0) {
            return Err(Error::InvalidParameter(format!("ball radius must be positive, got {radius}")));
        }
        if threshold == 0 {
            return Err(Error::InvalidParameter("known threshold m must be positive".into()));
        }
        Ok(Self {
            num_states,
            num_actions,
            radius,
            threshold,
            balls: Vec::new(),
            index: CellIndex::new(radius),
        })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn threshold(&self) -> u64 {
        self.threshold
    }

    pub fn balls(&self) -> &[Ball] {
        &self.balls
    }

    /// Nearest center within the radius, lowest index on ties.
    pub fn locate(&self, c: &Context) -> Option<usize> {
        let mut best: Option<(f64, usize)> = None;
        let mut consider = |j: usize| {
            let d = self.balls[j].center.distance(c);
            if d <= self.radius && best.is_none_or(|b| (d, j) < b) {
                best = Some((d, j));
            }
        };
        match self.index.candidates(c, self.balls.len()) {
            Some(candidates) => candidates.into_iter().for_each(&mut consider),
            None => (0..self.balls.len()).for_each(&mut consider),
        }
        best.map(|(_, j)| j)
    }

    /// [`CoverEstimator::locate`], opening a new ball centered at `c` if
    /// nothing is within the radius.
    pub fn locate_or_create(&mut self, c: &Context) -> usize {
        if let Some(j) = self.locate(c) {
            return j;
        }
        let (ns, na) = (self.num_states, self.num_actions);
        self.index.insert(c, self.balls.len());
        self.balls.push(Ball {
            center: c.clone(),
            visits: vec![0; ns * na],
            transitions: vec![0; ns * na * ns],
            reward_sums: vec![0.0; ns * na],
        });
        self.balls.len() - 1
    }

    pub fn visits(&self, ball: usize, s: usize, a: usize) -> u64 {
        self.balls[ball].visits[s * self.num_actions + a]
    }

    fn estimate(&self, ball: usize, s: usize, a: usize) -> Option<Prediction> {
        let b = &self.balls[ball];
        let sa = s * self.num_actions + a;
        let n = b.visits[sa];
        if n < self.threshold {
            return None;
        }
        let counts = &b.transitions[sa * self.num_states..(sa + 1) * self.num_states];
        Some(Prediction {
            transition: counts.iter().map(|&k| k as f64 / n as f64).collect(),
            reward: b.reward_sums[sa] / n as f64,
        })
    }
}

impl Estimator for CoverEstimator {
    fn num_states(&self) -> usize {
        self.num_states
    }

    fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn observe_context(&mut self, c: &Context) {
        self.locate_or_create(c);
    }

    fn predict(&self, c: &Context, s: usize, a: usize) -> Option<Prediction> {
        self.locate(c).and_then(|j| self.estimate(j, s, a))
    }

    fn update(&mut self, c: &Context, s: usize, a: usize, s_next: usize, reward: f64) -> bool {
        let j = self.locate_or_create(c);
        let (ns, na) = (self.num_states, self.num_actions);
        let ball = &mut self.balls[j];
        let sa = s * na + a;
        if ball.visits[sa] >= self.threshold {
            return false;
        }
        ball.visits[sa] += 1;
        ball.transitions[sa * ns + s_next] += 1;
        ball.reward_sums[sa] += reward;
        true
    }

    fn counter_scope(&self, c: &Context) -> usize {
        self.locate(c).unwrap_or(self.balls.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(x: f64) -> Context {
        Context::new(vec![x])
    }

    #[test]
    fn r0_examples() {
        assert!((compute_r0(0.8, 10, 1.0, 1.0).unwrap() - 0.01).abs() < 1e-15);
        assert!((compute_r0(0.8, 10, 0.0, 1.0).unwrap() - 0.1).abs() < 1e-15);
        assert!((compute_r0(0.08, 1, 2.0, 1.0).unwrap() - 0.005).abs() < 1e-15);
        assert_eq!(compute_r0(0.1, 5, 0.0, 0.0).unwrap(), f64::INFINITY);
        assert!(compute_r0(0.0, 5, 1.0, 1.0).is_err());
        assert!(compute_r0(0.1, 5, -1.0, 1.0).is_err());
    }

    #[test]
    fn m_examples() {
        assert_eq!(compute_m(1.0, 4.0 / std::f64::consts::E, 2, 2, 1).unwrap(), 306);
        let base = theoretical_m(0.3, 0.2, 4, 3, 3).unwrap();
        let doubled = theoretical_m(0.3, 0.2, 4, 3, 6).unwrap();
        assert!((doubled / base - 4.0).abs() < 1e-12);
        assert_eq!(compute_m(0.1, 0.1, 5, 2, 5).unwrap(), 2_582_690);
        assert!(compute_m(0.0, 0.1, 5, 2, 5).is_err());
        assert!(compute_m(0.1, 0.0, 5, 2, 5).is_err());
    }

    #[test]
    fn first_context_opens_ball_zero() {
        let mut cover = CoverEstimator::new(3, 2, 0.1, 4).unwrap();
        assert_eq!(cover.locate(&ctx(0.3)), None);
        assert_eq!(cover.locate_or_create(&ctx(0.3)), 0);
        assert_eq!(cover.locate_or_create(&ctx(0.35)), 0);
        assert_eq!(cover.balls().len(), 1);
    }

    #[test]
    fn grid_gets_one_ball_per_point() {
        let r0 = 0.05;
        let mut cover = CoverEstimator::new(2, 2, r0, 4).unwrap();
        let spacing = 2.0 * r0 + 1e-6;
        for i in 0..9 {
            assert_eq!(cover.locate_or_create(&ctx(i as f64 * spacing)), i);
        }
        assert_eq!(cover.balls().len(), 9);
    }

    #[test]
    fn nearest_center_wins() {
        let mut cover = CoverEstimator::new(2, 2, 0.5, 4).unwrap();
        cover.locate_or_create(&ctx(0.0));
        cover.locate_or_create(&ctx(0.6));
        assert_eq!(cover.locate(&ctx(0.4)), Some(1));
        assert_eq!(cover.locate(&ctx(0.3)), Some(0));
    }

    #[test]
    fn threshold_and_frequencies() {
        let mut cover = CoverEstimator::new(3, 2, 0.1, 4).unwrap();
        let c = ctx(0.0);
        for next in [0, 0, 1] {
            assert!(cover.update(&c, 1, 0, next, 0.5));
        }
        assert_eq!(cover.predict(&c, 1, 0), None);
        assert!(cover.update(&c, 1, 0, 1, 0.5));
        let p = cover.predict(&c, 1, 0).unwrap();
        assert_eq!(p.transition, vec![0.5, 0.5, 0.0]);
        assert!((p.reward - 0.5).abs() < 1e-15);
        // gate closed
        assert!(!cover.update(&c, 1, 0, 2, 0.5));
        assert_eq!(cover.visits(0, 1, 0), 4);
    }

    #[test]
    fn point_mass_estimate() {
        let mut cover = CoverEstimator::new(3, 1, 0.1, 5).unwrap();
        let c = ctx(0.2);
        for _ in 0..5 {
            cover.update(&c, 0, 0, 2, 1.0);
        }
        assert_eq!(cover.predict(&c, 0, 0).unwrap().transition, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn balls_are_independent() {
        let mut cover = CoverEstimator::new(2, 1, 0.1, 2).unwrap();
        let (a, b) = (ctx(0.0), ctx(0.5));
        cover.observe_context(&b);
        for _ in 0..2 {
            cover.update(&a, 0, 0, 1, 0.0);
        }
        assert!(cover.predict(&a, 0, 0).is_some());
        assert!(cover.predict(&b, 0, 0).is_none());
        assert_eq!(cover.visits(cover.locate(&b).unwrap(), 0, 0), 0);
    }

    #[test]
    fn indexed_lookup_matches_scan() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut cover = CoverEstimator::new(1, 1, 0.07, 1).unwrap();
        let point = |rng: &mut rand_chacha::ChaCha8Rng| Context::new(vec![rng.random(), rng.random()]);
        for _ in 0..400 {
            cover.observe_context(&point(&mut rng));
        }
        assert!(cover.balls().len() > 9);
        for _ in 0..2000 {
            let c = point(&mut rng);
            let scan = cover
                .balls()
                .iter()
                .enumerate()
                .map(|(j, b)| (b.center.distance(&c), j))
                .filter(|&(d, _)| d <= 0.07)
                .fold(None, |best: Option<(f64, usize)>, x| Some(best.map_or(x, |b| if x < b { x } else { b })))
                .map(|(_, j)| j);
            assert_eq!(cover.locate(&c), scan);
        }
    }

    #[test]
    fn snapshot_roundtrip() {
        let mut cover = CoverEstimator::new(2, 2, 0.1, 3).unwrap();
        cover.update(&ctx(0.1), 1, 1, 0, 0.25);
        let json = serde_json::to_string(&cover).unwrap();
        let back: CoverEstimator = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cover);
    }
}
