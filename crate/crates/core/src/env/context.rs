use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for simplex membership of contexts.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// A context vector observed at the start of an episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Context(Vec<f64>);

impl Context {
    pub fn new(coords: Vec<f64>) -> Self {
        Self(coords)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Euclidean distance.
    pub fn distance(&self, other: &Context) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_on_simplex(&self) -> bool {
        self.0.iter().all(|&x| x >= -SIMPLEX_TOLERANCE)
            && (self.0.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_TOLERANCE
    }

    pub fn basis(dim: usize, i: usize) -> Self {
        let mut coords = vec![0.0; dim];
        coords[i] = 1.0;
        Self(coords)
    }
}

impl From<Vec<f64>> for Context {
    fn from(coords: Vec<f64>) -> Self {
        Self(coords)
    }
}

/// Bounded context spaces, always with the Euclidean metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ContextSpace {
    /// Axis-aligned box `[lower, upper]^dim`.
    Box { dim: usize, lower: f64, upper: f64 },
    /// Probability simplex in `R^dim`.
    Simplex { dim: usize },
}

impl ContextSpace {
    pub fn unit_box(dim: usize) -> Self {
        ContextSpace::Box {
            dim,
            lower: 0.0,
            upper: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        match *self {
            ContextSpace::Box { dim, .. } | ContextSpace::Simplex { dim } => dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ContextSpace::Box { dim, lower, upper } => {
                if dim == 0 || !(lower < upper) || !lower.is_finite() || !upper.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "bad box space dim={dim} [{lower}, {upper}]"
                    )));
                }
            }
            ContextSpace::Simplex { dim } => {
                if dim == 0 {
                    return Err(Error::InvalidParameter("simplex dimension must be positive".into()));
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, c: &Context) -> bool {
        if c.dim() != self.dim() {
            return false;
        }
        match *self {
            ContextSpace::Box { lower, upper, .. } => c
                .coords()
                .iter()
                .all(|&x| x >= lower - 1e-12 && x <= upper + 1e-12),
            ContextSpace::Simplex { .. } => c.is_on_simplex(),
        }
    }

    pub fn check(&self, c: &Context) -> Result<()> {
        if self.contains(c) {
            Ok(())
        } else if matches!(self, ContextSpace::Simplex { .. }) {
            Err(Error::OffSimplex(format!("{:?}", c.coords())))
        } else {
            Err(Error::OutOfSpace(format!("{:?}", c.coords())))
        }
    }

    pub fn diameter(&self) -> f64 {
        match *self {
            ContextSpace::Box { dim, lower, upper } => (upper - lower) * (dim as f64).sqrt(),
            ContextSpace::Simplex { dim } => {
                if dim > 1 {
                    std::f64::consts::SQRT_2
                } else {
                    0.0
                }
            }
        }
    }

    /// Bound on `||c||_2` over the space.
    pub fn norm_bound(&self) -> f64 {
        match *self {
            ContextSpace::Box { dim, lower, upper } => lower.abs().max(upper.abs()) * (dim as f64).sqrt(),
            ContextSpace::Simplex { .. } => 1.0,
        }
    }

    /// Uniform draw (Lebesgue on the box, flat Dirichlet on the simplex).
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Context {
        match *self {
            ContextSpace::Box { dim, lower, upper } => {
                Context((0..dim).map(|_| rng.random_range(lower..=upper)).collect())
            }
            ContextSpace::Simplex { dim } => {
                let raw: Vec<f64> = (0..dim)
                    .map(|_| -(1.0 - rng.random::<f64>()).ln())
                    .collect();
                let total: f64 = raw.iter().sum();
                Context(raw.into_iter().map(|x| x / total).collect())
            }
        }
    }

    /// Deterministic grid of candidate points with spacing at most `step`
    /// along each axis, capped at roughly `max_points` points.
    pub fn grid(&self, step: f64, max_points: usize) -> Vec<Context> {
        match *self {
            ContextSpace::Box { dim, lower, upper } => {
                let mut per_axis = ((upper - lower) / step).ceil().max(1.0) as usize + 1;
                while per_axis > 2 && (per_axis as f64).powi(dim as i32) > max_points as f64 {
                    per_axis -= 1;
                }
                let ticks: Vec<f64> = (0..per_axis)
                    .map(|i| lower + (upper - lower) * i as f64 / (per_axis - 1) as f64)
                    .collect();
                let total = per_axis.pow(dim as u32);
                (0..total)
                    .map(|mut code| {
                        // first coordinate varies slowest
                        let mut coords = vec![0.0; dim];
                        for k in (0..dim).rev() {
                            coords[k] = ticks[code % per_axis];
                            code /= per_axis;
                        }
                        Context(coords)
                    })
                    .collect()
            }
            ContextSpace::Simplex { dim } => {
                let mut parts = ((std::f64::consts::SQRT_2 / step).ceil().max(1.0)) as usize;
                while parts > 1 && binomial(parts + dim - 1, dim - 1) > max_points as f64 {
                    parts -= 1;
                }
                let mut out = Vec::new();
                let mut current = vec![0usize; dim];
                compositions(parts, 0, &mut current, &mut out);
                out.into_iter()
                    .map(|counts| Context(counts.into_iter().map(|k| k as f64 / parts as f64).collect()))
                    .collect()
            }
        }
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// All ways to write `remaining` as an ordered sum over `current[pos..]`,
/// largest leading part first.
fn compositions(remaining: usize, pos: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if pos + 1 == current.len() {
        current[pos] = remaining;
        out.push(current.clone());
        return;
    }
    for k in (0..=remaining).rev() {
        current[pos] = k;
        compositions(remaining - k, pos + 1, current, out);
    }
}
