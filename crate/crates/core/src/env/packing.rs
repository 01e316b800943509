//! Greedy maximal packings of a context space.

use serde::{Deserialize, Serialize};

use super::context::{Context, ContextSpace};
use crate::error::{Error, Result};

/// Candidate-grid budget for [`build_packing`].
const MAX_CANDIDATES: usize = 200_000;

/// A set of points pairwise at least `radius` apart.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Packing {
    pub radius: f64,
    pub points: Vec<Context>,
    /// Smallest pairwise distance among `points` (infinite for one point).
    pub min_pairwise_distance: f64,
    /// Number of candidates scanned.
    pub candidates_scanned: usize,
}

impl Packing {
    /// Recomputes the pairwise certificate.
    pub fn is_valid(&self) -> bool {
        min_pairwise_distance(&self.points) >= self.radius
    }
}

pub fn min_pairwise_distance(points: &[Context]) -> f64 {
    let mut best = f64::INFINITY;
    for (i, p) in points.iter().enumerate() {
        for q in &points[i + 1..] {
            best = best.min(p.distance(q));
        }
    }
    best
}

/// Greedy packing over a deterministic grid of `space` with spacing `radius / 2`.
pub fn build_packing(space: &ContextSpace, radius: f64) -> Result<Packing> {
    space.validate()?;
    if !(radius > 0.0) {
        return Err(Error::InvalidParameter(format!("packing radius must be positive, got {radius}")));
    }
    build_packing_from(space.grid(radius / 2.0, MAX_CANDIDATES), radius)
}

/// Greedy packing over an explicit candidate stream: each candidate is kept
/// iff it is at least `radius` from every point kept so far.
pub fn build_packing_from(candidates: impl IntoIterator<Item = Context>, radius: f64) -> Result<Packing> {
    if !(radius > 0.0) {
        return Err(Error::InvalidParameter(format!("packing radius must be positive, got {radius}")));
    }
    let mut points: Vec<Context> = Vec::new();
    let mut scanned = 0;
    for candidate in candidates {
        scanned += 1;
        if points.iter().all(|p| p.distance(&candidate) >= radius) {
            points.push(candidate);
        }
    }
    let min_pairwise_distance = min_pairwise_distance(&points);
    Ok(Packing {
        radius,
        points,
        min_pairwise_distance,
        candidates_scanned: scanned,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_interval_r06() {
        let packing = build_packing(&ContextSpace::unit_box(1), 0.6).unwrap();
        assert_eq!(packing.points.len(), 2);
        assert_eq!(packing.points[0].coords(), &[0.0]);
        assert!(packing.points[1].coords()[0] >= 0.6);
        assert!(packing.is_valid());
    }

    #[test]
    fn radius_beyond_diameter_gives_one_point() {
        let packing = build_packing(&ContextSpace::unit_box(1), 1.5).unwrap();
        assert_eq!(packing.points.len(), 1);
        let square = build_packing(&ContextSpace::unit_box(2), 1.5).unwrap();
        assert_eq!(square.points.len(), 1);
        assert_eq!(square.min_pairwise_distance, f64::INFINITY);
    }

    #[test]
    fn rejects_nonpositive_radius() {
        assert!(build_packing(&ContextSpace::unit_box(1), 0.0).is_err());
    }

    #[test]
    fn maximal_against_candidates() {
        for space in [ContextSpace::unit_box(2), ContextSpace::Simplex { dim: 3 }] {
            let radius = 0.3;
            let candidates = space.grid(radius / 2.0, MAX_CANDIDATES);
            let packing = build_packing_from(candidates.clone(), radius).unwrap();
            assert!(packing.is_valid());
            for c in &candidates {
                assert!(packing.points.iter().any(|p| p.distance(c) < radius) || packing.points.contains(c));
            }
        }
    }
}
