//! Seeded numerical check batteries for the planning, estimation and
//! environment layers.
//!
//! Each suite draws its instances from a fixed seed and evaluates both sides
//! of the property it checks exactly. A suite fails if any single check
//! fails.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::experiment::stream_rng;
use crate::cover::CoverEstimator;
use crate::env::{build_packing, Context, ContextSpace, HardInstanceCmdp, LinearCmdp, SmoothCmdp};
use crate::error::{Error, Result};
use crate::kwik::{compute_alpha, project_simplex, AlphaParams, KnownnessNorm, KwikBlock, KwikEstimator};
use crate::mdp::{
    brute_force_value, evaluate_policy, l1_distance, plan_optimal, random_distribution, random_mdp, sample_index,
    state_values, Policy, TabularMdp,
};
use crate::rmax::{escape_probability, induce, Estimator};

/// Slack on inequalities between exactly computed values.
pub const SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Dp,
    ShermanMorrison,
    Projection,
    SimulationLemma,
    InducedInequalities,
    EscapeBound,
    HardSmoothness,
    CoverApproximation,
    CoverBalls,
    KwikAccuracy,
}

impl Suite {
    pub const ALL: [Suite; 10] = [
        Suite::Dp,
        Suite::ShermanMorrison,
        Suite::Projection,
        Suite::SimulationLemma,
        Suite::InducedInequalities,
        Suite::EscapeBound,
        Suite::HardSmoothness,
        Suite::CoverApproximation,
        Suite::CoverBalls,
        Suite::KwikAccuracy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Dp => "dp",
            Suite::ShermanMorrison => "sherman-morrison",
            Suite::Projection => "projection",
            Suite::SimulationLemma => "simulation-lemma",
            Suite::InducedInequalities => "induced-inequalities",
            Suite::EscapeBound => "escape-bound",
            Suite::HardSmoothness => "hard-smoothness",
            Suite::CoverApproximation => "cover-approximation",
            Suite::CoverBalls => "cover-balls",
            Suite::KwikAccuracy => "kwik-accuracy",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown suite {s:?}")))
    }
}

/// Outcome of one suite.
#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: usize,
    pub failures: Vec<String>,
    /// Summary statistics worth printing even on success.
    pub notes: Vec<String>,
}

/// Failures beyond this many are counted but not described.
const MAX_LISTED: usize = 20;

impl SuiteReport {
    fn new(suite: Suite) -> Self {
        Self {
            suite,
            checks: 0,
            failures: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    fn check(&mut self, ok: bool, describe: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            if self.failures.len() < MAX_LISTED {
                self.failures.push(describe());
            } else if self.failures.len() == MAX_LISTED {
                self.failures.push("further failures omitted".into());
            }
        }
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed() { "PASS" } else { "FAIL" };
        write!(f, "{status} {} ({} checks)", self.suite, self.checks)?;
        for note in &self.notes {
            write!(f, "\n  {note}")?;
        }
        for failure in &self.failures {
            write!(f, "\n  failed: {failure}")?;
        }
        Ok(())
    }
}

pub fn run_suite(suite: Suite, seed: u64) -> SuiteReport {
    let mut rng = stream_rng(seed, 100 + suite as u64);
    let mut report = SuiteReport::new(suite);
    let outcome = match suite {
        Suite::Dp => dp(&mut report, &mut rng),
        Suite::ShermanMorrison => sherman_morrison(&mut report, &mut rng),
        Suite::Projection => projection(&mut report, &mut rng),
        Suite::SimulationLemma => simulation_lemma(&mut report, &mut rng),
        Suite::InducedInequalities => induced_inequalities(&mut report, &mut rng),
        Suite::EscapeBound => escape_bound(&mut report, &mut rng),
        Suite::HardSmoothness => hard_smoothness(&mut report, &mut rng),
        Suite::CoverApproximation => cover_approximation(&mut report, &mut rng),
        Suite::CoverBalls => cover_balls(&mut report, &mut rng),
        Suite::KwikAccuracy => kwik_accuracy(&mut report, &KwikAccuracyParams::default(), seed).map(|_| ()),
    };
    if let Err(e) = outcome {
        report.failures.push(format!("suite aborted: {e}"));
    }
    report
}

fn random_policy(rng: &mut ChaCha8Rng, horizon: usize, num_states: usize, num_actions: usize) -> Policy {
    Policy::from_fn(horizon, num_states, |_, _| rng.random_range(0..num_actions))
}

fn small_mdp(rng: &mut ChaCha8Rng, max_s: usize, max_a: usize, max_h: usize) -> Result<TabularMdp> {
    let ns = rng.random_range(1..=max_s);
    let na = rng.random_range(1..=max_a);
    let h = rng.random_range(1..=max_h);
    let initial = random_distribution(ns, 1.0, rng)?;
    random_mdp(ns, na, h, 0.5, Some(initial), rng)
}

fn dp(report: &mut SuiteReport, rng: &mut ChaCha8Rng) -> Result<()> {
    for i in 0..100 {
        let mdp = small_mdp(rng, 4, 3, 4)?;
        let policy = random_policy(rng, mdp.horizon(), mdp.num_states(), mdp.num_actions());
        let forward = evaluate_policy(&mdp, &policy)?;
        let brute = brute_force_value(&mdp, &policy)?;
        report.check((forward - brute).abs() <= 1e-10, || format!("instance {i}: forward {forward} vs enumeration {brute}"));
    }
    for i in 0..20 {
        let mdp = small_mdp(rng, 3, 3, 3)?;
        let plan = plan_optimal(&mdp);
        let mut best = f64::NEG_INFINITY;
        for policy in Policy::enumerate(mdp.horizon(), mdp.num_states(), mdp.num_actions()) {
            best = best.max(evaluate_policy(&mdp, &policy)?);
        }
        report.check(plan.value >= best - 1e-12 && (plan.value - best).abs() <= 1e-10, || {
            format!("instance {i}: planned {} vs best enumerated {best}", plan.value)
        });
    }
    Ok(())
}

fn sherman_morrison(report: &mut SuiteReport, rng: &mut ChaCha8Rng) -> Result<()> {
    let num_states = 3;
    for d in 2..=6 {
        let mut block = KwikBlock::new(d, num_states);
        let mut design = DMatrix::<f64>::identity(d, d);
        let mut w = DMatrix::<f64>::zeros(d, num_states);
        for _ in 0..50 {
            let c: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let s_next = rng.random_range(0..num_states);
            block.absorb(&c, s_next, rng.random());
            let cv = DMatrix::from_column_slice(d, 1, &c);
            design += &cv * cv.transpose();
            for i in 0..d {
                w[(i, s_next)] += c[i];
            }
        }
        let direct = design.try_inverse().ok_or_else(|| Error::InvalidParameter("singular design".into()))?;
        let worst = (0..d * d)
            .map(|k| (block.q()[k] - direct[(k / d, k % d)]).abs())
            .fold(0.0, f64::max);
        report.check(worst <= 1e-8, || format!("d={d}: max |Q - inverse| = {worst:e}"));
        let w_err = (0..d * num_states)
            .map(|k| (block.w()[k] - w[(k / num_states, k % num_states)]).abs())
            .fold(0.0, f64::max);
        report.check(w_err <= 1e-12, || format!("d={d}: max |W - sum c y^T| = {w_err:e}"));
        report.notes.push(format!("d={d}: max entry error {worst:.2e}"));
    }
    Ok(())
}

fn projection(report: &mut SuiteReport, rng: &mut ChaCha8Rng) -> Result<()> {
    for _ in 0..1000 {
        let len = rng.random_range(1..=8);
        let p = random_distribution(len, 1.0, rng)?;
        let drift = p
            .iter()
            .zip(project_simplex(&p))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        report.check(drift <= 1e-12, || format!("idempotence drift {drift:e}"));
    }
    for (v, want) in [(vec![2.0, 0.0], vec![1.0, 0.0]), (vec![0.6, 0.6], vec![0.5, 0.5])] {
        let got = project_simplex(&v);
        report.check(l1_distance(&got, &want) <= 1e-12, || format!("{v:?} projected to {got:?}"));
    }
    let mut worst_ratio: f64 = 0.0;
    for _ in 0..10_000 {
        let len = rng.random_range(2..=8);
        let p = random_distribution(len, 1.0, rng)?;
        let noisy: Vec<f64> = p.iter().map(|x| x + rng.random_range(-0.3..0.3)).collect();
        let before = l1_distance(&noisy, &p);
        let after = l1_distance(&project_simplex(&noisy), &p);
        if before > 0.0 {
            worst_ratio = worst_ratio.max(after / before);
        }
        report.check(after <= 2.0 * before + 1e-12, || format!("projection error {after} > 2 x {before}"));
    }
    report.notes.push(format!("worst contraction ratio {worst_ratio:.3}"));
    Ok(())
}

/// `M'`: each row mixed towards a random distribution, rewards jittered.
fn perturb(mdp: &TabularMdp, rng: &mut ChaCha8Rng) -> Result<TabularMdp> {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let mix = rng.random_range(0.0..0.3);
    let jitter = rng.random_range(0.0..0.1);
    let mut transitions = Vec::with_capacity(ns * na * ns);
    let mut rewards = Vec::with_capacity(ns * na);
    for s in 0..ns {
        for a in 0..na {
            let q = random_distribution(ns, 1.0, rng)?;
            transitions.extend(mdp.transition_row(s, a).iter().zip(q).map(|(p, q)| (1.0 - mix) * p + mix * q));
            rewards.push((mdp.reward(s, a) + rng.random_range(-jitter..=jitter)).clamp(0.0, 1.0));
        }
    }
    TabularMdp::from_flat(ns, na, mdp.horizon(), transitions, rewards, mdp.initial().to_vec())
}

fn simulation_lemma(report: &mut SuiteReport, rng: &mut ChaCha8Rng) -> Result<()> {
    for i in 0..200 {
        let m = small_mdp(rng, 4, 3, 5)?;
        let m2 = perturb(&m, rng)?;
        let (e1, e2) = m.max_gaps(&m2);
        let bound = e2 + m.horizon() as f64 * e1;
        let mut policies = vec![plan_optimal(&m).policy, plan_optimal(&m2).policy];
        policies.extend((0..3).map(|_| random_policy(rng, m.horizon(), m.num_states(), m.num_actions())));
        for policy in &policies {
            let (v1, v2) = (state_values(&m, policy)?, state_values(&m2, policy)?);
            let diff = v1.iter().zip(&v2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            report.check(diff <= bound + SLACK, || format!("pair {i}: |dV| = {diff} > {bound}"));
        }
    }
    Ok(())
}

fn random_known_set(rng: &mut ChaCha8Rng, num_states: usize) -> Vec<bool> {
    (0..num_states).map(|_| rng.random_bool(0.5)).collect()
}

fn induced_inequalities(report: &mut SuiteReport, rng: &mut ChaCha8Rng) -> Result<()> {
    for i in 0..200 {
        let m = small_mdp(rng, 4, 3, 5)?;
        let known = random_known_set(rng, m.num_states());
        let mk = induce(&m, &known);
        let mut policies = vec![plan_optimal(&m).policy];
        policies.extend((0..4).map(|_| random_policy(rng, m.horizon(), m.num_states(), m.num_actions())));
        for policy in &policies {
            let (vk, v) = (state_values(&mk, policy)?, state_values(&m, policy)?);
            for s in 0..m.num_states() {
                report.check(vk[s] >= v[s] - SLACK, || {
                    format!("instance {i}, state {s}: induced {} < true {}", vk[s], v[s])
                });
            }
            // the two agree when nothing is unknown
            if known.iter().all(|&k| k) {
                report.check(l1_distance(&vk, &v) <= SLACK, || format!("instance {i}: fully known values differ"));
            }
        }
    }
    Ok(())
}

fn escape_bound(report: &mut SuiteReport, rng: &mut ChaCha8Rng) -> Result<()> {
    for i in 0..200 {
        let m = small_mdp(rng, 4, 3, 5)?;
        let known = random_known_set(rng, m.num_states());
        let induced_policy = plan_optimal(&induce(&m, &known)).policy;
        let achieved = state_values(&m, &induced_policy)?;
        let optimal = plan_optimal(&m).state_values;
        let escape = escape_probability(&m, &induced_policy, &known);
        for s in 0..m.num_states() {
            report.check(achieved[s] >= optimal[s] - escape[s] - SLACK, || {
                format!(
                    "instance {i}, state {s}: {} < {} - escape {}",
                    achieved[s], optimal[s], escape[s]
                )
            });
        }
    }
    Ok(())
}

fn hard_smoothness(report: &mut SuiteReport, rng: &mut ChaCha8Rng) -> Result<()> {
    let gap = 0.05;
    let space = ContextSpace::unit_box(2);
    let packing = build_packing(&space, 8.0 * gap)?;
    let cmdp = HardInstanceCmdp::random(space.clone(), packing.points, 3, gap, 3, 5, rng)?;
    let (n, na) = (cmdp.bandit_states(), cmdp.num_actions());
    let mut worst: f64 = f64::NEG_INFINITY;
    for k in 0..10_000 {
        let c1 = match k % 3 {
            0 => cmdp.packing()[rng.random_range(0..cmdp.packing().len())].clone(),
            _ => space.sample_uniform(rng),
        };
        let c2 = if k % 2 == 0 {
            space.sample_uniform(rng)
        } else {
            // nearby pairs, where the interpolation is steepest
            let coords: Vec<f64> = c1.coords().iter().map(|x| (x + rng.random_range(-0.1..0.1)).clamp(0.0, 1.0)).collect();
            Context::new(coords)
        };
        let (m1, m2) = (cmdp.instantiate(&c1)?, cmdp.instantiate(&c2)?);
        let dist = c1.distance(&c2);
        for i in 1..=n {
            for a in 0..na {
                let gap_l1 = l1_distance(m1.transition_row(i, a), m2.transition_row(i, a));
                worst = worst.max(gap_l1 - dist);
                report.check(gap_l1 <= dist + SLACK, || format!("pair {k}, ({i}, {a}): {gap_l1} > {dist}"));
            }
        }
    }
    report.notes.push(format!("max l1 gap minus distance {worst:.3e}"));
    Ok(())
}

fn cover_approximation(report: &mut SuiteReport, rng: &mut ChaCha8Rng) -> Result<()> {
    let (ns, na, reps, m, r0, delta) = (4, 2, 100, 400u64, 0.02, 0.1);
    let cmdp = SmoothCmdp::random(1, ns, na, 3, 1.0, 1.0, 1.0, rng)?;
    let lp = cmdp.lipschitz().0;
    let tolerance =
        (2.0 * (ns as f64 * std::f64::consts::LN_2 + ((ns * na) as f64 / delta).ln()) / m as f64).sqrt() + 2.0 * lp * r0;
    let mut failures = 0;
    for _ in 0..reps {
        let center = rng.random_range(r0..1.0 - r0);
        let mut cover = CoverEstimator::new(ns, na, r0, m)?;
        // samples are drawn within r0 of the first center, so all land in ball 0
        cover.observe_context(&Context::new(vec![center]));
        for _ in 0..m {
            let c = Context::new(vec![center + rng.random_range(-r0..=r0)]);
            let mdp = cmdp.instantiate(&c)?;
            for s in 0..ns {
                for a in 0..na {
                    let next = sample_index(mdp.transition_row(s, a), rng);
                    cover.update(&c, s, a, next, mdp.reward(s, a));
                }
            }
        }
        let center = Context::new(vec![center]);
        let mut worst: f64 = 0.0;
        for probe in [-r0, 0.0, r0] {
            let truth = cmdp.instantiate(&Context::new(vec![center.coords()[0] + probe]))?;
            for s in 0..ns {
                for a in 0..na {
                    let estimate = cover
                        .predict(&center, s, a)
                        .ok_or_else(|| Error::InvalidParameter("pair unknown after m samples".into()))?;
                    worst = worst.max(l1_distance(&estimate.transition, truth.transition_row(s, a)));
                }
            }
        }
        if worst > tolerance {
            failures += 1;
        }
    }
    let rate = failures as f64 / reps as f64;
    report.check(rate <= delta, || format!("failure rate {rate} > {delta} at tolerance {tolerance:.4}"));
    report.notes.push(format!("m={m}, r0={r0}: tolerance {tolerance:.4}, failure rate {rate}"));
    Ok(())
}

fn cover_balls(report: &mut SuiteReport, rng: &mut ChaCha8Rng) -> Result<()> {
    let space = ContextSpace::unit_box(2);
    let r0 = 0.1;
    let mut cover = CoverEstimator::new(2, 1, r0, 3)?;
    for _ in 0..2000 {
        cover.observe_context(&space.sample_uniform(rng));
    }
    let centers: Vec<&Context> = cover.balls().iter().map(|b| &b.center).collect();
    for (i, p) in centers.iter().enumerate() {
        for q in &centers[i + 1..] {
            let d = p.distance(q);
            report.check(d > r0, || format!("centers {d} apart, radius {r0}"));
        }
    }
    // disjoint r0/2 balls around r0-separated points fit in the enlarged box
    let volume_bound = (1.0 + r0).powi(2) / (std::f64::consts::PI * (r0 / 2.0).powi(2));
    report.check(centers.len() as f64 <= volume_bound, || {
        format!("{} balls exceed the packing bound {volume_bound:.0}", centers.len())
    });
    report.notes.push(format!("{} balls for 2000 contexts at r0={r0}", centers.len()));

    // data stays in its ball
    let before: Vec<_> = (1..cover.balls().len()).map(|j| cover.balls()[j].clone()).collect();
    let first = cover.balls()[0].center.clone();
    for _ in 0..3 {
        cover.update(&first, 0, 0, 1, 0.5);
    }
    let after: Vec<_> = cover.balls()[1..].to_vec();
    report.check(before == after, || "update leaked into other balls".into());
    Ok(())
}

/// Setting of the KWIK accuracy battery.
#[derive(Clone, Debug)]
pub struct KwikAccuracyParams {
    pub dim: usize,
    pub num_states: usize,
    pub num_actions: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub seeds: u64,
    pub calls: usize,
    pub norm: KnownnessNorm,
    /// Defaults to the full theoretical threshold with `b1 = b2 = 1`.
    pub alpha: Option<f64>,
}

impl Default for KwikAccuracyParams {
    fn default() -> Self {
        Self {
            dim: 3,
            num_states: 4,
            num_actions: 2,
            epsilon: 0.1,
            delta: 0.1,
            seeds: 20,
            calls: 50_000,
            norm: KnownnessNorm::L2,
            alpha: None,
        }
    }
}

/// Per-seed result of the KWIK accuracy battery.
#[derive(Clone, Debug, Serialize)]
pub struct KwikSeedOutcome {
    pub seed: u64,
    pub predictions: usize,
    pub unknown: usize,
    pub violations: usize,
    pub max_error: f64,
}

/// Streams uniform simplex contexts and random `(s, a)` at a KWIK estimator
/// (by default the theoretical `alpha`), updating on every unknown answer and
/// scoring every raw prediction against the true row. Passes when at most a
/// `delta` fraction of seeds see any error above `epsilon`.
pub fn kwik_accuracy(report: &mut SuiteReport, params: &KwikAccuracyParams, seed: u64) -> Result<Vec<KwikSeedOutcome>> {
    let alpha = match params.alpha {
        Some(alpha) => alpha,
        None => compute_alpha(&AlphaParams {
            b1: 1.0,
            b2: 1.0,
            epsilon: params.epsilon,
            delta: params.delta,
            dim: params.dim,
            num_states: params.num_states,
        })?,
    };
    let mut outcomes = Vec::new();
    for k in 0..params.seeds {
        let mut rng = stream_rng(seed.wrapping_add(k), 200);
        let cmdp = LinearCmdp::random(params.dim, params.num_states, params.num_actions, 5, 1.0, &mut rng)?;
        let space = cmdp.space();
        let mut estimator = KwikEstimator::new(params.num_states, params.num_actions, params.dim, alpha, params.norm)?;
        let mut outcome = KwikSeedOutcome {
            seed: k,
            predictions: 0,
            unknown: 0,
            violations: 0,
            max_error: 0.0,
        };
        for _ in 0..params.calls {
            let c = space.sample_uniform(&mut rng);
            let s = rng.random_range(0..params.num_states);
            let a = rng.random_range(0..params.num_actions);
            let truth = cmdp.transition_row(&c, s, a);
            match estimator.predict(&c, s, a) {
                Some(p) => {
                    let err = l1_distance(&p.transition, &truth);
                    outcome.predictions += 1;
                    outcome.max_error = outcome.max_error.max(err);
                    if err > params.epsilon {
                        outcome.violations += 1;
                    }
                }
                None => {
                    outcome.unknown += 1;
                    let next = sample_index(&truth, &mut rng);
                    estimator.update(&c, s, a, next, cmdp.reward(&c, s, a));
                }
            }
        }
        outcomes.push(outcome);
    }
    let bad = outcomes.iter().filter(|o| o.violations > 0).count();
    let allowed = (params.delta * params.seeds as f64).floor() as usize;
    report.check(bad <= allowed, || {
        format!("{bad} of {} seeds had errors above {} (allowed {allowed})", params.seeds, params.epsilon)
    });
    let worst = outcomes.iter().map(|o| o.max_error).fold(0.0, f64::max);
    let violations: usize = outcomes.iter().map(|o| o.violations).sum();
    let predictions: usize = outcomes.iter().map(|o| o.predictions).sum();
    report.check(predictions > 0, || "no prediction was ever made".into());
    report.notes.push(format!(
        "alpha={alpha:.5}: {bad}/{} seeds violating, {violations}/{predictions} predictions over epsilon, max l1 error {worst:.4}",
        params.seeds
    ));
    Ok(outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_roundtrip() {
        for suite in Suite::ALL {
            assert_eq!(suite.name().parse::<Suite>().unwrap(), suite);
        }
        assert!("nope".parse::<Suite>().is_err());
    }

    #[test]
    fn report_caps_listed_failures() {
        let mut report = SuiteReport::new(Suite::Dp);
        for _ in 0..30 {
            report.check(false, || "x".into());
        }
        assert_eq!(report.checks, 30);
        assert_eq!(report.failures.len(), MAX_LISTED + 1);
        assert!(!report.passed());
    }
}
