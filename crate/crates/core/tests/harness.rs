use cmdp::cover::CoverEstimator;
use cmdp::env::Environment;
use cmdp::harness::experiment::{run_experiment, write_outputs, CHECKPOINT_JSON};
use cmdp::harness::verify::{run_suite, Suite};
use cmdp::harness::{count_suboptimal, AgentKind, ExperimentConfig, Learner};
use proptest::prelude::*;

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml_str(text).unwrap()
}

const HARD: &str = r#"
episodes = 600
epsilon = 0.01
[environment]
family = "hard"
dim = 1
bandit_states = 4
actions = 3
horizon = 5
epsilon_prime = 0.05
[agent]
kind = "random"
"#;

fn with_kind(text: &str, kind: &str) -> ExperimentConfig {
    let mut c = config(text);
    c.agent.kind = match kind {
        "cover" => AgentKind::Cover,
        "kwik" => AgentKind::Kwik,
        "oracle" => AgentKind::Oracle,
        _ => AgentKind::Random,
    };
    c
}

#[test]
fn oracle_agent_is_never_suboptimal() {
    for text in [HARD, SMOOTH, LINEAR] {
        let mut c = with_kind(text, "oracle");
        c.episodes = 300;
        let result = run_experiment(&c).unwrap();
        let gaps = result.gaps();
        assert_eq!(count_suboptimal(&gaps, c.epsilon).count, 0);
        assert!(gaps.iter().all(|g| g.abs() <= 1e-12));
    }
}

#[test]
fn random_agent_on_hard_instance() {
    let c = config(HARD);
    let result = run_experiment(&c).unwrap();
    let Environment::Hard(hard) = &result.environment else {
        panic!("hard family expected")
    };
    let (n, h, gap) = (hard.bandit_states() as f64, c.environment.horizon as f64, 0.05);
    // contexts are the packing points, where each point's own instance holds
    for record in &result.records {
        let point = hard
            .packing()
            .iter()
            .position(|p| p.coords() == record.context.as_slice())
            .expect("context is a packing point");
        let best: f64 = hard.assignments()[point]
            .iter()
            .map(|&z| if z == 0 { 0.5 + gap / 2.0 } else { 0.5 + gap })
            .sum::<f64>()
            / n;
        let v_star = (h - 2.0) / h * best;
        assert!((record.v_star - v_star).abs() < 1e-12, "{} vs {v_star}", record.v_star);
    }
    let fraction = result.summary.suboptimal_rate;
    assert!(fraction > 0.0, "random policy never suboptimal");
    assert!(fraction < 1.0);
}

#[test]
fn hard_cyclic_points_learn_exchangeably() {
    // one ball per packing point: Cover-Rmax learns each point separately
    let mut base = with_kind(HARD, "cover");
    // the largest gap is (H - 2)/H * gap/2 = 0.015, so epsilon sits well below it
    base.epsilon = 0.002;
    base.episodes = 1500;
    base.agent.m = Some(10);
    let seeds = 24;
    let mut per_point: Vec<Vec<f64>> = Vec::new();
    for seed in 0..seeds {
        let mut c = base.clone();
        c.seed = seed;
        let result = run_experiment(&c).unwrap();
        let Environment::Hard(hard) = &result.environment else { unreachable!() };
        let points = hard.packing();
        per_point.resize(points.len(), Vec::new());
        assert_eq!(result.summary.balls, Some(points.len()));
        for (j, p) in points.iter().enumerate() {
            let count = result
                .records
                .iter()
                .filter(|r| r.suboptimal && r.context.as_slice() == p.coords())
                .count();
            per_point[j].push(count as f64);
        }
    }
    let all: Vec<f64> = per_point.iter().flatten().copied().collect();
    let grand = all.iter().sum::<f64>() / all.len() as f64;
    let sd = (all.iter().map(|x| (x - grand).powi(2)).sum::<f64>() / (all.len() - 1) as f64).sqrt();
    assert!(grand > 0.0, "no exploration cost at all");
    for counts in &per_point {
        let mean = counts.iter().sum::<f64>() / counts.len() as f64;
        let z = (mean - grand).abs() / (sd / (seeds as f64).sqrt());
        assert!(z < 4.0, "point mean {mean} vs overall {grand} (z = {z:.2})");
    }
}

const SMOOTH: &str = r#"
episodes = 10000
[environment]
family = "smooth"
dim = 1
[agent]
kind = "cover"
m = 50
[contexts]
mode = "cyclic-permutation"
packing_radius = 0.25
"#;

const LINEAR: &str = r#"
episodes = 10000
[environment]
family = "linear"
dim = 4
[agent]
kind = "kwik"
alpha = 0.025
[contexts]
mode = "iid-uniform"
"#;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    (v[(n - 1) / 2] + v[n / 2]) / 2.0
}

#[test]
fn learning_signal_for_both_agents() {
    for text in [SMOOTH, LINEAR] {
        let (mut first, mut last) = (Vec::new(), Vec::new());
        for seed in 0..10 {
            let mut c = config(text);
            c.seed = seed;
            let s = run_experiment(&c).unwrap().summary;
            assert_eq!(s.window, 500);
            first.push(s.first_window_rate);
            last.push(s.last_window_rate);
        }
        let (f, l) = (median(first), median(last));
        assert!(l < f, "last-5% rate {l} not below first-5% rate {f}");
    }
}

#[test]
fn cover_checkpoint_roundtrip() {
    let mut c = config(SMOOTH);
    c.episodes = 300;
    let result = run_experiment(&c).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_outputs(&result, dir.path(), true).unwrap();
    let restored: CoverEstimator =
        serde_json::from_slice(&std::fs::read(dir.path().join(CHECKPOINT_JSON)).unwrap()).unwrap();
    let Learner::Cover(agent) = &result.learner else { unreachable!() };
    assert_eq!(&restored, agent.estimator());
    assert_eq!(restored.balls().len(), 5);
}

#[test]
fn cover_centers_are_separated_on_iid_contexts() {
    let mut c = config(LINEAR);
    c.agent.kind = AgentKind::Cover;
    c.agent.m = Some(5);
    c.agent.r0 = Some(0.2);
    c.episodes = 500;
    let result = run_experiment(&c).unwrap();
    let Learner::Cover(agent) = &result.learner else { unreachable!() };
    let balls = agent.estimator().balls();
    for (i, a) in balls.iter().enumerate() {
        for b in &balls[i + 1..] {
            assert!(a.center.distance(&b.center) > 0.2);
        }
    }
}

#[test]
fn every_verification_suite_passes() {
    for suite in Suite::ALL {
        let report = run_suite(suite, 0);
        assert!(report.passed(), "{report}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn gaps_are_nonnegative(seed in 0u64..1000, kind in 0usize..4, family in 0usize..3) {
        let text = [SMOOTH, LINEAR, HARD][family];
        let mut c = with_kind(text, ["cover", "kwik", "oracle", "random"][kind]);
        c.seed = seed;
        c.episodes = 200;
        if c.agent.kind == AgentKind::Cover {
            c.agent.m = Some(5);
        }
        if c.agent.kind == AgentKind::Kwik {
            c.agent.alpha = Some(0.05);
        }
        let result = run_experiment(&c).unwrap();
        for r in &result.records {
            prop_assert!(r.gap >= -1e-9, "gap {} at t={}", r.gap, r.t);
            prop_assert_eq!(r.suboptimal, r.gap > c.epsilon);
        }
    }
}
