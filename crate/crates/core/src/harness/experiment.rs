//! The online protocol: reveal a context, let the agent commit to a policy
//! and act, then score the committed policy exactly against the optimum.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{AgentKind, ContextMode, EnvironmentFamily, ExperimentConfig};
use super::log::{self, EpisodeRecord};
use crate::cover::{compute_m, compute_r0, theoretical_m, CoverEstimator};
use crate::env::{
    build_packing, epsilon_prime, Context, ContextSequence, ContextSpace, Environment, HardInstanceCmdp, LinearCmdp,
    SmoothCmdp,
};
use crate::error::{Error, Result};
use crate::kwik::{compute_alpha, AlphaParams, KwikEstimator};
use crate::mdp::{evaluate_policy, plan_optimal, Plan, Policy, TabularMdp};
use crate::rmax::RmaxAgent;

/// Independent RNG streams derived from the run seed.
const ENV_STREAM: u64 = 1;
const CONTEXT_STREAM: u64 = 2;
const AGENT_STREAM: u64 = 3;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Builds the environment described by `config`.
pub fn build_environment(config: &ExperimentConfig) -> Result<Environment> {
    let env = &config.environment;
    let mut rng = stream_rng(env.env_seed.unwrap_or(config.seed), ENV_STREAM);
    let built = match env.family {
        EnvironmentFamily::Smooth => Environment::Smooth(SmoothCmdp::random(
            env.dim,
            env.states,
            env.actions,
            env.horizon,
            env.lipschitz_p,
            env.lipschitz_r,
            env.concentration,
            &mut rng,
        )?),
        EnvironmentFamily::Linear => Environment::Linear(LinearCmdp::random(
            env.dim,
            env.states,
            env.actions,
            env.horizon,
            env.concentration,
            &mut rng,
        )?),
        EnvironmentFamily::Hard => {
            let gap = match env.epsilon_prime {
                Some(g) => g,
                None => epsilon_prime(config.epsilon, env.horizon)?,
            };
            if gap > 0.5 {
                return Err(Error::Config(format!(
                    "derived hard-instance gap {gap} exceeds 1/2; set environment.epsilon_prime"
                )));
            }
            let space = ContextSpace::unit_box(env.dim);
            let packing = build_packing(&space, 8.0 * gap)?;
            Environment::Hard(HardInstanceCmdp::random(
                space,
                packing.points,
                env.bandit_states,
                gap,
                env.actions,
                env.horizon,
                &mut rng,
            )?)
        }
        EnvironmentFamily::File => {
            let path = env.path.as_ref().expect("validated");
            let file = File::open(path).map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))?;
            serde_json::from_reader(std::io::BufReader::new(file))
                .map_err(|e| Error::Config(format!("bad environment file {}: {e}", path.display())))?
        }
    };
    Ok(built)
}

/// Resolves the context-sequence section against the environment.
pub fn build_contexts(config: &ExperimentConfig, env: &Environment) -> Result<ContextSequence> {
    let spec = &config.contexts;
    let space = env.space();
    let sequence = match spec.mode {
        ContextMode::CyclicPermutation => {
            let points = match (&spec.points, spec.packing_radius, env) {
                (Some(points), _, _) => points.clone(),
                (None, Some(r), _) => build_packing(&space, r)?.points,
                (None, None, Environment::Hard(hard)) => hard.packing().to_vec(),
                (None, None, _) => {
                    return Err(Error::Config(
                        "cyclic-permutation contexts need contexts.points or contexts.packing_radius".into(),
                    ))
                }
            };
            ContextSequence::CyclicPermutation { points }
        }
        ContextMode::IidUniform => ContextSequence::IidUniform { space: space.clone() },
        ContextMode::FixedList => ContextSequence::FixedList {
            contexts: spec.points.clone().unwrap_or_default(),
        },
        ContextMode::AdversarialScript => ContextSequence::AdversarialScript {
            segments: spec.segments.clone(),
        },
    };
    sequence.validate(&space)?;
    Ok(sequence)
}

/// Theoretical constants next to the values actually used.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub theoretical_m: f64,
    /// `None` when both smoothness constants are zero (a single ball).
    pub theoretical_r0: Option<f64>,
    /// `None` when `epsilon` or `delta` is outside `(0, 1)`.
    pub theoretical_alpha: Option<f64>,
    pub effective_m: u64,
    pub effective_r0: f64,
    pub effective_alpha: Option<f64>,
    pub lipschitz_p: f64,
    pub lipschitz_r: f64,
}

pub fn resolve_constants(config: &ExperimentConfig, env: &Environment) -> Result<Constants> {
    let (ns, na, horizon) = env.shape();
    let (env_lp, env_lr) = env.lipschitz();
    let agent = &config.agent;
    let lipschitz_p = agent.lipschitz_p.unwrap_or(env_lp);
    let lipschitz_r = agent.lipschitz_r.unwrap_or(env_lr);
    let (eps, delta) = (config.epsilon, config.delta);
    let r0 = compute_r0(eps, horizon, lipschitz_p, lipschitz_r)?;
    let theoretical_r0 = r0.is_finite().then_some(r0);
    let theoretical_alpha = compute_alpha(&AlphaParams {
        b1: agent.b1,
        b2: agent.b2,
        epsilon: eps,
        delta,
        dim: env.space().dim(),
        num_states: ns,
    })
    .ok();
    Ok(Constants {
        theoretical_m: theoretical_m(eps, delta, ns, na, horizon)?,
        theoretical_r0,
        theoretical_alpha,
        effective_m: match agent.m {
            Some(m) => m,
            None => compute_m(eps, delta, ns, na, horizon)?,
        },
        // an unbounded radius is one ball; the space diameter says the same
        effective_r0: agent.r0.or(theoretical_r0).unwrap_or_else(|| env.space().diameter()),
        effective_alpha: agent.alpha.or(theoretical_alpha),
        lipschitz_p,
        lipschitz_r,
    })
}

/// Any agent the harness can drive.
#[derive(Clone, Debug)]
pub enum Learner {
    Cover(RmaxAgent<CoverEstimator>),
    Kwik(RmaxAgent<KwikEstimator>),
    Oracle,
    Random,
}

/// What the learner committed to in one episode.
struct Commitment {
    policy: Policy,
    known_states: usize,
}

impl Learner {
    pub fn new(config: &ExperimentConfig, env: &Environment, constants: &Constants) -> Result<Self> {
        let (ns, na, horizon) = env.shape();
        Ok(match config.agent.kind {
            AgentKind::Cover => Learner::Cover(RmaxAgent::new(
                CoverEstimator::new(ns, na, constants.effective_r0, constants.effective_m)?,
                horizon,
            )),
            AgentKind::Kwik => {
                let alpha = constants.effective_alpha.ok_or_else(|| {
                    Error::Config("no theoretical alpha for this epsilon/delta; set agent.alpha".into())
                })?;
                Learner::Kwik(RmaxAgent::new(
                    KwikEstimator::new(ns, na, env.space().dim(), alpha, config.agent.norm)?,
                    horizon,
                ))
            }
            AgentKind::Oracle => Learner::Oracle,
            AgentKind::Random => Learner::Random,
        })
    }

    fn episode<R: Rng + ?Sized>(&mut self, c: &Context, mdp: &TabularMdp, optimal: &Plan, rng: &mut R) -> Commitment {
        match self {
            Learner::Cover(agent) => {
                let outcome = agent.run_episode(c, mdp, rng);
                Commitment {
                    known_states: outcome.plan.induced.known_count(),
                    policy: outcome.plan.committed,
                }
            }
            Learner::Kwik(agent) => {
                let outcome = agent.run_episode(c, mdp, rng);
                Commitment {
                    known_states: outcome.plan.induced.known_count(),
                    policy: outcome.plan.committed,
                }
            }
            Learner::Oracle => Commitment {
                policy: optimal.policy.clone(),
                known_states: mdp.num_states(),
            },
            Learner::Random => {
                let na = mdp.num_actions();
                Commitment {
                    policy: Policy::from_fn(mdp.horizon(), mdp.num_states(), |_, _| rng.random_range(0..na)),
                    known_states: 0,
                }
            }
        }
    }

    pub fn total_updates(&self) -> u64 {
        match self {
            Learner::Cover(agent) => agent.total_updates(),
            Learner::Kwik(agent) => agent.total_updates(),
            Learner::Oracle | Learner::Random => 0,
        }
    }

    pub fn planning_calls(&self) -> u64 {
        match self {
            Learner::Cover(agent) => agent.planning_calls(),
            Learner::Kwik(agent) => agent.planning_calls(),
            Learner::Oracle | Learner::Random => 0,
        }
    }

    /// Estimator state, for checkpoints.
    pub fn snapshot(&self) -> Result<Option<serde_json::Value>> {
        Ok(match self {
            Learner::Cover(agent) => Some(serde_json::to_value(agent.estimator())?),
            Learner::Kwik(agent) => Some(serde_json::to_value(agent.estimator())?),
            Learner::Oracle | Learner::Random => None,
        })
    }
}

/// Aggregate outcome of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub agent: AgentKind,
    pub family: String,
    pub dim: usize,
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub episodes: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub suboptimal: usize,
    pub suboptimal_rate: f64,
    /// Window used for the first/last rates: 5% of the episodes, at least 1.
    pub window: usize,
    pub first_window_rate: f64,
    pub last_window_rate: f64,
    pub min_gap: f64,
    pub total_updates: u64,
    pub planning_calls: u64,
    /// Cover-Rmax ball count.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub balls: Option<usize>,
    pub constants: Constants,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub summary: RunSummary,
    pub records: Vec<EpisodeRecord>,
    pub environment: Environment,
    pub learner: Learner,
}

impl RunResult {
    pub fn gaps(&self) -> Vec<f64> {
        log::record_gaps(&self.records)
    }
}

fn family_name(env: &Environment) -> &'static str {
    match env {
        Environment::Smooth(_) => "smooth",
        Environment::Linear(_) => "linear",
        Environment::Hard(_) => "hard",
    }
}

/// Context-stream seed: the configured one, or one derived from the run seed.
fn context_seed(config: &ExperimentConfig) -> u64 {
    config
        .contexts
        .seed
        .unwrap_or_else(|| stream_rng(config.seed, CONTEXT_STREAM).next_u64())
}

/// Runs `config.episodes` episodes of the online protocol.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunResult> {
    config.validate()?;
    let environment = build_environment(config)?;
    let contexts = build_contexts(config, &environment)?;
    let constants = resolve_constants(config, &environment)?;
    let mut learner = Learner::new(config, &environment, &constants)?;
    let mut rng = stream_rng(config.seed, AGENT_STREAM);

    let mut records = Vec::with_capacity(config.episodes);
    for (t, c) in contexts.stream(context_seed(config)).take(config.episodes).enumerate() {
        let mdp = environment.instantiate(&c)?;
        let optimal = plan_optimal(&mdp);
        let commitment = learner.episode(&c, &mdp, &optimal, &mut rng);
        let v_policy = evaluate_policy(&mdp, &commitment.policy)?;
        records.push(EpisodeRecord::new(
            t,
            c.coords().to_vec(),
            optimal.value,
            v_policy,
            config.epsilon,
            commitment.known_states,
            learner.total_updates(),
        ));
    }

    let gaps = log::record_gaps(&records);
    let count = log::count_suboptimal(&gaps, config.epsilon).count;
    let window = (records.len() / 20).max(1);
    let (ns, na, horizon) = environment.shape();
    let summary = RunSummary {
        seed: config.seed,
        agent: config.agent.kind,
        family: family_name(&environment).to_string(),
        dim: environment.space().dim(),
        num_states: ns,
        num_actions: na,
        horizon,
        episodes: records.len(),
        epsilon: config.epsilon,
        delta: config.delta,
        suboptimal: count,
        suboptimal_rate: count as f64 / records.len() as f64,
        window,
        first_window_rate: log::rate(&gaps[..window], config.epsilon),
        last_window_rate: log::rate(&gaps[gaps.len() - window..], config.epsilon),
        min_gap: gaps.iter().copied().fold(f64::INFINITY, f64::min),
        total_updates: learner.total_updates(),
        planning_calls: learner.planning_calls(),
        balls: match &learner {
            Learner::Cover(agent) => Some(agent.estimator().balls().len()),
            _ => None,
        },
        constants,
    };
    Ok(RunResult {
        summary,
        records,
        environment,
        learner,
    })
}

/// File names written by [`write_outputs`].
pub const EPISODES_JSONL: &str = "episodes.jsonl";
pub const EPISODES_CSV: &str = "episodes.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const ENVIRONMENT_JSON: &str = "environment.json";
pub const CHECKPOINT_JSON: &str = "checkpoint.json";

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

/// Writes the episode log, CSV summary, run summary, environment and
/// (optionally) the final estimator snapshot into `dir`.
pub fn write_outputs(result: &RunResult, dir: &Path, checkpoint: bool) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut out = create(dir, EPISODES_JSONL)?;
    log::write_jsonl(&result.records, &mut out)?;
    out.flush()?;
    log::write_csv(&result.records, create(dir, EPISODES_CSV)?)?;
    let mut out = create(dir, SUMMARY_JSON)?;
    serde_json::to_writer_pretty(&mut out, &result.summary)?;
    out.write_all(b"\n")?;
    out.flush()?;
    let mut out = create(dir, ENVIRONMENT_JSON)?;
    serde_json::to_writer(&mut out, &result.environment)?;
    out.flush()?;
    if checkpoint {
        if let Some(snapshot) = result.learner.snapshot()? {
            let mut out = create(dir, CHECKPOINT_JSON)?;
            serde_json::to_writer(&mut out, &snapshot)?;
            out.flush()?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(text: &str) -> ExperimentConfig {
        ExperimentConfig::from_toml_str(text).unwrap()
    }

    #[test]
    fn oracle_is_never_suboptimal() {
        let result = run_experiment(&config(
            r#"
            episodes = 50
            [environment]
            family = "linear"
            dim = 3
            [agent]
            kind = "oracle"
            [contexts]
            mode = "iid-uniform"
            "#,
        ))
        .unwrap();
        assert_eq!(result.summary.suboptimal, 0);
        assert!(result.records.iter().all(|r| r.gap.abs() <= 1e-12));
    }

    #[test]
    fn cyclic_without_points_needs_radius() {
        let cfg = config(
            r#"
            [environment]
            family = "smooth"
            [agent]
            kind = "random"
            "#,
        );
        assert!(matches!(run_experiment(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn hard_family_needs_a_usable_gap() {
        let cfg = config(
            r#"
            epsilon = 0.01
            [environment]
            family = "hard"
            [agent]
            kind = "random"
            "#,
        );
        assert!(matches!(build_environment(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn kwik_without_theoretical_alpha_needs_override() {
        let cfg = config(
            r#"
            epsilon = 1.0
            [environment]
            family = "linear"
            [agent]
            kind = "kwik"
            [contexts]
            mode = "iid-uniform"
            "#,
        );
        assert!(matches!(run_experiment(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn constants_report_theory_and_overrides() {
        let cfg = config(
            r#"
            [environment]
            family = "smooth"
            [agent]
            kind = "cover"
            m = 50
            "#,
        );
        let env = build_environment(&cfg).unwrap();
        let c = resolve_constants(&cfg, &env).unwrap();
        assert_eq!(c.effective_m, 50);
        assert!(c.theoretical_m > 1e6);
        assert_eq!(c.theoretical_r0, Some(0.1 / 40.0));
        assert_eq!(c.effective_r0, 0.1 / 40.0);
        assert!(c.theoretical_alpha.unwrap() > 0.0);
    }
}
