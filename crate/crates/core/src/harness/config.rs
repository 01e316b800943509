//! Experiment configuration, read from TOML.
//!
//! The schema is documented in `docs/config.md`. Every field except the
//! environment family and agent kind has a default, so a minimal config is a
//! few lines long.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::env::{Context, ScriptSegment};
use crate::error::{Error, Result};
use crate::kwik::KnownnessNorm;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_episodes")]
    pub episodes: usize,
    /// Accuracy target; also the suboptimality threshold of the evaluation.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    pub environment: EnvironmentConfig,
    pub agent: AgentConfig,
    #[serde(default)]
    pub contexts: ContextsConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

fn default_episodes() -> usize {
    1000
}

fn default_epsilon() -> f64 {
    0.1
}

fn default_delta() -> f64 {
    0.1
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvironmentFamily {
    Smooth,
    Linear,
    Hard,
    /// A serialized environment produced by `gen-env`.
    File,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentConfig {
    pub family: EnvironmentFamily,
    #[serde(default = "one")]
    pub dim: usize,
    #[serde(default = "default_states")]
    pub states: usize,
    #[serde(default = "default_actions")]
    pub actions: usize,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    /// Target smoothness constants of the smooth family.
    #[serde(default = "one_f")]
    pub lipschitz_p: f64,
    #[serde(default = "one_f")]
    pub lipschitz_r: f64,
    /// Dirichlet concentration of random base rows.
    #[serde(default = "one_f")]
    pub concentration: f64,
    /// Seed for the environment's random parameters; defaults to the run seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub env_seed: Option<u64>,
    /// Bandit-state count `n` of the hard family (S = n + 3).
    #[serde(default = "default_bandit_states")]
    pub bandit_states: usize,
    /// Overrides the hard family's gap; the derived value exceeds 1/2 for
    /// practical `epsilon`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_prime: Option<f64>,
    /// Environment file for the `file` family.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

fn one() -> usize {
    1
}

fn one_f() -> f64 {
    1.0
}

fn default_states() -> usize {
    5
}

fn default_actions() -> usize {
    2
}

fn default_horizon() -> usize {
    5
}

fn default_bandit_states() -> usize {
    4
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentKind {
    Cover,
    Kwik,
    /// Plans on the true model; a sanity upper bound.
    Oracle,
    /// A fresh uniformly random deterministic policy every episode.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub kind: AgentKind,
    /// Known threshold of Cover-Rmax.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<u64>,
    /// Ball radius of Cover-Rmax.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r0: Option<f64>,
    /// Knownness threshold of KWIK_LR-Rmax.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default = "one_f")]
    pub b1: f64,
    #[serde(default = "one_f")]
    pub b2: f64,
    #[serde(default)]
    pub norm: KnownnessNorm,
    /// Smoothness constants assumed by the agent; default to the
    /// environment's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz_p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz_r: Option<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContextMode {
    /// Seeded permutation of a fixed point set, repeated.
    #[default]
    CyclicPermutation,
    IidUniform,
    FixedList,
    AdversarialScript,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextsConfig {
    #[serde(default)]
    pub mode: ContextMode,
    /// Points for `cyclic-permutation` and `fixed-list`. Without them the
    /// cyclic mode uses a packing of the space at `packing_radius` (the hard
    /// family defaults to its own packing).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<Context>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub packing_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub segments: Vec<ScriptSegment>,
    /// Seed of the context stream; defaults to one derived from the run seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// Also write the final estimator state.
    #[serde(default)]
    pub checkpoint: bool,
}

/// Grid axes for `sweep`; an empty axis keeps the base value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub epsilon: Vec<f64>,
    #[serde(default)]
    pub dim: Vec<usize>,
    #[serde(default)]
    pub states: Vec<usize>,
    #[serde(default)]
    pub episodes: Vec<usize>,
    #[serde(default)]
    pub seeds: Vec<u64>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_value(toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?)
    }

    pub fn from_value(value: toml::Value) -> Result<Self> {
        let config: Self = value.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Loads `path` after applying `key=value` overrides with dotted keys.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut value: toml::Value = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        for item in overrides {
            apply_override(&mut value, item)?;
        }
        let mut config = Self::from_value(value)?;
        if let Some(env_path) = &config.environment.path {
            if env_path.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                config.environment.path = Some(base.join(env_path));
            }
        }
        Ok(config)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.episodes == 0 {
            return bad("episodes must be positive".into());
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return bad(format!("epsilon must be in (0, 1], got {}", self.epsilon));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must be in (0, 1), got {}", self.delta));
        }
        let env = &self.environment;
        if env.dim == 0 || env.states == 0 || env.actions == 0 || env.horizon == 0 {
            return bad("dim, states, actions and horizon must be positive".into());
        }
        for (name, v) in [
            ("lipschitz_p", env.lipschitz_p),
            ("lipschitz_r", env.lipschitz_r),
            ("concentration", env.concentration),
        ] {
            if !(v > 0.0) {
                return bad(format!("environment.{name} must be positive, got {v}"));
            }
        }
        if let Some(g) = env.epsilon_prime {
            if !(g > 0.0 && g <= 0.5) {
                return bad(format!("environment.epsilon_prime must be in (0, 1/2], got {g}"));
            }
        }
        if env.family == EnvironmentFamily::Hard && env.bandit_states == 0 {
            return bad("environment.bandit_states must be positive".into());
        }
        if env.family == EnvironmentFamily::File && env.path.is_none() {
            return bad("the file family needs environment.path".into());
        }
        let agent = &self.agent;
        if agent.m == Some(0) {
            return bad("agent.m must be positive".into());
        }
        for (name, v) in [
            ("r0", agent.r0),
            ("alpha", agent.alpha),
            ("b1", Some(agent.b1)),
            ("b2", Some(agent.b2)),
            ("lipschitz_p", agent.lipschitz_p),
            ("lipschitz_r", agent.lipschitz_r),
        ] {
            if let Some(v) = v {
                if !(v > 0.0) {
                    return bad(format!("agent.{name} must be positive, got {v}"));
                }
            }
        }
        if let Some(r) = self.contexts.packing_radius {
            if !(r > 0.0) {
                return bad(format!("contexts.packing_radius must be positive, got {r}"));
            }
        }
        match self.contexts.mode {
            ContextMode::FixedList if self.contexts.points.as_ref().is_none_or(|p| p.is_empty()) => {
                bad("fixed-list contexts need contexts.points".into())
            }
            ContextMode::AdversarialScript if self.contexts.segments.is_empty() => {
                bad("adversarial-script contexts need contexts.segments".into())
            }
            _ => Ok(()),
        }
    }
}

/// Sets a dotted `key=value` path in a TOML tree. The value is parsed as a
/// TOML literal, falling back to a bare string.
pub fn apply_override(root: &mut toml::Value, item: &str) -> Result<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {item:?} is not key=value")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(Error::Config(format!("override {item:?} has an empty key")));
    }
    let value = parse_literal(raw.trim());
    let mut parts = key.split('.').peekable();
    let mut node = root;
    while let Some(part) = parts.next() {
        let table = node
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {key:?} descends into a non-table")))?;
        if parts.peek().is_none() {
            table.insert(part.to_string(), value);
            return Ok(());
        }
        node = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::map::Map::new()));
    }
    unreachable!("split yields at least one part")
}

fn parse_literal(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&wrapped) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [environment]
        family = "smooth"
        [agent]
        kind = "cover"
    "#;

    #[test]
    fn minimal_config_gets_defaults() {
        let config = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(config.episodes, 1000);
        assert_eq!(config.environment.states, 5);
        assert_eq!(config.agent.norm, KnownnessNorm::L2);
        assert_eq!(config.contexts.mode, ContextMode::CyclicPermutation);
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let mut value: toml::Value = toml::from_str(MINIMAL).unwrap();
        apply_override(&mut value, "agent.m=50").unwrap();
        apply_override(&mut value, "environment.family=linear").unwrap();
        apply_override(&mut value, "contexts.packing_radius = 0.25").unwrap();
        let config = ExperimentConfig::from_value(value).unwrap();
        assert_eq!(config.agent.m, Some(50));
        assert_eq!(config.environment.family, EnvironmentFamily::Linear);
        assert_eq!(config.contexts.packing_radius, Some(0.25));
    }

    #[test]
    fn rejects_nonpositive_overrides() {
        let mut value: toml::Value = toml::from_str(MINIMAL).unwrap();
        apply_override(&mut value, "agent.r0=-0.1").unwrap();
        assert!(matches!(ExperimentConfig::from_value(value), Err(Error::Config(_))));
        assert!(ExperimentConfig::from_toml_str("[agent]\nkind = \"cover\"").is_err());
        assert!(ExperimentConfig::from_toml_str(&format!("{MINIMAL}\nbogus = 1")).is_err());
    }

    #[test]
    fn malformed_override() {
        let mut value: toml::Value = toml::from_str(MINIMAL).unwrap();
        assert!(apply_override(&mut value, "agent.m").is_err());
        assert!(apply_override(&mut value, "agent.kind.deep=1").is_err());
    }

    #[test]
    fn toml_roundtrip() {
        let config = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        let back = ExperimentConfig::from_toml_str(&config.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, config);
    }
}
