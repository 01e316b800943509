use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::context::{Context, ContextSpace};
use crate::error::{Error, Result};

/// One block of an adversarial script: `context` repeated `repeat` times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScriptSegment {
    pub context: Context,
    pub repeat: usize,
}

/// How the context of each episode is chosen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum ContextSequence {
    /// A seeded permutation of the packing points, repeated forever.
    CyclicPermutation { points: Vec<Context> },
    /// Independent uniform draws from the space.
    IidUniform { space: ContextSpace },
    /// The listed contexts in order, repeated forever.
    FixedList { contexts: Vec<Context> },
    /// Scripted blocks in order, repeated forever.
    AdversarialScript { segments: Vec<ScriptSegment> },
}

impl ContextSequence {
    /// Checks every context the sequence can emit lies in `space`.
    pub fn validate(&self, space: &ContextSpace) -> Result<()> {
        let fixed: Vec<&Context> = match self {
            ContextSequence::CyclicPermutation { points } => points.iter().collect(),
            ContextSequence::FixedList { contexts } => contexts.iter().collect(),
            ContextSequence::AdversarialScript { segments } => {
                if segments.iter().all(|s| s.repeat == 0) {
                    return Err(Error::Config("adversarial script emits no contexts".into()));
                }
                segments.iter().map(|s| &s.context).collect()
            }
            ContextSequence::IidUniform { space: own } => {
                if own != space {
                    return Err(Error::Config("iid context space differs from the environment's".into()));
                }
                return Ok(());
            }
        };
        if fixed.is_empty() {
            return Err(Error::Config("context sequence is empty".into()));
        }
        fixed.into_iter().try_for_each(|c| space.check(c))
    }

    pub fn stream(&self, seed: u64) -> ContextStream {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let order = match self {
            ContextSequence::CyclicPermutation { points } => {
                let mut order = points.clone();
                order.shuffle(&mut rng);
                order
            }
            ContextSequence::FixedList { contexts } => contexts.clone(),
            ContextSequence::AdversarialScript { segments } => segments
                .iter()
                .flat_map(|s| std::iter::repeat_n(s.context.clone(), s.repeat))
                .collect(),
            ContextSequence::IidUniform { .. } => Vec::new(),
        };
        ContextStream {
            sequence: self.clone(),
            order,
            position: 0,
            rng,
        }
    }
}

/// Deterministic context generator produced by [`ContextSequence::stream`].
pub struct ContextStream {
    sequence: ContextSequence,
    order: Vec<Context>,
    position: usize,
    rng: ChaCha8Rng,
}

impl Iterator for ContextStream {
    type Item = Context;

    fn next(&mut self) -> Option<Context> {
        if let ContextSequence::IidUniform { space } = &self.sequence {
            return Some(space.sample_uniform(&mut self.rng));
        }
        if self.order.is_empty() {
            return None;
        }
        let c = self.order[self.position % self.order.len()].clone();
        self.position += 1;
        Some(c)
    }
}
