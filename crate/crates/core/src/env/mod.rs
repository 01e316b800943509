//! Contextual environment families and context sequences.

mod context;
mod hard;
mod linear;
mod packing;
mod sequence;
mod smooth;

pub use context::{Context, ContextSpace, SIMPLEX_TOLERANCE};
pub use hard::{
    build_hard_mdp, epsilon_one, epsilon_prime, hard_cmdp_transition, hard_plus_probability, minus_state,
    plus_state, HardInstanceCmdp,
};
pub use linear::LinearCmdp;
pub use packing::{build_packing, build_packing_from, min_pairwise_distance, Packing};
pub use sequence::{ContextSequence, ContextStream, ScriptSegment};
pub use smooth::SmoothCmdp;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::mdp::TabularMdp;

/// A materialized contextual environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Environment {
    Smooth(SmoothCmdp),
    Linear(LinearCmdp),
    Hard(HardInstanceCmdp),
}

impl Environment {
    pub fn instantiate(&self, c: &Context) -> Result<TabularMdp> {
        match self {
            Environment::Smooth(e) => e.instantiate(c),
            Environment::Linear(e) => e.instantiate(c),
            Environment::Hard(e) => e.instantiate(c),
        }
    }

    pub fn space(&self) -> ContextSpace {
        match self {
            Environment::Smooth(e) => e.space().clone(),
            Environment::Linear(e) => e.space(),
            Environment::Hard(e) => e.space().clone(),
        }
    }

    /// `(S, A, H)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        match self {
            Environment::Smooth(e) => {
                let m = &e.anchors()[0];
                (m.num_states(), m.num_actions(), m.horizon())
            }
            Environment::Linear(e) => {
                let m = e.template();
                (m.num_states(), m.num_actions(), m.horizon())
            }
            Environment::Hard(e) => (e.bandit_states() + 3, e.num_actions(), e.horizon()),
        }
    }

    /// Smoothness constants `(L_p, L_r)` valid for this environment.
    pub fn lipschitz(&self) -> (f64, f64) {
        match self {
            Environment::Smooth(e) => e.lipschitz(),
            Environment::Linear(e) => e.lipschitz(),
            // rewards do not depend on the context
            Environment::Hard(_) => (1.0, 0.0),
        }
    }
}
