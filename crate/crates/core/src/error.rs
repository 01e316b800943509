use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid MDP: {0}")]
    InvalidMdp(String),

    #[error("policy shape {policy_horizon}x{policy_states} does not match MDP {mdp_horizon}x{mdp_states}")]
    ShapeMismatch {
        policy_horizon: usize,
        policy_states: usize,
        mdp_horizon: usize,
        mdp_states: usize,
    },

    #[error("trajectory enumeration needs {needed} paths, limit is {limit}")]
    EnumerationTooLarge { needed: f64, limit: f64 },

    #[error("context is not on the probability simplex: {0}")]
    OffSimplex(String),

    #[error("context outside the context space: {0}")]
    OutOfSpace(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
