//! PAC exploration in contextual episodic MDPs.
//!
//! - [`mdp`]: tabular finite-horizon MDPs, exact planning and evaluation.
//! - [`env`]: smooth, linear-combination, and hard-instance CMDP families.
//! - [`rmax`]: the Rmax template and the estimator contract.
//! - [`cover`]: Cover-Rmax's ball-local empirical estimator.
//! - [`kwik`]: KWIK linear regression estimator and simplex projection.
//! - [`harness`]: experiment runner, logging, sweeps, and verification suites.

// `!(x > 0.0)` is how validation rejects NaN; index loops read better in the DP code.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cover;
pub mod env;
pub mod error;
pub mod harness;
pub mod kwik;
pub mod mdp;
pub mod rmax;

pub use error::{Error, Result};
