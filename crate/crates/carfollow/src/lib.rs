//! Stochastic car-following models with temporally correlated residuals.
//!
//! A recurrent mean model predicts per-step acceleration together with the
//! lengthscale and marginal std of a Gaussian-process residual; the
//! scenario-adaptive (Gibbs) kernel lets both correlation range and
//! uncertainty track the driving context. On top of the trained model the
//! crate provides rolling stochastic rollouts, multi-vehicle platoon
//! simulation, and probabilistic evaluation (RMSE / CRPS / Energy Score).
//!
//! Start with the runnable examples:
//!
//! ```text
//! cargo run --release --example gram_matrices
//! cargo run --release --example train_synthetic
//! cargo run --release --example stochastic_rollouts
//! cargo run --release --example platoon_wave
//! cargo run --release --example kernel_comparison
//! cargo run --release --example interpretability_export
//! ```
//!
//! The same capabilities are reachable from the `carfollow` binary
//! (`train`, `simulate`, `platoon`, `evaluate`, `export-interp`).

pub mod cli;
pub mod data;
pub mod error;
pub mod gp;
pub mod kernels;
pub mod linalg;
pub mod meanmodel;
pub mod metrics;
pub mod rng;
pub mod sim;
pub mod synthetic;
pub mod train;

pub use error::{Error, Result};
