//! Multi-agent predictive state representations learned from joint
//! action-observation trajectories by decomposing the system dynamics tensor.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`]: dense tensors, matrices, unfoldings, mode products and the
//!   small dense linear algebra the rest of the crate needs.
//! - [`decomp`]: CP and Tucker decompositions, with non-negative variants.
//! - [`estimation`]: trajectory ingestion, test and history sets, and the
//!   estimated system dynamics tensor and matrix.
//! - [`psr`]: the learned model, its parameter extraction and filtering.
//! - [`baselines`]: matrix-based spectral learners (TPSR, CPSR).
//! - [`envs`]: seeded multi-agent simulators and prediction oracles.
//! - [`eval`]: absolute-error evaluation and the multi-round experiment runner.
//!
//! Data-parallel inner loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled and plain iterators otherwise. Results are
//! identical either way.

pub mod baselines;
pub mod decomp;
pub mod envs;
pub mod error;
pub mod estimation;
pub mod eval;
pub mod par;
pub mod psr;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};

/// Hex SHA-256 of a canonical configuration string.
pub fn config_hash(canonical: &str) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}
