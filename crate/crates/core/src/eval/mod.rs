//! Absolute-error evaluation against an oracle and the multi-round
//! comparison protocol.
//!
//! For each test episode the predictor is filtered along the recorded
//! prefix, and at every step the gap `|p̂(o) − p(o)|` is taken at the
//! observation that actually occurred. Errors are bucketed by prefix length.

mod ae;
mod config;
mod report;
mod run;

pub use ae::{
    absolute_error, absolute_error_with, oracle_probabilities, oracle_table, AeBuckets, Predictor,
    UniformPredictor,
};
pub use config::{ExperimentConfig, MethodSpec, OracleKind};
pub use report::{AeReport, AggregateRow, Failure, RoundResult, Timings};
pub use run::{build_env, learn, prepare, run_experiment, LearnSpec, MAX_DENSE_ENTRIES};
