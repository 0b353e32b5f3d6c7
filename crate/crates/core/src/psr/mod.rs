//! The learned multi-agent PSR: one-step prediction vectors `m̃_ao`,
//! transition matrices `M̃_ao`, the initial state `x0`, and the filtering
//! and prediction rules built on them.

mod learn;
mod model;
mod predict;

pub use learn::{
    build_regression_sets, extract_prediction_matrix, extract_prediction_params, extract_states,
    learn_psr, learn_transition, package_model, StateMatrix,
};
pub use model::{ModelMeta, PsrModel};
pub use predict::{
    filter_update, marginalize_model, marginalize_model_with, predict_next_obs_dist,
    predict_test, ActionWeighting, FilterOutcome,
};

/// Ridge weight used when none is configured.
pub const DEFAULT_LAMBDA_R: f64 = 1e-6;
/// Filter denominators below this reset the state to `x0`.
pub const EPS_DIV: f64 = 1e-9;
/// Floor applied to raw predictions before renormalising.
pub const EPS_CLIP: f64 = 1e-12;
