//! From trajectories to the estimated system dynamics tensor.
//!
//! Probabilities are estimated reset-style: every episode starts from the
//! initial state, so `p(t | h)` is the fraction of episodes that begin with
//! `h` and continue with `t`'s actions which also produce `t`'s observations.

mod counts;
mod data;
mod sds;
mod sets;

pub use counts::{NodeId, PrefixCounts};
pub use data::{AgentSpace, Episode, Pair, Step, TrajectorySet};
pub use sds::{
    build_sds_matrix, build_sds_tensor, estimate_cond_prob, marginal_dynamics_matrix, Estimator,
    MarginalMatrix, SysDynMatrix, SysDynTensor,
};
pub use sets::{build_history_set, build_test_sets, HistorySet, TestSet};

/// Defaults for corpus-derived test and history sets.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SetConfig {
    pub max_test_len: usize,
    pub test_min_count: usize,
    pub max_hist_len: usize,
    pub hist_min_count: usize,
    pub max_histories: usize,
    pub alpha: f64,
}

impl Default for SetConfig {
    fn default() -> Self {
        Self {
            max_test_len: 1,
            test_min_count: 2,
            max_hist_len: 3,
            hist_min_count: 2,
            max_histories: 2000,
            alpha: 0.0,
        }
    }
}
