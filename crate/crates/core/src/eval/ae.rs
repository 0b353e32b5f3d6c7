use serde::{Deserialize, Serialize};

use super::OracleKind;
use crate::envs::{BeliefFilter, EnvModel};
use crate::error::{Error, Result};
use crate::estimation::Pair;
use crate::par;
use crate::psr::{filter_update, predict_next_obs_dist, PsrModel};
use crate::rng::derive_seed;

/// Anything that predicts the next joint observation from a running state.
pub trait Predictor: Sync {
    fn initial_state(&self) -> Vec<f64>;

    /// Distribution over joint observations after joint action `ja`.
    fn next_obs_dist(&self, x: &[f64], ja: usize) -> Result<Vec<f64>>;

    fn update(&self, x: &[f64], pair: Pair) -> Result<Vec<f64>>;
}

impl Predictor for PsrModel {
    fn initial_state(&self) -> Vec<f64> {
        self.x0.clone()
    }

    fn next_obs_dist(&self, x: &[f64], ja: usize) -> Result<Vec<f64>> {
        predict_next_obs_dist(self, x, ja)
    }

    fn update(&self, x: &[f64], pair: Pair) -> Result<Vec<f64>> {
        Ok(filter_update(self, x, pair)?.state)
    }
}

/// Predicts every joint observation with equal probability.
#[derive(Clone, Copy, Debug)]
pub struct UniformPredictor {
    pub n_obs: usize,
}

impl Predictor for UniformPredictor {
    fn initial_state(&self) -> Vec<f64> {
        Vec::new()
    }

    fn next_obs_dist(&self, _x: &[f64], _ja: usize) -> Result<Vec<f64>> {
        Ok(vec![1.0 / self.n_obs as f64; self.n_obs])
    }

    fn update(&self, x: &[f64], _pair: Pair) -> Result<Vec<f64>> {
        Ok(x.to_vec())
    }
}

/// Oracle probability of each recorded observation of one episode, given
/// its prefix and action. `seed` only matters for roll-out oracles.
pub fn oracle_probabilities(
    env: &EnvModel,
    oracle: OracleKind,
    episode: &[Pair],
    seed: u64,
) -> Result<Vec<f64>> {
    match oracle {
        OracleKind::Belief => {
            let explicit = env
                .explicit()
                .ok_or_else(|| Error::invalid("belief oracle needs explicit kernels"))?;
            let mut f = BeliefFilter::new(explicit);
            let mut out = Vec::with_capacity(episode.len());
            for (k, &(a, o)) in episode.iter().enumerate() {
                out.push(f.prob_of(a, o));
                if k + 1 < episode.len() {
                    f.update(a, o)?;
                }
            }
            Ok(out)
        }
        OracleKind::Mc(n) => episode
            .iter()
            .enumerate()
            .map(|(k, &(a, o))| {
                let est = env.mc_oracle(&episode[..k], a, n, derive_seed(seed, k as u64));
                if est.retained == 0 {
                    return Err(Error::UndefinedHistory(format!(
                        "no roll-out reproduced a prefix of length {k}"
                    )));
                }
                Ok(est.dist[o])
            })
            .collect(),
    }
}

/// Oracle values for a batch of episodes; `None` marks an episode the oracle
/// could not answer.
pub fn oracle_table(
    env: &EnvModel,
    oracle: OracleKind,
    episodes: &[Vec<Pair>],
    seed: u64,
) -> Vec<Option<Vec<f64>>> {
    par::map_range(episodes.len(), |e| {
        oracle_probabilities(env, oracle, &episodes[e], derive_seed(seed, e as u64)).ok()
    })
}

/// Per-step-length accumulators. Bucket `k` holds predictions made after a
/// prefix of `k` steps, i.e. of the `(k + 1)`-th observation.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AeBuckets {
    pub errors: Vec<Vec<f64>>,
    pub skipped: usize,
}

impl AeBuckets {
    pub fn count(&self, k: usize) -> usize {
        self.errors.get(k).map_or(0, Vec::len)
    }

    pub fn mean(&self, k: usize) -> Option<f64> {
        let e = self.errors.get(k)?;
        (!e.is_empty()).then(|| e.iter().sum::<f64>() / e.len() as f64)
    }

    /// Population standard deviation within the bucket.
    pub fn std(&self, k: usize) -> Option<f64> {
        let m = self.mean(k)?;
        let e = &self.errors[k];
        Some((e.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / e.len() as f64).sqrt())
    }

    pub fn total_queries(&self) -> usize {
        self.errors.iter().map(Vec::len).sum()
    }
}

/// `|p̂(o) − p(o)|` for each recorded observation, with `p` taken from a
/// precomputed oracle table.
pub fn absolute_error_with(
    pred: &dyn Predictor,
    episodes: &[Vec<Pair>],
    oracle: &[Option<Vec<f64>>],
) -> Result<AeBuckets> {
    if oracle.len() != episodes.len() {
        return Err(Error::invalid("one oracle row per episode required"));
    }
    let per_episode = par::map_range(episodes.len(), |e| -> Result<Option<Vec<f64>>> {
        let Some(truth) = &oracle[e] else {
            return Ok(None);
        };
        let mut x = pred.initial_state();
        let mut out = Vec::with_capacity(truth.len());
        for (k, &(a, o)) in episodes[e].iter().enumerate() {
            let p_hat = pred.next_obs_dist(&x, a)?[o];
            out.push((p_hat - truth[k]).abs());
            x = pred.update(&x, (a, o))?;
        }
        Ok(Some(out))
    });
    let mut b = AeBuckets::default();
    for ep in per_episode {
        match ep? {
            None => b.skipped += 1,
            Some(errs) => {
                if b.errors.len() < errs.len() {
                    b.errors.resize(errs.len(), Vec::new());
                }
                for (k, v) in errs.into_iter().enumerate() {
                    b.errors[k].push(v);
                }
            }
        }
    }
    Ok(b)
}

/// Absolute error of `pred` on `episodes` against the chosen oracle.
pub fn absolute_error(
    pred: &dyn Predictor,
    episodes: &[Vec<Pair>],
    env: &EnvModel,
    oracle: OracleKind,
    seed: u64,
) -> Result<AeBuckets> {
    absolute_error_with(pred, episodes, &oracle_table(env, oracle, episodes, seed))
}
