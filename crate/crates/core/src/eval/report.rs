use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ae::AeBuckets;
use super::config::ExperimentConfig;
use crate::error::Result;

/// Wall-clock seconds per phase; `None` when not recorded.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub preprocess: Option<f64>,
    pub model: Option<f64>,
    pub predict: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundResult {
    pub method: String,
    pub rank: Option<usize>,
    pub round: usize,
    pub ae: AeBuckets,
    pub timings: Timings,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub method: String,
    pub rank: Option<usize>,
    pub round: usize,
    pub error: String,
}

/// Across-round summary for one method, rank and step length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub method: String,
    pub rank: Option<usize>,
    /// 1-based: `step_k = 1` is the first observation of an episode.
    pub step_k: usize,
    /// Mean of the per-round means.
    pub ae_mean: f64,
    /// Sample standard deviation of the per-round means (0 for one round).
    pub ae_std: f64,
    pub rounds: usize,
    pub n_queries: usize,
    pub skipped: usize,
    pub timings: Timings,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AeReport {
    pub domain: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub rounds: Vec<RoundResult>,
    pub aggregates: Vec<AggregateRow>,
    pub failures: Vec<Failure>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn mean_opt(v: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = v.collect();
    v.filter(|v| !v.is_empty()).map(|v| mean(&v))
}

impl AeReport {
    pub fn new(cfg: &ExperimentConfig, mut rounds: Vec<RoundResult>, mut failures: Vec<Failure>) -> Self {
        let key = |method: &str, rank: Option<usize>| {
            let m = cfg.methods.iter().position(|x| x.name() == method).unwrap_or(usize::MAX);
            let r = rank.and_then(|r| cfg.ranks.iter().position(|&x| x == r)).unwrap_or(0);
            (m, r)
        };
        rounds.sort_by_key(|r| (key(&r.method, r.rank), r.round));
        failures.sort_by_key(|f| (key(&f.method, f.rank), f.round));
        let mut aggregates = Vec::new();
        let mut start = 0;
        while start < rounds.len() {
            let k0 = key(&rounds[start].method, rounds[start].rank);
            let end = start
                + rounds[start..].iter().take_while(|r| key(&r.method, r.rank) == k0).count();
            let group = &rounds[start..end];
            let depth = group.iter().map(|r| r.ae.errors.len()).max().unwrap_or(0);
            let timings = Timings {
                preprocess: mean_opt(group.iter().map(|r| r.timings.preprocess)),
                model: mean_opt(group.iter().map(|r| r.timings.model)),
                predict: mean_opt(group.iter().map(|r| r.timings.predict)),
            };
            for k in 0..depth {
                let means: Vec<f64> = group.iter().filter_map(|r| r.ae.mean(k)).collect();
                if means.is_empty() {
                    continue;
                }
                let m = mean(&means);
                let std = if means.len() > 1 {
                    (means.iter().map(|x| (x - m) * (x - m)).sum::<f64>()
                        / (means.len() - 1) as f64)
                        .sqrt()
                } else {
                    0.0
                };
                aggregates.push(AggregateRow {
                    method: group[0].method.clone(),
                    rank: group[0].rank,
                    step_k: k + 1,
                    ae_mean: m,
                    ae_std: std,
                    rounds: means.len(),
                    n_queries: group.iter().map(|r| r.ae.count(k)).sum(),
                    skipped: group.iter().map(|r| r.ae.skipped).sum(),
                    timings,
                });
            }
            start = end;
        }
        Self {
            domain: cfg.domain.name().into(),
            config_hash: cfg.hash(),
            config: cfg.clone(),
            rounds,
            aggregates,
            failures,
        }
    }

    /// Across-round mean AE at 1-based step length `step_k`.
    pub fn mean_ae(&self, method: &str, rank: Option<usize>, step_k: usize) -> Option<f64> {
        self.aggregates
            .iter()
            .find(|a| a.method == method && a.rank == rank && a.step_k == step_k)
            .map(|a| a.ae_mean)
    }

    pub const CSV_HEADER: &'static str = "domain,method,rank,round,step_k,ae_mean,ae_std,\
n_queries,skipped,t_preprocess_s,t_model_s,t_predict_s";

    /// Per-round rows followed by `round = all` aggregate rows.
    pub fn to_csv(&self) -> String {
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        let rank = |r: Option<usize>| r.map(|v| v.to_string()).unwrap_or_default();
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.rounds {
            for k in 0..r.ae.errors.len() {
                let (Some(m), Some(s)) = (r.ae.mean(k), r.ae.std(k)) else {
                    continue;
                };
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{m},{s},{},{},{},{},{}",
                    self.domain,
                    r.method,
                    rank(r.rank),
                    r.round,
                    k + 1,
                    r.ae.count(k),
                    r.ae.skipped,
                    opt(r.timings.preprocess),
                    opt(r.timings.model),
                    opt(r.timings.predict),
                );
            }
        }
        for a in &self.aggregates {
            let _ = writeln!(
                out,
                "{},{},{},all,{},{},{},{},{},{},{},{}",
                self.domain,
                a.method,
                rank(a.rank),
                a.step_k,
                a.ae_mean,
                a.ae_std,
                a.n_queries,
                a.skipped,
                opt(a.timings.preprocess),
                opt(a.timings.model),
                opt(a.timings.predict),
            );
        }
        out
    }

    /// Summary with the configuration hash, aggregates and failures.
    pub fn summary_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Summary<'a> {
            domain: &'a str,
            config_hash: &'a str,
            config: &'a ExperimentConfig,
            aggregates: &'a [AggregateRow],
            failures: &'a [Failure],
        }
        Ok(serde_json::to_string_pretty(&Summary {
            domain: &self.domain,
            config_hash: &self.config_hash,
            config: &self.config,
            aggregates: &self.aggregates,
            failures: &self.failures,
        })?)
    }

    pub fn write(&self, csv: impl AsRef<Path>, json: impl AsRef<Path>) -> Result<()> {
        std::fs::write(csv, self.to_csv())?;
        std::fs::write(json, self.summary_json()? + "\n")?;
        Ok(())
    }
}
