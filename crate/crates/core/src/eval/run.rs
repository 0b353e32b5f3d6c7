use std::time::Instant;

use rand::seq::index::sample;

use super::ae::{absolute_error_with, oracle_table, Predictor, UniformPredictor};
use super::config::{ExperimentConfig, MethodSpec};
use super::report::{AeReport, Failure, RoundResult, Timings};
use crate::baselines::{learn_cpsr, learn_tpsr, ProjectionSpec};
use crate::decomp::DecompConfig;
use crate::envs::{EnvModel, MapSpec};
use crate::error::{Error, Result};
use crate::estimation::{
    build_history_set, build_sds_tensor, build_test_sets, AgentSpace, Estimator, Pair, SetConfig,
    SysDynTensor, TrajectorySet,
};
use crate::par;
use crate::psr::{learn_psr, PsrModel};
use crate::rng::{child, derive_seed};

/// Largest dense dynamics tensor the learners will build (in entries).
pub const MAX_DENSE_ENTRIES: usize = 1 << 26;

/// Learner settings shared by the experiment runner and the command line.
#[derive(Clone, Debug, PartialEq)]
pub struct LearnSpec {
    pub method: MethodSpec,
    pub rank: usize,
    pub lambda_r: f64,
    pub seed: u64,
    pub max_iters: usize,
    pub tol: f64,
    pub projection: ProjectionSpec,
}

/// Estimates the dynamics tensor from a corpus, refusing sizes above
/// [`MAX_DENSE_ENTRIES`].
pub fn prepare(trajs: &TrajectorySet, space: &AgentSpace, sets: &SetConfig) -> Result<SysDynTensor> {
    if trajs.episodes.iter().all(|e| e.is_empty()) {
        return Err(Error::invalid("no steps in the training corpus"));
    }
    let tests = build_test_sets(trajs, space, sets.max_test_len, sets.test_min_count)?;
    let hists = build_history_set(
        trajs,
        space,
        sets.max_hist_len,
        sets.hist_min_count,
        sets.max_histories,
    )?;
    let entries = tests
        .shape()
        .iter()
        .try_fold(hists.len(), |acc, &n| acc.checked_mul(n))
        .unwrap_or(usize::MAX);
    if entries > MAX_DENSE_ENTRIES {
        return Err(Error::invalid(format!(
            "dynamics tensor would have {entries} entries (limit {MAX_DENSE_ENTRIES}); \
             reduce max_histories or the alphabet sizes"
        )));
    }
    let est = Estimator::new(trajs, space, sets.alpha)?;
    build_sds_tensor(&est, &tests, &hists)
}

/// Fits one learned method on a prepared tensor.
pub fn learn(sds: &SysDynTensor, spec: &LearnSpec) -> Result<PsrModel> {
    match spec.method {
        MethodSpec::Decomp(m) => {
            let cfg = DecompConfig::for_rank(m, spec.rank, sds.tensor.shape())
                .with_seed(spec.seed)
                .with_max_iters(spec.max_iters)
                .with_tol(spec.tol);
            learn_psr(sds, &cfg, spec.lambda_r)
        }
        MethodSpec::Tpsr => learn_tpsr(&sds.to_matrix(), spec.rank, spec.lambda_r),
        MethodSpec::Cpsr => {
            let mat = sds.to_matrix();
            let mut proj = spec.projection;
            proj.d = proj.d.min(mat.matrix.rows());
            learn_cpsr(&mat, &proj, spec.rank, spec.lambda_r)
        }
        MethodSpec::Uniform => Err(Error::invalid("the uniform predictor has nothing to learn")),
    }
}

/// Builds the configured environment.
pub fn build_env(cfg: &ExperimentConfig) -> Result<EnvModel> {
    let map = cfg.map.as_ref().map(MapSpec::load).transpose()?;
    EnvModel::build(cfg.domain, cfg.agents, cfg.p_noise, map)
}

fn secs(t: Instant, on: bool) -> Option<f64> {
    on.then(|| t.elapsed().as_secs_f64())
}

/// Runs every configured method for every round and aggregates the results.
/// Rounds run in parallel; each draws its own train/test subsets from the
/// shared master corpora with a seed derived from the round index.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<AeReport> {
    cfg.validate()?;
    let env = build_env(cfg)?;
    let space = env.space().clone();
    let oracle = cfg.oracle();
    let train = env.generate(cfg.train_episodes, cfg.train_max_len, derive_seed(cfg.seed, 1))?;
    let test = env.generate(cfg.test_episodes, cfg.test_max_len, derive_seed(cfg.seed, 2))?;
    let test_joint: Vec<Vec<Pair>> = test.episodes.iter().map(|e| e.joint(&space)).collect();

    let draws: Vec<(Vec<usize>, Vec<usize>)> = (0..cfg.rounds)
        .map(|r| {
            let mut rng = child(derive_seed(cfg.seed, 3), r as u64);
            let mut tr = sample(&mut rng, cfg.train_episodes, cfg.train_per_round()).into_vec();
            let mut te = sample(&mut rng, cfg.test_episodes, cfg.test_per_round).into_vec();
            tr.sort_unstable();
            te.sort_unstable();
            (tr, te)
        })
        .collect();

    // Oracle values depend only on the test episode, so they are computed once
    // for every episode any round uses.
    let mut needed = vec![false; cfg.test_episodes];
    draws.iter().flat_map(|(_, te)| te).for_each(|&i| needed[i] = true);
    let wanted: Vec<usize> = (0..cfg.test_episodes).filter(|&i| needed[i]).collect();
    let oracle_seed = derive_seed(cfg.seed, 4);
    let t_oracle = Instant::now();
    let rows = oracle_table(
        &env,
        oracle,
        &wanted.iter().map(|&i| test_joint[i].clone()).collect::<Vec<_>>(),
        oracle_seed,
    );
    let mut table: Vec<Option<Vec<f64>>> = vec![None; cfg.test_episodes];
    for (i, row) in wanted.into_iter().zip(rows) {
        table[i] = row;
    }
    log::info!("oracle table ready in {:.2}s", t_oracle.elapsed().as_secs_f64());

    let rounds = par::map_range(cfg.rounds, |r| {
        run_round(cfg, &space, &train, &test_joint, &table, &draws[r], r)
    });
    let mut results = Vec::new();
    let mut failures = Vec::new();
    for (res, fail) in rounds {
        results.extend(res);
        failures.extend(fail);
    }
    Ok(AeReport::new(cfg, results, failures))
}

fn run_round(
    cfg: &ExperimentConfig,
    space: &AgentSpace,
    train: &TrajectorySet,
    test_joint: &[Vec<Pair>],
    table: &[Option<Vec<f64>>],
    draw: &(Vec<usize>, Vec<usize>),
    round: usize,
) -> (Vec<RoundResult>, Vec<Failure>) {
    let round_seed = derive_seed(cfg.seed, 100 + round as u64);
    let episodes: Vec<Vec<Pair>> = draw.1.iter().map(|&i| test_joint[i].clone()).collect();
    let truth: Vec<Option<Vec<f64>>> = draw.1.iter().map(|&i| table[i].clone()).collect();
    let mut results = Vec::new();
    let mut failures = Vec::new();
    let fail = |method: MethodSpec, rank: Option<usize>, e: &Error| {
        log::warn!("round {round}: {method} failed: {e}");
        Failure { method: method.name().into(), rank, round, error: e.to_string() }
    };

    let learned = cfg.methods.iter().any(|m| m.is_learned());
    let t0 = Instant::now();
    let sds = if learned { Some(prepare(&train.subset(&draw.0), space, &cfg.sets)) } else { None };
    let t_pre = secs(t0, cfg.timings);

    for (mi, &method) in cfg.methods.iter().enumerate() {
        if method == MethodSpec::Uniform {
            let pred = UniformPredictor { n_obs: space.num_joint_observations() };
            let t = Instant::now();
            match absolute_error_with(&pred, &episodes, &truth) {
                Ok(ae) => results.push(RoundResult {
                    method: method.name().into(),
                    rank: None,
                    round,
                    ae,
                    timings: Timings { preprocess: None, model: None, predict: secs(t, cfg.timings) },
                }),
                Err(e) => failures.push(fail(method, None, &e)),
            }
            continue;
        }
        let sds = match sds.as_ref().expect("prepared") {
            Ok(s) => s,
            Err(e) => {
                cfg.ranks.iter().for_each(|&r| failures.push(fail(method, Some(r), e)));
                continue;
            }
        };
        for (ri, &rank) in cfg.ranks.iter().enumerate() {
            let seed = derive_seed(round_seed, (mi * 1000 + ri) as u64);
            let spec = LearnSpec {
                method,
                rank,
                lambda_r: cfg.lambda_r,
                seed,
                max_iters: cfg.max_iters,
                tol: cfg.tol,
                projection: ProjectionSpec::new(cfg.cpsr_d, cfg.cpsr_scheme, seed),
            };
            let t1 = Instant::now();
            let model = match learn(sds, &spec) {
                Ok(m) => m,
                Err(e) => {
                    failures.push(fail(method, Some(rank), &e));
                    continue;
                }
            };
            let t_model = secs(t1, cfg.timings);
            let t2 = Instant::now();
            match absolute_error_with(&model as &dyn Predictor, &episodes, &truth) {
                Ok(ae) => results.push(RoundResult {
                    method: method.name().into(),
                    rank: Some(rank),
                    round,
                    ae,
                    timings: Timings { preprocess: t_pre, model: t_model, predict: secs(t2, cfg.timings) },
                }),
                Err(e) => failures.push(fail(method, Some(rank), &e)),
            }
        }
    }
    (results, failures)
}

