use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::model::{ModelMeta, PsrModel};
use crate::decomp::{decompose, DecompConfig, Factors};
use crate::error::{Error, Result};
use crate::estimation::{AgentSpace, HistorySet, Pair, SysDynTensor, TestSet};
use crate::par;
use crate::tensor::{multi_mode_product, ridge_solve, Matrix};

/// Row `k` is the state of history `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateMatrix {
    pub x: Matrix,
}

impl StateMatrix {
    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn state(&self, k: usize) -> &[f64] {
        self.x.row(k)
    }

    /// State of the null history.
    pub fn x0(&self) -> &[f64] {
        self.x.row(HistorySet::NULL)
    }
}

/// The history factor.
pub fn extract_states(f: &Factors) -> StateMatrix {
    StateMatrix { x: f.last_factor().clone() }
}

/// `m̃` for one tuple of per-agent test indices, such that `x_k · m̃`
/// reproduces the factored tensor entry.
pub fn extract_prediction_params(f: &Factors, tuple: &[usize]) -> Result<Vec<f64>> {
    let shape = f.shape();
    check_tuple(&shape, tuple)?;
    match f {
        Factors::Cp(cp) => {
            let mut m = cp.weights.clone();
            for (a, &i) in cp.factors.iter().zip(tuple) {
                for (v, x) in m.iter_mut().zip(a.row(i)) {
                    *v *= x;
                }
            }
            Ok(m)
        }
        Factors::Tucker(td) => {
            let rows: Vec<Matrix> = td
                .factors
                .iter()
                .zip(tuple)
                .map(|(a, &i)| Matrix::new(1, a.cols(), a.row(i).to_vec()))
                .collect::<Result<_>>()?;
            let ops: Vec<(usize, &Matrix)> = rows.iter().enumerate().collect();
            Ok(multi_mode_product(&td.core, &ops)?.into_data())
        }
    }
}

fn check_tuple(shape: &[usize], tuple: &[usize]) -> Result<()> {
    let n = shape.len() - 1;
    if tuple.len() != n || tuple.iter().zip(shape).any(|(&i, &s)| i >= s) {
        return Err(Error::invalid(format!(
            "test tuple {tuple:?} out of range for factor shape {shape:?}"
        )));
    }
    Ok(())
}

/// `m̃` rows for many tuples at once.
pub fn extract_prediction_matrix(f: &Factors, tuples: &[Vec<usize>]) -> Result<Matrix> {
    let shape = f.shape();
    for t in tuples {
        check_tuple(&shape, t)?;
    }
    match f {
        Factors::Cp(_) => {
            let rows = par::map_slice(tuples, |t| extract_prediction_params(f, t));
            let r = f.last_factor().cols();
            let mut data = Vec::with_capacity(tuples.len() * r);
            for row in rows {
                data.extend(row?);
            }
            Matrix::new(tuples.len(), r, data)
        }
        Factors::Tucker(td) => {
            let n = td.factors.len() - 1;
            let ops: Vec<(usize, &Matrix)> = td.factors[..n].iter().enumerate().collect();
            let p = multi_mode_product(&td.core, &ops)?;
            let r = td.core.shape()[n];
            let strides = p.strides();
            let mut m = Matrix::zeros(tuples.len(), r);
            for (row, t) in tuples.iter().enumerate() {
                let off: usize = t.iter().zip(&strides).map(|(i, s)| i * s).sum();
                m.row_mut(row).copy_from_slice(&p.data()[off..off + r]);
            }
            Ok(m)
        }
    }
}

/// Aligned history indices `(h′, h′·ao)` for every `h′·ao` in the set.
pub fn build_regression_sets(hists: &HistorySet, pair: Pair) -> (Vec<usize>, Vec<usize>) {
    let mut prev = Vec::new();
    let mut ext = Vec::new();
    for (k, h) in hists.iter().enumerate() {
        if h.last() == Some(&pair) {
            if let Some(p) = hists.index_of(&h[..h.len() - 1]) {
                prev.push(p);
                ext.push(k);
            }
        }
    }
    (prev, ext)
}

fn all_regression_sets(hists: &HistorySet) -> HashMap<Pair, (Vec<usize>, Vec<usize>)> {
    let mut out: HashMap<Pair, (Vec<usize>, Vec<usize>)> = HashMap::new();
    for (k, h) in hists.iter().enumerate() {
        if let Some(&last) = h.last() {
            if let Some(p) = hists.index_of(&h[..h.len() - 1]) {
                let e = out.entry(last).or_default();
                e.0.push(p);
                e.1.push(k);
            }
        }
    }
    out
}

/// `argmin_M ‖X M − diag(X m̃) X_ao‖² + λ‖M‖²`.
pub fn learn_transition(x: &Matrix, x_ao: &Matrix, m: &[f64], lambda_r: f64) -> Result<Matrix> {
    if x.shape() != x_ao.shape() || x.cols() != m.len() {
        return Err(Error::invalid(format!(
            "regression shapes disagree: X {:?}, X_ao {:?}, m̃ {}",
            x.shape(),
            x_ao.shape(),
            m.len()
        )));
    }
    let d = x.mul_vec(m);
    let mut rhs = x_ao.clone();
    for (i, &di) in d.iter().enumerate() {
        rhs.row_mut(i).iter_mut().for_each(|v| *v *= di);
    }
    ridge_solve(x, &rhs, lambda_r)
}

/// Shared final stage of every learner: one `M̃` regression per joint
/// one-step pair that has data.
#[allow(clippy::too_many_arguments)]
pub fn package_model(
    meta: ModelMeta,
    space: &AgentSpace,
    tests: &TestSet,
    tuples: Vec<Vec<usize>>,
    mtilde: Matrix,
    states: &StateMatrix,
    hists: &HistorySet,
    lambda_r: f64,
    unobserved: Vec<Pair>,
) -> Result<PsrModel> {
    if states.len() != hists.len() {
        return Err(Error::invalid("one state row per history required"));
    }
    if hists.is_empty() || !hists.get(HistorySet::NULL).is_empty() {
        return Err(Error::invalid("history set lacks the null history"));
    }
    let mut model = PsrModel::new(
        meta,
        space.clone(),
        states.x0().to_vec(),
        tests.clone(),
        tuples,
        mtilde,
        BTreeMap::new(),
        unobserved,
    )?;
    let sets = all_regression_sets(hists);
    let mut pairs: Vec<Pair> = sets.keys().copied().collect();
    pairs.sort_unstable();
    let learned = par::map_slice(&pairs, |&pair| -> Result<Matrix> {
        let (prev, ext) = &sets[&pair];
        let x = states.x.select_rows(prev);
        let x_ao = states.x.select_rows(ext);
        learn_transition(&x, &x_ao, model.m_one_step(pair)?, lambda_r)
    });
    for (pair, m) in pairs.into_iter().zip(learned) {
        model.transitions.insert(pair, m?);
    }
    Ok(model)
}

/// Decomposes the dynamics tensor and assembles the model.
pub fn learn_psr(sds: &SysDynTensor, cfg: &DecompConfig, lambda_r: f64) -> Result<PsrModel> {
    let hists = &sds.histories;
    if hists.is_empty() || !hists.get(HistorySet::NULL).is_empty() {
        return Err(Error::invalid("history set lacks the null history"));
    }
    let d = decompose(&sds.tensor, cfg)?;
    let tuples = sds.valid_tuples();
    let mut mtilde = extract_prediction_matrix(&d.factors, &tuples)?;
    let unobserved = zero_unobserved(sds, &tuples, &mut mtilde);
    let states = extract_states(&d.factors);
    let canonical = serde_json::to_string(&(cfg, lambda_r, sds.tensor.shape()))?;
    let meta = ModelMeta {
        method: cfg.method.name().to_string(),
        ranks: cfg.ranks.clone(),
        seed: cfg.seed,
        lambda_r,
        config_hash: crate::config_hash(&canonical),
        fit_error: Some(d.fit_error),
        iterations: Some(d.iterations),
        num_histories: hists.len(),
    };
    package_model(meta, &sds.space, &sds.tests, tuples, mtilde, &states, hists, lambda_r, unobserved)
}

/// Zeroes `m̃` of one-step pairs whose tensor slice is empty and returns them.
pub(crate) fn zero_unobserved(
    sds: &SysDynTensor,
    tuples: &[Vec<usize>],
    mtilde: &mut Matrix,
) -> Vec<Pair> {
    let row_of: HashMap<&[usize], usize> =
        tuples.iter().enumerate().map(|(i, t)| (t.as_slice(), i)).collect();
    let strides = sds.tensor.strides();
    let nh = sds.histories.len();
    let space = &sds.space;
    let mut out = Vec::new();
    for ja in 0..space.num_joint_actions() {
        for jo in 0..space.num_joint_observations() {
            let t = sds.tests.one_step_tuple(space, (ja, jo));
            let off: usize = t.iter().zip(&strides).map(|(i, s)| i * s).sum();
            if sds.tensor.data()[off..off + nh].iter().all(|&v| v == 0.0) {
                if let Some(&r) = row_of.get(t.as_slice()) {
                    mtilde.row_mut(r).iter_mut().for_each(|v| *v = 0.0);
                }
                out.push((ja, jo));
            }
        }
    }
    out
}
