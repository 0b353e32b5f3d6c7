use std::collections::BTreeMap;

use super::model::{ModelMeta, PsrModel};
use super::{EPS_CLIP, EPS_DIV};
use crate::error::{Error, Result};
use crate::estimation::{Pair, TestSet};
use crate::tensor::Matrix;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_state(model: &PsrModel, x: &[f64]) -> Result<()> {
    if x.len() != model.rank() {
        return Err(Error::invalid(format!(
            "state has length {}, model rank is {}",
            x.len(),
            model.rank()
        )));
    }
    Ok(())
}

/// `x · M̃_{a1o1} ⋯ M̃_{a(l-1)o(l-1)} · m̃_{alol}` for a joint test. The
/// value is not clipped and may leave `[0, 1]`.
pub fn predict_test(model: &PsrModel, x: &[f64], test: &[Pair]) -> Result<f64> {
    check_state(model, x)?;
    let (last, init) = test
        .split_last()
        .ok_or_else(|| Error::invalid("cannot predict an empty test"))?;
    let mut v = x.to_vec();
    for &p in init {
        v = match model.transition(p)? {
            Some(m) => m.vec_mul(&v),
            None => vec![0.0; v.len()],
        };
    }
    Ok(dot(&v, model.m_one_step(*last)?))
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterOutcome {
    pub state: Vec<f64>,
    /// The denominator vanished and the state fell back to `x0`.
    pub reset: bool,
}

/// `x′ = x M̃_ao / (x m̃_ao)`, or `x0` when the denominator is below
/// [`EPS_DIV`] in magnitude.
pub fn filter_update(model: &PsrModel, x: &[f64], pair: Pair) -> Result<FilterOutcome> {
    check_state(model, x)?;
    let denom = dot(x, model.m_one_step(pair)?);
    if !(denom.abs() >= EPS_DIV) {
        return Ok(FilterOutcome { state: model.x0.clone(), reset: true });
    }
    let state = match model.transition(pair)? {
        Some(m) => m.vec_mul(x).into_iter().map(|v| v / denom).collect(),
        None => vec![0.0; x.len()],
    };
    Ok(FilterOutcome { state, reset: false })
}

/// Clip-and-renormalise distribution over joint observations after joint
/// action `ja`.
pub fn predict_next_obs_dist(model: &PsrModel, x: &[f64], ja: usize) -> Result<Vec<f64>> {
    check_state(model, x)?;
    let n_jo = model.space.num_joint_observations();
    let mut p = Vec::with_capacity(n_jo);
    for jo in 0..n_jo {
        let raw = dot(x, model.m_one_step((ja, jo))?);
        p.push(if raw.is_finite() { raw.max(EPS_CLIP) } else { EPS_CLIP });
    }
    Ok(normalize(p))
}

pub(crate) fn normalize(mut p: Vec<f64>) -> Vec<f64> {
    let s: f64 = p.iter().sum();
    if s > 0.0 && s.is_finite() {
        p.iter_mut().for_each(|v| *v /= s);
    } else {
        let u = 1.0 / p.len() as f64;
        p.iter_mut().for_each(|v| *v = u);
    }
    p
}

/// How other agents' actions are folded when marginalising.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActionWeighting {
    /// Plain sum over the other agents' actions and observations.
    Sum,
    /// Sum over observations, mean over actions (uniform action policy for
    /// the other agents), which keeps one-step predictions normalised.
    Mean,
}

/// Per-agent model whose parameters are sums of the joint ones over every
/// other agent's action and observation.
pub fn marginalize_model(model: &PsrModel, agent: usize) -> Result<PsrModel> {
    marginalize_model_with(model, agent, ActionWeighting::Sum)
}

pub fn marginalize_model_with(
    model: &PsrModel,
    agent: usize,
    weighting: ActionWeighting,
) -> Result<PsrModel> {
    let space = &model.space;
    if agent >= space.num_agents() {
        return Err(Error::invalid(format!(
            "agent {agent} out of range for {} agents",
            space.num_agents()
        )));
    }
    let sub = space.agent(agent);
    let r = model.rank();
    let no = sub.observations[0];
    let n_pairs = sub.num_pairs(0);
    let scale = match weighting {
        ActionWeighting::Sum => 1.0,
        ActionWeighting::Mean => (sub.actions[0] as f64) / (space.num_joint_actions() as f64),
    };
    let mut m = Matrix::zeros(n_pairs, r);
    let mut big: BTreeMap<Pair, Matrix> = BTreeMap::new();
    let mut seen = vec![false; n_pairs];
    for ja in 0..space.num_joint_actions() {
        for jo in 0..space.num_joint_observations() {
            let (a, o) = space.project((ja, jo), agent);
            let i = a * no + o;
            let src = model.m_one_step((ja, jo))?;
            for (d, s) in m.row_mut(i).iter_mut().zip(src) {
                *d += scale * s;
            }
            if !model.unobserved.contains(&(ja, jo)) {
                seen[i] = true;
            }
            if let Some(t) = model.transition((ja, jo))? {
                let mut t = t.clone();
                t.scale(scale);
                big.entry((a, o)).or_insert_with(|| Matrix::zeros(r, r)).add_assign(&t);
            }
        }
    }
    let tuples = (0..n_pairs).map(|i| vec![i]).collect();
    let unobserved = (0..n_pairs).filter(|&i| !seen[i]).map(|i| (i / no, i % no)).collect();
    let meta = ModelMeta { method: format!("{}-agent{agent}", model.meta.method), ..model.meta.clone() };
    PsrModel::new(meta, sub.clone(), model.x0.clone(), TestSet::one_step(&sub), tuples, m, big, unobserved)
}
