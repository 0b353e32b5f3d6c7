//! Tucker by higher-order orthogonal iteration, and a non-negative variant
//! with projected factor updates and a multiplicative core update.

use log::debug;

use super::init::{hals_pass, initial_factor, normalize_columns};
use super::{
    check_input, relative_error, residual_sq_dense, DecompConfig, Decomposition, TuckerFactors,
};
use crate::error::Result;
use crate::rng::seeded;
use crate::tensor::{
    complete_orthonormal, left_subspace, multi_mode_product, nmode_product, unfold, DenseTensor,
    Matrix,
};

const CORE_INNER_ITERS: usize = 2;

pub fn tucker_decompose(
    t: &DenseTensor,
    cfg: &DecompConfig,
) -> Result<Decomposition<TuckerFactors>> {
    check_input(t, cfg)?;
    if cfg.method.is_nonnegative() {
        ntd(t, cfg)
    } else {
        hooi(t, cfg)
    }
}

/// `t ×_m A_mᵀ` over every mode except `skip`, contracting the modes with
/// the largest shrink first.
fn project_except(t: &DenseTensor, factors: &[Matrix], skip: Option<usize>) -> Result<DenseTensor> {
    let mut modes: Vec<usize> = (0..factors.len()).filter(|&m| Some(m) != skip).collect();
    modes.sort_by(|&a, &b| {
        let ra = factors[a].cols() as f64 / factors[a].rows() as f64;
        let rb = factors[b].cols() as f64 / factors[b].rows() as f64;
        ra.partial_cmp(&rb).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    let mut y = t.clone();
    for m in modes {
        y = nmode_product(&y, &factors[m].transpose(), m)?;
    }
    Ok(y)
}

fn zero_result(t: &DenseTensor, ranks: &[usize]) -> Result<Decomposition<TuckerFactors>> {
    let factors = t
        .shape()
        .iter()
        .zip(ranks)
        .map(|(&n, &r)| complete_orthonormal(&Matrix::zeros(n, 0), r))
        .collect();
    Ok(Decomposition {
        factors: TuckerFactors { core: DenseTensor::zeros(ranks.to_vec())?, factors },
        fit_error: 0.0,
        iterations: 0,
        converged: true,
        objective_trace: vec![0.0],
        reseeded_columns: 0,
    })
}

fn hooi(t: &DenseTensor, cfg: &DecompConfig) -> Result<Decomposition<TuckerFactors>> {
    let k = t.order();
    let last = k - 1;
    let ranks = &cfg.ranks;
    let norm_sq = t.squared_norm();
    if norm_sq == 0.0 {
        return zero_result(t, ranks);
    }
    let mut rng = seeded(cfg.seed);
    let mut factors = Vec::with_capacity(k);
    for m in 0..last {
        factors.push(initial_factor(t, m, ranks[m], cfg.init, false, true, &mut rng)?);
    }
    factors.push(complete_orthonormal(&Matrix::zeros(t.shape()[last], 0), ranks[last]));

    let order: Vec<usize> = std::iter::once(last).chain(0..last).collect();
    let mut trace = Vec::new();
    let mut prev_err = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    let mut core = DenseTensor::zeros(ranks.clone())?;

    for it in 0..cfg.max_iters {
        iterations = it + 1;
        let mut y_last = None;
        for &mode in &order {
            let y = project_except(t, &factors, Some(mode))?;
            factors[mode] = left_subspace(&unfold(&y, mode)?, ranks[mode])?;
            y_last = Some((y, mode));
        }
        let (y, mode) = y_last.expect("at least one mode");
        core = nmode_product(&y, &factors[mode].transpose(), mode)?;
        let obj = ((norm_sq - core.squared_norm()) / norm_sq).max(0.0);
        trace.push(obj);
        let err = obj.sqrt();
        if (prev_err - err).abs() < cfg.tol || err < 1e-14 {
            converged = true;
            break;
        }
        prev_err = err;
    }

    let tf = TuckerFactors { core, factors };
    let fit = relative_error(residual_sq_dense(t, &tf.reconstruct()?), norm_sq);
    Ok(Decomposition {
        factors: tf,
        fit_error: fit,
        iterations,
        converged,
        objective_trace: trace,
        reseeded_columns: 0,
    })
}

fn ntd(t: &DenseTensor, cfg: &DecompConfig) -> Result<Decomposition<TuckerFactors>> {
    let k = t.order();
    let last = k - 1;
    let ranks = &cfg.ranks;
    let norm_sq = t.squared_norm();
    if norm_sq == 0.0 {
        let mut d = zero_result(t, ranks)?;
        for f in &mut d.factors.factors {
            f.data_mut().iter_mut().for_each(|v| *v = v.abs());
        }
        return Ok(d);
    }
    let mut rng = seeded(cfg.seed);
    let mut reseeded = 0;
    let mut factors = Vec::with_capacity(k);
    for m in 0..last {
        factors.push(initial_factor(t, m, ranks[m], cfg.init, true, false, &mut rng)?);
    }
    factors.push(Matrix::zeros(t.shape()[last], ranks[last]));
    {
        let y = project_except(t, &factors, Some(last))?;
        let mut a = left_subspace(&unfold(&y, last)?, ranks[last])?;
        a.data_mut().iter_mut().for_each(|v| *v = v.abs());
        reseeded += normalize_columns(&mut a, true, &mut rng).1;
        factors[last] = a;
    }
    let mut core = project_except(t, &factors, None)?;
    let floor = core.data().iter().fold(0.0f64, |m, &v| m.max(v)) * 1e-6;
    core.data_mut().iter_mut().for_each(|v| *v = v.max(floor));

    let mut trace = Vec::new();
    let mut prev_err = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;

    for it in 0..cfg.max_iters {
        iterations = it + 1;
        for mode in 0..k {
            let grams: Vec<Matrix> = factors.iter().map(Matrix::gram).collect();
            let y = project_except(t, &factors, Some(mode))?;
            let g_n = unfold(&core, mode)?;
            let m = unfold(&y, mode)?.matmul(&g_n.transpose())?;
            let ops: Vec<(usize, &Matrix)> =
                grams.iter().enumerate().filter(|(j, _)| *j != mode).collect();
            let w = multi_mode_product(&core, &ops)?;
            let v = g_n.matmul(&unfold(&w, mode)?.transpose())?;
            let mut a = factors[mode].clone();
            hals_pass(&mut a, &m, &v);
            let (norms, re) = normalize_columns(&mut a, true, &mut rng);
            if re > 0 {
                debug!("ntd: reseeded {re} collapsed column(s) in mode {mode}");
            }
            reseeded += re;
            core = nmode_product(&core, &Matrix::diag(&norms), mode)?;
            factors[mode] = a;
        }
        let p = project_except(t, &factors, None)?;
        let grams: Vec<Matrix> = factors.iter().map(Matrix::gram).collect();
        let ops: Vec<(usize, &Matrix)> = grams.iter().enumerate().collect();
        for _ in 0..CORE_INNER_ITERS {
            let q = multi_mode_product(&core, &ops)?;
            for ((g, &pv), &qv) in core.data_mut().iter_mut().zip(p.data()).zip(q.data()) {
                if qv > 0.0 {
                    *g *= pv / qv;
                }
            }
        }
        let tf = TuckerFactors { core: core.clone(), factors: factors.clone() };
        let obj = residual_sq_dense(t, &tf.reconstruct()?) / norm_sq;
        trace.push(obj);
        let err = obj.max(0.0).sqrt();
        if (prev_err - err).abs() < cfg.tol || err < 1e-14 {
            converged = true;
            break;
        }
        prev_err = err;
    }

    let tf = TuckerFactors { core, factors };
    let fit = relative_error(residual_sq_dense(t, &tf.reconstruct()?), norm_sq);
    Ok(Decomposition {
        factors: tf,
        fit_error: fit,
        iterations,
        converged,
        objective_trace: trace,
        reseeded_columns: reseeded,
    })
}
