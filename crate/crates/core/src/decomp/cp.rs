//! CP by alternating least squares, and its non-negative variant via
//! column-wise projected updates.

use log::debug;

use super::init::{hals_pass, initial_factor, normalize_columns, psd_pinv, random_unit};
use super::{check_input, relative_error, weighted_row_products, CpFactors, DecompConfig, Decomposition};
use crate::error::Result;
use crate::par;
use crate::rng::seeded;
use crate::tensor::{mttkrp, DenseTensor, Matrix};

/// Fits a rank-`R` CP model. `cfg.method` selects the unconstrained or the
/// non-negative solver.
pub fn cp_decompose(t: &DenseTensor, cfg: &DecompConfig) -> Result<Decomposition<CpFactors>> {
    check_input(t, cfg)?;
    let nonneg = cfg.method.is_nonnegative();
    let r = cfg.ranks[0];
    let k = t.order();
    let last = k - 1;
    let mut rng = seeded(cfg.seed);
    let norm_sq = t.squared_norm();

    let mut factors = Vec::with_capacity(k);
    for m in 0..last {
        factors.push(initial_factor(t, m, r, cfg.init, nonneg, false, &mut rng)?);
    }
    factors.push(Matrix::zeros(t.shape()[last], r));

    if norm_sq == 0.0 {
        let mut f = factors;
        f[last] = Matrix::from_fn(t.shape()[last], r, |_, _| 0.0);
        for kk in 0..r {
            let v = random_unit(t.shape()[last], nonneg, &mut rng);
            f[last].set_col(kk, &v);
        }
        return Ok(Decomposition {
            factors: CpFactors { weights: vec![0.0; r], factors: f },
            fit_error: 0.0,
            iterations: 0,
            converged: true,
            objective_trace: vec![0.0],
            reseeded_columns: 0,
        });
    }

    let mut weights = vec![1.0; r];
    let mut trace = Vec::new();
    let mut reseeded = 0;
    let mut prev_err = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;
    let order: Vec<usize> = std::iter::once(last).chain(0..last).collect();

    for it in 0..cfg.max_iters {
        iterations = it + 1;
        for &mode in &order {
            let mut v = Matrix::from_fn(r, r, |_, _| 1.0);
            for (m, f) in factors.iter().enumerate() {
                if m != mode {
                    v = v.hadamard(&f.gram())?;
                }
            }
            let mt = mttkrp(t, &factors, mode)?;
            let mut a = if !nonneg || it == 0 && mode == last {
                let mut a = mt.matmul(&psd_pinv(&v))?;
                if nonneg {
                    a.data_mut().iter_mut().for_each(|x| *x = x.max(0.0));
                }
                a
            } else {
                let mut a = factors[mode].clone();
                for i in 0..a.rows() {
                    for (x, w) in a.row_mut(i).iter_mut().zip(&weights) {
                        *x *= w;
                    }
                }
                hals_pass(&mut a, &mt, &v);
                a
            };
            let (norms, re) = normalize_columns(&mut a, nonneg, &mut rng);
            if re > 0 {
                debug!("cp: reseeded {re} collapsed column(s) in mode {mode}");
            }
            reseeded += re;
            weights = norms;
            factors[mode] = a;
        }
        let cp = CpFactors { weights: weights.clone(), factors: factors.clone() };
        let obj = residual_sq(t, &cp) / norm_sq;
        trace.push(obj);
        let err = obj.max(0.0).sqrt();
        if (prev_err - err).abs() < cfg.tol || err < 1e-14 {
            converged = true;
            break;
        }
        prev_err = err;
    }

    if !nonneg {
        fix_signs(&mut factors);
    }
    let cp = CpFactors { weights, factors };
    let fit = relative_error(residual_sq(t, &cp), norm_sq);
    Ok(Decomposition {
        factors: cp,
        fit_error: fit,
        iterations,
        converged,
        objective_trace: trace,
        reseeded_columns: reseeded,
    })
}

/// Makes the largest-magnitude entry of every column in modes `0..K-1`
/// non-negative, pushing the sign into the last mode.
fn fix_signs(factors: &mut [Matrix]) {
    let last = factors.len() - 1;
    let r = factors[0].cols();
    for k in 0..r {
        let mut flip = false;
        for f in factors[..last].iter_mut() {
            let col = f.col(k);
            let pivot = col.iter().fold(0.0f64, |b, &x| if x.abs() > b.abs() { x } else { b });
            if pivot < 0.0 {
                f.set_col(k, &col.iter().map(|x| -x).collect::<Vec<_>>());
                flip = !flip;
            }
        }
        if flip {
            let col: Vec<f64> = factors[last].col(k).iter().map(|x| -x).collect();
            factors[last].set_col(k, &col);
        }
    }
}

/// `‖t − [[λ; A(1) … A(K)]]‖²` without forming the reconstruction.
pub(crate) fn residual_sq(t: &DenseTensor, cp: &CpFactors) -> f64 {
    let shape = t.shape();
    let last = shape.len() - 1;
    let r = cp.rank();
    let lead: Vec<&Matrix> = cp.factors[..last].iter().collect();
    let p = weighted_row_products(&lead, &shape[..last], &cp.weights);
    let c = &cp.factors[last];
    let n_last = shape[last];
    let data = t.data();
    let outer = data.len() / n_last;
    let block = 256usize;
    let parts = par::map_range(outer.div_ceil(block), |b| {
        let mut s = 0.0;
        for o in b * block..((b + 1) * block).min(outer) {
            let po = &p[o * r..(o + 1) * r];
            let row = &data[o * n_last..(o + 1) * n_last];
            for (kk, &x) in row.iter().enumerate() {
                let y: f64 = po.iter().zip(c.row(kk)).map(|(a, b)| a * b).sum();
                s += (x - y) * (x - y);
            }
        }
        s
    });
    parts.iter().sum()
}
