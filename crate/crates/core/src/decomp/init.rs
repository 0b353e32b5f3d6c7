//! Factor initialisation and small helpers shared by the CP and Tucker
//! solvers.

use nalgebra::SymmetricEigen;
use rand::Rng as _;

use super::Init;
use crate::error::Result;
use crate::rng::Rng;
use crate::tensor::{gram_along_mode, symmetric_top_eigen, truncated_svd, DenseTensor, Matrix};

/// Initial `n_m × r` factor for `mode`. Columns have unit norm. With
/// `nonneg`, entries are non-negative.
pub(crate) fn initial_factor(
    t: &DenseTensor,
    mode: usize,
    r: usize,
    init: Init,
    nonneg: bool,
    orthonormal: bool,
    rng: &mut Rng,
) -> Result<Matrix> {
    let n = t.shape()[mode];
    let mut a = match init {
        Init::Svd => {
            let take = r.min(n);
            let (_, vecs) = symmetric_top_eigen(&gram_along_mode(t, mode)?, take)?;
            let mut a = Matrix::zeros(n, r);
            for k in 0..take {
                a.set_col(k, &vecs.col(k));
            }
            for k in take..r {
                a.set_col(k, &random_unit(n, true, rng));
            }
            a
        }
        Init::Random => {
            if orthonormal {
                let g = Matrix::from_fn(n, r.min(n), |_, _| rng.random::<f64>() - 0.5);
                let u = truncated_svd(&g, r.min(n))?.u;
                let mut a = Matrix::zeros(n, r);
                for k in 0..r.min(n) {
                    a.set_col(k, &u.col(k));
                }
                a
            } else {
                Matrix::from_fn(n, r, |_, _| rng.random::<f64>())
            }
        }
    };
    if nonneg {
        a.data_mut().iter_mut().for_each(|v| *v = v.abs());
    }
    if !orthonormal {
        normalize_columns(&mut a, nonneg, rng);
    }
    Ok(a)
}

/// Random unit vector, uniform entries in `[0,1)` or `[-0.5,0.5)`.
pub(crate) fn random_unit(n: usize, nonneg: bool, rng: &mut Rng) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                if nonneg {
                    u
                } else {
                    u - 0.5
                }
            })
            .collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            v.iter_mut().for_each(|x| *x /= norm);
            return v;
        }
    }
}

/// Scales columns to unit norm and returns the removed norms. Zero columns
/// are replaced by random unit columns and report a norm of zero.
pub(crate) fn normalize_columns(a: &mut Matrix, nonneg: bool, rng: &mut Rng) -> (Vec<f64>, usize) {
    let norms = a.column_norms();
    let mut reseeded = 0;
    for (k, &nk) in norms.iter().enumerate() {
        if nk > 0.0 && nk.is_finite() {
            for i in 0..a.rows() {
                a.set(i, k, a.get(i, k) / nk);
            }
        } else {
            a.set_col(k, &random_unit(a.rows(), nonneg, rng));
            reseeded += 1;
        }
    }
    let norms = norms.into_iter().map(|v| if v.is_finite() { v } else { 0.0 }).collect();
    (norms, reseeded)
}

/// Moore-Penrose inverse of a symmetric positive semidefinite matrix.
pub(crate) fn psd_pinv(v: &Matrix) -> Matrix {
    let eig = SymmetricEigen::new(v.to_nalgebra());
    let max = eig.eigenvalues.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    let cut = max * 1e-13 * v.rows() as f64;
    let n = v.rows();
    let mut out = Matrix::zeros(n, n);
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam.abs() <= cut || lam == 0.0 {
            continue;
        }
        let inv = 1.0 / lam;
        for i in 0..n {
            let qi = eig.eigenvectors[(i, k)] * inv;
            if qi == 0.0 {
                continue;
            }
            for j in 0..n {
                out.data_mut()[i * n + j] += qi * eig.eigenvectors[(j, k)];
            }
        }
    }
    out
}

/// One pass of column-wise projected updates for `min ‖X − A Bᵀ‖` with
/// `A ≥ 0`, given `m = X B` and `v = BᵀB`.
pub(crate) fn hals_pass(a: &mut Matrix, m: &Matrix, v: &Matrix) {
    let (n, r) = a.shape();
    for k in 0..r {
        let vkk = v.get(k, k);
        if vkk <= 0.0 {
            continue;
        }
        for i in 0..n {
            let ai = a.row(i);
            let av: f64 = ai.iter().enumerate().map(|(j, &x)| x * v.get(j, k)).sum();
            let upd = ai[k] + (m.get(i, k) - av) / vkk;
            a.set(i, k, upd.max(0.0));
        }
    }
}
