//! Dense factorizations backed by nalgebra, with the ordering and sign
//! conventions the rest of the crate relies on.

use nalgebra::{DMatrix, SymmetricEigen, SVD};

use super::Matrix;
use crate::error::{Error, Result};

/// Above this many entries a wide matrix's left subspace is taken from its
/// Gram matrix instead of a full SVD.
const GRAM_ROUTE_ENTRIES: usize = 1 << 22;

#[derive(Clone, Debug)]
pub struct Svd {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

/// Flips column `k` of `u` (and `v`, if given) so that its largest-magnitude
/// entry is non-negative.
fn fix_sign(u: &mut Matrix, v: Option<&mut Matrix>, k: usize) {
    let mut best = 0.0f64;
    let mut sign = 1.0;
    for i in 0..u.rows() {
        let x = u.get(i, k);
        if x.abs() > best {
            best = x.abs();
            sign = x.signum();
        }
    }
    if sign < 0.0 {
        for i in 0..u.rows() {
            u.set(i, k, -u.get(i, k));
        }
        if let Some(v) = v {
            for i in 0..v.rows() {
                v.set(i, k, -v.get(i, k));
            }
        }
    }
}

/// Best rank-`r` approximation factors `U diag(s) Vᵀ`, singular values
/// non-increasing, each left singular vector's largest-magnitude entry
/// non-negative.
pub fn truncated_svd(m: &Matrix, r: usize) -> Result<Svd> {
    let kmax = m.rows().min(m.cols());
    if r == 0 || r > kmax {
        return Err(Error::invalid(format!(
            "svd rank {r} out of range 1..={kmax} for {}x{} matrix",
            m.rows(),
            m.cols()
        )));
    }
    if m.rows() * m.cols() > GRAM_ROUTE_ENTRIES {
        return truncated_svd_gram(m, r);
    }
    let svd = SVD::new(m.to_nalgebra(), true, true);
    let u_full = svd.u.expect("requested U");
    let vt_full = svd.v_t.expect("requested Vt");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut u = Matrix::zeros(m.rows(), r);
    let mut v = Matrix::zeros(m.cols(), r);
    let mut s = Vec::with_capacity(r);
    for (k, &src) in order.iter().take(r).enumerate() {
        s.push(svd.singular_values[src].max(0.0));
        for i in 0..m.rows() {
            u.set(i, k, u_full[(i, src)]);
        }
        for j in 0..m.cols() {
            v.set(j, k, vt_full[(src, j)]);
        }
        fix_sign(&mut u, Some(&mut v), k);
    }
    Ok(Svd { u, s, v })
}

/// Large-matrix route: eigenvectors of the Gram matrix on the smaller side,
/// the other side recovered by one multiplication.
fn truncated_svd_gram(m: &Matrix, r: usize) -> Result<Svd> {
    let wide = m.rows() < m.cols();
    let mt = m.transpose();
    let (a, b) = if wide { (&mt, m) } else { (m, &mt) };
    // a is tall: a = U S Vᵀ with V from eig(aᵀa), U = a V / s
    let (vals, v) = symmetric_top_eigen(&gram_rows(b), r)?;
    let s: Vec<f64> = vals.iter().map(|&x| x.max(0.0).sqrt()).collect();
    let av = a.matmul(&v)?;
    let cut = s.first().copied().unwrap_or(0.0) * 1e-13;
    let mut u = Matrix::zeros(a.rows(), r);
    let mut good = 0;
    for k in 0..r {
        if s[k] > cut && s[k] > 0.0 {
            let col: Vec<f64> = av.col(k).iter().map(|x| x / s[k]).collect();
            u.set_col(k, &col);
            good = k + 1;
        }
    }
    if good < r {
        let head = Matrix::from_fn(a.rows(), good, |i, j| u.get(i, j));
        u = complete_orthonormal(&head, r);
    }
    let (mut u, mut v) = if wide { (v, u) } else { (u, v) };
    for k in 0..r {
        fix_sign(&mut u, Some(&mut v), k);
    }
    Ok(Svd { u, s, v })
}

/// Leading `r` eigenpairs of a symmetric matrix, eigenvalues non-increasing.
pub fn symmetric_top_eigen(g: &Matrix, r: usize) -> Result<(Vec<f64>, Matrix)> {
    let n = g.rows();
    if g.cols() != n {
        return Err(Error::invalid("eigendecomposition needs a square matrix"));
    }
    if r == 0 || r > n {
        return Err(Error::invalid(format!("eigen rank {r} out of range 1..={n}")));
    }
    let eig = SymmetricEigen::new(g.to_nalgebra());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut vecs = Matrix::zeros(n, r);
    let mut vals = Vec::with_capacity(r);
    for (k, &src) in order.iter().take(r).enumerate() {
        vals.push(eig.eigenvalues[src]);
        for i in 0..n {
            vecs.set(i, k, eig.eigenvectors[(i, src)]);
        }
        fix_sign(&mut vecs, None, k);
    }
    Ok((vals, vecs))
}

/// Extends the orthonormal columns of `u` to `r` columns with Gram-Schmidt
/// over the canonical basis.
pub fn complete_orthonormal(u: &Matrix, r: usize) -> Matrix {
    let n = u.rows();
    assert!(r <= n, "cannot build {r} orthonormal columns in dimension {n}");
    let mut cols: Vec<Vec<f64>> = (0..u.cols().min(r)).map(|j| u.col(j)).collect();
    let mut e = 0;
    while cols.len() < r && e < n {
        let mut v = vec![0.0; n];
        v[e] = 1.0;
        e += 1;
        for _ in 0..2 {
            for c in &cols {
                let p: f64 = c.iter().zip(&v).map(|(a, b)| a * b).sum();
                for (x, y) in v.iter_mut().zip(c) {
                    *x -= p * y;
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            cols.push(v);
        }
    }
    let mut out = Matrix::zeros(n, r);
    for (j, c) in cols.iter().enumerate() {
        out.set_col(j, c);
    }
    out
}

/// Orthonormal basis for the leading `r`-dimensional left singular subspace.
pub fn left_subspace(m: &Matrix, r: usize) -> Result<Matrix> {
    if r == 0 || r > m.rows() {
        return Err(Error::invalid(format!(
            "subspace rank {r} out of range 1..={}",
            m.rows()
        )));
    }
    let kmax = m.rows().min(m.cols());
    let take = r.min(kmax);
    let basis = if m.rows() <= m.cols() && m.rows() * m.cols() > GRAM_ROUTE_ENTRIES {
        let g = gram_rows(m);
        symmetric_top_eigen(&g, take)?.1
    } else {
        truncated_svd(m, take)?.u
    };
    if take < r {
        Ok(complete_orthonormal(&basis, r))
    } else {
        Ok(basis)
    }
}

/// `M Mᵀ`.
fn gram_rows(m: &Matrix) -> Matrix {
    let n = m.rows();
    let rows = crate::par::map_range(n, |i| {
        (0..n)
            .map(|j| if j < i { 0.0 } else { super::matrix::dot(m.row(i), m.row(j)) })
            .collect::<Vec<_>>()
    });
    Matrix::from_fn(n, n, |i, j| if j >= i { rows[i][j] } else { rows[j][i] })
}

/// `argmin_M ‖aM − b‖²_F + λ‖M‖²_F`, solved by QR on the augmented system.
pub fn ridge_solve(a: &Matrix, b: &Matrix, lambda_r: f64) -> Result<Matrix> {
    if a.rows() != b.rows() {
        return Err(Error::invalid(format!(
            "ridge_solve row mismatch: a has {} rows, b has {}",
            a.rows(),
            b.rows()
        )));
    }
    if !(lambda_r >= 0.0) || !lambda_r.is_finite() {
        return Err(Error::invalid(format!("ridge weight must be finite and >= 0, got {lambda_r}")));
    }
    let n = a.cols();
    if n == 0 {
        return Ok(Matrix::zeros(0, b.cols()));
    }
    let (lhs, rhs) = if lambda_r > 0.0 {
        let s = lambda_r.sqrt();
        let mut lhs = DMatrix::<f64>::zeros(a.rows() + n, n);
        let mut rhs = DMatrix::<f64>::zeros(a.rows() + n, b.cols());
        for i in 0..a.rows() {
            for j in 0..n {
                lhs[(i, j)] = a.get(i, j);
            }
            for j in 0..b.cols() {
                rhs[(i, j)] = b.get(i, j);
            }
        }
        for j in 0..n {
            lhs[(a.rows() + j, j)] = s;
        }
        (lhs, rhs)
    } else {
        if a.rows() < n {
            return Err(Error::SingularSystem(format!(
                "{} equations for {n} unknowns with no regularization",
                a.rows()
            )));
        }
        (a.to_nalgebra(), b.to_nalgebra())
    };
    let qr = lhs.qr();
    let r = qr.r();
    let max_diag = (0..n).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if max_diag == 0.0 || (0..n).any(|i| r[(i, i)].abs() <= 1e-13 * max_diag) {
        return Err(Error::SingularSystem(
            "normal equations are rank deficient; use a positive ridge weight".into(),
        ));
    }
    let qtb = qr.q().transpose() * rhs;
    let sol = r
        .solve_upper_triangular(&qtb)
        .ok_or_else(|| Error::SingularSystem("triangular solve failed".into()))?;
    Ok(Matrix::from_nalgebra(&sol))
}
