use super::{increment, DenseTensor, Matrix};
use crate::error::{Error, Result};
use crate::par;

fn check_mode(t: &DenseTensor, mode: usize) -> Result<()> {
    if mode >= t.order() {
        return Err(Error::invalid(format!(
            "mode {mode} out of range for order-{} tensor",
            t.order()
        )));
    }
    Ok(())
}

/// (outer, extent, inner) sizes of the row-major view around `mode`.
fn split_sizes(shape: &[usize], mode: usize) -> (usize, usize, usize) {
    let outer = shape[..mode].iter().product();
    let inner = shape[mode + 1..].iter().product();
    (outer, shape[mode], inner)
}

/// For the row-major enumeration of `shape`, the linear index of each
/// multi-index under the lowest-mode-fastest ordering, times `scale`.
fn lowest_fastest(shape: &[usize], scale: usize) -> Vec<usize> {
    let n: usize = shape.iter().product();
    if shape.is_empty() {
        return vec![0];
    }
    let mut weights = vec![scale; shape.len()];
    for k in 1..shape.len() {
        weights[k] = weights[k - 1] * shape[k - 1];
    }
    let mut idx = vec![0usize; shape.len()];
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(idx.iter().zip(&weights).map(|(i, w)| i * w).sum());
        increment(&mut idx, shape);
    }
    out
}

/// Mode-`mode` matricization (zero-based mode).
pub fn unfold(t: &DenseTensor, mode: usize) -> Result<Matrix> {
    check_mode(t, mode)?;
    let shape = t.shape();
    let (outer, n, inner) = split_sizes(shape, mode);
    let cols = outer * inner;
    let co = lowest_fastest(&shape[..mode], 1);
    let ci = lowest_fastest(&shape[mode + 1..], outer);
    let mut out = vec![0.0; n * cols];
    let data = t.data();
    for o in 0..outer {
        for j in 0..n {
            let src = &data[(o * n + j) * inner..(o * n + j + 1) * inner];
            let dst = &mut out[j * cols..(j + 1) * cols];
            for (i, &v) in src.iter().enumerate() {
                dst[co[o] + ci[i]] = v;
            }
        }
    }
    Matrix::new(n, cols, out)
}

/// Inverse of [`unfold`].
pub fn fold(m: &Matrix, mode: usize, shape: &[usize]) -> Result<DenseTensor> {
    super::validate_shape(shape)?;
    if mode >= shape.len() {
        return Err(Error::invalid(format!("mode {mode} out of range for shape {shape:?}")));
    }
    let (outer, n, inner) = split_sizes(shape, mode);
    if m.rows() != n || m.cols() != outer * inner {
        return Err(Error::invalid(format!(
            "cannot fold {}x{} matrix into shape {shape:?} along mode {mode}",
            m.rows(),
            m.cols()
        )));
    }
    let co = lowest_fastest(&shape[..mode], 1);
    let ci = lowest_fastest(&shape[mode + 1..], outer);
    let mut data = vec![0.0; outer * n * inner];
    for o in 0..outer {
        for j in 0..n {
            let row = m.row(j);
            let dst = &mut data[(o * n + j) * inner..(o * n + j + 1) * inner];
            for (i, d) in dst.iter_mut().enumerate() {
                *d = row[co[o] + ci[i]];
            }
        }
    }
    DenseTensor::new(shape.to_vec(), data)
}

/// `t ×_mode m`: contracts the mode-`mode` index of `t` with the columns of `m`.
pub fn nmode_product(t: &DenseTensor, m: &Matrix, mode: usize) -> Result<DenseTensor> {
    check_mode(t, mode)?;
    let shape = t.shape();
    if m.cols() != shape[mode] {
        return Err(Error::invalid(format!(
            "n-mode product: matrix has {} columns but mode {mode} has extent {}",
            m.cols(),
            shape[mode]
        )));
    }
    let (outer, n, inner) = split_sizes(shape, mode);
    let r = m.rows();
    let mut out_shape = shape.to_vec();
    out_shape[mode] = r;
    let mut out = vec![0.0; outer * r * inner];
    let data = t.data();
    par::for_each_chunk_mut(&mut out, r * inner, |o, block| {
        let src = &data[o * n * inner..(o + 1) * n * inner];
        for (p, dst) in block.chunks_mut(inner).enumerate() {
            for (j, &w) in m.row(p).iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let s = &src[j * inner..(j + 1) * inner];
                for (d, &v) in dst.iter_mut().zip(s) {
                    *d += w * v;
                }
            }
        }
    });
    DenseTensor::new(out_shape, out)
}

/// Applies several mode products in the given order.
pub fn multi_mode_product(t: &DenseTensor, ops: &[(usize, &Matrix)]) -> Result<DenseTensor> {
    let mut cur = t.clone();
    for &(mode, m) in ops {
        cur = nmode_product(&cur, m, mode)?;
    }
    Ok(cur)
}

pub fn kron(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for &x in a {
        out.extend(b.iter().map(|y| x * y));
    }
    out
}

/// Column-wise Kronecker product.
pub fn khatri_rao(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols() != b.cols() {
        return Err(Error::invalid(format!(
            "khatri-rao needs equal column counts, got {} and {}",
            a.cols(),
            b.cols()
        )));
    }
    let r = a.cols();
    let mut out = Matrix::zeros(a.rows() * b.rows(), r);
    for ia in 0..a.rows() {
        let ar = a.row(ia);
        for ib in 0..b.rows() {
            let br = b.row(ib);
            let dst = out.row_mut(ia * b.rows() + ib);
            for c in 0..r {
                dst[c] = ar[c] * br[c];
            }
        }
    }
    Ok(out)
}

/// Row-wise products `Π_m A_m[i_m, r]` for every multi-index over `modes`,
/// enumerated row-major. Returns a `count × rank` buffer.
pub(crate) fn row_products(factors: &[&Matrix], shape: &[usize], rank: usize) -> Vec<f64> {
    let count: usize = shape.iter().product();
    let mut out = vec![1.0; count * rank];
    if shape.is_empty() {
        return out;
    }
    let mut idx = vec![0usize; shape.len()];
    for c in 0..count {
        let dst = &mut out[c * rank..(c + 1) * rank];
        for (f, &i) in factors.iter().zip(&idx) {
            for (d, &v) in dst.iter_mut().zip(f.row(i)) {
                *d *= v;
            }
        }
        increment(&mut idx, shape);
    }
    out
}

/// Matricized tensor times Khatri-Rao product for `mode`:
/// `out[j, r] = Σ t[.., j, ..] Π_{m≠mode} A_m[i_m, r]`.
/// `factors[mode]` is not read.
pub fn mttkrp(t: &DenseTensor, factors: &[Matrix], mode: usize) -> Result<Matrix> {
    check_mode(t, mode)?;
    let shape = t.shape();
    if factors.len() != shape.len() {
        return Err(Error::invalid("mttkrp: one factor per mode required"));
    }
    let rank = factors
        .iter()
        .enumerate()
        .find(|(m, _)| *m != mode)
        .map(|(_, f)| f.cols())
        .unwrap_or(0);
    for (m, f) in factors.iter().enumerate() {
        if m != mode && (f.rows() != shape[m] || f.cols() != rank) {
            return Err(Error::invalid(format!(
                "mttkrp: factor {m} is {}x{}, expected {}x{rank}",
                f.rows(),
                f.cols(),
                shape[m]
            )));
        }
    }
    let (outer, n, inner) = split_sizes(shape, mode);
    let outer_f: Vec<&Matrix> = factors[..mode].iter().collect();
    let inner_f: Vec<&Matrix> = factors[mode + 1..].iter().collect();
    let p_outer = row_products(&outer_f, &shape[..mode], rank);
    let p_inner = row_products(&inner_f, &shape[mode + 1..], rank);
    let data = t.data();
    let mut out = vec![0.0; n * rank];
    par::for_each_chunk_mut(&mut out, rank, |j, acc| {
        let mut tmp = vec![0.0; rank];
        for o in 0..outer {
            tmp.iter_mut().for_each(|v| *v = 0.0);
            let src = &data[(o * n + j) * inner..(o * n + j + 1) * inner];
            for (i, &v) in src.iter().enumerate() {
                if v == 0.0 {
                    continue;
                }
                let pr = &p_inner[i * rank..(i + 1) * rank];
                for (t, &p) in tmp.iter_mut().zip(pr) {
                    *t += v * p;
                }
            }
            let po = &p_outer[o * rank..(o + 1) * rank];
            for ((a, &t), &p) in acc.iter_mut().zip(&tmp).zip(po) {
                *a += t * p;
            }
        }
    });
    Matrix::new(n, rank, out)
}

/// `X_(mode) X_(mode)ᵀ` computed without materialising the unfolding.
pub fn gram_along_mode(t: &DenseTensor, mode: usize) -> Result<Matrix> {
    check_mode(t, mode)?;
    let (outer, n, inner) = split_sizes(t.shape(), mode);
    let data = t.data();
    let rows = par::map_range(n, |j| {
        let mut row = vec![0.0; n];
        for (jj, r) in row.iter_mut().enumerate().skip(j) {
            let mut s = 0.0;
            for o in 0..outer {
                let a = &data[(o * n + j) * inner..(o * n + j + 1) * inner];
                let b = &data[(o * n + jj) * inner..(o * n + jj + 1) * inner];
                s += super::matrix::dot(a, b);
            }
            *r = s;
        }
        row
    });
    let mut g = Matrix::zeros(n, n);
    for (j, row) in rows.iter().enumerate() {
        for jj in j..n {
            g.set(j, jj, row[jj]);
            g.set(jj, j, row[jj]);
        }
    }
    Ok(g)
}
