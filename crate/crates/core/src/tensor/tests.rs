use proptest::prelude::*;
use rand::Rng as _;

use super::*;
use crate::rng::seeded;

fn random_tensor(shape: &[usize], seed: u64) -> DenseTensor {
    let mut rng = seeded(seed);
    DenseTensor::from_fn(shape.to_vec(), |_| rng.random_range(-1.0..1.0)).unwrap()
}

fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = seeded(seed);
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Mode-k unfolding by explicit index arithmetic over every entry.
fn unfold_oracle(t: &DenseTensor, mode: usize) -> Matrix {
    let shape = t.shape().to_vec();
    let cols: usize = shape.iter().enumerate().filter(|(m, _)| *m != mode).map(|(_, n)| n).product();
    let mut out = Matrix::zeros(shape[mode], cols);
    let mut idx = vec![0; shape.len()];
    for _ in 0..t.len() {
        let mut col = 0;
        let mut w = 1;
        for m in 0..shape.len() {
            if m == mode {
                continue;
            }
            col += idx[m] * w;
            w *= shape[m];
        }
        out.set(idx[mode], col, t.get(&idx));
        increment(&mut idx, &shape);
    }
    out
}

#[test]
fn unfold_2x2x2_index_pattern() {
    let t = DenseTensor::from_fn(vec![2, 2, 2], |i| (1 + i[0] + 2 * i[1] + 4 * i[2]) as f64).unwrap();
    let m = unfold(&t, 0).unwrap();
    assert_eq!(m.row(0), &[1.0, 3.0, 5.0, 7.0]);
    assert_eq!(m.row(1), &[2.0, 4.0, 6.0, 8.0]);
    assert_eq!(m, unfold_oracle(&t, 0));
}

#[test]
fn unfold_order_two_is_the_matrix() {
    let t = random_tensor(&[3, 4], 1);
    let m = unfold(&t, 0).unwrap();
    assert_eq!(m.data(), t.data());
}

#[test]
fn unfold_zero_tensor() {
    let t = DenseTensor::zeros(vec![2, 3, 4]).unwrap();
    let m = unfold(&t, 0).unwrap();
    assert_eq!(m.shape(), (2, 12));
    assert!(m.data().iter().all(|&v| v == 0.0));
}

#[test]
fn unfold_rejects_bad_mode() {
    let t = DenseTensor::zeros(vec![2, 3]).unwrap();
    assert!(matches!(unfold(&t, 2), Err(crate::Error::InvalidArgument(_))));
}

#[test]
fn tensor_rejects_bad_shapes() {
    assert!(DenseTensor::zeros(vec![3]).is_err());
    assert!(DenseTensor::zeros(vec![3, 0]).is_err());
    assert!(DenseTensor::new(vec![2, 2], vec![0.0; 3]).is_err());
}

#[test]
fn unfold_matches_oracle_all_modes() {
    let t = random_tensor(&[2, 3, 4, 5], 7);
    for mode in 0..4 {
        assert_eq!(unfold(&t, mode).unwrap(), unfold_oracle(&t, mode));
    }
}

#[test]
fn nmode_identity_and_summation() {
    let t = random_tensor(&[3, 4, 2], 3);
    for mode in 0..3 {
        let id = Matrix::identity(t.shape()[mode]);
        assert_eq!(nmode_product(&t, &id, mode).unwrap(), t);
    }
    let ones = DenseTensor::from_fn(vec![2, 2, 2], |_| 1.0).unwrap();
    let sum = Matrix::from_rows(&[vec![1.0, 1.0]]).unwrap();
    let out = nmode_product(&ones, &sum, 0).unwrap();
    assert_eq!(out.shape(), &[1, 2, 2]);
    assert!(out.data().iter().all(|&v| v == 2.0));
}

/// Direct triple-loop contraction along mode 1 of an order-3 tensor.
fn nmode_oracle_mode1(t: &DenseTensor, m: &Matrix) -> DenseTensor {
    let s = t.shape();
    DenseTensor::from_fn(vec![s[0], m.rows(), s[2]], |i| {
        (0..s[1]).map(|j| m.get(i[1], j) * t.get(&[i[0], j, i[2]])).sum()
    })
    .unwrap()
}

#[test]
fn nmode_matches_triple_loop() {
    let t = random_tensor(&[3, 4, 5], 11);
    let m = random_matrix(2, 4, 12);
    let got = nmode_product(&t, &m, 1).unwrap();
    let want = nmode_oracle_mode1(&t, &m);
    for (a, b) in got.data().iter().zip(want.data()) {
        assert!((a - b).abs() <= 1e-12);
    }
    // and agrees with fold(m · unfold(t))
    let via_unfold = fold(&m.matmul(&unfold(&t, 1).unwrap()).unwrap(), 1, &[3, 2, 5]).unwrap();
    for (a, b) in got.data().iter().zip(via_unfold.data()) {
        assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn nmode_dimension_mismatch() {
    let t = random_tensor(&[3, 4], 1);
    let m = random_matrix(2, 3, 2);
    assert!(nmode_product(&t, &m, 1).is_err());
}

#[test]
fn khatri_rao_examples() {
    let a = Matrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
    let b = Matrix::from_rows(&[vec![3.0], vec![4.0]]).unwrap();
    assert_eq!(khatri_rao(&a, &b).unwrap().col(0), vec![3.0, 4.0, 6.0, 8.0]);

    let ones = Matrix::from_fn(1, 5, |_, _| 1.0);
    assert_eq!(khatri_rao(&ones, &ones).unwrap(), ones);

    let a = random_matrix(3, 2, 5);
    let b = random_matrix(4, 2, 6);
    let kr = khatri_rao(&a, &b).unwrap();
    for r in 0..2 {
        assert_eq!(kr.col(r), kron(&a.col(r), &b.col(r)));
    }
    assert!(khatri_rao(&a, &random_matrix(4, 3, 1)).is_err());
}

#[test]
fn mttkrp_matches_unfold_times_khatri_rao() {
    let t = random_tensor(&[3, 4, 5], 21);
    let f: Vec<Matrix> = (0..3).map(|m| random_matrix(t.shape()[m], 2, 30 + m as u64)).collect();
    // Lowest remaining mode fastest: columns of X_(0) pair with C ⊙ B.
    let want0 = unfold(&t, 0).unwrap().matmul(&khatri_rao(&f[2], &f[1]).unwrap()).unwrap();
    let want1 = unfold(&t, 1).unwrap().matmul(&khatri_rao(&f[2], &f[0]).unwrap()).unwrap();
    let want2 = unfold(&t, 2).unwrap().matmul(&khatri_rao(&f[1], &f[0]).unwrap()).unwrap();
    for (mode, want) in [want0, want1, want2].iter().enumerate() {
        let got = mttkrp(&t, &f, mode).unwrap();
        assert!(got.max_abs_diff(want) <= 1e-12, "mode {mode}");
    }
}

#[test]
fn gram_along_mode_matches_unfolding() {
    let t = random_tensor(&[3, 4, 5], 4);
    for mode in 0..3 {
        let u = unfold(&t, mode).unwrap();
        let want = u.transpose().gram();
        assert!(gram_along_mode(&t, mode).unwrap().max_abs_diff(&want) <= 1e-12);
    }
}

#[test]
fn svd_identity_and_rank_one() {
    let s = truncated_svd(&Matrix::identity(3), 3).unwrap();
    for v in &s.s {
        assert!((v - 1.0).abs() < 1e-14);
    }
    let u = [0.6, 0.8];
    let v = [0.0, 1.0, 0.0];
    let m = Matrix::from_fn(2, 3, |i, j| u[i] * v[j]);
    let s = truncated_svd(&m, 1).unwrap();
    assert!((s.s[0] - 1.0).abs() < 1e-14);
    let rec = Matrix::from_fn(2, 3, |i, j| s.u.get(i, 0) * s.s[0] * s.v.get(j, 0));
    assert!(rec.max_abs_diff(&m) < 1e-14);
}

#[test]
fn svd_truncation_error_matches_discarded_spectrum() {
    let m = random_matrix(10, 6, 99);
    let full = truncated_svd(&m, 6).unwrap();
    let s = truncated_svd(&m, 3).unwrap();
    let rec = Matrix::from_fn(10, 6, |i, j| (0..3).map(|k| s.u.get(i, k) * s.s[k] * s.v.get(j, k)).sum());
    let mut diff = rec.clone();
    diff.scale(-1.0);
    diff.add_assign(&m);
    let expected = full.s[3..].iter().map(|x| x * x).sum::<f64>().sqrt();
    assert!((diff.frobenius_norm() - expected).abs() <= 1e-10);
    assert!(s.s.windows(2).all(|w| w[0] >= w[1]));
    let utu = s.u.gram();
    assert!(utu.max_abs_diff(&Matrix::identity(3)) < 1e-12);
    assert!(truncated_svd(&m, 0).is_err());
    assert!(truncated_svd(&m, 7).is_err());
}

#[test]
fn svd_sign_convention() {
    let m = random_matrix(6, 4, 5);
    let s = truncated_svd(&m, 4).unwrap();
    for k in 0..4 {
        let col = s.u.col(k);
        let big = col.iter().copied().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
        assert!(big >= 0.0);
    }
}

#[test]
fn large_svd_route_reconstructs_exact_rank() {
    // 4 x 1_050_000 exceeds the dense-SVD size limit
    let a = random_matrix(4, 2, 3);
    let b = random_matrix(2, 1_050_000, 4);
    let m = a.matmul(&b).unwrap();
    for mm in [m.clone(), m.transpose()] {
        let s = truncated_svd(&mm, 2).unwrap();
        assert!(s.u.gram().max_abs_diff(&Matrix::identity(2)) <= 1e-10);
        assert!(s.v.gram().max_abs_diff(&Matrix::identity(2)) <= 1e-10);
        assert!(s.s[0] >= s.s[1]);
        let us = Matrix::from_fn(s.u.rows(), 2, |i, k| s.u.get(i, k) * s.s[k]);
        let rec = us.matmul(&s.v.transpose()).unwrap();
        assert!(rec.max_abs_diff(&mm) <= 1e-9);
    }
    let basis = left_subspace(&m, 2).unwrap();
    let proj = basis.matmul(&basis.t_matmul(&m).unwrap()).unwrap();
    assert!(proj.max_abs_diff(&m) <= 1e-9);
}

#[test]
fn complete_orthonormal_extends_basis() {
    let u = Matrix::from_rows(&[vec![1.0], vec![0.0], vec![0.0]]).unwrap();
    let q = complete_orthonormal(&u, 3);
    assert!(q.gram().max_abs_diff(&Matrix::identity(3)) < 1e-14);
    assert_eq!(q.col(0), vec![1.0, 0.0, 0.0]);
}

#[test]
fn ridge_examples() {
    let b = random_matrix(3, 2, 8);
    let m = ridge_solve(&Matrix::identity(3), &b, 0.0).unwrap();
    assert!(m.max_abs_diff(&b) < 1e-14);

    let mut two = Matrix::identity(3);
    two.scale(2.0);
    let m = ridge_solve(&two, &Matrix::identity(3), 0.0).unwrap();
    let mut half = Matrix::identity(3);
    half.scale(0.5);
    assert!(m.max_abs_diff(&half) < 1e-14);
}

#[test]
fn ridge_recovers_known_solution() {
    let a = random_matrix(20, 4, 41);
    let m0 = random_matrix(4, 3, 42);
    let b = a.matmul(&m0).unwrap();
    let m = ridge_solve(&a, &b, 0.0).unwrap();
    assert!(m.max_abs_diff(&m0) <= 1e-8);
}

#[test]
fn ridge_singular_without_regularization() {
    let a = Matrix::from_rows(&[vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 3.0]]).unwrap();
    let b = Matrix::zeros(3, 1);
    assert!(matches!(ridge_solve(&a, &b, 0.0), Err(crate::Error::SingularSystem(_))));
    assert!(ridge_solve(&a, &b, 1e-6).is_ok());
    let wide = random_matrix(2, 3, 1);
    assert!(matches!(ridge_solve(&wide, &Matrix::zeros(2, 1), 0.0), Err(crate::Error::SingularSystem(_))));
}

#[test]
fn ridge_matches_regularized_normal_equations() {
    let a = random_matrix(5, 3, 3);
    let b = random_matrix(5, 2, 4);
    let lam = 0.3;
    let m = ridge_solve(&a, &b, lam).unwrap();
    // (aᵀa + λI) m = aᵀ b
    let mut lhs = a.gram();
    let mut reg = Matrix::identity(3);
    reg.scale(lam);
    lhs.add_assign(&reg);
    let got = lhs.matmul(&m).unwrap();
    let want = a.t_matmul(&b).unwrap();
    assert!(got.max_abs_diff(&want) < 1e-12);
}

fn shape_strategy() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..5, 2..5)
}

proptest! {
    #[test]
    fn fold_inverts_unfold(shape in shape_strategy(), seed in any::<u64>()) {
        let t = random_tensor(&shape, seed);
        for mode in 0..shape.len() {
            let back = fold(&unfold(&t, mode).unwrap(), mode, &shape).unwrap();
            prop_assert_eq!(&back, &t);
        }
    }

    #[test]
    fn nmode_products_commute(shape in prop::collection::vec(1usize..5, 3..4), seed in any::<u64>()) {
        let t = random_tensor(&shape, seed);
        let m1 = random_matrix(2, shape[0], seed ^ 1);
        let m2 = random_matrix(3, shape[2], seed ^ 2);
        let a = nmode_product(&nmode_product(&t, &m1, 0).unwrap(), &m2, 2).unwrap();
        let b = nmode_product(&nmode_product(&t, &m2, 2).unwrap(), &m1, 0).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn ridge_residual_orthogonal(seed in any::<u64>()) {
        let a = random_matrix(12, 3, seed);
        let b = random_matrix(12, 2, seed ^ 0xabc);
        let m = ridge_solve(&a, &b, 0.0).unwrap();
        let mut resid = a.matmul(&m).unwrap();
        let mut nb = b.clone();
        nb.scale(-1.0);
        resid.add_assign(&nb);
        let g = a.t_matmul(&resid).unwrap();
        prop_assert!(g.data().iter().all(|v| v.abs() <= 1e-8));
    }
}
