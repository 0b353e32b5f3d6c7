//! Matrix spectral learners over the joint-test × history matrix. Both
//! produce the same [`PsrModel`] as the tensor learners.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{Pair, SysDynMatrix};
use crate::psr::{package_model, ModelMeta, PsrModel, StateMatrix};
use crate::rng::seeded;
use crate::tensor::{truncated_svd, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProjectionScheme {
    Gaussian,
    SparseSign,
    /// No compression; `d` must equal the joint-test count.
    Identity,
}

impl FromStr for ProjectionScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Self::Gaussian),
            "sparse-sign" | "sparse" => Ok(Self::SparseSign),
            "identity" => Ok(Self::Identity),
            other => Err(Error::invalid(format!("unknown projection scheme `{other}`"))),
        }
    }
}

impl fmt::Display for ProjectionScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Gaussian => "gaussian",
            Self::SparseSign => "sparse-sign",
            Self::Identity => "identity",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectionSpec {
    pub d: usize,
    pub scheme: ProjectionScheme,
    pub seed: u64,
}

impl ProjectionSpec {
    pub fn new(d: usize, scheme: ProjectionScheme, seed: u64) -> Self {
        Self { d, scheme, seed }
    }

    /// `d × n` projection matrix with `E[ΦᵀΦ] = I` (exactly `I` for the
    /// identity scheme).
    pub fn matrix(&self, n: usize) -> Result<Matrix> {
        if self.d == 0 || self.d > n {
            return Err(Error::invalid(format!(
                "projected dimension {} outside 1..={n}",
                self.d
            )));
        }
        let mut rng = seeded(self.seed);
        let d = self.d;
        Ok(match self.scheme {
            ProjectionScheme::Identity => {
                if d != n {
                    return Err(Error::invalid("identity projection needs d equal to the test count"));
                }
                Matrix::identity(n)
            }
            ProjectionScheme::Gaussian => {
                let s = 1.0 / (d as f64).sqrt();
                Matrix::from_fn(d, n, |_, _| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z * s
                })
            }
            ProjectionScheme::SparseSign => {
                let s = (3.0 / d as f64).sqrt();
                Matrix::from_fn(d, n, |_, _| match rng.random_range(0..6u8) {
                    0 => s,
                    1 => -s,
                    _ => 0.0,
                })
            }
        })
    }
}

/// Joint one-step pairs whose matrix row is entirely zero.
fn unobserved_pairs(sds: &SysDynMatrix) -> Vec<Pair> {
    let row_of: HashMap<&[usize], usize> =
        sds.tuples.iter().enumerate().map(|(i, t)| (t.as_slice(), i)).collect();
    let space = &sds.space;
    let mut out = Vec::new();
    for ja in 0..space.num_joint_actions() {
        for jo in 0..space.num_joint_observations() {
            let t = sds.tests.one_step_tuple(space, (ja, jo));
            let zero = row_of.get(t.as_slice()).is_none_or(|&r| sds.matrix.row(r).iter().all(|&v| v == 0.0));
            if zero {
                out.push((ja, jo));
            }
        }
    }
    out
}

fn check_rank(sds: &SysDynMatrix, r: usize) -> Result<()> {
    let kmax = sds.matrix.rows().min(sds.matrix.cols());
    if r == 0 || r > kmax {
        return Err(Error::invalid(format!(
            "rank {r} outside 1..={kmax} for a {}x{} dynamics matrix",
            sds.matrix.rows(),
            sds.matrix.cols()
        )));
    }
    Ok(())
}

fn finish(
    sds: &SysDynMatrix,
    v: Matrix,
    method: &str,
    r: usize,
    seed: u64,
    lambda_r: f64,
    extra: &str,
) -> Result<PsrModel> {
    // m̃_i = D_i V, the coordinates of test row i in the history basis
    let mut mtilde = sds.matrix.matmul(&v)?;
    let unobserved = unobserved_pairs(sds);
    let row_of: HashMap<&[usize], usize> =
        sds.tuples.iter().enumerate().map(|(i, t)| (t.as_slice(), i)).collect();
    for &p in &unobserved {
        if let Some(&row) = row_of.get(sds.tests.one_step_tuple(&sds.space, p).as_slice()) {
            mtilde.row_mut(row).iter_mut().for_each(|x| *x = 0.0);
        }
    }
    let canonical = serde_json::to_string(&(method, r, seed, lambda_r, extra, sds.matrix.shape()))?;
    let meta = ModelMeta {
        method: method.to_string(),
        ranks: vec![r],
        seed,
        lambda_r,
        config_hash: crate::config_hash(&canonical),
        fit_error: None,
        iterations: None,
        num_histories: sds.histories.len(),
    };
    package_model(
        meta,
        &sds.space,
        &sds.tests,
        sds.tuples.clone(),
        mtilde,
        &StateMatrix { x: v },
        &sds.histories,
        lambda_r,
        unobserved,
    )
}

/// Truncated SVD `D ≈ U S Vᵀ`: states are the rows of `V`, `m̃_i` is row
/// `i` of `U S`.
pub fn learn_tpsr(sds: &SysDynMatrix, r: usize, lambda_r: f64) -> Result<PsrModel> {
    check_rank(sds, r)?;
    let svd = truncated_svd(&sds.matrix, r)?;
    finish(sds, svd.v, "tpsr", r, 0, lambda_r, "")
}

/// Compresses the test dimension with `Φ`, takes the history basis from
/// the SVD of `Φ D`, then reads `m̃_i` for each test row against it.
pub fn learn_cpsr(
    sds: &SysDynMatrix,
    proj: &ProjectionSpec,
    r: usize,
    lambda_r: f64,
) -> Result<PsrModel> {
    check_rank(sds, r)?;
    if r > proj.d {
        return Err(Error::invalid(format!("rank {r} exceeds projected dimension {}", proj.d)));
    }
    let phi = proj.matrix(sds.matrix.rows())?;
    let y = phi.matmul(&sds.matrix)?;
    let svd = truncated_svd(&y, r)?;
    let extra = format!("{}:{}", proj.scheme, proj.d);
    finish(sds, svd.v, "cpsr", r, proj.seed, lambda_r, &extra)
}
