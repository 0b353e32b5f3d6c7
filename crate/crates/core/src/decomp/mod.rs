//! CP and Tucker decompositions of dense tensors, optionally non-negative.
//!
//! Factor shapes follow the layout PSR extraction consumes: one factor per
//! mode, `A(m)` of size `n_m × R` (CP) or `n_m × R_m` (Tucker), with the last
//! mode holding the history factor.

mod cp;
mod init;
mod tucker;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use cp::cp_decompose;
pub use tucker::tucker_decompose;

use crate::error::{Error, Result};
use crate::par;
use crate::tensor::{multi_mode_product, DenseTensor, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Cp,
    Ncp,
    Td,
    Ntd,
}

impl Method {
    pub fn is_cp(self) -> bool {
        matches!(self, Method::Cp | Method::Ncp)
    }

    pub fn is_nonnegative(self) -> bool {
        matches!(self, Method::Ncp | Method::Ntd)
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Cp => "cp",
            Method::Ncp => "ncp",
            Method::Td => "td",
            Method::Ntd => "ntd",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cp" => Ok(Method::Cp),
            "ncp" => Ok(Method::Ncp),
            "td" | "tucker" => Ok(Method::Td),
            "ntd" => Ok(Method::Ntd),
            other => Err(Error::invalid(format!("unknown decomposition method `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Init {
    Random,
    Svd,
}

impl FromStr for Init {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(Init::Random),
            "svd" | "svd-based" => Ok(Init::Svd),
            other => Err(Error::invalid(format!("unknown init `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompConfig {
    pub method: Method,
    /// One entry for CP/NCP, one per mode for TD/NTD.
    pub ranks: Vec<usize>,
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
    pub init: Init,
}

impl DecompConfig {
    pub const DEFAULT_MAX_ITERS: usize = 500;
    pub const DEFAULT_TOL: f64 = 1e-8;

    pub fn new(method: Method, ranks: Vec<usize>) -> Self {
        Self {
            method,
            ranks,
            max_iters: Self::DEFAULT_MAX_ITERS,
            tol: Self::DEFAULT_TOL,
            seed: 0,
            init: Init::Svd,
        }
    }

    pub fn cp(rank: usize) -> Self {
        Self::new(Method::Cp, vec![rank])
    }

    pub fn ncp(rank: usize) -> Self {
        Self::new(Method::Ncp, vec![rank])
    }

    pub fn td(ranks: Vec<usize>) -> Self {
        Self::new(Method::Td, ranks)
    }

    pub fn ntd(ranks: Vec<usize>) -> Self {
        Self::new(Method::Ntd, ranks)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_max_iters(mut self, n: usize) -> Self {
        self.max_iters = n;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }

    /// Expands a single requested dimension into per-mode ranks clamped to
    /// the tensor extents (Tucker), or leaves it as is (CP).
    pub fn for_rank(method: Method, rank: usize, shape: &[usize]) -> Self {
        if method.is_cp() {
            Self::new(method, vec![rank])
        } else {
            Self::new(method, shape.iter().map(|&n| rank.min(n)).collect())
        }
    }

    pub(crate) fn validate(&self, shape: &[usize]) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be positive"));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::invalid("tol must be non-negative"));
        }
        if self.method.is_cp() {
            if self.ranks.len() != 1 || self.ranks[0] == 0 {
                return Err(Error::invalid(format!(
                    "CP needs a single positive rank, got {:?}",
                    self.ranks
                )));
            }
        } else {
            if self.ranks.len() != shape.len() {
                return Err(Error::invalid(format!(
                    "Tucker needs one rank per mode ({}), got {:?}",
                    shape.len(),
                    self.ranks
                )));
            }
            for (m, (&r, &n)) in self.ranks.iter().zip(shape).enumerate() {
                if r == 0 || r > n {
                    return Err(Error::invalid(format!(
                        "Tucker rank {r} for mode {m} outside 1..={n}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Weights and unit-norm factor columns: `t ≈ Σ_r λ_r a_r(1) ∘ … ∘ a_r(K)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CpFactors {
    pub weights: Vec<f64>,
    pub factors: Vec<Matrix>,
}

impl CpFactors {
    pub fn rank(&self) -> usize {
        self.weights.len()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.factors.iter().map(Matrix::rows).collect()
    }

    /// Dense reconstruction, entry by entry as `Σ_r λ_r Π_m A(m)[i_m, r]`.
    pub fn reconstruct(&self) -> Result<DenseTensor> {
        let shape = self.shape();
        let (lead, last) = shape.split_at(shape.len() - 1);
        let r = self.rank();
        let lead_f: Vec<&Matrix> = self.factors[..shape.len() - 1].iter().collect();
        let p = weighted_row_products(&lead_f, lead, &self.weights);
        let c = &self.factors[shape.len() - 1];
        let n_last = last[0];
        let mut data = vec![0.0; shape.iter().product()];
        par::for_each_chunk_mut(&mut data, n_last, |o, out| {
            let po = &p[o * r..(o + 1) * r];
            for (k, v) in out.iter_mut().enumerate() {
                *v = po.iter().zip(c.row(k)).map(|(a, b)| a * b).sum();
            }
        });
        DenseTensor::new(shape, data)
    }
}

fn weighted_row_products(factors: &[&Matrix], shape: &[usize], weights: &[f64]) -> Vec<f64> {
    let r = weights.len();
    let mut p = crate::tensor::row_products(factors, shape, r);
    for chunk in p.chunks_mut(r) {
        for (v, w) in chunk.iter_mut().zip(weights) {
            *v *= w;
        }
    }
    p
}

/// Core tensor and one factor per mode: `t ≈ G ×_1 A(1) … ×_K A(K)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuckerFactors {
    pub core: DenseTensor,
    pub factors: Vec<Matrix>,
}

impl TuckerFactors {
    pub fn shape(&self) -> Vec<usize> {
        self.factors.iter().map(Matrix::rows).collect()
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.core.shape().to_vec()
    }

    pub fn reconstruct(&self) -> Result<DenseTensor> {
        let ops: Vec<(usize, &Matrix)> = self.factors.iter().enumerate().collect();
        multi_mode_product(&self.core, &ops)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Factors {
    Cp(CpFactors),
    Tucker(TuckerFactors),
}

impl Factors {
    pub fn reconstruct(&self) -> Result<DenseTensor> {
        match self {
            Factors::Cp(f) => f.reconstruct(),
            Factors::Tucker(f) => f.reconstruct(),
        }
    }

    pub fn shape(&self) -> Vec<usize> {
        match self {
            Factors::Cp(f) => f.shape(),
            Factors::Tucker(f) => f.shape(),
        }
    }

    pub fn last_factor(&self) -> &Matrix {
        match self {
            Factors::Cp(f) => f.factors.last().expect("at least two modes"),
            Factors::Tucker(f) => f.factors.last().expect("at least two modes"),
        }
    }
}

impl From<CpFactors> for Factors {
    fn from(f: CpFactors) -> Self {
        Factors::Cp(f)
    }
}

impl From<TuckerFactors> for Factors {
    fn from(f: TuckerFactors) -> Self {
        Factors::Tucker(f)
    }
}

/// Result of a decomposition run.
#[derive(Clone, Debug)]
pub struct Decomposition<F> {
    pub factors: F,
    /// `‖t − reconstruct(f)‖_F / ‖t‖_F`.
    pub fit_error: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Squared relative residual after every sweep.
    pub objective_trace: Vec<f64>,
    /// Factor columns that collapsed to zero and were reseeded.
    pub reseeded_columns: usize,
}

impl<F: Into<Factors>> Decomposition<F> {
    pub fn into_general(self) -> Decomposition<Factors> {
        Decomposition {
            factors: self.factors.into(),
            fit_error: self.fit_error,
            iterations: self.iterations,
            converged: self.converged,
            objective_trace: self.objective_trace,
            reseeded_columns: self.reseeded_columns,
        }
    }
}

/// Runs the method named in `cfg`.
pub fn decompose(t: &DenseTensor, cfg: &DecompConfig) -> Result<Decomposition<Factors>> {
    if cfg.method.is_cp() {
        cp_decompose(t, cfg).map(Decomposition::into_general)
    } else {
        tucker_decompose(t, cfg).map(Decomposition::into_general)
    }
}

/// Relative Frobenius error of the factored approximation.
pub fn fit_error(t: &DenseTensor, f: &Factors) -> Result<f64> {
    if f.shape() != t.shape() {
        return Err(Error::invalid(format!(
            "factor shape {:?} does not match tensor shape {:?}",
            f.shape(),
            t.shape()
        )));
    }
    let resid = match f {
        Factors::Cp(cp) => cp::residual_sq(t, cp),
        Factors::Tucker(td) => residual_sq_dense(t, &td.reconstruct()?),
    };
    Ok(relative_error(resid, t.squared_norm()))
}

pub(crate) fn relative_error(resid_sq: f64, norm_sq: f64) -> f64 {
    resid_sq.max(0.0).sqrt() / norm_sq.sqrt().max(f64::MIN_POSITIVE)
}

pub(crate) fn residual_sq_dense(t: &DenseTensor, r: &DenseTensor) -> f64 {
    let parts = par::map_range(t.len().div_ceil(4096), |c| {
        let lo = c * 4096;
        let hi = (lo + 4096).min(t.len());
        t.data()[lo..hi]
            .iter()
            .zip(&r.data()[lo..hi])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
    });
    parts.iter().sum()
}

pub(crate) fn check_input(t: &DenseTensor, cfg: &DecompConfig) -> Result<()> {
    cfg.validate(t.shape())?;
    if !t.is_finite() {
        return Err(Error::invalid("tensor contains non-finite entries"));
    }
    if cfg.method.is_nonnegative() && t.min_value() < 0.0 {
        return Err(Error::invalid(
            "non-negative decomposition of a tensor with negative entries",
        ));
    }
    Ok(())
}
