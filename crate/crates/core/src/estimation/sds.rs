use serde::{Deserialize, Serialize};

use super::counts::{NodeId, PrefixCounts};
use super::data::{AgentSpace, Pair, TrajectorySet};
use super::sets::{HistorySet, TestSet};
use crate::error::{Error, Result};
use crate::par;
use crate::tensor::{DenseTensor, Matrix};

/// Reset-style conditional probability estimator over a corpus.
#[derive(Clone, Debug)]
pub struct Estimator {
    counts: PrefixCounts,
    space: AgentSpace,
    alpha: f64,
}

impl Estimator {
    pub fn new(trajs: &TrajectorySet, space: &AgentSpace, alpha: f64) -> Result<Self> {
        if !(alpha >= 0.0) {
            return Err(Error::invalid("smoothing weight must be non-negative"));
        }
        trajs.validate(space)?;
        Ok(Self { counts: PrefixCounts::build(trajs, space), space: space.clone(), alpha })
    }

    pub fn counts(&self) -> &PrefixCounts {
        &self.counts
    }

    /// `p(t | h)` for a joint test and a joint history.
    pub fn estimate(&self, test: &[Pair], h: &[Pair]) -> f64 {
        self.estimate_at(self.counts.node(h), test)
    }

    fn estimate_at(&self, node: Option<NodeId>, test: &[Pair]) -> f64 {
        let v = (self.space.num_joint_observations() as f64).powi(test.len() as i32);
        self.counts.estimate(node, test, self.alpha, v)
    }

    fn history_nodes(&self, hists: &HistorySet) -> Vec<Option<NodeId>> {
        hists.iter().map(|h| self.counts.node(h)).collect()
    }

    fn fill_row(&self, test: &[Pair], nodes: &[Option<NodeId>], out: &mut [f64]) {
        for (v, &n) in out.iter_mut().zip(nodes) {
            *v = self.estimate_at(n, test);
        }
    }
}

/// Convenience wrapper for a single query.
pub fn estimate_cond_prob(
    trajs: &TrajectorySet,
    space: &AgentSpace,
    test: &[Pair],
    h: &[Pair],
    alpha: f64,
) -> Result<f64> {
    Ok(Estimator::new(trajs, space, alpha)?.estimate(test, h))
}

/// Tensor of shape `(|T_1|, …, |T_N|, |H|)`. Cells whose per-agent tests
/// differ in length are stored as 0 and reported invalid.
#[derive(Clone, Debug)]
pub struct SysDynTensor {
    pub tensor: DenseTensor,
    pub space: AgentSpace,
    pub tests: TestSet,
    pub histories: HistorySet,
}

impl SysDynTensor {
    /// Wraps an existing tensor (for example one computed exactly).
    pub fn from_parts(
        tensor: DenseTensor,
        space: AgentSpace,
        tests: TestSet,
        histories: HistorySet,
    ) -> Result<Self> {
        let mut shape = tests.shape();
        shape.push(histories.len());
        if tensor.shape() != shape.as_slice() || tests.num_agents() != space.num_agents() {
            return Err(Error::invalid(format!(
                "tensor shape {:?} does not match test/history sets {shape:?}",
                tensor.shape()
            )));
        }
        Ok(Self { tensor, space, tests, histories })
    }

    pub fn is_valid(&self, tuple: &[usize]) -> bool {
        let len = self.tests.test(0, tuple[0]).len();
        tuple.iter().enumerate().all(|(p, &i)| self.tests.test(p, i).len() == len)
    }

    /// Valid per-agent test tuples in row-major order.
    pub fn valid_tuples(&self) -> Vec<Vec<usize>> {
        let shape = self.tests.shape();
        let count: usize = shape.iter().product();
        let mut idx = vec![0; shape.len()];
        let mut out = Vec::new();
        for _ in 0..count {
            if self.is_valid(&idx) {
                out.push(idx.clone());
            }
            crate::tensor::increment(&mut idx, &shape);
        }
        out
    }

    /// Validity mask with the tensor's shape (1 valid, 0 masked).
    pub fn mask(&self) -> DenseTensor {
        let shape = self.tensor.shape().to_vec();
        let n = shape.len() - 1;
        DenseTensor::from_fn(shape, |i| if self.is_valid(&i[..n]) { 1.0 } else { 0.0 })
            .expect("shape already validated")
    }

    /// Flattens the valid cells into a joint-test × history matrix.
    pub fn to_matrix(&self) -> SysDynMatrix {
        let tuples = self.valid_tuples();
        let nh = self.histories.len();
        let strides = self.tensor.strides();
        let mut m = Matrix::zeros(tuples.len(), nh);
        for (r, t) in tuples.iter().enumerate() {
            let off: usize = t.iter().zip(&strides).map(|(i, s)| i * s).sum();
            m.row_mut(r).copy_from_slice(&self.tensor.data()[off..off + nh]);
        }
        SysDynMatrix {
            matrix: m,
            space: self.space.clone(),
            tests: self.tests.clone(),
            tuples,
            histories: self.histories.clone(),
        }
    }
}

/// Joint-test × history matrix. Row `r` is the joint test built from the
/// per-agent tuple `tuples[r]`.
#[derive(Clone, Debug)]
pub struct SysDynMatrix {
    pub matrix: Matrix,
    pub space: AgentSpace,
    pub tests: TestSet,
    pub tuples: Vec<Vec<usize>>,
    pub histories: HistorySet,
}

fn check_sets(tests: &TestSet, hists: &HistorySet, space: &AgentSpace) -> Result<()> {
    if tests.num_agents() != space.num_agents() || tests.tests.iter().any(Vec::is_empty) {
        return Err(Error::invalid("test sets must be non-empty, one per agent"));
    }
    if hists.is_empty() {
        return Err(Error::invalid("history set is empty"));
    }
    Ok(())
}

pub fn build_sds_tensor(
    est: &Estimator,
    tests: &TestSet,
    hists: &HistorySet,
) -> Result<SysDynTensor> {
    check_sets(tests, hists, &est.space)?;
    let mut shape = tests.shape();
    let nh = hists.len();
    shape.push(nh);
    let mut t = DenseTensor::zeros(shape.clone())?;
    let nodes = est.history_nodes(hists);
    let test_shape = &shape[..shape.len() - 1];
    par::for_each_chunk_mut(t.data_mut(), nh, |row, out| {
        let tuple = unravel(row, test_shape);
        if let Some(jt) = tests.joint_test(&est.space, &tuple) {
            est.fill_row(&jt, &nodes, out);
        }
    });
    SysDynTensor::from_parts(t, est.space.clone(), tests.clone(), hists.clone())
}

pub fn build_sds_matrix(
    est: &Estimator,
    tests: &TestSet,
    hists: &HistorySet,
) -> Result<SysDynMatrix> {
    check_sets(tests, hists, &est.space)?;
    let shape = tests.shape();
    let count: usize = shape.iter().product();
    let tuples: Vec<Vec<usize>> = (0..count)
        .map(|r| unravel(r, &shape))
        .filter(|t| tests.joint_test(&est.space, t).is_some())
        .collect();
    let nh = hists.len();
    let nodes = est.history_nodes(hists);
    let mut m = Matrix::zeros(tuples.len(), nh);
    par::for_each_chunk_mut(m.data_mut(), nh, |r, out| {
        let jt = tests.joint_test(&est.space, &tuples[r]).expect("filtered");
        est.fill_row(&jt, &nodes, out);
    });
    Ok(SysDynMatrix {
        matrix: m,
        space: est.space.clone(),
        tests: tests.clone(),
        tuples,
        histories: hists.clone(),
    })
}

fn unravel(mut r: usize, shape: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; shape.len()];
    for (i, &n) in idx.iter_mut().zip(shape).rev() {
        *i = r % n;
        r /= n;
    }
    idx
}

/// One agent's view of the dynamics: rows are the agent's tests, columns the
/// distinct projections of the joint histories, in first-appearance order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginalMatrix {
    pub matrix: Matrix,
    pub histories: Vec<Vec<Pair>>,
}

pub fn marginal_dynamics_matrix(sds: &SysDynTensor, agent: usize) -> Result<MarginalMatrix> {
    let n = sds.space.num_agents();
    if agent >= n {
        return Err(Error::invalid(format!("agent {agent} out of range for {n} agents")));
    }
    let mut cols: Vec<Vec<Pair>> = Vec::new();
    let mut col_of = std::collections::HashMap::new();
    let hist_col: Vec<usize> = sds
        .histories
        .iter()
        .map(|h| {
            let proj: Vec<Pair> = h.iter().map(|&p| sds.space.project(p, agent)).collect();
            *col_of.entry(proj.clone()).or_insert_with(|| {
                cols.push(proj);
                cols.len() - 1
            })
        })
        .collect();
    let rows = sds.tests.tests[agent].len();
    let nh = sds.histories.len();
    let mut m = Matrix::zeros(rows, cols.len());
    let strides = sds.tensor.strides();
    for tuple in sds.valid_tuples() {
        let off: usize = tuple.iter().zip(&strides).map(|(i, s)| i * s).sum();
        let src = &sds.tensor.data()[off..off + nh];
        let row = m.row_mut(tuple[agent]);
        for (k, &v) in src.iter().enumerate() {
            row[hist_col[k]] += v;
        }
    }
    Ok(MarginalMatrix { matrix: m, histories: cols })
}
