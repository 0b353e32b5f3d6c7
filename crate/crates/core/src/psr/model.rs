use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{AgentSpace, Pair, TestSet};
use crate::tensor::Matrix;

/// Where a model came from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub method: String,
    pub ranks: Vec<usize>,
    pub seed: u64,
    pub lambda_r: f64,
    pub config_hash: String,
    pub fit_error: Option<f64>,
    pub iterations: Option<usize>,
    pub num_histories: usize,
}

/// Learned parameters. `mtilde` row `r` belongs to the per-agent test tuple
/// `tuples[r]`; every joint one-step pair has a row. Pairs missing from
/// `transitions` have `M̃ = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct PsrModel {
    pub meta: ModelMeta,
    pub space: AgentSpace,
    pub x0: Vec<f64>,
    pub tests: TestSet,
    pub tuples: Vec<Vec<usize>>,
    pub mtilde: Matrix,
    pub transitions: BTreeMap<Pair, Matrix>,
    /// Joint one-step pairs never seen in the data; their `m̃` is zero.
    pub unobserved: Vec<Pair>,
    one_step: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct TransitionRecord {
    a: usize,
    o: usize,
    #[serde(rename = "M")]
    m: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    meta: ModelMeta,
    #[serde(rename = "R")]
    rank: usize,
    space: AgentSpace,
    x0: Vec<f64>,
    tests: TestSet,
    tuples: Vec<Vec<usize>>,
    mtilde: Vec<Vec<f64>>,
    #[serde(rename = "Mtilde")]
    transitions: Vec<TransitionRecord>,
    missing_transitions: Vec<Pair>,
    unobserved: Vec<Pair>,
}

fn rows_of(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

fn from_rows(rows: &[Vec<f64>], cols: usize) -> Result<Matrix> {
    if rows.is_empty() {
        return Ok(Matrix::zeros(0, cols));
    }
    Matrix::from_rows(rows)
}

impl PsrModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        meta: ModelMeta,
        space: AgentSpace,
        x0: Vec<f64>,
        tests: TestSet,
        tuples: Vec<Vec<usize>>,
        mtilde: Matrix,
        transitions: BTreeMap<Pair, Matrix>,
        unobserved: Vec<Pair>,
    ) -> Result<Self> {
        let r = x0.len();
        if mtilde.rows() != tuples.len() || mtilde.cols() != r {
            return Err(Error::invalid(format!(
                "m̃ table is {}x{}, expected {}x{r}",
                mtilde.rows(),
                mtilde.cols(),
                tuples.len()
            )));
        }
        for (p, m) in &transitions {
            if m.shape() != (r, r) {
                return Err(Error::invalid(format!("M̃ for {p:?} is not {r}x{r}")));
            }
        }
        let n_jo = space.num_joint_observations();
        let n_pairs = space.num_joint_actions() * n_jo;
        let row_of: std::collections::HashMap<&[usize], usize> =
            tuples.iter().enumerate().map(|(i, t)| (t.as_slice(), i)).collect();
        let mut one_step = vec![usize::MAX; n_pairs];
        for (idx, slot) in one_step.iter_mut().enumerate() {
            let tuple = tests.one_step_tuple(&space, (idx / n_jo, idx % n_jo));
            *slot = *row_of.get(tuple.as_slice()).ok_or_else(|| {
                Error::invalid(format!("no m̃ for joint one-step pair {idx}"))
            })?;
        }
        Ok(Self { meta, space, x0, tests, tuples, mtilde, transitions, unobserved, one_step })
    }

    /// State dimension.
    pub fn rank(&self) -> usize {
        self.x0.len()
    }

    /// `m̃` of the joint one-step pair `(ja, jo)`.
    pub fn m_one_step(&self, pair: Pair) -> Result<&[f64]> {
        let idx = self.pair_index(pair)?;
        Ok(self.mtilde.row(self.one_step[idx]))
    }

    /// `M̃` of the joint one-step pair, `None` when it is zero.
    pub fn transition(&self, pair: Pair) -> Result<Option<&Matrix>> {
        self.pair_index(pair)?;
        Ok(self.transitions.get(&pair))
    }

    fn pair_index(&self, (ja, jo): Pair) -> Result<usize> {
        let n_jo = self.space.num_joint_observations();
        if ja >= self.space.num_joint_actions() || jo >= n_jo {
            return Err(Error::MissingParameter(format!("no parameters for pair ({ja}, {jo})")));
        }
        Ok(ja * n_jo + jo)
    }

    /// Joint pairs whose `M̃` is zero for lack of regression data.
    pub fn missing_transitions(&self) -> Vec<Pair> {
        let n_jo = self.space.num_joint_observations();
        (0..self.space.num_joint_actions())
            .flat_map(|a| (0..n_jo).map(move |o| (a, o)))
            .filter(|p| !self.transitions.contains_key(p))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            meta: self.meta.clone(),
            rank: self.rank(),
            space: self.space.clone(),
            x0: self.x0.clone(),
            tests: self.tests.clone(),
            tuples: self.tuples.clone(),
            mtilde: rows_of(&self.mtilde),
            transitions: self
                .transitions
                .iter()
                .map(|(&(a, o), m)| TransitionRecord { a, o, m: rows_of(m) })
                .collect(),
            missing_transitions: self.missing_transitions(),
            unobserved: self.unobserved.clone(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: ModelFile = serde_json::from_str(s)?;
        if f.x0.len() != f.rank {
            return Err(Error::Parse("x0 length does not match R".into()));
        }
        let mut transitions = BTreeMap::new();
        for t in f.transitions {
            transitions.insert((t.a, t.o), from_rows(&t.m, f.rank)?);
        }
        Self::new(
            f.meta,
            f.space,
            f.x0,
            f.tests,
            f.tuples,
            from_rows(&f.mtilde, f.rank)?,
            transitions,
            f.unobserved,
        )
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(self.to_json()?.as_bytes())?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut s = String::new();
        std::io::Read::read_to_string(&mut BufReader::new(File::open(path)?), &mut s)?;
        Self::from_json(&s)
    }
}
