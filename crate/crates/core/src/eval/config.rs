use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::ProjectionScheme;
use crate::decomp::Method;
use crate::envs::{Domain, DEFAULT_P_NOISE};
use crate::error::{Error, Result};
use crate::estimation::SetConfig;
use crate::psr::DEFAULT_LAMBDA_R;

/// A learner, or the uniform reference predictor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodSpec {
    Decomp(Method),
    Tpsr,
    Cpsr,
    Uniform,
}

impl MethodSpec {
    pub fn name(self) -> &'static str {
        match self {
            MethodSpec::Decomp(m) => m.name(),
            MethodSpec::Tpsr => "tpsr",
            MethodSpec::Cpsr => "cpsr",
            MethodSpec::Uniform => "uniform",
        }
    }

    pub fn is_learned(self) -> bool {
        self != MethodSpec::Uniform
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MethodSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tpsr" => Ok(MethodSpec::Tpsr),
            "cpsr" => Ok(MethodSpec::Cpsr),
            "uniform" => Ok(MethodSpec::Uniform),
            other => other.parse().map(MethodSpec::Decomp),
        }
    }
}

/// Source of ground-truth next-observation probabilities.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleKind {
    Belief,
    Mc(usize),
}

impl fmt::Display for OracleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleKind::Belief => f.write_str("belief"),
            OracleKind::Mc(n) => write!(f, "mc:{n}"),
        }
    }
}

impl FromStr for OracleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "belief" {
            return Ok(OracleKind::Belief);
        }
        let n = s
            .strip_prefix("mc:")
            .or_else(|| s.strip_prefix("mc(").and_then(|r| r.strip_suffix(')')))
            .ok_or_else(|| Error::invalid(format!("unknown oracle `{s}`")))?;
        match n.parse::<usize>() {
            Ok(n) if n > 0 => Ok(OracleKind::Mc(n)),
            _ => Err(Error::invalid(format!("bad roll-out count in `{s}`"))),
        }
    }
}

/// Everything a multi-round comparison depends on. Parsed from
/// `key = value` lines; `#` starts a comment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub domain: Domain,
    pub agents: usize,
    pub map: Option<PathBuf>,
    pub methods: Vec<MethodSpec>,
    pub ranks: Vec<usize>,
    pub rounds: usize,
    pub train_episodes: usize,
    pub train_max_len: usize,
    pub test_episodes: usize,
    pub test_max_len: usize,
    /// Defaults to 500 (400 on Poc-Man).
    pub train_per_round: Option<usize>,
    pub test_per_round: usize,
    /// Defaults to `belief` when the domain has explicit kernels, else
    /// `mc:1000`.
    pub oracle: Option<OracleKind>,
    pub seed: u64,
    pub p_noise: f64,
    pub lambda_r: f64,
    pub sets: SetConfig,
    pub cpsr_d: usize,
    pub cpsr_scheme: ProjectionScheme,
    pub max_iters: usize,
    pub tol: f64,
    /// Record wall-clock phase times. Off by default so that reports are
    /// byte-identical across runs.
    pub timings: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            domain: Domain::Gridworld,
            agents: 2,
            map: None,
            methods: vec![
                MethodSpec::Decomp(Method::Ncp),
                MethodSpec::Decomp(Method::Ntd),
                MethodSpec::Tpsr,
                MethodSpec::Cpsr,
                MethodSpec::Uniform,
            ],
            ranks: vec![20],
            rounds: 20,
            train_episodes: 2000,
            train_max_len: 10,
            test_episodes: 3000,
            test_max_len: 15,
            train_per_round: None,
            test_per_round: 1000,
            oracle: None,
            seed: 0,
            p_noise: DEFAULT_P_NOISE,
            lambda_r: DEFAULT_LAMBDA_R,
            sets: SetConfig::default(),
            cpsr_d: 64,
            cpsr_scheme: ProjectionScheme::Gaussian,
            max_iters: crate::decomp::DecompConfig::DEFAULT_MAX_ITERS,
            tol: crate::decomp::DecompConfig::DEFAULT_TOL,
            timings: false,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::invalid(format!("bad value `{v}` for `{key}`")))
}

fn parse_list<T: FromStr<Err = Error>>(v: &str) -> Result<Vec<T>> {
    v.split(',').filter(|s| !s.trim().is_empty()).map(|s| s.trim().parse()).collect()
}

impl ExperimentConfig {
    pub const KEYS: &'static [&'static str] = &[
        "domain", "agents", "map", "methods", "ranks", "rounds", "train_episodes",
        "train_max_len", "test_episodes", "test_max_len", "train_per_round",
        "test_per_round", "oracle", "seed", "p_noise", "lambda_r", "alpha",
        "max_test_len", "test_min_count", "max_hist_len", "hist_min_count",
        "max_histories", "cpsr_d", "cpsr_scheme", "max_iters", "tol", "timings",
    ];

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(k.trim(), v.trim())
                .map_err(|e| Error::invalid(format!("line {}: {e}", n + 1)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Applies one `key = value` setting. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "domain" => self.domain = v.parse()?,
            "agents" => self.agents = parse_num(key, v)?,
            "map" => self.map = (!v.is_empty()).then(|| PathBuf::from(v)),
            "methods" => self.methods = parse_list(v)?,
            "ranks" => {
                self.ranks = v
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| parse_num(key, s.trim()))
                    .collect::<Result<_>>()?
            }
            "rounds" => self.rounds = parse_num(key, v)?,
            "train_episodes" => self.train_episodes = parse_num(key, v)?,
            "train_max_len" => self.train_max_len = parse_num(key, v)?,
            "test_episodes" => self.test_episodes = parse_num(key, v)?,
            "test_max_len" => self.test_max_len = parse_num(key, v)?,
            "train_per_round" => self.train_per_round = Some(parse_num(key, v)?),
            "test_per_round" => self.test_per_round = parse_num(key, v)?,
            "oracle" => self.oracle = Some(v.parse()?),
            "seed" => self.seed = parse_num(key, v)?,
            "p_noise" => self.p_noise = parse_num(key, v)?,
            "lambda_r" => self.lambda_r = parse_num(key, v)?,
            "alpha" => self.sets.alpha = parse_num(key, v)?,
            "max_test_len" => self.sets.max_test_len = parse_num(key, v)?,
            "test_min_count" => self.sets.test_min_count = parse_num(key, v)?,
            "max_hist_len" => self.sets.max_hist_len = parse_num(key, v)?,
            "hist_min_count" => self.sets.hist_min_count = parse_num(key, v)?,
            "max_histories" => self.sets.max_histories = parse_num(key, v)?,
            "cpsr_d" => self.cpsr_d = parse_num(key, v)?,
            "cpsr_scheme" => self.cpsr_scheme = v.parse()?,
            "max_iters" => self.max_iters = parse_num(key, v)?,
            "tol" => self.tol = parse_num(key, v)?,
            "timings" => self.timings = parse_num(key, v)?,
            other => return Err(Error::invalid(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn train_per_round(&self) -> usize {
        self.train_per_round.unwrap_or(match self.domain {
            Domain::PocMan => 400,
            _ => 500,
        })
    }

    pub fn oracle(&self) -> OracleKind {
        self.oracle.unwrap_or(match self.domain {
            Domain::PocMan => OracleKind::Mc(1000),
            _ => OracleKind::Belief,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("agents", self.agents),
            ("rounds", self.rounds),
            ("train_episodes", self.train_episodes),
            ("train_max_len", self.train_max_len),
            ("test_episodes", self.test_episodes),
            ("test_max_len", self.test_max_len),
            ("train_per_round", self.train_per_round()),
            ("test_per_round", self.test_per_round),
            ("max_iters", self.max_iters),
            ("max_test_len", self.sets.max_test_len),
            ("max_histories", self.sets.max_histories),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid(format!("`{k}` must be at least 1")));
        }
        if self.train_per_round() > self.train_episodes || self.test_per_round > self.test_episodes {
            return Err(Error::invalid("per-round samples cannot exceed the corpus sizes"));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("no methods configured"));
        }
        if self.methods.iter().any(|m| m.is_learned()) && (self.ranks.is_empty() || self.ranks.contains(&0)) {
            return Err(Error::invalid("learned methods need positive ranks"));
        }
        if !(0.0..=1.0).contains(&self.p_noise) || !(self.lambda_r >= 0.0) || !(self.sets.alpha >= 0.0) {
            return Err(Error::invalid("p_noise, lambda_r or alpha out of range"));
        }
        if self.oracle() == OracleKind::Belief && self.domain == Domain::PocMan {
            return Err(Error::invalid("the belief oracle needs explicit kernels; use oracle = mc:N"));
        }
        if let Some(m) = &self.map {
            if !m.is_file() {
                return Err(Error::invalid(format!("map file {} not found", m.display())));
            }
        }
        Ok(())
    }

    /// Canonical serialisation used for the configuration hash.
    pub fn canonical(&self) -> String {
        serde_json::to_string(self).expect("config serialises")
    }

    pub fn hash(&self) -> String {
        crate::config_hash(&self.canonical())
    }
}
