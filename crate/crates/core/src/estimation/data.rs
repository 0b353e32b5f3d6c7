use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-agent or joint `(action, observation)` index pair.
pub type Pair = (usize, usize);

/// Action and observation alphabet sizes for each agent. Joint indices are
/// mixed-radix with agent 0 most significant.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AgentSpace {
    pub actions: Vec<usize>,
    pub observations: Vec<usize>,
}

impl AgentSpace {
    pub fn new(actions: Vec<usize>, observations: Vec<usize>) -> Result<Self> {
        if actions.is_empty() || actions.len() != observations.len() {
            return Err(Error::invalid("agent space needs matching, non-empty size lists"));
        }
        if actions.iter().chain(&observations).any(|&n| n == 0) {
            return Err(Error::invalid("action and observation counts must be positive"));
        }
        Ok(Self { actions, observations })
    }

    /// `n` agents sharing the same alphabets.
    pub fn uniform(n: usize, actions: usize, observations: usize) -> Result<Self> {
        Self::new(vec![actions; n], vec![observations; n])
    }

    pub fn num_agents(&self) -> usize {
        self.actions.len()
    }

    pub fn num_joint_actions(&self) -> usize {
        self.actions.iter().product()
    }

    pub fn num_joint_observations(&self) -> usize {
        self.observations.iter().product()
    }

    /// Number of per-agent one-step pairs for agent `p`.
    pub fn num_pairs(&self, p: usize) -> usize {
        self.actions[p] * self.observations[p]
    }

    pub fn encode_action(&self, a: &[usize]) -> usize {
        encode(a, &self.actions)
    }

    pub fn encode_observation(&self, o: &[usize]) -> usize {
        encode(o, &self.observations)
    }

    pub fn decode_action(&self, ja: usize) -> Vec<usize> {
        decode(ja, &self.actions)
    }

    pub fn decode_observation(&self, jo: usize) -> Vec<usize> {
        decode(jo, &self.observations)
    }

    /// Agent `p`'s component of joint action `ja`.
    pub fn agent_action(&self, ja: usize, p: usize) -> usize {
        component(ja, &self.actions, p)
    }

    pub fn agent_observation(&self, jo: usize, p: usize) -> usize {
        component(jo, &self.observations, p)
    }

    /// Agent `p`'s view of a joint pair.
    pub fn project(&self, pair: Pair, p: usize) -> Pair {
        (self.agent_action(pair.0, p), self.agent_observation(pair.1, p))
    }

    /// Single-agent space for agent `p`.
    pub fn agent(&self, p: usize) -> AgentSpace {
        AgentSpace { actions: vec![self.actions[p]], observations: vec![self.observations[p]] }
    }

    pub(crate) fn check_step(&self, a: &[usize], o: &[usize]) -> Result<()> {
        let n = self.num_agents();
        if a.len() != n || o.len() != n {
            return Err(Error::invalid(format!(
                "step has {} actions and {} observations for {n} agents",
                a.len(),
                o.len()
            )));
        }
        for p in 0..n {
            if a[p] >= self.actions[p] || o[p] >= self.observations[p] {
                return Err(Error::invalid(format!(
                    "agent {p}: action {} / observation {} out of range",
                    a[p], o[p]
                )));
            }
        }
        Ok(())
    }
}

fn encode(x: &[usize], radix: &[usize]) -> usize {
    x.iter().zip(radix).fold(0, |acc, (&v, &r)| acc * r + v)
}

fn decode(mut v: usize, radix: &[usize]) -> Vec<usize> {
    let mut out = vec![0; radix.len()];
    for (o, &r) in out.iter_mut().zip(radix).rev() {
        *o = v % r;
        v /= r;
    }
    out
}

fn component(v: usize, radix: &[usize], p: usize) -> usize {
    let below: usize = radix[p + 1..].iter().product();
    (v / below) % radix[p]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub a: Vec<usize>,
    pub o: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub steps: Vec<Step>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Joint `(action, observation)` index sequence.
    pub fn joint(&self, space: &AgentSpace) -> Vec<Pair> {
        self.steps
            .iter()
            .map(|s| (space.encode_action(&s.a), space.encode_observation(&s.o)))
            .collect()
    }

    /// Agent `p`'s own `(action, observation)` sequence.
    pub fn agent(&self, p: usize) -> Vec<Pair> {
        self.steps.iter().map(|s| (s.a[p], s.o[p])).collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySet {
    pub episodes: Vec<Episode>,
}

impl TrajectorySet {
    pub fn new(episodes: Vec<Episode>) -> Self {
        Self { episodes }
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    /// Builds episodes from joint index sequences.
    pub fn from_joint(space: &AgentSpace, episodes: &[Vec<Pair>]) -> Self {
        let episodes = episodes
            .iter()
            .map(|ep| Episode {
                steps: ep
                    .iter()
                    .map(|&(ja, jo)| Step {
                        a: space.decode_action(ja),
                        o: space.decode_observation(jo),
                        r: None,
                    })
                    .collect(),
            })
            .collect();
        Self { episodes }
    }

    pub fn validate(&self, space: &AgentSpace) -> Result<()> {
        for (e, ep) in self.episodes.iter().enumerate() {
            if ep.is_empty() {
                return Err(Error::invalid(format!("episode {e} is empty")));
            }
            for s in &ep.steps {
                space.check_step(&s.a, &s.o).map_err(|err| {
                    Error::invalid(format!("episode {e}: {err}"))
                })?;
                if let Some(r) = &s.r {
                    if r.len() != space.num_agents() {
                        return Err(Error::invalid(format!("episode {e}: reward arity")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Smallest space that contains every index in the corpus.
    pub fn infer_space(&self) -> Result<AgentSpace> {
        let first = self
            .episodes
            .iter()
            .flat_map(|e| e.steps.first())
            .next()
            .ok_or_else(|| Error::invalid("cannot infer agent space from an empty corpus"))?;
        let n = first.a.len();
        let mut a = vec![1; n];
        let mut o = vec![1; n];
        for s in self.episodes.iter().flat_map(|e| &e.steps) {
            if s.a.len() != n || s.o.len() != n {
                return Err(Error::invalid("inconsistent agent count across steps"));
            }
            for p in 0..n {
                a[p] = a[p].max(s.a[p] + 1);
                o[p] = o[p].max(s.o[p] + 1);
            }
        }
        AgentSpace::new(a, o)
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self { episodes: idx.iter().map(|&i| self.episodes[i].clone()).collect() }
    }

    pub fn write_jsonl<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        for ep in &self.episodes {
            serde_json::to_writer(&mut w, ep)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_jsonl<R: Read>(r: R) -> Result<Self> {
        let mut episodes = Vec::new();
        for (i, line) in BufReader::new(r).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let ep: Episode = serde_json::from_str(&line)
                .map_err(|e| Error::Parse(format!("line {}: {e}", i + 1)))?;
            episodes.push(ep);
        }
        Ok(Self { episodes })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_jsonl(File::create(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_jsonl(File::open(path)?)
    }
}
