use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::counts::PrefixCounts;
use super::data::{AgentSpace, Pair, TrajectorySet};
use crate::error::{Error, Result};

/// Per-agent test lists. Each test is a sequence of that agent's
/// `(action, observation)` pairs. The first `|A|·|O|` tests of every agent
/// are the one-step tests, at index `a·|O| + o`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestSet {
    pub tests: Vec<Vec<Vec<Pair>>>,
}

impl TestSet {
    /// Only the one-step tests.
    pub fn one_step(space: &AgentSpace) -> Self {
        let tests = (0..space.num_agents())
            .map(|p| {
                let no = space.observations[p];
                (0..space.num_pairs(p)).map(|i| vec![(i / no, i % no)]).collect()
            })
            .collect();
        Self { tests }
    }

    pub fn num_agents(&self) -> usize {
        self.tests.len()
    }

    /// Tensor extents over the test modes.
    pub fn shape(&self) -> Vec<usize> {
        self.tests.iter().map(Vec::len).collect()
    }

    pub fn test(&self, agent: usize, i: usize) -> &[Pair] {
        &self.tests[agent][i]
    }

    pub fn index_of(&self, agent: usize, test: &[Pair]) -> Option<usize> {
        self.tests[agent].iter().position(|t| t.as_slice() == test)
    }

    /// Joint test for a tuple of per-agent test indices, or `None` when the
    /// per-agent lengths differ.
    pub fn joint_test(&self, space: &AgentSpace, tuple: &[usize]) -> Option<Vec<Pair>> {
        let len = self.tests[0][tuple[0]].len();
        if tuple.iter().enumerate().any(|(p, &i)| self.tests[p][i].len() != len) {
            return None;
        }
        let n = self.num_agents();
        let mut a = vec![0; n];
        let mut o = vec![0; n];
        Some(
            (0..len)
                .map(|s| {
                    for (p, &i) in tuple.iter().enumerate() {
                        a[p] = self.tests[p][i][s].0;
                        o[p] = self.tests[p][i][s].1;
                    }
                    (space.encode_action(&a), space.encode_observation(&o))
                })
                .collect(),
        )
    }

    /// Per-agent test indices of the joint one-step pair `(ja, jo)`.
    pub fn one_step_tuple(&self, space: &AgentSpace, pair: Pair) -> Vec<usize> {
        (0..space.num_agents())
            .map(|p| {
                let (a, o) = space.project(pair, p);
                a * space.observations[p] + o
            })
            .collect()
    }
}

/// All one-step tests plus every longer test up to `max_test_len` seen at
/// least `min_count` times (anywhere in an agent's own sequence), ordered by
/// length then lexicographically.
pub fn build_test_sets(
    trajs: &TrajectorySet,
    space: &AgentSpace,
    max_test_len: usize,
    min_count: usize,
) -> Result<TestSet> {
    if max_test_len == 0 {
        return Err(Error::invalid("max_test_len must be at least 1"));
    }
    let mut set = TestSet::one_step(space);
    if max_test_len == 1 {
        return Ok(set);
    }
    for p in 0..space.num_agents() {
        let mut counts: BTreeMap<(usize, Vec<Pair>), usize> = BTreeMap::new();
        for ep in &trajs.episodes {
            let seq = ep.agent(p);
            for len in 2..=max_test_len.min(seq.len()) {
                for w in seq.windows(len) {
                    *counts.entry((len, w.to_vec())).or_insert(0) += 1;
                }
            }
        }
        set.tests[p].extend(
            counts.into_iter().filter(|(_, c)| *c >= min_count.max(1)).map(|((_, t), _)| t),
        );
    }
    Ok(set)
}

/// Joint histories, `φ` first, prefix-closed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HistorySet {
    histories: Vec<Vec<Pair>>,
    counts: Vec<u64>,
    index: HashMap<Vec<Pair>, usize>,
}

impl HistorySet {
    pub const NULL: usize = 0;

    /// Wraps an explicit list. The first entry must be `φ` and the list must
    /// be prefix-closed and duplicate-free.
    pub fn from_histories(histories: Vec<Vec<Pair>>, counts: Vec<u64>) -> Result<Self> {
        if histories.first().is_none_or(|h| !h.is_empty()) {
            return Err(Error::invalid("history set must start with the null history"));
        }
        if counts.len() != histories.len() {
            return Err(Error::invalid("one count per history required"));
        }
        let mut index = HashMap::with_capacity(histories.len());
        for (k, h) in histories.iter().enumerate() {
            if index.insert(h.clone(), k).is_some() {
                return Err(Error::invalid(format!("duplicate history at {k}")));
            }
        }
        for h in &histories[1..] {
            if !index.contains_key(&h[..h.len() - 1]) {
                return Err(Error::invalid("history set is not prefix-closed"));
            }
        }
        Ok(Self { histories, counts, index })
    }

    pub fn len(&self) -> usize {
        self.histories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.histories.is_empty()
    }

    pub fn get(&self, k: usize) -> &[Pair] {
        &self.histories[k]
    }

    pub fn count(&self, k: usize) -> u64 {
        self.counts[k]
    }

    pub fn index_of(&self, h: &[Pair]) -> Option<usize> {
        self.index.get(h).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &[Pair]> {
        self.histories.iter().map(Vec::as_slice)
    }

    pub fn max_len(&self) -> usize {
        self.histories.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub(crate) fn rebuild_index(&mut self) {
        self.index = self.histories.iter().cloned().enumerate().map(|(k, h)| (h, k)).collect();
    }

    /// Indices of the histories of length at most `len`.
    pub fn up_to_len(&self, len: usize) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.histories[k].len() <= len).collect()
    }
}

/// `φ` plus the episode prefixes of length ≤ `max_hist_len` seen in at least
/// `min_count` episodes, capped at `max_histories` by frequency.
pub fn build_history_set(
    trajs: &TrajectorySet,
    space: &AgentSpace,
    max_hist_len: usize,
    min_count: usize,
    max_histories: usize,
) -> Result<HistorySet> {
    let counts = PrefixCounts::build(trajs, space);
    let mut cand: Vec<(Vec<Pair>, u64)> = counts
        .prefixes(max_hist_len)
        .into_iter()
        .filter(|(h, c)| !h.is_empty() && *c >= min_count as u64)
        .collect();
    cand.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.len().cmp(&b.0.len())).then(a.0.cmp(&b.0)));
    cand.truncate(max_histories.saturating_sub(1));

    let mut chosen: HashSet<Vec<Pair>> = cand.iter().map(|(h, _)| h.clone()).collect();
    let mut extra = Vec::new();
    for (h, _) in &cand {
        for l in 1..h.len() {
            let p = h[..l].to_vec();
            if chosen.insert(p.clone()) {
                let c = counts.count(&p);
                extra.push((p, c));
            }
        }
    }
    cand.extend(extra);
    cand.sort_by(|a, b| a.0.len().cmp(&b.0.len()).then(b.1.cmp(&a.1)).then(a.0.cmp(&b.0)));

    let mut histories = vec![Vec::new()];
    let mut cs = vec![counts.count(&[])];
    for (h, c) in cand {
        histories.push(h);
        cs.push(c);
    }
    let mut set = HistorySet { histories, counts: cs, index: HashMap::new() };
    set.rebuild_index();
    Ok(set)
}
