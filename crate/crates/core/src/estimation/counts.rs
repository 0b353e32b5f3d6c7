use std::collections::HashMap;

use super::data::{AgentSpace, Pair, TrajectorySet};

/// Prefix trie over joint episodes. Each node counts the episodes that start
/// with its path, and per joint action the episodes that continue from it
/// with that action.
#[derive(Clone, Debug)]
pub struct PrefixCounts {
    nodes: Vec<Node>,
}

#[derive(Clone, Debug, Default)]
struct Node {
    count: u64,
    children: HashMap<Pair, usize>,
    action_counts: HashMap<usize, u64>,
}

pub type NodeId = usize;

impl PrefixCounts {
    pub const ROOT: NodeId = 0;

    pub fn build(trajs: &TrajectorySet, space: &AgentSpace) -> Self {
        let mut nodes = vec![Node::default()];
        for ep in &trajs.episodes {
            let mut cur = Self::ROOT;
            nodes[cur].count += 1;
            for pair in ep.joint(space) {
                *nodes[cur].action_counts.entry(pair.0).or_insert(0) += 1;
                let next = match nodes[cur].children.get(&pair) {
                    Some(&n) => n,
                    None => {
                        nodes.push(Node::default());
                        let n = nodes.len() - 1;
                        nodes[cur].children.insert(pair, n);
                        n
                    }
                };
                nodes[next].count += 1;
                cur = next;
            }
        }
        Self { nodes }
    }

    pub fn node(&self, seq: &[Pair]) -> Option<NodeId> {
        self.walk(Self::ROOT, seq)
    }

    pub fn walk(&self, from: NodeId, seq: &[Pair]) -> Option<NodeId> {
        let mut cur = from;
        for p in seq {
            cur = *self.nodes[cur].children.get(p)?;
        }
        Some(cur)
    }

    /// Episodes whose prefix is `seq`.
    pub fn count(&self, seq: &[Pair]) -> u64 {
        self.node(seq).map_or(0, |n| self.nodes[n].count)
    }

    pub fn node_count(&self, n: NodeId) -> u64 {
        self.nodes[n].count
    }

    /// Episodes that reach `from` and continue with `actions`, whatever the
    /// observations.
    pub fn action_count(&self, from: NodeId, actions: &[usize]) -> u64 {
        match actions {
            [] => self.nodes[from].count,
            [a] => self.nodes[from].action_counts.get(a).copied().unwrap_or(0),
            [a, rest @ ..] => self.nodes[from]
                .children
                .iter()
                .filter(|(p, _)| p.0 == *a)
                .map(|(_, &c)| self.action_count(c, rest))
                .sum(),
        }
    }

    /// Depth-first enumeration of every stored prefix with its count.
    pub fn prefixes(&self, max_len: usize) -> Vec<(Vec<Pair>, u64)> {
        let mut out = Vec::new();
        let mut stack = vec![(Self::ROOT, Vec::new())];
        while let Some((n, path)) = stack.pop() {
            if path.len() < max_len {
                for (&p, &c) in &self.nodes[n].children {
                    let mut next = path.clone();
                    next.push(p);
                    stack.push((c, next));
                }
            }
            out.push((path, self.nodes[n].count));
        }
        out
    }

    /// Conditional probability of the joint test sequence after the history
    /// at `h`, with additive smoothing `alpha` over `v` outcome sequences.
    /// `0/0` is 0.
    pub fn estimate(&self, h: Option<NodeId>, test: &[Pair], alpha: f64, v: f64) -> f64 {
        let (num, den) = match h {
            Some(n) => {
                let num = self.walk(n, test).map_or(0, |c| self.nodes[c].count);
                let actions: Vec<usize> = test.iter().map(|p| p.0).collect();
                (num as f64, self.action_count(n, &actions) as f64)
            }
            None => (0.0, 0.0),
        };
        let den = den + alpha * v;
        if den == 0.0 {
            0.0
        } else {
            (num + alpha) / den
        }
    }
}
