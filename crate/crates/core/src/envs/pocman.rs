use rand::Rng as _;

use super::{Environment, MapSpec, Transition};
use crate::error::{Error, Result};
use crate::estimation::AgentSpace;
use crate::rng::Rng;

/// Probability that a ghost steps towards the nearest agent.
pub const P_CHASE: f64 = 0.75;
/// Probability that each food candidate starts filled.
pub const P_FOOD: f64 = 0.5;

const STEP_REWARD: f64 = -1.0;
const FOOD_REWARD: f64 = 1.0;

/// Reduced multi-agent Poc-Man. Agents move deterministically and collect
/// food; ghosts chase; touching a ghost ends the episode. Observation bits:
/// walls (0..4), ghost in line of sight (4..8), food next door (8).
#[derive(Clone, Debug)]
pub struct PocMan {
    map: MapSpec,
    space: AgentSpace,
    n_agents: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PocManState {
    pub agents: Vec<usize>,
    pub ghosts: Vec<usize>,
    /// Indexed by free cell.
    pub food: Vec<bool>,
}

impl PocMan {
    pub fn new(map: MapSpec, n_agents: usize) -> Result<Self> {
        if n_agents == 0 {
            return Err(Error::invalid("need at least one agent"));
        }
        if map.agent_starts.is_empty() {
            return Err(Error::invalid("Poc-Man map needs agent start cells"));
        }
        Ok(Self { space: AgentSpace::uniform(n_agents, 4, 512)?, map, n_agents })
    }

    pub fn map(&self) -> &MapSpec {
        &self.map
    }

    fn ghost_move(&self, g: usize, agents: &[usize], rng: &mut Rng) -> usize {
        let options: Vec<usize> = (0..4).filter_map(|d| self.map.neighbor(g, d)).collect();
        if options.is_empty() {
            return g;
        }
        if rng.random::<f64>() < P_CHASE {
            let dist = |c: usize| agents.iter().map(|&a| self.map.manhattan(c, a)).min().unwrap_or(0);
            let best = options.iter().map(|&c| dist(c)).min().expect("non-empty");
            let near: Vec<usize> = options.into_iter().filter(|&c| dist(c) == best).collect();
            near[rng.random_range(0..near.len())]
        } else {
            options[rng.random_range(0..options.len())]
        }
    }

    /// Noise-free 9-bit observation of one agent.
    pub fn observe(&self, st: &PocManState, cell: usize) -> usize {
        let mut o = self.map.wall_bits(cell);
        for d in 0..4 {
            let mut c = cell;
            while let Some(n) = self.map.neighbor(c, d) {
                if st.ghosts.contains(&n) {
                    o |= 1 << (4 + d);
                    break;
                }
                c = n;
            }
        }
        if (0..4).any(|d| self.map.neighbor(cell, d).is_some_and(|n| st.food[n])) {
            o |= 1 << 8;
        }
        o
    }
}

impl Environment for PocMan {
    type State = PocManState;

    fn space(&self) -> &AgentSpace {
        &self.space
    }

    fn initial_state(&self, rng: &mut Rng) -> PocManState {
        let starts = &self.map.agent_starts;
        let mut food = vec![false; self.map.num_free()];
        for &f in &self.map.food {
            food[f] = rng.random::<f64>() < P_FOOD;
        }
        PocManState {
            agents: (0..self.n_agents).map(|p| starts[p % starts.len()]).collect(),
            ghosts: self.map.ghost_starts.clone(),
            food,
        }
    }

    fn step(&self, s: &PocManState, ja: usize, rng: &mut Rng) -> Transition<PocManState> {
        let acts = self.space.decode_action(ja);
        let mut next = s.clone();
        let mut rewards = vec![STEP_REWARD; self.n_agents];
        for (p, (&a, cell)) in acts.iter().zip(next.agents.iter_mut()).enumerate() {
            *cell = self.map.step_from(*cell, a);
            if next.food[*cell] {
                next.food[*cell] = false;
                rewards[p] += FOOD_REWARD;
            }
        }
        for g in 0..next.ghosts.len() {
            next.ghosts[g] = self.ghost_move(s.ghosts[g], &next.agents, rng);
        }
        let done = next.agents.iter().enumerate().any(|(p, &a)| {
            next.ghosts.iter().enumerate().any(|(g, &h)| {
                h == a || (h == s.agents[p] && s.ghosts[g] == a)
            })
        });
        let obs: Vec<usize> = next.agents.iter().map(|&c| self.observe(&next, c)).collect();
        Transition { obs: self.space.encode_observation(&obs), next, rewards, done }
    }
}
