use super::{sample_dense, ExplicitDynamics, MapSpec};
use crate::error::{Error, Result};
use crate::estimation::AgentSpace;
use crate::rng::Rng;

/// Probability of moving in the commanded direction; the remainder is split
/// evenly between the two orthogonal directions.
pub const P_INTENDED: f64 = 0.8;

const STEP_REWARD: f64 = -1.0;
const GOAL_REWARD: f64 = 1.0;

/// Symbols per direction in the coloured sensor (open plus three colours).
const COLORS: usize = 4;

/// Multi-agent maze. Each agent moves N/E/S/W with orthogonal slip and senses
/// its four surrounding walls through a noisy sensor. The episode ends when
/// any agent reaches a goal cell.
///
/// Joint state is the mixed-radix encoding of the agents' free-cell indices,
/// agent 0 most significant.
#[derive(Clone, Debug)]
pub struct Gridworld {
    map: MapSpec,
    space: AgentSpace,
    p_noise: f64,
    colored: bool,
    n_agents: usize,
    /// `obs[cell][o]`: per-agent sensor distribution.
    obs: Vec<Vec<f64>>,
    /// `moves[cell][d]`: sparse destination distribution.
    moves: Vec<[Vec<(usize, f64)>; 4]>,
    starts: Vec<usize>,
}

impl Gridworld {
    pub fn new(map: MapSpec, n_agents: usize, p_noise: f64, colored: bool) -> Result<Self> {
        if n_agents == 0 {
            return Err(Error::invalid("need at least one agent"));
        }
        if !(0.0..=1.0).contains(&p_noise) {
            return Err(Error::invalid(format!("p_noise {p_noise} outside [0, 1]")));
        }
        if map.goals.is_empty() {
            return Err(Error::invalid("grid map needs a goal cell"));
        }
        let starts: Vec<usize> = if map.agent_starts.is_empty() {
            vec![0; n_agents]
        } else {
            (0..n_agents).map(|p| map.agent_starts[p % map.agent_starts.len()]).collect()
        };
        let n_obs = if colored { COLORS.pow(4) } else { 16 };
        let space = AgentSpace::uniform(n_agents, 4, n_obs)?;
        let nf = map.num_free();
        let obs = (0..nf)
            .map(|c| {
                if colored {
                    color_sensor(&map.colors(c), p_noise)
                } else {
                    wall_sensor(map.wall_bits(c), p_noise)
                }
            })
            .collect();
        let slip = (1.0 - P_INTENDED) / 2.0;
        let moves = (0..nf)
            .map(|c| {
                std::array::from_fn(|d| {
                    let mut out: Vec<(usize, f64)> = Vec::with_capacity(3);
                    for (dir, p) in [(d, P_INTENDED), ((d + 1) % 4, slip), ((d + 3) % 4, slip)] {
                        let to = map.step_from(c, dir);
                        match out.iter_mut().find(|(s, _)| *s == to) {
                            Some(e) => e.1 += p,
                            None => out.push((to, p)),
                        }
                    }
                    out
                })
            })
            .collect();
        Ok(Self { map, space, p_noise, colored, n_agents, obs, moves, starts })
    }

    pub fn map(&self) -> &MapSpec {
        &self.map
    }

    pub fn p_noise(&self) -> f64 {
        self.p_noise
    }

    pub fn is_colored(&self) -> bool {
        self.colored
    }

    pub fn encode_state(&self, cells: &[usize]) -> usize {
        let nf = self.map.num_free();
        cells.iter().fold(0, |acc, &c| acc * nf + c)
    }

    pub fn decode_state(&self, mut s: usize) -> Vec<usize> {
        let nf = self.map.num_free();
        let mut out = vec![0; self.n_agents];
        for c in out.iter_mut().rev() {
            *c = s % nf;
            s /= nf;
        }
        out
    }

    /// Sensor distribution of a single agent standing on `cell`.
    pub fn sensor(&self, cell: usize) -> &[f64] {
        &self.obs[cell]
    }

    /// Destination distribution for one agent.
    pub fn move_distribution(&self, cell: usize, dir: usize) -> &[(usize, f64)] {
        &self.moves[cell][dir]
    }
}

/// Each of the four wall bits flips independently with probability `p`.
pub(super) fn wall_sensor(bits: usize, p: f64) -> Vec<f64> {
    (0..16)
        .map(|o| {
            (0..4)
                .map(|d| if (o >> d) & 1 == (bits >> d) & 1 { 1.0 - p } else { p })
                .product()
        })
        .collect()
}

/// Symbol for direction `d` occupies base-4 digit `d`.
fn color_sensor(colors: &[usize; 4], p: f64) -> Vec<f64> {
    let hit = 1.0 - p + p / COLORS as f64;
    let miss = p / COLORS as f64;
    (0..COLORS.pow(4))
        .map(|o| {
            (0..4)
                .map(|d| if (o / COLORS.pow(d as u32)) % COLORS == colors[d] { hit } else { miss })
                .product()
        })
        .collect()
}

impl ExplicitDynamics for Gridworld {
    fn space(&self) -> &AgentSpace {
        &self.space
    }

    fn num_states(&self) -> usize {
        self.map.num_free().pow(self.n_agents as u32)
    }

    fn initial_distribution(&self) -> Vec<(usize, f64)> {
        vec![(self.encode_state(&self.starts), 1.0)]
    }

    fn successors(&self, s: usize, ja: usize) -> Vec<(usize, f64)> {
        if self.is_terminal(s) {
            return vec![(s, 1.0)];
        }
        let cells = self.decode_state(s);
        let acts = self.space.decode_action(ja);
        let nf = self.map.num_free();
        let mut out = vec![(0usize, 1.0f64)];
        for (c, a) in cells.iter().zip(&acts) {
            let mv = &self.moves[*c][*a];
            out = out
                .iter()
                .flat_map(|&(acc, p)| mv.iter().map(move |&(to, q)| (acc * nf + to, p * q)))
                .collect();
        }
        out
    }

    fn obs_prob(&self, s_next: usize, _ja: usize, jo: usize) -> f64 {
        let cells = self.decode_state(s_next);
        let os = self.space.decode_observation(jo);
        cells.iter().zip(&os).map(|(&c, &o)| self.obs[c][o]).product()
    }

    fn sample_obs(&self, s_next: usize, _ja: usize, rng: &mut Rng) -> usize {
        let cells = self.decode_state(s_next);
        let os: Vec<usize> = cells.iter().map(|&c| sample_dense(&self.obs[c], rng)).collect();
        self.space.encode_observation(&os)
    }

    fn rewards(&self, s: usize, _ja: usize, s_next: usize) -> Vec<f64> {
        if self.is_terminal(s) {
            return vec![0.0; self.n_agents];
        }
        self.decode_state(s_next)
            .iter()
            .map(|&c| STEP_REWARD + if self.map.is_goal(c) { GOAL_REWARD } else { 0.0 })
            .collect()
    }

    fn is_terminal(&self, s: usize) -> bool {
        self.decode_state(s).iter().any(|&c| self.map.is_goal(c))
    }
}
