use super::gridworld::wall_sensor;
use super::{sample_dense, ExplicitDynamics, MapSpec};
use crate::error::{Error, Result};
use crate::estimation::AgentSpace;
use crate::rng::Rng;

/// Robot action that attempts a tag; 0..4 are N/E/S/W moves.
pub const TAG_ACTION: usize = 4;
/// Probability that the opponent runs away instead of staying put.
pub const P_FLEE: f64 = 0.8;

const STEP_REWARD: f64 = -1.0;
const TAG_REWARD: f64 = 10.0;

/// Two-agent pursuit. Agent 0 (robot) moves or tags; agent 1 (opponent)
/// flees on its own rule and its chosen action has no effect. Both sense the
/// walls around their own cell; a tagged opponent senses nothing.
///
/// State `robot * (F + 1) + opp` with `opp == F` meaning tagged, where `F` is
/// the number of free cells.
#[derive(Clone, Debug)]
pub struct Tag {
    map: MapSpec,
    space: AgentSpace,
    p_noise: f64,
    obs: Vec<Vec<f64>>,
    tagged_obs: Vec<f64>,
}

impl Tag {
    pub fn new(map: MapSpec, p_noise: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_noise) {
            return Err(Error::invalid(format!("p_noise {p_noise} outside [0, 1]")));
        }
        let obs = (0..map.num_free()).map(|c| wall_sensor(map.wall_bits(c), p_noise)).collect();
        Ok(Self {
            space: AgentSpace::uniform(2, 5, 16)?,
            tagged_obs: wall_sensor(0, p_noise),
            map,
            p_noise,
            obs,
        })
    }

    pub fn map(&self) -> &MapSpec {
        &self.map
    }

    pub fn p_noise(&self) -> f64 {
        self.p_noise
    }

    fn tagged(&self) -> usize {
        self.map.num_free()
    }

    pub fn encode_state(&self, robot: usize, opp: Option<usize>) -> usize {
        robot * (self.tagged() + 1) + opp.unwrap_or(self.tagged())
    }

    /// `(robot, opponent)`; the opponent is `None` once tagged.
    pub fn decode_state(&self, s: usize) -> (usize, Option<usize>) {
        let w = self.tagged() + 1;
        let opp = s % w;
        (s / w, (opp != self.tagged()).then_some(opp))
    }

    /// Opponent's next-cell distribution given the robot's current cell.
    pub fn flee_distribution(&self, opp: usize, robot: usize) -> Vec<(usize, f64)> {
        let options: Vec<usize> = (0..4).filter_map(|d| self.map.neighbor(opp, d)).collect();
        let best = options.iter().map(|&c| self.map.manhattan(c, robot)).max();
        let Some(best) = best else {
            return vec![(opp, 1.0)];
        };
        let far: Vec<usize> =
            options.into_iter().filter(|&c| self.map.manhattan(c, robot) == best).collect();
        let mut out = vec![(opp, 1.0 - P_FLEE)];
        let share = P_FLEE / far.len() as f64;
        for c in far {
            match out.iter_mut().find(|(s, _)| *s == c) {
                Some(e) => e.1 += share,
                None => out.push((c, share)),
            }
        }
        out
    }
}

impl ExplicitDynamics for Tag {
    fn space(&self) -> &AgentSpace {
        &self.space
    }

    fn num_states(&self) -> usize {
        self.map.num_free() * (self.tagged() + 1)
    }

    fn initial_distribution(&self) -> Vec<(usize, f64)> {
        let f = self.map.num_free();
        let p = 1.0 / (f * f) as f64;
        (0..f)
            .flat_map(|r| (0..f).map(move |o| (r, o)))
            .map(|(r, o)| (self.encode_state(r, Some(o)), p))
            .collect()
    }

    fn successors(&self, s: usize, ja: usize) -> Vec<(usize, f64)> {
        let (robot, opp) = self.decode_state(s);
        let Some(opp) = opp else {
            return vec![(s, 1.0)];
        };
        let ra = self.space.agent_action(ja, 0);
        if ra == TAG_ACTION && robot == opp {
            return vec![(self.encode_state(robot, None), 1.0)];
        }
        let next_robot = if ra == TAG_ACTION { robot } else { self.map.step_from(robot, ra) };
        self.flee_distribution(opp, robot)
            .into_iter()
            .map(|(o, p)| (self.encode_state(next_robot, Some(o)), p))
            .collect()
    }

    fn obs_prob(&self, s_next: usize, _ja: usize, jo: usize) -> f64 {
        let (robot, opp) = self.decode_state(s_next);
        let o_opp = opp.map_or(&self.tagged_obs, |c| &self.obs[c]);
        self.obs[robot][self.space.agent_observation(jo, 0)]
            * o_opp[self.space.agent_observation(jo, 1)]
    }

    fn sample_obs(&self, s_next: usize, _ja: usize, rng: &mut Rng) -> usize {
        let (robot, opp) = self.decode_state(s_next);
        let o_opp = opp.map_or(&self.tagged_obs, |c| &self.obs[c]);
        let o0 = sample_dense(&self.obs[robot], rng);
        let o1 = sample_dense(o_opp, rng);
        self.space.encode_observation(&[o0, o1])
    }

    fn rewards(&self, s: usize, ja: usize, s_next: usize) -> Vec<f64> {
        if self.is_terminal(s) {
            return vec![0.0, 0.0];
        }
        let caught = self.is_terminal(s_next);
        let robot = if self.space.agent_action(ja, 0) == TAG_ACTION {
            if caught {
                TAG_REWARD
            } else {
                -TAG_REWARD
            }
        } else {
            STEP_REWARD
        };
        let opp = if caught { -TAG_REWARD } else { STEP_REWARD };
        vec![robot, opp]
    }

    fn is_terminal(&self, s: usize) -> bool {
        self.decode_state(s).1.is_none()
    }
}
