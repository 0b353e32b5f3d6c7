//! Seeded multi-agent simulators, the uniform exploration policy, and two
//! prediction oracles: exact belief propagation for explicit models and
//! Monte-Carlo roll-outs for any simulator.

mod gridworld;
mod maps;
mod oracle;
mod pocman;
mod tabular;
mod tag;

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

pub use gridworld::Gridworld;
pub use maps::{Cell, MapSpec, DIRECTIONS};
pub use oracle::{belief_oracle, exact_dynamics_tensor, mc_oracle, BeliefFilter, McEstimate};
pub use pocman::{PocMan, PocManState};
pub use tabular::TabularPomdp;
pub use tag::Tag;

use crate::error::{Error, Result};
use crate::estimation::{AgentSpace, Episode, Step, TrajectorySet};
use crate::par;
use crate::rng::{child, Rng};

/// Sensor noise used when none is configured.
pub const DEFAULT_P_NOISE: f64 = 0.1;

/// Outcome of one simulator step.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition<S> {
    pub next: S,
    /// Joint observation index.
    pub obs: usize,
    pub rewards: Vec<f64>,
    pub done: bool,
}

/// Generative simulator over joint action indices.
pub trait Environment: Sync {
    type State: Clone + Send;

    fn space(&self) -> &AgentSpace;

    fn initial_state(&self, rng: &mut Rng) -> Self::State;

    fn step(&self, s: &Self::State, ja: usize, rng: &mut Rng) -> Transition<Self::State>;
}

/// Enumerated joint-state model with explicit kernels.
pub trait ExplicitDynamics: Sync {
    fn space(&self) -> &AgentSpace;

    fn num_states(&self) -> usize;

    /// Sparse initial distribution.
    fn initial_distribution(&self) -> Vec<(usize, f64)>;

    /// Sparse `T(· | s, ja)`; terminal states are absorbing.
    fn successors(&self, s: usize, ja: usize) -> Vec<(usize, f64)>;

    /// `P(jo | s′, ja)`.
    fn obs_prob(&self, s_next: usize, ja: usize, jo: usize) -> f64;

    fn sample_obs(&self, s_next: usize, ja: usize, rng: &mut Rng) -> usize;

    fn rewards(&self, s: usize, ja: usize, s_next: usize) -> Vec<f64>;

    fn is_terminal(&self, s: usize) -> bool;
}

/// Generative view of an explicit model.
pub struct Explicit<'a, E: ?Sized>(pub &'a E);

impl<E: ExplicitDynamics + ?Sized> Environment for Explicit<'_, E> {
    type State = usize;

    fn space(&self) -> &AgentSpace {
        self.0.space()
    }

    fn initial_state(&self, rng: &mut Rng) -> usize {
        sample_sparse(&self.0.initial_distribution(), rng)
    }

    fn step(&self, s: &usize, ja: usize, rng: &mut Rng) -> Transition<usize> {
        let next = sample_sparse(&self.0.successors(*s, ja), rng);
        Transition {
            next,
            obs: self.0.sample_obs(next, ja, rng),
            rewards: self.0.rewards(*s, ja, next),
            done: self.0.is_terminal(next),
        }
    }
}

pub(crate) fn sample_sparse(dist: &[(usize, f64)], rng: &mut Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for &(i, p) in dist {
        acc += p;
        if u < acc {
            return i;
        }
    }
    dist.iter().rev().find(|(_, p)| *p > 0.0).map_or(dist[0].0, |(i, _)| *i)
}

pub(crate) fn sample_dense(p: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &q) in p.iter().enumerate() {
        acc += q;
        if u < acc {
            return i;
        }
    }
    p.iter().rposition(|&q| q > 0.0).unwrap_or(0)
}

/// Per-episode simulator state.
#[derive(Clone, Debug)]
pub struct EpisodeState<S> {
    pub state: S,
    pub steps: usize,
    pub done: bool,
    rng: Rng,
}

impl<S: Clone + Send> EpisodeState<S> {
    pub fn start<E: Environment<State = S> + ?Sized>(env: &E, seed: u64) -> Self {
        let mut rng = crate::rng::seeded(seed);
        let state = env.initial_state(&mut rng);
        Self { state, steps: 0, done: false, rng }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub obs: Vec<usize>,
    pub rewards: Vec<f64>,
    pub done: bool,
}

/// Advances an episode by one joint action.
pub fn env_step<E: Environment + ?Sized>(
    env: &E,
    st: &mut EpisodeState<E::State>,
    action: &[usize],
) -> Result<StepResult> {
    if st.done {
        return Err(Error::InvalidState("episode already finished".into()));
    }
    let space = env.space();
    if action.len() != space.num_agents()
        || action.iter().zip(&space.actions).any(|(&a, &n)| a >= n)
    {
        return Err(Error::invalid(format!("joint action {action:?} out of range")));
    }
    let tr = env.step(&st.state, space.encode_action(action), &mut st.rng);
    st.state = tr.next;
    st.steps += 1;
    st.done = tr.done;
    Ok(StepResult { obs: space.decode_observation(tr.obs), rewards: tr.rewards, done: tr.done })
}

/// Uniform-random exploration episodes, each stopped when done or after
/// `max_len` steps. Episode `e` uses the stream derived from `(seed, e)`.
pub fn generate_trajectories<E: Environment + ?Sized>(
    env: &E,
    n_episodes: usize,
    max_len: usize,
    seed: u64,
) -> Result<TrajectorySet> {
    if n_episodes == 0 || max_len == 0 {
        return Err(Error::invalid("need at least one episode of at least one step"));
    }
    let space = env.space();
    let n_ja = space.num_joint_actions();
    let episodes = par::map_range(n_episodes, |e| {
        let mut rng = child(seed, e as u64);
        let mut s = env.initial_state(&mut rng);
        let mut steps = Vec::with_capacity(max_len);
        for _ in 0..max_len {
            let ja = rng.random_range(0..n_ja);
            let tr = env.step(&s, ja, &mut rng);
            steps.push(Step {
                a: space.decode_action(ja),
                o: space.decode_observation(tr.obs),
                r: Some(tr.rewards),
            });
            s = tr.next;
            if tr.done {
                break;
            }
        }
        Episode { steps }
    });
    Ok(TrajectorySet::new(episodes))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Domain {
    Tag,
    Gridworld,
    ColoredGridworld,
    PocMan,
}

impl Domain {
    pub fn name(self) -> &'static str {
        match self {
            Domain::Tag => "tag",
            Domain::Gridworld => "gridworld",
            Domain::ColoredGridworld => "colored-gridworld",
            Domain::PocMan => "pocman",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tag" => Ok(Domain::Tag),
            "gridworld" | "grid" => Ok(Domain::Gridworld),
            "colored-gridworld" | "coloredgridworld" | "colored" => Ok(Domain::ColoredGridworld),
            "pocman" | "poc-man" => Ok(Domain::PocMan),
            other => Err(Error::invalid(format!("unknown domain `{other}`"))),
        }
    }
}

/// Any of the shipped simulators.
#[derive(Clone, Debug)]
pub enum EnvModel {
    Tag(Tag),
    Grid(Gridworld),
    PocMan(PocMan),
    Tabular(TabularPomdp),
}

impl EnvModel {
    /// Builds a domain on its bundled map, or on `map` if given.
    pub fn build(
        domain: Domain,
        n_agents: usize,
        p_noise: f64,
        map: Option<MapSpec>,
    ) -> Result<Self> {
        Ok(match domain {
            Domain::Tag => {
                if n_agents != 2 {
                    return Err(Error::invalid("Tag is a two-agent domain"));
                }
                EnvModel::Tag(Tag::new(map.unwrap_or_else(MapSpec::tag), p_noise)?)
            }
            Domain::Gridworld => EnvModel::Grid(Gridworld::new(
                map.unwrap_or_else(MapSpec::gridworld),
                n_agents,
                p_noise,
                false,
            )?),
            Domain::ColoredGridworld => EnvModel::Grid(Gridworld::new(
                map.unwrap_or_else(MapSpec::colored_gridworld),
                n_agents,
                p_noise,
                true,
            )?),
            Domain::PocMan => {
                EnvModel::PocMan(PocMan::new(map.unwrap_or_else(MapSpec::pocman), n_agents)?)
            }
        })
    }

    pub fn space(&self) -> &AgentSpace {
        match self {
            EnvModel::Tag(e) => e.space(),
            EnvModel::Grid(e) => e.space(),
            EnvModel::PocMan(e) => Environment::space(e),
            EnvModel::Tabular(e) => e.space(),
        }
    }

    /// Explicit kernels, when the joint state space is enumerable.
    pub fn explicit(&self) -> Option<&dyn ExplicitDynamics> {
        match self {
            EnvModel::Tag(e) => Some(e),
            EnvModel::Grid(e) => Some(e),
            EnvModel::Tabular(e) => Some(e),
            EnvModel::PocMan(_) => None,
        }
    }

    pub fn generate(&self, n_episodes: usize, max_len: usize, seed: u64) -> Result<TrajectorySet> {
        match self {
            EnvModel::PocMan(e) => generate_trajectories(e, n_episodes, max_len, seed),
            _ => {
                let ex = self.explicit().expect("explicit model");
                generate_trajectories(&Explicit(ex), n_episodes, max_len, seed)
            }
        }
    }

    pub fn mc_oracle(
        &self,
        h: &[crate::estimation::Pair],
        ja: usize,
        n_rollouts: usize,
        seed: u64,
    ) -> McEstimate {
        match self {
            EnvModel::PocMan(e) => mc_oracle(e, h, ja, n_rollouts, seed),
            _ => mc_oracle(&Explicit(self.explicit().expect("explicit model")), h, ja, n_rollouts, seed),
        }
    }
}

#[cfg(test)]
mod tests;
