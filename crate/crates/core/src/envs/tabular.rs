use super::{sample_dense, ExplicitDynamics};
use crate::error::{Error, Result};
use crate::estimation::AgentSpace;
use crate::rng::Rng;

/// Small POMDP given by dense tables, with no terminal states and zero
/// rewards.
#[derive(Clone, Debug)]
pub struct TabularPomdp {
    space: AgentSpace,
    init: Vec<f64>,
    /// `trans[ja][s][s′]`.
    trans: Vec<Vec<Vec<f64>>>,
    /// `obs[ja][s′][jo]`.
    obs: Vec<Vec<Vec<f64>>>,
}

fn check_simplex(v: &[f64], what: &str) -> Result<()> {
    let sum: f64 = v.iter().sum();
    if v.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > 1e-12 {
        return Err(Error::invalid(format!("{what} is not a probability vector")));
    }
    Ok(())
}

impl TabularPomdp {
    pub fn new(
        space: AgentSpace,
        init: Vec<f64>,
        trans: Vec<Vec<Vec<f64>>>,
        obs: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let ns = init.len();
        let na = space.num_joint_actions();
        let no = space.num_joint_observations();
        check_simplex(&init, "initial distribution")?;
        if trans.len() != na || obs.len() != na {
            return Err(Error::invalid("one transition and observation table per joint action"));
        }
        for a in 0..na {
            if trans[a].len() != ns || obs[a].len() != ns {
                return Err(Error::invalid(format!("tables for action {a} have wrong row count")));
            }
            for s in 0..ns {
                if trans[a][s].len() != ns || obs[a][s].len() != no {
                    return Err(Error::invalid(format!("row ({a}, {s}) has wrong width")));
                }
                check_simplex(&trans[a][s], "transition row")?;
                check_simplex(&obs[a][s], "observation row")?;
            }
        }
        Ok(Self { space, init, trans, obs })
    }

    /// One state that always emits joint observation `jo`.
    pub fn deterministic(space: AgentSpace, jo: usize) -> Result<Self> {
        let na = space.num_joint_actions();
        let no = space.num_joint_observations();
        if jo >= no {
            return Err(Error::invalid(format!("observation {jo} out of range")));
        }
        let mut row = vec![0.0; no];
        row[jo] = 1.0;
        Self::new(space, vec![1.0], vec![vec![vec![1.0]]; na], vec![vec![row]; na])
    }

    /// Single-agent, single-action, two-state chain with binary observations.
    pub fn two_state_chain() -> Self {
        Self::new(
            AgentSpace::uniform(1, 1, 2).expect("valid"),
            vec![0.6, 0.4],
            vec![vec![vec![0.7, 0.3], vec![0.2, 0.8]]],
            vec![vec![vec![0.9, 0.1], vec![0.25, 0.75]]],
        )
        .expect("valid chain")
    }

    /// Two agents with two hidden states each (four joint states), two
    /// actions and two observations per agent. The joint transition couples
    /// the agents; each agent's observation depends only on its own next
    /// state and action. The linear dimension is 4.
    pub fn coupled_pair() -> Self {
        let space = AgentSpace::uniform(2, 2, 2).expect("valid");
        let t = vec![
            vec![0.50, 0.20, 0.20, 0.10],
            vec![0.10, 0.60, 0.10, 0.20],
            vec![0.15, 0.05, 0.70, 0.10],
            vec![0.05, 0.25, 0.15, 0.55],
        ];
        // own[a][s][o]
        let own = [[[0.9, 0.1], [0.2, 0.8]], [[0.3, 0.7], [0.65, 0.35]]];
        let mut trans = Vec::new();
        let mut obs = Vec::new();
        for ja in 0..4 {
            let (a0, a1) = (space.agent_action(ja, 0), space.agent_action(ja, 1));
            trans.push(t.clone());
            obs.push(
                (0..4)
                    .map(|s| {
                        let (s0, s1) = (s / 2, s % 2);
                        (0..4)
                            .map(|jo| {
                                let (o0, o1) = (jo / 2, jo % 2);
                                own[a0][s0][o0] * own[a1][s1][o1]
                            })
                            .collect()
                    })
                    .collect(),
            );
        }
        Self::new(space, vec![0.4, 0.3, 0.2, 0.1], trans, obs).expect("valid pair")
    }
}

impl ExplicitDynamics for TabularPomdp {
    fn space(&self) -> &AgentSpace {
        &self.space
    }

    fn num_states(&self) -> usize {
        self.init.len()
    }

    fn initial_distribution(&self) -> Vec<(usize, f64)> {
        self.init.iter().copied().enumerate().filter(|(_, p)| *p > 0.0).collect()
    }

    fn successors(&self, s: usize, ja: usize) -> Vec<(usize, f64)> {
        self.trans[ja][s].iter().copied().enumerate().filter(|(_, p)| *p > 0.0).collect()
    }

    fn obs_prob(&self, s_next: usize, ja: usize, jo: usize) -> f64 {
        self.obs[ja][s_next][jo]
    }

    fn sample_obs(&self, s_next: usize, ja: usize, rng: &mut Rng) -> usize {
        sample_dense(&self.obs[ja][s_next], rng)
    }

    fn rewards(&self, _s: usize, _ja: usize, _s_next: usize) -> Vec<f64> {
        vec![0.0; self.space.num_agents()]
    }

    fn is_terminal(&self, _s: usize) -> bool {
        false
    }
}
