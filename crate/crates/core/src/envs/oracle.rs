use super::{Environment, ExplicitDynamics};
use crate::error::{Error, Result};
use crate::estimation::{HistorySet, Pair, SysDynTensor, TestSet};
use crate::par;
use crate::rng::child;
use crate::tensor::DenseTensor;

/// Exact Bayes filter over an explicit joint-state space.
///
/// Beliefs are conditioned on the episode still running, matching how
/// trajectories are recorded: a history is only extended when the episode
/// did not terminate.
#[derive(Clone)]
pub struct BeliefFilter<'a> {
    env: &'a dyn ExplicitDynamics,
    belief: Vec<f64>,
}

impl<'a> BeliefFilter<'a> {
    pub fn new(env: &'a dyn ExplicitDynamics) -> Self {
        let mut belief = vec![0.0; env.num_states()];
        for (s, p) in env.initial_distribution() {
            belief[s] += p;
        }
        Self { env, belief }
    }

    pub fn belief(&self) -> &[f64] {
        &self.belief
    }

    /// Replaces the belief; `b` must have one entry per state.
    pub fn set_belief(&mut self, b: Vec<f64>) {
        assert_eq!(b.len(), self.belief.len(), "belief length mismatch");
        self.belief = b;
    }

    /// State distribution after `ja`, before observing.
    pub fn predict(&self, ja: usize) -> Vec<f64> {
        let mut next = vec![0.0; self.belief.len()];
        for (s, &b) in self.belief.iter().enumerate() {
            if b > 0.0 {
                for (t, p) in self.env.successors(s, ja) {
                    next[t] += b * p;
                }
            }
        }
        next
    }

    /// `P(jo | h, ja)` for every joint observation.
    pub fn obs_dist(&self, ja: usize) -> Vec<f64> {
        let no = self.env.space().num_joint_observations();
        let next = self.predict(ja);
        let mut out = vec![0.0; no];
        for (s, &b) in next.iter().enumerate() {
            if b > 0.0 {
                for (jo, o) in out.iter_mut().enumerate() {
                    *o += b * self.env.obs_prob(s, ja, jo);
                }
            }
        }
        out
    }

    pub fn prob_of(&self, ja: usize, jo: usize) -> f64 {
        self.predict(ja)
            .iter()
            .enumerate()
            .filter(|(_, b)| **b > 0.0)
            .map(|(s, b)| b * self.env.obs_prob(s, ja, jo))
            .sum()
    }

    /// Conditions on `(ja, jo)` and on the episode continuing.
    pub fn update(&mut self, ja: usize, jo: usize) -> Result<()> {
        let mut next = self.predict(ja);
        for (s, b) in next.iter_mut().enumerate() {
            if *b > 0.0 {
                *b *= if self.env.is_terminal(s) { 0.0 } else { self.env.obs_prob(s, ja, jo) };
            }
        }
        let z: f64 = next.iter().sum();
        if !(z > 0.0) {
            return Err(Error::UndefinedHistory(format!(
                "pair ({ja}, {jo}) has zero likelihood or ends the episode"
            )));
        }
        next.iter_mut().for_each(|b| *b /= z);
        self.belief = next;
        Ok(())
    }

    pub fn update_all(&mut self, h: &[Pair]) -> Result<()> {
        h.iter().try_for_each(|&(a, o)| self.update(a, o))
    }
}

/// Exact `P(· | h, ja)` over joint observations.
pub fn belief_oracle(env: &dyn ExplicitDynamics, h: &[Pair], ja: usize) -> Result<Vec<f64>> {
    let mut f = BeliefFilter::new(env);
    f.update_all(h)?;
    Ok(f.obs_dist(ja))
}

#[derive(Clone, Debug, PartialEq)]
pub struct McEstimate {
    pub dist: Vec<f64>,
    /// Roll-outs whose prefix matched `h`.
    pub retained: usize,
}

/// Roll-out estimate of `P(· | h, ja)`. Each roll-out plays the actions of
/// `h` and then `ja`, and is kept when its observations match `h` and the
/// episode is still running. Under the uniform exploration policy this is
/// the same conditional as rejection on actions too, at a fraction of the
/// cost. Falls back to uniform (with a warning) when nothing is retained.
pub fn mc_oracle<E: Environment + ?Sized>(
    env: &E,
    h: &[Pair],
    ja: usize,
    n_rollouts: usize,
    seed: u64,
) -> McEstimate {
    let no = env.space().num_joint_observations();
    let outcomes = par::map_range(n_rollouts, |i| {
        let mut rng = child(seed, i as u64);
        let mut s = env.initial_state(&mut rng);
        for &(a, o) in h {
            let tr = env.step(&s, a, &mut rng);
            if tr.obs != o || tr.done {
                return None;
            }
            s = tr.next;
        }
        Some(env.step(&s, ja, &mut rng).obs)
    });
    let mut counts = vec![0usize; no];
    for o in outcomes.into_iter().flatten() {
        counts[o] += 1;
    }
    let retained: usize = counts.iter().sum();
    if retained == 0 {
        log::warn!("no roll-out matched a history of length {}; returning uniform", h.len());
        return McEstimate { dist: vec![1.0 / no as f64; no], retained };
    }
    McEstimate { dist: counts.iter().map(|&c| c as f64 / retained as f64).collect(), retained }
}

/// Exact system dynamics tensor over the one-step tests and every history of
/// length at most `max_hist_len` that can occur, in (length, lexicographic)
/// order.
pub fn exact_dynamics_tensor(env: &dyn ExplicitDynamics, max_hist_len: usize) -> Result<SysDynTensor> {
    let space = env.space().clone();
    let na = space.num_joint_actions();
    let no = space.num_joint_observations();
    let mut hists: Vec<Vec<Pair>> = vec![Vec::new()];
    let mut filters = vec![BeliefFilter::new(env)];
    let mut frontier = 0..1;
    for _ in 0..max_hist_len {
        let start = hists.len();
        for k in frontier.clone() {
            for a in 0..na {
                for o in 0..no {
                    let mut f = filters[k].clone();
                    if f.update(a, o).is_ok() {
                        let mut h = hists[k].clone();
                        h.push((a, o));
                        hists.push(h);
                        filters.push(f);
                    }
                }
            }
        }
        frontier = start..hists.len();
    }
    let tests = TestSet::one_step(&space);
    let shape = tests.shape();
    let n_rows: usize = shape.iter().product();
    let rows: Vec<Option<Vec<Pair>>> = (0..n_rows)
        .map(|r| tests.joint_test(&space, &unravel(r, &shape)))
        .collect();
    let columns = par::map_slice(&filters, |f| {
        rows.iter()
            .map(|jt| jt.as_ref().map_or(0.0, |jt| sequence_prob(f, jt)))
            .collect::<Vec<f64>>()
    });
    let nh = hists.len();
    let mut full_shape = shape.clone();
    full_shape.push(nh);
    let mut t = DenseTensor::zeros(full_shape)?;
    for (k, col) in columns.iter().enumerate() {
        for (r, &v) in col.iter().enumerate() {
            t.data_mut()[r * nh + k] = v;
        }
    }
    let counts = vec![1; nh];
    SysDynTensor::from_parts(t, space, tests, HistorySet::from_histories(hists, counts)?)
}

/// `Π_i P(o_i | h, a_1 o_1 … a_i)` for a joint test.
fn sequence_prob(f: &BeliefFilter<'_>, test: &[Pair]) -> f64 {
    let mut f = f.clone();
    let mut p = 1.0;
    for (i, &(a, o)) in test.iter().enumerate() {
        p *= f.prob_of(a, o);
        if p == 0.0 {
            return 0.0;
        }
        if i + 1 < test.len() && f.update(a, o).is_err() {
            return 0.0;
        }
    }
    p
}

fn unravel(mut r: usize, shape: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; shape.len()];
    for (i, &n) in idx.iter_mut().zip(shape).rev() {
        *i = r % n;
        r /= n;
    }
    idx
}
