use proptest::prelude::*;

use super::*;
use crate::error::Error;
use crate::estimation::AgentSpace;
use crate::rng::seeded;

fn grid() -> Gridworld {
    Gridworld::new(MapSpec::gridworld(), 2, DEFAULT_P_NOISE, false).unwrap()
}

fn tag() -> Tag {
    Tag::new(MapSpec::tag(), DEFAULT_P_NOISE).unwrap()
}

fn open_cell(map: &MapSpec) -> usize {
    (0..map.num_free())
        .find(|&c| map.wall_bits(c) == 0 && !map.is_goal(c))
        .expect("map has an open cell")
}

fn assert_stochastic(env: &dyn ExplicitDynamics, states: impl Iterator<Item = usize>) {
    let na = env.space().num_joint_actions();
    let no = env.space().num_joint_observations();
    for s in states {
        for ja in 0..na {
            let succ = env.successors(s, ja);
            assert!(succ.iter().all(|(t, p)| *p >= 0.0 && *t < env.num_states()));
            let total: f64 = succ.iter().map(|(_, p)| p).sum();
            assert!((total - 1.0).abs() <= 1e-12, "T row ({s}, {ja}) sums to {total}");
            let obs: f64 = (0..no).map(|jo| env.obs_prob(s, ja, jo)).sum();
            assert!((obs - 1.0).abs() <= 1e-12, "O row ({s}, {ja}) sums to {obs}");
        }
    }
}

#[test]
fn maps_parse_with_expected_cells() {
    let g = MapSpec::gridworld();
    assert_eq!((g.rows(), g.cols(), g.num_free()), (5, 12, 52));
    assert_eq!(g.goals.len(), 1);
    assert_eq!(MapSpec::tag().num_free(), 29);
    let c = MapSpec::colored_gridworld();
    assert!(c.num_free() > 0 && !c.goals.is_empty());
    let p = MapSpec::pocman();
    assert_eq!((p.agent_starts.len(), p.ghost_starts.len()), (2, 4));
    assert!(MapSpec::parse("").is_err());
    assert!(MapSpec::parse("..\n.").is_err());
    assert!(MapSpec::parse("##\n##").is_err());
    assert!(MapSpec::parse(".?").is_err());
}

#[test]
fn map_loads_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.map");
    std::fs::write(&path, "P.G\n#..\n").unwrap();
    let m = MapSpec::load(&path).unwrap();
    assert_eq!(m.num_free(), 5);
    assert_eq!(m.wall_bits(0), 1 | 4 | 8);
}

#[test]
fn domain_cardinalities() {
    let t = tag();
    assert_eq!(t.num_states(), 870);
    assert_eq!((t.space().actions.clone(), t.space().observations.clone()), (vec![5, 5], vec![16, 16]));
    let g = grid();
    assert_eq!(g.num_states(), 2704);
    assert_eq!((g.space().actions.clone(), g.space().observations.clone()), (vec![4, 4], vec![16, 16]));
    let c = Gridworld::new(MapSpec::colored_gridworld(), 2, 0.1, true).unwrap();
    assert_eq!(c.space().observations, vec![256, 256]);
    let p = PocMan::new(MapSpec::pocman(), 2).unwrap();
    assert_eq!(Environment::space(&p).observations, vec![512, 512]);
}

#[test]
fn kernels_are_row_stochastic() {
    let t = tag();
    assert_stochastic(&t, 0..t.num_states());
    let g = grid();
    assert_stochastic(&g, (0..g.num_states()).step_by(7));
    let c = Gridworld::new(MapSpec::colored_gridworld(), 1, 0.3, true).unwrap();
    assert_stochastic(&c, 0..c.num_states());
    assert_stochastic(&TabularPomdp::coupled_pair(), 0..4);
    let init: f64 = t.initial_distribution().iter().map(|(_, p)| p).sum();
    assert!((init - 1.0).abs() < 1e-12);
}

#[test]
fn noise_free_open_cell_senses_nothing() {
    let g = Gridworld::new(MapSpec::gridworld(), 1, 0.0, false).unwrap();
    let cell = open_cell(g.map());
    assert_eq!(g.sensor(cell)[0], 1.0);
    let mut rng = seeded(3);
    for ja in 0..4 {
        assert_eq!(g.sample_obs(cell, ja, &mut rng), 0);
    }
    let c = Gridworld::new(MapSpec::colored_gridworld(), 1, 0.0, true).unwrap();
    let cell = open_cell(c.map());
    assert_eq!(c.sample_obs(cell, 0, &mut rng), 0);
}

#[test]
fn corner_walls_set_bits() {
    let g = Gridworld::new(MapSpec::gridworld(), 1, 0.0, false).unwrap();
    // top-left corner: north and west edges, east neighbour free, south free
    assert_eq!(g.map().wall_bits(0), 1 | 8);
    assert_eq!(g.sensor(0)[9], 1.0);
}

#[test]
fn slip_frequencies_match_rule() {
    let g = Gridworld::new(MapSpec::gridworld(), 1, 0.1, false).unwrap();
    let map = g.map();
    let cell = open_cell(map);
    let (north, east, west) =
        (map.neighbor(cell, 0).unwrap(), map.neighbor(cell, 1).unwrap(), map.neighbor(cell, 3).unwrap());
    let env = Explicit(&g);
    let mut rng = seeded(11);
    let n = 1_000_000usize;
    let mut counts = [0usize; 3];
    for _ in 0..n {
        let tr = env.step(&cell, 0, &mut rng);
        match tr.next {
            x if x == north => counts[0] += 1,
            x if x == east => counts[1] += 1,
            x if x == west => counts[2] += 1,
            other => panic!("unexpected destination {other}"),
        }
    }
    for (c, p) in counts.iter().zip([0.8, 0.1, 0.1]) {
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        let f = *c as f64 / n as f64;
        assert!((f - p).abs() <= 3.0 * sigma, "frequency {f} vs {p}");
    }
}

#[test]
fn blocked_move_stays_put() {
    let g = Gridworld::new(MapSpec::gridworld(), 1, 0.1, false).unwrap();
    // from the top-left corner, north is blocked
    let d = g.move_distribution(0, 0);
    let stay: f64 = d.iter().filter(|(c, _)| *c == 0).map(|(_, p)| p).sum();
    assert!((stay - 0.9).abs() < 1e-12);
}

#[test]
fn reaching_goal_ends_episode() {
    let g = Gridworld::new(MapSpec::gridworld(), 1, 0.1, false).unwrap();
    let goal = g.map().goals[0];
    let west = g.map().neighbor(goal, 3).unwrap();
    assert!(g.is_terminal(goal));
    assert_eq!(g.rewards(west, 1, goal), vec![0.0]);
    assert_eq!(g.rewards(west, 3, g.map().step_from(west, 3)), vec![-1.0]);
    assert_eq!(g.successors(goal, 2), vec![(goal, 1.0)]);
}

#[test]
fn tag_success_and_failure() {
    let t = tag();
    let s = t.encode_state(5, Some(5));
    let ja = t.space().encode_action(&[TAG_ACTION_INDEX, 0]);
    let succ = t.successors(s, ja);
    assert_eq!(succ.len(), 1);
    let next = succ[0].0;
    assert!(t.is_terminal(next));
    assert_eq!(t.rewards(s, ja, next), vec![10.0, -10.0]);

    let mut st = EpisodeState::start(&Explicit(&t), 1);
    st.state = s;
    let out = env_step(&Explicit(&t), &mut st, &[TAG_ACTION_INDEX, 2]).unwrap();
    assert_eq!(out.rewards, vec![10.0, -10.0]);
    assert!(out.done);
    assert!(matches!(env_step(&Explicit(&t), &mut st, &[0, 0]), Err(Error::InvalidState(_))));

    let apart = t.encode_state(0, Some(20));
    let miss = t.successors(apart, ja);
    assert!(miss.iter().all(|(n, _)| !t.is_terminal(*n)));
    assert_eq!(t.rewards(apart, ja, miss[0].0), vec![-10.0, -1.0]);
}

const TAG_ACTION_INDEX: usize = super::tag::TAG_ACTION;

#[test]
fn tag_opponent_flees() {
    let t = tag();
    let map = t.map();
    for robot in 0..map.num_free() {
        for opp in 0..map.num_free() {
            let d = t.flee_distribution(opp, robot);
            let total: f64 = d.iter().map(|(_, p)| p).sum();
            assert!((total - 1.0).abs() < 1e-12);
            let moved: Vec<usize> = d.iter().filter(|(c, _)| *c != opp).map(|(c, _)| *c).collect();
            let best = (0..4).filter_map(|k| map.neighbor(opp, k)).map(|c| map.manhattan(c, robot)).max();
            for c in moved {
                assert_eq!(Some(map.manhattan(c, robot)), best);
            }
        }
    }
}

#[test]
fn env_step_validates_actions() {
    let g = grid();
    let env = Explicit(&g);
    let mut st = EpisodeState::start(&env, 0);
    assert!(env_step(&env, &mut st, &[0]).is_err());
    assert!(env_step(&env, &mut st, &[0, 4]).is_err());
    let r = env_step(&env, &mut st, &[1, 2]).unwrap();
    assert_eq!(r.obs.len(), 2);
    assert_eq!(st.steps, 1);
}

#[test]
fn trajectories_are_reproducible() {
    for domain in [Domain::Tag, Domain::Gridworld, Domain::ColoredGridworld, Domain::PocMan] {
        let env = EnvModel::build(domain, 2, DEFAULT_P_NOISE, None).unwrap();
        let a = env.generate(200, 10, 7).unwrap();
        let b = env.generate(200, 10, 7).unwrap();
        assert_eq!(a, b);
        let mut ja = Vec::new();
        let mut jb = Vec::new();
        a.write_jsonl(&mut ja).unwrap();
        b.write_jsonl(&mut jb).unwrap();
        assert_eq!(ja, jb);
        assert_ne!(a, env.generate(200, 10, 8).unwrap());
        assert_eq!(a.len(), 200);
        assert!(a.episodes.iter().all(|e| (1..=10).contains(&e.len())));
        a.validate(env.space()).unwrap();
    }
}

#[test]
fn trajectory_edge_cases() {
    let env = EnvModel::build(Domain::Gridworld, 2, 0.1, None).unwrap();
    let one = env.generate(1, 1, 0).unwrap();
    assert_eq!(one.len(), 1);
    assert_eq!(one.episodes[0].len(), 1);
    assert!(env.generate(0, 5, 0).is_err());
    let big = env.generate(2000, 10, 1).unwrap();
    assert_eq!(big.len(), 2000);
    assert!(big.episodes.iter().all(|e| e.len() <= 10));
}

#[test]
fn episodes_stop_at_terminal() {
    let env = EnvModel::build(Domain::Tag, 2, 0.1, None).unwrap();
    let trajs = env.generate(3000, 15, 4).unwrap();
    let ended: Vec<_> = trajs.episodes.iter().filter(|e| e.len() < 15).collect();
    assert!(!ended.is_empty());
    for e in ended {
        let last = e.steps.last().unwrap();
        assert_eq!(last.a[0], TAG_ACTION_INDEX);
        assert_eq!(last.r.as_ref().unwrap(), &vec![10.0, -10.0]);
    }
}

#[test]
fn pocman_rules() {
    let p = PocMan::new(MapSpec::pocman(), 2).unwrap();
    let mut rng = seeded(5);
    let s = p.initial_state(&mut rng);
    assert_eq!(s.ghosts.len(), 4);
    // no ghost starts in an agent's line of sight on the shipped map
    let a0 = s.agents[0];
    assert!(p.observe(&s, a0) < 512);
    let mut st = s.clone();
    st.food.iter_mut().for_each(|f| *f = false);
    let target = p.map().step_from(a0, 1);
    st.food[target] = true;
    st.ghosts = vec![p.map().ghost_starts[3]; 4];
    let ja = Environment::space(&p).encode_action(&[1, 0]);
    let tr = p.step(&st, ja, &mut rng);
    assert_eq!(tr.rewards[0], -1.0 + 1.0);
    assert!(!tr.next.food[target]);
    let mut caught = st.clone();
    caught.ghosts = vec![target; 4];
    let ghost_near = (0..4).filter_map(|d| p.map().neighbor(target, d)).count();
    assert!(ghost_near > 0);
    let tr = p.step(&caught, ja, &mut seeded(1));
    // the agent steps onto the ghosts' cell; they may move away, but a
    // swap or a shared cell always ends the episode
    if tr.next.ghosts.contains(&tr.next.agents[0]) {
        assert!(tr.done);
    }
}

#[test]
fn belief_oracle_single_state() {
    let space = AgentSpace::uniform(2, 2, 2).unwrap();
    let env = TabularPomdp::deterministic(space, 2).unwrap();
    let p = belief_oracle(&env, &[], 1).unwrap();
    assert_eq!(p, vec![0.0, 0.0, 1.0, 0.0]);
    let p = belief_oracle(&env, &[(0, 2), (3, 2)], 1).unwrap();
    assert_eq!(p, vec![0.0, 0.0, 1.0, 0.0]);
    assert!(matches!(belief_oracle(&env, &[(0, 1)], 0), Err(Error::UndefinedHistory(_))));
}

#[test]
fn belief_oracle_state_independent_observations() {
    let space = AgentSpace::uniform(1, 2, 3).unwrap();
    let row = vec![0.2, 0.5, 0.3];
    let t = vec![vec![0.3, 0.7], vec![0.9, 0.1]];
    let env = TabularPomdp::new(space, vec![0.5, 0.5], vec![t.clone(), t], vec![vec![row.clone(); 2]; 2]).unwrap();
    for h in [vec![], vec![(0, 1)], vec![(1, 0), (0, 2), (1, 1)]] {
        let p = belief_oracle(&env, &h, 1).unwrap();
        for (a, b) in p.iter().zip(&row) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}

#[test]
fn belief_oracle_matches_hand_filter() {
    let env = TabularPomdp::two_state_chain();
    // step 1: predict, observe 0
    let b1 = [0.6 * 0.7 + 0.4 * 0.2, 0.6 * 0.3 + 0.4 * 0.8];
    let z1 = b1[0] * 0.9 + b1[1] * 0.25;
    let c1 = [b1[0] * 0.9 / z1, b1[1] * 0.25 / z1];
    // step 2: predict, observe 1
    let b2 = [c1[0] * 0.7 + c1[1] * 0.2, c1[0] * 0.3 + c1[1] * 0.8];
    let z2 = b2[0] * 0.1 + b2[1] * 0.75;
    let c2 = [b2[0] * 0.1 / z2, b2[1] * 0.75 / z2];
    // next prediction
    let b3 = [c2[0] * 0.7 + c2[1] * 0.2, c2[0] * 0.3 + c2[1] * 0.8];
    let want = [b3[0] * 0.9 + b3[1] * 0.25, b3[0] * 0.1 + b3[1] * 0.75];
    let got = belief_oracle(&env, &[(0, 0), (0, 1)], 0).unwrap();
    for (g, w) in got.iter().zip(want) {
        assert!((g - w).abs() <= 1e-12, "{g} vs {w}");
    }
    assert!((z1 - 0.575).abs() < 1e-15);
}

#[test]
fn mc_oracle_trivial_cases() {
    let space = AgentSpace::uniform(1, 2, 3).unwrap();
    let env = TabularPomdp::deterministic(space, 1).unwrap();
    for n in [1, 10, 1000] {
        let est = mc_oracle(&Explicit(&env), &[(0, 1)], 1, n, 3);
        assert_eq!(est.dist, vec![0.0, 1.0, 0.0]);
        assert_eq!(est.retained, n);
    }
    let est = mc_oracle(&Explicit(&env), &[(0, 2)], 1, 50, 3);
    assert_eq!(est.retained, 0);
    assert_eq!(est.dist, vec![1.0 / 3.0; 3]);
}

#[test]
fn mc_oracle_converges_to_belief() {
    let g = Gridworld::new(MapSpec::gridworld(), 2, DEFAULT_P_NOISE, false).unwrap();
    let ja = g.space().encode_action(&[1, 2]);
    let exact = belief_oracle(&g, &[], ja).unwrap();
    let n = 100_000;
    let est = mc_oracle(&Explicit(&g), &[], ja, n, 17);
    assert_eq!(est.retained, n);
    let tv: f64 = 0.5 * exact.iter().zip(&est.dist).map(|(a, b)| (a - b).abs()).sum::<f64>();
    assert!(tv <= 0.01, "tv {tv}");
    for (p, f) in exact.iter().zip(&est.dist) {
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!((p - f).abs() <= 3.0 * sigma + 5.0 / n as f64 || (p - f).abs() <= 4.5 * sigma);
    }
}

#[test]
fn mc_oracle_with_history_matches_belief() {
    let env = TabularPomdp::coupled_pair();
    let h = [(1, 2), (3, 0)];
    let exact = belief_oracle(&env, &h, 2).unwrap();
    let n = 200_000;
    let est = mc_oracle(&Explicit(&env), &h, 2, n, 5);
    let m = est.retained as f64;
    assert!(m > 1000.0);
    for (p, f) in exact.iter().zip(&est.dist) {
        assert!((p - f).abs() <= 4.0 * (p * (1.0 - p) / m).sqrt());
    }
}

#[test]
fn filter_conditions_on_continuing() {
    let t = tag();
    let mut f = BeliefFilter::new(&t);
    let ja = t.space().encode_action(&[TAG_ACTION_INDEX, 0]);
    let probs = f.obs_dist(ja);
    let total: f64 = probs.iter().sum();
    assert!((total - 1.0).abs() < 1e-12);
    let jo = probs.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    f.update(ja, jo).unwrap();
    assert!(f.belief().iter().enumerate().all(|(s, &b)| b == 0.0 || !t.is_terminal(s)));
}

#[test]
fn exact_tensor_fibers_are_distributions() {
    let env = TabularPomdp::coupled_pair();
    let sds = exact_dynamics_tensor(&env, 2).unwrap();
    assert_eq!(sds.histories.len(), 1 + 16 + 256);
    assert_eq!(sds.tensor.shape(), &[4, 4, 273]);
    let space = &sds.space;
    for k in 0..sds.histories.len() {
        for ja in 0..4 {
            let total: f64 = (0..4)
                .map(|jo| {
                    let t = sds.tests.one_step_tuple(space, (ja, jo));
                    sds.tensor.get(&[t[0], t[1], k])
                })
                .sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }
    let h = sds.histories.get(20).to_vec();
    let p = belief_oracle(&env, &h, 3).unwrap();
    let t = sds.tests.one_step_tuple(space, (3, 1));
    assert!((sds.tensor.get(&[t[0], t[1], 20]) - p[1]).abs() < 1e-15);
}

#[test]
fn domain_names_round_trip() {
    for d in [Domain::Tag, Domain::Gridworld, Domain::ColoredGridworld, Domain::PocMan] {
        assert_eq!(d.name().parse::<Domain>().unwrap(), d);
    }
    assert!("pacman".parse::<Domain>().is_err());
    assert!(EnvModel::build(Domain::Tag, 3, 0.1, None).is_err());
    assert!(EnvModel::build(Domain::PocMan, 2, 0.1, None).unwrap().explicit().is_none());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn belief_oracle_is_simplex(seed in 0u64..1000, len in 0usize..4) {
        let g = grid();
        let trajs = generate_trajectories(&Explicit(&g), 1, len.max(1), seed).unwrap();
        let h: Vec<_> = trajs.episodes[0].joint(g.space());
        let h = &h[..h.len().min(len)];
        let ja = (seed % 16) as usize;
        let p = belief_oracle(&g, h, ja).unwrap();
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn same_seed_same_episode(seed in any::<u64>()) {
        let t = tag();
        let a = generate_trajectories(&Explicit(&t), 3, 8, seed).unwrap();
        let b = generate_trajectories(&Explicit(&t), 3, 8, seed).unwrap();
        prop_assert_eq!(a, b);
    }
}
