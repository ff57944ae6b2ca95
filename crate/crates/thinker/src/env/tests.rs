use super::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

fn chain_env() -> Env {
    Env::new(Arc::new(EnvSpec::Chain(ChainSpec::default_eight())))
}

/// A fixed hand-written layout used across tests ("L1"): one box one push
/// away from its target.
pub(crate) fn layout_l1() -> Level {
    parse_level("######|#----#|#@$.-#|#----#|#----#|######").unwrap()
}

#[test]
fn chain_reset_is_position_zero() {
    let mut env = chain_env();
    let s = env.reset(0);
    let mut expect = vec![0.0; 8];
    expect[0] = 1.0;
    assert_eq!(s.observation, expect);
    assert_eq!(s.step_count, 0);
}

#[test]
fn chain_right_from_six_and_seven() {
    let mut env = chain_env();
    env.reset(0);
    for _ in 0..6 {
        env.step(CHAIN_RIGHT).unwrap();
    }
    let t = env.step(CHAIN_RIGHT).unwrap();
    assert_eq!(t.reward, 0.0);
    assert!(!t.done);
    assert_eq!(t.next_state.observation[7], 1.0);
    let t = env.step(CHAIN_RIGHT).unwrap();
    assert_eq!(t.reward, 1.0);
    assert!(t.done);
    assert!(env.spec().is_solved(&t.next_state.internal));
}

#[test]
fn chain_left_moves_back() {
    let spec = EnvSpec::Chain(ChainSpec::default_eight());
    let enc = StateEncoding::Chain(ChainEncoding {
        pos: 3,
        steps: 5,
        status: ChainStatus::Running,
    });
    let (r, next, done) = oracle_transition(&spec, &enc, CHAIN_LEFT).unwrap();
    assert_eq!(r, 0.0);
    assert!(!done);
    match next {
        StateEncoding::Chain(e) => assert_eq!(e.pos, 2),
        _ => unreachable!(),
    }
}

#[test]
fn chain_branch_pays_and_ends() {
    let mut env = chain_env();
    env.reset(1);
    let t = env.step(CHAIN_BRANCH).unwrap();
    assert_eq!(t.reward, 0.3);
    assert!(t.done);
    assert!(!env.spec().is_solved(&t.next_state.internal));
}

#[test]
fn chain_step_cap_terminates() {
    let spec = ChainSpec::new(8, 0.3, 5).unwrap();
    let mut env = Env::new(Arc::new(EnvSpec::Chain(spec)));
    env.reset(0);
    for i in 0..5 {
        let t = env.step(CHAIN_LEFT).unwrap();
        assert_eq!(t.done, i == 4);
    }
    assert!(matches!(env.step(CHAIN_LEFT), Err(Error::EpisodeOver)));
}

#[test]
fn out_of_range_action_errors() {
    let mut env = chain_env();
    env.reset(0);
    assert!(matches!(
        env.step(3),
        Err(Error::ActionOutOfRange { action: 3, .. })
    ));
}

#[test]
fn fixed_layout_reset_is_deterministic() {
    let spec = EnvSpec::MiniBox(MiniBoxSpec::fixed(layout_l1(), 120).unwrap());
    let mut env = Env::new(Arc::new(spec));
    let a = env.reset(3);
    let b = env.reset(99);
    assert_eq!(a.observation, b.observation);
    // Constructed layout is encoded exactly.
    let level = layout_l1();
    match a.internal {
        StateEncoding::MiniBox(e) => {
            assert_eq!(e.walls, level.walls);
            assert_eq!(e.targets, level.targets);
            assert_eq!(e.boxes, level.boxes);
            assert_eq!(e.agent, level.agent);
        }
        _ => unreachable!(),
    }
}

#[test]
fn pool_reset_same_seed_same_observation() {
    let (spec, _) = MiniBoxSpec::builtin(120);
    let mut env = Env::new(Arc::new(EnvSpec::MiniBox(spec)));
    let a = env.reset(7);
    let b = env.reset(7);
    assert_eq!(a.observation, b.observation);
}

#[test]
fn push_last_box_on_target_pays_three() {
    // Agent pushes the box one cell right onto the target: +1 box-on,
    // +2 solve bonus, no step cost on box events.
    let spec = EnvSpec::MiniBox(MiniBoxSpec::fixed(layout_l1(), 120).unwrap());
    let mut env = Env::new(Arc::new(spec));
    env.reset(0);
    let t = env.step(3).unwrap(); // right
    assert_eq!(t.reward, 3.0);
    assert!(t.done);
    assert!(env.spec().is_solved(&t.next_state.internal));
}

#[test]
fn push_into_wall_costs_step() {
    // Box directly above the agent, wall behind it: the push fails.
    let level = parse_level("######|#-$.-#|#-@--#|#----#|#----#|######").unwrap();
    let spec = EnvSpec::MiniBox(MiniBoxSpec::fixed(level, 120).unwrap());
    let mut env = Env::new(Arc::new(spec));
    let before = env.reset(0);
    let t = env.step(0).unwrap(); // up
    assert_eq!(t.reward, STEP_COST);
    assert!(!t.done);
    assert_eq!(t.next_state.internal, {
        let mut e = before.internal;
        if let StateEncoding::MiniBox(ref mut m) = e {
            m.steps = 1;
        }
        e
    });
}

#[test]
fn pushing_box_off_target_penalised() {
    let level = parse_level("######|#----#|#@*--#|#-$.-#|#----#|######").unwrap();
    let spec = EnvSpec::MiniBox(MiniBoxSpec::fixed(level, 120).unwrap());
    let mut env = Env::new(Arc::new(spec));
    env.reset(0);
    let t = env.step(3).unwrap(); // push the solved box off its target
    assert_eq!(t.reward, BOX_OFF);
    assert!(!t.done);
}

#[test]
fn minibox_step_cap() {
    let (spec, _) = MiniBoxSpec::builtin(120);
    let mut env = Env::new(Arc::new(EnvSpec::MiniBox(spec)));
    env.reset(11);
    let mut steps = 0;
    loop {
        // Walk into the top-left wall forever; cap must end the episode.
        let t = env.step(0).unwrap();
        steps += 1;
        if t.done {
            break;
        }
        assert!(steps <= 120, "episode exceeded the step cap");
    }
    assert_eq!(steps, 120);
}

#[test]
fn builtin_pool_levels_are_solvable_with_certificates() {
    let (spec, cert) = MiniBoxSpec::builtin(120);
    let pool = match &spec.source {
        LevelSource::Pool(p) => p.clone(),
        _ => unreachable!(),
    };
    assert_eq!(pool.len(), 50);
    assert_eq!(cert.plans.len(), 50);
    // Replay every certificate plan and require a solve.
    for (i, level) in pool.iter().enumerate() {
        let fixed = EnvSpec::MiniBox(MiniBoxSpec::fixed(*level, 120).unwrap());
        let mut env = Env::new(Arc::new(fixed));
        env.reset(0);
        let plan = &cert.plans[i];
        assert!(plan.len() <= 12);
        let mut done = false;
        for &a in plan {
            let t = env.step(a).unwrap();
            done = t.done;
        }
        assert!(done, "level {i} plan did not terminate");
        assert!(env.spec().is_solved(&env.state().internal));
    }
}

#[test]
fn observations_injective_over_reachable_states() {
    let pool = builtin_pool();
    for level in pool.iter().take(10) {
        let spec = MiniBoxSpec::fixed(*level, 120).unwrap();
        let states = reachable_states(level, 200_000);
        let mut seen = std::collections::HashMap::new();
        for (agent, boxes) in states {
            let enc = MiniBoxEncoding {
                walls: level.walls,
                targets: level.targets,
                boxes,
                agent,
                steps: 0,
            };
            let obs: Vec<u8> = spec.observation(&enc).iter().map(|&x| x as u8).collect();
            if let Some(prev) = seen.insert(obs, (agent, boxes)) {
                panic!("observation collision: {prev:?} vs {:?}", (agent, boxes));
            }
        }
    }
}

#[test]
fn level_text_round_trip() {
    let line = "######|#-.--#|#@$--#|#--*-#|#-+--#|######";
    // '+' and '@' cannot both appear; use a valid line instead.
    let line = line.replace('+', "-");
    let level = parse_level(&line).unwrap();
    assert_eq!(format_level(&level), line);
}

#[test]
fn malformed_levels_are_rejected() {
    assert!(parse_level("###|#@#|###").is_err()); // no box
    assert!(parse_level("####|#@$#|#--#|####").is_err()); // box/target mismatch
    assert!(parse_level("####|#$.#|#--#|####").is_err()); // no agent
    assert!(parse_level("####|#x.#|#@$#|####").is_err()); // unknown cell
}

proptest! {
    #[test]
    fn oracle_matches_live_env_on_random_walks(seed in 0u64..500, actions in proptest::collection::vec(0usize..4, 1..60)) {
        let (spec, _) = MiniBoxSpec::builtin(120);
        let spec = Arc::new(EnvSpec::MiniBox(spec));
        let mut env = Env::new(spec.clone());
        let mut state = env.reset(seed);
        for &a in &actions {
            let expect = oracle_transition(&spec, &state.internal, a).unwrap();
            let t = env.step(a).unwrap();
            prop_assert_eq!(expect.0, t.reward);
            prop_assert_eq!(&expect.1, &t.next_state.internal);
            prop_assert_eq!(expect.2, t.done);
            state = t.next_state;
            if t.done {
                break;
            }
        }
    }

    #[test]
    fn oracle_is_deterministic(seed in 0u64..200, action in 0usize..3) {
        let spec = EnvSpec::Chain(ChainSpec::default_eight());
        let enc = spec.initial_encoding(seed);
        let a = oracle_transition(&spec, &enc, action).unwrap();
        let b = oracle_transition(&spec, &enc, action).unwrap();
        prop_assert_eq!(a.0, b.0);
        prop_assert_eq!(a.1, b.1);
        prop_assert_eq!(a.2, b.2);
    }

    #[test]
    fn generated_levels_round_trip_and_solve(seed in 0u64..40) {
        let cfg = GeneratorConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let level = generate_level(&cfg, &mut rng);
        let line = format_level(&level);
        prop_assert_eq!(parse_level(&line).unwrap(), level);
        prop_assert!(solve_bfs(&level, 12).is_some());
    }

    #[test]
    fn episodes_always_end_within_cap(seed in 0u64..50, walk in proptest::collection::vec(0usize..4, 130)) {
        let (spec, _) = MiniBoxSpec::builtin(120);
        let mut env = Env::new(Arc::new(EnvSpec::MiniBox(spec)));
        env.reset(seed);
        let mut terminated = false;
        for (i, &a) in walk.iter().enumerate() {
            let t = env.step(a).unwrap();
            if t.done {
                terminated = true;
                prop_assert!(i < 120);
                break;
            }
        }
        prop_assert!(terminated);
    }
}
