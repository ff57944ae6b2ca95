use super::*;
use crate::env::{ChainSpec, EnvSpec, MiniBoxSpec, CHAIN_RIGHT};
use crate::model::{ModelSlot, OracleModel, TableEvaluator, UniformZeroEvaluator};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

fn chain_wrapper(k: usize, gamma: f64, cp: CpSchedule) -> ThinkerEnv {
    let spec = Arc::new(EnvSpec::Chain(ChainSpec::default_eight()));
    let model = OracleModel::with_neutral_evaluator(spec.clone());
    let slot = ModelSlot::new(Arc::new(model));
    let mut cfg = WrapperConfig::new(k, 5, gamma);
    cfg.cp = cp;
    ThinkerEnv::new(Env::new(spec), slot, cfg).unwrap()
}

fn act(real: usize, imaginary: usize, reset: bool) -> AugmentedAction {
    AugmentedAction {
        real,
        imaginary,
        reset,
        real_action_dist: vec![1.0 / 3.0; 3],
    }
}

#[test]
fn augmented_discount_values() {
    assert_eq!(augmented_discount(1.0, 17), 1.0);
    assert_eq!(augmented_discount(0.9, 1), 0.9);
    let g = augmented_discount(0.97, 20);
    assert!((g - 0.97f64.powf(0.05)).abs() < 1e-15);
    assert!((g - 0.998_478_198_741).abs() < 1e-10);
}

#[test]
fn planning_reward_clamps() {
    assert!((planning_reward(1.0, 1.2, 1.0) - 0.2).abs() < 1e-12);
    assert_eq!(planning_reward(1.2, 1.0, 1.0), 0.0);
    assert_eq!(planning_reward(0.3, 5.0, 0.0), 0.0);
}

#[test]
fn state_rep_length_formula() {
    assert_eq!(state_rep_len(4, 5), 54);
    assert_eq!(state_rep_len(5, 20), 79);
    assert_eq!(state_rep_len(2, 1), 30);
}

#[test]
fn first_step_must_be_real_and_stage_shape_holds() {
    let mut w = chain_wrapper(4, 0.97, CpSchedule::Constant(1.0));
    w.reset(0).unwrap();
    assert_eq!(w.upcoming_step(), 4); // real step first
    let mut kinds = Vec::new();
    for i in 0..21 {
        let a = act(CHAIN_RIGHT, if i % 2 == 0 { 0 } else { 1 }, i % 5 == 0);
        let (_, _, done) = w.astep(&a).unwrap();
        kinds.push(w.upcoming_step());
        assert!(!done || i == 20);
        if done {
            break;
        }
    }
    // Any window of K consecutive steps holds exactly one real step.
    let trace_kinds: Vec<bool> = (0..20)
        .map(|i| (i % 4) == 0) // real at positions 0, 4, 8, ...
        .collect();
    for win in trace_kinds.windows(4) {
        assert_eq!(win.iter().filter(|&&r| r).count(), 1);
    }
}

#[test]
fn k1_wrapper_is_raw_passthrough() {
    let spec = Arc::new(EnvSpec::Chain(ChainSpec::default_eight()));
    let mut raw = Env::new(spec.clone());
    let mut w = chain_wrapper(1, 0.97, CpSchedule::Constant(1.0));
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut episode = 0u64;
    raw.reset(episode);
    w.reset(episode).unwrap();
    for _ in 0..2000 {
        let a = rng.gen_range(0..3);
        let t = raw.step(a).unwrap();
        let (reward, _, done) = w.astep(&act(a, 0, false)).unwrap();
        assert_eq!(reward.raw, t.reward);
        assert_eq!(reward.planning, 0.0);
        assert_eq!(done, t.done);
        assert_eq!(w.raw_state().internal, t.next_state.internal);
        if done {
            episode += 1;
            raw.reset(episode);
            w.reset(episode).unwrap();
        }
    }
}

#[test]
fn stepping_after_done_without_reset_errors() {
    let mut w = chain_wrapper(1, 0.97, CpSchedule::Constant(0.0));
    w.reset(0).unwrap();
    loop {
        let (_, _, done) = w.astep(&act(2, 0, false)).unwrap(); // branch ends it
        if done {
            break;
        }
    }
    assert!(matches!(w.astep(&act(0, 0, false)), Err(Error::EpisodeOver)));
    w.reset(1).unwrap();
    assert!(w.astep(&act(0, 0, false)).is_ok());
}

#[test]
fn auto_reset_fires_at_max_depth() {
    let mut w = chain_wrapper(8, 0.97, CpSchedule::Constant(0.0));
    w.reset(0).unwrap();
    w.astep(&act(CHAIN_RIGHT, 0, false)).unwrap(); // bootstrap real
    // Five imaginary steps without requesting a reset: depth hits L = 5.
    for i in 0..5 {
        let (_, state, _) = w.astep(&act(0, CHAIN_RIGHT, false)).unwrap();
        let reset_slot = *state.tree_stats.last().unwrap();
        if i < 4 {
            assert_eq!(w.tree().depth(), i + 1);
            assert_eq!(reset_slot, 0.0);
        } else {
            // Forced reset: depth back to zero, indicator set.
            assert_eq!(w.tree().depth(), 0);
            assert_eq!(reset_slot, 1.0);
            let trailing = state.tree_stats[state.tree_stats.len() - 8 - 2];
            assert!((trailing - 0.97).abs() < 1e-12, "gamma^(0+1) after reset");
        }
    }
}

#[test]
fn root_block_equals_cur_block_after_real_step() {
    let mut w = chain_wrapper(3, 0.5, CpSchedule::Constant(0.0));
    w.reset(0).unwrap();
    let (_, state, _) = w.astep(&act(CHAIN_RIGHT, 0, false)).unwrap();
    let a = 3;
    let block = 2 + a + a + 3 * a; // per-node block length
    let (root_block, rest) = state.tree_stats.split_at(block);
    let cur_block = &rest[..block];
    assert_eq!(root_block, cur_block);
    // g_root_cur equals g_root_root.
    let g_root_cur = rest[block];
    let root_v = state.tree_stats[1];
    assert!((g_root_cur - 0.5 * root_v).abs() < 1e-12);
}

#[test]
fn golden_two_step_stage_state_rep() {
    // Four-cell chain, gamma 0.5, K = 3, table evaluator v[pos] and a fixed
    // policy. Script: bootstrap real step (right), then two imaginary
    // rights. Every slot below is hand-computed.
    let spec = Arc::new(EnvSpec::Chain(ChainSpec::new(4, 0.3, 40).unwrap()));
    let values = vec![0.5, 0.25, 0.125, 0.0625];
    let model = OracleModel::new(
        spec.clone(),
        Arc::new(TableEvaluator {
            values,
            policy: vec![0.2, 0.5, 0.3],
        }),
    );
    let slot = ModelSlot::new(Arc::new(model));
    let cfg = WrapperConfig::new(3, 5, 0.5);
    let mut w = ThinkerEnv::new(Env::new(spec), slot, cfg).unwrap();
    w.reset(0).unwrap();
    w.astep(&act(CHAIN_RIGHT, 0, false)).unwrap(); // to pos 1
    w.astep(&act(0, CHAIN_RIGHT, false)).unwrap(); // imagine pos 2
    let (_, state, _) = w.astep(&act(0, CHAIN_RIGHT, false)).unwrap(); // imagine pos 3

    #[rustfmt::skip]
    let expect: Vec<f64> = vec![
        // root block: r, v, policy, one-hot incoming action
        0.0, 0.25, 0.2, 0.5, 0.3, 0.0, 1.0, 0.0,
        // root child gmax / gmean / visits/K
        0.0, 0.0625, 0.0, 0.0, 0.0390625, 0.0, 0.0, 1.0 / 3.0, 0.0,
        // cur block
        0.0, 0.0625, 0.2, 0.5, 0.3, 0.0, 1.0, 0.0,
        0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
        // g_root_cur, reward sum, gmax_root, trailing discount
        0.0078125, 0.0, 0.125, 0.125,
        // one-hot upcoming step (k = 3), reset indicator
        0.0, 0.0, 1.0, 0.0,
    ];
    assert_eq!(state.tree_stats.len(), state_rep_len(3, 3));
    for (i, (got, want)) in state.tree_stats.iter().zip(expect.iter()).enumerate() {
        assert!(
            (got - want).abs() < 1e-12,
            "slot {i}: got {got}, want {want}"
        );
    }
}

#[test]
fn telescoping_planning_rewards_on_fresh_stages() {
    // Random imaginary/reset actions; real actions always pick an
    // unexpanded root child so every stage starts from a fresh tree and
    // the clamp can never trigger.
    let mut w = chain_wrapper(6, 0.97, CpSchedule::Constant(1.0));
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut episode = 0;
    w.reset(episode).unwrap();
    w.astep(&act(0, 0, false)).unwrap(); // bootstrap
    for _stage in 0..200 {
        let g0 = w.tree().max_root_return();
        let mut planning_sum = 0.0;
        for _ in 0..5 {
            let a = act(0, rng.gen_range(0..3), rng.gen_bool(0.3));
            let (r, _, _) = w.astep(&a).unwrap();
            planning_sum += r.planning;
        }
        let g_end = w.tree().max_root_return();
        assert!(
            (planning_sum - (g_end - g0)).abs() < 1e-9,
            "planning rewards must telescope: sum {planning_sum} vs rise {}",
            g_end - g0
        );
        // Real step along an unexpanded root child when one exists, else
        // the terminating branch: either way the next stage starts fresh.
        let root = w.tree().root();
        let real = (0..3)
            .find(|&a| w.tree().node(root).child(a).is_none())
            .unwrap_or(2);
        let (_, _, done) = w.astep(&act(real, 0, false)).unwrap();
        assert_eq!(w.tree().node_count(), 1, "stage must start fresh");
        if done {
            episode += 1;
            w.reset(episode).unwrap();
            w.astep(&act(0, 0, false)).unwrap();
        }
    }
}

#[test]
fn scripted_stage_pays_planning_rewards_for_discovered_returns() {
    // Oracle model with a zero evaluator: rollout returns only grow when
    // imagination reaches the +1 exit. Walk the agent to cell 6 first.
    let mut w = chain_wrapper(3, 0.97, CpSchedule::Constant(1.0));
    w.reset(0).unwrap();
    w.astep(&act(CHAIN_RIGHT, 0, false)).unwrap(); // bootstrap -> pos 1
    for _ in 0..5 {
        // Idle imagination (left at the wall keeps returns at zero).
        w.astep(&act(0, 0, true)).unwrap();
        w.astep(&act(0, 0, true)).unwrap();
        w.astep(&act(CHAIN_RIGHT, 0, false)).unwrap();
    }
    // Now at pos 6. Imagine right twice: the second step reaches the exit.
    let (r1, _, _) = w.astep(&act(0, CHAIN_RIGHT, false)).unwrap();
    assert_eq!(r1.planning, 0.0, "no reward discovered yet");
    let (r2, _, _) = w.astep(&act(0, CHAIN_RIGHT, false)).unwrap();
    // g_max rises from 0 to gamma^2 * 1.
    assert!((r2.planning - 0.97f64.powi(2)).abs() < 1e-12);
    assert_eq!(r2.raw, 0.0);
}

#[test]
fn done_only_on_real_transitions_and_root_reward_zero() {
    let mut w = chain_wrapper(4, 0.97, CpSchedule::Constant(1.0));
    let mut episode = 0;
    let mut state = w.reset(episode).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..400 {
        let real = w.upcoming_step() == w.config().planning_steps;
        let a = act(rng.gen_range(0..3), rng.gen_range(0..3), rng.gen_bool(0.4));
        let (reward, next, done) = w.astep(&a).unwrap();
        if !real {
            assert!(!done, "imaginary steps never end the episode");
            assert_eq!(reward.raw, 0.0);
        } else {
            assert_eq!(reward.planning, 0.0);
            assert_eq!(next.tree_stats[0], 0.0, "root reward slot is zero");
        }
        state = next;
        if done {
            episode += 1;
            state = w.reset(episode).unwrap();
        }
    }
    let _ = state;
}

#[test]
fn absorbing_rollouts_freeze_stats_in_imagination() {
    // Imagine taking the branch exit, then keep unrolling past it: the
    // planning reward accounts the terminal payout once, later steps add
    // nothing because reward and value freeze at zero.
    let mut w = chain_wrapper(6, 1.0, CpSchedule::Constant(1.0));
    w.reset(0).unwrap();
    w.astep(&act(0, 0, false)).unwrap(); // bootstrap at pos 0
    let (r1, _, _) = w.astep(&act(0, 2, false)).unwrap(); // imagine branch: +0.3
    assert!((r1.planning - 0.3).abs() < 1e-12);
    assert!(w.tree().cur_is_absorbing());
    let (r2, _, _) = w.astep(&act(0, 1, false)).unwrap();
    assert_eq!(r2.planning, 0.0);
    let (r3, state, _) = w.astep(&act(0, 0, false)).unwrap();
    assert_eq!(r3.planning, 0.0);
    // Frozen stats: current node still reports the branch termination.
    let a = 3;
    let cur_done_slots = &state.tree_stats[(2 + 5 * a)..];
    assert_eq!(cur_done_slots[0], 0.0); // cur reward zeroed
}

#[test]
fn minibox_wrapper_smoke_and_length() {
    let (mb, _) = MiniBoxSpec::builtin(120);
    let spec = Arc::new(EnvSpec::MiniBox(mb));
    let model = OracleModel::new(
        spec.clone(),
        Arc::new(UniformZeroEvaluator { action_count: 4 }),
    );
    let slot = ModelSlot::new(Arc::new(model));
    let cfg = WrapperConfig::new(5, 5, 0.97);
    let mut w = ThinkerEnv::new(Env::new(spec), slot, cfg).unwrap();
    let state = w.reset(3).unwrap();
    assert_eq!(state.tree_stats.len(), state_rep_len(4, 5));
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut episode = 3;
    for _ in 0..300 {
        let a = AugmentedAction {
            real: rng.gen_range(0..4),
            imaginary: rng.gen_range(0..4),
            reset: rng.gen_bool(0.3),
            real_action_dist: vec![0.25; 4],
        };
        let (_, state, done) = w.astep(&a).unwrap();
        assert_eq!(state.tree_stats.len(), state_rep_len(4, 5));
        for onehot_sum in [
            state.tree_stats[2 + 4..2 + 8].iter().sum::<f64>(),
            state.tree_stats[(2 + 5 * 4) + 2 + 4..(2 + 5 * 4) + 2 + 8]
                .iter()
                .sum::<f64>(),
        ] {
            assert_eq!(onehot_sum, 1.0, "one-hot slots carry a single 1");
        }
        if done {
            episode += 1;
            w.reset(episode).unwrap();
        }
    }
}

#[test]
fn frame_accounting_is_exact() {
    let mut w = chain_wrapper(5, 0.97, CpSchedule::Constant(0.0));
    w.reset(0).unwrap();
    let mut episode = 0;
    let mut asteps = 0u64;
    // Bootstrap stage: one real step.
    w.astep(&act(0, 0, false)).unwrap();
    asteps += 1;
    assert_eq!(w.frames(), 1);
    for _ in 0..30 {
        for i in 0..5 {
            let is_real = i == 4;
            let (_, _, done) = w
                .astep(&act(if is_real { 0 } else { 1 }, 1, false))
                .unwrap();
            asteps += 1;
            if done {
                episode += 1;
                w.reset(episode).unwrap();
                w.astep(&act(0, 0, false)).unwrap();
                asteps += 1;
                break;
            }
        }
    }
    // Each completed stage consumed exactly one real frame.
    assert_eq!(w.stage(), w.frames());
    let _ = asteps;
}

#[test]
fn cp_schedule_anneals_linearly() {
    let s = CpSchedule::Linear {
        from: 1.0,
        to: 0.0,
        horizon: 100,
    };
    assert_eq!(s.value(0), 1.0);
    assert!((s.value(50) - 0.5).abs() < 1e-12);
    assert_eq!(s.value(100), 0.0);
    assert_eq!(s.value(200), 0.0);
}
