use super::config::{AgentKind, ModelKind, RunConfig};
use super::evalrun::{self, EvalReport};
use super::{
    dual_net_spec, episode_seed, eval_env_spec, neutral_oracle, training_env_spec, EpisodeStats,
    Worker,
};
use crate::agents::{
    AcConfig, AcSpec, AcTrainer, ActorCriticPolicy, AgentInput, AugmentedPolicy, Bootstrap,
    ExhaustiveWrapperPolicy, MctsConfig, MctsWrapperPolicy, RandomPolicy, StepContext, TrajStep,
    Trajectory,
};
use crate::checkpoint::{write_checkpoint, Checkpoint};
use crate::env::Env;
use crate::error::Result;
use crate::model::{
    DualNetModel, DualNetTrainer, LossScales, ModelSlot, ReplayBuffer, SharedReplay,
};
use crate::wrapper::{augmented_discount, state_rep_len, ThinkerEnv, WrapperConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

/// Artefacts of a training run.
#[derive(Debug)]
pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub metrics: PathBuf,
    pub frames: u64,
    pub episodes: u64,
    pub final_eval: EvalReport,
    pub mean_return_window: f64,
    pub solve_rate_window: f64,
}

/// Dim/section layout of run checkpoints (documented in
/// `docs/file-formats.md`).
pub(crate) mod ckpt_layout {
    pub const ENV_KIND: usize = 0;
    pub const ACTION_COUNT: usize = 1;
    pub const OBS_DIM: usize = 2;
    pub const K_TRAIN: usize = 3;
    pub const MAX_DEPTH: usize = 4;
    pub const MODEL_KIND: usize = 5;
    pub const MODEL_HIDDEN: usize = 6;
    pub const AGENT_PRESENT: usize = 7;
    pub const AGENT_STATS_DIM: usize = 8;
    pub const AGENT_HIDDEN_DIM: usize = 9;
    pub const AGENT_TRUNK: usize = 10;
    pub const AGENT_INPUT: usize = 11;
    pub const DIM_COUNT: usize = 12;

    pub const INPUT_TREE_HIDDEN: u32 = 0;
    pub const INPUT_TREE_ONLY: u32 = 1;
    pub const INPUT_RAW: u32 = 2;
}

/// Interleaves environment workers (acting and replay pushes), the model
/// trainer (respecting the replay ratio), and the agent trainer, then
/// evaluates the final checkpoint greedily. Deterministic per seed at a
/// fixed worker count.
pub fn run_training(cfg: &RunConfig) -> Result<TrainOutcome> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    let metrics_path = cfg.out_dir.join("metrics.csv");
    let model_losses_path = cfg.out_dir.join("model_losses.csv");
    let checkpoint_path = cfg.out_dir.join("checkpoint.thnk");
    let mut metrics = std::io::BufWriter::new(std::fs::File::create(&metrics_path)?);
    writeln!(
        metrics,
        "frames,episodes,mean_return_200,solve_rate_200,planning_reward_sum,cp,ac_loss,grad_norm"
    )?;
    let mut model_losses = std::io::BufWriter::new(std::fs::File::create(&model_losses_path)?);
    writeln!(model_losses, "step,L_stat,L_nonstat,mean_priority")?;

    let env_spec = training_env_spec(cfg.env);
    let action_count = env_spec.action_count();
    let obs_dim = env_spec.observation_dim();

    // Model: an exact oracle, or a learned dual network with its trainer.
    let slot;
    let mut model_trainer: Option<DualNetTrainer> = None;
    let replay = match cfg.model {
        ModelKind::Oracle => {
            slot = ModelSlot::new(neutral_oracle(&env_spec));
            None
        }
        ModelKind::Learned => {
            let net_spec = dual_net_spec(&env_spec, cfg.model_hidden_dim);
            let model = DualNetModel::new(net_spec, cfg.seed ^ 0x5EED_0001);
            slot = ModelSlot::new(Arc::new(model.clone()));
            model_trainer = Some(DualNetTrainer::new(
                model,
                cfg.model_lr,
                LossScales {
                    reward: cfg.scale_reward,
                    done: cfg.scale_done,
                    feature: cfg.scale_feature,
                    value: cfg.scale_value,
                    policy: cfg.scale_policy,
                },
                cfg.gamma,
                cfg.model_unroll,
            ));
            Some(SharedReplay::new(ReplayBuffer::new(
                cfg.buffer_capacity,
                cfg.buffer_min_fill,
                cfg.model_unroll,
                cfg.priority_alpha,
            )))
        }
    };

    // Agent network (only the actor-critic trains).
    let agent_input = match cfg.agent {
        AgentKind::Ac => AgentInput::TreeStats {
            use_hidden: cfg.use_hidden,
        },
        AgentKind::AcRaw => AgentInput::RawObservation,
        _ => AgentInput::TreeStats { use_hidden: false },
    };
    let model_view_dim = slot.snapshot().agent_view_dim();
    let (stats_dim, hidden_dim) = match agent_input {
        AgentInput::TreeStats { use_hidden } => (
            state_rep_len(action_count, cfg.planning_steps),
            if use_hidden { model_view_dim } else { 0 },
        ),
        AgentInput::RawObservation => (obs_dim, 0),
    };
    let ac_spec = AcSpec {
        stats_dim,
        hidden_dim,
        action_count,
        trunk_width: cfg.agent_trunk_width,
    };
    let ac_cfg = AcConfig {
        entropy_real: cfg.entropy_real,
        entropy_imaginary: cfg.entropy_imaginary,
        baseline_scale: cfg.baseline_scale,
        clip_norm: cfg.clip_norm,
        lr: cfg.ac_lr,
    };
    let mut ac_trainer = AcTrainer::new(ac_spec.clone(), ac_cfg, cfg.seed ^ 0x5EED_0002);

    // Workers.
    let mut workers = Vec::with_capacity(cfg.workers);
    for w in 0..cfg.workers {
        let mut wrapper_cfg = WrapperConfig::new(cfg.planning_steps, cfg.max_depth, cfg.gamma);
        wrapper_cfg.cp = cfg.cp.cp_schedule(cfg.frame_budget / cfg.workers as u64);
        let mut wrapper = ThinkerEnv::new(Env::new(env_spec.clone()), slot.clone(), wrapper_cfg)?;
        if let Some(replay) = &replay {
            wrapper = wrapper.with_replay(replay.clone());
        }
        workers.push(Worker::new(wrapper, cfg.seed, w as u64)?);
    }

    let gamma_tilde = augmented_discount(cfg.gamma, cfg.planning_steps);
    let unroll_steps = 2 * cfg.planning_steps + 1;
    let mut act_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5EED_0003);
    let mut buffer_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5EED_0004);
    let mut stats = EpisodeStats::default();
    let mut planning_reward_sum = 0.0;
    let mut transitions_trained: u64 = 0;
    let mut model_steps: u64 = 0;
    let mut last_ac_loss = 0.0;
    let mut last_grad_norm = 0.0;
    let mut logged_at_episode = 0u64;

    let mut baseline_policy: Option<Box<dyn AugmentedPolicy>> = match &cfg.agent {
        AgentKind::Ac | AgentKind::AcRaw => None,
        AgentKind::Mcts { temperature } => Some(Box::new(MctsWrapperPolicy::new(MctsConfig {
            exploration: 1.25,
            temperature: *temperature,
        }))),
        AgentKind::Exhaustive { depth } => {
            crate::agents::check_online_budget(action_count, *depth, cfg.planning_steps)?;
            Some(Box::new(ExhaustiveWrapperPolicy::new(*depth)))
        }
        AgentKind::Random => Some(Box::new(RandomPolicy)),
    };

    let total_frames = |workers: &[Worker]| workers.iter().map(|w| w.wrapper.frames()).sum::<u64>();

    while total_frames(&workers) < cfg.frame_budget {
        // ---- Acting: each worker contributes one unroll of steps.
        let mut trajectories = Vec::with_capacity(workers.len());
        for worker in workers.iter_mut() {
            match &mut baseline_policy {
                Some(policy) => {
                    for _ in 0..unroll_steps {
                        let (_, reward, _) =
                            worker.step_with(policy.as_mut(), &mut act_rng, |ret, solved| {
                                stats.push(ret, solved);
                            })?;
                        planning_reward_sum += reward.planning;
                    }
                }
                None => {
                    let policy = ActorCriticPolicy {
                        spec: ac_spec.clone(),
                        params: Arc::new(ac_trainer.params().to_vec()),
                        input: agent_input,
                        greedy: false,
                    };
                    let traj = collect_trajectory(
                        worker,
                        &policy,
                        unroll_steps,
                        cfg.planning_steps,
                        &mut act_rng,
                        &mut stats,
                        &mut planning_reward_sum,
                    )?;
                    trajectories.push(traj);
                }
            }
        }

        // ---- Model training, gated by the replay ratio.
        if let (Some(trainer), Some(replay)) = (model_trainer.as_mut(), replay.as_ref()) {
            let frames_now = total_frames(&workers);
            let beta = cfg
                .importance_beta
                .value(frames_now, cfg.frame_budget);
            loop {
                let mut buffer = replay.0.lock().expect("replay");
                let collected = buffer.total_pushed();
                let batch_cost = (cfg.model_batch * buffer.seq_len()) as u64;
                if !buffer.ready()
                    || (transitions_trained + batch_cost) as f64
                        > cfg.replay_ratio * collected as f64
                {
                    break;
                }
                let batch = match buffer.sample(cfg.model_batch, beta, &mut buffer_rng) {
                    Some(b) => b,
                    None => break,
                };
                drop(buffer);
                let report = trainer.train_step(&batch)?;
                transitions_trained += batch_cost;
                model_steps += 1;
                let mean_priority = report
                    .new_priorities
                    .iter()
                    .map(|(_, p)| p)
                    .sum::<f64>()
                    / report.new_priorities.len().max(1) as f64;
                replay
                    .0
                    .lock()
                    .expect("replay")
                    .update_priorities(&report.new_priorities);
                writeln!(
                    model_losses,
                    "{},{},{},{}",
                    model_steps, report.stationary_loss, report.nonstationary_loss, mean_priority
                )?;
                slot.publish(Arc::new(trainer.model().clone()));
            }
        }

        // ---- Agent training.
        if !trajectories.is_empty() {
            let (loss, norm) = ac_trainer.train_step(&trajectories, gamma_tilde)?;
            last_ac_loss = loss;
            last_grad_norm = norm;
        }

        // ---- Logging.
        if stats.episodes >= logged_at_episode + cfg.log_every_episodes as u64 {
            logged_at_episode = stats.episodes;
            writeln!(
                metrics,
                "{},{},{},{},{},{},{},{}",
                total_frames(&workers),
                stats.episodes,
                stats.mean_return(),
                stats.solve_rate(),
                planning_reward_sum,
                workers[0].wrapper.current_cp(),
                last_ac_loss,
                last_grad_norm
            )?;
        }
    }
    let frames = total_frames(&workers);
    writeln!(
        metrics,
        "{},{},{},{},{},{},{},{}",
        frames,
        stats.episodes,
        stats.mean_return(),
        stats.solve_rate(),
        planning_reward_sum,
        workers[0].wrapper.current_cp(),
        last_ac_loss,
        last_grad_norm
    )?;
    metrics.flush()?;
    model_losses.flush()?;

    // ---- Checkpoint.
    save_checkpoint(
        &checkpoint_path,
        cfg,
        action_count,
        obs_dim,
        model_trainer.as_ref().map(|t| t.model()),
        &ac_spec,
        ac_trainer.params(),
        agent_input,
    )?;

    // ---- Final greedy evaluation on the fixed set.
    let final_eval = evalrun::run_eval(cfg, &checkpoint_path, cfg.planning_steps)?;
    Ok(TrainOutcome {
        checkpoint: checkpoint_path,
        metrics: metrics_path,
        frames,
        episodes: stats.episodes,
        final_eval,
        mean_return_window: stats.mean_return(),
        solve_rate_window: stats.solve_rate(),
    })
}

/// Collect one fixed-length trajectory from a worker under the given
/// policy snapshot.
#[allow(clippy::too_many_arguments)]
fn collect_trajectory(
    worker: &mut Worker,
    policy: &ActorCriticPolicy,
    steps: usize,
    planning_steps: usize,
    rng: &mut ChaCha8Rng,
    stats: &mut EpisodeStats,
    planning_reward_sum: &mut f64,
) -> Result<Trajectory> {
    let mut policy = ActorCriticPolicy {
        spec: policy.spec.clone(),
        params: policy.params.clone(),
        input: policy.input,
        greedy: false,
    };
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let (stats_in, hidden_in) = {
            let ctx = StepContext {
                wrapper: &worker.wrapper,
                state: &worker.state,
                last_action: &worker.last_action,
                last_reward: worker.last_reward,
            };
            policy.inputs(&ctx)
        };
        let prev_action = (
            worker.last_action.real,
            worker.last_action.imaginary,
            worker.last_action.reset,
        );
        let prev_reward = (worker.last_reward.raw, worker.last_reward.planning);
        let k = worker.wrapper.upcoming_step();
        let (action, reward, done) = worker.step_with(&mut policy, rng, |ret, solved| {
            stats.push(ret, solved);
        })?;
        *planning_reward_sum += reward.planning;
        out.push(TrajStep {
            stats: stats_in,
            hidden: hidden_in,
            prev_action,
            prev_reward,
            action: (action.real, action.imaginary, action.reset),
            reward: (reward.raw, reward.planning),
            done,
            k,
        });
    }
    let (stats_in, hidden_in) = {
        let ctx = StepContext {
            wrapper: &worker.wrapper,
            state: &worker.state,
            last_action: &worker.last_action,
            last_reward: worker.last_reward,
        };
        policy.inputs(&ctx)
    };
    Ok(Trajectory {
        steps: out,
        bootstrap: Bootstrap {
            stats: stats_in,
            hidden: hidden_in,
            prev_action: (
                worker.last_action.real,
                worker.last_action.imaginary,
                worker.last_action.reset,
            ),
            prev_reward: (worker.last_reward.raw, worker.last_reward.planning),
        },
        planning_steps,
    })
}

/// Write the run checkpoint: meta dims, gamma, model parameter sections and
/// the agent parameters.
#[allow(clippy::too_many_arguments)]
pub(crate) fn save_checkpoint(
    path: &std::path::Path,
    cfg: &RunConfig,
    action_count: usize,
    obs_dim: usize,
    model: Option<&DualNetModel>,
    ac_spec: &AcSpec,
    ac_params: &[f64],
    agent_input: AgentInput,
) -> Result<()> {
    use ckpt_layout::*;
    let mut dims = vec![0u32; DIM_COUNT];
    dims[ENV_KIND] = cfg.env.code();
    dims[ACTION_COUNT] = action_count as u32;
    dims[OBS_DIM] = obs_dim as u32;
    dims[K_TRAIN] = cfg.planning_steps as u32;
    dims[MAX_DEPTH] = cfg.max_depth as u32;
    dims[MODEL_KIND] = match cfg.model {
        ModelKind::Oracle => 0,
        ModelKind::Learned => 1,
    };
    dims[MODEL_HIDDEN] = cfg.model_hidden_dim as u32;
    dims[AGENT_PRESENT] = 1;
    dims[AGENT_STATS_DIM] = ac_spec.stats_dim as u32;
    dims[AGENT_HIDDEN_DIM] = ac_spec.hidden_dim as u32;
    dims[AGENT_TRUNK] = ac_spec.trunk_width as u32;
    dims[AGENT_INPUT] = match agent_input {
        AgentInput::TreeStats { use_hidden: true } => INPUT_TREE_HIDDEN,
        AgentInput::TreeStats { use_hidden: false } => INPUT_TREE_ONLY,
        AgentInput::RawObservation => INPUT_RAW,
    };
    let (stat, non) = match model {
        Some(m) => (
            m.params().stationary.clone(),
            m.params().nonstationary.clone(),
        ),
        None => (Vec::new(), Vec::new()),
    };
    write_checkpoint(
        path,
        &Checkpoint {
            dims,
            sections: vec![vec![cfg.gamma], stat, non, ac_params.to_vec()],
        },
    )
}

/// Evaluation the trainer runs on its own artefacts; re-exported so tests
/// can evaluate mid-training checkpoints.
pub fn eval_outcome(cfg: &RunConfig, outcome: &TrainOutcome, k_eval: usize) -> Result<EvalReport> {
    evalrun::run_eval(cfg, &outcome.checkpoint, k_eval)
}

/// Helper shared with the improvement experiment: run a full training loop
/// from a plain config and return both the outcome and the eval spec used.
pub fn train_and_eval(cfg: &RunConfig) -> Result<(TrainOutcome, Arc<crate::env::EnvSpec>)> {
    let outcome = run_training(cfg)?;
    let (eval_spec, _) = eval_env_spec(cfg.env);
    Ok((outcome, eval_spec))
}

/// Deterministic seed for helper RNG streams derived from a run seed.
pub fn derived_seed(cfg: &RunConfig, tag: u64) -> u64 {
    episode_seed(cfg.seed, tag, 0xAB)
}
