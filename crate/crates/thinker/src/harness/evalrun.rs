use super::config::{EnvKind, ModelKind, RunConfig};
use super::train::ckpt_layout::*;
use super::{eval_env_spec, eval_set_size, neutral_oracle};
use crate::agents::{
    AcSpec, ActorCriticPolicy, AgentInput, AugmentedPolicy, StepContext,
};
use crate::checkpoint::read_checkpoint;
use crate::env::{Env, EnvSpec};
use crate::error::{Error, Result};
use crate::model::{DualNetModel, DualNetSpec, ModelRef, ModelSlot, WorldModel};
use crate::wrapper::{AugmentedAction, CpSchedule, RewardPair, ThinkerEnv, WrapperConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;
use std::sync::Arc;

/// Greedy evaluation results over the fixed set, together with the
/// distilled policy — the model's own predicted policy acting without any
/// planning.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub episodes: usize,
    pub mean_return: f64,
    pub solve_rate: f64,
    pub distilled_mean_return: f64,
    pub distilled_solve_rate: f64,
}

/// Everything reconstructed from a checkpoint file.
pub struct LoadedRun {
    pub env: EnvKind,
    pub gamma: f64,
    pub k_train: usize,
    pub max_depth: usize,
    pub model_kind: ModelKind,
    pub model: ModelRef,
    pub learned_model: Option<DualNetModel>,
    pub ac_spec: AcSpec,
    pub ac_params: Arc<Vec<f64>>,
    pub agent_input: AgentInput,
}

pub fn load_run(path: &Path) -> Result<LoadedRun> {
    let ckpt = read_checkpoint(path)?;
    if ckpt.dims.len() < DIM_COUNT || ckpt.sections.len() < 4 {
        return Err(Error::BadCheckpoint("missing dims or sections".into()));
    }
    let env = EnvKind::from_code(ckpt.dims[ENV_KIND])?;
    let gamma = ckpt.sections[0]
        .first()
        .copied()
        .ok_or_else(|| Error::BadCheckpoint("missing gamma".into()))?;
    let (eval_spec, _) = eval_env_spec(env);
    let model_kind = if ckpt.dims[MODEL_KIND] == 1 {
        ModelKind::Learned
    } else {
        ModelKind::Oracle
    };
    let mut learned_model = None;
    let model: ModelRef = match model_kind {
        ModelKind::Oracle => neutral_oracle(&eval_spec),
        ModelKind::Learned => {
            let spec = DualNetSpec::new(
                ckpt.dims[OBS_DIM] as usize,
                ckpt.dims[ACTION_COUNT] as usize,
                ckpt.dims[MODEL_HIDDEN] as usize,
            );
            let model = DualNetModel::from_params(
                spec,
                crate::model::DualNetParams {
                    stationary: ckpt.sections[1].clone(),
                    nonstationary: ckpt.sections[2].clone(),
                },
            );
            learned_model = Some(model.clone());
            Arc::new(model)
        }
    };
    let agent_input = match ckpt.dims[AGENT_INPUT] {
        INPUT_TREE_HIDDEN => AgentInput::TreeStats { use_hidden: true },
        INPUT_TREE_ONLY => AgentInput::TreeStats { use_hidden: false },
        INPUT_RAW => AgentInput::RawObservation,
        other => {
            return Err(Error::BadCheckpoint(format!(
                "unknown agent input mode {other}"
            )))
        }
    };
    let ac_spec = AcSpec {
        stats_dim: ckpt.dims[AGENT_STATS_DIM] as usize,
        hidden_dim: ckpt.dims[AGENT_HIDDEN_DIM] as usize,
        action_count: ckpt.dims[ACTION_COUNT] as usize,
        trunk_width: ckpt.dims[AGENT_TRUNK] as usize,
    };
    if ckpt.sections[3].len() != ac_spec.param_count() {
        return Err(Error::BadCheckpoint(format!(
            "agent section holds {} parameters, spec needs {}",
            ckpt.sections[3].len(),
            ac_spec.param_count()
        )));
    }
    Ok(LoadedRun {
        env,
        gamma,
        k_train: ckpt.dims[K_TRAIN] as usize,
        max_depth: ckpt.dims[MAX_DEPTH] as usize,
        model_kind,
        model,
        learned_model,
        ac_spec,
        ac_params: Arc::new(ckpt.sections[3].clone()),
        agent_input,
    })
}

/// Run a policy greedily over the fixed evaluation set: one episode per
/// level, reset seeds 0..n. Bit-stable across runs for a fixed checkpoint.
pub fn eval_on_set(
    env_spec: &Arc<EnvSpec>,
    model: ModelRef,
    policy: &mut dyn AugmentedPolicy,
    wrapper_cfg: WrapperConfig,
    episodes: usize,
) -> Result<(f64, f64)> {
    let mut wrapper = ThinkerEnv::new(Env::new(env_spec.clone()), ModelSlot::new(model), wrapper_cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0xE7A1u64);
    let mut total_return = 0.0;
    let mut solved_count = 0usize;
    let action_count = env_spec.action_count();
    for level in 0..episodes {
        let mut state = wrapper.reset(level as u64)?;
        policy.begin_episode();
        let mut last_action = AugmentedAction::initial(action_count);
        let mut last_reward = RewardPair {
            raw: 0.0,
            planning: 0.0,
        };
        let mut episode_return = 0.0;
        loop {
            let ctx = StepContext {
                wrapper: &wrapper,
                state: &state,
                last_action: &last_action,
                last_reward,
            };
            let action = policy.act(&ctx, &mut rng);
            let (reward, next, done) = wrapper.astep(&action)?;
            episode_return += reward.raw;
            state = next;
            last_action = action;
            last_reward = reward;
            if done {
                if env_spec.is_solved(&wrapper.raw_state().internal) {
                    solved_count += 1;
                }
                break;
            }
        }
        total_return += episode_return;
    }
    Ok((
        total_return / episodes as f64,
        solved_count as f64 / episodes as f64,
    ))
}

/// Act with the model's own predicted policy at the root, with no planning
/// at all: encode, read the policy head, take its argmax.
pub fn distilled_policy_eval(
    env_spec: &Arc<EnvSpec>,
    model: &ModelRef,
    episodes: usize,
) -> Result<(f64, f64)> {
    let mut env = Env::new(env_spec.clone());
    let mut total_return = 0.0;
    let mut solved_count = 0usize;
    for level in 0..episodes {
        let mut state = env.reset(level as u64);
        let mut prev_action = 0usize;
        let mut episode_return = 0.0;
        loop {
            let hidden = model.encode(&state, prev_action)?;
            let stats = model.predict(&hidden);
            let action = crate::agents::argmax(&stats.policy);
            let t = env.step(action)?;
            episode_return += t.reward;
            state = t.next_state;
            prev_action = action;
            if t.done {
                if env_spec.is_solved(&state.internal) {
                    solved_count += 1;
                }
                break;
            }
        }
        total_return += episode_return;
    }
    Ok((
        total_return / episodes as f64,
        solved_count as f64 / episodes as f64,
    ))
}

/// Greedy-mode evaluation of a checkpoint at an arbitrary planning-step
/// count (no larger than the training-time K, whose layout the agent's
/// input expects).
pub fn run_eval(cfg: &RunConfig, checkpoint: &Path, k_eval: usize) -> Result<EvalReport> {
    let run = load_run(checkpoint)?;
    if k_eval > run.k_train && !matches!(run.agent_input, AgentInput::RawObservation) {
        return Err(Error::BadConfig(format!(
            "K_eval {k_eval} exceeds the training-time step slots {}",
            run.k_train
        )));
    }
    let (eval_spec, _) = eval_env_spec(run.env);
    let episodes = eval_set_size(run.env).max(cfg.eval_episodes.min(50));
    let mut wrapper_cfg = WrapperConfig::new(k_eval, run.max_depth, run.gamma);
    wrapper_cfg.cp = CpSchedule::Constant(0.0);
    wrapper_cfg.rep_planning_steps = Some(run.k_train);
    let mut policy = ActorCriticPolicy {
        spec: run.ac_spec.clone(),
        params: run.ac_params.clone(),
        input: run.agent_input,
        greedy: true,
    };
    let (mean_return, solve_rate) = eval_on_set(
        &eval_spec,
        run.model.clone(),
        &mut policy,
        wrapper_cfg,
        episodes,
    )?;
    let (distilled_mean_return, distilled_solve_rate) =
        distilled_policy_eval(&eval_spec, &run.model, episodes)?;
    Ok(EvalReport {
        episodes,
        mean_return,
        solve_rate,
        distilled_mean_return,
        distilled_solve_rate,
    })
}
