//! Training and evaluation loops, experiment configurations, trace
//! analytics, the policy-improvement experiment, and tree rendering —
//! everything behind the `thinker` command-line binary.

pub mod analyze;
pub mod config;
pub mod evalrun;
pub mod improve;
pub mod render;
pub mod train;

pub use analyze::{analyze_records, analyze_trace_file, StageAggregates};
pub use config::{AgentKind, Annealed, EnvKind, ModelKind, RunConfig};
pub use evalrun::{distilled_policy_eval, eval_on_set, run_eval, EvalReport};
pub use improve::{policy_improvement_experiment, ImproveReport};
pub use render::render_tree_ascii;
pub use train::{run_training, TrainOutcome};

use crate::agents::{AugmentedPolicy, StepContext};
use crate::env::{Env, EnvSpec, GeneratorConfig, MiniBoxSpec, PoolCertificate};
use crate::error::Result;
use crate::model::{
    DualNetModel, DualNetSpec, ModelRef, ModelSlot, OracleModel, UniformZeroEvaluator,
};
use crate::trace::TraceRecord;
use crate::wrapper::{AugmentedAction, AugmentedState, RewardPair, ThinkerEnv, WrapperConfig};
use rand_chacha::ChaCha8Rng;
use std::collections::VecDeque;
use std::sync::Arc;

/// Episode cap shared by the built-in runs.
pub const MINIBOX_MAX_STEPS: u16 = 120;

/// The environment used for training: the chain, or a procedural stream of
/// solvable boards matching the evaluation pool's generator.
pub fn training_env_spec(kind: EnvKind) -> Arc<EnvSpec> {
    match kind {
        EnvKind::Chain => Arc::new(EnvSpec::Chain(crate::env::ChainSpec::default_eight())),
        EnvKind::MiniBox => Arc::new(EnvSpec::MiniBox(MiniBoxSpec::procedural(
            GeneratorConfig::default(),
            MINIBOX_MAX_STEPS,
        ))),
    }
}

/// The fixed evaluation set (with its solvability certificates).
pub fn eval_env_spec(kind: EnvKind) -> (Arc<EnvSpec>, Option<PoolCertificate>) {
    match kind {
        EnvKind::Chain => (
            Arc::new(EnvSpec::Chain(crate::env::ChainSpec::default_eight())),
            None,
        ),
        EnvKind::MiniBox => {
            let (spec, cert) = MiniBoxSpec::builtin(MINIBOX_MAX_STEPS);
            (Arc::new(EnvSpec::MiniBox(spec)), Some(cert))
        }
    }
}

/// Number of distinct evaluation episodes for a spec.
pub fn eval_set_size(kind: EnvKind) -> usize {
    match kind {
        EnvKind::Chain => 1,
        EnvKind::MiniBox => 50,
    }
}

/// Fresh oracle model with the neutral evaluator.
pub fn neutral_oracle(spec: &Arc<EnvSpec>) -> ModelRef {
    Arc::new(OracleModel::new(
        spec.clone(),
        Arc::new(UniformZeroEvaluator {
            action_count: spec.action_count(),
        }),
    ))
}

/// Learned-model dimensions for an environment.
pub fn dual_net_spec(spec: &EnvSpec, hidden_dim: usize) -> DualNetSpec {
    DualNetSpec::new(spec.observation_dim(), spec.action_count(), hidden_dim)
}

pub fn dual_model_ref(model: DualNetModel) -> ModelRef {
    Arc::new(model)
}

/// Deterministic per-(worker, episode) reset seeds.
pub fn episode_seed(run_seed: u64, worker: u64, episode: u64) -> u64 {
    run_seed
        .wrapping_mul(0x9E3779B97F4A7C15)
        .wrapping_add(worker.wrapping_mul(0xBF58476D1CE4E5B9))
        .wrapping_add(episode.wrapping_mul(0x94D049BB133111EB))
}

/// Rolling episode statistics over the last 200 episodes.
#[derive(Debug, Default)]
pub struct EpisodeStats {
    window: VecDeque<(f64, bool)>,
    pub episodes: u64,
}

impl EpisodeStats {
    pub fn push(&mut self, episode_return: f64, solved: bool) {
        self.window.push_back((episode_return, solved));
        if self.window.len() > 200 {
            self.window.pop_front();
        }
        self.episodes += 1;
    }

    pub fn mean_return(&self) -> f64 {
        if self.window.is_empty() {
            return 0.0;
        }
        self.window.iter().map(|(r, _)| r).sum::<f64>() / self.window.len() as f64
    }

    pub fn solve_rate(&self) -> f64 {
        if self.window.is_empty() {
            return 0.0;
        }
        self.window.iter().filter(|(_, s)| *s).count() as f64 / self.window.len() as f64
    }
}

/// One acting stream: the wrapper plus the running last-action context that
/// agents condition on.
pub struct Worker {
    pub wrapper: ThinkerEnv,
    pub state: AugmentedState,
    pub last_action: AugmentedAction,
    pub last_reward: RewardPair,
    pub worker_id: u64,
    pub episode: u64,
    pub episode_return: f64,
    run_seed: u64,
}

impl Worker {
    pub fn new(mut wrapper: ThinkerEnv, run_seed: u64, worker_id: u64) -> Result<Self> {
        let action_count = wrapper.env().spec().action_count();
        let state = wrapper.reset(episode_seed(run_seed, worker_id, 0))?;
        Ok(Worker {
            wrapper,
            state,
            last_action: AugmentedAction::initial(action_count),
            last_reward: RewardPair {
                raw: 0.0,
                planning: 0.0,
            },
            worker_id,
            episode: 0,
            episode_return: 0.0,
            run_seed,
        })
    }

    /// Step once with `policy`; on episode end, report to `on_episode` and
    /// start the next episode. Returns the action taken, the reward
    /// received, and the done flag of this step.
    pub fn step_with(
        &mut self,
        policy: &mut dyn AugmentedPolicy,
        rng: &mut ChaCha8Rng,
        mut on_episode: impl FnMut(f64, bool),
    ) -> Result<(AugmentedAction, RewardPair, bool)> {
        let ctx = StepContext {
            wrapper: &self.wrapper,
            state: &self.state,
            last_action: &self.last_action,
            last_reward: self.last_reward,
        };
        let action = policy.act(&ctx, rng);
        let (reward, state, done) = self.wrapper.astep(&action)?;
        self.episode_return += reward.raw;
        self.state = state;
        self.last_action = action.clone();
        self.last_reward = reward;
        if done {
            let solved = self
                .wrapper
                .env()
                .spec()
                .is_solved(&self.wrapper.raw_state().internal);
            on_episode(self.episode_return, solved);
            self.episode += 1;
            self.episode_return = 0.0;
            self.state = self
                .wrapper
                .reset(episode_seed(self.run_seed, self.worker_id, self.episode))?;
            self.last_action =
                AugmentedAction::initial(self.wrapper.env().spec().action_count());
            self.last_reward = RewardPair {
                raw: 0.0,
                planning: 0.0,
            };
            policy.begin_episode();
        }
        Ok((action, reward, done))
    }
}

/// Run a policy for a number of raw frames with tracing enabled, returning
/// the records.
pub fn trace_run(
    env_spec: Arc<EnvSpec>,
    model: ModelRef,
    wrapper_cfg: WrapperConfig,
    policy: &mut dyn AugmentedPolicy,
    frames: u64,
    run_seed: u64,
) -> Result<Vec<TraceRecord>> {
    let mut cfg = wrapper_cfg;
    cfg.analytics = true;
    let wrapper = ThinkerEnv::new(Env::new(env_spec), ModelSlot::new(model), cfg)?.with_tracing();
    let mut worker = Worker::new(wrapper, run_seed, 0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(run_seed ^ 0xDD);
    let mut records = Vec::new();
    while worker.wrapper.frames() < frames {
        worker.step_with(policy, &mut rng, |_, _| {})?;
        records.append(&mut worker.wrapper.drain_trace());
    }
    Ok(records)
}

use rand::SeedableRng;
