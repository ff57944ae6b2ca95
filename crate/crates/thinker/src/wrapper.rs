//! The model-augmented environment: planning-stage sequencing, imaginary
//! and real step dispatch, planning rewards, the augmented discount, and
//! the fixed-size tree-statistics state vector.
//!
//! A planning stage is a block of `K` augmented steps anchored at one raw
//! state: `K - 1` imaginary transitions that grow the search tree through
//! the model, then one real transition that advances the raw environment
//! and re-anchors the tree. The first step after a reset is a real step
//! (the step counter starts at `K`), so the first stage is the bootstrap
//! real transition.

use crate::env::{Env, RawState};
use crate::error::{Error, Result};
use crate::model::{HiddenState, ModelRef, ModelSlot, ReplayEntry, SharedReplay};
use crate::trace::{RankInputs, StepKind, TraceActions, TraceRecord, TraceRewardPair};
use crate::tree::Tree;

/// One augmented action: sub-actions for all three channels. Only the
/// channels relevant to the current step kind are used; the rest are
/// ignored, matching the stage semantics.
#[derive(Debug, Clone)]
pub struct AugmentedAction {
    pub real: usize,
    pub imaginary: usize,
    pub reset: bool,
    /// The acting policy's distribution over real actions, logged with the
    /// transition for model training.
    pub real_action_dist: Vec<f64>,
}

impl AugmentedAction {
    /// A neutral "previous action" placeholder for the start of a run.
    pub fn initial(action_count: usize) -> Self {
        AugmentedAction {
            real: 0,
            imaginary: 0,
            reset: false,
            real_action_dist: vec![1.0 / action_count as f64; action_count],
        }
    }
}

/// Raw and planning rewards are kept separate: planning rewards are paid
/// only on imaginary transitions and never mix into the raw return.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardPair {
    pub raw: f64,
    pub planning: f64,
}

/// The fixed-size augmented observation: tree statistics plus the current
/// node's hidden state (also pre-flattened for network input).
#[derive(Debug, Clone)]
pub struct AugmentedState {
    pub tree_stats: Vec<f64>,
    pub hidden: HiddenState,
    pub hidden_view: Vec<f64>,
}

/// Planning-reward strength over training.
#[derive(Debug, Clone, Copy)]
pub enum CpSchedule {
    Constant(f64),
    /// Linear interpolation from `from` to `to` across `horizon` real frames.
    Linear { from: f64, to: f64, horizon: u64 },
}

impl CpSchedule {
    pub fn value(&self, frames: u64) -> f64 {
        match *self {
            CpSchedule::Constant(c) => c,
            CpSchedule::Linear { from, to, horizon } => {
                if horizon == 0 {
                    to
                } else {
                    let t = (frames as f64 / horizon as f64).min(1.0);
                    from + (to - from) * t
                }
            }
        }
    }
}

/// Augmented-environment parameters.
#[derive(Debug, Clone)]
pub struct WrapperConfig {
    /// Planning steps per stage (K >= 1).
    pub planning_steps: usize,
    /// Maximum search depth / model unroll length (L >= 1).
    pub max_depth: usize,
    /// Raw-MDP discount, used for rollout returns inside the tree.
    pub gamma: f64,
    pub cp: CpSchedule,
    /// Step-slot count in the state vector; defaults to `planning_steps`.
    /// Evaluation with a smaller K keeps the training-time layout.
    pub rep_planning_steps: Option<usize>,
    /// Emit per-step analytics fields in traces.
    pub analytics: bool,
}

impl WrapperConfig {
    pub fn new(planning_steps: usize, max_depth: usize, gamma: f64) -> Self {
        WrapperConfig {
            planning_steps,
            max_depth,
            gamma,
            cp: CpSchedule::Constant(0.0),
            rep_planning_steps: None,
            analytics: false,
        }
    }

    pub fn rep_steps(&self) -> usize {
        self.rep_planning_steps.unwrap_or(self.planning_steps)
    }
}

/// Discount for the augmented MDP: the raw discount spread over the K
/// augmented steps that make up one real step.
pub fn augmented_discount(gamma: f64, planning_steps: usize) -> f64 {
    gamma.powf(1.0 / planning_steps as f64)
}

/// Planning reward: the clamped increase of the root's maximum rollout
/// return, scaled by the current reward strength.
pub fn planning_reward(prev_gmax: f64, new_gmax: f64, cp: f64) -> f64 {
    cp * (new_gmax - prev_gmax).max(0.0)
}

/// Length of the tree-statistics vector.
pub fn state_rep_len(action_count: usize, planning_steps: usize) -> usize {
    10 * action_count + planning_steps + 9
}

/// The augmented environment. One instance per raw environment;
/// single-threaded mutation.
pub struct ThinkerEnv {
    env: Env,
    slot: ModelSlot,
    model: ModelRef,
    tree: Tree,
    cfg: WrapperConfig,
    /// Step number the next `astep` call will execute (1..=K). Starts at K
    /// so the first step is a real step.
    k_next: usize,
    stage: u64,
    frames: u64,
    cp_now: f64,
    raw_done: bool,
    needs_reset: bool,
    prev_real_action: usize,
    last_reset_fired: bool,
    replay: Option<SharedReplay>,
    episode_entries: Vec<ReplayEntry>,
    trace: Vec<TraceRecord>,
    trace_enabled: bool,
}

impl ThinkerEnv {
    pub fn new(env: Env, slot: ModelSlot, cfg: WrapperConfig) -> Result<Self> {
        if cfg.planning_steps < 1 {
            return Err(Error::BadConfig("planning steps must be >= 1".into()));
        }
        if cfg.max_depth < 1 {
            return Err(Error::BadConfig("max depth must be >= 1".into()));
        }
        if !(0.0 < cfg.gamma && cfg.gamma <= 1.0) {
            return Err(Error::BadConfig("gamma must lie in (0, 1]".into()));
        }
        if cfg.planning_steps > cfg.rep_steps() {
            return Err(Error::BadConfig(
                "planning steps exceed the state-vector step slots".into(),
            ));
        }
        let model = slot.snapshot();
        if model.action_count() != env.spec().action_count() {
            return Err(Error::DimensionMismatch {
                what: "model action count",
                expected: env.spec().action_count(),
                got: model.action_count(),
            });
        }
        let cp_now = cfg.cp.value(0);
        let placeholder_state = env.state().clone();
        let hidden = model.encode(&placeholder_state, 0)?;
        let stats = model.predict(&hidden);
        let tree = Tree::new(
            (hidden, stats),
            cfg.gamma,
            env.spec().action_count(),
            cfg.max_depth,
        );
        let k_init = cfg.planning_steps;
        Ok(ThinkerEnv {
            env,
            slot,
            model,
            tree,
            cfg,
            k_next: k_init,
            stage: 0,
            frames: 0,
            cp_now,
            raw_done: false,
            needs_reset: true,
            prev_real_action: 0,
            last_reset_fired: false,
            replay: None,
            episode_entries: Vec::new(),
            trace: Vec::new(),
            trace_enabled: false,
        })
    }

    pub fn with_replay(mut self, replay: SharedReplay) -> Self {
        self.replay = Some(replay);
        self
    }

    pub fn with_tracing(mut self) -> Self {
        self.trace_enabled = true;
        self
    }

    pub fn config(&self) -> &WrapperConfig {
        &self.cfg
    }

    pub fn env(&self) -> &Env {
        &self.env
    }

    pub fn tree(&self) -> &Tree {
        &self.tree
    }

    pub fn model(&self) -> &ModelRef {
        &self.model
    }

    /// The step number (1..=K) the next `astep` call will execute.
    pub fn upcoming_step(&self) -> usize {
        self.k_next
    }

    pub fn stage(&self) -> u64 {
        self.stage
    }

    pub fn frames(&self) -> u64 {
        self.frames
    }

    pub fn raw_done(&self) -> bool {
        self.raw_done
    }

    pub fn current_cp(&self) -> f64 {
        self.cp_now
    }

    pub fn drain_trace(&mut self) -> Vec<TraceRecord> {
        std::mem::take(&mut self.trace)
    }

    /// Start an episode: reset the raw environment, take a model snapshot,
    /// encode the root and build a single-node tree. The first `astep`
    /// afterwards is a real step.
    pub fn reset(&mut self, seed: u64) -> Result<AugmentedState> {
        let state = self.env.reset(seed);
        self.model = self.slot.snapshot();
        self.prev_real_action = 0;
        let hidden = self.model.encode(&state, self.prev_real_action)?;
        let stats = self.model.predict(&hidden);
        self.tree = Tree::new(
            (hidden, stats),
            self.cfg.gamma,
            self.env.spec().action_count(),
            self.cfg.max_depth,
        );
        self.k_next = self.cfg.planning_steps;
        self.raw_done = false;
        self.needs_reset = false;
        self.last_reset_fired = false;
        self.cp_now = self.cfg.cp.value(self.frames);
        self.episode_entries.clear();
        Ok(self.build_state_rep())
    }

    /// One augmented step. Imaginary steps (k < K) expand the tree through
    /// the model and pay the planning reward; the real step (k = K) passes
    /// the real action to the raw environment, logs the transition for
    /// model training, and re-anchors the tree.
    pub fn astep(&mut self, action: &AugmentedAction) -> Result<(RewardPair, AugmentedState, bool)> {
        if self.needs_reset || self.raw_done {
            return Err(Error::EpisodeOver);
        }
        let action_count = self.env.spec().action_count();
        if action.real_action_dist.len() != action_count {
            return Err(Error::DimensionMismatch {
                what: "real action distribution",
                expected: action_count,
                got: action.real_action_dist.len(),
            });
        }
        let k = self.k_next;
        let big_k = self.cfg.planning_steps;
        let (reward, done, kind, analytics_imaginary, rank_inputs);
        if k < big_k {
            // Imaginary transition.
            if action.imaginary >= action_count {
                return Err(Error::ActionOutOfRange {
                    action: action.imaginary,
                    action_count,
                });
            }
            let parent = self.tree.cur();
            let expanded_new = self.tree.node(parent).child(action.imaginary).is_none();
            let contents = if self.tree.cur_is_absorbing()
                || self.tree.child_is_fresh(parent, action.imaginary)
            {
                None
            } else {
                let hidden = self
                    .model
                    .unroll(&self.tree.node(parent).hidden, action.imaginary)?;
                let stats = self.model.predict(&hidden);
                Some((hidden, stats))
            };
            self.tree.expand(action.imaginary, contents)?;
            let plan_reward = planning_reward(
                self.tree.last_max_root_return,
                self.tree.max_root_return(),
                self.cp_now,
            );
            reward = RewardPair {
                raw: 0.0,
                planning: plan_reward,
            };
            done = false;
            kind = StepKind::Imaginary;
            analytics_imaginary = if self.cfg.analytics {
                let path = self.tree.path_from_root(self.tree.cur());
                let g_root_cur = self.tree.rollout_return(&path)?;
                let v_root = self.tree.node(self.tree.root()).stats.value;
                Some((g_root_cur - v_root, expanded_new, v_root))
            } else {
                None
            };
            rank_inputs = None;
            let reset_fired = action.reset || self.tree.depth() >= self.cfg.max_depth;
            if reset_fired {
                self.tree.reset_cur();
            }
            self.last_reset_fired = reset_fired;
            self.k_next = k + 1;
        } else {
            // Real transition.
            if action.real >= action_count {
                return Err(Error::ActionOutOfRange {
                    action: action.real,
                    action_count,
                });
            }
            rank_inputs = if self.cfg.analytics {
                let stats = self.tree.return_stats(self.tree.root());
                Some(RankInputs {
                    child_visits: stats.child_visits,
                    child_mean: stats.child_mean,
                    child_max: stats.child_max,
                    chosen: action.real,
                })
            } else {
                None
            };
            let transition = self.env.step(action.real)?;
            self.raw_done = transition.done;
            self.episode_entries.push(ReplayEntry {
                action: action.real,
                action_dist: action.real_action_dist.clone(),
                mean_root_return: self.tree.mean_root_return(),
                reward: transition.reward,
                next_state: transition.next_state.observation.clone(),
                done: transition.done,
                priority: 0.0,
            });
            if transition.done {
                if let Some(replay) = &self.replay {
                    replay.push_episode(std::mem::take(&mut self.episode_entries));
                }
            }
            // Stage boundary: pick up the latest published model.
            self.model = self.slot.snapshot();
            let hidden = self.model.encode(&transition.next_state, action.real)?;
            let stats = self.model.predict(&hidden);
            self.tree.retain(action.real, (hidden, stats), transition.done);
            self.prev_real_action = action.real;
            self.k_next = 1;
            self.stage += 1;
            self.frames += 1;
            self.cp_now = self.cfg.cp.value(self.frames);
            self.last_reset_fired = false;
            reward = RewardPair {
                raw: transition.reward,
                planning: 0.0,
            };
            done = transition.done;
            kind = StepKind::Real;
            analytics_imaginary = None;
        }
        self.tree.record_last_max();
        let state = self.build_state_rep();
        if self.trace_enabled {
            let (delta, expanded_new, v_root) = match analytics_imaginary {
                Some((d, e, v)) => (Some(d), Some(e), Some(v)),
                None => (None, None, None),
            };
            self.trace.push(TraceRecord {
                stage: if kind == StepKind::Real {
                    self.stage - 1
                } else {
                    self.stage
                },
                k: k as u32,
                kind,
                actions: TraceActions {
                    real: action.real,
                    imaginary: action.imaginary,
                    reset: action.reset,
                },
                reward_pair: TraceRewardPair {
                    raw: reward.raw,
                    planning: reward.planning,
                },
                g_max_root: self.tree.max_root_return(),
                depth: self.tree.depth() as u32,
                done,
                delta,
                expanded_new,
                reset_fired: if self.cfg.analytics && kind == StepKind::Imaginary {
                    Some(self.last_reset_fired)
                } else {
                    None
                },
                v_root,
                rank_inputs,
            });
        }
        Ok((reward, state, done))
    }

    /// The fixed-size tree-statistics vector plus the current hidden state.
    pub fn build_state_rep(&self) -> AugmentedState {
        let a = self.env.spec().action_count();
        let k_rep = self.cfg.rep_steps();
        let tree = &self.tree;
        let root = tree.root();
        let cur = tree.cur();
        let gamma = self.cfg.gamma;
        let mut v = Vec::with_capacity(state_rep_len(a, k_rep));

        let root_node = tree.node(root);
        let root_stats = tree.return_stats(root);
        let a_root = root_node.incoming_action.unwrap_or(self.prev_real_action);
        v.push(root_node.stats.reward);
        v.push(root_node.stats.value);
        v.extend_from_slice(&root_node.stats.policy);
        v.extend(one_hot(a, a_root));
        v.extend_from_slice(&root_stats.child_max);
        v.extend_from_slice(&root_stats.child_mean);
        v.extend(root_stats.child_visits.iter().map(|n| n / k_rep as f64));

        let cur_node = tree.node(cur);
        let cur_stats = tree.return_stats(cur);
        let a_cur = cur_node.incoming_action.unwrap_or(a_root);
        v.push(cur_node.stats.reward);
        v.push(cur_node.stats.value);
        v.extend_from_slice(&cur_node.stats.policy);
        v.extend(one_hot(a, a_cur));
        v.extend_from_slice(&cur_stats.child_max);
        v.extend_from_slice(&cur_stats.child_mean);
        v.extend(cur_stats.child_visits.iter().map(|n| n / k_rep as f64));

        let path = tree.path_from_root(cur);
        let g_root_cur = tree.rollout_return(&path).expect("live path");
        let trailing = gamma.powi(tree.depth() as i32 + 1);
        v.push(g_root_cur);
        v.push(g_root_cur - trailing * cur_node.stats.value);
        v.push(tree.max_root_return());
        v.push(trailing);
        let mut step_slots = vec![0.0; k_rep];
        step_slots[self.k_next - 1] = 1.0;
        v.extend(step_slots);
        v.push(if self.last_reset_fired { 1.0 } else { 0.0 });

        debug_assert_eq!(v.len(), state_rep_len(a, k_rep));
        let hidden = cur_node.hidden.clone();
        let hidden_view = self.model.agent_view(&hidden);
        AugmentedState {
            tree_stats: v,
            hidden,
            hidden_view,
        }
    }

    /// The raw state under the wrapper (for equivalence checks and eval).
    pub fn raw_state(&self) -> &RawState {
        self.env.state()
    }
}

fn one_hot(n: usize, idx: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[idx] = 1.0;
    v
}

#[cfg(test)]
mod tests;
