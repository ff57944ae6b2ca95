//! The world-model abstraction: encode a raw state into a hidden state,
//! unroll it with actions, and predict per-node output statistics. Two
//! implementations are provided — an exact oracle backed by the pure
//! environment dynamics, and a learned dual network at MLP scale — plus
//! the prioritized replay buffer and the model training step.

mod dual;
mod oracle;
mod replay;
mod targets;
mod trainer;

pub use dual::{DualNetModel, DualNetSpec, NonStationaryEvaluator};
pub use oracle::{Evaluator, OracleModel, TableEvaluator, UniformZeroEvaluator};
pub use replay::{ReplayBuffer, ReplayEntry, SampledSequence, SharedReplay};
pub use targets::compute_value_targets;
pub use trainer::{
    sequence_loss_grads, sequence_loss_values, DualNetTrainer, LossReport, LossScales,
};

use crate::env::{RawState, StateEncoding};
use crate::error::Result;
use serde::{Deserialize, Serialize};
use std::sync::{Arc, RwLock};

/// Model head outputs attached to every tree node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputStats {
    pub reward: f64,
    pub done_prob: f64,
    pub value: f64,
    pub policy: Vec<f64>,
}

impl OutputStats {
    pub fn validate(&self, action_count: usize) -> bool {
        self.reward.is_finite()
            && self.value.is_finite()
            && (0.0..=1.0).contains(&self.done_prob)
            && self.policy.len() == action_count
            && self.policy.iter().all(|p| *p >= 0.0)
            && (self.policy.iter().sum::<f64>() - 1.0).abs() <= 1e-9
    }
}

/// Hidden state carried along a model rollout.
///
/// The oracle embeds the compact state encoding directly; the learned model
/// carries the two sub-network activations. `predicted_observation` is
/// absent for freshly encoded roots.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum HiddenState {
    Oracle {
        encoding: StateEncoding,
        /// Reward of the transition that produced this state (0 at roots).
        last_reward: f64,
        /// Whether that transition terminated the episode.
        last_done: bool,
        predicted_observation: Option<Vec<f64>>,
    },
    Learned {
        stationary: Vec<f64>,
        nonstationary: Vec<f64>,
        predicted_observation: Option<Vec<f64>>,
    },
}

impl HiddenState {
    pub fn predicted_observation(&self) -> Option<&[f64]> {
        match self {
            HiddenState::Oracle {
                predicted_observation,
                ..
            }
            | HiddenState::Learned {
                predicted_observation,
                ..
            } => predicted_observation.as_deref(),
        }
    }
}

/// Encode / unroll / predict. Implementations are deterministic pure
/// functions of their parameters, so snapshots can be shared across threads.
pub trait WorldModel: Send + Sync {
    /// Encode a raw state, conditioned on the action that led into it.
    fn encode(&self, state: &RawState, prev_action: usize) -> Result<HiddenState>;

    /// Advance the hidden state by one imaginary action.
    fn unroll(&self, hidden: &HiddenState, action: usize) -> Result<HiddenState>;

    /// Output statistics for a hidden state.
    fn predict(&self, hidden: &HiddenState) -> OutputStats;

    fn action_count(&self) -> usize;

    fn observation_dim(&self) -> usize;

    /// The flat vector handed to agents as the hidden-state branch of the
    /// augmented state.
    fn agent_view(&self, hidden: &HiddenState) -> Vec<f64>;

    /// Dimension of [`WorldModel::agent_view`].
    fn agent_view_dim(&self) -> usize;
}

pub type ModelRef = Arc<dyn WorldModel>;

/// Publish/snapshot slot for model parameters: environment workers read a
/// consistent snapshot at stage boundaries, the trainer publishes new
/// versions between them. Readers may be one version stale, never torn.
#[derive(Clone)]
pub struct ModelSlot {
    inner: Arc<RwLock<ModelRef>>,
}

impl ModelSlot {
    pub fn new(model: ModelRef) -> Self {
        ModelSlot {
            inner: Arc::new(RwLock::new(model)),
        }
    }

    pub fn snapshot(&self) -> ModelRef {
        self.inner.read().expect("model slot poisoned").clone()
    }

    pub fn publish(&self, model: ModelRef) {
        *self.inner.write().expect("model slot poisoned") = model;
    }
}
