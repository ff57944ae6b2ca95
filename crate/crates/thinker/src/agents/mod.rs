//! Policies that act in the augmented MDP: a two-headed actor-critic
//! trained by synchronous advantage actor-critic, and hand-crafted
//! baselines (upper-confidence tree search, exhaustive search, random)
//! used for comparisons and behaviour analyses.

mod actor_critic;
mod mcts;
mod search;

pub use actor_critic::{
    ac_forward, ac_loss, ac_loss_with_targets, ac_targets, AcConfig, AcSpec, AcTrainer,
    ActorCriticPolicy, AgentInput, Bootstrap, ForwardOut, Targets, TrajStep, Trajectory,
};
pub use mcts::{mcts_search, MctsConfig, MctsWrapperPolicy, SearchTreeStats};
pub use search::{check_online_budget, exhaustive_plan, ExhaustivePlan, ExhaustiveWrapperPolicy};

use crate::wrapper::{AugmentedAction, AugmentedState, RewardPair, ThinkerEnv};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// What a policy sees when choosing an augmented action.
pub struct StepContext<'a> {
    pub wrapper: &'a ThinkerEnv,
    pub state: &'a AugmentedState,
    pub last_action: &'a AugmentedAction,
    pub last_reward: RewardPair,
}

/// A policy over augmented actions. Parameter snapshots are read-only
/// during acting; mutation is limited to per-episode scratch state.
pub trait AugmentedPolicy {
    fn act(&mut self, ctx: &StepContext, rng: &mut ChaCha8Rng) -> AugmentedAction;

    /// Called when the wrapper is reset to a fresh episode.
    fn begin_episode(&mut self) {}
}

/// Uniform random sub-actions; the baseline of last resort.
pub struct RandomPolicy;

impl AugmentedPolicy for RandomPolicy {
    fn act(&mut self, ctx: &StepContext, rng: &mut ChaCha8Rng) -> AugmentedAction {
        let n = ctx.wrapper.env().spec().action_count();
        AugmentedAction {
            real: rng.gen_range(0..n),
            imaginary: rng.gen_range(0..n),
            reset: rng.gen_bool(0.5),
            real_action_dist: vec![1.0 / n as f64; n],
        }
    }
}

/// Sample an index from a probability vector.
pub(crate) fn sample_index(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests;
