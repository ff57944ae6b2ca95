use super::{AugmentedPolicy, StepContext};
use crate::error::{Error, Result};
use crate::model::{HiddenState, WorldModel};
use crate::wrapper::AugmentedAction;
use rand_chacha::ChaCha8Rng;

/// Result of a depth-n exhaustive enumeration.
#[derive(Debug, Clone)]
pub struct ExhaustivePlan {
    pub best_action: usize,
    pub best_return: f64,
    /// Model unroll calls performed (shared prefixes are expanded once).
    pub simulations: u64,
}

/// Enumerate every action sequence of length `depth` from `root` and return
/// the first action of the highest-return sequence. Ties break to the
/// lexicographically first sequence. Rollouts stop early at nodes whose
/// termination probability exceeds one half; nothing beyond them can pay.
pub fn exhaustive_plan(
    model: &dyn WorldModel,
    root: &HiddenState,
    depth: usize,
    gamma: f64,
) -> Result<ExhaustivePlan> {
    assert!(depth >= 1, "exhaustive search needs depth >= 1");
    let mut simulations = 0u64;

    fn dfs(
        model: &dyn WorldModel,
        hidden: &HiddenState,
        depth_left: usize,
        gamma: f64,
        acc: f64,
        disc: f64,
        sims: &mut u64,
    ) -> Result<f64> {
        let mut best = f64::NEG_INFINITY;
        for action in 0..model.action_count() {
            let next = model.unroll(hidden, action)?;
            let stats = model.predict(&next);
            *sims += 1;
            let reward_acc = acc + disc * stats.reward;
            let value = if stats.done_prob > 0.5 {
                // Terminal edge: the sequence's remaining steps add nothing.
                reward_acc
            } else if depth_left == 1 {
                reward_acc + disc * gamma * stats.value
            } else {
                dfs(
                    model,
                    &next,
                    depth_left - 1,
                    gamma,
                    reward_acc,
                    disc * gamma,
                    sims,
                )?
            };
            if value > best {
                best = value;
            }
        }
        Ok(best)
    }

    let mut best_action = 0;
    let mut best_return = f64::NEG_INFINITY;
    for action in 0..model.action_count() {
        let next = model.unroll(root, action)?;
        let stats = model.predict(&next);
        simulations += 1;
        let first_reward = stats.reward;
        let value = if stats.done_prob > 0.5 {
            first_reward
        } else if depth == 1 {
            first_reward + gamma * stats.value
        } else {
            dfs(
                model,
                &next,
                depth - 1,
                gamma,
                first_reward,
                gamma,
                &mut simulations,
            )?
        };
        if value > best_return {
            best_return = value;
            best_action = action;
        }
    }
    Ok(ExhaustivePlan {
        best_action,
        best_return,
        simulations,
    })
}

/// Drives the augmented environment through a full depth-n enumeration:
/// each leaf sequence is walked from the root with a reset on its last
/// step, revisits reuse the tree's cached computation, and the real action
/// is the root child with the highest maximum rollout return.
///
/// Requires `K - 1 >= depth * |A|^depth` imaginary steps per stage.
pub struct ExhaustiveWrapperPolicy {
    pub depth: usize,
    /// Remaining scripted (imaginary, reset) pairs for the current stage.
    walk: Vec<(usize, bool)>,
    cursor: usize,
}

impl ExhaustiveWrapperPolicy {
    pub fn new(depth: usize) -> Self {
        ExhaustiveWrapperPolicy {
            depth,
            walk: Vec::new(),
            cursor: 0,
        }
    }

    /// All depth-n sequences in lexicographic order; each is entered from
    /// the root and the pointer resets on its last step.
    fn build_walk(action_count: usize, depth: usize) -> Vec<(usize, bool)> {
        let mut walk = Vec::new();
        let mut seq = vec![0usize; depth];
        loop {
            for (i, &a) in seq.iter().enumerate() {
                walk.push((a, i + 1 == depth));
            }
            // Next sequence.
            let mut i = depth;
            loop {
                if i == 0 {
                    return walk;
                }
                i -= 1;
                seq[i] += 1;
                if seq[i] < action_count {
                    break;
                }
                seq[i] = 0;
            }
        }
    }

    pub fn steps_needed(action_count: usize, depth: usize) -> usize {
        depth * action_count.pow(depth as u32)
    }
}

impl AugmentedPolicy for ExhaustiveWrapperPolicy {
    fn begin_episode(&mut self) {
        self.walk.clear();
        self.cursor = 0;
    }

    fn act(&mut self, ctx: &StepContext, _rng: &mut ChaCha8Rng) -> AugmentedAction {
        let tree = ctx.wrapper.tree();
        let action_count = tree.action_count();
        let k = ctx.wrapper.upcoming_step();
        let big_k = ctx.wrapper.config().planning_steps;

        if k == 1 || self.walk.is_empty() {
            self.walk = Self::build_walk(action_count, self.depth);
            self.cursor = 0;
        }
        if k == big_k {
            // Real decision: argmax of the root children's max rollout
            // returns; unexplored actions only win against negatives.
            let stats = tree.return_stats(tree.root());
            let mut best = 0;
            for a in 1..action_count {
                if stats.child_max[a] > stats.child_max[best] {
                    best = a;
                }
            }
            self.walk.clear();
            let mut dist = vec![0.0; action_count];
            dist[best] = 1.0;
            return AugmentedAction {
                real: best,
                imaginary: 0,
                reset: false,
                real_action_dist: dist,
            };
        }
        let (imaginary, reset) = if self.cursor < self.walk.len() {
            let step = self.walk[self.cursor];
            self.cursor += 1;
            step
        } else {
            // Enumeration finished early relative to K: idle at the root.
            (0, true)
        };
        AugmentedAction {
            real: 0,
            imaginary,
            reset,
            real_action_dist: vec![1.0 / action_count as f64; action_count],
        }
    }
}

/// Check the per-stage step budget for the wrapper-driven enumeration.
pub fn check_online_budget(action_count: usize, depth: usize, planning_steps: usize) -> Result<()> {
    let need = ExhaustiveWrapperPolicy::steps_needed(action_count, depth) + 1;
    if planning_steps < need {
        return Err(Error::BudgetTooSmall {
            need,
            have: planning_steps,
        });
    }
    Ok(())
}
