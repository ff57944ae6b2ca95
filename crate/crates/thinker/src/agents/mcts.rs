use super::{sample_index, AugmentedPolicy, StepContext};
use crate::env::RawState;
use crate::error::Result;
use crate::model::{HiddenState, OutputStats, WorldModel};
use crate::wrapper::AugmentedAction;
use rand_chacha::ChaCha8Rng;

/// Upper-confidence search settings. The score is a prior-weighted
/// polynomial upper-confidence bound over min-max-normalised mean returns:
/// an external convention, not derived from any reference implementation.
#[derive(Debug, Clone, Copy)]
pub struct MctsConfig {
    pub exploration: f64,
    pub temperature: f64,
}

impl Default for MctsConfig {
    fn default() -> Self {
        MctsConfig {
            exploration: 1.25,
            temperature: 0.25,
        }
    }
}

/// Drives the augmented environment like a classical tree search: the
/// imaginary action follows the upper-confidence score at the current node,
/// the reset action fires exactly when a new (previously unexpanded) node
/// is reached, and the real action is sampled from root visit counts
/// tempered by `temperature`.
pub struct MctsWrapperPolicy {
    pub cfg: MctsConfig,
}

impl MctsWrapperPolicy {
    pub fn new(cfg: MctsConfig) -> Self {
        MctsWrapperPolicy { cfg }
    }
}

impl AugmentedPolicy for MctsWrapperPolicy {
    fn act(&mut self, ctx: &StepContext, rng: &mut ChaCha8Rng) -> AugmentedAction {
        let tree = ctx.wrapper.tree();
        let action_count = tree.action_count();
        let k = ctx.wrapper.upcoming_step();
        let big_k = ctx.wrapper.config().planning_steps;

        // Real decision: visits^(1/T) over root children.
        let root_stats = tree.return_stats(tree.root());
        let mut weights: Vec<f64> = root_stats
            .child_visits
            .iter()
            .map(|&n| {
                if n > 0.0 {
                    n.powf(1.0 / self.cfg.temperature)
                } else {
                    0.0
                }
            })
            .collect();
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            weights = vec![1.0 / action_count as f64; action_count];
        } else {
            for w in weights.iter_mut() {
                *w /= total;
            }
        }
        let real = sample_index(&weights, rng);
        if k == big_k {
            return AugmentedAction {
                real,
                imaginary: 0,
                reset: false,
                real_action_dist: weights,
            };
        }

        // Imaginary decision at the current node.
        let cur = tree.cur();
        let node = ctx.wrapper.tree().node(cur);
        let stats = tree.return_stats(cur);
        let parent_visits = node.visit_count as f64;
        // Min-max normalise sibling mean returns so the exploration term is
        // comparable across reward scales.
        let present: Vec<f64> = (0..action_count)
            .filter(|&a| node.child(a).is_some())
            .map(|a| stats.child_mean[a])
            .collect();
        let (lo, hi) = present
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| {
                (l.min(v), h.max(v))
            });
        let mut best = 0usize;
        let mut best_score = f64::NEG_INFINITY;
        for a in 0..action_count {
            let q = if node.child(a).is_some() && hi > lo {
                (stats.child_mean[a] - lo) / (hi - lo)
            } else if node.child(a).is_some() {
                0.5
            } else {
                0.0
            };
            let prior = node.stats.policy[a];
            let n_a = stats.child_visits[a];
            let score = q + self.cfg.exploration * prior * parent_visits.sqrt() / (1.0 + n_a);
            if score > best_score {
                best_score = score;
                best = a;
            }
        }
        let leaf = node.child(best).is_none();
        AugmentedAction {
            real,
            imaginary: best,
            reset: leaf,
            real_action_dist: weights,
        }
    }
}

/// Root-child statistics reported by the standalone search.
#[derive(Debug, Clone)]
pub struct SearchTreeStats {
    pub visit_counts: Vec<u32>,
    pub mean_values: Vec<f64>,
    pub best_action: usize,
    pub simulations: u64,
}

struct SearchNode {
    hidden: HiddenState,
    stats: OutputStats,
    visits: u32,
    value_sum: f64,
    children: Vec<Option<usize>>,
    absorbing: bool,
}

/// Standalone upper-confidence tree search over a world model, independent
/// of the augmented environment. Used as a reference oracle for the
/// wrapper-driven policy and as a policy-improvement operator.
pub fn mcts_search(
    model: &dyn WorldModel,
    root_state: &RawState,
    prev_action: usize,
    simulations: usize,
    exploration: f64,
    gamma: f64,
) -> Result<SearchTreeStats> {
    let action_count = model.action_count();
    let root_hidden = model.encode(root_state, prev_action)?;
    let mut root_stats = model.predict(&root_hidden);
    root_stats.reward = 0.0;
    let mut nodes = vec![SearchNode {
        absorbing: root_stats.done_prob > 0.5,
        hidden: root_hidden,
        stats: root_stats,
        visits: 1,
        value_sum: 0.0,
        children: vec![None; action_count],
    }];
    let mut sims = 0u64;
    let (mut q_lo, mut q_hi) = (f64::INFINITY, f64::NEG_INFINITY);

    for _ in 0..simulations {
        // Select down to a leaf edge.
        let mut path = vec![0usize];
        let leaf_value;
        loop {
            let at = *path.last().unwrap();
            if nodes[at].absorbing {
                leaf_value = 0.0;
                break;
            }
            let parent_visits = nodes[at].visits as f64;
            let mut best = 0usize;
            let mut best_score = f64::NEG_INFINITY;
            for a in 0..action_count {
                let (q, n_a) = match nodes[at].children[a] {
                    Some(c) => {
                        let node = &nodes[c];
                        let q_raw = node.value_sum / node.visits as f64;
                        let q = if q_hi > q_lo {
                            (q_raw - q_lo) / (q_hi - q_lo)
                        } else {
                            0.5
                        };
                        (q, node.visits as f64)
                    }
                    None => (0.0, 0.0),
                };
                let prior = nodes[at].stats.policy[a];
                let score = q + exploration * prior * parent_visits.sqrt() / (1.0 + n_a);
                if score > best_score {
                    best_score = score;
                    best = a;
                }
            }
            match nodes[at].children[best] {
                Some(c) => {
                    path.push(c);
                }
                None => {
                    // Expand: one model call per new node. The parent is
                    // never absorbing here (handled by the break above).
                    let hidden = model.unroll(&nodes[at].hidden, best)?;
                    let stats = model.predict(&hidden);
                    sims += 1;
                    let id = nodes.len();
                    nodes.push(SearchNode {
                        absorbing: stats.done_prob > 0.5,
                        value_sum: 0.0,
                        visits: 0,
                        children: vec![None; action_count],
                        stats,
                        hidden,
                    });
                    nodes[at].children[best] = Some(id);
                    path.push(id);
                    leaf_value = if nodes[id].absorbing {
                        0.0
                    } else {
                        nodes[id].stats.value
                    };
                    break;
                }
            }
        }
        // Back up discounted returns along the path: each node accumulates
        // the return of the edge leading into it.
        let mut g = leaf_value;
        for &id in path.iter().skip(1).rev() {
            g = nodes[id].stats.reward + gamma * g;
            nodes[id].visits += 1;
            nodes[id].value_sum += g;
            let q = nodes[id].value_sum / nodes[id].visits as f64;
            q_lo = q_lo.min(q);
            q_hi = q_hi.max(q);
        }
        nodes[0].visits += 1;
    }

    let mut visit_counts = vec![0u32; action_count];
    let mut mean_values = vec![0.0; action_count];
    for a in 0..action_count {
        if let Some(c) = nodes[0].children[a] {
            visit_counts[a] = nodes[c].visits;
            if nodes[c].visits > 0 {
                mean_values[a] = nodes[c].value_sum / nodes[c].visits as f64;
            }
        }
    }
    let best_action = super::argmax(&visit_counts.iter().map(|&v| v as f64).collect::<Vec<_>>());
    Ok(SearchTreeStats {
        visit_counts,
        mean_values,
        best_action,
        simulations: sims,
    })
}
