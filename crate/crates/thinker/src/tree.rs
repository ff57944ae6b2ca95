//! The planning-stage search tree: node storage, expansion and revisit
//! semantics, rollout returns, incrementally maintained mean/max return and
//! visit statistics, resets, and cross-stage retention.
//!
//! Every node keeps a rollout buffer holding one return per descendant
//! (itself included): the discounted sum of predicted rewards along the
//! path plus the discounted value at its end. New nodes insert one entry
//! into each ancestor's buffer on creation; content changes (which only
//! happen when a carried tree meets a re-encoded root) trigger an eager
//! rebuild of all buffers.

use crate::error::{Error, Result};
use crate::model::{HiddenState, OutputStats};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone)]
pub struct Node {
    pub hidden: HiddenState,
    pub stats: OutputStats,
    pub incoming_action: Option<usize>,
    pub visit_count: u32,
    pub parent: Option<NodeId>,
    children: Vec<Option<NodeId>>,
    /// (descendant, rollout return from this node to that descendant).
    rollout_buffer: Vec<(NodeId, f64)>,
    pub absorbing: bool,
    /// Content-version stamp; matches the tree's epoch when the contents
    /// were computed against the current root.
    epoch: u64,
    alive: bool,
}

impl Node {
    pub fn child(&self, action: usize) -> Option<NodeId> {
        self.children[action]
    }

    pub fn children(&self) -> impl Iterator<Item = (usize, NodeId)> + '_ {
        self.children
            .iter()
            .enumerate()
            .filter_map(|(a, c)| c.map(|id| (a, id)))
    }

    pub fn rollout_buffer(&self) -> &[(NodeId, f64)] {
        &self.rollout_buffer
    }
}

/// Per-node return statistics plus per-child breakdowns; missing children
/// report zero visits and neutral returns.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnStats {
    pub mean: f64,
    pub max: f64,
    pub child_visits: Vec<f64>,
    pub child_mean: Vec<f64>,
    pub child_max: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Tree {
    nodes: Vec<Node>,
    root: NodeId,
    cur: NodeId,
    depth: usize,
    pub last_max_root_return: f64,
    gamma: f64,
    action_count: usize,
    max_depth: usize,
    epoch: u64,
    dead: usize,
}

impl Tree {
    /// Fresh single-node tree anchored at a newly encoded root. The root's
    /// predicted reward is zeroed: that reward was already collected.
    pub fn new(
        contents: (HiddenState, OutputStats),
        gamma: f64,
        action_count: usize,
        max_depth: usize,
    ) -> Self {
        let (hidden, mut stats) = contents;
        stats.reward = 0.0;
        let absorbing = stats.done_prob > 0.5;
        let root = Node {
            hidden,
            stats,
            incoming_action: None,
            visit_count: 1,
            parent: None,
            children: vec![None; action_count],
            rollout_buffer: Vec::new(),
            absorbing,
            epoch: 0,
            alive: true,
        };
        let mut tree = Tree {
            nodes: vec![root],
            root: NodeId(0),
            cur: NodeId(0),
            depth: 0,
            last_max_root_return: 0.0,
            gamma,
            action_count,
            max_depth,
            epoch: 0,
            dead: 0,
        };
        tree.rebuild_all_buffers();
        tree.last_max_root_return = tree.max_root_return();
        tree
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn cur(&self) -> NodeId {
        self.cur
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn action_count(&self) -> usize {
        self.action_count
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn node(&self, id: NodeId) -> &Node {
        debug_assert!(self.nodes[id.0].alive, "dead node access");
        &self.nodes[id.0]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.alive).count()
    }

    pub fn total_visits(&self) -> u64 {
        self.nodes
            .iter()
            .filter(|n| n.alive)
            .map(|n| n.visit_count as u64)
            .sum()
    }

    pub fn cur_is_absorbing(&self) -> bool {
        self.node(self.cur).absorbing
    }

    /// True when the child's contents were computed against the current
    /// root, so a revisit may reuse them instead of re-unrolling the model.
    pub fn child_is_fresh(&self, parent: NodeId, action: usize) -> bool {
        self.node(parent)
            .child(action)
            .map(|c| self.nodes[c.0].epoch == self.epoch)
            .unwrap_or(false)
    }

    /// Rollout return along an explicit ancestor-to-descendant path:
    /// discounted predicted rewards plus the discounted leaf value.
    pub fn rollout_return(&self, path: &[NodeId]) -> Result<f64> {
        if path.is_empty() {
            return Err(Error::BrokenPath(0));
        }
        let mut sum = 0.0;
        let mut disc = 1.0;
        for (i, &id) in path.iter().enumerate() {
            if id.0 >= self.nodes.len() || !self.nodes[id.0].alive {
                return Err(Error::NodeNotFound(id.0));
            }
            if i > 0 && self.nodes[id.0].parent != Some(path[i - 1]) {
                return Err(Error::BrokenPath(i));
            }
            sum += disc * self.nodes[id.0].stats.reward;
            disc *= self.gamma;
        }
        let leaf = &self.nodes[path.last().unwrap().0];
        Ok(sum + disc * leaf.stats.value)
    }

    /// Path of node ids from the root down to `id`.
    pub fn path_from_root(&self, id: NodeId) -> Vec<NodeId> {
        let mut path = vec![id];
        let mut cur = id;
        while let Some(p) = self.nodes[cur.0].parent {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    /// Mean/max returns from the rollout buffer plus per-child statistics.
    pub fn return_stats(&self, id: NodeId) -> ReturnStats {
        let node = self.node(id);
        let (mean, max) = buffer_stats(&node.rollout_buffer);
        let mut child_visits = vec![0.0; self.action_count];
        let mut child_mean = vec![0.0; self.action_count];
        let mut child_max = vec![0.0; self.action_count];
        for (action, child) in node.children() {
            let c = self.node(child);
            let (m, x) = buffer_stats(&c.rollout_buffer);
            child_visits[action] = c.visit_count as f64;
            child_mean[action] = m;
            child_max[action] = x;
        }
        ReturnStats {
            mean,
            max,
            child_visits,
            child_mean,
            child_max,
        }
    }

    pub fn max_root_return(&self) -> f64 {
        buffer_stats(&self.node(self.root).rollout_buffer).1
    }

    pub fn mean_root_return(&self) -> f64 {
        buffer_stats(&self.node(self.root).rollout_buffer).0
    }

    /// Record the current maximum root return as the baseline for the next
    /// planning-reward computation.
    pub fn record_last_max(&mut self) {
        self.last_max_root_return = self.max_root_return();
    }

    /// Expand (or revisit) the child of the current node along `action`.
    ///
    /// `contents` must be supplied unless the current node is absorbing
    /// (the tree then carries the parent's hidden state and statistics with
    /// reward and value zeroed) or the child is fresh (a pure revisit).
    pub fn expand(
        &mut self,
        action: usize,
        contents: Option<(HiddenState, OutputStats)>,
    ) -> Result<NodeId> {
        if self.depth >= self.max_depth {
            return Err(Error::DepthLimit {
                limit: self.max_depth,
            });
        }
        if action >= self.action_count {
            return Err(Error::ActionOutOfRange {
                action,
                action_count: self.action_count,
            });
        }
        let parent = self.cur;
        let absorbing_parent = self.node(parent).absorbing;
        let contents = if absorbing_parent {
            // Past a predicted episode end the state freezes; no further
            // reward or value can be collected.
            let p = self.node(parent);
            let mut stats = p.stats.clone();
            stats.reward = 0.0;
            stats.value = 0.0;
            Some((p.hidden.clone(), stats))
        } else {
            contents
        };

        if let Some(child) = self.node(parent).child(action) {
            let (hidden, stats) = match contents {
                Some(c) => c,
                None => {
                    if self.nodes[child.0].epoch == self.epoch {
                        // Fresh revisit: reuse the stored computation.
                        self.nodes[child.0].visit_count += 1;
                        self.cur = child;
                        self.depth += 1;
                        return Ok(child);
                    }
                    return Err(Error::InvalidEncoding(
                        "stale child revisited without recomputed contents".into(),
                    ));
                }
            };
            let node = &mut self.nodes[child.0];
            let changed = node.stats.reward != stats.reward || node.stats.value != stats.value;
            node.hidden = hidden;
            node.absorbing = stats.done_prob > 0.5;
            node.stats = stats;
            node.epoch = self.epoch;
            node.visit_count += 1;
            self.cur = child;
            self.depth += 1;
            if changed {
                self.rebuild_all_buffers();
            }
            Ok(child)
        } else {
            let (hidden, stats) = contents.ok_or(Error::InvalidEncoding(
                "expanding a new node requires contents".into(),
            ))?;
            let absorbing = stats.done_prob > 0.5;
            let id = NodeId(self.nodes.len());
            self.nodes.push(Node {
                hidden,
                stats,
                incoming_action: Some(action),
                visit_count: 1,
                parent: Some(parent),
                children: vec![None; self.action_count],
                rollout_buffer: Vec::new(),
                absorbing,
                epoch: self.epoch,
                alive: true,
            });
            self.nodes[parent.0].children[action] = Some(id);
            // Insert the new node's rollout return into its own buffer and
            // every ancestor's, walking up the path.
            let mut g = self.nodes[id.0].stats.reward + self.gamma * self.nodes[id.0].stats.value;
            let mut at = id;
            loop {
                self.nodes[at.0].rollout_buffer.push((id, g));
                match self.nodes[at.0].parent {
                    Some(p) => {
                        g = self.nodes[p.0].stats.reward + self.gamma * g;
                        at = p;
                    }
                    None => break,
                }
            }
            self.cur = id;
            self.depth += 1;
            Ok(id)
        }
    }

    /// Return the pointer to the root and bump its visit count.
    pub fn reset_cur(&mut self) {
        self.cur = self.root;
        self.depth = 0;
        self.nodes[self.root.0].visit_count += 1;
    }

    /// Re-anchor the tree after a real transition. If the episode continues
    /// and the taken action's child exists, that child becomes the root
    /// (its contents overwritten by the freshly encoded state, predicted
    /// reward forced to zero) and everything outside its subtree is
    /// discarded; otherwise the tree is rebuilt from a single node.
    pub fn retain(
        &mut self,
        real_action: usize,
        contents: (HiddenState, OutputStats),
        episode_done: bool,
    ) {
        let survivor = if episode_done {
            None
        } else {
            self.node(self.root).child(real_action)
        };
        match survivor {
            Some(new_root) => {
                self.epoch += 1;
                let (hidden, mut stats) = contents;
                stats.reward = 0.0;
                let node = &mut self.nodes[new_root.0];
                node.hidden = hidden;
                node.absorbing = stats.done_prob > 0.5;
                node.stats = stats;
                node.epoch = self.epoch;
                node.parent = None;
                self.root = new_root;
                self.prune_non_descendants();
                self.rebuild_all_buffers();
            }
            None => {
                *self = Tree::new(contents, self.gamma, self.action_count, self.max_depth);
            }
        }
        self.cur = self.root;
        self.depth = 0;
        self.record_last_max();
    }

    fn prune_non_descendants(&mut self) {
        let mut keep = vec![false; self.nodes.len()];
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            keep[id.0] = true;
            stack.extend(self.nodes[id.0].children().map(|(_, c)| c));
        }
        for (i, node) in self.nodes.iter_mut().enumerate() {
            if node.alive && !keep[i] {
                node.alive = false;
                self.dead += 1;
            }
        }
        if self.dead > 4 * self.node_count() {
            self.compact();
        }
    }

    /// Rebuild the arena without dead slots, remapping every id.
    fn compact(&mut self) {
        let mut remap = vec![usize::MAX; self.nodes.len()];
        let mut fresh: Vec<Node> = Vec::with_capacity(self.node_count());
        for (i, node) in self.nodes.iter().enumerate() {
            if node.alive {
                remap[i] = fresh.len();
                fresh.push(node.clone());
            }
        }
        for node in fresh.iter_mut() {
            node.parent = node.parent.map(|p| NodeId(remap[p.0]));
            for c in node.children.iter_mut() {
                *c = c.map(|id| NodeId(remap[id.0]));
            }
            for (id, _) in node.rollout_buffer.iter_mut() {
                *id = NodeId(remap[id.0]);
            }
        }
        self.root = NodeId(remap[self.root.0]);
        self.cur = NodeId(remap[self.cur.0]);
        self.nodes = fresh;
        self.dead = 0;
    }

    /// Recompute every rollout buffer from scratch by walking each node's
    /// ancestor chain.
    fn rebuild_all_buffers(&mut self) {
        for node in self.nodes.iter_mut() {
            node.rollout_buffer.clear();
        }
        let ids: Vec<NodeId> = (0..self.nodes.len())
            .filter(|&i| self.nodes[i].alive)
            .map(NodeId)
            .collect();
        for id in ids {
            let mut g = self.nodes[id.0].stats.reward + self.gamma * self.nodes[id.0].stats.value;
            let mut at = id;
            loop {
                self.nodes[at.0].rollout_buffer.push((id, g));
                match self.nodes[at.0].parent {
                    Some(p) => {
                        g = self.nodes[p.0].stats.reward + self.gamma * g;
                        at = p;
                    }
                    None => break,
                }
            }
        }
    }

    /// JSON snapshot for the trace renderer.
    pub fn snapshot(&self) -> serde_json::Value {
        let nodes: Vec<serde_json::Value> = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.alive)
            .map(|(i, n)| {
                let stats = self.return_stats(NodeId(i));
                serde_json::json!({
                    "id": i,
                    "parent": n.parent.map(|p| p.0),
                    "action": n.incoming_action,
                    "visits": n.visit_count,
                    "reward": n.stats.reward,
                    "value": n.stats.value,
                    "done_prob": n.stats.done_prob,
                    "policy": n.stats.policy,
                    "absorbing": n.absorbing,
                    "mean_return": stats.mean,
                    "max_return": stats.max,
                    "rollout_return": self.rollout_return(&self.path_from_root(NodeId(i))).unwrap_or(f64::NAN),
                    "children": n.children().map(|(a, c)| (a.to_string(), c.0)).collect::<std::collections::BTreeMap<_, _>>(),
                })
            })
            .collect();
        serde_json::json!({
            "gamma": self.gamma,
            "action_count": self.action_count,
            "max_depth": self.max_depth,
            "root": self.root.0,
            "cur": self.cur.0,
            "depth": self.depth,
            "nodes": nodes,
        })
    }
}

fn buffer_stats(buffer: &[(NodeId, f64)]) -> (f64, f64) {
    if buffer.is_empty() {
        return (0.0, 0.0);
    }
    let sum: f64 = buffer.iter().map(|(_, g)| g).sum();
    let max = buffer
        .iter()
        .map(|(_, g)| *g)
        .fold(f64::NEG_INFINITY, f64::max);
    (sum / buffer.len() as f64, max)
}
