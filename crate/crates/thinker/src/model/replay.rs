use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::VecDeque;
use std::sync::{Arc, Mutex};

/// One real transition as stored for model training: the action taken, the
/// acting policy's real-action distribution, the mean rollout return at the
/// root when the action was chosen, and the observed outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayEntry {
    pub action: usize,
    pub action_dist: Vec<f64>,
    pub mean_root_return: f64,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
    pub priority: f64,
}

impl ReplayEntry {
    /// Absorbing pad used past an episode boundary inside a sampled window.
    fn absorbing(action_count: usize, terminal_obs: &[f64]) -> Self {
        ReplayEntry {
            action: 0,
            action_dist: vec![1.0 / action_count as f64; action_count],
            mean_root_return: 0.0,
            reward: 0.0,
            next_state: terminal_obs.to_vec(),
            done: true,
            priority: 0.0,
        }
    }
}

/// A training window: `2L + 1` consecutive entries plus the unroll root
/// recovered from the entry preceding the window.
#[derive(Debug, Clone)]
pub struct SampledSequence {
    /// Global id of the first entry; priorities key on it.
    pub id: u64,
    pub root_observation: Vec<f64>,
    pub root_prev_action: usize,
    pub entries: Vec<ReplayEntry>,
    /// Importance weight, already normalised so the largest is 1.
    pub weight: f64,
}

/// First-in-first-out prioritized replay. Windows never cross the eviction
/// gap, roots are never episode-initial states (those are not stored by the
/// transition tuple), and entries past an episode boundary are replaced by
/// absorbing padding when a window is materialised.
pub struct ReplayBuffer {
    capacity: usize,
    min_fill: usize,
    seq_len: usize,
    alpha: f64,
    entries: VecDeque<ReplayEntry>,
    /// Global id of `entries[0]`.
    base_id: u64,
    max_priority: f64,
    total_pushed: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, min_fill: usize, unroll: usize, alpha: f64) -> Self {
        assert!(capacity >= min_fill && min_fill >= 2 * unroll + 2);
        ReplayBuffer {
            capacity,
            min_fill,
            seq_len: 2 * unroll + 1,
            alpha,
            entries: VecDeque::new(),
            base_id: 0,
            max_priority: 1.0,
            total_pushed: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_pushed(&self) -> u64 {
        self.total_pushed
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    /// Whether sampling may proceed.
    pub fn ready(&self) -> bool {
        self.entries.len() >= self.min_fill && !self.valid_starts().is_empty()
    }

    pub fn priorities(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.priority).collect()
    }

    /// Append one transition. New entries take the maximum priority in the
    /// buffer (1 when empty, so the first entries are sampled at all).
    pub fn push(&mut self, mut entry: ReplayEntry) {
        entry.priority = if self.entries.is_empty() {
            1.0
        } else {
            self.max_priority
        };
        self.max_priority = self.max_priority.max(entry.priority);
        self.entries.push_back(entry);
        self.total_pushed += 1;
        if self.entries.len() > self.capacity {
            let evicted = self.entries.pop_front().expect("non-empty");
            self.base_id += 1;
            if evicted.priority >= self.max_priority {
                self.max_priority = self
                    .entries
                    .iter()
                    .map(|e| e.priority)
                    .fold(f64::MIN, f64::max)
                    .max(1e-12);
            }
        }
    }

    /// Append a whole episode atomically so interleaved producers cannot
    /// fragment a trajectory.
    pub fn push_episode(&mut self, episode: Vec<ReplayEntry>) {
        for entry in episode {
            self.push(entry);
        }
    }

    /// Local indices that can start a window: the previous entry must exist
    /// in the same episode (it supplies the root state) and the whole window
    /// must be resident.
    fn valid_starts(&self) -> Vec<usize> {
        if self.entries.len() < self.seq_len + 1 {
            return Vec::new();
        }
        (1..=self.entries.len() - self.seq_len)
            .filter(|&j| !self.entries[j - 1].done)
            .collect()
    }

    /// Sampling distribution over valid starts: p_i^alpha, normalised.
    pub fn sample_probabilities(&self) -> Vec<(usize, f64)> {
        let starts = self.valid_starts();
        let mut probs: Vec<(usize, f64)> = starts
            .into_iter()
            .map(|j| (j, self.entries[j].priority.max(1e-12).powf(self.alpha)))
            .collect();
        let z: f64 = probs.iter().map(|(_, p)| p).sum();
        for (_, p) in probs.iter_mut() {
            *p /= z;
        }
        probs
    }

    /// Draw `batch` windows i.i.d. from the priority distribution. Returns
    /// `None` while under-filled so the trainer can skip the step.
    pub fn sample(
        &self,
        batch: usize,
        beta: f64,
        rng: &mut ChaCha8Rng,
    ) -> Option<Vec<SampledSequence>> {
        if self.entries.len() < self.min_fill {
            return None;
        }
        let probs = self.sample_probabilities();
        if probs.is_empty() {
            return None;
        }
        let n = self.entries.len() as f64;
        // Importance weights normalised by the largest over all candidates.
        let w_max = probs
            .iter()
            .map(|&(_, p)| (1.0 / (n * p)).powf(beta))
            .fold(f64::MIN, f64::max);
        let cumulative: Vec<f64> = probs
            .iter()
            .scan(0.0, |acc, &(_, p)| {
                *acc += p;
                Some(*acc)
            })
            .collect();
        let mut out = Vec::with_capacity(batch);
        for _ in 0..batch {
            let u: f64 = rng.gen();
            let k = cumulative.partition_point(|&c| c < u).min(probs.len() - 1);
            let (j, p) = probs[k];
            let weight = (1.0 / (n * p)).powf(beta) / w_max;
            out.push(self.materialise(j, weight));
        }
        Some(out)
    }

    /// Copy a window, replacing entries past the first episode boundary
    /// with absorbing padding.
    fn materialise(&self, start: usize, weight: f64) -> SampledSequence {
        let root = &self.entries[start - 1];
        let action_count = root.action_dist.len();
        let mut entries = Vec::with_capacity(self.seq_len);
        let mut boundary: Option<usize> = None;
        for (offset, idx) in (start..start + self.seq_len).enumerate() {
            if let Some(b) = boundary {
                let terminal_obs = &self.entries[start + b].next_state;
                entries.push(ReplayEntry::absorbing(action_count, terminal_obs));
                continue;
            }
            let entry = self.entries[idx].clone();
            if entry.done {
                boundary = Some(offset);
            }
            entries.push(entry);
        }
        SampledSequence {
            id: self.base_id + start as u64,
            root_observation: root.next_state.clone(),
            root_prev_action: root.action,
            entries,
            weight,
        }
    }

    /// Overwrite priorities for the given first-entry ids (evicted ids are
    /// ignored). No entry is otherwise mutated after insertion.
    pub fn update_priorities(&mut self, updates: &[(u64, f64)]) {
        for &(id, priority) in updates {
            if id < self.base_id {
                continue;
            }
            let j = (id - self.base_id) as usize;
            if let Some(entry) = self.entries.get_mut(j) {
                entry.priority = priority.max(1e-12);
            }
        }
        // The maximum may have been lowered; keep it exact so new pushes
        // inherit the true buffer maximum.
        self.max_priority = self
            .entries
            .iter()
            .map(|e| e.priority)
            .fold(f64::MIN, f64::max)
            .max(1e-12);
    }
}

/// Exclusive-access handle shared by environment workers (producers) and
/// the model trainer (consumer).
#[derive(Clone)]
pub struct SharedReplay(pub Arc<Mutex<ReplayBuffer>>);

impl SharedReplay {
    pub fn new(buffer: ReplayBuffer) -> Self {
        SharedReplay(Arc::new(Mutex::new(buffer)))
    }

    pub fn push_episode(&self, episode: Vec<ReplayEntry>) {
        self.0.lock().expect("replay poisoned").push_episode(episode);
    }
}
