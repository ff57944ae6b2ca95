//! Built-in deterministic toy environments exposing the raw-MDP interface,
//! plus a pure transition oracle shared with the exact world model.
//!
//! Two environments are provided:
//!
//! * [`ChainSpec`] — a short corridor with a distractor exit that pays a
//!   small immediate reward, against a larger payout at the far end.
//! * [`MiniBoxSpec`] — a 6x6 box-pushing puzzle with 1-2 boxes, drawn from
//!   a fixed layout, a pre-generated solvable pool, or a procedural
//!   generator that pulls boxes backwards from solved positions.
//!
//! All dynamics run through [`oracle_transition`], a pure function of
//! `(spec, encoding, action)`, so the live environment and the exact model
//! can never disagree.

mod chain;
mod level;
mod minibox;

pub use chain::{ChainSpec, ChainStatus};
pub use level::{
    format_level, generate_level, parse_level, parse_pool, pool_to_string, GeneratorConfig, Level,
};
pub use minibox::{
    builtin_pool, reachable_states, solve_bfs, LevelSource, MiniBoxSpec, PoolCertificate, BOX_OFF,
    BOX_ON, SOLVE_BONUS, STEP_COST,
};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Minibox move directions, in action-index order.
pub const MINIBOX_ACTIONS: [(i8, i8); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];

/// Chain actions: step back, step forward, take the distractor exit.
pub const CHAIN_LEFT: usize = 0;
pub const CHAIN_RIGHT: usize = 1;
pub const CHAIN_BRANCH: usize = 2;

/// Environment description. Immutable once constructed; all dynamics are a
/// pure function of the spec and a [`StateEncoding`].
#[derive(Debug, Clone)]
pub enum EnvSpec {
    Chain(ChainSpec),
    MiniBox(MiniBoxSpec),
}

impl EnvSpec {
    pub fn action_count(&self) -> usize {
        match self {
            EnvSpec::Chain(_) => 3,
            EnvSpec::MiniBox(_) => 4,
        }
    }

    pub fn observation_dim(&self) -> usize {
        match self {
            EnvSpec::Chain(c) => c.length as usize,
            EnvSpec::MiniBox(m) => 4 * (m.width as usize) * (m.height as usize),
        }
    }

    pub fn max_steps(&self) -> usize {
        match self {
            EnvSpec::Chain(c) => c.max_steps as usize,
            EnvSpec::MiniBox(m) => m.max_steps as usize,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EnvSpec::Chain(_) => "chain",
            EnvSpec::MiniBox(_) => "minibox",
        }
    }

    /// Initial encoding for a given reset seed.
    pub fn initial_encoding(&self, seed: u64) -> StateEncoding {
        match self {
            EnvSpec::Chain(c) => c.initial_encoding(),
            EnvSpec::MiniBox(m) => m.initial_encoding(seed),
        }
    }

    /// Observation vector for an encoding. Entries are 0/1 one-hot planes.
    pub fn observation(&self, enc: &StateEncoding) -> Vec<f64> {
        match (self, enc) {
            (EnvSpec::Chain(c), StateEncoding::Chain(e)) => c.observation(e),
            (EnvSpec::MiniBox(m), StateEncoding::MiniBox(e)) => m.observation(e),
            _ => panic!("encoding kind does not match spec"),
        }
    }

    /// Whether the encoded state reached the goal (not just terminated).
    pub fn is_solved(&self, enc: &StateEncoding) -> bool {
        match enc {
            StateEncoding::Chain(e) => e.status == ChainStatus::Goal,
            StateEncoding::MiniBox(e) => e.boxes != 0 && e.boxes & !e.targets == 0,
        }
    }

    pub fn is_terminal(&self, enc: &StateEncoding) -> bool {
        match (self, enc) {
            (EnvSpec::Chain(c), StateEncoding::Chain(e)) => c.is_terminal(e),
            (EnvSpec::MiniBox(m), StateEncoding::MiniBox(e)) => m.is_terminal(e),
            _ => panic!("encoding kind does not match spec"),
        }
    }
}

/// Canonical compact encoding of a raw state. Complete: dynamics can be
/// resumed from the encoding alone (walls and targets are carried for the
/// box puzzle so procedurally generated boards stay self-contained).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StateEncoding {
    Chain(ChainEncoding),
    MiniBox(MiniBoxEncoding),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChainEncoding {
    pub pos: u8,
    pub steps: u16,
    pub status: ChainStatus,
}

/// Bit-mask board encoding; cell (r, c) maps to bit `r * width + c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MiniBoxEncoding {
    pub walls: u64,
    pub targets: u64,
    pub boxes: u64,
    pub agent: u8,
    pub steps: u16,
}

/// One step of the underlying deterministic MDP.
#[derive(Debug, Clone)]
pub struct RawTransition {
    pub action: usize,
    pub reward: f64,
    pub next_state: RawState,
    pub done: bool,
}

/// A raw state: flat 0/1 observation plus the compact encoding it was
/// derived from. Equal encodings always produce identical observations.
#[derive(Debug, Clone)]
pub struct RawState {
    pub observation: Vec<f64>,
    pub step_count: u32,
    pub internal: StateEncoding,
}

impl RawState {
    pub fn from_encoding(spec: &EnvSpec, enc: StateEncoding) -> Self {
        let steps = match &enc {
            StateEncoding::Chain(e) => e.steps as u32,
            StateEncoding::MiniBox(e) => e.steps as u32,
        };
        RawState {
            observation: spec.observation(&enc),
            step_count: steps,
            internal: enc,
        }
    }
}

/// Pure dynamics: identical to stepping a live environment holding the same
/// state, with no side effects. Safe to call from any thread.
pub fn oracle_transition(
    spec: &EnvSpec,
    enc: &StateEncoding,
    action: usize,
) -> Result<(f64, StateEncoding, bool)> {
    if action >= spec.action_count() {
        return Err(Error::ActionOutOfRange {
            action,
            action_count: spec.action_count(),
        });
    }
    match (spec, enc) {
        (EnvSpec::Chain(c), StateEncoding::Chain(e)) => {
            let (r, next, done) = c.transition(e, action)?;
            Ok((r, StateEncoding::Chain(next), done))
        }
        (EnvSpec::MiniBox(m), StateEncoding::MiniBox(e)) => {
            let (r, next, done) = m.transition(e, action)?;
            Ok((r, StateEncoding::MiniBox(next), done))
        }
        _ => Err(Error::InvalidEncoding(
            "encoding kind does not match spec".into(),
        )),
    }
}

/// A live environment handle. Single-threaded; a batch runner may own many
/// handles and step them from one coordinating thread.
#[derive(Debug, Clone)]
pub struct Env {
    spec: Arc<EnvSpec>,
    state: RawState,
    terminated: bool,
}

impl Env {
    pub fn new(spec: Arc<EnvSpec>) -> Self {
        let enc = spec.initial_encoding(0);
        let state = RawState::from_encoding(&spec, enc);
        Env {
            spec,
            state,
            terminated: false,
        }
    }

    pub fn spec(&self) -> &Arc<EnvSpec> {
        &self.spec
    }

    pub fn state(&self) -> &RawState {
        &self.state
    }

    pub fn terminated(&self) -> bool {
        self.terminated
    }

    /// Draw an initial state from the level sampler. Same seed, same state.
    pub fn reset(&mut self, seed: u64) -> RawState {
        let enc = self.spec.initial_encoding(seed);
        self.state = RawState::from_encoding(&self.spec, enc);
        self.terminated = false;
        self.state.clone()
    }

    /// Apply one action of the deterministic dynamics.
    pub fn step(&mut self, action: usize) -> Result<RawTransition> {
        if self.terminated {
            return Err(Error::EpisodeOver);
        }
        let (reward, next_enc, done) = oracle_transition(&self.spec, &self.state.internal, action)?;
        self.state = RawState::from_encoding(&self.spec, next_enc);
        self.terminated = done;
        Ok(RawTransition {
            action,
            reward,
            next_state: self.state.clone(),
            done,
        })
    }
}

#[cfg(test)]
mod tests;
