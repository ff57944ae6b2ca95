//! An environment transformation that lets any RL agent drive a world model
//! through imaginary, reset and real actions, together with a learned
//! dual-network model at MLP scale, a two-headed actor-critic, and
//! hand-crafted planner baselines.
//!
//! The main entry points:
//!
//! * [`env`] — deterministic toy puzzles ([`env::ChainSpec`],
//!   [`env::MiniBoxSpec`]) behind a raw-MDP interface and a pure transition
//!   oracle.
//! * [`model`] — the world-model abstraction (encode / unroll / predict)
//!   with an exact oracle and a learned dual network, plus the prioritized
//!   replay buffer and training losses.
//! * [`tree`] — the planning-stage search tree with incrementally maintained
//!   rollout-return statistics.
//! * [`wrapper`] — the augmented MDP: planning-stage sequencing, planning
//!   rewards, and the fixed-size tree-statistics state vector.
//! * [`agents`] — the actor-critic plus MCTS / exhaustive / random
//!   baselines.
//! * [`harness`] — training and evaluation loops, trace analytics, the
//!   policy-improvement experiment, and config parsing for the `thinker`
//!   binary.
//!
//! Each major capability has a runnable demo under `examples/`; start with
//! `cargo run --release --example plan_with_oracle`.







pub mod agents;
pub mod env;
pub mod error;
pub mod model;
pub mod nn;
pub mod trace;
pub mod tree;
pub mod wrapper;

pub use error::{Error, Result};