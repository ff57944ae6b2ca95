use super::{ChainEncoding, CHAIN_BRANCH, CHAIN_LEFT, CHAIN_RIGHT};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Terminal status of a chain episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChainStatus {
    Running,
    /// Stepped off the far end: the large payout.
    Goal,
    /// Took the distractor exit: small immediate payout.
    Branch,
    /// Hit the episode step cap.
    CapHit,
}

/// A deterministic corridor of `length` cells. The agent starts at cell 0.
/// Moving right from the last cell pays `goal_reward` and ends the episode;
/// the branch action ends the episode immediately with the per-cell payout
/// from `branch_rewards`. All other moves pay nothing, so a myopic policy
/// takes the branch while a short lookahead prefers walking to the end.
#[derive(Debug, Clone)]
pub struct ChainSpec {
    pub length: u8,
    pub branch_rewards: Vec<f64>,
    pub goal_reward: f64,
    pub max_steps: u16,
}

impl ChainSpec {
    pub fn new(length: u8, branch_reward: f64, max_steps: u16) -> Result<Self> {
        if length < 2 {
            return Err(Error::BadConfig("chain length must be >= 2".into()));
        }
        if max_steps < 1 {
            return Err(Error::BadConfig("max_steps must be >= 1".into()));
        }
        Ok(ChainSpec {
            length,
            branch_rewards: vec![branch_reward; length as usize],
            goal_reward: 1.0,
            max_steps,
        })
    }

    /// The default eight-cell chain with a 0.3 distractor exit.
    pub fn default_eight() -> Self {
        ChainSpec::new(8, 0.3, 40).expect("static config")
    }

    pub fn initial_encoding(&self) -> super::StateEncoding {
        super::StateEncoding::Chain(ChainEncoding {
            pos: 0,
            steps: 0,
            status: ChainStatus::Running,
        })
    }

    pub fn observation(&self, enc: &ChainEncoding) -> Vec<f64> {
        let mut obs = vec![0.0; self.length as usize];
        obs[enc.pos as usize] = 1.0;
        obs
    }

    pub fn is_terminal(&self, enc: &ChainEncoding) -> bool {
        enc.status != ChainStatus::Running
    }

    pub fn transition(&self, enc: &ChainEncoding, action: usize) -> Result<(f64, ChainEncoding, bool)> {
        if enc.pos >= self.length {
            return Err(Error::InvalidEncoding(format!(
                "chain position {} out of range",
                enc.pos
            )));
        }
        if enc.status != ChainStatus::Running {
            return Err(Error::EpisodeOver);
        }
        let mut next = *enc;
        let mut reward = 0.0;
        match action {
            CHAIN_LEFT => next.pos = next.pos.saturating_sub(1),
            CHAIN_RIGHT => {
                if next.pos == self.length - 1 {
                    reward = self.goal_reward;
                    next.status = ChainStatus::Goal;
                } else {
                    next.pos += 1;
                }
            }
            CHAIN_BRANCH => {
                reward = self.branch_rewards[next.pos as usize];
                next.status = ChainStatus::Branch;
            }
            _ => unreachable!("action range checked by caller"),
        }
        next.steps += 1;
        if next.status == ChainStatus::Running && next.steps >= self.max_steps {
            next.status = ChainStatus::CapHit;
        }
        let done = next.status != ChainStatus::Running;
        Ok((reward, next, done))
    }
}
