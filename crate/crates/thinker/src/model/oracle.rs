use super::{HiddenState, OutputStats, WorldModel};
use crate::env::{oracle_transition, EnvSpec, RawState, StateEncoding};
use crate::error::{Error, Result};
use std::sync::Arc;

/// Pluggable value/policy source for the oracle model: the oracle knows the
/// exact dynamics (rewards, termination, next states) but values and action
/// distributions must come from somewhere else — a table, a frozen learned
/// network, or a neutral constant.
pub trait Evaluator: Send + Sync {
    /// Value and action distribution for an observation, conditioned on the
    /// action that led into it.
    fn evaluate(&self, observation: &[f64], prev_action: usize) -> (f64, Vec<f64>);
}

/// v = 0 everywhere and a uniform policy: the neutral default.
pub struct UniformZeroEvaluator {
    pub action_count: usize,
}

impl Evaluator for UniformZeroEvaluator {
    fn evaluate(&self, _observation: &[f64], _prev_action: usize) -> (f64, Vec<f64>) {
        (
            0.0,
            vec![1.0 / self.action_count as f64; self.action_count],
        )
    }
}

/// Per-state table lookup keyed by the argmax of a one-hot observation.
/// Handy for hand-built fixtures on the chain environment.
pub struct TableEvaluator {
    pub values: Vec<f64>,
    pub policy: Vec<f64>,
}

impl Evaluator for TableEvaluator {
    fn evaluate(&self, observation: &[f64], _prev_action: usize) -> (f64, Vec<f64>) {
        let idx = observation
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0);
        (self.values[idx], self.policy.clone())
    }
}

/// Exact world model: hidden states are compact environment encodings, so
/// rewards, termination flags and predicted observations reproduce the
/// ground truth exactly. Values and policies come from the evaluator; the
/// value is forced to 0 on terminal states.
pub struct OracleModel {
    spec: Arc<EnvSpec>,
    evaluator: Arc<dyn Evaluator>,
}

impl OracleModel {
    pub fn new(spec: Arc<EnvSpec>, evaluator: Arc<dyn Evaluator>) -> Self {
        OracleModel { spec, evaluator }
    }

    pub fn with_neutral_evaluator(spec: Arc<EnvSpec>) -> Self {
        let action_count = spec.action_count();
        OracleModel::new(spec, Arc::new(UniformZeroEvaluator { action_count }))
    }

    pub fn env_spec(&self) -> &Arc<EnvSpec> {
        &self.spec
    }

    /// Recover the compact encoding from a hidden state.
    pub fn decode(&self, hidden: &HiddenState) -> Result<StateEncoding> {
        match hidden {
            HiddenState::Oracle { encoding, .. } => Ok(*encoding),
            HiddenState::Learned { .. } => Err(Error::InvalidEncoding(
                "learned hidden state passed to oracle model".into(),
            )),
        }
    }
}

impl WorldModel for OracleModel {
    fn encode(&self, state: &RawState, _prev_action: usize) -> Result<HiddenState> {
        if state.observation.len() != self.spec.observation_dim() {
            return Err(Error::DimensionMismatch {
                what: "observation",
                expected: self.spec.observation_dim(),
                got: state.observation.len(),
            });
        }
        Ok(HiddenState::Oracle {
            encoding: state.internal,
            last_reward: 0.0,
            last_done: self.spec.is_terminal(&state.internal),
            predicted_observation: None,
        })
    }

    fn unroll(&self, hidden: &HiddenState, action: usize) -> Result<HiddenState> {
        let enc = self.decode(hidden)?;
        let (reward, next, done) = oracle_transition(&self.spec, &enc, action)?;
        Ok(HiddenState::Oracle {
            encoding: next,
            last_reward: reward,
            last_done: done,
            predicted_observation: Some(self.spec.observation(&next)),
        })
    }

    fn predict(&self, hidden: &HiddenState) -> OutputStats {
        let (encoding, last_reward, last_done) = match hidden {
            HiddenState::Oracle {
                encoding,
                last_reward,
                last_done,
                ..
            } => (encoding, *last_reward, *last_done),
            HiddenState::Learned { .. } => unreachable!("oracle model with learned hidden"),
        };
        let obs = self.spec.observation(encoding);
        let (value, policy) = self.evaluator.evaluate(&obs, 0);
        OutputStats {
            reward: last_reward,
            done_prob: if last_done { 1.0 } else { 0.0 },
            // No rewards remain after termination.
            value: if last_done { 0.0 } else { value },
            policy,
        }
    }

    fn action_count(&self) -> usize {
        self.spec.action_count()
    }

    fn observation_dim(&self) -> usize {
        self.spec.observation_dim()
    }

    fn agent_view(&self, hidden: &HiddenState) -> Vec<f64> {
        // Expose the encoding as a small normalised vector.
        match hidden {
            HiddenState::Oracle { encoding, .. } => match encoding {
                StateEncoding::Chain(e) => vec![
                    e.pos as f64 / 16.0,
                    e.steps as f64 / 64.0,
                    if self.spec.is_terminal(encoding) { 1.0 } else { 0.0 },
                ],
                StateEncoding::MiniBox(e) => {
                    let mut v = vec![
                        e.agent as f64 / 64.0,
                        e.steps as f64 / 128.0,
                        if self.spec.is_terminal(encoding) { 1.0 } else { 0.0 },
                    ];
                    let mut boxes = e.boxes;
                    for _ in 0..4 {
                        let cell = boxes.trailing_zeros().min(64);
                        v.push(if cell < 64 { cell as f64 / 64.0 } else { -1.0 });
                        if cell < 64 {
                            boxes &= !(1u64 << cell);
                        }
                    }
                    v
                }
            },
            HiddenState::Learned { .. } => unreachable!("oracle model with learned hidden"),
        }
    }

    fn agent_view_dim(&self) -> usize {
        match self.spec.as_ref() {
            EnvSpec::Chain(_) => 3,
            EnvSpec::MiniBox(_) => 7,
        }
    }
}
