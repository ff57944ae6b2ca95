use super::{HiddenState, OutputStats, WorldModel};
use crate::env::RawState;
use crate::error::{Error, Result};
use crate::nn::{self, MlpCache, MlpSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::ops::Range;

/// Shape of the learned model. Both sub-networks are 2-hidden-layer
/// softplus MLPs of width `hidden_dim`; every output head is a single
/// linear layer initialised to zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DualNetSpec {
    pub obs_dim: usize,
    pub action_count: usize,
    pub hidden_dim: usize,
}

impl DualNetSpec {
    pub fn new(obs_dim: usize, action_count: usize, hidden_dim: usize) -> Self {
        DualNetSpec {
            obs_dim,
            action_count,
            hidden_dim,
        }
    }

    // Stationary side: state encoder, unroll core, reward / termination /
    // next-observation heads.
    pub(crate) fn enc_s(&self) -> MlpSpec {
        let h = self.hidden_dim;
        MlpSpec::new(&[self.obs_dim + self.action_count, h, h, h])
    }
    pub(crate) fn unroll_s(&self) -> MlpSpec {
        let h = self.hidden_dim;
        MlpSpec::new(&[h + self.action_count, h, h, h])
    }
    pub(crate) fn head_r(&self) -> MlpSpec {
        MlpSpec::new(&[self.hidden_dim, 1])
    }
    pub(crate) fn head_d(&self) -> MlpSpec {
        MlpSpec::new(&[self.hidden_dim, 1])
    }
    pub(crate) fn head_obs(&self) -> MlpSpec {
        MlpSpec::new(&[self.hidden_dim, self.obs_dim])
    }

    // Non-stationary side: feature encoder g, unroll core consuming
    // (hidden, action, encoded frame), value / policy heads.
    pub(crate) fn enc_g(&self) -> MlpSpec {
        let h = self.hidden_dim;
        MlpSpec::new(&[self.obs_dim + self.action_count, h, h, h])
    }
    pub(crate) fn unroll_n(&self) -> MlpSpec {
        let h = self.hidden_dim;
        MlpSpec::new(&[h + self.action_count + h, h, h, h])
    }
    pub(crate) fn head_v(&self) -> MlpSpec {
        MlpSpec::new(&[self.hidden_dim, 1])
    }
    pub(crate) fn head_pi(&self) -> MlpSpec {
        MlpSpec::new(&[self.hidden_dim, self.action_count])
    }

    fn ranges(specs: &[MlpSpec]) -> Vec<Range<usize>> {
        let mut out = Vec::with_capacity(specs.len());
        let mut off = 0;
        for s in specs {
            out.push(off..off + s.param_count());
            off += s.param_count();
        }
        out
    }

    pub(crate) fn stationary_ranges(&self) -> Vec<Range<usize>> {
        Self::ranges(&[
            self.enc_s(),
            self.unroll_s(),
            self.head_r(),
            self.head_d(),
            self.head_obs(),
        ])
    }

    pub(crate) fn nonstationary_ranges(&self) -> Vec<Range<usize>> {
        Self::ranges(&[self.enc_g(), self.unroll_n(), self.head_v(), self.head_pi()])
    }

    pub fn stationary_param_count(&self) -> usize {
        self.stationary_ranges().last().unwrap().end
    }

    pub fn nonstationary_param_count(&self) -> usize {
        self.nonstationary_ranges().last().unwrap().end
    }
}

/// Two disjoint parameter vectors. Each is owned by its own optimizer;
/// a gradient from one loss never touches the other set.
#[derive(Debug, Clone, PartialEq)]
pub struct DualNetParams {
    pub stationary: Vec<f64>,
    pub nonstationary: Vec<f64>,
}

// Section indices within each parameter vector.
pub(crate) const S_ENC: usize = 0;
pub(crate) const S_UNROLL: usize = 1;
pub(crate) const S_HEAD_R: usize = 2;
pub(crate) const S_HEAD_D: usize = 3;
pub(crate) const S_HEAD_OBS: usize = 4;
pub(crate) const N_ENC_G: usize = 0;
pub(crate) const N_UNROLL: usize = 1;
pub(crate) const N_HEAD_V: usize = 2;
pub(crate) const N_HEAD_PI: usize = 3;

/// The learned world model. Inference is a deterministic pure function of
/// the parameters; training lives in [`super::DualNetTrainer`].
#[derive(Clone)]
pub struct DualNetModel {
    spec: DualNetSpec,
    params: DualNetParams,
}

impl DualNetModel {
    /// Fresh model: trunks Xavier-initialised from the seed, output heads
    /// zeroed so early predictions are neutral.
    pub fn new(spec: DualNetSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut stationary = Vec::with_capacity(spec.stationary_param_count());
        spec.enc_s().init(&mut rng, &mut stationary);
        spec.unroll_s().init(&mut rng, &mut stationary);
        spec.head_r().init_zero(&mut stationary);
        spec.head_d().init_zero(&mut stationary);
        spec.head_obs().init_zero(&mut stationary);
        let mut nonstationary = Vec::with_capacity(spec.nonstationary_param_count());
        spec.enc_g().init(&mut rng, &mut nonstationary);
        spec.unroll_n().init(&mut rng, &mut nonstationary);
        spec.head_v().init_zero(&mut nonstationary);
        spec.head_pi().init_zero(&mut nonstationary);
        DualNetModel {
            spec,
            params: DualNetParams {
                stationary,
                nonstationary,
            },
        }
    }

    pub fn from_params(spec: DualNetSpec, params: DualNetParams) -> Self {
        assert_eq!(params.stationary.len(), spec.stationary_param_count());
        assert_eq!(params.nonstationary.len(), spec.nonstationary_param_count());
        DualNetModel { spec, params }
    }

    pub fn spec(&self) -> &DualNetSpec {
        &self.spec
    }

    pub fn params(&self) -> &DualNetParams {
        &self.params
    }

    pub(crate) fn stat_section(&self, idx: usize) -> &[f64] {
        &self.params.stationary[self.spec.stationary_ranges()[idx].clone()]
    }

    pub(crate) fn nonstat_section(&self, idx: usize) -> &[f64] {
        &self.params.nonstationary[self.spec.nonstationary_ranges()[idx].clone()]
    }

    fn one_hot(&self, action: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.spec.action_count];
        v[action] = 1.0;
        v
    }

    /// g(frame, prev action): the non-stationary feature encoding.
    pub(crate) fn encode_features(&self, frame: &[f64], prev_action: usize) -> Vec<f64> {
        let mut input = frame.to_vec();
        input.extend(self.one_hot(prev_action));
        let mut cache = MlpCache::default();
        nn::forward(
            &self.spec.enc_g(),
            self.nonstat_section(N_ENC_G),
            &input,
            &mut cache,
        )
    }

    fn predict_parts(&self, stationary: &[f64], nonstationary: &[f64]) -> OutputStats {
        let mut cache = MlpCache::default();
        let r = nn::forward(
            &self.spec.head_r(),
            self.stat_section(S_HEAD_R),
            stationary,
            &mut cache,
        )[0];
        let d_logit = nn::forward(
            &self.spec.head_d(),
            self.stat_section(S_HEAD_D),
            stationary,
            &mut cache,
        )[0];
        let v = nn::forward(
            &self.spec.head_v(),
            self.nonstat_section(N_HEAD_V),
            nonstationary,
            &mut cache,
        )[0];
        let pi_logits = nn::forward(
            &self.spec.head_pi(),
            self.nonstat_section(N_HEAD_PI),
            nonstationary,
            &mut cache,
        );
        OutputStats {
            reward: r,
            done_prob: nn::sigmoid(d_logit),
            value: v,
            policy: nn::softmax(&pi_logits),
        }
    }
}

impl WorldModel for DualNetModel {
    fn encode(&self, state: &RawState, prev_action: usize) -> Result<HiddenState> {
        if state.observation.len() != self.spec.obs_dim {
            return Err(Error::DimensionMismatch {
                what: "observation",
                expected: self.spec.obs_dim,
                got: state.observation.len(),
            });
        }
        let mut cache = MlpCache::default();
        let mut input = state.observation.clone();
        input.extend(self.one_hot(prev_action));
        let h_stat = nn::forward(
            &self.spec.enc_s(),
            self.stat_section(S_ENC),
            &input,
            &mut cache,
        );
        let features = self.encode_features(&state.observation, prev_action);
        let mut un_in = vec![0.0; self.spec.hidden_dim];
        un_in.extend(self.one_hot(prev_action));
        un_in.extend(features);
        let h_non = nn::forward(
            &self.spec.unroll_n(),
            self.nonstat_section(N_UNROLL),
            &un_in,
            &mut cache,
        );
        Ok(HiddenState::Learned {
            stationary: h_stat,
            nonstationary: h_non,
            predicted_observation: None,
        })
    }

    fn unroll(&self, hidden: &HiddenState, action: usize) -> Result<HiddenState> {
        let (h_stat, h_non) = match hidden {
            HiddenState::Learned {
                stationary,
                nonstationary,
                ..
            } => (stationary, nonstationary),
            HiddenState::Oracle { .. } => {
                return Err(Error::InvalidEncoding(
                    "oracle hidden state passed to learned model".into(),
                ))
            }
        };
        if action >= self.spec.action_count {
            return Err(Error::ActionOutOfRange {
                action,
                action_count: self.spec.action_count,
            });
        }
        let mut cache = MlpCache::default();
        let mut us_in = h_stat.clone();
        us_in.extend(self.one_hot(action));
        let h_stat_next = nn::forward(
            &self.spec.unroll_s(),
            self.stat_section(S_UNROLL),
            &us_in,
            &mut cache,
        );
        let predicted = nn::forward(
            &self.spec.head_obs(),
            self.stat_section(S_HEAD_OBS),
            &h_stat_next,
            &mut cache,
        );
        let features = self.encode_features(&predicted, action);
        let mut un_in = h_non.clone();
        un_in.extend(self.one_hot(action));
        un_in.extend(features);
        let h_non_next = nn::forward(
            &self.spec.unroll_n(),
            self.nonstat_section(N_UNROLL),
            &un_in,
            &mut cache,
        );
        Ok(HiddenState::Learned {
            stationary: h_stat_next,
            nonstationary: h_non_next,
            predicted_observation: Some(predicted),
        })
    }

    fn predict(&self, hidden: &HiddenState) -> OutputStats {
        match hidden {
            HiddenState::Learned {
                stationary,
                nonstationary,
                ..
            } => self.predict_parts(stationary, nonstationary),
            HiddenState::Oracle { .. } => unreachable!("learned model with oracle hidden"),
        }
    }

    fn action_count(&self) -> usize {
        self.spec.action_count
    }

    fn observation_dim(&self) -> usize {
        self.spec.obs_dim
    }

    fn agent_view(&self, hidden: &HiddenState) -> Vec<f64> {
        match hidden {
            HiddenState::Learned {
                stationary,
                nonstationary,
                ..
            } => {
                let mut v = stationary.clone();
                v.extend_from_slice(nonstationary);
                v
            }
            HiddenState::Oracle { .. } => unreachable!("learned model with oracle hidden"),
        }
    }

    fn agent_view_dim(&self) -> usize {
        2 * self.spec.hidden_dim
    }
}

/// The non-stationary half of a dual network exposed as an [`super::Evaluator`]:
/// value and policy for an observation, ignoring the stationary side. Used
/// where a frozen policy-evaluation network stands in for value estimates
/// while the true dynamics provide transitions.
pub struct NonStationaryEvaluator {
    model: DualNetModel,
}

impl NonStationaryEvaluator {
    pub fn new(model: DualNetModel) -> Self {
        NonStationaryEvaluator { model }
    }

    pub fn model(&self) -> &DualNetModel {
        &self.model
    }
}

impl super::Evaluator for NonStationaryEvaluator {
    fn evaluate(&self, observation: &[f64], prev_action: usize) -> (f64, Vec<f64>) {
        let spec = self.model.spec();
        let features = self.model.encode_features(observation, prev_action);
        let mut un_in = vec![0.0; spec.hidden_dim];
        let mut one_hot = vec![0.0; spec.action_count];
        one_hot[prev_action] = 1.0;
        un_in.extend(one_hot);
        un_in.extend(features);
        let mut cache = MlpCache::default();
        let h_non = nn::forward(
            &spec.unroll_n(),
            self.model.nonstat_section(N_UNROLL),
            &un_in,
            &mut cache,
        );
        let v = nn::forward(
            &spec.head_v(),
            self.model.nonstat_section(N_HEAD_V),
            &h_non,
            &mut cache,
        )[0];
        let pi_logits = nn::forward(
            &spec.head_pi(),
            self.model.nonstat_section(N_HEAD_PI),
            &h_non,
            &mut cache,
        );
        (v, nn::softmax(&pi_logits))
    }
}
