use super::dual::{
    DualNetModel, N_ENC_G, N_HEAD_PI, N_HEAD_V, N_UNROLL, S_ENC, S_HEAD_D, S_HEAD_OBS, S_HEAD_R,
    S_UNROLL,
};
use super::{compute_value_targets, SampledSequence};
use crate::error::{Error, Result};
use crate::nn::{self, Adam, MlpCache};

/// Loss strength multipliers.
#[derive(Debug, Clone, Copy)]
pub struct LossScales {
    pub reward: f64,
    pub done: f64,
    pub feature: f64,
    pub value: f64,
    pub policy: f64,
}

impl Default for LossScales {
    fn default() -> Self {
        LossScales {
            reward: 1.0,
            done: 1.0,
            feature: 10.0,
            value: 0.25,
            policy: 0.5,
        }
    }
}

/// Outcome of one training step.
#[derive(Debug, Clone)]
pub struct LossReport {
    pub stationary_loss: f64,
    pub nonstationary_loss: f64,
    /// Per-sequence refreshed priorities: |v_hat_root - target_root| from
    /// the pre-update model, keyed by the sequence's first-entry id.
    pub new_priorities: Vec<(u64, f64)>,
}

/// Everything recorded during a sequence forward pass, enough to replay the
/// chain rule backwards.
struct SeqForward {
    enc_s_cache: MlpCache,
    enc_g_caches: Vec<MlpCache>,  // index l = 0..=L (0 encodes the true root frame)
    un_n_caches: Vec<MlpCache>,   // l = 0..=L
    un_s_caches: Vec<MlpCache>,   // l = 1..=L (index l-1)
    head_obs_caches: Vec<MlpCache>,
    head_r_caches: Vec<MlpCache>,
    head_d_caches: Vec<MlpCache>,
    head_v_caches: Vec<MlpCache>, // l = 0..=L
    head_pi_caches: Vec<MlpCache>,
    r_hat: Vec<f64>,      // l = 1..=L (index l-1)
    d_logit: Vec<f64>,    // l = 1..=L
    v_hat: Vec<f64>,      // l = 0..=L
    pi_logits: Vec<Vec<f64>>, // l = 0..=L
    features: Vec<Vec<f64>>,  // g of the (true or predicted) frame, l = 0..=L
    feature_targets: Vec<Vec<f64>>, // g(true next frame), l = 1..=L (index l-1)
    value_targets: Vec<f64>,  // l = 0..=L
    mask_transition: Vec<bool>, // l = 1..=L (index l-1)
    mask_state: Vec<bool>,      // l = 0..=L
}

/// Per-sequence loss values (before importance weighting).
struct SeqLosses {
    stationary: f64,
    nonstationary: f64,
    priority: f64,
}

/// Trains the two sub-networks of a [`DualNetModel`]. Each side has its own
/// optimizer; a train step never moves parameters of the other side.
pub struct DualNetTrainer {
    model: DualNetModel,
    adam_stationary: Adam,
    adam_nonstationary: Adam,
    pub scales: LossScales,
    pub gamma: f64,
    pub unroll: usize,
}

impl DualNetTrainer {
    pub fn new(model: DualNetModel, lr: f64, scales: LossScales, gamma: f64, unroll: usize) -> Self {
        let n_stat = model.spec().stationary_param_count();
        let n_non = model.spec().nonstationary_param_count();
        DualNetTrainer {
            model,
            adam_stationary: Adam::new(lr, n_stat),
            adam_nonstationary: Adam::new(lr, n_non),
            scales,
            gamma,
            unroll,
        }
    }

    pub fn model(&self) -> &DualNetModel {
        &self.model
    }

    /// One optimisation step over a sampled batch. Returns batch-mean losses
    /// and the refreshed priorities.
    pub fn train_step(&mut self, batch: &[SampledSequence]) -> Result<LossReport> {
        let spec = self.model.spec().clone();
        let mut grad_stat = vec![0.0; spec.stationary_param_count()];
        let mut grad_non = vec![0.0; spec.nonstationary_param_count()];
        let mut stat_sum = 0.0;
        let mut non_sum = 0.0;
        let mut priorities = Vec::with_capacity(batch.len());
        for seq in batch {
            let fwd = forward_sequence(&self.model, seq, self.gamma, self.unroll)?;
            let losses = backward_sequence(
                &self.model,
                seq,
                &fwd,
                &self.scales,
                self.unroll,
                seq.weight,
                &mut grad_stat,
                &mut grad_non,
            )?;
            stat_sum += seq.weight * losses.stationary;
            non_sum += seq.weight * losses.nonstationary;
            priorities.push((seq.id, losses.priority));
        }
        let inv = 1.0 / batch.len().max(1) as f64;
        for g in grad_stat.iter_mut() {
            *g *= inv;
        }
        for g in grad_non.iter_mut() {
            *g *= inv;
        }
        let mut params = self.model.params().clone();
        self.adam_stationary.step(&mut params.stationary, &grad_stat);
        self.adam_nonstationary
            .step(&mut params.nonstationary, &grad_non);
        self.model = DualNetModel::from_params(spec, params);
        Ok(LossReport {
            stationary_loss: stat_sum * inv,
            nonstationary_loss: non_sum * inv,
            new_priorities: priorities,
        })
    }
}

/// Loss values for a single sequence without touching any state. The
/// finite-difference checks call this on perturbed parameter copies.
pub fn sequence_loss_values(
    model: &DualNetModel,
    seq: &SampledSequence,
    scales: &LossScales,
    gamma: f64,
    unroll: usize,
) -> Result<(f64, f64)> {
    let fwd = forward_sequence(model, seq, gamma, unroll)?;
    let (stat, non, _) = loss_terms(seq, &fwd, scales, unroll)?;
    Ok((stat, non))
}

/// Analytic gradients for a single sequence (weight 1), exposed for the
/// gradient checks.
pub fn sequence_loss_grads(
    model: &DualNetModel,
    seq: &SampledSequence,
    scales: &LossScales,
    gamma: f64,
    unroll: usize,
) -> Result<(f64, f64, Vec<f64>, Vec<f64>)> {
    let spec = model.spec();
    let mut grad_stat = vec![0.0; spec.stationary_param_count()];
    let mut grad_non = vec![0.0; spec.nonstationary_param_count()];
    let fwd = forward_sequence(model, seq, gamma, unroll)?;
    let losses = backward_sequence(
        model,
        seq,
        &fwd,
        scales,
        unroll,
        1.0,
        &mut grad_stat,
        &mut grad_non,
    )?;
    Ok((losses.stationary, losses.nonstationary, grad_stat, grad_non))
}

fn one_hot(n: usize, idx: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[idx] = 1.0;
    v
}

fn forward_sequence(
    model: &DualNetModel,
    seq: &SampledSequence,
    gamma: f64,
    unroll: usize,
) -> Result<SeqForward> {
    let spec = model.spec();
    let a = spec.action_count;
    let h = spec.hidden_dim;
    if seq.entries.len() < 2 * unroll + 1 {
        return Err(Error::SequenceTooShort {
            need: 2 * unroll + 1,
            got: seq.entries.len(),
        });
    }
    if seq.root_observation.len() != spec.obs_dim {
        return Err(Error::DimensionMismatch {
            what: "root observation",
            expected: spec.obs_dim,
            got: seq.root_observation.len(),
        });
    }

    let mut fwd = SeqForward {
        enc_s_cache: MlpCache::default(),
        enc_g_caches: Vec::with_capacity(unroll + 1),
        un_n_caches: Vec::with_capacity(unroll + 1),
        un_s_caches: Vec::with_capacity(unroll),
        head_obs_caches: Vec::with_capacity(unroll),
        head_r_caches: Vec::with_capacity(unroll),
        head_d_caches: Vec::with_capacity(unroll),
        head_v_caches: Vec::with_capacity(unroll + 1),
        head_pi_caches: Vec::with_capacity(unroll + 1),
        r_hat: Vec::with_capacity(unroll),
        d_logit: Vec::with_capacity(unroll),
        v_hat: Vec::with_capacity(unroll + 1),
        pi_logits: Vec::with_capacity(unroll + 1),
        features: Vec::with_capacity(unroll + 1),
        feature_targets: Vec::with_capacity(unroll),
        value_targets: compute_value_targets(&seq.entries, gamma, unroll)?,
        mask_transition: Vec::with_capacity(unroll),
        mask_state: Vec::with_capacity(unroll + 1),
    };

    // Masks: transition l is trainable while no episode boundary lies
    // strictly before it; state l additionally excludes terminal states.
    let mut boundary_before_state = false; // any done among entries[0..l]
    fwd.mask_state.push(true);
    for l in 1..=unroll {
        let boundary_before_transition = boundary_before_state;
        boundary_before_state = boundary_before_state || seq.entries[l - 1].done;
        fwd.mask_transition.push(!boundary_before_transition);
        fwd.mask_state.push(!boundary_before_state);
    }

    // Root step: encode the true frame on both sides.
    let mut x0 = seq.root_observation.clone();
    x0.extend(one_hot(a, seq.root_prev_action));
    let mut h_stat = nn::forward(
        &spec.enc_s(),
        model.stat_section(S_ENC),
        &x0,
        &mut fwd.enc_s_cache,
    );
    let mut cache = MlpCache::default();
    let g0 = nn::forward(&spec.enc_g(), model.nonstat_section(N_ENC_G), &x0, &mut cache);
    fwd.enc_g_caches.push(cache);
    let mut un_in = vec![0.0; h];
    un_in.extend(one_hot(a, seq.root_prev_action));
    un_in.extend(g0.iter().cloned());
    fwd.features.push(g0);
    let mut cache = MlpCache::default();
    let mut h_non = nn::forward(
        &spec.unroll_n(),
        model.nonstat_section(N_UNROLL),
        &un_in,
        &mut cache,
    );
    fwd.un_n_caches.push(cache);
    push_value_policy(model, &h_non, &mut fwd);

    for l in 1..=unroll {
        let action = seq.entries[l - 1].action;
        let mut us_in = h_stat.clone();
        us_in.extend(one_hot(a, action));
        let mut cache = MlpCache::default();
        h_stat = nn::forward(
            &spec.unroll_s(),
            model.stat_section(S_UNROLL),
            &us_in,
            &mut cache,
        );
        fwd.un_s_caches.push(cache);

        let mut cache = MlpCache::default();
        let predicted = nn::forward(
            &spec.head_obs(),
            model.stat_section(S_HEAD_OBS),
            &h_stat,
            &mut cache,
        );
        fwd.head_obs_caches.push(cache);

        let mut cache = MlpCache::default();
        let r = nn::forward(
            &spec.head_r(),
            model.stat_section(S_HEAD_R),
            &h_stat,
            &mut cache,
        )[0];
        fwd.head_r_caches.push(cache);
        fwd.r_hat.push(r);

        let mut cache = MlpCache::default();
        let d = nn::forward(
            &spec.head_d(),
            model.stat_section(S_HEAD_D),
            &h_stat,
            &mut cache,
        )[0];
        fwd.head_d_caches.push(cache);
        fwd.d_logit.push(d);

        // Predicted-frame features feed the non-stationary unroll.
        let mut xg = predicted.clone();
        xg.extend(one_hot(a, action));
        let mut cache = MlpCache::default();
        let gf = nn::forward(&spec.enc_g(), model.nonstat_section(N_ENC_G), &xg, &mut cache);
        fwd.enc_g_caches.push(cache);

        let mut un_in = h_non.clone();
        un_in.extend(one_hot(a, action));
        un_in.extend(gf.iter().cloned());
        fwd.features.push(gf);
        let mut cache = MlpCache::default();
        h_non = nn::forward(
            &spec.unroll_n(),
            model.nonstat_section(N_UNROLL),
            &un_in,
            &mut cache,
        );
        fwd.un_n_caches.push(cache);
        push_value_policy(model, &h_non, &mut fwd);

        // Feature target: the true next frame under the frozen encoder.
        let target = model.encode_features(&seq.entries[l - 1].next_state, action);
        fwd.feature_targets.push(target);
    }
    Ok(fwd)
}

fn push_value_policy(model: &DualNetModel, h_non: &[f64], fwd: &mut SeqForward) {
    let spec = model.spec();
    let mut cache = MlpCache::default();
    let v = nn::forward(
        &spec.head_v(),
        model.nonstat_section(N_HEAD_V),
        h_non,
        &mut cache,
    )[0];
    fwd.head_v_caches.push(cache);
    fwd.v_hat.push(v);
    let mut cache = MlpCache::default();
    let pi = nn::forward(
        &spec.head_pi(),
        model.nonstat_section(N_HEAD_PI),
        h_non,
        &mut cache,
    );
    fwd.head_pi_caches.push(cache);
    fwd.pi_logits.push(pi);
}

/// Loss values only (shared by the value path and the backward pass).
fn loss_terms(
    seq: &SampledSequence,
    fwd: &SeqForward,
    scales: &LossScales,
    unroll: usize,
) -> Result<(f64, f64, f64)> {
    let mut stationary = 0.0;
    for l in 1..=unroll {
        if !fwd.mask_transition[l - 1] {
            continue;
        }
        let e = &seq.entries[l - 1];
        let dr = fwd.r_hat[l - 1] - e.reward;
        stationary += scales.reward * dr * dr;
        let d_target = if e.done { 1.0 } else { 0.0 };
        let (ce, _) = nn::logistic_cross_entropy(fwd.d_logit[l - 1], d_target);
        stationary += scales.done * ce;
        let diff_sq: f64 = fwd.features[l]
            .iter()
            .zip(fwd.feature_targets[l - 1].iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        stationary += scales.feature * diff_sq;
    }
    check_finite("stationary", stationary)?;

    let mut nonstationary = 0.0;
    for l in 0..=unroll {
        if !fwd.mask_state[l] {
            continue;
        }
        let dv = fwd.v_hat[l] - fwd.value_targets[l];
        nonstationary += scales.value * dv * dv;
        let (ce, _) = nn::softmax_cross_entropy(&fwd.pi_logits[l], &seq.entries[l].action_dist);
        nonstationary += scales.policy * ce;
    }
    check_finite("nonstationary", nonstationary)?;

    let priority = (fwd.v_hat[0] - fwd.value_targets[0]).abs();
    Ok((stationary, nonstationary, priority))
}

fn check_finite(term: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteLoss { term, value })
    }
}

/// Backward pass: the stationary loss accumulates only into the stationary
/// gradient (the feature encoder is traversed but frozen), and the
/// non-stationary loss accumulates only into the non-stationary gradient
/// (predicted frames are treated as constants).
#[allow(clippy::too_many_arguments)]
fn backward_sequence(
    model: &DualNetModel,
    seq: &SampledSequence,
    fwd: &SeqForward,
    scales: &LossScales,
    unroll: usize,
    weight: f64,
    grad_stat: &mut [f64],
    grad_non: &mut [f64],
) -> Result<SeqLosses> {
    let spec = model.spec();
    let h = spec.hidden_dim;
    let (stationary, nonstationary, priority) = loss_terms(seq, fwd, scales, unroll)?;
    let stat_ranges = spec.stationary_ranges();
    let non_ranges = spec.nonstationary_ranges();

    // ---- Stationary side, backwards through the unroll chain.
    let mut dh_stat = vec![0.0; h];
    for l in (1..=unroll).rev() {
        if fwd.mask_transition[l - 1] {
            let e = &seq.entries[l - 1];
            // Reward head.
            let dr = weight * scales.reward * 2.0 * (fwd.r_hat[l - 1] - e.reward);
            let dh = nn::backward(
                &spec.head_r(),
                model.stat_section(S_HEAD_R),
                &fwd.head_r_caches[l - 1],
                &[dr],
                Some(&mut grad_stat[stat_ranges[S_HEAD_R].clone()]),
            );
            add(&mut dh_stat, &dh);
            // Termination head.
            let d_target = if e.done { 1.0 } else { 0.0 };
            let (_, dz) = nn::logistic_cross_entropy(fwd.d_logit[l - 1], d_target);
            let dh = nn::backward(
                &spec.head_d(),
                model.stat_section(S_HEAD_D),
                &fwd.head_d_caches[l - 1],
                &[weight * scales.done * dz],
                Some(&mut grad_stat[stat_ranges[S_HEAD_D].clone()]),
            );
            add(&mut dh_stat, &dh);
            // Feature loss: through the frozen feature encoder into the
            // predicted frame, then into the observation head.
            let dgf: Vec<f64> = fwd.features[l]
                .iter()
                .zip(fwd.feature_targets[l - 1].iter())
                .map(|(a, b)| weight * scales.feature * 2.0 * (a - b))
                .collect();
            let dxg = nn::backward(
                &spec.enc_g(),
                model.nonstat_section(N_ENC_G),
                &fwd.enc_g_caches[l],
                &dgf,
                None, // frozen: no gradient reaches the feature encoder here
            );
            let dpredicted = &dxg[..spec.obs_dim];
            let dh = nn::backward(
                &spec.head_obs(),
                model.stat_section(S_HEAD_OBS),
                &fwd.head_obs_caches[l - 1],
                dpredicted,
                Some(&mut grad_stat[stat_ranges[S_HEAD_OBS].clone()]),
            );
            add(&mut dh_stat, &dh);
        }
        // Through the unroll core to the previous hidden state.
        let dus_in = nn::backward(
            &spec.unroll_s(),
            model.stat_section(S_UNROLL),
            &fwd.un_s_caches[l - 1],
            &dh_stat,
            Some(&mut grad_stat[stat_ranges[S_UNROLL].clone()]),
        );
        dh_stat = dus_in[..h].to_vec();
    }
    nn::backward(
        &spec.enc_s(),
        model.stat_section(S_ENC),
        &fwd.enc_s_cache,
        &dh_stat,
        Some(&mut grad_stat[stat_ranges[S_ENC].clone()]),
    );

    // ---- Non-stationary side.
    let mut dh_non = vec![0.0; h];
    for l in (0..=unroll).rev() {
        if fwd.mask_state[l] {
            let dv = weight * scales.value * 2.0 * (fwd.v_hat[l] - fwd.value_targets[l]);
            let dh = nn::backward(
                &spec.head_v(),
                model.nonstat_section(N_HEAD_V),
                &fwd.head_v_caches[l],
                &[dv],
                Some(&mut grad_non[non_ranges[N_HEAD_V].clone()]),
            );
            add(&mut dh_non, &dh);
            let (_, mut dlogits) = nn::softmax_cross_entropy(&fwd.pi_logits[l], &seq.entries[l].action_dist);
            for g in dlogits.iter_mut() {
                *g *= weight * scales.policy;
            }
            let dh = nn::backward(
                &spec.head_pi(),
                model.nonstat_section(N_HEAD_PI),
                &fwd.head_pi_caches[l],
                &dlogits,
                Some(&mut grad_non[non_ranges[N_HEAD_PI].clone()]),
            );
            add(&mut dh_non, &dh);
        }
        // Through the unroll core: gradient splits into the previous hidden
        // state and the frame features.
        let dun_in = nn::backward(
            &spec.unroll_n(),
            model.nonstat_section(N_UNROLL),
            &fwd.un_n_caches[l],
            &dh_non,
            Some(&mut grad_non[non_ranges[N_UNROLL].clone()]),
        );
        let dgf = &dun_in[h + spec.action_count..];
        // Feature encoder learns from the value/policy path; the gradient
        // stops at the (true or predicted) frame behind it.
        nn::backward(
            &spec.enc_g(),
            model.nonstat_section(N_ENC_G),
            &fwd.enc_g_caches[l],
            dgf,
            Some(&mut grad_non[non_ranges[N_ENC_G].clone()]),
        );
        dh_non = dun_in[..h].to_vec();
        // At l = 0 the incoming hidden state is the zero vector: stop.
    }

    Ok(SeqLosses {
        stationary,
        nonstationary,
        priority,
    })
}

fn add(acc: &mut [f64], inc: &[f64]) {
    for (a, b) in acc.iter_mut().zip(inc.iter()) {
        *a += b;
    }
}
