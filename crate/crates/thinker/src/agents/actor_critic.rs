use super::{argmax, sample_index, AugmentedPolicy, StepContext};
use crate::error::{Error, Result};
use crate::nn::{self, Adam, MlpCache, MlpSpec};
use crate::wrapper::AugmentedAction;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

/// What the network reads as its observation branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentInput {
    /// The augmented tree-statistics vector, optionally with the model's
    /// hidden-state view.
    TreeStats { use_hidden: bool },
    /// The raw observation (baseline agents on the raw MDP).
    RawObservation,
}

/// Network shape: two sub-trunks (statistics and hidden state) whose
/// features are concatenated with the one-hot previous sub-actions and the
/// previous reward pair, then read by zero-initialised linear heads for the
/// three policies and the two-component value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AcSpec {
    pub stats_dim: usize,
    /// 0 withholds the hidden branch entirely.
    pub hidden_dim: usize,
    pub action_count: usize,
    pub trunk_width: usize,
}

impl AcSpec {
    pub fn new(stats_dim: usize, hidden_dim: usize, action_count: usize) -> Self {
        AcSpec {
            stats_dim,
            hidden_dim,
            action_count,
            trunk_width: 64,
        }
    }

    fn stats_trunk(&self) -> MlpSpec {
        let w = self.trunk_width;
        MlpSpec::new(&[self.stats_dim, w, w])
    }

    fn hidden_trunk(&self) -> Option<MlpSpec> {
        if self.hidden_dim == 0 {
            None
        } else {
            let w = self.trunk_width;
            Some(MlpSpec::new(&[self.hidden_dim, w, w]))
        }
    }

    /// Concatenated feature width feeding the heads.
    fn concat_dim(&self) -> usize {
        let trunks = self.trunk_width + if self.hidden_dim == 0 { 0 } else { self.trunk_width };
        trunks + 2 * self.action_count + 2 + 2
    }

    fn head_real(&self) -> MlpSpec {
        MlpSpec::new(&[self.concat_dim(), self.action_count])
    }
    fn head_imaginary(&self) -> MlpSpec {
        MlpSpec::new(&[self.concat_dim(), self.action_count])
    }
    fn head_reset(&self) -> MlpSpec {
        MlpSpec::new(&[self.concat_dim(), 2])
    }
    fn head_value(&self) -> MlpSpec {
        MlpSpec::new(&[self.concat_dim(), 2])
    }

    fn sections(&self) -> Vec<(MlpSpec, bool)> {
        // (spec, zero_init)
        let mut out = vec![(self.stats_trunk(), false)];
        if let Some(h) = self.hidden_trunk() {
            out.push((h, false));
        }
        out.push((self.head_real(), true));
        out.push((self.head_imaginary(), true));
        out.push((self.head_reset(), true));
        out.push((self.head_value(), true));
        out
    }

    fn ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut off = 0;
        self.sections()
            .iter()
            .map(|(s, _)| {
                let r = off..off + s.param_count();
                off += s.param_count();
                r
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.sections().iter().map(|(s, _)| s.param_count()).sum()
    }

    pub fn init_params(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(self.param_count());
        for (spec, zero) in self.sections() {
            if zero {
                spec.init_zero(&mut params);
            } else {
                spec.init(&mut rng, &mut params);
            }
        }
        params
    }
}

/// Loss hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct AcConfig {
    pub entropy_real: f64,
    pub entropy_imaginary: f64,
    pub baseline_scale: f64,
    pub clip_norm: f64,
    pub lr: f64,
}

impl Default for AcConfig {
    fn default() -> Self {
        AcConfig {
            entropy_real: 1e-3,
            entropy_imaginary: 5e-5,
            baseline_scale: 0.5,
            clip_norm: 1200.0,
            lr: 3e-4,
        }
    }
}

/// One augmented step as the learner sees it.
#[derive(Debug, Clone)]
pub struct TrajStep {
    pub stats: Vec<f64>,
    pub hidden: Vec<f64>,
    pub prev_action: (usize, usize, bool),
    pub prev_reward: (f64, f64),
    pub action: (usize, usize, bool),
    pub reward: (f64, f64),
    pub done: bool,
    /// Step number executed (1..=K); the real step is k == K.
    pub k: usize,
}

/// Inputs of the state following the last step, for bootstrapping.
#[derive(Debug, Clone)]
pub struct Bootstrap {
    pub stats: Vec<f64>,
    pub hidden: Vec<f64>,
    pub prev_action: (usize, usize, bool),
    pub prev_reward: (f64, f64),
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub steps: Vec<TrajStep>,
    pub bootstrap: Bootstrap,
    pub planning_steps: usize,
}

/// Forward outputs for one input.
#[derive(Debug, Clone)]
pub struct ForwardOut {
    pub logits_real: Vec<f64>,
    pub logits_imaginary: Vec<f64>,
    pub logits_reset: Vec<f64>,
    pub value_raw: f64,
    pub value_planning: f64,
}

impl ForwardOut {
    pub fn pi_real(&self) -> Vec<f64> {
        nn::softmax(&self.logits_real)
    }
    pub fn pi_imaginary(&self) -> Vec<f64> {
        nn::softmax(&self.logits_imaginary)
    }
    pub fn pi_reset(&self) -> Vec<f64> {
        nn::softmax(&self.logits_reset)
    }
}

struct ForwardCache {
    stats_cache: MlpCache,
    hidden_cache: MlpCache,
    concat: Vec<f64>,
    head_caches: [MlpCache; 4],
    out: ForwardOut,
}

fn one_hot(n: usize, idx: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[idx] = 1.0;
    v
}

fn forward_cached(
    spec: &AcSpec,
    params: &[f64],
    stats: &[f64],
    hidden: &[f64],
    prev_action: (usize, usize, bool),
    prev_reward: (f64, f64),
) -> ForwardCache {
    let ranges = spec.ranges();
    let mut stats_cache = MlpCache::default();
    let f_stats = nn::forward(
        &spec.stats_trunk(),
        &params[ranges[0].clone()],
        stats,
        &mut stats_cache,
    );
    let mut concat = f_stats;
    let mut hidden_cache = MlpCache::default();
    let mut idx = 1;
    if let Some(hspec) = spec.hidden_trunk() {
        let f_hidden = nn::forward(&hspec, &params[ranges[idx].clone()], hidden, &mut hidden_cache);
        concat.extend(f_hidden);
        idx += 1;
    }
    let a = spec.action_count;
    concat.extend(one_hot(a, prev_action.0));
    concat.extend(one_hot(a, prev_action.1));
    concat.extend(one_hot(2, prev_action.2 as usize));
    concat.push(prev_reward.0);
    concat.push(prev_reward.1);

    let mut head_caches = [
        MlpCache::default(),
        MlpCache::default(),
        MlpCache::default(),
        MlpCache::default(),
    ];
    let logits_real = nn::forward(
        &spec.head_real(),
        &params[ranges[idx].clone()],
        &concat,
        &mut head_caches[0],
    );
    let logits_imaginary = nn::forward(
        &spec.head_imaginary(),
        &params[ranges[idx + 1].clone()],
        &concat,
        &mut head_caches[1],
    );
    let logits_reset = nn::forward(
        &spec.head_reset(),
        &params[ranges[idx + 2].clone()],
        &concat,
        &mut head_caches[2],
    );
    let value = nn::forward(
        &spec.head_value(),
        &params[ranges[idx + 3].clone()],
        &concat,
        &mut head_caches[3],
    );
    ForwardCache {
        stats_cache,
        hidden_cache,
        concat,
        head_caches,
        out: ForwardOut {
            logits_real,
            logits_imaginary,
            logits_reset,
            value_raw: value[0],
            value_planning: value[1],
        },
    }
}

/// Policy distributions and values for one augmented state. Deterministic.
pub fn ac_forward(
    spec: &AcSpec,
    params: &[f64],
    stats: &[f64],
    hidden: &[f64],
    prev_action: (usize, usize, bool),
    prev_reward: (f64, f64),
) -> Result<ForwardOut> {
    if stats.len() != spec.stats_dim {
        return Err(Error::DimensionMismatch {
            what: "agent stats input",
            expected: spec.stats_dim,
            got: stats.len(),
        });
    }
    if hidden.len() != spec.hidden_dim {
        return Err(Error::DimensionMismatch {
            what: "agent hidden input",
            expected: spec.hidden_dim,
            got: hidden.len(),
        });
    }
    Ok(forward_cached(spec, params, stats, hidden, prev_action, prev_reward).out)
}

/// Value targets and advantages for both reward streams, treated as
/// constants by the policy-gradient terms.
#[derive(Debug, Clone)]
pub struct Targets {
    pub return_raw: Vec<f64>,
    pub return_planning: Vec<f64>,
    pub adv_raw: Vec<f64>,
    pub adv_planning: Vec<f64>,
}

/// n-step returns under the augmented discount. The raw stream truncates at
/// episode ends and bootstraps from the raw value head; the planning stream
/// treats each planning stage as an episode, so it truncates at every real
/// step and bootstraps only when the trajectory is cut mid-stage.
pub fn ac_targets(
    spec: &AcSpec,
    params: &[f64],
    traj: &Trajectory,
    gamma_tilde: f64,
) -> Result<Targets> {
    let n = traj.steps.len();
    let boot = &traj.bootstrap;
    let boot_out = ac_forward(
        spec,
        params,
        &boot.stats,
        &boot.hidden,
        boot.prev_action,
        boot.prev_reward,
    )?;
    let mut return_raw = vec![0.0; n];
    let mut return_planning = vec![0.0; n];
    let mut adv_raw = vec![0.0; n];
    let mut adv_planning = vec![0.0; n];
    let mut chain_raw = boot_out.value_raw;
    let mut chain_plan = boot_out.value_planning;
    for j in (0..n).rev() {
        let step = &traj.steps[j];
        let stage_end = step.k == traj.planning_steps;
        chain_raw = step.reward.0 + gamma_tilde * if step.done { 0.0 } else { chain_raw };
        chain_plan = step.reward.1 + gamma_tilde * if stage_end { 0.0 } else { chain_plan };
        return_raw[j] = chain_raw;
        return_planning[j] = chain_plan;
        let out = ac_forward(
            spec,
            params,
            &step.stats,
            &step.hidden,
            step.prev_action,
            step.prev_reward,
        )?;
        adv_raw[j] = chain_raw - out.value_raw;
        adv_planning[j] = chain_plan - out.value_planning;
    }
    Ok(Targets {
        return_raw,
        return_planning,
        adv_raw,
        adv_planning,
    })
}

/// Loss with fixed targets, plus analytic gradients. Imaginary and reset
/// policy terms appear only on imaginary steps with the summed advantage;
/// the real policy term appears only on real steps with the raw advantage;
/// the critic regresses both heads everywhere.
pub fn ac_loss_with_targets(
    spec: &AcSpec,
    params: &[f64],
    cfg: &AcConfig,
    traj: &Trajectory,
    targets: &Targets,
    grads: Option<&mut [f64]>,
) -> Result<f64> {
    let ranges = spec.ranges();
    let hidden_present = spec.hidden_dim > 0;
    let head_base = if hidden_present { 2 } else { 1 };
    let mut total = 0.0;
    let mut grad_buf = grads;
    for (j, step) in traj.steps.iter().enumerate() {
        let fwd = forward_cached(
            spec,
            params,
            &step.stats,
            &step.hidden,
            step.prev_action,
            step.prev_reward,
        );
        let real_step = step.k == traj.planning_steps;
        let mut dlogits_real = vec![0.0; spec.action_count];
        let mut dlogits_im = vec![0.0; spec.action_count];
        let mut dlogits_reset = vec![0.0; 2];

        if real_step {
            let adv = targets.adv_raw[j];
            let lse = nn::log_sum_exp(&fwd.out.logits_real);
            total -= adv * (fwd.out.logits_real[step.action.0] - lse);
            let pi = fwd.out.pi_real();
            for (a, d) in dlogits_real.iter_mut().enumerate() {
                *d += adv * (pi[a] - if a == step.action.0 { 1.0 } else { 0.0 });
            }
            let (h, dh) = nn::softmax_entropy(&fwd.out.logits_real);
            total -= cfg.entropy_real * h;
            for (d, g) in dlogits_real.iter_mut().zip(dh.iter()) {
                *d -= cfg.entropy_real * g;
            }
        } else {
            let adv = targets.adv_raw[j] + targets.adv_planning[j];
            let lse_im = nn::log_sum_exp(&fwd.out.logits_imaginary);
            total -= adv * (fwd.out.logits_imaginary[step.action.1] - lse_im);
            let pi_im = fwd.out.pi_imaginary();
            for (a, d) in dlogits_im.iter_mut().enumerate() {
                *d += adv * (pi_im[a] - if a == step.action.1 { 1.0 } else { 0.0 });
            }
            let reset_idx = step.action.2 as usize;
            let lse_reset = nn::log_sum_exp(&fwd.out.logits_reset);
            total -= adv * (fwd.out.logits_reset[reset_idx] - lse_reset);
            let pi_reset = fwd.out.pi_reset();
            for (a, d) in dlogits_reset.iter_mut().enumerate() {
                *d += adv * (pi_reset[a] - if a == reset_idx { 1.0 } else { 0.0 });
            }
            let (h_im, dh_im) = nn::softmax_entropy(&fwd.out.logits_imaginary);
            let (h_reset, dh_reset) = nn::softmax_entropy(&fwd.out.logits_reset);
            total -= cfg.entropy_imaginary * (h_im + h_reset);
            for (d, g) in dlogits_im.iter_mut().zip(dh_im.iter()) {
                *d -= cfg.entropy_imaginary * g;
            }
            for (d, g) in dlogits_reset.iter_mut().zip(dh_reset.iter()) {
                *d -= cfg.entropy_imaginary * g;
            }
        }

        let dv_raw = fwd.out.value_raw - targets.return_raw[j];
        let dv_plan = fwd.out.value_planning - targets.return_planning[j];
        total += cfg.baseline_scale * (dv_raw * dv_raw + dv_plan * dv_plan);

        if !total.is_finite() {
            return Err(Error::NonFiniteLoss {
                term: "actor-critic",
                value: total,
            });
        }

        if let Some(grad) = grad_buf.as_deref_mut() {
            let mut dconcat = vec![0.0; fwd.concat.len()];
            let dvalue = vec![
                cfg.baseline_scale * 2.0 * dv_raw,
                cfg.baseline_scale * 2.0 * dv_plan,
            ];
            let head_specs = [
                spec.head_real(),
                spec.head_imaginary(),
                spec.head_reset(),
                spec.head_value(),
            ];
            let douts = [&dlogits_real, &dlogits_im, &dlogits_reset, &dvalue];
            for (i, head_spec) in head_specs.iter().enumerate() {
                if douts[i].iter().all(|&d| d == 0.0) {
                    continue;
                }
                let section = head_base + i;
                let dc = nn::backward(
                    head_spec,
                    &params[ranges[section].clone()],
                    &fwd.head_caches[i],
                    douts[i],
                    Some(&mut grad[ranges[section].clone()]),
                );
                for (acc, d) in dconcat.iter_mut().zip(dc.iter()) {
                    *acc += d;
                }
            }
            let w = spec.trunk_width;
            nn::backward(
                &spec.stats_trunk(),
                &params[ranges[0].clone()],
                &fwd.stats_cache,
                &dconcat[..w],
                Some(&mut grad[ranges[0].clone()]),
            );
            if hidden_present {
                nn::backward(
                    &spec.hidden_trunk().unwrap(),
                    &params[ranges[1].clone()],
                    &fwd.hidden_cache,
                    &dconcat[w..2 * w],
                    Some(&mut grad[ranges[1].clone()]),
                );
            }
        }
    }
    Ok(total)
}

/// Full loss: compute stop-gradient targets, then the differentiable loss
/// and its gradients.
pub fn ac_loss(
    spec: &AcSpec,
    params: &[f64],
    cfg: &AcConfig,
    traj: &Trajectory,
    gamma_tilde: f64,
) -> Result<(f64, Vec<f64>, Targets)> {
    let targets = ac_targets(spec, params, traj, gamma_tilde)?;
    let mut grads = vec![0.0; spec.param_count()];
    let loss = ac_loss_with_targets(spec, params, cfg, traj, &targets, Some(&mut grads))?;
    Ok((loss, grads, targets))
}

/// Owns the parameters and the optimizer.
pub struct AcTrainer {
    pub spec: AcSpec,
    pub cfg: AcConfig,
    params: Vec<f64>,
    adam: Adam,
}

impl AcTrainer {
    pub fn new(spec: AcSpec, cfg: AcConfig, seed: u64) -> Self {
        let params = spec.init_params(seed);
        let adam = Adam::new(cfg.lr, params.len());
        AcTrainer {
            spec,
            cfg,
            params,
            adam,
        }
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Vec<f64> {
        &mut self.params
    }

    pub fn snapshot(&self) -> Arc<Vec<f64>> {
        Arc::new(self.params.clone())
    }

    /// One update over a batch of trajectories; returns (mean loss, grad norm).
    pub fn train_step(&mut self, batch: &[Trajectory], gamma_tilde: f64) -> Result<(f64, f64)> {
        let mut grads = vec![0.0; self.spec.param_count()];
        let mut loss_sum = 0.0;
        for traj in batch {
            let targets = ac_targets(&self.spec, &self.params, traj, gamma_tilde)?;
            loss_sum += ac_loss_with_targets(
                &self.spec,
                &self.params,
                &self.cfg,
                traj,
                &targets,
                Some(&mut grads),
            )?;
        }
        let inv = 1.0 / batch.len().max(1) as f64;
        for g in grads.iter_mut() {
            *g *= inv;
        }
        let norm = nn::clip_global_norm(&mut grads, self.cfg.clip_norm);
        self.adam.step(&mut self.params, &grads);
        Ok((loss_sum * inv, norm))
    }
}

/// Acting policy backed by a parameter snapshot. Samples during training,
/// takes the argmax in greedy evaluation.
pub struct ActorCriticPolicy {
    pub spec: AcSpec,
    pub params: Arc<Vec<f64>>,
    pub input: AgentInput,
    pub greedy: bool,
}

impl ActorCriticPolicy {
    /// Resolve the observation branch for the current context.
    pub fn inputs(&self, ctx: &StepContext) -> (Vec<f64>, Vec<f64>) {
        match self.input {
            AgentInput::TreeStats { use_hidden } => {
                let stats = ctx.state.tree_stats.clone();
                let hidden = if use_hidden {
                    ctx.state.hidden_view.clone()
                } else {
                    Vec::new()
                };
                (stats, hidden)
            }
            AgentInput::RawObservation => (ctx.wrapper.raw_state().observation.clone(), Vec::new()),
        }
    }
}

impl AugmentedPolicy for ActorCriticPolicy {
    fn act(&mut self, ctx: &StepContext, rng: &mut ChaCha8Rng) -> AugmentedAction {
        let (stats, hidden) = self.inputs(ctx);
        let out = ac_forward(
            &self.spec,
            &self.params,
            &stats,
            &hidden,
            (
                ctx.last_action.real,
                ctx.last_action.imaginary,
                ctx.last_action.reset,
            ),
            (ctx.last_reward.raw, ctx.last_reward.planning),
        )
        .expect("agent dims match wrapper");
        let pi_real = out.pi_real();
        let pi_im = out.pi_imaginary();
        let pi_reset = out.pi_reset();
        let (real, imaginary, reset) = if self.greedy {
            (argmax(&pi_real), argmax(&pi_im), argmax(&pi_reset) == 1)
        } else {
            (
                sample_index(&pi_real, rng),
                sample_index(&pi_im, rng),
                sample_index(&pi_reset, rng) == 1,
            )
        };
        AugmentedAction {
            real,
            imaginary,
            reset,
            real_action_dist: pi_real,
        }
    }
}
