//! Minimal fully-connected network machinery over flat `f64` parameter
//! slices: forward passes that record activations, hand-derived backward
//! passes, Adam, and numeric helpers. Keeping parameters flat makes
//! finite-difference checking, checkpointing and optimizer state trivial.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Layer sizes, e.g. `[input, 64, 64, output]`. Hidden layers use the
/// softplus rectifier; the output layer is linear. A two-entry spec is a
/// plain linear layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    pub sizes: Vec<usize>,
}

impl MlpSpec {
    pub fn new(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        MlpSpec {
            sizes: sizes.to_vec(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Xavier-uniform initialisation of weights; biases zero.
    pub fn init(&self, rng: &mut ChaCha8Rng, out: &mut Vec<f64>) {
        for w in self.sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let scale = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                out.push(rng.gen_range(-scale..scale));
            }
            out.extend(std::iter::repeat(0.0).take(fan_out));
        }
    }

    /// All-zero initialisation, used for final output heads.
    pub fn init_zero(&self, out: &mut Vec<f64>) {
        out.extend(std::iter::repeat(0.0).take(self.param_count()));
    }
}

/// Per-layer records from a forward pass, consumed by `backward`.
#[derive(Debug, Clone, Default)]
pub struct MlpCache {
    /// Input to each layer (post-activation of the previous one).
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each hidden layer.
    pre: Vec<Vec<f64>>,
}

pub fn softplus(x: f64) -> f64 {
    // Stable for large |x|.
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Forward pass. `cache` is overwritten and may be reused across calls.
pub fn forward(spec: &MlpSpec, params: &[f64], input: &[f64], cache: &mut MlpCache) -> Vec<f64> {
    debug_assert_eq!(params.len(), spec.param_count());
    assert_eq!(input.len(), spec.input_dim(), "mlp input dim");
    cache.inputs.clear();
    cache.pre.clear();
    let mut x = input.to_vec();
    let mut offset = 0;
    let n_layers = spec.sizes.len() - 1;
    for (layer, w) in spec.sizes.windows(2).enumerate() {
        let (n_in, n_out) = (w[0], w[1]);
        let weights = &params[offset..offset + n_in * n_out];
        let biases = &params[offset + n_in * n_out..offset + n_in * n_out + n_out];
        offset += n_in * n_out + n_out;
        let mut z = biases.to_vec();
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = &weights[i * n_out..(i + 1) * n_out];
            for (j, &wj) in row.iter().enumerate() {
                z[j] += xi * wj;
            }
        }
        cache.inputs.push(x);
        if layer + 1 < n_layers {
            cache.pre.push(z.clone());
            for v in z.iter_mut() {
                *v = softplus(*v);
            }
        }
        x = z;
    }
    x
}

/// Backward pass for a cached forward. Accumulates parameter gradients into
/// `dparams` when given (scaled addition, so batches can share a buffer) and
/// returns the gradient with respect to the input.
pub fn backward(
    spec: &MlpSpec,
    params: &[f64],
    cache: &MlpCache,
    dout: &[f64],
    mut dparams: Option<&mut [f64]>,
) -> Vec<f64> {
    let n_layers = spec.sizes.len() - 1;
    assert_eq!(dout.len(), spec.output_dim(), "mlp grad dim");
    let mut layer_offsets = Vec::with_capacity(n_layers);
    let mut offset = 0;
    for w in spec.sizes.windows(2) {
        layer_offsets.push(offset);
        offset += w[0] * w[1] + w[1];
    }
    let mut dz = dout.to_vec();
    for layer in (0..n_layers).rev() {
        let (n_in, n_out) = (spec.sizes[layer], spec.sizes[layer + 1]);
        let off = layer_offsets[layer];
        let weights = &params[off..off + n_in * n_out];
        let x = &cache.inputs[layer];
        if let Some(dp) = dparams.as_deref_mut() {
            let (dw, db) = dp[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            for (i, &xi) in x.iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                let row = &mut dw[i * n_out..(i + 1) * n_out];
                for (j, &dzj) in dz.iter().enumerate() {
                    row[j] += xi * dzj;
                }
            }
            for (j, &dzj) in dz.iter().enumerate() {
                db[j] += dzj;
            }
        }
        let mut dx = vec![0.0; n_in];
        for (i, dxi) in dx.iter_mut().enumerate() {
            let row = &weights[i * n_out..(i + 1) * n_out];
            let mut acc = 0.0;
            for (j, &dzj) in dz.iter().enumerate() {
                acc += row[j] * dzj;
            }
            *dxi = acc;
        }
        if layer > 0 {
            // Chain through the previous layer's softplus.
            let pre = &cache.pre[layer - 1];
            for (v, &z) in dx.iter_mut().zip(pre.iter()) {
                *v *= sigmoid(z);
            }
        }
        dz = dx;
    }
    dz
}

/// Softmax with the max subtracted for stability.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// log(sum(exp(logits))), stable.
pub fn log_sum_exp(logits: &[f64]) -> f64 {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + logits.iter().map(|&z| (z - m).exp()).sum::<f64>().ln()
}

/// Cross-entropy of a target distribution against softmax(logits), plus the
/// gradient with respect to the logits: softmax(z) - target.
pub fn softmax_cross_entropy(logits: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    let lse = log_sum_exp(logits);
    let mut loss = 0.0;
    for (&t, &z) in target.iter().zip(logits.iter()) {
        if t != 0.0 {
            loss += t * (lse - z);
        }
    }
    let mut grad = softmax(logits);
    for (g, &t) in grad.iter_mut().zip(target.iter()) {
        *g -= t;
    }
    (loss, grad)
}

/// Binary cross-entropy of label `d` against sigmoid(z), with d(loss)/dz.
pub fn logistic_cross_entropy(z: f64, d: f64) -> (f64, f64) {
    let loss = softplus(z) - d * z;
    (loss, sigmoid(z) - d)
}

/// Entropy of softmax(logits) and its gradient with respect to the logits.
pub fn softmax_entropy(logits: &[f64]) -> (f64, Vec<f64>) {
    let p = softmax(logits);
    let lse = log_sum_exp(logits);
    let log_p: Vec<f64> = logits.iter().map(|&z| z - lse).collect();
    let h: f64 = -p
        .iter()
        .zip(log_p.iter())
        .map(|(&pi, &li)| pi * li)
        .sum::<f64>();
    // dH/dz_k = -p_k (log p_k + H)
    let grad: Vec<f64> = p
        .iter()
        .zip(log_p.iter())
        .map(|(&pi, &li)| -pi * (li + h))
        .collect();
    (h, grad)
}

/// Adam over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(lr: f64, n_params: usize) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.step_with_lr(params, grads, self.lr);
    }

    /// One update with an explicit learning rate (for schedules).
    pub fn step_with_lr(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mhat = self.m[i] / b1t;
            let vhat = self.v[i] / b2t;
            params[i] -= lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

/// Rescale `grads` in place so the global L2 norm is at most `max_norm`.
pub fn clip_global_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            *g *= scale;
        }
    }
    norm
}

/// Central finite differences of `f` at `params`, compared against
/// `analytic`. Returns the maximum relative error, where each coordinate's
/// error is normalised by `max(|fd|, |analytic|, floor)`.
pub fn max_relative_grad_error<F: FnMut(&[f64]) -> f64>(
    params: &[f64],
    analytic: &[f64],
    mut f: F,
    step: f64,
    floor: f64,
) -> f64 {
    let mut theta = params.to_vec();
    let mut worst = 0.0f64;
    for i in 0..theta.len() {
        let orig = theta[i];
        theta[i] = orig + step;
        let up = f(&theta);
        theta[i] = orig - step;
        let down = f(&theta);
        theta[i] = orig;
        let fd = (up - down) / (2.0 * step);
        let denom = fd.abs().max(analytic[i].abs()).max(floor);
        worst = worst.max((fd - analytic[i]).abs() / denom);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn zero_linear_head_outputs_zero() {
        let spec = MlpSpec::new(&[5, 3]);
        let mut params = Vec::new();
        spec.init_zero(&mut params);
        let mut cache = MlpCache::default();
        let out = forward(&spec, &params, &[1.0, -2.0, 0.5, 0.0, 3.0], &mut cache);
        assert_eq!(out, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let p = softmax(&[0.0; 4]);
        for v in p {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn mlp_gradients_match_finite_differences() {
        let spec = MlpSpec::new(&[4, 6, 5, 3]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut params = Vec::new();
        spec.init(&mut rng, &mut params);
        let input: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let target: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();

        // Loss: 0.5 * ||mlp(x) - t||^2
        let loss_of = |theta: &[f64]| {
            let mut cache = MlpCache::default();
            let out = forward(&spec, theta, &input, &mut cache);
            0.5 * out
                .iter()
                .zip(target.iter())
                .map(|(o, t)| (o - t) * (o - t))
                .sum::<f64>()
        };

        let mut cache = MlpCache::default();
        let out = forward(&spec, &params, &input, &mut cache);
        let dout: Vec<f64> = out.iter().zip(target.iter()).map(|(o, t)| o - t).collect();
        let mut dparams = vec![0.0; spec.param_count()];
        backward(&spec, &params, &cache, &dout, Some(&mut dparams));

        let err = max_relative_grad_error(&params, &dparams, loss_of, 1e-6, 1e-8);
        assert!(err < 1e-6, "max relative error {err}");
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let spec = MlpSpec::new(&[3, 8, 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut params = Vec::new();
        spec.init(&mut rng, &mut params);
        let input = vec![0.3, -0.7, 1.2];
        let mut cache = MlpCache::default();
        let out = forward(&spec, &params, &input, &mut cache);
        let dout = vec![1.0; out.len()];
        let dx = backward(&spec, &params, &cache, &dout, None);

        let f = |x: &[f64]| {
            let mut c = MlpCache::default();
            forward(&spec, &params, x, &mut c).iter().sum::<f64>()
        };
        let err = max_relative_grad_error(&input, &dx, f, 1e-6, 1e-8);
        assert!(err < 1e-6, "max relative error {err}");
    }

    #[test]
    fn entropy_gradient_matches_finite_differences() {
        let logits = vec![0.5, -1.0, 2.0, 0.0];
        let (_, grad) = softmax_entropy(&logits);
        let f = |z: &[f64]| softmax_entropy(z).0;
        let err = max_relative_grad_error(&logits, &grad, f, 1e-6, 1e-10);
        assert!(err < 1e-6, "max relative error {err}");
    }

    #[test]
    fn cross_entropy_gradients() {
        let logits = vec![0.2, -0.4, 1.1];
        let target = vec![0.2, 0.5, 0.3];
        let (_, grad) = softmax_cross_entropy(&logits, &target);
        let f = |z: &[f64]| softmax_cross_entropy(z, &target).0;
        let err = max_relative_grad_error(&logits, &grad, f, 1e-6, 1e-10);
        assert!(err < 1e-6);

        let (_, dz) = logistic_cross_entropy(0.7, 1.0);
        let g = |z: &[f64]| logistic_cross_entropy(z[0], 1.0).0;
        let err = max_relative_grad_error(&[0.7], &[dz], g, 1e-6, 1e-10);
        assert!(err < 1e-6);
    }

    #[test]
    fn adam_moves_toward_minimum() {
        // Minimise (x - 3)^2.
        let mut params = vec![0.0];
        let mut adam = Adam::new(0.1, 1);
        for _ in 0..500 {
            let grad = vec![2.0 * (params[0] - 3.0)];
            adam.step(&mut params, &grad);
        }
        assert!((params[0] - 3.0).abs() < 1e-3);
    }
}
