//! Dense feed-forward classifiers and their training loop.
//!
//! Networks are ReLU multi-layer perceptrons with a softmax output head,
//! trained on cross-entropy over hard labels. Everything is `f64` and
//! seed-deterministic: the same `(layer_sizes, seed)` always produces the
//! same parameters, and the same `(model, config, data)` always produces the
//! same trajectory.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::Dataset;
use crate::error::{Error, Result};
use crate::prob::ProbabilityDistribution;
use crate::rng::split_seed;

/// Gradient-descent flavor used by [`Trainer`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    /// SGD with classical momentum.
    SgdMomentum,
    /// Adam-style adaptive moments; `momentum` doubles as the first-moment
    /// decay, the second-moment decay is fixed at 0.999 and epsilon at 1e-8.
    AdaptiveMoment,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::AdaptiveMoment,
            learning_rate: 0.01,
            momentum: 0.9,
            weight_decay: 0.0,
            batch_size: 32,
            max_epochs: 50,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    /// A zero learning rate is accepted so a "null step" pass can be used to
    /// report losses without touching parameters.
    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::Config(format!(
                "learning_rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if !self.weight_decay.is_finite() || self.weight_decay < 0.0 {
            return Err(Error::Config(format!(
                "weight_decay must be finite and >= 0, got {}",
                self.weight_decay
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// A dense ReLU network with softmax output.
///
/// `layer_sizes` runs input dimension first, number of classes last; layer
/// `l` maps `layer_sizes[l] -> layer_sizes[l+1]` with a row-major
/// `(out, in)` weight matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

impl Mlp {
    /// Builds a network with weights drawn uniformly from
    /// `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` and zero biases.
    pub fn new(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::Config(format!(
                "need at least input and output layer sizes, got {layer_sizes:?}"
            )));
        }
        if layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::Config(format!(
                "layer sizes must be positive, got {layer_sizes:?}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(layer_sizes.len() - 1);
        let mut biases = Vec::with_capacity(layer_sizes.len() - 1);
        for w in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = 1.0 / (fan_in as f64).sqrt();
            let layer: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| rng.gen_range(-limit..=limit))
                .collect();
            weights.push(layer);
            biases.push(vec![0.0; fan_out]);
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
        })
    }

    /// ToBias initialization: sets the output bias of class
    /// `member_index mod K` to `beta`, leaving everything else untouched.
    ///
    /// With a large `beta` the fresh network concentrates its prediction on
    /// that class for any bounded input, so an ensemble of such members
    /// starts out spanning the simplex vertices.
    pub fn with_tobias(mut self, member_index: usize, beta: f64) -> Self {
        let k = self.n_classes();
        let last = self.biases.len() - 1;
        self.biases[last][member_index % k] = beta;
        self
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn n_classes(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Input(format!(
                "input has {} features, model expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Output log-probabilities (stabilized log-softmax of the logits).
    pub fn log_probs(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut act = x.to_vec();
        let n_layers = self.weights.len();
        for l in 0..n_layers {
            let mut z = self.affine(l, &act);
            if l + 1 < n_layers {
                for v in &mut z {
                    *v = v.max(0.0);
                }
            }
            act = z;
        }
        log_softmax_in_place(&mut act);
        Ok(act)
    }

    /// Predicted class distribution for one input.
    pub fn forward(&self, x: &[f64]) -> Result<ProbabilityDistribution> {
        let mut lp = self.log_probs(x)?;
        for v in &mut lp {
            *v = v.exp();
        }
        // Stabilized softmax sums to 1 up to rounding; renormalize the dust
        // so the distribution invariant holds exactly at 1e-9.
        let sum: f64 = lp.iter().sum();
        for v in &mut lp {
            *v /= sum;
        }
        Ok(ProbabilityDistribution::new_unchecked(lp))
    }

    fn affine(&self, layer: usize, input: &[f64]) -> Vec<f64> {
        let in_dim = self.layer_sizes[layer];
        let out_dim = self.layer_sizes[layer + 1];
        let w = &self.weights[layer];
        let b = &self.biases[layer];
        let mut out = Vec::with_capacity(out_dim);
        for o in 0..out_dim {
            let row = &w[o * in_dim..(o + 1) * in_dim];
            let mut acc = b[o];
            for (wi, xi) in row.iter().zip(input) {
                acc += wi * xi;
            }
            out.push(acc);
        }
        out
    }

    /// Total number of scalar parameters.
    pub fn n_params(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>() + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    /// All parameters flattened layer by layer, weights before biases.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    /// Writes back a flat parameter vector produced by [`Self::params_flat`].
    pub fn set_params_flat(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(Error::Input(format!(
                "expected {} parameters, got {}",
                self.n_params(),
                params.len()
            )));
        }
        let mut off = 0;
        for (w, b) in self.weights.iter_mut().zip(&mut self.biases) {
            let (wn, bn) = (w.len(), b.len());
            w.copy_from_slice(&params[off..off + wn]);
            off += wn;
            b.copy_from_slice(&params[off..off + bn]);
            off += bn;
        }
        Ok(())
    }

    /// Mean cross-entropy over the given sample indices.
    pub fn loss_on_batch(&self, data: &Dataset, indices: &[usize]) -> Result<f64> {
        let (loss, _) = self.loss_and_grads(data, indices, false)?;
        Ok(loss)
    }

    /// Gradient of the mean cross-entropy over the given indices, flattened
    /// in [`Self::params_flat`] order.
    pub fn gradient_on_batch(&self, data: &Dataset, indices: &[usize]) -> Result<Vec<f64>> {
        let (_, grads) = self.loss_and_grads(data, indices, true)?;
        let grads = grads.expect("gradients requested");
        let mut out = Vec::with_capacity(self.n_params());
        for (w, b) in grads.w.iter().zip(&grads.b) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        Ok(out)
    }

    fn loss_and_grads(&self, data: &Dataset, indices: &[usize], want_grads: bool) -> Result<(f64, Option<Grads>)> {
        if indices.is_empty() {
            return Err(Error::Input("empty batch".into()));
        }
        self.check_data(data)?;
        let mut grads = want_grads.then(|| Grads::zeros_like(self));
        let mut total_loss = 0.0;
        let n_layers = self.weights.len();
        for &i in indices {
            let x = data.feature_row(i);
            let y = data.label(i);

            // Forward pass keeping each layer's post-activation output.
            let mut activations: Vec<Vec<f64>> = Vec::with_capacity(n_layers + 1);
            activations.push(x.to_vec());
            for l in 0..n_layers {
                let mut z = self.affine(l, &activations[l]);
                if l + 1 < n_layers {
                    for v in &mut z {
                        *v = v.max(0.0);
                    }
                }
                activations.push(z);
            }
            let mut log_p = activations[n_layers].clone();
            log_softmax_in_place(&mut log_p);
            total_loss -= log_p[y];

            let Some(grads) = grads.as_mut() else { continue };

            // delta at the logits: softmax(probs) minus the one-hot label.
            let mut delta: Vec<f64> = log_p.iter().map(|v| v.exp()).collect();
            delta[y] -= 1.0;

            for l in (0..n_layers).rev() {
                let in_dim = self.layer_sizes[l];
                let input = &activations[l];
                let gw = &mut grads.w[l];
                for (o, &d) in delta.iter().enumerate() {
                    let row = &mut gw[o * in_dim..(o + 1) * in_dim];
                    for (g, xi) in row.iter_mut().zip(input) {
                        *g += d * xi;
                    }
                    grads.b[l][o] += d;
                }
                if l > 0 {
                    let w = &self.weights[l];
                    let mut prev = vec![0.0; in_dim];
                    for (o, &d) in delta.iter().enumerate() {
                        let row = &w[o * in_dim..(o + 1) * in_dim];
                        for (p, wi) in prev.iter_mut().zip(row) {
                            *p += d * wi;
                        }
                    }
                    // ReLU derivative read off the stored activation.
                    for (p, &a) in prev.iter_mut().zip(input) {
                        if a <= 0.0 {
                            *p = 0.0;
                        }
                    }
                    delta = prev;
                }
            }
        }
        let scale = 1.0 / indices.len() as f64;
        if let Some(grads) = grads.as_mut() {
            grads.scale(scale);
        }
        Ok((total_loss * scale, grads))
    }

    fn check_data(&self, data: &Dataset) -> Result<()> {
        if data.n_features() != self.input_dim() {
            return Err(Error::Input(format!(
                "dataset has {} features, model expects {}",
                data.n_features(),
                self.input_dim()
            )));
        }
        if data.n_classes() != self.n_classes() {
            return Err(Error::Input(format!(
                "dataset has {} classes, model expects {}",
                data.n_classes(),
                self.n_classes()
            )));
        }
        Ok(())
    }
}

fn log_softmax_in_place(z: &mut [f64]) {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
    for v in z.iter_mut() {
        *v -= lse;
    }
}

struct Grads {
    w: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
}

impl Grads {
    fn zeros_like(m: &Mlp) -> Self {
        Self {
            w: m.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            b: m.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    fn scale(&mut self, s: f64) {
        for layer in self.w.iter_mut().chain(self.b.iter_mut()) {
            for g in layer {
                *g *= s;
            }
        }
    }

    fn add_weight_decay(&mut self, model: &Mlp, wd: f64) {
        if wd == 0.0 {
            return;
        }
        for (gl, wl) in self.w.iter_mut().zip(&model.weights) {
            for (g, w) in gl.iter_mut().zip(wl) {
                *g += wd * w;
            }
        }
    }

    fn all_finite(&self) -> bool {
        self.w
            .iter()
            .chain(self.b.iter())
            .all(|layer| layer.iter().all(|g| g.is_finite()))
    }
}

enum OptState {
    Momentum { vw: Vec<Vec<f64>>, vb: Vec<Vec<f64>> },
    Adam {
        mw: Vec<Vec<f64>>,
        vw: Vec<Vec<f64>>,
        mb: Vec<Vec<f64>>,
        vb: Vec<Vec<f64>>,
        step: u64,
    },
}

impl OptState {
    fn new(kind: OptimizerKind, m: &Mlp) -> Self {
        let zw = || m.weights.iter().map(|w| vec![0.0; w.len()]).collect::<Vec<_>>();
        let zb = || m.biases.iter().map(|b| vec![0.0; b.len()]).collect::<Vec<_>>();
        match kind {
            OptimizerKind::SgdMomentum => OptState::Momentum { vw: zw(), vb: zb() },
            OptimizerKind::AdaptiveMoment => OptState::Adam {
                mw: zw(),
                vw: zw(),
                mb: zb(),
                vb: zb(),
                step: 0,
            },
        }
    }
}

/// Outcome of one training epoch.
#[derive(Debug, Clone, Copy)]
pub struct EpochReport {
    /// Mean cross-entropy over the samples actually processed.
    pub mean_loss: f64,
    /// Number of mini-batches stepped.
    pub batches_run: usize,
    /// True if an `on_batch` callback requested early termination.
    pub stopped_early: bool,
}

/// Mini-batch gradient-descent driver owning the model and optimizer state.
///
/// Optimizer state (momentum/Adam moments) persists across epochs. Each
/// epoch shuffles the sample order with a seed derived from
/// `(config.seed, epoch)`, so reruns are reproducible.
pub struct Trainer {
    model: Mlp,
    cfg: OptimizerConfig,
    state: OptState,
}

const SHUFFLE_STREAM: u64 = 0x53_48_55_46;

impl Trainer {
    pub fn new(model: Mlp, cfg: OptimizerConfig) -> Result<Self> {
        cfg.validate()?;
        let state = OptState::new(cfg.kind, &model);
        Ok(Self { model, cfg, state })
    }

    pub fn model(&self) -> &Mlp {
        &self.model
    }

    pub fn into_model(self) -> Mlp {
        self.model
    }

    /// One shuffled pass of mini-batch steps; returns the mean loss.
    pub fn run_epoch(&mut self, data: &Dataset, epoch: usize) -> Result<f64> {
        Ok(self.run_epoch_with(data, epoch, |_| Ok(false))?.mean_loss)
    }

    /// Like [`Self::run_epoch`], invoking `on_batch` after every optimizer
    /// step; returning `Ok(true)` from the callback stops the epoch early.
    pub fn run_epoch_with(
        &mut self,
        data: &Dataset,
        epoch: usize,
        mut on_batch: impl FnMut(&Mlp) -> Result<bool>,
    ) -> Result<EpochReport> {
        if data.is_empty() {
            return Err(Error::Input("cannot train on an empty dataset".into()));
        }
        let mut order: Vec<usize> = (0..data.len()).collect();
        shuffle(&mut order, split_seed(self.cfg.seed, SHUFFLE_STREAM ^ epoch as u64));

        let mut loss_sum = 0.0;
        let mut samples_seen = 0usize;
        let mut batches_run = 0usize;
        let mut stopped_early = false;
        for (batch_idx, chunk) in order.chunks(self.cfg.batch_size).enumerate() {
            let (loss, grads) = self.model.loss_and_grads(data, chunk, true)?;
            let mut grads = grads.expect("gradients requested");
            grads.add_weight_decay(&self.model, self.cfg.weight_decay);
            if !loss.is_finite() || !grads.all_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: batch_idx,
                });
            }
            self.apply(&grads);
            loss_sum += loss * chunk.len() as f64;
            samples_seen += chunk.len();
            batches_run += 1;
            if on_batch(&self.model)? {
                stopped_early = true;
                break;
            }
        }
        Ok(EpochReport {
            mean_loss: loss_sum / samples_seen as f64,
            batches_run,
            stopped_early,
        })
    }

    fn apply(&mut self, grads: &Grads) {
        let lr = self.cfg.learning_rate;
        match &mut self.state {
            OptState::Momentum { vw, vb } => {
                let mu = self.cfg.momentum;
                for l in 0..grads.w.len() {
                    step_momentum(&mut self.model.weights[l], &mut vw[l], &grads.w[l], mu, lr);
                    step_momentum(&mut self.model.biases[l], &mut vb[l], &grads.b[l], mu, lr);
                }
            }
            OptState::Adam { mw, vw, mb, vb, step } => {
                *step += 1;
                let t = *step;
                let beta1 = self.cfg.momentum;
                for l in 0..grads.w.len() {
                    step_adam(&mut self.model.weights[l], &mut mw[l], &mut vw[l], &grads.w[l], beta1, t, lr);
                    step_adam(&mut self.model.biases[l], &mut mb[l], &mut vb[l], &grads.b[l], beta1, t, lr);
                }
            }
        }
    }
}

fn step_momentum(params: &mut [f64], vel: &mut [f64], grads: &[f64], mu: f64, lr: f64) {
    for ((p, v), g) in params.iter_mut().zip(vel).zip(grads) {
        *v = mu * *v + g;
        *p -= lr * *v;
    }
}

const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

fn step_adam(params: &mut [f64], m: &mut [f64], v: &mut [f64], grads: &[f64], beta1: f64, t: u64, lr: f64) {
    let bc1 = 1.0 - beta1.powi(t as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(t as i32);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g * g;
        let mhat = m[i] / bc1;
        let vhat = v[i] / bc2;
        *p -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
    }
}

/// Fisher-Yates with a dedicated ChaCha stream.
fn shuffle(order: &mut [usize], seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::Dataset;
    use approx::assert_relative_eq;

    fn toy_dataset(features: Vec<Vec<f64>>, labels: Vec<usize>, k: usize) -> Dataset {
        Dataset::from_parts("toy", 0, features, labels, None, k).unwrap()
    }

    #[test]
    fn new_rejects_short_or_zero_layer_lists() {
        assert!(matches!(Mlp::new(&[5], 0), Err(Error::Config(_))));
        assert!(matches!(Mlp::new(&[2, 0, 3], 0), Err(Error::Config(_))));
    }

    #[test]
    fn new_zero_biases_and_deterministic() {
        let a = Mlp::new(&[2, 3], 7).unwrap();
        assert_eq!(a.weights.len(), 1);
        assert_eq!(a.weights[0].len(), 6);
        assert_eq!(a.biases[0], vec![0.0, 0.0, 0.0]);
        let b = Mlp::new(&[2, 3], 7).unwrap();
        assert_eq!(a, b);
        let c = Mlp::new(&[2, 3], 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn init_respects_fan_in_bound() {
        let m = Mlp::new(&[4, 8, 2], 123).unwrap();
        for (l, w) in m.weights.iter().enumerate() {
            let limit = 1.0 / (m.layer_sizes[l] as f64).sqrt();
            assert!(w.iter().all(|v| v.abs() <= limit));
        }
    }

    #[test]
    fn tobias_sets_single_output_bias() {
        let m = Mlp::new(&[2, 4, 3], 1).unwrap().with_tobias(4, 100.0);
        assert_eq!(m.biases[1], vec![0.0, 100.0, 0.0]);
        // Hidden biases untouched.
        assert!(m.biases[0].iter().all(|&b| b == 0.0));
    }

    #[test]
    fn tobias_beta_zero_is_identity() {
        let a = Mlp::new(&[2, 3], 9).unwrap();
        let b = a.clone().with_tobias(1, 0.0);
        assert_eq!(a, b);
    }

    #[test]
    fn tobias_dominates_forward_output() {
        let m = Mlp::new(&[3, 3], 5).unwrap().with_tobias(0, 100.0);
        let p = m.forward(&[0.0, 0.0, 0.0]).unwrap();
        assert!((1.0 - p.probs()[0]).abs() < 1e-20);
    }

    #[test]
    fn forward_uniform_for_zero_parameters() {
        let mut m = Mlp::new(&[2, 3], 3).unwrap();
        let zeros = vec![0.0; m.n_params()];
        m.set_params_flat(&zeros).unwrap();
        let p = m.forward(&[0.4, -1.2]).unwrap();
        for &v in p.probs() {
            assert_relative_eq!(v, 1.0 / 3.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn forward_extreme_logits_are_stable() {
        // Single linear layer with weights picked so logits are (100, 0, 0).
        let mut m = Mlp::new(&[1, 3], 0).unwrap();
        m.set_params_flat(&[100.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let p = m.forward(&[1.0]).unwrap();
        assert!((1.0 - p.probs()[0]).abs() < 1e-20);
        assert!(p.probs()[1] > 0.0);
    }

    #[test]
    fn forward_rejects_dimension_mismatch() {
        let m = Mlp::new(&[2, 3], 3).unwrap();
        assert!(matches!(m.forward(&[1.0]), Err(Error::Input(_))));
    }

    #[test]
    fn forward_outputs_are_distributions() {
        let m = Mlp::new(&[4, 7, 3], 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let p = m.forward(&x).unwrap();
            let sum: f64 = p.probs().iter().sum();
            assert!((sum - 1.0).abs() <= 1e-9);
            assert!(p.probs().iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let data = toy_dataset(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0, 1], 2);
        let model = Mlp::new(&[2, 4, 2], 2).unwrap();
        let before = model.params_flat();
        let cfg = OptimizerConfig {
            learning_rate: 0.0,
            kind: OptimizerKind::SgdMomentum,
            ..Default::default()
        };
        let mut tr = Trainer::new(model, cfg).unwrap();
        let loss = tr.run_epoch(&data, 0).unwrap();
        assert!(loss.is_finite());
        assert_eq!(tr.model().params_flat(), before);
    }

    #[test]
    fn separable_point_trains_to_small_loss() {
        let data = toy_dataset(vec![vec![1.0, -1.0]], vec![0], 2);
        let cfg = OptimizerConfig {
            learning_rate: 0.1,
            batch_size: 1,
            seed: 4,
            ..Default::default()
        };
        let mut tr = Trainer::new(Mlp::new(&[2, 4, 2], 4).unwrap(), cfg).unwrap();
        let mut loss = f64::INFINITY;
        for epoch in 0..200 {
            loss = tr.run_epoch(&data, epoch).unwrap();
        }
        assert!(loss < 0.01, "loss stayed at {loss}");
    }

    #[test]
    fn training_is_seed_deterministic() {
        let data = toy_dataset(
            vec![vec![0.5, 1.0], vec![-1.0, 0.25], vec![2.0, -0.5]],
            vec![0, 1, 0],
            2,
        );
        let run = || {
            let cfg = OptimizerConfig {
                learning_rate: 0.05,
                batch_size: 2,
                seed: 77,
                ..Default::default()
            };
            let mut tr = Trainer::new(Mlp::new(&[2, 3, 2], 77).unwrap(), cfg).unwrap();
            for epoch in 0..5 {
                tr.run_epoch(&data, epoch).unwrap();
            }
            tr.into_model().params_flat()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let data = toy_dataset(
            vec![vec![0.3, -1.1], vec![1.4, 0.2], vec![-0.6, 0.9]],
            vec![0, 2, 1],
            3,
        );
        let indices: Vec<usize> = (0..data.len()).collect();
        let model = Mlp::new(&[2, 3, 3], 21).unwrap();
        let analytic = model.gradient_on_batch(&data, &indices).unwrap();

        let h = 1e-5;
        let base = model.params_flat();
        let mut max_rel = 0.0f64;
        for i in 0..base.len() {
            let mut plus = model.clone();
            let mut minus = model.clone();
            let mut p = base.clone();
            p[i] += h;
            plus.set_params_flat(&p).unwrap();
            p[i] = base[i] - h;
            minus.set_params_flat(&p).unwrap();
            let numeric = (plus.loss_on_batch(&data, &indices).unwrap()
                - minus.loss_on_batch(&data, &indices).unwrap())
                / (2.0 * h);
            let denom = analytic[i].abs().max(numeric.abs()).max(1e-8);
            max_rel = max_rel.max((analytic[i] - numeric).abs() / denom);
        }
        assert!(max_rel < 1e-4, "max relative error {max_rel}");
    }

    #[test]
    fn tobias_mass_concentrates_on_target_class_for_bounded_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..20 {
            let m = Mlp::new(&[3, 8, 4], trial).unwrap().with_tobias(trial as usize, 100.0);
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let p = m.forward(&x).unwrap();
            assert!(p.probs()[trial as usize % 4] >= 1.0 - 1e-6);
        }
    }
}
