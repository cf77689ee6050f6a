//! Backprop training for the per-pixel head.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Layer, MlpParameters, MlpSpec};
use crate::error::{Error, Result};

/// Loss minimized during training, evaluated in target space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainLoss {
    L1,
    L2,
}

impl TrainLoss {
    #[inline]
    fn value(&self, pred: f64, target: f64) -> f64 {
        let d = pred - target;
        match self {
            TrainLoss::L1 => d.abs(),
            TrainLoss::L2 => d * d,
        }
    }

    /// dloss/dpred; L1 uses subgradient 0 at equality.
    #[inline]
    fn grad(&self, pred: f64, target: f64) -> f64 {
        let d = pred - target;
        match self {
            TrainLoss::L1 => {
                if d > 0.0 {
                    1.0
                } else if d < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            TrainLoss::L2 => 2.0 * d,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    /// Adaptive moments with the standard beta/epsilon defaults.
    Adam,
    /// Plain gradient descent; used for the convex single-layer checks.
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub loss: TrainLoss,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            batch_size: 128,
            epochs: 100,
            loss: TrainLoss::L2,
            optimizer: Optimizer::Adam,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::InvalidParameter(format!("learning rate {}", self.learning_rate)));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidParameter("batch size and epochs must be >= 1".into()));
        }
        Ok(())
    }
}

/// Gradient buffers with the same layout as the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn zeros(spec: MlpSpec) -> Self {
        Gradients {
            layers: spec
                .layer_dims()
                .into_iter()
                .map(|(i, o)| Layer {
                    fan_in: i,
                    fan_out: o,
                    weights: vec![0.0; i * o],
                    biases: vec![0.0; o],
                })
                .collect(),
        }
    }

    fn add(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weights.iter_mut().zip(&b.weights) {
                *x += y;
            }
            for (x, y) in a.biases.iter_mut().zip(&b.biases) {
                *x += y;
            }
        }
    }

    fn scale(&mut self, factor: f64) {
        for layer in &mut self.layers {
            for w in &mut layer.weights {
                *w *= factor;
            }
            for b in &mut layer.biases {
                *b *= factor;
            }
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut flat = Vec::new();
        for layer in &self.layers {
            flat.extend_from_slice(&layer.weights);
            flat.extend_from_slice(&layer.biases);
        }
        flat
    }
}

/// Mean loss and exact parameter gradients over a batch.
///
/// The loss is the mean of the per-output losses over all samples and
/// output channels.
pub fn backward(
    params: &MlpParameters,
    batch: &[(Vec<f64>, Vec<f64>)],
    loss: TrainLoss,
) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(Error::InvalidParameter("empty batch".into()));
    }
    let spec = params.spec();
    for (x, t) in batch {
        if x.len() != spec.input_channels || t.len() != spec.output_channels {
            return Err(Error::ShapeMismatch(format!(
                "sample dims {}->{} vs spec {}->{}",
                x.len(),
                t.len(),
                spec.input_channels,
                spec.output_channels
            )));
        }
    }
    let norm = 1.0 / (batch.len() * spec.output_channels) as f64;

    // Per-chunk partials combined in chunk order keep the reduction
    // deterministic under the parallel feature.
    let chunk_size = 256;
    let chunks: Vec<&[(Vec<f64>, Vec<f64>)]> = batch.chunks(chunk_size).collect();
    let partials: Vec<(f64, Gradients)> =
        crate::par::map(&chunks, |chunk| backward_chunk(params, chunk, loss));

    let mut grads = Gradients::zeros(spec);
    let mut total_loss = 0.0;
    for (l, g) in &partials {
        total_loss += l;
        grads.add(g);
    }
    grads.scale(norm);
    let mean_loss = total_loss * norm;
    if !mean_loss.is_finite() {
        return Err(Error::Domain(format!("non-finite training loss {mean_loss}")));
    }
    Ok((mean_loss, grads))
}

fn backward_chunk(
    params: &MlpParameters,
    chunk: &[(Vec<f64>, Vec<f64>)],
    loss: TrainLoss,
) -> (f64, Gradients) {
    let spec = params.spec();
    let mut grads = Gradients::zeros(spec);
    let mut loss_sum = 0.0;
    let last = params.layers.len() - 1;
    for (input, target) in chunk {
        let (activations, output) = params.forward_cached(input);
        loss_sum += output.iter().zip(target).map(|(p, t)| loss.value(*p, *t)).sum::<f64>();
        // delta = dloss/dz for the current layer, starting at the output
        // (identity activation).
        let mut delta: Vec<f64> =
            output.iter().zip(target).map(|(p, t)| loss.grad(*p, *t)).collect();
        for l in (0..params.layers.len()).rev() {
            let layer = &params.layers[l];
            let prev_act = &activations[l];
            let grad_layer = &mut grads.layers[l];
            for (o, &d) in delta.iter().enumerate() {
                if d != 0.0 {
                    let row = &mut grad_layer.weights[o * layer.fan_in..(o + 1) * layer.fan_in];
                    for (w, a) in row.iter_mut().zip(prev_act) {
                        *w += d * a;
                    }
                    grad_layer.biases[o] += d;
                }
            }
            if l > 0 {
                // Propagate through the weights, then through the ReLU of
                // layer l-1 (its post-activation is zero exactly where the
                // pre-activation was clipped).
                let mut prev_delta = vec![0.0; layer.fan_in];
                for (o, &d) in delta.iter().enumerate() {
                    if d != 0.0 {
                        let row = &layer.weights[o * layer.fan_in..(o + 1) * layer.fan_in];
                        for (pd, w) in prev_delta.iter_mut().zip(row) {
                            *pd += d * w;
                        }
                    }
                }
                for (pd, a) in prev_delta.iter_mut().zip(prev_act) {
                    if *a <= 0.0 {
                        *pd = 0.0;
                    }
                }
                delta = prev_delta;
            }
        }
        let _ = last;
    }
    (loss_sum, grads)
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Trains a head on `(features, targets)` pairs. Deterministic under a
/// fixed seed; returns the parameters and the per-epoch mean loss.
pub fn train(
    spec: MlpSpec,
    config: &TrainConfig,
    data: &[(Vec<f64>, Vec<f64>)],
) -> Result<(MlpParameters, Vec<f64>)> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidParameter("empty training set".into()));
    }
    let mut params = MlpParameters::kaiming_init(spec, config.seed)?;
    let mut adam = AdamState {
        m: vec![0.0; spec.parameter_count()],
        v: vec![0.0; spec.parameter_count()],
        t: 0,
    };
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut curve = Vec::with_capacity(config.epochs);

    for _epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for batch_indices in order.chunks(config.batch_size) {
            let batch: Vec<(Vec<f64>, Vec<f64>)> =
                batch_indices.iter().map(|&i| data[i].clone()).collect();
            let (loss, grads) = backward(&params, &batch, config.loss)?;
            if !loss.is_finite() || loss > 1e30 {
                return Err(Error::Domain(format!(
                    "training diverged: loss {loss} at epoch {_epoch}"
                )));
            }
            epoch_loss += loss;
            batches += 1;
            apply_update(&mut params, &grads, config, &mut adam)?;
        }
        curve.push(epoch_loss / batches as f64);
    }
    Ok((params, curve))
}

fn apply_update(
    params: &mut MlpParameters,
    grads: &Gradients,
    config: &TrainConfig,
    adam: &mut AdamState,
) -> Result<()> {
    let mut flat = params.flatten();
    let grad_flat = grads.flatten();
    match config.optimizer {
        Optimizer::Sgd => {
            for (p, g) in flat.iter_mut().zip(&grad_flat) {
                *p -= config.learning_rate * g;
            }
        }
        Optimizer::Adam => {
            adam.t += 1;
            let bc1 = 1.0 - ADAM_BETA1.powi(adam.t as i32);
            let bc2 = 1.0 - ADAM_BETA2.powi(adam.t as i32);
            for (i, (p, g)) in flat.iter_mut().zip(&grad_flat).enumerate() {
                adam.m[i] = ADAM_BETA1 * adam.m[i] + (1.0 - ADAM_BETA1) * g;
                adam.v[i] = ADAM_BETA2 * adam.v[i] + (1.0 - ADAM_BETA2) * g * g;
                let m_hat = adam.m[i] / bc1;
                let v_hat = adam.v[i] / bc2;
                *p -= config.learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
        }
    }
    params.unflatten_into(&flat)
}
