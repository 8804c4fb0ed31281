//! Fully connected ReLU classifier trained with (optionally DP) Adam.
//!
//! Parameters are addressed through one flat vector in canonical order: for
//! each layer, the weight matrix row-major (`outputs × inputs`), then the bias.
//! Gradients, Adam state and checkpoints all use that order.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::Sample;
use crate::dp::{self, PrivacyParams};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from};

const LOSS_FLOOR: f64 = 1e-30;
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            out.push(row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias[o]);
        }
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    dims: Vec<usize>,
    layers: Vec<Dense>,
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least input and output widths, got {dims:?}"
        )));
    }
    if dims.iter().any(|&d| d == 0) {
        return Err(Error::InvalidArgument(format!("layer widths must be positive: {dims:?}")));
    }
    Ok(())
}

/// Glorot-uniform weights, zero biases.
pub fn init_model(dims: &[usize], seed: u64) -> Result<MlpModel> {
    validate_dims(dims)?;
    let mut rng = rng_from(seed);
    let layers = dims
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            Dense {
                inputs: fan_in,
                outputs: fan_out,
                weights: (0..fan_in * fan_out)
                    .map(|_| rng.gen_range(-limit..=limit))
                    .collect(),
                bias: vec![0.0; fan_out],
            }
        })
        .collect();
    Ok(MlpModel {
        dims: dims.to_vec(),
        layers,
    })
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Index of the largest entry; ties go to the lower index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

struct Trace {
    /// Input to each layer (the sample itself, then post-ReLU activations).
    inputs: Vec<Vec<f64>>,
    probs: Vec<f64>,
}

impl MlpModel {
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("model needs at least one layer".into()));
        }
        let mut dims = vec![layers[0].inputs];
        for l in &layers {
            if l.inputs != *dims.last().unwrap()
                || l.weights.len() != l.inputs * l.outputs
                || l.bias.len() != l.outputs
            {
                return Err(Error::InvalidArgument("inconsistent layer shapes".into()));
            }
            dims.push(l.outputs);
        }
        let m = MlpModel { dims, layers };
        if !m.is_finite() {
            return Err(Error::InvalidArgument("non-finite parameters".into()));
        }
        Ok(m)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn input_width(&self) -> usize {
        self.dims[0]
    }

    pub fn classes(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::InvalidArgument(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                flat.len()
            )));
        }
        let mut off = 0;
        for l in &mut self.layers {
            let w = l.weights.len();
            l.weights.copy_from_slice(&flat[off..off + w]);
            off += w;
            let b = l.bias.len();
            l.bias.copy_from_slice(&flat[off..off + b]);
            off += b;
        }
        Ok(())
    }

    fn for_each_param_mut(&mut self, mut f: impl FnMut(usize, &mut f64)) {
        let mut i = 0;
        for l in &mut self.layers {
            for p in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                f(i, p);
                i += 1;
            }
        }
    }

    fn check_width(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_width() {
            return Err(Error::WidthMismatch {
                expected: self.input_width(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_width(x)?;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            l.apply(&cur, &mut next);
            if i + 1 < self.layers.len() {
                next.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// Class probabilities for one feature vector.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(x)?))
    }

    fn trace(&self, x: &[f64]) -> Trace {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut cur = x.to_vec();
        for (i, l) in self.layers.iter().enumerate() {
            let mut out = Vec::with_capacity(l.outputs);
            l.apply(&cur, &mut out);
            if i + 1 < self.layers.len() {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            inputs.push(std::mem::replace(&mut cur, out));
        }
        Trace {
            inputs,
            probs: softmax(&cur),
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.logits(x)?))
    }

    /// Cross-entropy `-ln p(y|x)`, probability floored at 1e-30.
    pub fn logloss(&self, sample: &Sample) -> Result<f64> {
        let p = self.forward(&sample.features)?;
        let py = *p.get(sample.label).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "label {} out of range for {} classes",
                sample.label,
                p.len()
            ))
        })?;
        Ok(-py.max(LOSS_FLOOR).ln())
    }

    pub fn loglosses(&self, samples: &[Sample]) -> Result<Vec<f64>> {
        samples.iter().map(|s| self.logloss(s)).collect()
    }

    /// Gradient of `logloss + l2 · ‖W‖² / 2` (weights only, biases unpenalized)
    /// in canonical order.
    pub fn per_example_grad(&self, sample: &Sample, l2: f64) -> Result<Vec<f64>> {
        let mut g = vec![0.0; self.param_count()];
        self.per_example_grad_into(sample, l2, &mut g)?;
        Ok(g)
    }

    /// Writes the per-example gradient into `out`, returning the sample's loss.
    pub fn per_example_grad_into(&self, sample: &Sample, l2: f64, out: &mut [f64]) -> Result<f64> {
        self.check_width(&sample.features)?;
        if sample.label >= self.classes() {
            return Err(Error::InvalidArgument(format!(
                "label {} out of range for {} classes",
                sample.label,
                self.classes()
            )));
        }
        debug_assert_eq!(out.len(), self.param_count());
        let tr = self.trace(&sample.features);
        let loss = -tr.probs[sample.label].max(LOSS_FLOOR).ln();

        let mut delta = tr.probs.clone();
        delta[sample.label] -= 1.0;

        let offsets: Vec<usize> = self
            .layers
            .iter()
            .scan(0, |acc, l| {
                let o = *acc;
                *acc += l.param_count();
                Some(o)
            })
            .collect();

        for li in (0..self.layers.len()).rev() {
            let l = &self.layers[li];
            let input = &tr.inputs[li];
            let off = offsets[li];
            let (gw, gb) = out[off..off + l.param_count()].split_at_mut(l.weights.len());
            for o in 0..l.outputs {
                let d = delta[o];
                let row = &mut gw[o * l.inputs..(o + 1) * l.inputs];
                let wrow = &l.weights[o * l.inputs..(o + 1) * l.inputs];
                for ((g, &x), &w) in row.iter_mut().zip(input).zip(wrow) {
                    *g = d * x + l2 * w;
                }
                gb[o] = d;
            }
            if li > 0 {
                let mut prev = vec![0.0; l.inputs];
                for o in 0..l.outputs {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    let wrow = &l.weights[o * l.inputs..(o + 1) * l.inputs];
                    for (p, &w) in prev.iter_mut().zip(wrow) {
                        *p += d * w;
                    }
                }
                // ReLU derivative: the stored input is the post-activation value
                for (p, &a) in prev.iter_mut().zip(input) {
                    if a <= 0.0 {
                        *p = 0.0;
                    }
                }
                delta = prev;
            }
        }
        Ok(loss)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format_version: CHECKPOINT_VERSION,
            layer_dims: self.dims.clone(),
            parameters: self.params(),
        }
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        if c.format_version != CHECKPOINT_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported checkpoint version {}",
                c.format_version
            )));
        }
        validate_dims(&c.layer_dims)?;
        let mut m = MlpModel {
            dims: c.layer_dims.clone(),
            layers: c
                .layer_dims
                .windows(2)
                .map(|w| Dense {
                    inputs: w[0],
                    outputs: w[1],
                    weights: vec![0.0; w[0] * w[1]],
                    bias: vec![0.0; w[1]],
                })
                .collect(),
        };
        m.set_params(&c.parameters)?;
        if !m.is_finite() {
            return Err(Error::InvalidArgument("non-finite parameters in checkpoint".into()));
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string(&self.to_checkpoint())?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Self::from_checkpoint(&c)
    }
}

/// JSON model checkpoint: layer widths plus the flat canonical parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub layer_dims: Vec<usize>,
    pub parameters: Vec<f64>,
}

/// Fraction of samples whose argmax prediction equals the label.
pub fn accuracy(model: &MlpModel, samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("accuracy of an empty sample list".into()));
    }
    let mut hits = 0usize;
    for s in samples {
        if model.predict(&s.features)? == s.label {
            hits += 1;
        }
    }
    Ok(hits as f64 / samples.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub l2_coefficient: f64,
    pub adam_betas: (f64, f64),
    pub adam_epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 200,
            learning_rate: 1e-2,
            l2_coefficient: 1e-5,
            adam_betas: (0.9, 0.999),
            adam_epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument("learning_rate must be positive".into()));
        }
        if !(self.l2_coefficient >= 0.0) {
            return Err(Error::InvalidArgument("l2_coefficient must be >= 0".into()));
        }
        if n == 0 {
            return Err(Error::InvalidArgument("training set is empty".into()));
        }
        Ok(())
    }

    /// Effective batch size: capped at the training-set size.
    pub fn batch_for(&self, n: usize) -> usize {
        self.batch_size.min(n).max(1)
    }

    /// Poisson sampling rate and total step count for a training set of size `n`.
    pub fn schedule(&self, n: usize) -> (f64, usize) {
        let b = self.batch_for(n);
        let q = b as f64 / n as f64;
        (q, self.epochs * n.div_ceil(b))
    }
}

/// Diagnostics gathered while training.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub steps: usize,
    /// Mean per-example loss of each step's batch (NaN for empty Poisson batches).
    pub step_losses: Vec<f64>,
    /// Largest L2 norm of any per-example gradient after clipping.
    pub max_clipped_norm: f64,
    pub examples_seen: usize,
}

pub fn train(
    init: &MlpModel,
    members: &[Sample],
    cfg: &TrainConfig,
    privacy: Option<&PrivacyParams>,
) -> Result<MlpModel> {
    train_with_report(init, members, cfg, privacy, false).map(|(m, _)| m)
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, model: &mut MlpModel, grad: &[f64], cfg: &TrainConfig) {
        self.t += 1;
        let (b1, b2) = cfg.adam_betas;
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        let (m, v) = (&mut self.m, &mut self.v);
        model.for_each_param_mut(|i, p| {
            m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
            v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
            let mh = m[i] / c1;
            let vh = v[i] / c2;
            *p -= cfg.learning_rate * mh / (vh.sqrt() + cfg.adam_epsilon);
        });
    }
}

/// Trains a copy of `init`.
///
/// Without privacy, each epoch shuffles the data into minibatches and Adam
/// follows the mean per-example gradient. With privacy, every step draws a
/// Poisson batch at rate `batch/n`, clips each per-example gradient to the clip
/// norm, adds `N(0, σ²C²)` to the sum and divides by the expected batch size.
///
/// With `audit_clipping`, a clipped gradient whose norm exceeds the bound
/// aborts training with [`Error::ClipViolation`].
pub fn train_with_report(
    init: &MlpModel,
    members: &[Sample],
    cfg: &TrainConfig,
    privacy: Option<&PrivacyParams>,
    audit_clipping: bool,
) -> Result<(MlpModel, TrainReport)> {
    let n = members.len();
    cfg.validate(n)?;
    for s in members {
        init.check_width(&s.features)?;
    }
    let (q, total_steps) = cfg.schedule(n);
    if let Some(p) = privacy {
        p.validate()?;
        if (p.sampling_rate - q).abs() > 1e-12 || p.steps != total_steps {
            return Err(Error::InvalidArgument(format!(
                "privacy parameters accounted for q={}, T={} but training runs q={q}, T={total_steps}",
                p.sampling_rate, p.steps
            )));
        }
    }

    let mut model = init.clone();
    let dim = model.param_count();
    let mut adam = Adam::new(dim);
    let mut rng = rng_from(derive_seed(cfg.seed, &[0x7a11]));
    let mut noise_rng = rng_from(derive_seed(cfg.seed, &[0x5eed]));
    let mut report = TrainReport::default();
    let mut grad = vec![0.0; dim];
    let mut scratch = vec![0.0; dim];
    let batch = cfg.batch_for(n);
    let steps_per_epoch = n.div_ceil(batch);
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 0..cfg.epochs {
        if privacy.is_none() {
            order.shuffle(&mut rng);
        }
        for s in 0..steps_per_epoch {
            let step = epoch * steps_per_epoch + s;
            let idx: Vec<usize> = match privacy {
                None => order[s * batch..((s + 1) * batch).min(n)].to_vec(),
                Some(_) => (0..n).filter(|_| rng.gen::<f64>() < q).collect(),
            };
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut loss_sum = 0.0;
            for &i in &idx {
                let loss = model.per_example_grad_into(&members[i], cfg.l2_coefficient, &mut scratch)?;
                if !loss.is_finite() {
                    return Err(Error::Diverged { step, loss });
                }
                loss_sum += loss;
                if let Some(p) = privacy {
                    let norm = dp::clip_in_place(&mut scratch, p.clip_norm);
                    report.max_clipped_norm = report.max_clipped_norm.max(norm);
                    if audit_clipping && norm > p.clip_norm {
                        return Err(Error::ClipViolation {
                            norm,
                            bound: p.clip_norm,
                        });
                    }
                }
                for (g, v) in grad.iter_mut().zip(&scratch) {
                    *g += v;
                }
            }
            report.examples_seen += idx.len();
            report.step_losses.push(if idx.is_empty() {
                f64::NAN
            } else {
                loss_sum / idx.len() as f64
            });
            match privacy {
                None => {
                    let inv = 1.0 / idx.len() as f64;
                    grad.iter_mut().for_each(|g| *g *= inv);
                }
                Some(p) => dp::add_noise_and_scale(
                    &mut grad,
                    p.clip_norm,
                    p.noise_multiplier,
                    q * n as f64,
                    &mut noise_rng,
                ),
            }
            adam.step(&mut model, &grad, cfg);
            if !model.is_finite() {
                return Err(Error::Diverged {
                    step,
                    loss: f64::NAN,
                });
            }
        }
    }
    report.steps = total_steps;
    Ok((model, report))
}
