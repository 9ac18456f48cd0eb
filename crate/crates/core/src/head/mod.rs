//! The trainable classifier on top of the fused features:
//! dropout -> linear `in_dim -> 2` -> softmax.
//!
//! Training minimizes, per batch,
//!
//! ```text
//! mean_i [ -ln p_i[y_i] + lambda1 * sum_k |p_i[k] - onehot(y_i)[k]| ] + (wd / 2) * ||W||^2
//! ```
//!
//! with Adam (or SGD with momentum) and a step learning-rate decay.

use std::borrow::Cow;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::metrics::{self, EvalReport};
use crate::rng;

mod optim;
mod store;

pub use optim::{adam_step, sgd_momentum_step, OptimizerKind, OptimizerState, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use store::{load_head, read_model, save_head, write_model, HeadMetadata, ModelFile, HEAD_KIND, PFH1_MAGIC};

pub const NUM_CLASSES: usize = 2;
/// Floor applied to the true-class probability before taking the log.
pub const LOG_EPSILON: f64 = 1e-12;

/// Dense affine block `y = W x + b`. `W` is stored out-major
/// (`weights[k * in_dim + j]`) in one buffer followed by the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParameters {
    in_dim: usize,
    out_dim: usize,
    values: Vec<f64>,
}

impl HeadParameters {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        HeadParameters {
            in_dim,
            out_dim,
            values: vec![0.0; in_dim * out_dim + out_dim],
        }
    }

    pub fn from_parts(in_dim: usize, out_dim: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weights.len() != in_dim * out_dim {
            return Err(Error::Dimension {
                expected: in_dim * out_dim,
                actual: weights.len(),
            });
        }
        if bias.len() != out_dim {
            return Err(Error::Dimension {
                expected: out_dim,
                actual: bias.len(),
            });
        }
        let mut values = weights;
        values.extend(bias);
        Ok(HeadParameters { in_dim, out_dim, values })
    }

    /// Fan-in uniform init `U(-1/sqrt(in_dim), 1/sqrt(in_dim))` drawn at
    /// `f32` precision, zero bias.
    pub fn init_uniform<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (in_dim.max(1) as f32).sqrt();
        let mut p = Self::zeros(in_dim, out_dim);
        for w in p.weights_mut() {
            *w = f64::from(rng.random_range(-bound..=bound));
        }
        p
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.values[..self.in_dim * self.out_dim]
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        let n = self.in_dim * self.out_dim;
        &mut self.values[..n]
    }

    pub fn weight_row(&self, k: usize) -> &[f64] {
        &self.values[k * self.in_dim..(k + 1) * self.in_dim]
    }

    pub fn bias(&self) -> &[f64] {
        &self.values[self.in_dim * self.out_dim..]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `||W||^2`, bias excluded.
    pub fn weight_norm_sq(&self) -> f64 {
        self.weights().iter().map(|w| w * w).sum()
    }

    /// Rounds every parameter to `f32`, the precision of the `PFH1` file.
    pub fn quantize(&mut self) {
        for v in &mut self.values {
            *v = f64::from(*v as f32);
        }
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.in_dim {
            return Err(Error::Dimension {
                expected: self.in_dim,
                actual: len,
            });
        }
        Ok(())
    }

    /// `W x + b` for an `f64` input (no dimension check).
    pub(crate) fn affine(&self, x: impl Fn(usize) -> f64) -> Vec<f64> {
        (0..self.out_dim)
            .map(|k| {
                let row = self.weight_row(k);
                let dot: f64 = row.iter().enumerate().map(|(j, w)| w * x(j)).sum();
                dot + self.bias()[k]
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub dropout_rate: f64,
    pub learning_rate: f64,
    /// Multiplier applied every `lr_decay_step` optimizer steps.
    pub lr_decay_factor: f64,
    pub lr_decay_step: u64,
    pub weight_decay: f64,
    /// Only used by [`OptimizerKind::SgdMomentum`].
    pub momentum: f64,
    /// Coefficient of the L1 probability term.
    pub lambda1: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            batch_size: 30,
            epochs: 5,
            dropout_rate: 0.5,
            learning_rate: 0.01,
            lr_decay_factor: 1.0,
            lr_decay_step: 400,
            weight_decay: 5e-4,
            momentum: 0.9,
            lambda1: 1.0,
            optimizer: OptimizerKind::Adam,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Precondition(msg));
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return fail(format!("dropout_rate must lie in [0, 1), got {}", self.dropout_rate));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.lambda1 >= 0.0 && self.lambda1.is_finite()) {
            return fail(format!("lambda1 must be non-negative, got {}", self.lambda1));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return fail(format!("weight_decay must be non-negative, got {}", self.weight_decay));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor.is_finite()) {
            return fail(format!("lr_decay_factor must be positive, got {}", self.lr_decay_factor));
        }
        if self.lr_decay_step == 0 {
            return fail("lr_decay_step must be at least 1".into());
        }
        Ok(())
    }

    /// Learning rate used by the optimizer step that follows `steps_taken`
    /// earlier steps.
    pub fn learning_rate_at(&self, steps_taken: u64) -> f64 {
        let decays = (steps_taken / self.lr_decay_step).min(i32::MAX as u64) as i32;
        self.learning_rate * self.lr_decay_factor.powi(decays)
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

/// `softmax(W (x * mask) + b)`. The mask holds already-scaled keep factors
/// (`0` or `1 / (1 - p)`); pass `None` at inference.
pub fn forward(params: &HeadParameters, x: &[f32], mask: Option<&[f64]>) -> Result<Forward> {
    params.check_input(x.len())?;
    if let Some(m) = mask {
        params.check_input(m.len())?;
    }
    let logits = match mask {
        None => params.affine(|j| f64::from(x[j])),
        Some(m) => params.affine(|j| f64::from(x[j]) * m[j]),
    };
    let probs = softmax(&logits);
    Ok(Forward { logits, probs })
}

/// Inverted-dropout mask: each coordinate is kept with probability
/// `1 - rate` and then scaled by `1 / (1 - rate)`.
pub fn dropout_mask<R: Rng + ?Sized>(len: usize, rate: f64, rng: &mut R) -> Vec<f64> {
    let keep = 1.0 - rate;
    let scale = 1.0 / keep;
    (0..len)
        .map(|_| if rng.random::<f64>() < keep { scale } else { 0.0 })
        .collect()
}

fn onehot(label: u8, k: usize) -> f64 {
    if usize::from(label) == k {
        1.0
    } else {
        0.0
    }
}

/// Cross-entropy plus the L1 probability term, without regularization.
pub fn sample_loss(probs: &[f64], label: u8, lambda1: f64) -> f64 {
    let p_true = probs[usize::from(label)].max(LOG_EPSILON);
    let l1: f64 = probs
        .iter()
        .enumerate()
        .map(|(k, p)| (p - onehot(label, k)).abs())
        .sum();
    -p_true.ln() + lambda1 * l1
}

/// Single-sample loss including the `(wd / 2) ||W||^2` regularizer.
pub fn loss(probs: &[f64], label: u8, lambda1: f64, params: &HeadParameters, weight_decay: f64) -> f64 {
    sample_loss(probs, label, lambda1) + 0.5 * weight_decay * params.weight_norm_sq()
}

/// One training example; `mask` is the dropout mask drawn for it, if any.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub features: &'a [f32],
    pub label: u8,
    pub mask: Option<&'a [f64]>,
}

impl<'a> Example<'a> {
    pub fn new(features: &'a [f32], label: u8) -> Self {
        Example {
            features,
            label,
            mask: None,
        }
    }
}

fn check_label(label: u8) -> Result<()> {
    if usize::from(label) >= NUM_CLASSES {
        return Err(Error::Precondition(format!("label {label} out of range")));
    }
    Ok(())
}

/// Batch loss: mean per-sample loss plus the regularizer once.
pub fn batch_loss(params: &HeadParameters, batch: &[Example<'_>], config: &TrainingConfig) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Precondition("empty batch".into()));
    }
    let mut total = 0.0;
    for ex in batch {
        check_label(ex.label)?;
        let f = forward(params, ex.features, ex.mask)?;
        total += sample_loss(&f.probs, ex.label, config.lambda1);
    }
    Ok(total / batch.len() as f64 + 0.5 * config.weight_decay * params.weight_norm_sq())
}

/// `d loss / d logits` for one sample.
///
/// Cross-entropy contributes `p - t` (zero once the log clamp is active);
/// the L1 term contributes `lambda1 * sum_k s_k p_k (delta_kj - p_j)` with
/// `s_k = sign(p_k - t_k)` and `sign(0) = 0`.
pub fn logit_gradient(probs: &[f64], label: u8, lambda1: f64) -> Vec<f64> {
    let y = usize::from(label);
    let clamped = probs[y] < LOG_EPSILON;
    let signs: Vec<f64> = probs
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let d = p - onehot(label, k);
            if d > 0.0 {
                1.0
            } else if d < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
        .collect();
    let weighted: f64 = signs.iter().zip(probs).map(|(s, p)| s * p).sum();
    (0..probs.len())
        .map(|j| {
            let ce = if clamped { 0.0 } else { probs[j] - onehot(label, j) };
            let l1 = probs[j] * (signs[j] - weighted);
            ce + lambda1 * l1
        })
        .collect()
}

/// Analytic gradient of [`batch_loss`], laid out like [`HeadParameters`].
pub fn grad(params: &HeadParameters, batch: &[Example<'_>], config: &TrainingConfig) -> Result<HeadParameters> {
    if batch.is_empty() {
        return Err(Error::Precondition("empty batch".into()));
    }
    let (in_dim, out_dim) = (params.in_dim, params.out_dim);
    let mut g = HeadParameters::zeros(in_dim, out_dim);
    let scale = 1.0 / batch.len() as f64;
    for ex in batch {
        check_label(ex.label)?;
        let f = forward(params, ex.features, ex.mask)?;
        let delta = logit_gradient(&f.probs, ex.label, config.lambda1);
        for (k, &dk) in delta.iter().enumerate() {
            let dk = dk * scale;
            let row = &mut g.values[k * in_dim..(k + 1) * in_dim];
            match ex.mask {
                None => {
                    for (gw, &x) in row.iter_mut().zip(ex.features) {
                        *gw += dk * f64::from(x);
                    }
                }
                Some(m) => {
                    for ((gw, &x), &mj) in row.iter_mut().zip(ex.features).zip(m) {
                        *gw += dk * f64::from(x) * mj;
                    }
                }
            }
            g.values[in_dim * out_dim + k] += dk;
        }
    }
    if config.weight_decay != 0.0 {
        for (gw, w) in g.weights_mut().iter_mut().zip(params.values[..in_dim * out_dim].iter()) {
            *gw += config.weight_decay * w;
        }
    }
    Ok(g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_loss: Option<f64>,
    pub test_accuracy: Option<f64>,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochRecord>,
    /// Total optimizer steps taken.
    pub steps: u64,
}

/// Eval-mode loss and accuracy over a whole labeled store.
pub fn evaluate_loss(params: &HeadParameters, fm: &FeatureMatrix, config: &TrainingConfig) -> Result<(f64, f64)> {
    let labels = fm.require_labels()?;
    if fm.is_empty() {
        return Err(Error::Precondition("empty feature store".into()));
    }
    let mut total = 0.0;
    let mut correct = 0usize;
    for (i, &label) in labels.iter().enumerate() {
        let f = forward(params, fm.row(i), None)?;
        total += sample_loss(&f.probs, label, config.lambda1);
        if argmax(&f.probs) == label {
            correct += 1;
        }
    }
    let n = fm.rows() as f64;
    Ok((total / n + 0.5 * config.weight_decay * params.weight_norm_sq(), correct as f64 / n))
}

fn check_store(fm: &FeatureMatrix, in_dim: usize, what: &str) -> Result<()> {
    fm.require_labels()
        .map_err(|_| Error::Precondition(format!("{what} store has no labels")))?;
    if fm.cols() != in_dim {
        return Err(Error::Dimension {
            expected: in_dim,
            actual: fm.cols(),
        });
    }
    Ok(())
}

/// Trains a fresh head on a fixed feature store.
pub fn train(
    train_fm: &FeatureMatrix,
    test_fm: &FeatureMatrix,
    config: &TrainingConfig,
) -> Result<(HeadParameters, TrainingHistory)> {
    if train_fm.is_empty() {
        return Err(Error::Precondition("training store is empty".into()));
    }
    check_store(test_fm, train_fm.cols(), "test")?;
    train_with(train_fm.cols(), |_| Ok(Cow::Borrowed(train_fm)), Some(test_fm), config)
}

/// Training loop with per-epoch training features supplied by
/// `epoch_features(epoch)`, so augmented views can be re-extracted each
/// epoch. Every store returned must share `in_dim`, row count and labels.
pub fn train_with<'a, F>(
    in_dim: usize,
    mut epoch_features: F,
    test_fm: Option<&FeatureMatrix>,
    config: &TrainingConfig,
) -> Result<(HeadParameters, TrainingHistory)>
where
    F: FnMut(usize) -> Result<Cow<'a, FeatureMatrix>>,
{
    config.validate()?;
    let mut params = HeadParameters::init_uniform(in_dim, NUM_CLASSES, &mut rng::stream(config.seed, 0));
    let mut state = OptimizerState::new(config.optimizer, params.values.len(), config.momentum);
    let mut rng = rng::stream(config.seed, 1);
    let mut history = TrainingHistory::default();
    let test_fm = test_fm.filter(|fm| !fm.is_empty());

    for epoch in 0..config.epochs {
        let fm = epoch_features(epoch)?;
        if fm.is_empty() {
            return Err(Error::Precondition("training store is empty".into()));
        }
        check_store(&fm, in_dim, "training")?;
        let labels = fm.require_labels()?;

        let mut order: Vec<usize> = (0..fm.rows()).collect();
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let masks: Vec<Vec<f64>> = if config.dropout_rate > 0.0 {
                chunk
                    .iter()
                    .map(|_| dropout_mask(in_dim, config.dropout_rate, &mut rng))
                    .collect()
            } else {
                Vec::new()
            };
            let batch: Vec<Example<'_>> = chunk
                .iter()
                .enumerate()
                .map(|(b, &i)| Example {
                    features: fm.row(i),
                    label: labels[i],
                    mask: masks.get(b).map(Vec::as_slice),
                })
                .collect();
            let g = grad(&params, &batch, config)?;
            let lr = config.learning_rate_at(state.step);
            state.update(&mut params.values, &g.values, lr);
        }

        let (train_loss, train_accuracy) = evaluate_loss(&params, &fm, config)?;
        let test = test_fm.map(|t| evaluate_loss(&params, t, config)).transpose()?;
        log::info!(
            "epoch {}: train loss {train_loss:.4} acc {train_accuracy:.4}{}",
            epoch + 1,
            test.map(|(l, a)| format!(", test loss {l:.4} acc {a:.4}")).unwrap_or_default()
        );
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            train_accuracy,
            test_loss: test.map(|t| t.0),
            test_accuracy: test.map(|t| t.1),
            learning_rate: config.learning_rate_at(state.step.saturating_sub(1)),
        });
    }
    history.steps = state.step;
    if !params.is_finite() {
        return Err(Error::Degenerate("training diverged to non-finite parameters".into()));
    }
    params.quantize();
    Ok((params, history))
}

/// Index of the largest probability; ties go to the lower class id.
pub fn argmax(probs: &[f64]) -> u8 {
    let mut best = 0;
    for (k, &p) in probs.iter().enumerate().skip(1) {
        if p > probs[best] {
            best = k;
        }
    }
    best as u8
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: u8,
    /// Probability of the positive class.
    pub score: f64,
    /// Positive-class logit minus the other logit. Orders samples like
    /// `score` but does not saturate, so it is used for ROC-AUC.
    pub margin: f64,
    pub probs: Vec<f64>,
}

impl Prediction {
    pub(crate) fn from_logits(logits: &[f64], positive_class: u8) -> Self {
        let pos = usize::from(positive_class);
        let probs = softmax(logits);
        Prediction {
            label: argmax(&probs),
            score: probs[pos],
            margin: logits[pos] - logits[1 - pos],
            probs,
        }
    }
}

/// Eval-mode prediction: no dropout mask, no scaling.
pub fn predict(params: &HeadParameters, x: &[f32], positive_class: u8) -> Result<Prediction> {
    check_label(positive_class)?;
    let f = forward(params, x, None)?;
    Ok(Prediction::from_logits(&f.logits, positive_class))
}

/// Classifies every row of a labeled store and scores the result.
pub fn evaluate(params: &HeadParameters, fm: &FeatureMatrix, positive_class: u8) -> Result<EvalReport> {
    let truths = fm.require_labels()?;
    let mut predicted = Vec::with_capacity(fm.rows());
    let mut scores = Vec::with_capacity(fm.rows());
    for i in 0..fm.rows() {
        let p = predict(params, fm.row(i), positive_class)?;
        predicted.push(p.label);
        scores.push(p.margin);
    }
    metrics::evaluate(&predicted, truths, &scores, positive_class)
}
