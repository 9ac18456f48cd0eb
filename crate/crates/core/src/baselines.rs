//! Comparison classifiers trained on the same fused features as the head.
//!
//! * `logistic_regression`: the head's own training loop with `lambda1 = 0`
//!   and no dropout.
//! * `linear_svm`: `mean max(0, 1 - y s) + (reg / 2) ||w||^2` with
//!   `y = +1` for class 1, minimized by minibatch subgradient descent.
//! * `mlp`: `in_dim -> hidden (ReLU) -> 2`, cross-entropy plus L2, Adam.

use std::borrow::Cow;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, SliceInfo};
use crate::head::{
    self, read_model, softmax, write_model, HeadMetadata, HeadParameters, OptimizerKind, OptimizerState,
    Prediction, TrainingConfig, NUM_CLASSES,
};
use crate::metrics::{self, EvalReport};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    LogisticRegression,
    LinearSvm,
    Mlp,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 3] = [BaselineKind::LogisticRegression, BaselineKind::LinearSvm, BaselineKind::Mlp];

    pub fn as_str(self) -> &'static str {
        match self {
            BaselineKind::LogisticRegression => "logistic_regression",
            BaselineKind::LinearSvm => "linear_svm",
            BaselineKind::Mlp => "mlp",
        }
    }
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BaselineKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Precondition(format!("unknown baseline kind `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// L2 coefficient on the weights (biases are not penalized).
    pub regularization: f64,
    /// Width of the MLP hidden layer.
    pub hidden_units: usize,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            learning_rate: 0.01,
            epochs: 5,
            batch_size: 30,
            regularization: 5e-4,
            hidden_units: 128,
            seed: 0,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Precondition("batch_size must be at least 1".into()));
        }
        if self.hidden_units == 0 {
            return Err(Error::Precondition("hidden_units must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Precondition(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.regularization >= 0.0 && self.regularization.is_finite()) {
            return Err(Error::Precondition(format!(
                "regularization must be non-negative, got {}",
                self.regularization
            )));
        }
        Ok(())
    }

    /// Head configuration used by the logistic-regression baseline.
    pub fn logistic_config(&self) -> TrainingConfig {
        TrainingConfig {
            batch_size: self.batch_size,
            epochs: self.epochs,
            dropout_rate: 0.0,
            learning_rate: self.learning_rate,
            lr_decay_factor: 1.0,
            weight_decay: self.regularization,
            lambda1: 0.0,
            optimizer: OptimizerKind::Adam,
            seed: self.seed,
            ..TrainingConfig::default()
        }
    }
}

/// A trained baseline. `layers` holds one affine block for the linear
/// kinds (two outputs for logistic regression, one score for the SVM) and
/// two blocks for the MLP.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineModel {
    pub kind: BaselineKind,
    pub layers: Vec<HeadParameters>,
    pub config: BaselineConfig,
}

impl BaselineModel {
    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    fn check_shapes(kind: BaselineKind, layers: &[HeadParameters]) -> Result<()> {
        let ok = match kind {
            BaselineKind::LogisticRegression => layers.len() == 1 && layers[0].out_dim() == NUM_CLASSES,
            BaselineKind::LinearSvm => layers.len() == 1 && layers[0].out_dim() == 1,
            BaselineKind::Mlp => {
                layers.len() == 2
                    && layers[1].in_dim() == layers[0].out_dim()
                    && layers[1].out_dim() == NUM_CLASSES
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::format("PFH1", format!("layer shapes do not fit a {kind} model")))
        }
    }

    /// Two class logits for one feature row. The SVM score `s` maps to
    /// `[0, s]`, so its class-1 probability is `sigmoid(s)`.
    pub fn logits(&self, x: &[f32]) -> Result<Vec<f64>> {
        let first = &self.layers[0];
        if x.len() != first.in_dim() {
            return Err(Error::Dimension {
                expected: first.in_dim(),
                actual: x.len(),
            });
        }
        let z = first.affine(|j| f64::from(x[j]));
        Ok(match self.kind {
            BaselineKind::LogisticRegression => z,
            BaselineKind::LinearSvm => vec![0.0, z[0]],
            BaselineKind::Mlp => {
                let a: Vec<f64> = z.iter().map(|v| v.max(0.0)).collect();
                self.layers[1].affine(|j| a[j])
            }
        })
    }

    pub fn probabilities(&self, x: &[f32]) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(x)?))
    }

    pub fn predict(&self, x: &[f32], positive_class: u8) -> Result<Prediction> {
        if usize::from(positive_class) >= NUM_CLASSES {
            return Err(Error::Precondition(format!("label {positive_class} out of range")));
        }
        Ok(Prediction::from_logits(&self.logits(x)?, positive_class))
    }

    pub fn save(&self, slice_map: &[SliceInfo], path: impl AsRef<Path>) -> Result<()> {
        let meta = HeadMetadata::new(self.kind.as_str(), self.config, self.config.seed, slice_map.to_vec());
        let blocks: Vec<&HeadParameters> = self.layers.iter().collect();
        write_model(path, &blocks, &serde_json::to_value(meta)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, HeadMetadata<BaselineConfig>)> {
        let file = read_model(path)?;
        let kind: BaselineKind = file
            .kind()
            .ok_or_else(|| Error::format("PFH1", "metadata has no kind"))?
            .parse()
            .map_err(|_| Error::format("PFH1", format!("`{}` is not a baseline kind", file.kind().unwrap_or(""))))?;
        let meta: HeadMetadata<BaselineConfig> = file.typed_metadata()?;
        Self::check_shapes(kind, &file.blocks)?;
        let model = BaselineModel {
            kind,
            layers: file.blocks,
            config: meta.config,
        };
        Ok((model, meta))
    }
}

fn svm_target(label: u8) -> f64 {
    if label == 1 {
        1.0
    } else {
        -1.0
    }
}

fn check_batch(w: &HeadParameters, batch: &[(&[f32], u8)]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Precondition("empty batch".into()));
    }
    for (x, _) in batch {
        if x.len() != w.in_dim() {
            return Err(Error::Dimension {
                expected: w.in_dim(),
                actual: x.len(),
            });
        }
    }
    Ok(())
}

/// Batch hinge loss of a one-output block plus `(reg / 2) ||w||^2`.
pub fn hinge_loss(w: &HeadParameters, batch: &[(&[f32], u8)], regularization: f64) -> Result<f64> {
    check_batch(w, batch)?;
    let total: f64 = batch
        .iter()
        .map(|&(x, label)| {
            let s = w.affine(|j| f64::from(x[j]))[0];
            (1.0 - svm_target(label) * s).max(0.0)
        })
        .sum();
    Ok(total / batch.len() as f64 + 0.5 * regularization * w.weight_norm_sq())
}

/// Subgradient of [`hinge_loss`]; samples exactly on the margin contribute 0.
pub fn hinge_subgradient(w: &HeadParameters, batch: &[(&[f32], u8)], regularization: f64) -> Result<HeadParameters> {
    check_batch(w, batch)?;
    let in_dim = w.in_dim();
    let mut g = HeadParameters::zeros(in_dim, 1);
    let scale = 1.0 / batch.len() as f64;
    for &(x, label) in batch {
        let y = svm_target(label);
        let s = w.affine(|j| f64::from(x[j]))[0];
        if y * s < 1.0 {
            let gv = g.values_mut();
            for (gj, &xj) in gv[..in_dim].iter_mut().zip(x) {
                *gj -= scale * y * f64::from(xj);
            }
            gv[in_dim] -= scale * y;
        }
    }
    for (gj, wj) in g.weights_mut().iter_mut().zip(w.weights()) {
        *gj += regularization * wj;
    }
    Ok(g)
}

/// Cross-entropy of the MLP on a batch plus `(reg / 2)` times the squared
/// weights of both layers.
pub fn mlp_loss(layers: &[HeadParameters], batch: &[(&[f32], u8)], regularization: f64) -> Result<f64> {
    check_batch(&layers[0], batch)?;
    let mut total = 0.0;
    for &(x, label) in batch {
        let a: Vec<f64> = layers[0].affine(|j| f64::from(x[j])).iter().map(|v| v.max(0.0)).collect();
        let p = softmax(&layers[1].affine(|j| a[j]));
        total -= p[usize::from(label)].max(head::LOG_EPSILON).ln();
    }
    let norm: f64 = layers.iter().map(HeadParameters::weight_norm_sq).sum();
    Ok(total / batch.len() as f64 + 0.5 * regularization * norm)
}

/// Backpropagated gradient of [`mlp_loss`], one block per layer. The ReLU
/// derivative at exactly 0 is taken as 0.
pub fn mlp_gradient(
    layers: &[HeadParameters],
    batch: &[(&[f32], u8)],
    regularization: f64,
) -> Result<Vec<HeadParameters>> {
    check_batch(&layers[0], batch)?;
    let (l1, l2) = (&layers[0], &layers[1]);
    let (in_dim, hidden) = (l1.in_dim(), l1.out_dim());
    let mut g1 = HeadParameters::zeros(in_dim, hidden);
    let mut g2 = HeadParameters::zeros(hidden, NUM_CLASSES);
    let scale = 1.0 / batch.len() as f64;
    for &(x, label) in batch {
        let z1 = l1.affine(|j| f64::from(x[j]));
        let a: Vec<f64> = z1.iter().map(|v| v.max(0.0)).collect();
        let p = softmax(&l2.affine(|j| a[j]));
        let clamped = p[usize::from(label)] < head::LOG_EPSILON;
        let dz2: Vec<f64> = (0..NUM_CLASSES)
            .map(|k| {
                if clamped {
                    0.0
                } else {
                    scale * (p[k] - if usize::from(label) == k { 1.0 } else { 0.0 })
                }
            })
            .collect();
        let mut dz1 = vec![0.0; hidden];
        {
            let v2 = g2.values_mut();
            for (k, &d) in dz2.iter().enumerate() {
                let row = l2.weight_row(k);
                for h in 0..hidden {
                    v2[k * hidden + h] += d * a[h];
                    dz1[h] += d * row[h];
                }
                v2[hidden * NUM_CLASSES + k] += d;
            }
        }
        let v1 = g1.values_mut();
        for h in 0..hidden {
            if z1[h] <= 0.0 || dz1[h] == 0.0 {
                continue;
            }
            let d = dz1[h];
            for (gj, &xj) in v1[h * in_dim..(h + 1) * in_dim].iter_mut().zip(x) {
                *gj += d * f64::from(xj);
            }
            v1[in_dim * hidden + h] += d;
        }
    }
    for (g, l) in [(&mut g1, l1), (&mut g2, l2)] {
        for (gj, wj) in g.weights_mut().iter_mut().zip(l.weights()) {
            *gj += regularization * wj;
        }
    }
    Ok(vec![g1, g2])
}

fn minibatches(fm: &FeatureMatrix, config: &BaselineConfig, mut step: impl FnMut(&[(&[f32], u8)])) -> Result<()> {
    let labels = fm.require_labels()?;
    let mut rng = rng::stream(config.seed, 1);
    for _ in 0..config.epochs {
        let mut order: Vec<usize> = (0..fm.rows()).collect();
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(&[f32], u8)> = chunk.iter().map(|&i| (fm.row(i), labels[i])).collect();
            step(&batch);
        }
    }
    Ok(())
}

/// Trains one baseline; deterministic for a fixed `config.seed`.
pub fn train_baseline(kind: BaselineKind, train_fm: &FeatureMatrix, config: &BaselineConfig) -> Result<BaselineModel> {
    config.validate()?;
    if train_fm.is_empty() {
        return Err(Error::Precondition("training store is empty".into()));
    }
    train_fm.require_labels()?;
    let in_dim = train_fm.cols();
    let layers = match kind {
        BaselineKind::LogisticRegression => {
            let (params, _) = head::train_with(in_dim, |_| Ok(Cow::Borrowed(train_fm)), None, &config.logistic_config())?;
            vec![params]
        }
        BaselineKind::LinearSvm => {
            let mut w = HeadParameters::init_uniform(in_dim, 1, &mut rng::stream(config.seed, 0));
            let mut failure = None;
            minibatches(train_fm, config, |batch| match hinge_subgradient(&w, batch, config.regularization) {
                Ok(g) => {
                    for (p, gi) in w.values_mut().iter_mut().zip(g.values()) {
                        *p -= config.learning_rate * gi;
                    }
                }
                Err(e) => failure = Some(e),
            })?;
            if let Some(e) = failure {
                return Err(e);
            }
            vec![w]
        }
        BaselineKind::Mlp => {
            let mut init = rng::stream(config.seed, 0);
            let mut layers = vec![
                HeadParameters::init_uniform(in_dim, config.hidden_units, &mut init),
                HeadParameters::init_uniform(config.hidden_units, NUM_CLASSES, &mut init),
            ];
            let mut states: Vec<OptimizerState> =
                layers.iter().map(|l| OptimizerState::adam(l.values().len())).collect();
            let mut failure = None;
            minibatches(train_fm, config, |batch| match mlp_gradient(&layers, batch, config.regularization) {
                Ok(grads) => {
                    for ((layer, state), g) in layers.iter_mut().zip(&mut states).zip(&grads) {
                        state.update(layer.values_mut(), g.values(), config.learning_rate);
                    }
                }
                Err(e) => failure = Some(e),
            })?;
            if let Some(e) = failure {
                return Err(e);
            }
            layers
        }
    };
    let mut layers = layers;
    for layer in &mut layers {
        if !layer.is_finite() {
            return Err(Error::Degenerate(format!("{kind} training diverged to non-finite parameters")));
        }
        layer.quantize();
    }
    Ok(BaselineModel {
        kind,
        layers,
        config: *config,
    })
}

/// Scores a baseline on a labeled store.
pub fn evaluate_baseline(model: &BaselineModel, test_fm: &FeatureMatrix, positive_class: u8) -> Result<EvalReport> {
    let truths = test_fm.require_labels()?;
    if test_fm.cols() != model.in_dim() {
        return Err(Error::Dimension {
            expected: model.in_dim(),
            actual: test_fm.cols(),
        });
    }
    let mut predicted = Vec::with_capacity(test_fm.rows());
    let mut scores = Vec::with_capacity(test_fm.rows());
    for i in 0..test_fm.rows() {
        let p = model.predict(test_fm.row(i), positive_class)?;
        predicted.push(p.label);
        scores.push(p.margin);
    }
    metrics::evaluate(&predicted, truths, &scores, positive_class)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn store(rows: Vec<Vec<f32>>, labels: Vec<u8>) -> FeatureMatrix {
        FeatureMatrix::from_rows(rows, Some(labels), Vec::new()).unwrap()
    }

    /// Two Gaussian blobs in 6-D centred at `±2` on the first axis with
    /// spread 0.3 and rejection of any point within 0.5 of the plane x0=0.
    fn blobs(n: usize, seed: u64) -> FeatureMatrix {
        let mut rng = rng::stream(seed, 9);
        let noise = Normal::new(0.0, 0.3).unwrap();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        while rows.len() < n {
            let label = (rows.len() % 2) as u8;
            let centre = if label == 1 { 2.0 } else { -2.0 };
            let row: Vec<f32> = (0..6)
                .map(|d| (if d == 0 { centre } else { 0.0 }) + noise.sample(&mut rng) as f32)
                .collect();
            if row[0].abs() > 0.5 {
                rows.push(row);
                labels.push(label);
            }
        }
        store(rows, labels)
    }

    fn train_accuracy(model: &BaselineModel, fm: &FeatureMatrix) -> f64 {
        evaluate_baseline(model, fm, 0).unwrap().accuracy
    }

    #[test]
    fn separable_blobs_are_fitted_by_every_kind() {
        let fm = blobs(100, 3);
        // The construction guarantees x0 = 0 separates the classes.
        let labels = fm.labels().unwrap();
        assert!((0..fm.rows()).all(|i| (fm.row(i)[0] > 0.0) == (labels[i] == 1)));
        let config = BaselineConfig { epochs: 30, batch_size: 10, hidden_units: 16, learning_rate: 0.05, ..Default::default() };
        for kind in BaselineKind::ALL {
            let model = train_baseline(kind, &fm, &config).unwrap();
            assert_eq!(train_accuracy(&model, &fm), 1.0, "{kind}");
        }
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let fm = blobs(20, 1);
        let config = BaselineConfig { epochs: 0, hidden_units: 4, ..Default::default() };
        let svm = train_baseline(BaselineKind::LinearSvm, &fm, &config).unwrap();
        assert_eq!(svm.layers[0], HeadParameters::init_uniform(6, 1, &mut rng::stream(0, 0)));
        let mlp = train_baseline(BaselineKind::Mlp, &fm, &config).unwrap();
        let mut init = rng::stream(0, 0);
        assert_eq!(mlp.layers[0], HeadParameters::init_uniform(6, 4, &mut init));
        assert_eq!(mlp.layers[1], HeadParameters::init_uniform(4, 2, &mut init));
    }

    #[test]
    fn logistic_regression_matches_head_training() {
        let fm = blobs(60, 5);
        let config = BaselineConfig { epochs: 3, seed: 11, ..Default::default() };
        let model = train_baseline(BaselineKind::LogisticRegression, &fm, &config).unwrap();
        let (params, _) = head::train(&fm, &fm, &config.logistic_config()).unwrap();
        assert_eq!(model.layers[0], params);
    }

    #[test]
    fn hinge_flat_region_leaves_only_regularization() {
        let w = HeadParameters::from_parts(2, 1, vec![1.0, -1.0], vec![0.0]).unwrap();
        let a = [3.0f32, 0.0];
        let b = [0.0f32, 3.0];
        let batch: Vec<(&[f32], u8)> = vec![(&a, 1), (&b, 0)];
        assert_eq!(hinge_loss(&w, &batch, 0.0).unwrap(), 0.0);
        let g = hinge_subgradient(&w, &batch, 0.1).unwrap();
        assert_eq!(g.values(), &[0.1, -0.1, 0.0]);
    }

    fn finite_difference_check(
        values: &mut [f64],
        coords: &[usize],
        analytic: &[f64],
        mut loss: impl FnMut(&[f64]) -> f64,
    ) {
        let h = 1e-5;
        for &c in coords {
            let orig = values[c];
            values[c] = orig + h;
            let up = loss(values);
            values[c] = orig - h;
            let down = loss(values);
            values[c] = orig;
            let numeric = (up - down) / (2.0 * h);
            let denom = numeric.abs().max(analytic[c].abs()).max(1e-8);
            assert!((numeric - analytic[c]).abs() / denom < 1e-4, "coord {c}: {numeric} vs {}", analytic[c]);
        }
    }

    #[test]
    fn hinge_subgradient_matches_finite_differences_off_the_kink() {
        let fm = blobs(16, 7);
        let labels = fm.labels().unwrap();
        let batch: Vec<(&[f32], u8)> = (0..fm.rows()).map(|i| (fm.row(i), labels[i])).collect();
        let mut w = HeadParameters::init_uniform(6, 1, &mut rng::stream(2, 0));
        for v in w.values_mut() {
            *v *= 0.3;
        }
        for &(x, l) in &batch {
            let margin = svm_target(l) * w.affine(|j| f64::from(x[j]))[0];
            assert!((margin - 1.0).abs() > 1e-3);
        }
        let g = hinge_subgradient(&w, &batch, 5e-4).unwrap();
        let coords: Vec<usize> = (0..7).collect();
        let mut values = w.values().to_vec();
        finite_difference_check(&mut values, &coords, g.values(), |v| {
            let p = HeadParameters::from_parts(6, 1, v[..6].to_vec(), v[6..].to_vec()).unwrap();
            hinge_loss(&p, &batch, 5e-4).unwrap()
        });
    }

    #[test]
    fn mlp_gradient_matches_finite_differences() {
        let fm = blobs(8, 4);
        let labels = fm.labels().unwrap();
        let batch: Vec<(&[f32], u8)> = (0..fm.rows()).map(|i| (fm.row(i), labels[i])).collect();
        let mut init = rng::stream(6, 0);
        let layers = vec![HeadParameters::init_uniform(6, 5, &mut init), HeadParameters::init_uniform(5, 2, &mut init)];
        let grads = mlp_gradient(&layers, &batch, 5e-4).unwrap();
        for which in 0..2 {
            let mut values = layers[which].values().to_vec();
            let coords: Vec<usize> = (0..values.len()).collect();
            let (i, o) = (layers[which].in_dim(), layers[which].out_dim());
            // Skip coordinates whose hidden unit sits near the ReLU kink.
            let near_kink = |c: usize| -> bool {
                if which == 1 {
                    return false;
                }
                let h = if c < i * o { c / i } else { c - i * o };
                batch.iter().any(|(x, _)| layers[0].affine(|j| f64::from(x[j]))[h].abs() < 1e-3)
            };
            let coords: Vec<usize> = coords.into_iter().filter(|&c| !near_kink(c)).collect();
            finite_difference_check(&mut values, &coords, grads[which].values(), |v| {
                let mut trial = layers.clone();
                trial[which] = HeadParameters::from_parts(i, o, v[..i * o].to_vec(), v[i * o..].to_vec()).unwrap();
                mlp_loss(&trial, &batch, 5e-4).unwrap()
            });
        }
    }

    #[test]
    fn wider_mlp_is_at_least_as_accurate_on_xor() {
        let mut rng = rng::stream(8, 0);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..200 {
            let a: f32 = rng.random_range(-1.0..1.0);
            let b: f32 = rng.random_range(-1.0..1.0);
            if a.abs() < 0.1 || b.abs() < 0.1 {
                continue;
            }
            labels.push(u8::from((a > 0.0) != (b > 0.0)));
            rows.push(vec![a, b]);
        }
        let fm = store(rows, labels);
        let base = BaselineConfig { epochs: 60, batch_size: 10, learning_rate: 0.02, regularization: 0.0, ..Default::default() };
        let narrow = train_baseline(BaselineKind::Mlp, &fm, &BaselineConfig { hidden_units: 1, ..base }).unwrap();
        let wide = train_baseline(BaselineKind::Mlp, &fm, &base).unwrap();
        let (an, aw) = (train_accuracy(&narrow, &fm), train_accuracy(&wide, &fm));
        assert!(aw >= an, "width 128 {aw} < width 1 {an}");
        assert!(aw > 0.9, "{aw}");
        assert!(an < 0.85, "{an}");
    }

    #[test]
    fn save_load_round_trip_for_every_kind() {
        let fm = blobs(20, 2);
        let dir = tempfile::tempdir().unwrap();
        let config = BaselineConfig { epochs: 2, hidden_units: 3, seed: 4, ..Default::default() };
        for kind in BaselineKind::ALL {
            let model = train_baseline(kind, &fm, &config).unwrap();
            let path = dir.path().join(format!("{kind}.pfh"));
            model.save(&[], &path).unwrap();
            let (back, meta) = BaselineModel::load(&path).unwrap();
            assert_eq!(back, model);
            assert_eq!(meta.kind, kind.as_str());
            assert_eq!(meta.seed, 4);
        }
        let head_path = dir.path().join("head.pfh");
        head::save_head(&HeadParameters::zeros(6, 2), &TrainingConfig::default(), &[], &head_path).unwrap();
        assert!(BaselineModel::load(&head_path).is_err());
    }

    #[test]
    fn evaluation_checks_dimensions_and_scores() {
        let fm = blobs(40, 6);
        let model = train_baseline(BaselineKind::LinearSvm, &fm, &BaselineConfig { epochs: 10, ..Default::default() }).unwrap();
        let report = evaluate_baseline(&model, &fm, 0).unwrap();
        assert_eq!((report.accuracy, report.roc_auc), (1.0, 1.0));
        let narrow = store(vec![vec![0.0; 5]], vec![0]);
        assert!(matches!(evaluate_baseline(&model, &narrow, 0), Err(Error::Dimension { expected: 6, actual: 5 })));
        let empty = FeatureMatrix::from_rows(Vec::new(), Some(Vec::new()), Vec::new());
        if let Ok(empty) = empty {
            assert!(train_baseline(BaselineKind::Mlp, &empty, &BaselineConfig::default()).is_err());
        }
    }

    #[test]
    fn coin_flip_scores_give_chance_auc() {
        let mut rng = rng::stream(12, 0);
        let truths: Vec<bool> = (0..90).map(|i| i % 2 == 0).collect();
        let scores: Vec<f64> = (0..90).map(|_| rng.random()).collect();
        let auc = metrics::roc_auc(&scores, &truths).unwrap();
        assert!((auc - 0.5).abs() < 0.1, "{auc}");
    }
}
