//! Classification metrics, ROC-AUC, throughput timing and report files.
//!
//! Zero-denominator metrics are reported as `0` and named in
//! [`EvalReport::flags`] instead of becoming NaN.

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Header of the multi-model comparison CSV.
pub const CSV_HEADER: [&str; 7] = ["model", "accuracy", "precision", "recall", "f1", "roc_auc", "fps"];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    #[serde(skip)]
    pub positive_class: u8,
}

impl ConfusionCounts {
    pub fn n(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

pub fn confusion(predictions: &[u8], truths: &[u8], positive_class: u8) -> Result<ConfusionCounts> {
    if predictions.len() != truths.len() {
        return Err(Error::Dimension {
            expected: truths.len(),
            actual: predictions.len(),
        });
    }
    if truths.is_empty() {
        return Err(Error::Precondition("no samples to evaluate".into()));
    }
    let mut c = ConfusionCounts {
        positive_class,
        ..Default::default()
    };
    for (&p, &t) in predictions.iter().zip(truths) {
        match (p == positive_class, t == positive_class) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Correct predictions over all samples.
pub fn accuracy(c: &ConfusionCounts) -> f64 {
    ratio(c.tp + c.tn, c.n())
}

/// `TP / (TP + FN)`.
pub fn recall(c: &ConfusionCounts) -> f64 {
    ratio(c.tp, c.tp + c.fn_)
}

/// `TP / (TP + FP)`.
pub fn precision(c: &ConfusionCounts) -> f64 {
    ratio(c.tp, c.tp + c.fp)
}

/// `2 P R / (P + R)`.
pub fn f1(c: &ConfusionCounts) -> f64 {
    let (p, r) = (precision(c), recall(c));
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn class_sizes(scores: &[f64], truths: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != truths.len() {
        return Err(Error::Dimension {
            expected: truths.len(),
            actual: scores.len(),
        });
    }
    let pos = truths.iter().filter(|&&t| t).count();
    let neg = truths.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Degenerate("ROC-AUC needs both classes among the truths".into()));
    }
    Ok((pos, neg))
}

/// Fraction of (positive, negative) pairs ranked correctly, ties counting ½.
pub fn roc_auc(scores: &[f64], truths: &[bool]) -> Result<f64> {
    let (pos, neg) = class_sizes(scores, truths)?;
    let negatives: Vec<f64> = scores.iter().zip(truths).filter(|(_, &t)| !t).map(|(&s, _)| s).collect();
    // Twice the pair credit, so everything stays integral.
    let mut doubled: u64 = 0;
    for (&s, _) in scores.iter().zip(truths).filter(|(_, &t)| t) {
        for &q in &negatives {
            doubled += match s.partial_cmp(&q) {
                Some(std::cmp::Ordering::Greater) => 2,
                Some(std::cmp::Ordering::Equal) => 1,
                _ => 0,
            };
        }
    }
    Ok(doubled as f64 / (2.0 * pos as f64 * neg as f64))
}

/// ROC points `(fpr, tpr)` from the strictest threshold to the loosest;
/// tied scores move along a diagonal.
pub fn roc_curve(scores: &[f64], truths: &[bool]) -> Result<Vec<(f64, f64)>> {
    let (pos, neg) = class_sizes(scores, truths)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if truths[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Ok(points)
}

/// Trapezoidal area under [`roc_curve`].
pub fn roc_auc_trapezoid(scores: &[f64], truths: &[bool]) -> Result<f64> {
    let pts = roc_curve(scores, truths)?;
    Ok(pts
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FpsReport {
    pub fps: f64,
    pub ms_per_image: f64,
    pub timed_images: usize,
    pub warmup: usize,
    pub parallel: bool,
}

impl FpsReport {
    fn from_elapsed(elapsed: Duration, timed_images: usize, warmup: usize, parallel: bool) -> Self {
        let secs = elapsed.as_secs_f64().max(1e-9);
        FpsReport {
            fps: timed_images as f64 / secs,
            ms_per_image: secs * 1000.0 / timed_images as f64,
            timed_images,
            warmup,
            parallel,
        }
    }
}

fn split_warmup<T>(images: &[T], warmup: usize) -> Result<(&[T], &[T])> {
    if images.len() <= warmup {
        return Err(Error::Precondition(format!(
            "fps benchmark needs at least one image after {warmup} warmup images, got {}",
            images.len()
        )));
    }
    Ok(images.split_at(warmup))
}

/// Runs the first `warmup` items untimed, then times the rest end to end on
/// the calling thread.
pub fn fps_bench<T, F>(mut pipeline: F, images: &[T], warmup: usize) -> Result<FpsReport>
where
    F: FnMut(&T) -> Result<u8>,
{
    let (warm, timed) = split_warmup(images, warmup)?;
    for item in warm {
        pipeline(item)?;
    }
    let start = Instant::now();
    for item in timed {
        std::hint::black_box(pipeline(item)?);
    }
    Ok(FpsReport::from_elapsed(start.elapsed(), timed.len(), warmup, false))
}

/// [`fps_bench`] with the timed section spread over the rayon pool.
pub fn fps_bench_parallel<T, F>(pipeline: F, images: &[T], warmup: usize) -> Result<FpsReport>
where
    T: Sync,
    F: Fn(&T) -> Result<u8> + Sync,
{
    let (warm, timed) = split_warmup(images, warmup)?;
    for item in warm {
        pipeline(item)?;
    }
    let start = Instant::now();
    timed.par_iter().map(&pipeline).collect::<Result<Vec<_>>>()?;
    Ok(FpsReport::from_elapsed(start.elapsed(), timed.len(), warmup, true))
}

/// Metrics for one model on one labeled set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "ReportRepr", into = "ReportRepr")]
pub struct EvalReport {
    pub n: usize,
    pub positive_class: u8,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub roc_auc: f64,
    pub fps: Option<f64>,
    pub ms_per_image: Option<f64>,
    pub confusion: ConfusionCounts,
    pub flags: Vec<String>,
    /// Effective configuration that produced the evaluated model.
    pub config: Option<serde_json::Value>,
}

#[derive(Serialize, Deserialize)]
struct ReportRepr {
    n: usize,
    positive_class: u8,
    accuracy: f64,
    precision: f64,
    recall: f64,
    f1: f64,
    roc_auc: f64,
    fps: Option<f64>,
    ms_per_image: Option<f64>,
    confusion: ConfusionCounts,
    flags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config: Option<serde_json::Value>,
}

impl From<ReportRepr> for EvalReport {
    fn from(r: ReportRepr) -> Self {
        EvalReport {
            n: r.n,
            positive_class: r.positive_class,
            accuracy: r.accuracy,
            precision: r.precision,
            recall: r.recall,
            f1: r.f1,
            roc_auc: r.roc_auc,
            fps: r.fps,
            ms_per_image: r.ms_per_image,
            confusion: ConfusionCounts {
                positive_class: r.positive_class,
                ..r.confusion
            },
            flags: r.flags,
            config: r.config,
        }
    }
}

impl From<EvalReport> for ReportRepr {
    fn from(r: EvalReport) -> Self {
        ReportRepr {
            n: r.n,
            positive_class: r.positive_class,
            accuracy: r.accuracy,
            precision: r.precision,
            recall: r.recall,
            f1: r.f1,
            roc_auc: r.roc_auc,
            fps: r.fps,
            ms_per_image: r.ms_per_image,
            confusion: r.confusion,
            flags: r.flags,
            config: r.config,
        }
    }
}

/// Scores predictions against truths. `scores` rank samples by how
/// strongly they are predicted positive (probabilities or logit margins);
/// only their order matters, through ROC-AUC.
pub fn evaluate(predicted: &[u8], truths: &[u8], scores: &[f64], positive_class: u8) -> Result<EvalReport> {
    let c = confusion(predicted, truths, positive_class)?;
    let mut flags = Vec::new();
    if c.tp + c.fp == 0 {
        flags.push("precision_zero_denominator".to_owned());
    }
    if c.tp + c.fn_ == 0 {
        flags.push("recall_zero_denominator".to_owned());
    }
    if precision(&c) + recall(&c) == 0.0 {
        flags.push("f1_zero_denominator".to_owned());
    }
    let positives: Vec<bool> = truths.iter().map(|&t| t == positive_class).collect();
    let roc_auc = match roc_auc(scores, &positives) {
        Ok(v) => v,
        Err(Error::Degenerate(_)) => {
            flags.push("roc_auc_single_class".to_owned());
            0.0
        }
        Err(e) => return Err(e),
    };
    Ok(EvalReport {
        n: c.n(),
        positive_class,
        accuracy: accuracy(&c),
        precision: precision(&c),
        recall: recall(&c),
        f1: f1(&c),
        roc_auc,
        fps: None,
        ms_per_image: None,
        confusion: c,
        flags,
        config: None,
    })
}

impl EvalReport {
    pub fn with_fps(mut self, fps: &FpsReport) -> Self {
        self.fps = Some(fps.fps);
        self.ms_per_image = Some(fps.ms_per_image);
        self.flags.push(
            if fps.parallel {
                "fps_end_to_end_parallel"
            } else {
                "fps_end_to_end_single_thread"
            }
            .to_owned(),
        );
        self
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn csv_record(&self, model: &str) -> Vec<String> {
        vec![
            model.to_owned(),
            self.accuracy.to_string(),
            self.precision.to_string(),
            self.recall.to_string(),
            self.f1.to_string(),
            self.roc_auc.to_string(),
            self.fps.map(|v| v.to_string()).unwrap_or_default(),
        ]
    }
}

/// Writes the report as pretty JSON with a fixed key order.
pub fn emit_report(report: &EvalReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, report.to_json()?).map_err(|e| Error::io(path, e))
}

pub fn comparison_csv(rows: &[(&str, &EvalReport)]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for (model, report) in rows {
        w.write_record(report.csv_record(model))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::format("csv", e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Appends one row, writing the header first if the file is new or empty.
pub fn append_comparison_row(path: impl AsRef<Path>, model: &str, report: &EvalReport) -> Result<()> {
    let path = path.as_ref();
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    if fresh {
        w.write_record(CSV_HEADER)?;
    }
    w.write_record(report.csv_record(model))?;
    w.flush().map_err(|e| Error::io(path, e))
}
