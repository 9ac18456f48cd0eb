//! Exact `O(n^2)` t-SNE.

use std::f64::consts::LN_2;

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::rng;

use super::{Embedding2D, EmbeddingMetadata};

/// Floor applied to joint probabilities, as in the reference implementation.
const P_FLOOR: f64 = 1e-12;
const BANDWIDTH_STEPS: usize = 200;
const MIN_GAIN: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    /// Exaggeration is applied and the initial momentum used for this many
    /// iterations.
    pub exaggeration_iterations: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    /// Allowed gap between a point's conditional entropy (bits) and
    /// `log2(perplexity)`.
    pub entropy_tolerance: f64,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        TsneConfig {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iterations: 250,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            entropy_tolerance: 1e-5,
            seed: 0,
        }
    }
}

/// Row-major `n x n` squared Euclidean distances.
pub fn pairwise_sq_distances(data: &[f64], n: usize, d: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    out.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let xi = &data[i * d..(i + 1) * d];
        for (j, slot) in row.iter_mut().enumerate() {
            let xj = &data[j * d..(j + 1) * d];
            *slot = xi.iter().zip(xj).map(|(a, b)| (a - b) * (a - b)).sum();
        }
    });
    out
}

/// Result of the per-point bandwidth search.
#[derive(Debug, Clone, PartialEq)]
pub struct Affinities {
    pub n: usize,
    /// Row-stochastic conditionals `p_{j|i}` (row `i`, zero diagonal).
    pub conditional: Vec<f64>,
    /// Precision `1 / (2 sigma_i^2)` chosen for each point.
    pub betas: Vec<f64>,
    /// Shannon entropy of each conditional in bits.
    pub entropies: Vec<f64>,
}

impl Affinities {
    /// Symmetrized joint `(p_{j|i} + p_{i|j}) / 2n`, floored at `1e-12`.
    pub fn joint(&self) -> Vec<f64> {
        let n = self.n;
        let mut p = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let v = (self.conditional[i * n + j] + self.conditional[j * n + i]) / (2.0 * n as f64);
                    p[i * n + j] = v.max(P_FLOOR);
                }
            }
        }
        p
    }
}

/// Gaussian conditional of row `i` at precision `beta`, and its entropy in
/// bits. Distances are shifted by the row minimum so nothing underflows.
fn conditional_row(dist: &[f64], i: usize, beta: f64, row: &mut [f64]) -> f64 {
    let min = dist
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &v)| v)
        .fold(f64::INFINITY, f64::min);
    let mut sum = 0.0;
    let mut weighted = 0.0;
    for (j, (&dij, p)) in dist.iter().zip(row.iter_mut()).enumerate() {
        if j == i {
            *p = 0.0;
            continue;
        }
        let shifted = dij - min;
        *p = (-beta * shifted).exp();
        sum += *p;
        weighted += shifted * *p;
    }
    for p in row.iter_mut() {
        *p /= sum;
    }
    (sum.ln() + beta * weighted / sum) / LN_2
}

/// Bisection over `beta` for every point so that the conditional entropy
/// matches `log2(perplexity)` within `tolerance` bits. Points whose target
/// is unreachable (for example all-identical neighbours) keep the closest
/// conditional found.
pub fn calibrate_affinities(sq_dist: &[f64], n: usize, perplexity: f64, tolerance: f64) -> Affinities {
    let target = perplexity.log2();
    let mut conditional = vec![0.0; n * n];
    let results: Vec<(f64, f64)> = conditional
        .par_chunks_mut(n)
        .enumerate()
        .map(|(i, row)| {
            let dist = &sq_dist[i * n..(i + 1) * n];
            let mut beta = 1.0;
            let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
            let mut h = conditional_row(dist, i, beta, row);
            for _ in 0..BANDWIDTH_STEPS {
                if (h - target).abs() <= tolerance {
                    break;
                }
                if h > target {
                    lo = beta;
                    beta = if hi.is_infinite() { beta * 2.0 } else { (beta + hi) / 2.0 };
                } else {
                    hi = beta;
                    beta = (beta + lo) / 2.0;
                }
                h = conditional_row(dist, i, beta, row);
            }
            (beta, h)
        })
        .collect();
    let (betas, entropies) = results.into_iter().unzip();
    Affinities {
        n,
        conditional,
        betas,
        entropies,
    }
}

/// Student-t similarities `q_ij` of an embedding, and the unnormalized
/// kernel `1 / (1 + |y_i - y_j|^2)`.
fn low_dim_affinities(y: &[[f64; 2]]) -> (Vec<f64>, Vec<f64>) {
    let n = y.len();
    let mut num = vec![0.0; n * n];
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let dx = y[i][0] - y[j][0];
                let dy = y[i][1] - y[j][1];
                let v = 1.0 / (1.0 + dx * dx + dy * dy);
                num[i * n + j] = v;
                sum += v;
            }
        }
    }
    let q = num.iter().map(|v| (v / sum).max(P_FLOOR)).collect();
    (q, num)
}

/// `KL(P || Q)` of joint affinities `p` against embedding `y`.
pub fn kl_divergence(p: &[f64], y: &[[f64; 2]]) -> f64 {
    let n = y.len();
    let (q, _) = low_dim_affinities(y);
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let pij = p[i * n + j];
                kl += pij * (pij / q[i * n + j]).ln();
            }
        }
    }
    kl
}

/// Full output of one t-SNE run.
#[derive(Debug, Clone, PartialEq)]
pub struct TsneRun {
    pub points: Vec<[f64; 2]>,
    pub affinities: Affinities,
    pub initial_kl: f64,
    pub final_kl: f64,
}

/// Embeds row-major `data` (`n x d`) in the plane.
pub fn tsne_embed(data: &[f64], n: usize, d: usize, config: &TsneConfig) -> Result<TsneRun> {
    if data.len() != n * d {
        return Err(Error::Dimension {
            expected: n * d,
            actual: data.len(),
        });
    }
    if !(config.perplexity > 0.0 && config.perplexity.is_finite()) {
        return Err(Error::Precondition(format!("perplexity must be positive, got {}", config.perplexity)));
    }
    if (n as f64) < 3.0 * config.perplexity {
        return Err(Error::Precondition(format!(
            "perplexity {} is too large for {n} points (need n >= 3 * perplexity)",
            config.perplexity
        )));
    }
    if !(config.learning_rate > 0.0) {
        return Err(Error::Precondition("learning_rate must be positive".into()));
    }

    let dist = pairwise_sq_distances(data, n, d);
    let affinities = calibrate_affinities(&dist, n, config.perplexity, config.entropy_tolerance);
    let p = affinities.joint();

    let mut rng = rng::stream(config.seed, 0);
    let init = Normal::new(0.0, 1e-2).expect("valid normal");
    let mut y: Vec<[f64; 2]> = (0..n).map(|_| [init.sample(&mut rng), init.sample(&mut rng)]).collect();
    let initial_kl = kl_divergence(&p, &y);

    let mut update = vec![[0.0f64; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut grad = vec![[0.0f64; 2]; n];
    for iter in 0..config.iterations {
        let early = iter < config.exaggeration_iterations;
        let exaggeration = if early { config.early_exaggeration } else { 1.0 };
        let momentum = if early { config.initial_momentum } else { config.final_momentum };

        let (q, num) = low_dim_affinities(&y);
        for i in 0..n {
            let mut g = [0.0; 2];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let k = i * n + j;
                let m = (exaggeration * p[k] - q[k]) * num[k];
                g[0] += m * (y[i][0] - y[j][0]);
                g[1] += m * (y[i][1] - y[j][1]);
            }
            grad[i] = [4.0 * g[0], 4.0 * g[1]];
        }
        for i in 0..n {
            for c in 0..2 {
                let same_sign = (grad[i][c] > 0.0) == (update[i][c] > 0.0);
                gains[i][c] = if same_sign { gains[i][c] * 0.8 } else { gains[i][c] + 0.2 };
                gains[i][c] = gains[i][c].max(MIN_GAIN);
                update[i][c] = momentum * update[i][c] - config.learning_rate * gains[i][c] * grad[i][c];
                y[i][c] += update[i][c];
            }
        }
        for c in 0..2 {
            let mean = y.iter().map(|p| p[c]).sum::<f64>() / n as f64;
            for p in &mut y {
                p[c] -= mean;
            }
        }
    }
    if y.iter().any(|p| !(p[0].is_finite() && p[1].is_finite())) {
        return Err(Error::Degenerate("t-SNE produced non-finite coordinates".into()));
    }
    let final_kl = kl_divergence(&p, &y);
    Ok(TsneRun {
        points: y,
        affinities,
        initial_kl,
        final_kl,
    })
}

/// 2-D t-SNE embedding of a feature store.
pub fn tsne2(fm: &FeatureMatrix, config: &TsneConfig) -> Result<Embedding2D> {
    let run = tsne_embed(&fm.to_f64(), fm.rows(), fm.cols(), config)?;
    Ok(Embedding2D {
        points: run.points,
        labels: fm.labels().map(<[u8]>::to_vec),
        metadata: EmbeddingMetadata::Tsne {
            perplexity: config.perplexity,
            iterations: config.iterations,
            initial_kl: run.initial_kl,
            final_kl: run.final_kl,
        },
    })
}
