use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

use super::{Embedding2D, EmbeddingMetadata};

/// Top-2 principal directions of an `n x d` sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// Unit-norm directions in input space, largest variance first. The
    /// first loading that is not negligibly small is positive.
    pub components: [Vec<f64>; 2],
    /// Sample-covariance eigenvalues of the two components.
    pub explained_variance: [f64; 2],
    pub explained_variance_ratio: [f64; 2],
    /// `n x 2` projection of the centred data.
    pub projection: Vec<[f64; 2]>,
}

/// PCA of row-major `data` (`n x d`). Eigendecomposes the `d x d`
/// covariance when `d <= n` and the `n x n` Gram matrix otherwise.
pub fn pca_fit(data: &[f64], n: usize, d: usize) -> Result<Pca> {
    if n < 3 || d < 2 {
        return Err(Error::Precondition(format!("PCA needs n >= 3 and d >= 2, got {n}x{d}")));
    }
    if data.len() != n * d {
        return Err(Error::Dimension {
            expected: n * d,
            actual: data.len(),
        });
    }
    let x = DMatrix::from_row_slice(n, d, data);
    let mean: Vec<f64> = (0..d).map(|j| x.column(j).sum() / n as f64).collect();
    let mut xc = x;
    for j in 0..d {
        let m = mean[j];
        xc.column_mut(j).add_scalar_mut(-m);
    }
    let dof = (n - 1) as f64;

    let mut components: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    let mut variance = [0.0; 2];
    let total: f64;
    if d <= n {
        let cov = (xc.transpose() * &xc) / dof;
        total = cov.trace();
        let eig = SymmetricEigen::new(cov);
        let order = descending(eig.eigenvalues.as_slice());
        for (c, &k) in order.iter().take(2).enumerate() {
            variance[c] = eig.eigenvalues[k].max(0.0);
            components[c] = eig.eigenvectors.column(k).iter().copied().collect();
        }
    } else {
        let gram = (&xc * xc.transpose()) / dof;
        total = gram.trace();
        let eig = SymmetricEigen::new(gram);
        let order = descending(eig.eigenvalues.as_slice());
        for (c, &k) in order.iter().take(2).enumerate() {
            variance[c] = eig.eigenvalues[k].max(0.0);
            let u = eig.eigenvectors.column(k);
            let v = xc.transpose() * u;
            let norm = v.norm();
            components[c] = if norm > 0.0 {
                v.iter().map(|x| x / norm).collect()
            } else {
                vec![0.0; d]
            };
        }
    }
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::Degenerate("PCA input has zero variance".into()));
    }
    for comp in &mut components {
        orient(comp);
    }
    let projection = (0..n)
        .map(|i| {
            let row = xc.row(i);
            let p = |c: &[f64]| row.iter().zip(c).map(|(a, b)| a * b).sum::<f64>();
            [p(&components[0]), p(&components[1])]
        })
        .collect();
    Ok(Pca {
        mean,
        explained_variance: variance,
        explained_variance_ratio: [variance[0] / total, variance[1] / total],
        components,
        projection,
    })
}

fn descending(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order
}

/// Flips `v` so its first loading above `1e-12 * max|v|` is positive.
fn orient(v: &mut [f64]) {
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-12 * scale) {
        if *first < 0.0 {
            for x in v.iter_mut() {
                *x = -*x;
            }
        }
    }
}

/// 2-D PCA embedding of a feature store.
pub fn pca2(fm: &FeatureMatrix) -> Result<Embedding2D> {
    let pca = pca_fit(&fm.to_f64(), fm.rows(), fm.cols())?;
    Ok(Embedding2D {
        points: pca.projection,
        labels: fm.labels().map(<[u8]>::to_vec),
        metadata: EmbeddingMetadata::Pca {
            explained_variance_ratio: pca.explained_variance_ratio,
        },
    })
}
