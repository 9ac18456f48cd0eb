//! Plot-ready views of a feature store: 2-D PCA and t-SNE scatter data and
//! the sample-by-feature heat matrix.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

mod heatmap;
mod pca;
mod tsne;

pub use heatmap::{feature_heatmap, heat_pixel, Heatmap, HEAT_MAX, HEAT_MIN};
pub use pca::{pca2, pca_fit, Pca};
pub use tsne::{calibrate_affinities, kl_divergence, pairwise_sq_distances, tsne2, tsne_embed, Affinities, TsneConfig, TsneRun};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingMethod {
    Pca,
    Tsne,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum EmbeddingMetadata {
    Pca {
        explained_variance_ratio: [f64; 2],
    },
    Tsne {
        perplexity: f64,
        iterations: usize,
        initial_kl: f64,
        final_kl: f64,
    },
}

/// `n` points in the plane, in store row order.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding2D {
    pub points: Vec<[f64; 2]>,
    pub labels: Option<Vec<u8>>,
    pub metadata: EmbeddingMetadata,
}

impl Embedding2D {
    pub fn method(&self) -> EmbeddingMethod {
        match self.metadata {
            EmbeddingMetadata::Pca { .. } => EmbeddingMethod::Pca,
            EmbeddingMetadata::Tsne { .. } => EmbeddingMethod::Tsne,
        }
    }

    /// CSV with header `x,y,label`; the label column is empty for
    /// unlabeled stores.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["x", "y", "label"])?;
        for (i, p) in self.points.iter().enumerate() {
            let label = self
                .labels
                .as_ref()
                .map(|l| l[i].to_string())
                .unwrap_or_default();
            w.write_record([p[0].to_string(), p[1].to_string(), label])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::format("csv", e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Writes the CSV and a `.json` sidecar holding the metadata.
    pub fn save(&self, csv_path: impl AsRef<Path>) -> Result<()> {
        let csv_path = csv_path.as_ref();
        fs::write(csv_path, self.to_csv()?).map_err(|e| Error::io(csv_path, e))?;
        let meta_path = csv_path.with_extension("json");
        let mut json = serde_json::to_string_pretty(&self.metadata)?;
        json.push('\n');
        fs::write(&meta_path, json).map_err(|e| Error::io(&meta_path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let e = Embedding2D {
            points: vec![[0.5, -1.0], [2.0, 0.25]],
            labels: Some(vec![1, 0]),
            metadata: EmbeddingMetadata::Pca { explained_variance_ratio: [0.75, 0.25] },
        };
        assert_eq!(e.to_csv().unwrap(), "x,y,label\n0.5,-1,1\n2,0.25,0\n");
        assert_eq!(e.method(), EmbeddingMethod::Pca);
        let unlabeled = Embedding2D { labels: None, ..e };
        assert_eq!(unlabeled.to_csv().unwrap(), "x,y,label\n0.5,-1,\n2,0.25,\n");
    }

    #[test]
    fn save_writes_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let e = Embedding2D {
            points: vec![[1.0, 2.0]],
            labels: None,
            metadata: EmbeddingMetadata::Tsne { perplexity: 5.0, iterations: 10, initial_kl: 2.0, final_kl: 1.0 },
        };
        let path = dir.path().join("e.csv");
        e.save(&path).unwrap();
        let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("e.json")).unwrap()).unwrap();
        assert_eq!(meta["method"], "tsne");
        assert_eq!(meta["final_kl"], 1.0);
    }
}
