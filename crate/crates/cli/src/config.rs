use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use pothole::features::ExtractorSet;
use pothole::head::TrainingConfig;
use pothole::preprocess::AugmentPolicy;

use crate::args::{AugmentFlags, ExtractorFlags, ExtractorMode};

/// Contents of the `--config` file. Flags override every field.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    #[serde(flatten)]
    pub training: TrainingConfig,
    pub manifest: Option<PathBuf>,
    pub graph_dir: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub test_features: Option<PathBuf>,
    pub model: Option<PathBuf>,
    /// Reports without an explicit `--report` path are written here.
    pub report_dir: Option<PathBuf>,
    /// Defaults to `real` when a graph directory is configured, else `stub`.
    pub extractor: Option<ExtractorMode>,
    pub positive_class: u8,
    pub augment: AugmentPolicy,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn apply_extractor(&mut self, flags: &ExtractorFlags) {
        if let Some(dir) = &flags.graph_dir {
            self.graph_dir = Some(dir.clone());
        }
        if let Some(mode) = flags.extractor {
            self.extractor = Some(mode);
        }
    }

    pub fn apply_augment(&mut self, flags: &AugmentFlags) {
        if let Some(v) = flags.max_rotation {
            self.augment.max_rotation_deg = v;
        }
        if let Some(v) = flags.hflip_prob {
            self.augment.hflip_prob = v;
        }
        if let Some(v) = flags.augment_seed {
            self.augment.seed = v;
        }
    }

    pub fn extractor_mode(&self) -> ExtractorMode {
        self.extractor.unwrap_or(if self.graph_dir.is_some() {
            ExtractorMode::Real
        } else {
            ExtractorMode::Stub
        })
    }

    pub fn extractors(&self) -> Result<ExtractorSet> {
        match self.extractor_mode() {
            ExtractorMode::Stub => Ok(ExtractorSet::stub()),
            ExtractorMode::Real => {
                let Some(dir) = &self.graph_dir else {
                    bail!("the real extractor needs --graph-dir");
                };
                real_extractors(dir)
            }
        }
    }
}

#[cfg(feature = "onnx")]
fn real_extractors(dir: &Path) -> Result<ExtractorSet> {
    ExtractorSet::from_graph_dir(dir).with_context(|| format!("loading backbone graphs from {}", dir.display()))
}

#[cfg(not(feature = "onnx"))]
fn real_extractors(_dir: &Path) -> Result<ExtractorSet> {
    bail!("this build has no ONNX runtime; rebuild with the `onnx` feature or use --extractor stub")
}

/// Flag value, else config value, else an error naming the flag.
pub fn pick(flag: &Option<PathBuf>, config: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    flag.clone()
        .or_else(|| config.clone())
        .with_context(|| format!("missing --{name} (or `{}` in the config file)", name.replace('-', "_")))
}
