//! Frozen backbone feature extraction and fusion.
//!
//! Each backbone maps a standardized 224x224 image to its global-average
//! pooled output. The three vectors are concatenated in the fixed order
//! ResNet50 | EfficientNet | RegNet, giving the 5344-d fused vector the head
//! is trained on.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{self, Manifest, Split};
use crate::error::{Error, Result};
use crate::preprocess::{self, NormalizedImage, STANDARD_SIZE};

#[cfg(feature = "onnx")]
mod onnx;
pub(crate) mod store;
mod stub;

#[cfg(feature = "onnx")]
pub use onnx::OnnxExtractor;
pub use store::{load_features, save_features, PFV1_MAGIC};
pub use stub::{stub_features, StubExtractor};

/// Fused width when all three backbones are present: 2048 + 1280 + 2016.
pub const FUSED_DIM: usize = 5344;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackboneId {
    Resnet50,
    Efficientnet,
    Regnet,
}

impl BackboneId {
    /// Canonical fusion order.
    pub const ALL: [BackboneId; 3] = [BackboneId::Resnet50, BackboneId::Efficientnet, BackboneId::Regnet];

    pub fn output_dim(self) -> usize {
        match self {
            BackboneId::Resnet50 => 2048,
            BackboneId::Efficientnet => 1280,
            BackboneId::Regnet => 2016,
        }
    }

    /// One-byte tag used by the `PFV1` slice table.
    pub fn code(self) -> u8 {
        match self {
            BackboneId::Resnet50 => 0,
            BackboneId::Efficientnet => 1,
            BackboneId::Regnet => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(usize::from(code)).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BackboneId::Resnet50 => "resnet50",
            BackboneId::Efficientnet => "efficientnet",
            BackboneId::Regnet => "regnet",
        }
    }

    /// File name looked up inside a graph directory.
    pub fn graph_file_name(self) -> String {
        format!("{}.onnx", self.as_str())
    }
}

impl fmt::Display for BackboneId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BackboneId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| Error::Precondition(format!("unknown backbone `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneSpec {
    pub id: BackboneId,
    pub output_dim: usize,
    pub graph_path: Option<PathBuf>,
}

impl BackboneSpec {
    pub fn new(id: BackboneId) -> Self {
        BackboneSpec {
            id,
            output_dim: id.output_dim(),
            graph_path: None,
        }
    }

    pub fn with_graph(id: BackboneId, path: impl Into<PathBuf>) -> Self {
        BackboneSpec {
            graph_path: Some(path.into()),
            ..Self::new(id)
        }
    }
}

/// A frozen backbone. Implementations must tolerate concurrent calls on
/// distinct images.
pub trait FeatureExtractor: Send + Sync {
    fn spec(&self) -> &BackboneSpec;

    /// Pooled output for one standardized image.
    fn extract(&self, image: &NormalizedImage) -> Result<Vec<f32>>;
}

/// Runs one extractor with the shape and finiteness checks applied.
pub fn extract_one(extractor: &dyn FeatureExtractor, image: &NormalizedImage) -> Result<Vec<f32>> {
    let spec = extractor.spec();
    if !image.is_standard() {
        return Err(Error::Shape {
            backbone: spec.id,
            expected: vec![1, 3, STANDARD_SIZE, STANDARD_SIZE],
            actual: vec![1, 3, image.height(), image.width()],
        });
    }
    let features = extractor.extract(image)?;
    if features.len() != spec.output_dim {
        return Err(Error::Shape {
            backbone: spec.id,
            expected: vec![1, spec.output_dim],
            actual: vec![1, features.len()],
        });
    }
    if let Some(i) = features.iter().position(|v| !v.is_finite()) {
        return Err(Error::Runtime {
            backbone: spec.id,
            reason: format!("non-finite output at index {i}"),
        });
    }
    Ok(features)
}

/// Location of one backbone's features inside a fused row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceInfo {
    pub backbone: BackboneId,
    pub start: usize,
    pub len: usize,
}

pub fn slice_map_for(ids: &[BackboneId]) -> Vec<SliceInfo> {
    let mut start = 0;
    ids.iter()
        .map(|&backbone| {
            let info = SliceInfo {
                backbone,
                start,
                len: backbone.output_dim(),
            };
            start += info.len;
            info
        })
        .collect()
}

pub fn canonical_slice_map() -> Vec<SliceInfo> {
    slice_map_for(&BackboneId::ALL)
}

/// Concatenates per-backbone vectors given in canonical order.
pub fn fuse(parts: &[(BackboneId, &[f32])]) -> Result<(Vec<f32>, Vec<SliceInfo>)> {
    if parts.windows(2).any(|w| w[0].0 >= w[1].0) {
        return Err(Error::Precondition(
            "backbone vectors must be given once each in resnet50, efficientnet, regnet order".into(),
        ));
    }
    let mut fused = Vec::with_capacity(parts.iter().map(|(_, v)| v.len()).sum());
    for &(backbone, vector) in parts {
        if vector.len() != backbone.output_dim() {
            return Err(Error::Fusion {
                backbone,
                expected: backbone.output_dim(),
                actual: vector.len(),
            });
        }
        fused.extend_from_slice(vector);
    }
    let ids: Vec<_> = parts.iter().map(|(id, _)| *id).collect();
    Ok((fused, slice_map_for(&ids)))
}

/// `n x d` row-major feature store with optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f32>,
    labels: Option<Vec<u8>>,
    slice_map: Vec<SliceInfo>,
}

/// An empty slice map marks a store without backbone provenance (for
/// example hand-built toy data); otherwise the slices must tile the columns.
fn check_slice_map(slice_map: &[SliceInfo], cols: usize) -> Result<()> {
    if slice_map.is_empty() {
        return Ok(());
    }
    let mut next = 0;
    for (i, s) in slice_map.iter().enumerate() {
        if s.start != next {
            return Err(Error::Precondition(format!(
                "slice {i} ({}) starts at {}, expected {next}",
                s.backbone, s.start
            )));
        }
        if i > 0 && slice_map[i - 1].backbone >= s.backbone {
            return Err(Error::Precondition(
                "slices must follow the canonical backbone order".into(),
            ));
        }
        next += s.len;
    }
    if next != cols {
        return Err(Error::Dimension {
            expected: cols,
            actual: next,
        });
    }
    Ok(())
}

impl FeatureMatrix {
    pub fn new(
        rows: usize,
        cols: usize,
        values: Vec<f32>,
        labels: Option<Vec<u8>>,
        slice_map: Vec<SliceInfo>,
    ) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Dimension {
                expected: rows * cols,
                actual: values.len(),
            });
        }
        if let Some(labels) = &labels {
            if labels.len() != rows {
                return Err(Error::Dimension {
                    expected: rows,
                    actual: labels.len(),
                });
            }
            if let Some(&bad) = labels.iter().find(|&&l| !dataset::is_valid_label(l)) {
                return Err(Error::Precondition(format!("invalid label {bad}")));
            }
        }
        check_slice_map(&slice_map, cols)?;
        Ok(FeatureMatrix {
            rows,
            cols,
            values,
            labels,
            slice_map,
        })
    }

    /// Row width comes from the slice map, or from the first row when the
    /// map is empty.
    pub fn from_rows(rows: Vec<Vec<f32>>, labels: Option<Vec<u8>>, slice_map: Vec<SliceInfo>) -> Result<Self> {
        let cols = if slice_map.is_empty() {
            rows.first().map_or(0, Vec::len)
        } else {
            slice_map.iter().map(|s| s.len).sum()
        };
        let n = rows.len();
        let mut values = Vec::with_capacity(n * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::Dimension {
                    expected: cols,
                    actual: row.len(),
                });
            }
            values.extend(row);
        }
        Self::new(n, cols, values, labels, slice_map)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    pub fn require_labels(&self) -> Result<&[u8]> {
        self.labels()
            .ok_or_else(|| Error::Precondition("feature store has no labels".into()))
    }

    pub fn slice_map(&self) -> &[SliceInfo] {
        &self.slice_map
    }

    /// One backbone's part of row `i`.
    pub fn slice(&self, i: usize, backbone: BackboneId) -> Option<&[f32]> {
        let s = self.slice_map.iter().find(|s| s.backbone == backbone)?;
        Some(&self.row(i)[s.start..s.start + s.len])
    }

    /// Store restricted to one backbone's columns.
    pub fn select_backbone(&self, backbone: BackboneId) -> Result<FeatureMatrix> {
        let s = *self
            .slice_map
            .iter()
            .find(|s| s.backbone == backbone)
            .ok_or_else(|| Error::Precondition(format!("store has no {backbone} slice")))?;
        let values = (0..self.rows)
            .flat_map(|i| self.row(i)[s.start..s.start + s.len].iter().copied())
            .collect();
        FeatureMatrix::new(
            self.rows,
            s.len,
            values,
            self.labels.clone(),
            vec![SliceInfo { start: 0, ..s }],
        )
    }

    /// Row-major copy promoted to `f64`.
    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| f64::from(v)).collect()
    }
}

/// One extractor per backbone, kept in canonical order.
pub struct ExtractorSet {
    extractors: Vec<Box<dyn FeatureExtractor>>,
}

impl fmt::Debug for ExtractorSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExtractorSet").field("ids", &self.ids()).finish()
    }
}

impl ExtractorSet {
    pub fn new(mut extractors: Vec<Box<dyn FeatureExtractor>>) -> Result<Self> {
        extractors.sort_by_key(|e| e.spec().id);
        if extractors.is_empty() {
            return Err(Error::Precondition("no extractors given".into()));
        }
        if extractors.windows(2).any(|w| w[0].spec().id == w[1].spec().id) {
            return Err(Error::Precondition("duplicate backbone extractor".into()));
        }
        Ok(ExtractorSet { extractors })
    }

    /// Stub extractors for all three backbones.
    pub fn stub() -> Self {
        ExtractorSet {
            extractors: BackboneId::ALL
                .into_iter()
                .map(|id| Box::new(StubExtractor::new(id)) as Box<dyn FeatureExtractor>)
                .collect(),
        }
    }

    /// Loads `resnet50.onnx`, `efficientnet.onnx` and `regnet.onnx` from `dir`.
    #[cfg(feature = "onnx")]
    pub fn from_graph_dir(dir: impl AsRef<std::path::Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let extractors = BackboneId::ALL
            .into_iter()
            .map(|id| {
                OnnxExtractor::load(BackboneSpec::with_graph(id, dir.join(id.graph_file_name())))
                    .map(|e| Box::new(e) as Box<dyn FeatureExtractor>)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(extractors)
    }

    pub fn ids(&self) -> Vec<BackboneId> {
        self.extractors.iter().map(|e| e.spec().id).collect()
    }

    pub fn slice_map(&self) -> Vec<SliceInfo> {
        slice_map_for(&self.ids())
    }

    pub fn output_dim(&self) -> usize {
        self.extractors.iter().map(|e| e.spec().output_dim).sum()
    }

    pub fn extract_fused(&self, image: &NormalizedImage) -> Result<Vec<f32>> {
        let vectors = self
            .extractors
            .iter()
            .map(|e| extract_one(e.as_ref(), image))
            .collect::<Result<Vec<_>>>()?;
        let parts: Vec<_> = self
            .extractors
            .iter()
            .zip(&vectors)
            .map(|(e, v)| (e.spec().id, v.as_slice()))
            .collect();
        Ok(fuse(&parts)?.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitFilter {
    All,
    Only(Split),
}

impl SplitFilter {
    pub fn accepts(self, split: Split) -> bool {
        match self {
            SplitFilter::All => true,
            SplitFilter::Only(s) => s == split,
        }
    }
}

impl FromStr for SplitFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "all" {
            Ok(SplitFilter::All)
        } else {
            s.parse().map(SplitFilter::Only)
        }
    }
}

/// Fused features for every manifest sample accepted by `filter`, in
/// manifest order.
pub fn extract_dataset(manifest: &Manifest, extractors: &ExtractorSet, filter: SplitFilter) -> Result<FeatureMatrix> {
    extract_dataset_with(manifest, extractors, filter, &|_, image| Ok(image))
}

/// Like [`extract_dataset`], passing each standardized image through
/// `transform(row_index, image)` first (used for on-the-fly augmentation).
pub fn extract_dataset_with(
    manifest: &Manifest,
    extractors: &ExtractorSet,
    filter: SplitFilter,
    transform: &(dyn Fn(usize, NormalizedImage) -> Result<NormalizedImage> + Sync),
) -> Result<FeatureMatrix> {
    let selected: Vec<_> = manifest
        .samples
        .iter()
        .filter(|s| filter.accepts(s.split))
        .collect();
    let rows = selected
        .par_iter()
        .enumerate()
        .map(|(i, sample)| {
            preprocess::load_standardized(&sample.path)
                .and_then(|img| transform(i, img))
                .and_then(|img| extractors.extract_fused(&img))
                .map_err(|e| Error::Sample {
                    path: sample.path.clone(),
                    source: Box::new(e),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    let labels = selected.iter().map(|s| s.label).collect();
    FeatureMatrix::from_rows(rows, Some(labels), extractors.slice_map())
}

/// Features of one augmented pass over the accepted samples. Row `i` of
/// epoch `e` is augmented with the substream `(policy.seed, e, i)`, so a
/// pass is reproducible and independent of thread scheduling.
pub fn extract_augmented(
    manifest: &Manifest,
    extractors: &ExtractorSet,
    filter: SplitFilter,
    policy: &preprocess::AugmentPolicy,
    epoch: u32,
) -> Result<FeatureMatrix> {
    policy.validate()?;
    extract_dataset_with(manifest, extractors, filter, &|i, image| {
        let mut rng = crate::rng::substream(policy.seed, epoch, i as u32);
        preprocess::augment(&image, policy, &mut rng)
    })
}

/// Path-free variant for images already in memory.
pub fn extract_images(images: &[NormalizedImage], labels: Option<Vec<u8>>, extractors: &ExtractorSet) -> Result<FeatureMatrix> {
    let rows = images
        .par_iter()
        .map(|img| extractors.extract_fused(img))
        .collect::<Result<Vec<_>>>()?;
    FeatureMatrix::from_rows(rows, labels, extractors.slice_map())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimensions_sum_to_fused_width() {
        let total: usize = BackboneId::ALL.iter().map(|b| b.output_dim()).sum();
        assert_eq!(total, FUSED_DIM);
        let map = canonical_slice_map();
        let offsets: Vec<_> = map.iter().map(|s| (s.start, s.len)).collect();
        assert_eq!(offsets, vec![(0, 2048), (2048, 1280), (3328, 2016)]);
    }

    #[test]
    fn fuse_and_slice_round_trip() {
        let vs: Vec<Vec<f32>> = BackboneId::ALL
            .iter()
            .map(|b| (0..b.output_dim()).map(|i| i as f32 * 0.5 - 3.0).collect())
            .collect();
        let parts: Vec<_> = BackboneId::ALL.iter().copied().zip(vs.iter().map(Vec::as_slice)).collect();
        let (fused, map) = fuse(&parts).unwrap();
        assert_eq!(fused.len(), FUSED_DIM);
        let fm = FeatureMatrix::from_rows(vec![fused], None, map).unwrap();
        for (id, v) in BackboneId::ALL.iter().zip(&vs) {
            assert_eq!(fm.slice(0, *id).unwrap(), v.as_slice());
        }
    }

    #[test]
    fn fuse_names_the_offending_backbone() {
        let short = vec![0.0; 2047];
        let e = vec![0.0; 1280];
        let r = vec![0.0; 2016];
        let err = fuse(&[
            (BackboneId::Resnet50, &short),
            (BackboneId::Efficientnet, &e),
            (BackboneId::Regnet, &r),
        ])
        .unwrap_err();
        match err {
            Error::Fusion { backbone, expected, actual } => {
                assert_eq!(backbone, BackboneId::Resnet50);
                assert_eq!((expected, actual), (2048, 2047));
            }
            other => panic!("unexpected error {other}"),
        }
        assert!(err_msg_contains(
            fuse(&[(BackboneId::Regnet, &r), (BackboneId::Resnet50, &short)]),
            "order"
        ));
    }

    fn err_msg_contains<T>(r: Result<T>, needle: &str) -> bool {
        matches!(r, Err(e) if e.to_string().contains(needle))
    }

    #[test]
    fn matrix_validates_shape_and_slices() {
        let map = slice_map_for(&[BackboneId::Efficientnet]);
        assert!(FeatureMatrix::new(1, 1280, vec![0.0; 1279], None, map.clone()).is_err());
        assert!(FeatureMatrix::new(1, 1280, vec![0.0; 1280], Some(vec![3]), map.clone()).is_err());
        assert!(FeatureMatrix::new(0, 1280, vec![], Some(vec![]), map).is_ok());
        let mut bad = canonical_slice_map();
        bad.swap(0, 1);
        assert!(FeatureMatrix::new(0, FUSED_DIM, vec![], None, bad).is_err());
    }

    #[test]
    fn extract_one_rejects_unstandardized_input() {
        let stub = StubExtractor::new(BackboneId::Resnet50);
        let img = NormalizedImage::filled(100, 224, 0.5);
        match extract_one(&stub, &img) {
            Err(Error::Shape { expected, actual, .. }) => {
                assert_eq!(expected, vec![1, 3, 224, 224]);
                assert_eq!(actual, vec![1, 3, 224, 100]);
            }
            other => panic!("expected shape error, got {other:?}"),
        }
    }

    #[test]
    fn select_backbone_keeps_labels() {
        let fm = extract_images(
            &[NormalizedImage::filled(224, 224, 1.0), NormalizedImage::filled(224, 224, 0.0)],
            Some(vec![1, 0]),
            &ExtractorSet::stub(),
        )
        .unwrap();
        let eff = fm.select_backbone(BackboneId::Efficientnet).unwrap();
        assert_eq!((eff.rows(), eff.cols()), (2, 1280));
        assert_eq!(eff.labels(), Some(&[1u8, 0][..]));
        assert!(eff.row(0).iter().all(|&v| v == 1.0));
    }
}
