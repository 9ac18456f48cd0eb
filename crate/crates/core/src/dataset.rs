//! Labeled image manifests and the stratified train/test split.
//!
//! A manifest is stored as JSON Lines: one header object
//! `{"schema_version":1,"seed":<u64>}` followed by one
//! `{"path":..,"label":0|1,"split":"train"|"test"|"unassigned"}` object per
//! sample, LF-terminated.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess;
use crate::rng;

/// Road surface with one or more potholes.
pub const POTHOLE: u8 = 0;
/// Intact road surface.
pub const NORMAL: u8 = 1;
pub const CLASS_NAMES: [&str; 2] = ["pothole", "normal"];
pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_TRAIN_FRAC: f64 = 0.9;

pub fn is_valid_label(label: u8) -> bool {
    label == POTHOLE || label == NORMAL
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    Unassigned,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            "unassigned" => Ok(Split::Unassigned),
            other => Err(Error::Precondition(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageSample {
    pub path: PathBuf,
    pub label: u8,
    pub split: Split,
    /// Decoded `(width, height)`; known after ingestion, not persisted.
    #[serde(skip)]
    pub dims: Option<(u32, u32)>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct Header {
    schema_version: u32,
    seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub schema_version: u32,
    /// Seed of the split that produced the current assignment, 0 if unsplit.
    pub seed: u64,
    pub samples: Vec<ImageSample>,
}

impl Default for Manifest {
    fn default() -> Self {
        Self::new(Vec::new())
    }
}

impl Manifest {
    pub fn new(samples: Vec<ImageSample>) -> Self {
        Manifest {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            samples,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn is_split(&self) -> bool {
        self.samples.iter().any(|s| s.split != Split::Unassigned)
    }

    pub fn samples_in(&self, split: Split) -> impl Iterator<Item = &ImageSample> {
        self.samples.iter().filter(move |s| s.split == split)
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = serde_json::to_string(&Header {
            schema_version: self.schema_version,
            seed: self.seed,
        })?;
        out.push('\n');
        for sample in &self.samples {
            out.push_str(&serde_json::to_string(sample)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn from_jsonl(reader: impl BufRead) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let header: Header = loop {
            match lines.next() {
                Some((_, line)) => {
                    let line = line.map_err(|e| Error::io("<manifest>", e))?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    break serde_json::from_str(&line).map_err(|e| {
                        Error::format("manifest", format!("bad header line: {e}"))
                    })?;
                }
                None => return Err(Error::format("manifest", "missing header line")),
            }
        };
        if header.schema_version != SCHEMA_VERSION {
            return Err(Error::format(
                "manifest",
                format!("unsupported schema_version {}", header.schema_version),
            ));
        }
        let mut samples = Vec::new();
        for (lineno, line) in lines {
            let line = line.map_err(|e| Error::io("<manifest>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let sample: ImageSample = serde_json::from_str(&line).map_err(|e| {
                Error::format("manifest", format!("line {}: {e}", lineno + 1))
            })?;
            samples.push(sample);
        }
        Ok(Manifest {
            schema_version: header.schema_version,
            seed: header.seed,
            samples,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_jsonl(BufReader::new(file))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(self.to_jsonl()?.as_bytes())
            .map_err(|e| Error::io(path, e))
    }
}

/// A directory entry that was not ingested.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkippedFile {
    pub path: PathBuf,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct Ingested {
    pub samples: Vec<ImageSample>,
    pub skipped: Vec<SkippedFile>,
}

/// Collects every decodable image directly inside `dir`, sorted by path.
///
/// Files that do not decode are reported in [`Ingested::skipped`];
/// subdirectories are ignored.
pub fn ingest(dir: impl AsRef<Path>, label: u8) -> Result<Ingested> {
    let dir = dir.as_ref();
    if !is_valid_label(label) {
        return Err(Error::Precondition(format!("label {label} is not 0 or 1")));
    }
    let mut paths = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let file_type = entry.file_type().map_err(|e| Error::io(entry.path(), e))?;
        if file_type.is_file() {
            paths.push(entry.path());
        }
    }
    paths.sort();

    let decoded: Vec<_> = paths
        .par_iter()
        .map(|p| preprocess::load_rgb(p).map(|img| img.dimensions()))
        .collect();

    let mut out = Ingested::default();
    for (path, result) in paths.into_iter().zip(decoded) {
        match result {
            Ok(dims) => out.samples.push(ImageSample {
                path,
                label,
                split: Split::Unassigned,
                dims: Some(dims),
            }),
            Err(e) => {
                log::warn!("skipping {}: {e}", path.display());
                out.skipped.push(SkippedFile {
                    path,
                    reason: e.to_string(),
                });
            }
        }
    }
    Ok(out)
}

fn train_count(class_size: usize, train_frac: f64) -> usize {
    // The epsilon keeps products like 0.29 * 100 from flooring to 28.
    ((class_size as f64) * train_frac + 1e-9).floor() as usize
}

/// Stratified seeded split: each class is shuffled independently and its
/// first `floor(n_c * train_frac)` members go to the training set.
pub fn split(manifest: &Manifest, train_frac: f64, seed: u64) -> Result<Manifest> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::Precondition(format!(
            "train_frac must lie in (0, 1), got {train_frac}"
        )));
    }
    if manifest.is_split() {
        return Err(Error::Precondition("manifest is already split".into()));
    }
    if let Some(bad) = manifest.samples.iter().find(|s| !is_valid_label(s.label)) {
        return Err(Error::Precondition(format!(
            "{} has invalid label {}",
            bad.path.display(),
            bad.label
        )));
    }

    let mut out = manifest.clone();
    out.seed = seed;
    let mut rng = rng::stream(seed, 0);
    for class in [POTHOLE, NORMAL] {
        let mut members: Vec<usize> = (0..out.samples.len())
            .filter(|&i| out.samples[i].label == class)
            .collect();
        members.shuffle(&mut rng);
        let n_train = train_count(members.len(), train_frac);
        for (rank, &i) in members.iter().enumerate() {
            out.samples[i].split = if rank < n_train {
                Split::Train
            } else {
                Split::Test
            };
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Issue {
    MissingFile { path: PathBuf },
    Undecodable { path: PathBuf, reason: String },
    InvalidLabel { path: PathBuf, label: u8 },
    DuplicatePath { path: PathBuf },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ClassCounts {
    pub pothole: usize,
    pub normal: usize,
}

impl ClassCounts {
    pub fn total(&self) -> usize {
        self.pothole + self.normal
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct VerifyReport {
    pub issues: Vec<Issue>,
    /// Valid-label sample counts per split.
    pub counts: BTreeMap<Split, ClassCounts>,
}

impl VerifyReport {
    pub fn is_clean(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn count(&self, split: Split) -> usize {
        self.counts.get(&split).map_or(0, ClassCounts::total)
    }
}

/// Checks every sample on disk and tallies class counts per split.
pub fn verify(manifest: &Manifest) -> VerifyReport {
    let file_issues: Vec<Option<Issue>> = manifest
        .samples
        .par_iter()
        .map(|s| {
            if !s.path.is_file() {
                return Some(Issue::MissingFile {
                    path: s.path.clone(),
                });
            }
            match preprocess::load_rgb(&s.path) {
                Ok(_) => None,
                Err(e) => Some(Issue::Undecodable {
                    path: s.path.clone(),
                    reason: e.to_string(),
                }),
            }
        })
        .collect();

    let mut report = VerifyReport::default();
    let mut seen = HashSet::new();
    for (sample, file_issue) in manifest.samples.iter().zip(file_issues) {
        if !seen.insert(&sample.path) {
            report.issues.push(Issue::DuplicatePath {
                path: sample.path.clone(),
            });
        }
        report.issues.extend(file_issue);
        let counts = report.counts.entry(sample.split).or_default();
        match sample.label {
            POTHOLE => counts.pothole += 1,
            NORMAL => counts.normal += 1,
            label => report.issues.push(Issue::InvalidLabel {
                path: sample.path.clone(),
                label,
            }),
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fake(n_pothole: usize, n_normal: usize) -> Manifest {
        let samples = (0..n_pothole)
            .map(|i| (format!("p/{i:04}.png"), POTHOLE))
            .chain((0..n_normal).map(|i| (format!("n/{i:04}.png"), NORMAL)))
            .map(|(p, label)| ImageSample {
                path: p.into(),
                label,
                split: Split::Unassigned,
                dims: None,
            })
            .collect();
        Manifest::new(samples)
    }

    fn counts(m: &Manifest, split: Split, label: u8) -> usize {
        m.samples_in(split).filter(|s| s.label == label).count()
    }

    #[test]
    fn nine_to_one_split_of_balanced_set() {
        let m = split(&fake(450, 450), 0.9, 42).unwrap();
        assert_eq!(counts(&m, Split::Train, POTHOLE), 405);
        assert_eq!(counts(&m, Split::Train, NORMAL), 405);
        assert_eq!(counts(&m, Split::Test, POTHOLE), 45);
        assert_eq!(counts(&m, Split::Test, NORMAL), 45);
        assert_eq!(m.seed, 42);
    }

    #[test]
    fn floor_arithmetic_on_small_class() {
        let m = split(&fake(10, 0), 0.9, 1).unwrap();
        assert_eq!(counts(&m, Split::Train, POTHOLE), 9);
        assert_eq!(counts(&m, Split::Test, POTHOLE), 1);
        assert_eq!(train_count(100, 0.29), 29);
    }

    #[test]
    fn split_is_deterministic_and_seed_sensitive() {
        let base = fake(30, 30);
        let a = split(&base, 0.9, 5).unwrap();
        let b = split(&base, 0.9, 5).unwrap();
        assert_eq!(a.to_jsonl().unwrap(), b.to_jsonl().unwrap());
        let c = split(&base, 0.9, 6).unwrap();
        assert_ne!(a.to_jsonl().unwrap(), c.to_jsonl().unwrap());
    }

    #[test]
    fn split_rejects_bad_input() {
        let m = split(&fake(4, 4), 0.5, 0).unwrap();
        assert!(matches!(split(&m, 0.5, 0), Err(Error::Precondition(_))));
        assert!(split(&fake(4, 4), 1.0, 0).is_err());
        assert!(split(&fake(4, 4), 0.0, 0).is_err());
        let mut bad = fake(2, 2);
        bad.samples[0].label = 2;
        assert!(split(&bad, 0.5, 0).is_err());
    }

    #[test]
    fn jsonl_layout() {
        let mut m = fake(1, 1);
        m.samples[1].split = Split::Test;
        m.seed = 9;
        let text = m.to_jsonl().unwrap();
        assert_eq!(
            text,
            "{\"schema_version\":1,\"seed\":9}\n\
             {\"path\":\"p/0000.png\",\"label\":0,\"split\":\"unassigned\"}\n\
             {\"path\":\"n/0000.png\",\"label\":1,\"split\":\"test\"}\n"
        );
        let back = Manifest::from_jsonl(text.as_bytes()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn jsonl_rejects_missing_header_and_unknown_schema() {
        assert!(Manifest::from_jsonl("".as_bytes()).is_err());
        assert!(Manifest::from_jsonl("{\"schema_version\":2,\"seed\":0}\n".as_bytes()).is_err());
    }

    #[test]
    fn verify_flags_missing_invalid_and_duplicate() {
        let mut m = fake(2, 1);
        m.samples[2].label = 2;
        m.samples.push(m.samples[0].clone());
        let report = verify(&m);
        let missing = report
            .issues
            .iter()
            .filter(|i| matches!(i, Issue::MissingFile { .. }))
            .count();
        assert_eq!(missing, 4);
        assert!(report.issues.contains(&Issue::InvalidLabel {
            path: "n/0000.png".into(),
            label: 2
        }));
        assert!(report.issues.contains(&Issue::DuplicatePath {
            path: "p/0000.png".into()
        }));
    }
}
