use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

pub const HEAT_MIN: f32 = -0.2;
pub const HEAT_MAX: f32 = 1.0;

/// Sample-by-feature matrix ready for display: class 1 rows first, then
/// class 0, each block in store order, values clamped to
/// `[HEAT_MIN, HEAT_MAX]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f32>,
    /// Store row index shown on each heatmap row.
    pub source_rows: Vec<usize>,
    pub labels: Vec<u8>,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    rows: usize,
    cols: usize,
    clamp: [f32; 2],
    sort_order: &'a str,
    labels: &'a [u8],
    source_rows: &'a [usize],
}

/// Linear map of the clamp range onto `0..=255`.
pub fn heat_pixel(value: f32) -> u8 {
    let v = value.clamp(HEAT_MIN, HEAT_MAX);
    ((v - HEAT_MIN) / (HEAT_MAX - HEAT_MIN) * 255.0).round() as u8
}

pub fn feature_heatmap(fm: &FeatureMatrix) -> Result<Heatmap> {
    let labels = fm.require_labels()?;
    let source_rows: Vec<usize> = [1u8, 0]
        .iter()
        .flat_map(|&class| (0..fm.rows()).filter(move |&i| labels[i] == class))
        .collect();
    let values = source_rows
        .iter()
        .flat_map(|&i| fm.row(i).iter().map(|v| v.clamp(HEAT_MIN, HEAT_MAX)))
        .collect();
    Ok(Heatmap {
        rows: fm.rows(),
        cols: fm.cols(),
        values,
        labels: source_rows.iter().map(|&i| labels[i]).collect(),
        source_rows,
    })
}

impl Heatmap {
    /// Binary 8-bit grayscale PGM (`P5`).
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.cols, self.rows).into_bytes();
        out.extend(self.values.iter().map(|&v| heat_pixel(v)));
        out
    }

    /// Clamped values, one heatmap row per line, no header.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        for r in 0..self.rows {
            let row = &self.values[r * self.cols..(r + 1) * self.cols];
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::format("csv", e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn sidecar_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&Sidecar {
            rows: self.rows,
            cols: self.cols,
            clamp: [HEAT_MIN, HEAT_MAX],
            sort_order: "label 1 rows then label 0 rows, store order within each",
            labels: &self.labels,
            source_rows: &self.source_rows,
        })?;
        s.push('\n');
        Ok(s)
    }

    /// Writes `<stem>.pgm`, `<stem>.csv` and `<stem>.json`.
    pub fn save(&self, stem: impl AsRef<Path>) -> Result<()> {
        let stem = stem.as_ref();
        let write = |ext: &str, bytes: &[u8]| {
            let path = stem.with_extension(ext);
            fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
        };
        write("pgm", &self.to_pgm())?;
        write("csv", self.to_csv()?.as_bytes())?;
        write("json", self.sidecar_json()?.as_bytes())
    }
}
