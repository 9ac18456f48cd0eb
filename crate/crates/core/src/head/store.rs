//! `PFH1` model container.
//!
//! Little-endian layout:
//!
//! ```text
//! "PFH1"
//! one or more blocks: u32 in_dim | u32 out_dim | in_dim*out_dim f32 weights (out-major) | out_dim f32 biases
//! u32 json_len | json_len bytes of UTF-8 JSON metadata
//! ```
//!
//! The fused head is a single block. Multi-layer baselines store their
//! blocks back to back. The reader tells the trailer from another block by
//! length: a block with input width `L` needs more than `L + 4` bytes, so a
//! u32 equal to the number of bytes left after it can only be `json_len`.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dataset::CLASS_NAMES;
use crate::error::{Error, Result};
use crate::features::store::{put_u32, Reader};
use crate::features::SliceInfo;

use super::{HeadParameters, TrainingConfig, NUM_CLASSES};

pub const PFH1_MAGIC: &[u8; 4] = b"PFH1";
/// `kind` tag of the fused linear head.
pub const HEAD_KIND: &str = "fused_linear";
const FORMAT: &str = "PFH1";

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub blocks: Vec<HeadParameters>,
    pub metadata: serde_json::Value,
}

pub fn encode_model(blocks: &[&HeadParameters], metadata: &serde_json::Value) -> Result<Vec<u8>> {
    if blocks.is_empty() {
        return Err(Error::Precondition("a model needs at least one block".into()));
    }
    let mut out = Vec::new();
    out.extend_from_slice(PFH1_MAGIC);
    for block in blocks {
        put_u32(&mut out, block.in_dim(), FORMAT)?;
        put_u32(&mut out, block.out_dim(), FORMAT)?;
        for v in block.values() {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    let json = serde_json::to_vec(metadata)?;
    put_u32(&mut out, json.len(), FORMAT)?;
    out.extend_from_slice(&json);
    Ok(out)
}

pub fn decode_model(bytes: &[u8]) -> Result<ModelFile> {
    let mut r = Reader::new(bytes, FORMAT);
    let magic = r.take(4)?;
    if magic != PFH1_MAGIC {
        return Err(Error::format(FORMAT, format!("bad magic {:?}", String::from_utf8_lossy(magic))));
    }
    let mut blocks = Vec::new();
    loop {
        let word = r.u32()? as usize;
        if !blocks.is_empty() && word == r.remaining() {
            let json = r.take(word)?;
            let metadata = serde_json::from_slice(json)
                .map_err(|e| Error::format(FORMAT, format!("bad metadata: {e}")))?;
            r.finish()?;
            return Ok(ModelFile { blocks, metadata });
        }
        let in_dim = word;
        let out_dim = r.u32()? as usize;
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::format(FORMAT, format!("degenerate block {in_dim}x{out_dim}")));
        }
        if let Some(prev) = blocks.last().map(HeadParameters::out_dim) {
            if prev != in_dim {
                return Err(Error::format(
                    FORMAT,
                    format!("block input width {in_dim} does not match previous output {prev}"),
                ));
            }
        }
        let count = in_dim
            .checked_mul(out_dim)
            .and_then(|n| n.checked_add(out_dim))
            .ok_or_else(|| Error::format(FORMAT, "block size overflows"))?;
        let values: Vec<f64> = r.f32s(count)?.into_iter().map(f64::from).collect();
        let bias = values[in_dim * out_dim..].to_vec();
        let mut weights = values;
        weights.truncate(in_dim * out_dim);
        blocks.push(HeadParameters::from_parts(in_dim, out_dim, weights, bias)?);
    }
}

pub fn write_model(path: impl AsRef<Path>, blocks: &[&HeadParameters], metadata: &serde_json::Value) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_model(blocks, metadata)?).map_err(|e| Error::io(path, e))
}

pub fn read_model(path: impl AsRef<Path>) -> Result<ModelFile> {
    let path = path.as_ref();
    decode_model(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// JSON metadata carried by every `PFH1` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadMetadata<C = TrainingConfig> {
    pub kind: String,
    pub config: C,
    pub seed: u64,
    pub class_names: Vec<String>,
    pub slice_map: Vec<SliceInfo>,
}

impl<C> HeadMetadata<C> {
    pub fn new(kind: &str, config: C, seed: u64, slice_map: Vec<SliceInfo>) -> Self {
        HeadMetadata {
            kind: kind.to_owned(),
            config,
            seed,
            class_names: CLASS_NAMES.iter().map(|s| s.to_string()).collect(),
            slice_map,
        }
    }
}

impl ModelFile {
    pub fn kind(&self) -> Option<&str> {
        self.metadata.get("kind")?.as_str()
    }

    pub fn typed_metadata<C: DeserializeOwned>(&self) -> Result<HeadMetadata<C>> {
        serde_json::from_value(self.metadata.clone())
            .map_err(|e| Error::format(FORMAT, format!("bad metadata: {e}")))
    }
}

pub fn save_head(
    params: &HeadParameters,
    config: &TrainingConfig,
    slice_map: &[SliceInfo],
    path: impl AsRef<Path>,
) -> Result<()> {
    let meta = HeadMetadata::new(HEAD_KIND, *config, config.seed, slice_map.to_vec());
    write_model(path, &[params], &serde_json::to_value(meta)?)
}

pub fn load_head(path: impl AsRef<Path>) -> Result<(HeadParameters, HeadMetadata)> {
    let file = read_model(path)?;
    if file.kind() != Some(HEAD_KIND) {
        return Err(Error::format(
            FORMAT,
            format!("expected kind `{HEAD_KIND}`, found {:?}", file.kind()),
        ));
    }
    let meta = file.typed_metadata()?;
    let mut blocks = file.blocks;
    if blocks.len() != 1 || blocks[0].out_dim() != NUM_CLASSES {
        return Err(Error::format(FORMAT, "a fused head is one block with two outputs"));
    }
    Ok((blocks.remove(0), meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::canonical_slice_map;
    use crate::head::predict;
    use crate::rng;
    use proptest::prelude::*;

    fn head(in_dim: usize, seed: u64) -> HeadParameters {
        let mut p = HeadParameters::init_uniform(in_dim, 2, &mut rng::stream(seed, 0));
        p.values_mut()[in_dim * 2] = 0.25;
        p
    }

    #[test]
    fn head_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.pfh");
        let p = head(5344, 1);
        let cfg = TrainingConfig { seed: 9, ..Default::default() };
        save_head(&p, &cfg, &canonical_slice_map(), &path).unwrap();
        let (back, meta) = load_head(&path).unwrap();
        assert_eq!(back, p);
        assert_eq!(meta.config, cfg);
        assert_eq!(meta.seed, 9);
        assert_eq!(meta.class_names, vec!["pothole", "normal"]);
        assert_eq!(meta.slice_map, canonical_slice_map());
    }

    #[test]
    fn header_layout() {
        let p = HeadParameters::from_parts(1, 2, vec![1.0, -1.0], vec![0.5, 0.0]).unwrap();
        let bytes = encode_model(&[&p], &serde_json::json!({})).unwrap();
        let mut expected = b"PFH1".to_vec();
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&2u32.to_le_bytes());
        for v in [1.0f32, -1.0, 0.5, 0.0] {
            expected.extend_from_slice(&v.to_le_bytes());
        }
        expected.extend_from_slice(&2u32.to_le_bytes());
        expected.extend_from_slice(b"{}");
        assert_eq!(bytes, expected);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let p = head(8, 2);
        let bytes = encode_model(&[&p], &serde_json::json!({"kind": HEAD_KIND})).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_model(&bad), Err(Error::Format { .. })));
        for cut in [2, 6, 20, bytes.len() - 1] {
            assert!(decode_model(&bytes[..cut]).is_err(), "cut {cut}");
        }
    }

    #[test]
    fn two_block_chain_round_trips() {
        let a = HeadParameters::init_uniform(6, 2, &mut rng::stream(0, 0));
        let b = HeadParameters::init_uniform(2, 2, &mut rng::stream(0, 1));
        let meta = serde_json::json!({"kind": "mlp", "hidden": 2});
        let file = decode_model(&encode_model(&[&a, &b], &meta).unwrap()).unwrap();
        assert_eq!(file.blocks, vec![a, b]);
        assert_eq!(file.metadata, meta);
    }

    #[test]
    fn narrow_head_fails_at_predict_time_on_wide_features() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("small.pfh");
        save_head(&head(100, 3), &TrainingConfig::default(), &[], &path).unwrap();
        let (p, _) = load_head(&path).unwrap();
        let x = vec![0.0f32; 5344];
        assert!(matches!(predict(&p, &x, 0), Err(Error::Dimension { expected: 100, actual: 5344 })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn round_trip_is_bit_exact(in_dim in 1usize..40, out_dim in 1usize..4, seed in any::<u64>(), extra in 0usize..3) {
            let blocks: Vec<HeadParameters> = (0..=extra)
                .map(|i| {
                    let input = if i == 0 { in_dim } else { out_dim };
                    HeadParameters::init_uniform(input, out_dim, &mut rng::stream(seed, i as u64))
                })
                .collect();
            let refs: Vec<&HeadParameters> = blocks.iter().collect();
            let meta = serde_json::json!({"kind": "test", "n": seed});
            let file = decode_model(&encode_model(&refs, &meta).unwrap()).unwrap();
            prop_assert_eq!(file.blocks, blocks);
            prop_assert_eq!(file.metadata, meta);
        }
    }
}
