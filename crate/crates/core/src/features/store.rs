//! `PFV1` feature store.
//!
//! Little-endian layout:
//!
//! ```text
//! "PFV1" | u32 n | u32 d | u32 label_flag | u32 slice_count
//! slice_count x (u8 backbone code | u32 start | u32 length)
//! label_flag == 1: n x u8 labels
//! n * d x f32, row-major
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::{BackboneId, FeatureMatrix, SliceInfo};

pub const PFV1_MAGIC: &[u8; 4] = b"PFV1";
const FORMAT: &str = "PFV1";

pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    format: &'static str,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8], format: &'static str) -> Self {
        Reader { bytes, pos: 0, format }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::format(
                self.format,
                format!("truncated: needed {n} bytes at offset {}, file has {}", self.pos, self.bytes.len()),
            )
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub(crate) fn f32s(&mut self, count: usize) -> Result<Vec<f32>> {
        let len = count
            .checked_mul(4)
            .ok_or_else(|| Error::format(self.format, "element count overflows"))?;
        Ok(self
            .take(len)?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect())
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub(crate) fn finish(&self) -> Result<()> {
        match self.remaining() {
            0 => Ok(()),
            extra => Err(Error::format(self.format, format!("{extra} trailing bytes after payload"))),
        }
    }
}

pub(crate) fn put_u32(out: &mut Vec<u8>, v: usize, format: &'static str) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::format(format, format!("{v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

impl FeatureMatrix {
    pub fn to_pfv1(&self) -> Result<Vec<u8>> {
        let labels_len = if self.labels.is_some() { self.rows } else { 0 };
        let mut out = Vec::with_capacity(20 + 9 * self.slice_map.len() + labels_len + 4 * self.values.len());
        out.extend_from_slice(PFV1_MAGIC);
        put_u32(&mut out, self.rows, FORMAT)?;
        put_u32(&mut out, self.cols, FORMAT)?;
        put_u32(&mut out, usize::from(self.labels.is_some()), FORMAT)?;
        put_u32(&mut out, self.slice_map.len(), FORMAT)?;
        for s in &self.slice_map {
            out.push(s.backbone.code());
            put_u32(&mut out, s.start, FORMAT)?;
            put_u32(&mut out, s.len, FORMAT)?;
        }
        if let Some(labels) = &self.labels {
            out.extend_from_slice(labels);
        }
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_pfv1(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, FORMAT);
        let magic = r.take(4)?;
        if magic != PFV1_MAGIC {
            return Err(Error::format(FORMAT, format!("bad magic {:?}", String::from_utf8_lossy(magic))));
        }
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let label_flag = r.u32()?;
        if label_flag > 1 {
            return Err(Error::format(FORMAT, format!("label_flag must be 0 or 1, got {label_flag}")));
        }
        let slice_count = r.u32()? as usize;
        let mut slice_map = Vec::with_capacity(slice_count.min(16));
        for _ in 0..slice_count {
            let code = r.u8()?;
            let backbone = BackboneId::from_code(code)
                .ok_or_else(|| Error::format(FORMAT, format!("unknown backbone code {code}")))?;
            let start = r.u32()? as usize;
            let len = r.u32()? as usize;
            slice_map.push(SliceInfo { backbone, start, len });
        }
        let labels = if label_flag == 1 { Some(r.take(rows)?.to_vec()) } else { None };
        let count = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::format(FORMAT, "n * d overflows"))?;
        let expected = r.pos + count * 4;
        if bytes.len() != expected {
            return Err(Error::format(
                FORMAT,
                format!("file length {} does not match header (expected {expected})", bytes.len()),
            ));
        }
        let values = r.f32s(count)?;
        r.finish()?;
        FeatureMatrix::new(rows, cols, values, labels, slice_map).map_err(|e| Error::format(FORMAT, e.to_string()))
    }
}

pub fn save_features(fm: &FeatureMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, fm.to_pfv1()?).map_err(|e| Error::io(path, e))
}

pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    FeatureMatrix::from_pfv1(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::slice_map_for;
    use proptest::prelude::*;

    /// 2x3 store, labels (0, 1), one efficientnet slice of length 3,
    /// written out byte by byte.
    fn hand_fixture() -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(b"PFV1");
        b.extend_from_slice(&[2, 0, 0, 0]); // n
        b.extend_from_slice(&[3, 0, 0, 0]); // d
        b.extend_from_slice(&[1, 0, 0, 0]); // label_flag
        b.extend_from_slice(&[1, 0, 0, 0]); // slice_count
        b.push(1); // efficientnet
        b.extend_from_slice(&[0, 0, 0, 0]); // start
        b.extend_from_slice(&[3, 0, 0, 0]); // length
        b.extend_from_slice(&[0, 1]); // labels
        // 1.0, -2.5, 0.0 / 0.5, 3.0, -0.0 as IEEE-754 little-endian.
        for bits in [0x3f80_0000u32, 0xc020_0000, 0x0000_0000, 0x3f00_0000, 0x4040_0000, 0x8000_0000] {
            b.extend_from_slice(&bits.to_le_bytes());
        }
        b
    }

    #[test]
    fn hand_authored_fixture_loads() {
        let fm = FeatureMatrix::from_pfv1(&hand_fixture()).unwrap();
        assert_eq!((fm.rows(), fm.cols()), (2, 3));
        assert_eq!(fm.labels(), Some(&[0u8, 1][..]));
        assert_eq!(fm.row(0), &[1.0, -2.5, 0.0]);
        assert_eq!(fm.row(1)[..2], [0.5, 3.0]);
        assert!(fm.row(1)[2] == 0.0 && fm.row(1)[2].is_sign_negative());
        assert_eq!(fm.slice_map()[0].backbone, BackboneId::Efficientnet);
        assert_eq!(fm.to_pfv1().unwrap(), hand_fixture());
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let mut bytes = hand_fixture();
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(FeatureMatrix::from_pfv1(&bytes), Err(Error::Format { .. })));
        let bytes = hand_fixture();
        for cut in [0, 3, 10, 20, bytes.len() - 1] {
            assert!(FeatureMatrix::from_pfv1(&bytes[..cut]).is_err(), "cut at {cut}");
        }
        let mut long = bytes.clone();
        long.push(0);
        assert!(FeatureMatrix::from_pfv1(&long).is_err());
    }

    #[test]
    fn rejects_inconsistent_slices() {
        let mut bytes = hand_fixture();
        bytes[25] = 2; // slice length 2 != d
        assert!(FeatureMatrix::from_pfv1(&bytes).is_err());
        let mut bytes = hand_fixture();
        bytes[20] = 9; // backbone code
        assert!(FeatureMatrix::from_pfv1(&bytes).is_err());
    }

    #[test]
    fn empty_store_keeps_slice_map() {
        let fm = FeatureMatrix::new(0, 5344, vec![], Some(vec![]), super::super::canonical_slice_map()).unwrap();
        let back = FeatureMatrix::from_pfv1(&fm.to_pfv1().unwrap()).unwrap();
        assert_eq!(back, fm);
        assert_eq!(back.slice_map().len(), 3);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.pfv");
        let fm = FeatureMatrix::from_pfv1(&hand_fixture()).unwrap();
        save_features(&fm, &path).unwrap();
        assert_eq!(load_features(&path).unwrap(), fm);
        assert!(matches!(load_features(dir.path().join("nope")), Err(Error::Io { .. })));
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            rows in 0usize..6,
            bits in proptest::collection::vec(any::<u32>(), 0..64),
            labelled in any::<bool>(),
        ) {
            let cols = 1280;
            let values: Vec<f32> = (0..rows * cols)
                .map(|i| f32::from_bits(bits.get(i % bits.len().max(1)).copied().unwrap_or(0) ^ i as u32))
                .collect();
            let labels = labelled.then(|| (0..rows).map(|i| (i % 2) as u8).collect());
            let fm = FeatureMatrix::new(rows, cols, values, labels, slice_map_for(&[BackboneId::Efficientnet])).unwrap();
            let back = FeatureMatrix::from_pfv1(&fm.to_pfv1().unwrap()).unwrap();
            let a: Vec<u32> = fm.values().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = back.values().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
            prop_assert_eq!(back.labels(), fm.labels());
            prop_assert_eq!(back.slice_map(), fm.slice_map());
        }
    }
}
