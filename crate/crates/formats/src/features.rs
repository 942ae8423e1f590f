//! On-disk cache for extracted feature matrices.
//!
//! ```text
//! magic         4 bytes "GNRF"
//! version       u32 (1)
//! n             u64   rows
//! d             u64   columns
//! id_len        u32
//! extractor_id  utf-8
//! data          f32 x n*d, row-major, little-endian
//! ```

use crate::container::Reader;
use crate::error::FormatError;

pub const FEATURE_MAGIC: &[u8; 4] = b"GNRF";
pub const FEATURE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCache {
    pub rows: usize,
    pub dim: usize,
    pub extractor_id: String,
    pub data: Vec<f32>,
}

impl FeatureCache {
    pub fn encode(&self) -> Vec<u8> {
        assert_eq!(self.data.len(), self.rows * self.dim, "feature matrix shape");
        let mut out = Vec::with_capacity(32 + self.extractor_id.len() + self.data.len() * 4);
        out.extend_from_slice(FEATURE_MAGIC);
        out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.rows as u64).to_le_bytes());
        out.extend_from_slice(&(self.dim as u64).to_le_bytes());
        out.extend_from_slice(&(self.extractor_id.len() as u32).to_le_bytes());
        out.extend_from_slice(self.extractor_id.as_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, FormatError> {
        if bytes.len() < 4 || &bytes[..4] != FEATURE_MAGIC {
            return Err(FormatError::BadMagic { expected: "GNRF" });
        }
        let mut r = Reader { buf: bytes, pos: 4 };
        let version = r.u32("version")?;
        if version != FEATURE_VERSION {
            return Err(FormatError::UnsupportedVersion(version));
        }
        let rows = usize::try_from(r.u64("row count")?)
            .map_err(|_| FormatError::Invalid("row count overflow".into()))?;
        let dim = usize::try_from(r.u64("feature dimension")?)
            .map_err(|_| FormatError::Invalid("dimension overflow".into()))?;
        let extractor_id = r.string("extractor id")?;
        let n_bytes = rows
            .checked_mul(dim)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| FormatError::Invalid("feature matrix size overflow".into()))?;
        let raw = r.take(n_bytes, "feature data")?;
        if r.pos != bytes.len() {
            return Err(FormatError::TrailingBytes(bytes.len() - r.pos));
        }
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(FormatError::Invalid("non-finite feature value".into()));
        }
        Ok(Self {
            rows,
            dim,
            extractor_id,
            data,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let c = FeatureCache {
            rows: 2,
            dim: 1,
            extractor_id: "x".into(),
            data: vec![1.0, 2.0],
        };
        let b = c.encode();
        assert_eq!(&b[..4], b"GNRF");
        assert_eq!(u64::from_le_bytes(b[8..16].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(b[16..24].try_into().unwrap()), 1);
        assert_eq!(b.len(), 4 + 4 + 8 + 8 + 4 + 1 + 8);
        assert_eq!(&b[b.len() - 4..], &2.0f32.to_le_bytes());
    }

    #[test]
    fn rejects_truncation_and_nan() {
        let c = FeatureCache {
            rows: 1,
            dim: 2,
            extractor_id: "id".into(),
            data: vec![0.5, f32::NAN],
        };
        let b = c.encode();
        assert!(FeatureCache::decode(&b).is_err());
        assert!(FeatureCache::decode(&b[..b.len() - 2]).is_err());
        let mut huge = b.clone();
        huge[8..16].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(FeatureCache::decode(&huge).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(rows in 0usize..6, dim in 0usize..6, id in "[a-z0-9-]{0,16}", seed in any::<u32>()) {
            let data = (0..rows * dim).map(|i| (i as f32 + seed as f32).sin()).collect();
            let c = FeatureCache { rows, dim, extractor_id: id, data };
            prop_assert_eq!(FeatureCache::decode(&c.encode()).unwrap(), c);
        }
    }
}
