//! Versioned binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "GNRCKPT\0"
//! version    u32
//! n_meta     u32
//!   key_len u32, key utf-8, val_len u32, val utf-8      (n_meta times)
//! n_arrays   u32
//!   name_len u32, name utf-8, ndim u32, dims u64 x ndim,
//!   data f32 x prod(dims)                                (n_arrays times)
//! sha256     32 bytes over everything above
//! ```
//!
//! Floats are stored as raw IEEE-754 bits, so a decode of an encode is
//! bit-exact, NaN payloads included.

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};

use crate::error::FormatError;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"GNRCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

// Guards against absurd allocations when decoding hostile input.
const MAX_NDIM: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl NamedArray {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self {
            name: name.into(),
            shape,
            data,
        }
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    fn bits_eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.shape == other.shape
            && self.data.len() == other.data.len()
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub arrays: Vec<NamedArray>,
}

impl Checkpoint {
    pub fn array(&self, name: &str) -> Option<&NamedArray> {
        self.arrays.iter().find(|a| a.name == name)
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.get(key).map(String::as_str)
    }

    /// Equality on raw float bits (so NaN == NaN when the payload matches).
    pub fn bits_eq(&self, other: &Self) -> bool {
        self.meta == other.meta
            && self.arrays.len() == other.arrays.len()
            && self.arrays.iter().zip(&other.arrays).all(|(a, b)| a.bits_eq(b))
    }

    pub fn encode(&self) -> Vec<u8> {
        let payload: usize = self.arrays.iter().map(|a| a.data.len() * 4 + 64).sum();
        let mut out = Vec::with_capacity(payload + 1024);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        put_u32(&mut out, CHECKPOINT_VERSION);
        put_u32(&mut out, self.meta.len() as u32);
        for (k, v) in &self.meta {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }
        put_u32(&mut out, self.arrays.len() as u32);
        for a in &self.arrays {
            put_str(&mut out, &a.name);
            put_u32(&mut out, a.shape.len() as u32);
            for &d in &a.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in &a.data {
                out.extend_from_slice(&v.to_bits().to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, FormatError> {
        if bytes.len() < CHECKPOINT_MAGIC.len() || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(FormatError::BadMagic {
                expected: "GNRCKPT",
            });
        }
        if bytes.len() < 8 + 4 + 32 {
            return Err(FormatError::Truncated("header"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        let mut r = Reader { buf: body, pos: 8 };
        let version = r.u32("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(FormatError::UnsupportedVersion(version));
        }
        if Sha256::digest(body).as_slice() != digest {
            return Err(FormatError::Checksum);
        }
        let n_meta = r.u32("metadata count")? as usize;
        let mut meta = BTreeMap::new();
        for _ in 0..n_meta {
            let k = r.string("metadata key")?;
            let v = r.string("metadata value")?;
            if meta.insert(k.clone(), v).is_some() {
                return Err(FormatError::Invalid(format!("duplicate metadata key {k:?}")));
            }
        }
        let n_arrays = r.u32("array count")? as usize;
        let mut arrays = Vec::new();
        for _ in 0..n_arrays {
            let name = r.string("array name")?;
            let ndim = r.u32("array rank")? as usize;
            if ndim > MAX_NDIM {
                return Err(FormatError::Invalid(format!("array {name:?} has rank {ndim}")));
            }
            let mut shape = Vec::with_capacity(ndim);
            let mut numel: usize = 1;
            for _ in 0..ndim {
                let d = usize::try_from(r.u64("array dims")?)
                    .map_err(|_| FormatError::Invalid("dimension overflow".into()))?;
                numel = numel
                    .checked_mul(d)
                    .ok_or_else(|| FormatError::Invalid("element count overflow".into()))?;
                shape.push(d);
            }
            let raw = r.take(
                numel
                    .checked_mul(4)
                    .ok_or_else(|| FormatError::Invalid("byte count overflow".into()))?,
                "array data",
            )?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_bits(u32::from_le_bytes([c[0], c[1], c[2], c[3]])))
                .collect();
            arrays.push(NamedArray { name, shape, data });
        }
        if r.pos != body.len() {
            return Err(FormatError::TrailingBytes(body.len() - r.pos));
        }
        Ok(Self { meta, arrays })
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

pub(crate) struct Reader<'a> {
    pub buf: &'a [u8],
    pub pos: usize,
}

impl<'a> Reader<'a> {
    pub fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], FormatError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or(FormatError::Truncated(what))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u32(&mut self, what: &'static str) -> Result<u32, FormatError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn u64(&mut self, what: &'static str) -> Result<u64, FormatError> {
        let b = self.take(8, what)?;
        let mut a = [0u8; 8];
        a.copy_from_slice(b);
        Ok(u64::from_le_bytes(a))
    }

    pub fn string(&mut self, what: &'static str) -> Result<String, FormatError> {
        let n = self.u32(what)? as usize;
        let b = self.take(n, what)?;
        String::from_utf8(b.to_vec()).map_err(|_| FormatError::Utf8(what))
    }
}
