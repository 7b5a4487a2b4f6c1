//! Persisted vector index, integers little-endian:
//!
//! ```text
//! "GSNVIDX1" | version u16 | dim u32 | count u64 | fingerprint [u8; 32]
//! | per entry: id len u32, UTF-8 id, dim f32 values
//! ```

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

pub const INDEX_MAGIC: &[u8; 8] = b"GSNVIDX1";
pub const INDEX_VERSION: u16 = 1;

/// Item vectors in insertion order, tagged with the fingerprint of the
/// model that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    dim: usize,
    fingerprint: [u8; 32],
    ids: Vec<String>,
    vectors: Vec<f32>,
    positions: HashMap<String, usize>,
}

impl VectorIndex {
    pub fn new(dim: usize, fingerprint: [u8; 32]) -> Result<Self> {
        if dim == 0 || u32::try_from(dim).is_err() {
            return Err(Error::Index(format!("unsupported dimension {dim}")));
        }
        Ok(VectorIndex {
            dim,
            fingerprint,
            ids: Vec::new(),
            vectors: Vec::new(),
            positions: HashMap::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn fingerprint(&self) -> &[u8; 32] {
        &self.fingerprint
    }

    pub fn fingerprint_hex(&self) -> String {
        self.fingerprint.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vector(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.positions.get(id).copied()
    }

    /// Appends an entry, rounding to 32-bit floats.
    pub fn push(&mut self, id: impl Into<String>, vector: &[f64]) -> Result<()> {
        let v: Vec<f32> = vector.iter().map(|&x| x as f32).collect();
        self.push_f32(id.into(), &v)
    }

    fn push_f32(&mut self, id: String, vector: &[f32]) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::Index(format!(
                "vector for `{id}` has length {}, index dimension is {}",
                vector.len(),
                self.dim
            )));
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(Error::Index(format!("vector for `{id}` is not finite")));
        }
        if self.positions.contains_key(&id) {
            return Err(Error::Index(format!("duplicate id `{id}`")));
        }
        self.positions.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.vectors.extend_from_slice(vector);
        Ok(())
    }

    /// Appends every entry of `other`; both must come from the same model.
    pub fn append(&mut self, other: &VectorIndex) -> Result<()> {
        if other.fingerprint != self.fingerprint {
            return Err(Error::Index(format!(
                "model fingerprint mismatch ({} vs {})",
                self.fingerprint_hex(),
                other.fingerprint_hex()
            )));
        }
        for i in 0..other.len() {
            self.push_f32(other.ids[i].clone(), other.vector(i))?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(54 + self.vectors.len() * 4);
        out.extend_from_slice(INDEX_MAGIC);
        out.extend_from_slice(&INDEX_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.fingerprint);
        for i in 0..self.len() {
            let id = self.ids[i].as_bytes();
            out.extend_from_slice(&(id.len() as u32).to_le_bytes());
            out.extend_from_slice(id);
            for x in self.vector(i) {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            let end = pos.checked_add(n).filter(|&e| e <= bytes.len());
            let Some(end) = end else {
                return Err(Error::Index(format!("truncated file at byte {pos}")));
            };
            let s = &bytes[pos..end];
            pos = end;
            Ok(s)
        };
        if take(8).ok() != Some(INDEX_MAGIC.as_slice()) {
            return Err(Error::Index("bad magic, not an index file".into()));
        }
        let version = u16::from_le_bytes(take(2)?.try_into().expect("2 bytes"));
        if version != INDEX_VERSION {
            return Err(Error::Index(format!("unsupported version {version}")));
        }
        let dim = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes")) as usize;
        let count = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes"));
        let fingerprint: [u8; 32] = take(32)?.try_into().expect("32 bytes");
        let mut index = VectorIndex::new(dim, fingerprint)?;
        let mut values = vec![0f32; dim];
        for _ in 0..count {
            let len = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes")) as usize;
            let id = std::str::from_utf8(take(len)?)
                .map_err(|_| Error::Index("id is not UTF-8".into()))?
                .to_string();
            let raw = take(dim.checked_mul(4).ok_or_else(|| Error::Index("dimension overflow".into()))?)?;
            for (v, c) in values.iter_mut().zip(raw.chunks_exact(4)) {
                *v = f32::from_le_bytes(c.try_into().expect("4 bytes"));
            }
            index.push_f32(id, &values)?;
        }
        if pos != bytes.len() {
            return Err(Error::Index(format!("{} trailing bytes", bytes.len() - pos)));
        }
        Ok(index)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
