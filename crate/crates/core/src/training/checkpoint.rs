//! Binary checkpoint format, all integers little-endian:
//!
//! ```text
//! "GSNCKPT1" | version u16 | d, K_code, K_summary, h, vocab u32
//! | component flags u32 | record count u32
//! | per record: name len u32, UTF-8 name, rank u32, extents u32*, f64 values
//! ```

use std::path::Path;

use super::model::{DualEncoderModel, ModelConfig};
use crate::autodiff::{ParamStore, Tensor};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"GSNCKPT1";
pub const CHECKPOINT_VERSION: u16 = 1;

const FLAG_CODE_BIGGNN: u32 = 1;
const FLAG_CODE_ATTENTION: u32 = 2;
const FLAG_SUMMARY_BIGGNN: u32 = 4;
const FLAG_SUMMARY_ATTENTION: u32 = 8;

fn flags(c: &ModelConfig) -> u32 {
    let mut f = 0;
    for (on, bit) in [
        (c.code_biggnn, FLAG_CODE_BIGGNN),
        (c.code_attention, FLAG_CODE_ATTENTION),
        (c.summary_biggnn, FLAG_SUMMARY_BIGGNN),
        (c.summary_attention, FLAG_SUMMARY_ATTENTION),
    ] {
        if on {
            f |= bit;
        }
    }
    f
}

fn u32_of(n: usize, what: &str) -> u32 {
    u32::try_from(n).unwrap_or_else(|_| panic!("{what} {n} exceeds the checkpoint format"))
}

pub fn to_bytes(model: &DualEncoderModel) -> Vec<u8> {
    let c = &model.config;
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for v in [c.dim, c.hops_code, c.hops_summary, c.heads, model.vocab_size()] {
        out.extend_from_slice(&u32_of(v, "hyperparameter").to_le_bytes());
    }
    out.extend_from_slice(&flags(c).to_le_bytes());
    out.extend_from_slice(&u32_of(model.store.len(), "record count").to_le_bytes());
    for (name, t) in model.store.iter() {
        out.extend_from_slice(&u32_of(name.len(), "name length").to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&u32_of(t.shape().len(), "rank").to_le_bytes());
        for &e in t.shape() {
            out.extend_from_slice(&u32_of(e, "extent").to_le_bytes());
        }
        for &x in t.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::Checkpoint(format!("truncated file at byte {}", self.pos)));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }
}

/// Parses a checkpoint; dropout is not stored and takes the default.
pub fn from_bytes(bytes: &[u8]) -> Result<DualEncoderModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8).ok() != Some(CHECKPOINT_MAGIC.as_slice()) {
        return Err(Error::Checkpoint("bad magic, not a checkpoint file".into()));
    }
    let version = r.u16()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let (dim, hops_code, hops_summary, heads, vocab) = (r.u32()?, r.u32()?, r.u32()?, r.u32()?, r.u32()?);
    let f = r.u32()? as u32;
    let config = ModelConfig {
        dim,
        hops_code,
        hops_summary,
        heads,
        code_biggnn: f & FLAG_CODE_BIGGNN != 0,
        code_attention: f & FLAG_CODE_ATTENTION != 0,
        summary_biggnn: f & FLAG_SUMMARY_BIGGNN != 0,
        summary_attention: f & FLAG_SUMMARY_ATTENTION != 0,
        ..ModelConfig::default()
    };
    config
        .validate()
        .map_err(|e| Error::Checkpoint(format!("invalid hyperparameters: {e}")))?;
    let count = r.u32()?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let len = r.u32()?;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32()?;
        let shape = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let numel = shape.iter().try_fold(1usize, |a, &e| a.checked_mul(e));
        let Some(numel) = numel.filter(|&n| n <= bytes.len() / 8) else {
            return Err(Error::Checkpoint(format!("parameter `{name}` has implausible shape {shape:?}")));
        };
        let raw = r.take(numel * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let t = Tensor::new(&shape, data).map_err(|e| Error::Checkpoint(format!("parameter `{name}`: {e}")))?;
        if store.find(&name).is_some() {
            return Err(Error::Checkpoint(format!("duplicate parameter `{name}`")));
        }
        store.add(name, t);
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let model = DualEncoderModel::from_store(store, config)?;
    if model.vocab_size() != vocab {
        return Err(Error::Checkpoint(format!(
            "header declares vocabulary size {vocab}, embeddings have {}",
            model.vocab_size()
        )));
    }
    Ok(model)
}

pub fn save_checkpoint(model: &DualEncoderModel, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_bytes(model))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<DualEncoderModel> {
    from_bytes(&std::fs::read(path)?)
}

/// Loads a checkpoint and checks that its architecture matches `requested`.
/// Dropout comes from `requested`; component switches from the file.
pub fn load_checkpoint_for(path: impl AsRef<Path>, requested: &ModelConfig) -> Result<DualEncoderModel> {
    let mut model = load_checkpoint(path)?;
    let stored = model.config;
    for (what, have, want) in [
        ("dim", stored.dim, requested.dim),
        ("hops_code", stored.hops_code, requested.hops_code),
        ("hops_summary", stored.hops_summary, requested.hops_summary),
        ("heads", stored.heads, requested.heads),
    ] {
        if have != want {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {what} = {have} but the configuration requests {what} = {want}"
            )));
        }
    }
    model.config.dropout = requested.dropout;
    model.code.config.dropout = requested.dropout;
    model.summary.config.dropout = requested.dropout;
    Ok(model)
}
