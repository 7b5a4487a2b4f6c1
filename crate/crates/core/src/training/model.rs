use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::autodiff::{Mode, ParamStore, Tape, Var};
use crate::encoders::{encode_all, encode_batch, EncoderConfig, EncoderInput, EncoderParams};
use crate::error::{Error, Result};

pub const CODE_PREFIX: &str = "code";
pub const SUMMARY_PREFIX: &str = "summary";

/// Hyperparameters shared by the program and summary encoders plus the
/// per-encoder component switches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub dim: usize,
    pub hops_code: usize,
    pub hops_summary: usize,
    pub heads: usize,
    pub dropout: f64,
    pub code_biggnn: bool,
    pub code_attention: bool,
    pub summary_biggnn: bool,
    pub summary_attention: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            dim: 128,
            hops_code: 4,
            hops_summary: 3,
            heads: 2,
            dropout: 0.3,
            code_biggnn: true,
            code_attention: true,
            summary_biggnn: true,
            summary_attention: true,
        }
    }
}

impl ModelConfig {
    pub fn code_encoder(&self) -> EncoderConfig {
        EncoderConfig {
            dim: self.dim,
            hops: self.hops_code,
            heads: self.heads,
            dropout: self.dropout,
            use_biggnn: self.code_biggnn,
            use_attention: self.code_attention,
        }
    }

    pub fn summary_encoder(&self) -> EncoderConfig {
        EncoderConfig {
            dim: self.dim,
            hops: self.hops_summary,
            heads: self.heads,
            dropout: self.dropout,
            use_biggnn: self.summary_biggnn,
            use_attention: self.summary_attention,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.code_encoder().validate()?;
        self.summary_encoder().validate()
    }

    /// Same switches on both sides.
    pub fn with_components(mut self, biggnn: bool, attention: bool) -> Self {
        self.code_biggnn = biggnn;
        self.summary_biggnn = biggnn;
        self.code_attention = attention;
        self.summary_attention = attention;
        self
    }
}

/// Program encoder `f_c` and summary encoder `f_s`, stored under disjoint
/// `code.*` and `summary.*` names in one parameter store.
#[derive(Debug, Clone, PartialEq)]
pub struct DualEncoderModel {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub code: EncoderParams,
    pub summary: EncoderParams,
}

impl DualEncoderModel {
    pub fn new(vocab_size: usize, config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let code = EncoderParams::init(&mut store, CODE_PREFIX, vocab_size, config.code_encoder(), &mut rng)?;
        let summary = EncoderParams::init(&mut store, SUMMARY_PREFIX, vocab_size, config.summary_encoder(), &mut rng)?;
        Ok(DualEncoderModel {
            config,
            store,
            code,
            summary,
        })
    }

    /// Rebinds both encoders to an existing store, checking every shape.
    pub fn from_store(store: ParamStore, config: ModelConfig) -> Result<Self> {
        let code = EncoderParams::from_store(&store, CODE_PREFIX, config.code_encoder())?;
        let summary = EncoderParams::from_store(&store, SUMMARY_PREFIX, config.summary_encoder())?;
        if code.vocab_size != summary.vocab_size {
            return Err(Error::Checkpoint(format!(
                "embedding tables disagree on vocabulary size ({} vs {})",
                code.vocab_size, summary.vocab_size
            )));
        }
        let expected = code.param_ids().len() + summary.param_ids().len();
        if store.len() != expected {
            return Err(Error::Checkpoint(format!(
                "{} parameters present, {expected} expected",
                store.len()
            )));
        }
        Ok(DualEncoderModel {
            config,
            store,
            code,
            summary,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.code.vocab_size
    }

    /// Width of every encoding.
    pub fn output_dim(&self) -> usize {
        2 * self.config.dim
    }

    /// Batched program encodings on `tape` (train or eval per the tape mode).
    pub fn encode_code_batch(&self, tape: &mut Tape, items: &[&EncoderInput]) -> Result<Var> {
        encode_batch(tape, &self.store, &self.code, items)
    }

    pub fn encode_summary_batch(&self, tape: &mut Tape, items: &[&EncoderInput]) -> Result<Var> {
        encode_batch(tape, &self.store, &self.summary, items)
    }

    /// Eval-mode program encodings, one row per item.
    pub fn encode_code(&self, items: &[&EncoderInput]) -> Result<Vec<Vec<f64>>> {
        encode_all(&self.store, &self.code, items, ENCODE_CHUNK)
    }

    pub fn encode_summaries(&self, items: &[&EncoderInput]) -> Result<Vec<Vec<f64>>> {
        encode_all(&self.store, &self.summary, items, ENCODE_CHUNK)
    }

    /// SHA-256 of the serialized checkpoint.
    pub fn fingerprint(&self) -> [u8; 32] {
        Sha256::digest(super::checkpoint::to_bytes(self)).into()
    }

    /// Eval-mode loss over paired items.
    pub fn eval_loss(&self, code: &[&EncoderInput], summary: &[&EncoderInput]) -> Result<f64> {
        let mut tape = Tape::new(Mode::Eval);
        let c = self.encode_code_batch(&mut tape, code)?;
        let s = self.encode_summary_batch(&mut tape, summary)?;
        let l = super::loss::batch_loss(&mut tape, c, s)?;
        Ok(tape.value(l).item())
    }
}

/// Items encoded per eval tape.
pub(crate) const ENCODE_CHUNK: usize = 32;

impl crate::retrieval::PairEncoder for DualEncoderModel {
    fn encode_code(&self, items: &[&EncoderInput]) -> Result<Vec<Vec<f64>>> {
        DualEncoderModel::encode_code(self, items)
    }

    fn encode_summaries(&self, items: &[&EncoderInput]) -> Result<Vec<Vec<f64>>> {
        DualEncoderModel::encode_summaries(self, items)
    }
}
