//! Dual-encoder model, in-batch contrastive loss, the training loop and
//! checkpoint persistence, plus corpus handling and a synthetic corpus.

mod checkpoint;
mod corpus;
mod fit;
mod loss;
mod model;
mod synth;

pub use checkpoint::{
    from_bytes, load_checkpoint, load_checkpoint_for, save_checkpoint, to_bytes, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use corpus::{load_corpus, read_corpus, save_corpus, write_corpus, CorpusRecord, GraphBuilder, Pair, Skipped};
pub use fit::{fit, fit_with_progress, train_step, EpochRecord, History, TrainConfig};
pub use loss::{batch_loss, batch_loss_value};
pub use model::{DualEncoderModel, ModelConfig, CODE_PREFIX, SUMMARY_PREFIX};
pub use synth::synthetic_corpus;
