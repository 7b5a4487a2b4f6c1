use gsn_core::config::Config;
use gsn_core::retrieval::{cosine_topk, Hit, ScoreMode, VectorIndex};
use gsn_core::training::{load_checkpoint_for, DualEncoderModel, GraphBuilder};
use gsn_core::vocab::Vocabulary;
use gsn_core::{Error, Result};

/// A loaded model, vocabulary and index answering free-text queries.
///
/// Queries go through the linear fallback parse, the summary encoder and an
/// exhaustive cosine scan. Nothing here mutates after construction, so one
/// instance can serve concurrent readers.
#[derive(Debug, Clone)]
pub struct SearchService {
    model: DualEncoderModel,
    vocab: Vocabulary,
    index: VectorIndex,
    builder: GraphBuilder,
    mode: ScoreMode,
}

impl SearchService {
    /// Fails when the index was not built by `model`.
    pub fn new(
        model: DualEncoderModel,
        vocab: Vocabulary,
        index: VectorIndex,
        builder: GraphBuilder,
        mode: ScoreMode,
    ) -> Result<Self> {
        if *index.fingerprint() != model.fingerprint() {
            return Err(Error::Index(
                "index fingerprint does not match the checkpoint; rebuild the index".into(),
            ));
        }
        if model.vocab_size() != vocab.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint expects {} vocabulary entries, vocabulary file has {}",
                model.vocab_size(),
                vocab.len()
            )));
        }
        Ok(SearchService {
            model,
            vocab,
            index,
            builder,
            mode,
        })
    }

    /// Loads the checkpoint, vocabulary and index named by `config`.
    pub fn load(config: &Config) -> Result<Self> {
        let model = load_checkpoint_for(&config.checkpoint, &config.model)?;
        let vocab = Vocabulary::load(&config.vocab)?;
        let index = VectorIndex::load(&config.index)?;
        Self::new(model, vocab, index, config.graph_builder()?, config.score_mode)
    }

    pub fn index(&self) -> &VectorIndex {
        &self.index
    }

    pub fn with_mode(mut self, mode: ScoreMode) -> Self {
        self.mode = mode;
        self
    }

    /// Top `min(k, len)` programs for `query`, best first.
    pub fn search(&self, query: &str, k: usize) -> Result<Vec<Hit>> {
        if k < 1 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        if query.trim().is_empty() {
            return Err(Error::InvalidArgument("query text is empty".into()));
        }
        let input = self.builder.query_input(query, &self.vocab)?;
        let vector = self.model.encode_summaries(&[&input])?.remove(0);
        cosine_topk(&vector, &self.index, k, self.mode)
    }
}
