//! Offline corpus embedding into a persisted vector index, exhaustive cosine
//! search and the ranking metrics used for evaluation.

mod eval;
mod index;
mod metrics;
mod search;

pub use eval::{embed_corpus, embed_into, evaluate_testset, first_hit_ranks, index_pairs, EmbedReport, PairEncoder};
pub use index::{VectorIndex, INDEX_MAGIC, INDEX_VERSION};
pub use metrics::{binary_relevance, dcg, mrr, ndcg, rank_of, success_rate_at_k, Metrics};
pub use search::{cosine, cosine_scores, cosine_topk, Hit, RankedResult, ScoreMode};

/// Records per parallel embedding task.
const EMBED_CHUNK: usize = 32;

#[cfg(test)]
mod tests;
