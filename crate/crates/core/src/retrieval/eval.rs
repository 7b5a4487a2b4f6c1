use rayon::prelude::*;

use super::index::VectorIndex;
use super::metrics::Metrics;
use super::search::{cosine_topk, ScoreMode};
use crate::encoders::EncoderInput;
use crate::error::{Error, Result};
use crate::training::{CorpusRecord, DualEncoderModel, GraphBuilder, Pair, Skipped};
use crate::vocab::Vocabulary;

/// Anything that maps programs and summaries into a shared vector space.
pub trait PairEncoder {
    fn encode_code(&self, items: &[&EncoderInput]) -> Result<Vec<Vec<f64>>>;
    fn encode_summaries(&self, items: &[&EncoderInput]) -> Result<Vec<Vec<f64>>>;
}

/// Index over the programs of `pairs`, keyed by pair id.
pub fn index_pairs(encoder: &impl PairEncoder, pairs: &[Pair], fingerprint: [u8; 32]) -> Result<VectorIndex> {
    let code: Vec<_> = pairs.iter().map(|p| &p.code).collect();
    let vectors = encoder.encode_code(&code)?;
    let dim = vectors.first().map_or(1, Vec::len);
    let mut index = VectorIndex::new(dim, fingerprint)?;
    for (p, v) in pairs.iter().zip(&vectors) {
        index.push(p.id.clone(), v)?;
    }
    Ok(index)
}

/// 1-based rank of each summary's own program among all programs of the
/// pool, by cosine similarity.
pub fn first_hit_ranks(encoder: &impl PairEncoder, pairs: &[Pair]) -> Result<Vec<usize>> {
    let index = index_pairs(encoder, pairs, [0; 32])?;
    let summary: Vec<_> = pairs.iter().map(|p| &p.summary).collect();
    let queries = encoder.encode_summaries(&summary)?;
    queries
        .iter()
        .zip(pairs)
        .map(|(q, p)| {
            let hits = cosine_topk(q, &index, index.len(), ScoreMode::Raw)?;
            Ok(1 + hits.iter().position(|h| h.id == p.id).expect("every id is indexed"))
        })
        .collect()
}

/// R@1, R@5, R@10, MRR and NDCG@10 with each summary ranked against the
/// whole test pool and only its own program relevant.
pub fn evaluate_testset(encoder: &impl PairEncoder, pairs: &[Pair]) -> Result<Metrics> {
    if pairs.len() < 2 {
        return Err(Error::InvalidArgument("evaluation needs at least 2 pairs".into()));
    }
    Metrics::from_ranks(&first_hit_ranks(encoder, pairs)?)
}

/// Result of embedding a corpus.
#[derive(Debug, Clone)]
pub struct EmbedReport {
    pub index: VectorIndex,
    pub skipped: Vec<Skipped>,
}

/// Encodes every record's program with `f_c` into a fresh index. Records
/// whose graphs fail to build are skipped and reported. Work is split into
/// fixed chunks across threads and reassembled in input order.
pub fn embed_corpus(
    records: &[CorpusRecord],
    builder: &GraphBuilder,
    vocab: &Vocabulary,
    model: &DualEncoderModel,
) -> Result<EmbedReport> {
    let mut index = VectorIndex::new(model.output_dim(), model.fingerprint())?;
    let skipped = embed_into(&mut index, records, builder, vocab, model)?;
    Ok(EmbedReport { index, skipped })
}

/// Appends records to an existing index built by the same model.
pub fn embed_into(
    index: &mut VectorIndex,
    records: &[CorpusRecord],
    builder: &GraphBuilder,
    vocab: &Vocabulary,
    model: &DualEncoderModel,
) -> Result<Vec<Skipped>> {
    if *index.fingerprint() != model.fingerprint() {
        return Err(Error::Index("index was built by a different model".into()));
    }
    if index.dim() != model.output_dim() {
        return Err(Error::Index(format!(
            "index dimension {} does not match model output {}",
            index.dim(),
            model.output_dim()
        )));
    }
    type Chunk = (Vec<(String, Vec<f64>)>, Vec<Skipped>);
    let chunks: Vec<Result<Chunk>> = records
        .par_chunks(super::EMBED_CHUNK)
        .map(|chunk| {
            let mut inputs = Vec::new();
            let mut ids = Vec::new();
            let mut skipped = Vec::new();
            for rec in chunk {
                match builder.code_input(rec, vocab) {
                    Ok(input) => {
                        ids.push(rec.id.clone());
                        inputs.push(input);
                    }
                    Err(e) => skipped.push(Skipped {
                        id: rec.id.clone(),
                        reason: e.to_string(),
                    }),
                }
            }
            let refs: Vec<_> = inputs.iter().collect();
            let vectors = if refs.is_empty() { Vec::new() } else { model.encode_code(&refs)? };
            Ok((ids.into_iter().zip(vectors).collect(), skipped))
        })
        .collect();
    let mut skipped = Vec::new();
    for chunk in chunks {
        let (entries, s) = chunk?;
        for (id, v) in entries {
            index.push(id, &v)?;
        }
        skipped.extend(s);
    }
    Ok(skipped)
}
