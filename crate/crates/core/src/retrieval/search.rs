use serde::Serialize;

use super::index::VectorIndex;
use crate::error::{Error, Result};

/// How scores are reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScoreMode {
    /// Cosine similarity in `[-1, 1]`.
    #[default]
    Raw,
    /// Cosine similarity plus one, in `[0, 2]`.
    PlusOne,
}

impl ScoreMode {
    pub fn offset(self) -> f64 {
        match self {
            ScoreMode::Raw => 0.0,
            ScoreMode::PlusOne => 1.0,
        }
    }
}

impl std::str::FromStr for ScoreMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(ScoreMode::Raw),
            "plus-one" | "plus_one" => Ok(ScoreMode::PlusOne),
            _ => Err(Error::InvalidArgument(format!("unknown score mode `{s}` (raw | plus-one)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Hit {
    pub id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedResult {
    pub query: String,
    pub k: usize,
    pub hits: Vec<Hit>,
}

/// Cosine similarity in `f64`; 0 when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let y = f64::from(y);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}

/// Cosine score of `query` against every entry, in insertion order.
pub fn cosine_scores(query: &[f64], index: &VectorIndex) -> Result<Vec<f64>> {
    if query.len() != index.dim() {
        return Err(Error::Index(format!(
            "query has length {}, index dimension is {}",
            query.len(),
            index.dim()
        )));
    }
    Ok((0..index.len()).map(|i| cosine(query, index.vector(i))).collect())
}

/// Exhaustive top-`k` by cosine similarity; ties go to the earlier entry.
pub fn cosine_topk(query: &[f64], index: &VectorIndex, k: usize, mode: ScoreMode) -> Result<Vec<Hit>> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let scores = cosine_scores(query, index)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    Ok(order
        .into_iter()
        .take(k)
        .map(|i| Hit {
            id: index.id(i).to_string(),
            score: scores[i] + mode.offset(),
        })
        .collect())
}
