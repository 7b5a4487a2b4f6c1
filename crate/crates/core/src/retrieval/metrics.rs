use crate::error::{Error, Result};

fn check_ranks(ranks: &[usize]) -> Result<()> {
    if ranks.is_empty() {
        return Err(Error::EmptyInput);
    }
    if ranks.contains(&0) {
        return Err(Error::InvalidArgument("ranks are 1-based".into()));
    }
    Ok(())
}

/// Fraction of queries whose first correct hit is within the top `k`.
pub fn success_rate_at_k(ranks: &[usize], k: usize) -> Result<f64> {
    check_ranks(ranks)?;
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let hits = ranks.iter().filter(|&&r| r <= k).count();
    Ok(hits as f64 / ranks.len() as f64)
}

/// Mean reciprocal rank of the first correct hit.
pub fn mrr(ranks: &[usize]) -> Result<f64> {
    check_ranks(ranks)?;
    Ok(ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / ranks.len() as f64)
}

/// `sum_{i=1..p} (2^rel_i - 1) / log2(i + 1)` over the first `p` positions.
pub fn dcg(relevances: &[f64], p: usize) -> f64 {
    relevances
        .iter()
        .take(p)
        .enumerate()
        .map(|(i, &rel)| (rel.exp2() - 1.0) / ((i + 2) as f64).log2())
        .sum()
}

/// Mean NDCG@p over queries. Each list holds graded relevances in ranked
/// order; a query without any relevant item scores 0.
pub fn ndcg(relevances: &[Vec<f64>], p: usize) -> Result<f64> {
    if relevances.is_empty() {
        return Err(Error::EmptyInput);
    }
    if p == 0 {
        return Err(Error::InvalidArgument("p must be at least 1".into()));
    }
    let mut total = 0.0;
    for rels in relevances {
        if rels.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::InvalidArgument("relevances must be finite and non-negative".into()));
        }
        let mut ideal = rels.clone();
        ideal.sort_by(|a, b| b.total_cmp(a));
        let idcg = dcg(&ideal, p);
        if idcg > 0.0 {
            total += dcg(rels, p) / idcg;
        }
    }
    Ok(total / relevances.len() as f64)
}

/// Binary relevance list of length `len` with the single relevant item at
/// 1-based position `rank`.
pub fn binary_relevance(rank: usize, len: usize) -> Vec<f64> {
    (1..=len).map(|i| if i == rank { 1.0 } else { 0.0 }).collect()
}

/// 1-based rank of `target` under descending `scores`, ties broken by the
/// lower index.
pub fn rank_of(scores: &[f64], target: usize) -> usize {
    let s = scores[target];
    1 + scores
        .iter()
        .enumerate()
        .filter(|&(j, &x)| x > s || (x == s && j < target))
        .count()
}

/// Summary of a test-set evaluation.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Metrics {
    pub r1: f64,
    pub r5: f64,
    pub r10: f64,
    pub mrr: f64,
    pub ndcg: f64,
}

impl Metrics {
    /// All five metrics from first-hit ranks under binary relevance, with
    /// NDCG cut at 10.
    pub fn from_ranks(ranks: &[usize]) -> Result<Self> {
        let rels: Vec<Vec<f64>> = ranks.iter().map(|&r| binary_relevance(r, r.max(10))).collect();
        Ok(Metrics {
            r1: success_rate_at_k(ranks, 1)?,
            r5: success_rate_at_k(ranks, 5)?,
            r10: success_rate_at_k(ranks, 10)?,
            mrr: mrr(ranks)?,
            ndcg: ndcg(&rels, 10)?,
        })
    }

    pub fn is_finite(&self) -> bool {
        [self.r1, self.r5, self.r10, self.mrr, self.ndcg].iter().all(|x| x.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn worked_values() {
        assert_eq!(success_rate_at_k(&[1, 3, 12], 5).unwrap(), 2.0 / 3.0);
        assert_eq!(success_rate_at_k(&[1, 1], 7).unwrap(), 1.0);
        assert_eq!(mrr(&[1, 1, 1]).unwrap(), 1.0);
        assert_eq!(mrr(&[1, 2, 4]).unwrap(), 7.0 / 12.0);
        assert_eq!(mrr(&[2, 2]).unwrap(), 0.5);
        assert_eq!(ndcg(&[binary_relevance(1, 10)], 10).unwrap(), 1.0);
        assert_eq!(ndcg(&[binary_relevance(2, 10)], 10).unwrap(), 1.0 / 3f64.log2());
        assert_eq!(ndcg(&[vec![0.0; 10]], 10).unwrap(), 0.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(mrr(&[]), Err(Error::EmptyInput)));
        assert!(mrr(&[0]).is_err());
        assert!(success_rate_at_k(&[1], 0).is_err());
        assert!(ndcg(&[], 10).is_err());
        assert!(ndcg(&[vec![-1.0]], 10).is_err());
    }

    #[test]
    fn rank_ties_prefer_lower_index() {
        let scores = [0.5, 0.9, 0.5, 0.1];
        assert_eq!(rank_of(&scores, 1), 1);
        assert_eq!(rank_of(&scores, 0), 2);
        assert_eq!(rank_of(&scores, 2), 3);
        assert_eq!(rank_of(&scores, 3), 4);
    }

    #[test]
    fn binary_metrics_beyond_cutoff() {
        let m = Metrics::from_ranks(&[1, 20]).unwrap();
        assert_eq!(m.r1, 0.5);
        assert_eq!(m.r10, 0.5);
        assert_eq!(m.ndcg, 0.5);
        assert_eq!(m.mrr, (1.0 + 0.05) / 2.0);
    }

    proptest! {
        #[test]
        fn bounded_and_monotone(ranks in proptest::collection::vec(1usize..40, 1..30), k in 1usize..40) {
            let a = success_rate_at_k(&ranks, k).unwrap();
            let b = success_rate_at_k(&ranks, k + 1).unwrap();
            prop_assert!(a <= b);
            let m = mrr(&ranks).unwrap();
            prop_assert!((0.0..=1.0).contains(&m));
            prop_assert!(m <= success_rate_at_k(&ranks, usize::MAX).unwrap());
        }

        #[test]
        fn ndcg_in_unit_interval(rels in proptest::collection::vec(proptest::collection::vec(0.0f64..4.0, 0..15), 1..10), p in 1usize..20) {
            let v = ndcg(&rels, p).unwrap();
            prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
        }
    }
}
