use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::encoders::EncoderInput;
use crate::error::{Error, Result};
use crate::training::{synthetic_corpus, CorpusRecord, DualEncoderModel, GraphBuilder, ModelConfig, Pair};

fn index_of(rows: &[Vec<f64>]) -> VectorIndex {
    let mut idx = VectorIndex::new(rows[0].len(), [7; 32]).unwrap();
    for (i, r) in rows.iter().enumerate() {
        idx.push(format!("item{i}"), r).unwrap();
    }
    idx
}

#[test]
fn topk_worked_example() {
    let idx = index_of(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0]]);
    let hits = cosine_topk(&[1.0, 0.0], &idx, 2, ScoreMode::Raw).unwrap();
    assert_eq!(
        hits,
        [
            Hit {
                id: "item0".into(),
                score: 1.0
            },
            Hit {
                id: "item1".into(),
                score: 0.0
            }
        ]
    );
    assert_eq!(cosine_topk(&[1.0, 0.0], &idx, 10, ScoreMode::Raw).unwrap().len(), 3);
    assert!(matches!(cosine_topk(&[1.0], &idx, 2, ScoreMode::Raw), Err(Error::Index(_))));
    assert!(cosine_topk(&[1.0, 0.0], &idx, 0, ScoreMode::Raw).is_err());
}

#[test]
fn zero_vectors_score_zero() {
    let idx = index_of(&[vec![0.0, 0.0], vec![1.0, 1.0]]);
    assert_eq!(cosine_scores(&[1.0, 0.0], &idx).unwrap()[0], 0.0);
    assert_eq!(cosine_scores(&[0.0, 0.0], &idx).unwrap(), [0.0, 0.0]);
}

fn brute_force_order(q: &[f64], idx: &VectorIndex) -> Vec<usize> {
    let scores: Vec<f64> = (0..idx.len())
        .map(|i| {
            let v: Vec<f64> = idx.vector(i).iter().map(|&x| f64::from(x)).collect();
            let dot: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
            let nq = q.iter().map(|a| a * a).sum::<f64>().sqrt();
            let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if nq == 0.0 || nv == 0.0 { 0.0 } else { dot / (nq * nv) }
        })
        .collect();
    // Selection sort: repeatedly take the first strict maximum.
    let mut left: Vec<usize> = (0..idx.len()).collect();
    let mut out = Vec::new();
    while !left.is_empty() {
        let mut best = 0;
        for j in 1..left.len() {
            if scores[left[j]] > scores[left[best]] {
                best = j;
            }
        }
        out.push(left.remove(best));
    }
    out
}

proptest! {
    #[test]
    fn ranking_matches_brute_force(
        rows in proptest::collection::vec(proptest::collection::vec(-2i8..3, 3), 1..12),
        q in proptest::collection::vec(-2i8..3, 3),
        k in 1usize..15,
    ) {
        let rows: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|&x| f64::from(x)).collect()).collect();
        let q: Vec<f64> = q.iter().map(|&x| f64::from(x)).collect();
        let idx = index_of(&rows);
        let hits = cosine_topk(&q, &idx, k, ScoreMode::Raw).unwrap();
        let expect: Vec<String> = brute_force_order(&q, &idx).into_iter().take(k).map(|i| format!("item{i}")).collect();
        let got: Vec<String> = hits.iter().map(|h| h.id.clone()).collect();
        prop_assert_eq!(got, expect);
        prop_assert!(hits.windows(2).all(|w| w[0].score >= w[1].score));

        let plus = cosine_topk(&q, &idx, k, ScoreMode::PlusOne).unwrap();
        for (a, b) in hits.iter().zip(&plus) {
            prop_assert_eq!(&a.id, &b.id);
            prop_assert_eq!(b.score, a.score + 1.0);
        }
    }

    #[test]
    fn scaling_query_changes_nothing(seed in any::<u64>(), c in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..8).map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let q: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let scaled: Vec<f64> = q.iter().map(|x| x * c).collect();
        let idx = index_of(&rows);
        let a = cosine_topk(&q, &idx, 8, ScoreMode::Raw).unwrap();
        let b = cosine_topk(&scaled, &idx, 8, ScoreMode::Raw).unwrap();
        prop_assert_eq!(a.iter().map(|h| &h.id).collect::<Vec<_>>(), b.iter().map(|h| &h.id).collect::<Vec<_>>());
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x.score - y.score).abs() < 1e-12);
        }
    }
}

#[test]
fn index_round_trip() {
    let idx = index_of(&[vec![0.1, -2.5, 3.0], vec![1e-7, 0.0, 1.0]]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.idx");
    idx.save(&path).unwrap();
    let back = VectorIndex::load(&path).unwrap();
    assert_eq!(back, idx);
    assert_eq!(back.to_bytes(), idx.to_bytes());
    let q = [0.3, 0.2, -0.1];
    assert_eq!(
        cosine_topk(&q, &back, 2, ScoreMode::Raw).unwrap(),
        cosine_topk(&q, &idx, 2, ScoreMode::Raw).unwrap()
    );

    let empty = VectorIndex::new(4, [0; 32]).unwrap();
    assert_eq!(VectorIndex::from_bytes(&empty.to_bytes()).unwrap(), empty);
}

#[test]
fn index_errors() {
    let idx = index_of(&[vec![1.0, 2.0]]);
    let bytes = idx.to_bytes();
    let mut bad = bytes.clone();
    bad[3] = 0;
    assert!(matches!(VectorIndex::from_bytes(&bad), Err(Error::Index(m)) if m.contains("magic")));
    assert!(matches!(VectorIndex::from_bytes(&bytes[..bytes.len() - 1]), Err(Error::Index(m)) if m.contains("truncated")));

    let mut idx = idx;
    assert!(idx.push("item0", &[0.0, 1.0]).is_err());
    assert!(idx.push("z", &[0.0]).is_err());
    assert!(idx.push("z", &[f64::INFINITY, 0.0]).is_err());
    let other = VectorIndex::new(2, [1; 32]).unwrap();
    assert!(idx.append(&other).is_err());
    let mut same = VectorIndex::new(2, [7; 32]).unwrap();
    same.push("w", &[1.0, 1.0]).unwrap();
    idx.append(&same).unwrap();
    assert_eq!(idx.position("w"), Some(1));
}

/// Encodes an item as the one-hot vector of its first node token.
struct OneHot(usize);

impl OneHot {
    fn encode(&self, items: &[&EncoderInput]) -> Vec<Vec<f64>> {
        items
            .iter()
            .map(|it| (0..self.0).map(|j| if j == it.node_tokens[0] { 1.0 } else { 0.0 }).collect())
            .collect()
    }
}

impl PairEncoder for OneHot {
    fn encode_code(&self, items: &[&EncoderInput]) -> Result<Vec<Vec<f64>>> {
        Ok(self.encode(items))
    }

    fn encode_summaries(&self, items: &[&EncoderInput]) -> Result<Vec<Vec<f64>>> {
        Ok(self.encode(items))
    }
}

fn token_pairs(n: usize) -> Vec<Pair> {
    (0..n)
        .map(|i| {
            let input = EncoderInput::new(vec![i], vec![], vec![0]).unwrap();
            Pair {
                id: format!("p{i}"),
                code: input.clone(),
                summary: input,
            }
        })
        .collect()
}

#[test]
fn perfect_encoder_scores_one() {
    let m = evaluate_testset(&OneHot(12), &token_pairs(12)).unwrap();
    assert_eq!(
        m,
        Metrics {
            r1: 1.0,
            r5: 1.0,
            r10: 1.0,
            mrr: 1.0,
            ndcg: 1.0
        }
    );
    assert!(evaluate_testset(&OneHot(2), &token_pairs(1)).is_err());
}

/// Fixed random encodings looked up by the item's first token.
struct Table(Vec<Vec<f64>>, Vec<Vec<f64>>);

impl PairEncoder for Table {
    fn encode_code(&self, items: &[&EncoderInput]) -> Result<Vec<Vec<f64>>> {
        Ok(items.iter().map(|it| self.0[it.node_tokens[0]].clone()).collect())
    }

    fn encode_summaries(&self, items: &[&EncoderInput]) -> Result<Vec<Vec<f64>>> {
        Ok(items.iter().map(|it| self.1[it.node_tokens[0]].clone()).collect())
    }
}

#[test]
fn random_encodings_give_chance_mrr() {
    let n = 50;
    let pairs = token_pairs(n);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut total = 0.0;
    for _ in 0..100 {
        let mut table = || -> Vec<Vec<f64>> { (0..n).map(|_| (0..8).map(|_| rng.random_range(-1.0..1.0)).collect()).collect() };
        let enc = Table(table(), table());
        total += evaluate_testset(&enc, &pairs).unwrap().mrr;
    }
    let harmonic: f64 = (1..=n).map(|i| 1.0 / i as f64).sum();
    let expected = harmonic / n as f64;
    assert!((total / 100.0 - expected).abs() < 0.03, "{} vs {expected}", total / 100.0);
}

#[test]
fn evaluation_equals_composed_operations() {
    let n = 20;
    let pairs = token_pairs(n);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut table = || -> Vec<Vec<f64>> { (0..n).map(|_| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect()).collect() };
    let enc = Table(table(), table());
    let idx = index_of(&enc.0);
    let mut ranks = Vec::new();
    for i in 0..n {
        let hits = cosine_topk(&enc.1[i], &idx, n, ScoreMode::Raw).unwrap();
        ranks.push(1 + hits.iter().position(|h| h.id == format!("item{i}")).unwrap());
    }
    let rels: Vec<Vec<f64>> = ranks.iter().map(|&r| binary_relevance(r, n)).collect();
    let m = evaluate_testset(&enc, &pairs).unwrap();
    assert_eq!(m.r1, success_rate_at_k(&ranks, 1).unwrap());
    assert_eq!(m.r5, success_rate_at_k(&ranks, 5).unwrap());
    assert_eq!(m.r10, success_rate_at_k(&ranks, 10).unwrap());
    assert_eq!(m.mrr, mrr(&ranks).unwrap());
    assert_eq!(m.ndcg, ndcg(&rels, 10).unwrap());
}

fn tiny_model(vocab: usize) -> DualEncoderModel {
    let config = ModelConfig {
        dim: 8,
        hops_code: 2,
        hops_summary: 2,
        ..ModelConfig::default()
    };
    DualEncoderModel::new(vocab, config, 3).unwrap()
}

#[test]
fn embedding_a_corpus() {
    let mut records = synthetic_corpus(70, 4);
    records.insert(5, CorpusRecord::new("bad", "while :", "broken"));
    let builder = GraphBuilder::default();
    let vocab = builder.build_vocab(&records, 1000).unwrap();
    let model = tiny_model(vocab.len());
    let a = embed_corpus(&records, &builder, &vocab, &model).unwrap();
    assert_eq!(a.index.len(), 70);
    assert_eq!(a.index.dim(), 16);
    assert_eq!(a.skipped.len(), 1);
    assert_eq!(a.index.id(5), records[6].id);
    let b = embed_corpus(&records, &builder, &vocab, &model).unwrap();
    assert_eq!(a.index.to_bytes(), b.index.to_bytes());
    assert_eq!(a.index.fingerprint(), &model.fingerprint());

    let empty = embed_corpus(&[], &builder, &vocab, &model).unwrap();
    assert!(empty.index.is_empty());
    assert!(VectorIndex::from_bytes(&empty.index.to_bytes()).unwrap().is_empty());

    let other = DualEncoderModel::new(vocab.len(), model.config, 99).unwrap();
    let mut idx = a.index.clone();
    assert!(matches!(embed_into(&mut idx, &records[..2], &builder, &vocab, &other), Err(Error::Index(_))));
}
