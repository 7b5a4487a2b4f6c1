use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autodiff::{finite_difference_check, finite_difference_check_params, Mode, ParamStore, Tape, Tensor, DEFAULT_STEP};
use crate::vocab::UNK;
use crate::Error;

type Rows = Vec<Vec<f64>>;

fn setup(dim: usize, hops: usize, heads: usize, vocab: usize, seed: u64) -> (ParamStore, EncoderParams) {
    let mut store = ParamStore::new();
    let cfg = EncoderConfig {
        dim,
        hops,
        heads,
        dropout: 0.3,
        use_biggnn: true,
        use_attention: true,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = EncoderParams::init(&mut store, "enc", vocab, cfg, &mut rng).unwrap();
    (store, params)
}

fn random_input(rng: &mut ChaCha8Rng, n: usize, vocab: usize, edge_prob: f64) -> EncoderInput {
    // Built inputs never contain PAD (id 0), whose zero embedding can park a
    // ReLU exactly on its kink.
    let tokens = (0..n).map(|_| rng.random_range(1..vocab)).collect();
    let mut edges = Vec::new();
    for s in 0..n {
        for d in 0..n {
            if s != d && rng.random::<f64>() < edge_prob {
                edges.push((s, d));
            }
        }
    }
    let mut seq: Vec<usize> = (0..n).filter(|_| rng.random::<f64>() < 0.6).collect();
    if seq.is_empty() {
        seq.push(0);
    }
    EncoderInput::new(tokens, edges, seq).unwrap()
}

// Plain-loop reference implementation used as an oracle.

fn affine(x: &Rows, w: &Tensor, b: Option<&Tensor>) -> Rows {
    x.iter()
        .map(|row| {
            (0..w.cols())
                .map(|j| {
                    let mut s = b.map_or(0.0, |b| b.data()[j]);
                    for (k, xk) in row.iter().enumerate() {
                        s += xk * w.data()[k * w.cols() + j];
                    }
                    s
                })
                .collect()
        })
        .collect()
}

fn sig(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn cat(parts: &[&Rows]) -> Rows {
    (0..parts[0].len())
        .map(|i| parts.iter().flat_map(|p| p[i].iter().copied()).collect())
        .collect()
}

fn zip(a: &Rows, b: &Rows, f: impl Fn(f64, f64) -> f64) -> Rows {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| f(*p, *q)).collect())
        .collect()
}

fn ref_aggregate(h: &Rows, edges: &[(usize, usize)], dir: Direction) -> Rows {
    let d = h[0].len();
    let mut out = vec![vec![0.0; d]; h.len()];
    for &(s, t) in edges {
        let (from, to) = match dir {
            Direction::Backward => (s, t),
            Direction::Forward => (t, s),
        };
        for j in 0..d {
            out[to][j] += h[from][j];
        }
    }
    out
}

fn ref_fuse(a: &Rows, b: &Rows, store: &ParamStore, p: &EncoderParams) -> Rows {
    let prod = zip(a, b, |x, y| x * y);
    let diff = zip(a, b, |x, y| x - y);
    let z = affine(&cat(&[a, b, &prod, &diff]), store.get(p.fuse.weight), Some(store.get(p.fuse.bias)));
    a.iter()
        .zip(b)
        .zip(&z)
        .map(|((ar, br), zr)| (0..ar.len()).map(|j| sig(zr[j]) * ar[j] + (1.0 - sig(zr[j])) * br[j]).collect())
        .collect()
}

fn ref_gru(h: &Rows, m: &Rows, store: &ParamStore, p: &EncoderParams) -> Rows {
    let mh = cat(&[m, h]);
    let lin = |x: &Rows, l: &LinearIds| affine(x, store.get(l.weight), Some(store.get(l.bias)));
    let z = lin(&mh, &p.gru_update);
    let r = lin(&mh, &p.gru_reset);
    let rh = zip(&r, h, |rv, hv| sig(rv) * hv);
    let c = lin(&cat(&[m, &rh]), &p.gru_candidate);
    (0..h.len())
        .map(|i| {
            (0..h[i].len())
                .map(|j| {
                    let zz = sig(z[i][j]);
                    (1.0 - zz) * h[i][j] + zz * c[i][j].tanh()
                })
                .collect()
        })
        .collect()
}

fn ref_attention(x: &Rows, store: &ParamStore, p: &EncoderParams) -> Rows {
    let heads = p.config.heads;
    let dk = p.config.head_dim();
    let q = affine(x, store.get(p.attn_query), None);
    let k = affine(x, store.get(p.attn_key), None);
    let v = affine(x, store.get(p.attn_value), None);
    let l = x.len();
    let mut concat = vec![vec![0.0; heads * dk]; l];
    for hd in 0..heads {
        for i in 0..l {
            let scores: Vec<f64> = (0..l)
                .map(|j| (0..dk).map(|c| q[i][hd * dk + c] * k[j][hd * dk + c]).sum::<f64>() / (dk as f64).sqrt())
                .collect();
            let mx = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = scores.iter().map(|s| (s - mx).exp()).collect();
            let z: f64 = e.iter().sum();
            for c in 0..dk {
                concat[i][hd * dk + c] = (0..l).map(|j| e[j] / z * v[j][hd * dk + c]).sum();
            }
        }
    }
    affine(&concat, store.get(p.attn_output), None)
}

fn ref_encode(store: &ParamStore, p: &EncoderParams, item: &EncoderInput) -> Vec<f64> {
    let emb = store.get(p.embedding);
    let h0: Rows = item.node_tokens.iter().map(|&t| emb.row(t).to_vec()).collect();
    let mut h = h0.clone();
    for _ in 0..p.config.hops {
        let back = ref_aggregate(&h, &item.edges, Direction::Backward);
        let fwd = ref_aggregate(&h, &item.edges, Direction::Forward);
        let m = ref_fuse(&back, &fwd, store, p);
        h = ref_gru(&h, &m, store, p);
    }
    let fc = affine(&h, store.get(p.readout.weight), Some(store.get(p.readout.bias)));
    let d = p.config.dim;
    let hg: Vec<f64> = (0..d)
        .map(|j| fc.iter().map(|r| r[j].max(0.0)).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let x: Rows = item.sequence.iter().map(|&v| h0[v].clone()).collect();
    let ctx = ref_attention(&x, store, p);
    let hc: Vec<f64> = (0..d).map(|j| ctx.iter().map(|r| r[j]).sum::<f64>() / ctx.len() as f64).collect();
    hg.into_iter().chain(hc).collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn encoder_matches_reference_implementation() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for seed in 0..8 {
        let (store, params) = setup(8, 1 + seed as usize % 3, [1, 2, 4][seed as usize % 3], 12, seed);
        let item = random_input(&mut rng, 2 + seed as usize, 12, 0.3);
        let got = encode_joint(&store, &params, &item).unwrap();
        let want = ref_encode(&store, &params, &item);
        assert!(max_abs_diff(&got, &want) < 1e-12, "seed {seed}");
    }
}

#[test]
fn batching_does_not_change_encodings() {
    let (store, params) = setup(8, 2, 2, 10, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let items: Vec<_> = (0..5).map(|i| random_input(&mut rng, 3 + i, 10, 0.3)).collect();
    let refs: Vec<&EncoderInput> = items.iter().collect();
    let together = encode_all(&store, &params, &refs, 5).unwrap();
    for (item, row) in items.iter().zip(&together) {
        assert!(max_abs_diff(&encode_joint(&store, &params, item).unwrap(), row) < 1e-12);
    }
}

#[test]
fn init_node_states_rows() {
    let (store, params) = setup(4, 1, 1, 6, 0);
    let item = EncoderInput::new(vec![3, UNK, 3], vec![], vec![0]).unwrap();
    let mut tape = Tape::new(Mode::Eval);
    let h0 = init_node_states(&mut tape, &store, &params, &[&item]).unwrap();
    let emb = store.get(params.embedding);
    let h = tape.value(h0);
    assert_eq!(h.row(0), emb.row(3));
    assert_eq!(h.row(1), emb.row(UNK));
    assert_eq!(h.row(0), h.row(2));
}

fn leaf_rows(tape: &mut Tape, rows: &[&[f64]]) -> crate::autodiff::Var {
    let rows: Rows = rows.iter().map(|r| r.to_vec()).collect();
    tape.constant(Tensor::from_rows(&rows).unwrap()).unwrap()
}

#[test]
fn aggregation_examples() {
    let mut tape = Tape::new(Mode::Eval);
    let h = leaf_rows(&mut tape, &[&[1.0, 2.0], &[3.0, 5.0], &[7.0, 11.0], &[13.0, 17.0]]);
    let edges = [(0, 1), (2, 1), (0, 2)];
    let back = aggregate_directional(&mut tape, h, &edges, Direction::Backward).unwrap();
    let b = tape.value(back);
    assert_eq!(b.row(3), [0.0, 0.0]);
    assert_eq!(b.row(2), [1.0, 2.0]);
    assert_eq!(b.row(1), [8.0, 13.0]);
    let fwd = aggregate_directional(&mut tape, h, &edges, Direction::Forward).unwrap();
    assert_eq!(tape.value(fwd).row(0), [10.0, 16.0]);
    let none = aggregate_directional(&mut tape, h, &[], Direction::Forward).unwrap();
    assert!(tape.value(none).data().iter().all(|&x| x == 0.0));
}

fn zero_linear(tape: &mut Tape, rows: usize, cols: usize) -> Linear {
    Linear {
        weight: tape.constant(Tensor::zeros(&[rows, cols])).unwrap(),
        bias: tape.constant(Tensor::zeros(&[1, cols])).unwrap(),
    }
}

#[test]
fn fuse_examples() {
    let (store, params) = setup(3, 1, 1, 4, 5);
    let mut tape = Tape::new(Mode::Eval);
    let a = leaf_rows(&mut tape, &[&[0.3, -1.2, 2.0], &[0.0, 5.0, -4.0]]);
    let b = leaf_rows(&mut tape, &[&[1.0, 0.5, -2.5], &[2.0, 1.0, 1.0]]);
    let gate = params.fuse_gate(&mut tape, &store).unwrap();
    let same = fuse_gated(&mut tape, a, a, &gate).unwrap();
    assert_eq!(tape.value(same).data(), tape.value(a).data());
    let zero = zero_linear(&mut tape, 12, 3);
    let avg = fuse_gated(&mut tape, a, b, &zero).unwrap();
    for ((o, x), y) in tape.value(avg).data().iter().zip(tape.value(a).data()).zip(tape.value(b).data()) {
        assert!((o - (x + y) / 2.0).abs() < 1e-15);
    }
    let short = leaf_rows(&mut tape, &[&[1.0, 2.0]]);
    assert!(matches!(fuse_gated(&mut tape, a, short, &gate), Err(Error::Shape { .. })));
}

#[test]
fn gru_examples() {
    let mut tape = Tape::new(Mode::Eval);
    let gru = GruVars {
        update: zero_linear(&mut tape, 4, 2),
        reset: zero_linear(&mut tape, 4, 2),
        candidate: zero_linear(&mut tape, 4, 2),
    };
    let h = leaf_rows(&mut tape, &[&[0.8, -3.0]]);
    let m = leaf_rows(&mut tape, &[&[5.0, 1.0]]);
    let out = gru_cell(&mut tape, h, m, &gru).unwrap();
    assert_eq!(tape.value(out).data(), [0.4, -1.5]);
    let zero = leaf_rows(&mut tape, &[&[0.0, 0.0]]);
    let out = gru_cell(&mut tape, zero, m, &gru).unwrap();
    assert_eq!(tape.value(out).data(), [0.0, 0.0]);
    let wide = leaf_rows(&mut tape, &[&[0.0, 0.0, 0.0]]);
    assert!(gru_cell(&mut tape, h, wide, &gru).is_err());
}

#[test]
fn single_node_graph_readout() {
    let (store, params) = setup(6, 3, 2, 5, 2);
    let item = EncoderInput::new(vec![4], vec![], vec![0]).unwrap();
    let enc = encode_joint(&store, &params, &item).unwrap();
    let mut h: Rows = vec![store.get(params.embedding).row(4).to_vec()];
    let zero = vec![vec![0.0; 6]];
    for _ in 0..3 {
        h = ref_gru(&h, &zero, &store, &params);
    }
    let fc = affine(&h, store.get(params.readout.weight), Some(store.get(params.readout.bias)));
    let want: Vec<f64> = fc[0].iter().map(|x| x.max(0.0)).collect();
    assert!(max_abs_diff(&enc[..6], &want) < 1e-12);
}

#[test]
fn receptive_field_chain() {
    let chain = [(0, 1), (1, 2), (2, 3)];
    let rf = |k| receptive_field(4, &chain, 0, k).unwrap().into_iter().collect::<Vec<_>>();
    assert_eq!(rf(1), [0, 1]);
    assert_eq!(rf(2), [0, 1, 2]);
    assert_eq!(rf(3), [0, 1, 2, 3]);
    assert_eq!(receptive_field(4, &chain, 3, 1).unwrap().into_iter().collect::<Vec<_>>(), [2, 3]);
    assert!(matches!(receptive_field(4, &chain, 9, 1), Err(Error::UnknownNode(9))));
}

#[test]
fn attention_examples() {
    let (store, params) = setup(4, 1, 2, 6, 8);
    let mut tape = Tape::new(Mode::Eval);
    let attn = params.attention(&mut tape, &store).unwrap();
    let one = leaf_rows(&mut tape, &[&[0.5, -1.0, 2.0, 0.25]]);
    let (out, w) = multi_head_attention(&mut tape, one, &[0, 1], 2, &attn).unwrap();
    assert_eq!(tape.value(w[0][0]).data(), [1.0]);
    let v = tape.matmul(one, attn.value).unwrap();
    let want = tape.matmul(v, attn.output).unwrap();
    assert!(max_abs_diff(tape.value(out).data(), tape.value(want).data()) < 1e-15);

    let row: &[f64] = &[0.1, 0.2, -0.3, 0.9];
    let same = leaf_rows(&mut tape, &[row, row, row]);
    let (out, w) = multi_head_attention(&mut tape, same, &[0, 3], 2, &attn).unwrap();
    for head in &w[0] {
        for x in tape.value(*head).data() {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }
    let o = tape.value(out);
    assert_eq!(o.row(0), o.row(1));
    assert_eq!(o.row(1), o.row(2));
    assert!(matches!(
        multi_head_attention(&mut tape, same, &[0, 0], 2, &attn),
        Err(Error::EmptySequence)
    ));
}

#[test]
fn sequence_readout_examples() {
    let mut tape = Tape::new(Mode::Eval);
    let x = leaf_rows(&mut tape, &[&[1.0, -2.0], &[1.0, -2.0]]);
    let r = sequence_readout(&mut tape, x, &[0, 2]).unwrap();
    assert_eq!(tape.value(r).data(), [1.0, -2.0]);
    let y = leaf_rows(&mut tape, &[&[1.0, 2.0], &[3.0, 6.0], &[0.5, 0.5]]);
    let r = sequence_readout(&mut tape, y, &[0, 1, 3]).unwrap();
    assert_eq!(tape.value(r).data(), [1.0, 2.0, 1.75, 3.25]);
    let y3 = tape.scale(y, 3.0).unwrap();
    let r3 = sequence_readout(&mut tape, y3, &[0, 1, 3]).unwrap();
    let expect: Vec<f64> = tape.value(r).data().iter().map(|v| 3.0 * v).collect();
    assert_eq!(tape.value(r3).data(), expect.as_slice());
}

#[test]
fn joint_encoding_width_and_toggles() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for d in [32, 64, 128, 256] {
        let (store, params) = setup(d, 1, 2, 8, 0);
        let item = random_input(&mut rng, 4, 8, 0.4);
        assert_eq!(encode_joint(&store, &params, &item).unwrap().len(), 2 * d);
    }
    let (store, mut params) = setup(8, 2, 2, 8, 0);
    let item = random_input(&mut rng, 5, 8, 0.4);
    let full = encode_joint(&store, &params, &item).unwrap();
    params.config.use_attention = false;
    let graph_only = encode_joint(&store, &params, &item).unwrap();
    assert_eq!(graph_only[..8], full[..8]);
    assert!(graph_only[8..].iter().all(|&x| x == 0.0));
    params.config.use_attention = true;
    params.config.use_biggnn = false;
    let attn_only = encode_joint(&store, &params, &item).unwrap();
    assert!(attn_only[..8].iter().all(|&x| x == 0.0));
    assert_eq!(attn_only[8..], full[8..]);
}

#[test]
fn config_validation() {
    let ok = EncoderConfig::default();
    assert!(ok.validate().is_ok());
    for bad in [
        EncoderConfig { heads: 3, ..ok },
        EncoderConfig { hops: 0, ..ok },
        EncoderConfig { use_biggnn: false, use_attention: false, ..ok },
        EncoderConfig { dropout: 1.0, ..ok },
    ] {
        assert!(bad.validate().is_err(), "{bad:?}");
    }
}

#[test]
fn from_store_checks_shapes() {
    let (store, params) = setup(8, 2, 2, 10, 0);
    assert_eq!(EncoderParams::from_store(&store, "enc", params.config).unwrap(), params);
    let wrong = EncoderConfig { dim: 4, heads: 2, ..params.config };
    assert!(matches!(EncoderParams::from_store(&store, "enc", wrong), Err(Error::Checkpoint(_))));
    assert!(EncoderParams::from_store(&store, "other", params.config).is_err());
}

#[test]
fn dropout_is_train_only() {
    let (store, params) = setup(8, 1, 2, 10, 0);
    let item = EncoderInput::new(vec![2, 3, 4, 5], vec![(0, 1), (1, 2)], vec![0, 1]).unwrap();
    let mut eval = Tape::new(Mode::Eval);
    let a = encode_batch(&mut eval, &store, &params, &[&item]).unwrap();
    let mut train = Tape::with_seed(Mode::Train, 1);
    let b = encode_batch(&mut train, &store, &params, &[&item]).unwrap();
    assert_ne!(eval.value(a).data(), train.value(b).data());
    assert_eq!(encode_joint(&store, &params, &item).unwrap(), eval.value(a).data());
}

fn projection(rng: &mut ChaCha8Rng, n: usize) -> Tensor {
    Tensor::matrix(n, 1, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Weighted sum of every entry of `x`, weights taken from `p`.
fn project(tape: &mut Tape, x: crate::autodiff::Var, p: &Tensor) -> crate::Result<crate::autodiff::Var> {
    let n = tape.value(x).numel();
    let weights = Tensor::new(tape.value(x).shape(), p.data()[..n].to_vec())?;
    let pm = tape.constant(weights)?;
    let prod = tape.mul(x, pm)?;
    tape.sum(prod, None)
}

#[test]
fn cell_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut cases = 0;
    for seed in 0..6 {
        let (store, params) = setup(4, 2, 2, 6, seed);
        let edges = vec![(0, 1), (1, 2), (2, 0), (3, 2)];
        let x = Tensor::matrix(4, 4, (0..16).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let y = Tensor::matrix(4, 4, (0..16).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let p = projection(&mut rng, 64);

        let checks: Vec<Box<dyn Fn(&mut Tape, crate::autodiff::Var) -> crate::Result<crate::autodiff::Var>>> = vec![
            Box::new(|t, v| {
                let g = params.fuse_gate(t, &store)?;
                let other = t.constant(y.clone())?;
                let o = fuse_gated(t, v, other, &g)?;
                project(t, o, &p)
            }),
            Box::new(|t, v| {
                let g = params.fuse_gate(t, &store)?;
                let other = t.constant(y.clone())?;
                let o = fuse_gated(t, other, v, &g)?;
                project(t, o, &p)
            }),
            Box::new(|t, v| {
                let g = params.gru(t, &store)?;
                let m = t.constant(y.clone())?;
                let o = gru_cell(t, v, m, &g)?;
                project(t, o, &p)
            }),
            Box::new(|t, v| {
                let g = params.gru(t, &store)?;
                let h = t.constant(y.clone())?;
                let o = gru_cell(t, h, v, &g)?;
                project(t, o, &p)
            }),
            Box::new(|t, v| {
                let o = aggregate_directional(t, v, &edges, Direction::Forward)?;
                project(t, o, &p)
            }),
            Box::new(|t, v| {
                let (f, g) = (params.fuse_gate(t, &store)?, params.gru(t, &store)?);
                let o = biggnn_hop(t, v, &edges, &f, &g)?;
                project(t, o, &p)
            }),
            Box::new(|t, v| {
                let fc = params.readout_layer(t, &store)?;
                let o = graph_readout(t, v, &[0, 2, 4], &fc)?;
                project(t, o, &p)
            }),
            Box::new(|t, v| {
                let a = params.attention(t, &store)?;
                let (o, _) = multi_head_attention(t, v, &[0, 1, 4], 2, &a)?;
                project(t, o, &p)
            }),
            Box::new(|t, v| {
                let o = sequence_readout(t, v, &[0, 3, 4])?;
                project(t, o, &p)
            }),
            Box::new(|t, v| {
                let g = params.gru(t, &store)?;
                let w = t.constant(y.clone())?;
                let o = baseline_ggnn_hop(t, v, &edges, w, &g)?;
                project(t, o, &p)
            }),
            Box::new(|t, v| {
                let w = t.constant(y.clone())?;
                let o = baseline_gcn_layer(t, v, &edges, w)?;
                project(t, o, &p)
            }),
        ];
        for (i, f) in checks.iter().enumerate() {
            let err = finite_difference_check(f, &x, DEFAULT_STEP).unwrap();
            assert!(err < 1e-4, "seed {seed} check {i}: {err}");
            cases += 1;
        }
    }
    assert!(cases >= 60);
}

#[test]
fn full_encoder_parameter_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for seed in 0..3 {
        let (store, params) = setup(4, 2, 2, 6, seed);
        let a = random_input(&mut rng, 5, 6, 0.3);
        let b = random_input(&mut rng, 3, 6, 0.5);
        let p = projection(&mut rng, 16);
        let err = finite_difference_check_params(
            &store,
            |t, s| {
                let r = encode_batch(t, s, &params, &[&a, &b])?;
                project(t, r, &p)
            },
            DEFAULT_STEP,
        )
        .unwrap();
        assert!(err < 1e-4, "seed {seed}: {err}");
    }
}

#[test]
fn ggnn_hop_is_biggnn_with_incoming_only() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for seed in 0..10 {
        let (store, params) = setup(5, 1, 1, 8, seed);
        let item = random_input(&mut rng, 6, 8, 0.3);
        let mut tape = Tape::new(Mode::Eval);
        let h = init_node_states(&mut tape, &store, &params, &[&item]).unwrap();
        let gru = params.gru(&mut tape, &store).unwrap();
        let eye = tape.constant(Tensor::identity(5)).unwrap();
        let base = baseline_ggnn_hop(&mut tape, h, &item.edges, eye, &gru).unwrap();
        let incoming = aggregate_directional(&mut tape, h, &item.edges, Direction::Backward).unwrap();
        let bi = gru_cell(&mut tape, h, incoming, &gru).unwrap();
        assert_eq!(tape.value(base).data(), tape.value(bi).data());
    }
    let mut tape = Tape::new(Mode::Eval);
    let gru = GruVars {
        update: zero_linear(&mut tape, 4, 2),
        reset: zero_linear(&mut tape, 4, 2),
        candidate: zero_linear(&mut tape, 4, 2),
    };
    let h = leaf_rows(&mut tape, &[&[2.0, -4.0], &[1.0, 1.0]]);
    let w = tape.constant(Tensor::zeros(&[2, 2])).unwrap();
    let out = baseline_ggnn_hop(&mut tape, h, &[(0, 1)], w, &gru).unwrap();
    assert_eq!(tape.value(out).data(), [1.0, -2.0, 0.5, 0.5]);
}

#[test]
fn gcn_examples() {
    let mut tape = Tape::new(Mode::Eval);
    let h = leaf_rows(&mut tape, &[&[1.5, -2.0], &[3.0, 1.0], &[-1.0, 4.0]]);
    let eye = tape.constant(Tensor::identity(2)).unwrap();
    let out = baseline_gcn_layer(&mut tape, h, &[(0, 1)], eye).unwrap();
    let o = tape.value(out);
    assert_eq!(o.row(2), [0.0, 4.0]);
    // Node 0 has no incoming neighbour; node 1 hears node 0 with c = sqrt(2 * 1).
    assert_eq!(o.row(0), [1.5, 0.0]);
    assert!((o.row(1)[0] - (1.5 / 2f64.sqrt() + 3.0 / 2.0)).abs() < 1e-15);
    let zero = tape.constant(Tensor::zeros(&[2, 2])).unwrap();
    let out = baseline_gcn_layer(&mut tape, h, &[(0, 1), (2, 0)], zero).unwrap();
    assert!(tape.value(out).data().iter().all(|&x| x == 0.0));
}

fn permute(item: &EncoderInput, perm: &[usize]) -> EncoderInput {
    let mut tokens = vec![0; perm.len()];
    for (old, &new) in perm.iter().enumerate() {
        tokens[new] = item.node_tokens[old];
    }
    EncoderInput::new(
        tokens,
        item.edges.iter().map(|&(s, d)| (perm[s], perm[d])).collect(),
        item.sequence.iter().map(|&v| perm[v]).collect(),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn graph_encoding_is_permutation_invariant(seed in 0u64..1000, n in 1usize..9, perm_seed in any::<u64>()) {
        let (store, params) = setup(6, 2, 2, 10, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let item = random_input(&mut rng, n, 10, 0.35);
        let mut perm: Vec<usize> = (0..n).collect();
        let mut prng = ChaCha8Rng::seed_from_u64(perm_seed);
        for i in (1..n).rev() {
            perm.swap(i, prng.random_range(0..=i));
        }
        let a = encode_joint(&store, &params, &item).unwrap();
        let b = encode_joint(&store, &params, &permute(&item, &perm)).unwrap();
        prop_assert!(max_abs_diff(&a[..6], &b[..6]) < 1e-12);
        // The attention path has no positional encoding, so the mean-pooled
        // sequence encoding is permutation invariant too.
        prop_assert!(max_abs_diff(&a[6..], &b[6..]) < 1e-12);
    }

    #[test]
    fn fuse_of_equal_inputs_is_identity(seed in 0u64..1000, vals in prop::collection::vec(-5.0f64..5.0, 8)) {
        let (store, params) = setup(4, 1, 1, 4, seed);
        let mut tape = Tape::new(Mode::Eval);
        let a = tape.constant(Tensor::matrix(2, 4, vals.clone()).unwrap()).unwrap();
        let gate = params.fuse_gate(&mut tape, &store).unwrap();
        let out = fuse_gated(&mut tape, a, a, &gate).unwrap();
        prop_assert_eq!(tape.value(out).data(), vals.as_slice());
    }

    #[test]
    fn attention_rows_sum_to_one(seed in 0u64..1000, l in 1usize..7, heads in prop::sample::select(vec![1usize, 2, 4])) {
        let (store, params) = setup(8, 1, heads, 4, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tape = Tape::new(Mode::Eval);
        let x = tape.constant(Tensor::matrix(l, 8, (0..l * 8).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap()).unwrap();
        let attn = params.attention(&mut tape, &store).unwrap();
        let (_, w) = multi_head_attention(&mut tape, x, &[0, l], heads, &attn).unwrap();
        for head in &w[0] {
            let t = tape.value(*head);
            for r in 0..t.rows() {
                prop_assert!((t.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn gcn_is_permutation_equivariant(n in 1usize..7, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let item = random_input(&mut rng, n, 4, 0.4);
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let h: Rows = (0..n).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let mut hp = vec![vec![]; n];
        for (old, &new) in perm.iter().enumerate() {
            hp[new] = h[old].clone();
        }
        let w = Tensor::matrix(3, 3, (0..9).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let mut tape = Tape::new(Mode::Eval);
        let hv = tape.constant(Tensor::from_rows(&h).unwrap()).unwrap();
        let hpv = tape.constant(Tensor::from_rows(&hp).unwrap()).unwrap();
        let wv = tape.constant(w).unwrap();
        let a = baseline_gcn_layer(&mut tape, hv, &item.edges, wv).unwrap();
        let permuted_edges: Vec<_> = item.edges.iter().map(|&(s, d)| (perm[s], perm[d])).collect();
        let b = baseline_gcn_layer(&mut tape, hpv, &permuted_edges, wv).unwrap();
        for (old, &new) in perm.iter().enumerate() {
            prop_assert!(max_abs_diff(tape.value(a).row(old), tape.value(b).row(new)) < 1e-12);
        }
    }
}

fn config_with(store_seed: u64, attention: bool) -> (ParamStore, EncoderParams) {
    let mut store = ParamStore::new();
    let cfg = EncoderConfig {
        dim: 8,
        hops: 2,
        heads: 2,
        dropout: 0.0,
        use_biggnn: true,
        use_attention: attention,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(store_seed);
    let params = EncoderParams::init(&mut store, "enc", 12, cfg, &mut rng).unwrap();
    (store, params)
}

#[test]
fn perturbations_outside_the_receptive_field_are_invisible() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (store, params) = config_with(5, false);
    for _ in 0..10 {
        let n = rng.random_range(2..14);
        let item = random_input(&mut rng, n, 12, 0.12);
        for u in 0..n {
            let delta: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
            let effect = perturbation_effect(&store, &params, &item, u, &delta).unwrap();
            for v in 0..n {
                let field = receptive_field(n, &item.edges, v, params.config.hops).unwrap();
                if !field.contains(&u) {
                    assert_eq!(effect.node_state_change[v], 0.0, "node {v} sensed node {u}");
                }
            }
            assert!(effect.node_state_change[u] > 0.0);
            assert_eq!(effect.sequence_change, 0.0);
        }
    }
}

#[test]
fn attention_senses_every_sequence_position() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (store, params) = config_with(6, true);
    // Two components far apart: 0-1-2-3-4 chain and an isolated node 5.
    let item = EncoderInput::new(vec![2, 3, 4, 5, 6, 7], vec![(0, 1), (1, 2), (2, 3), (3, 4)], vec![0, 4, 5]).unwrap();
    for &u in &item.sequence {
        let delta: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let effect = perturbation_effect(&store, &params, &item, u, &delta).unwrap();
        assert!(effect.sequence_change > 1e-9);
        assert!(effect.joint_change > 1e-9);
        // Node 0 cannot see node 4 within two hops, attention can.
        if u == 4 {
            assert_eq!(effect.node_state_change[0], 0.0);
        }
    }
    assert!(perturbation_effect(&store, &params, &item, 9, &[0.0; 8]).is_err());
    assert!(perturbation_effect(&store, &params, &item, 0, &[0.0; 3]).is_err());
}
