use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::cells::{
    biggnn_hop, graph_readout, multi_head_attention, sequence_readout, AttentionVars, GruVars, Linear,
};
use super::input::{Batch, EncoderInput};
use crate::autodiff::{Mode, ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Architecture of one encoder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderConfig {
    pub dim: usize,
    pub hops: usize,
    pub heads: usize,
    /// Dropout rate after the embedding lookup, active in train mode only.
    pub dropout: f64,
    pub use_biggnn: bool,
    pub use_attention: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            dim: 128,
            hops: 4,
            heads: 2,
            dropout: 0.3,
            use_biggnn: true,
            use_attention: true,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.dim == 0 || self.heads == 0 || self.hops == 0 {
            return bad(format!(
                "dim, hops and heads must be positive (dim={}, hops={}, heads={})",
                self.dim, self.hops, self.heads
            ));
        }
        if !self.dim.is_multiple_of(self.heads) {
            return bad(format!("heads {} must divide dim {}", self.heads, self.dim));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !self.use_biggnn && !self.use_attention {
            return bad("an encoder needs BiGGNN, attention or both".into());
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    /// Length of the joint encoding `[h_g; h_c]`.
    pub fn output_dim(&self) -> usize {
        2 * self.dim
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinearIds {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl LinearIds {
    fn load(&self, tape: &mut Tape, store: &ParamStore) -> Result<Linear> {
        Ok(Linear {
            weight: tape.param(store, self.weight)?,
            bias: tape.param(store, self.bias)?,
        })
    }
}

/// Parameter handles of one encoder inside a shared [`ParamStore`]; every
/// name carries the encoder's prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    pub prefix: String,
    pub vocab_size: usize,
    pub embedding: ParamId,
    pub gru_update: LinearIds,
    pub gru_reset: LinearIds,
    pub gru_candidate: LinearIds,
    pub fuse: LinearIds,
    pub readout: LinearIds,
    pub attn_query: ParamId,
    pub attn_key: ParamId,
    pub attn_value: ParamId,
    pub attn_output: ParamId,
}

/// Parameter names and shapes of an encoder, in creation order.
pub fn parameter_layout(prefix: &str, vocab_size: usize, dim: usize) -> Vec<(String, Vec<usize>)> {
    let d = dim;
    let mut out = vec![(format!("{prefix}.embedding"), vec![vocab_size, d])];
    for gate in ["update", "reset", "candidate"] {
        out.push((format!("{prefix}.gru.{gate}.weight"), vec![2 * d, d]));
        out.push((format!("{prefix}.gru.{gate}.bias"), vec![1, d]));
    }
    out.push((format!("{prefix}.fuse.weight"), vec![4 * d, d]));
    out.push((format!("{prefix}.fuse.bias"), vec![1, d]));
    out.push((format!("{prefix}.readout.weight"), vec![d, d]));
    out.push((format!("{prefix}.readout.bias"), vec![1, d]));
    for p in ["query", "key", "value"] {
        out.push((format!("{prefix}.attention.{p}"), vec![d, d]));
    }
    out.push((format!("{prefix}.attention.output"), vec![d, d]));
    out
}

fn glorot(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    let dist = Uniform::new_inclusive(-a, a).expect("finite bounds");
    let data = (0..rows * cols).map(|_| dist.sample(rng)).collect();
    Tensor::matrix(rows, cols, data).expect("positive extents")
}

impl EncoderParams {
    /// Creates freshly initialized parameters: Glorot-uniform weights, zero
    /// biases, and `N(0, 1/d)` embeddings with a zero PAD row.
    pub fn init(
        store: &mut ParamStore,
        prefix: &str,
        vocab_size: usize,
        config: EncoderConfig,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        config.validate()?;
        if vocab_size < 2 {
            return Err(Error::InvalidArgument(format!("vocabulary size {vocab_size} < 2")));
        }
        if store.find(&format!("{prefix}.embedding")).is_some() {
            return Err(Error::InvalidArgument(format!("parameters `{prefix}.*` already exist")));
        }
        let d = config.dim;
        let normal = Normal::new(0.0, 1.0 / (d as f64).sqrt()).expect("positive std");
        for (name, shape) in parameter_layout(prefix, vocab_size, d) {
            let t = if name.ends_with(".embedding") {
                let mut data: Vec<f64> = (0..shape[0] * shape[1]).map(|_| normal.sample(rng)).collect();
                data[..d].iter_mut().for_each(|x| *x = 0.0);
                Tensor::new(&shape, data)?
            } else if name.ends_with(".bias") {
                Tensor::zeros(&shape)
            } else {
                glorot(rng, shape[0], shape[1])
            };
            store.add(name, t);
        }
        Self::from_store(store, prefix, config)
    }

    /// Looks up existing parameters by name and checks every shape against
    /// `config`.
    pub fn from_store(store: &ParamStore, prefix: &str, config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        let emb_name = format!("{prefix}.embedding");
        let emb = store
            .find(&emb_name)
            .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{emb_name}`")))?;
        let vocab_size = store.get(emb).rows();
        let mut ids = Vec::new();
        for (name, shape) in parameter_layout(prefix, vocab_size, config.dim) {
            let id = store
                .find(&name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{name}`")))?;
            let actual = store.get(id).shape();
            if actual != shape.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "parameter `{name}` has shape {actual:?}, expected {shape:?} for dim {}",
                    config.dim
                )));
            }
            ids.push(id);
        }
        let lin = |i: usize| LinearIds {
            weight: ids[i],
            bias: ids[i + 1],
        };
        Ok(EncoderParams {
            config,
            prefix: prefix.to_string(),
            vocab_size,
            embedding: ids[0],
            gru_update: lin(1),
            gru_reset: lin(3),
            gru_candidate: lin(5),
            fuse: lin(7),
            readout: lin(9),
            attn_query: ids[11],
            attn_key: ids[12],
            attn_value: ids[13],
            attn_output: ids[14],
        })
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut v = vec![self.embedding];
        for l in [self.gru_update, self.gru_reset, self.gru_candidate, self.fuse, self.readout] {
            v.push(l.weight);
            v.push(l.bias);
        }
        v.extend([self.attn_query, self.attn_key, self.attn_value, self.attn_output]);
        v
    }

    pub fn gru(&self, tape: &mut Tape, store: &ParamStore) -> Result<GruVars> {
        Ok(GruVars {
            update: self.gru_update.load(tape, store)?,
            reset: self.gru_reset.load(tape, store)?,
            candidate: self.gru_candidate.load(tape, store)?,
        })
    }

    pub fn fuse_gate(&self, tape: &mut Tape, store: &ParamStore) -> Result<Linear> {
        self.fuse.load(tape, store)
    }

    pub fn readout_layer(&self, tape: &mut Tape, store: &ParamStore) -> Result<Linear> {
        self.readout.load(tape, store)
    }

    pub fn attention(&self, tape: &mut Tape, store: &ParamStore) -> Result<AttentionVars> {
        Ok(AttentionVars {
            query: tape.param(store, self.attn_query)?,
            key: tape.param(store, self.attn_key)?,
            value: tape.param(store, self.attn_value)?,
            output: tape.param(store, self.attn_output)?,
        })
    }
}

/// Graph, sequence and joint encodings of a batch, one row per item.
#[derive(Debug, Clone, Copy)]
pub struct Encoded {
    pub graph: Var,
    pub sequence: Var,
    pub joint: Var,
}

/// Embedding lookup for every node of the batch, followed by dropout.
pub fn init_node_states(tape: &mut Tape, store: &ParamStore, params: &EncoderParams, items: &[&EncoderInput]) -> Result<Var> {
    let batch = Batch::new(items, false)?;
    let h0 = tape.embed(store, params.embedding, &batch.node_tokens)?;
    tape.dropout(h0, params.config.dropout)
}

/// Node states after `config.hops` BiGGNN hops starting from `h0`.
pub fn biggnn_node_states(
    tape: &mut Tape,
    store: &ParamStore,
    params: &EncoderParams,
    items: &[&EncoderInput],
    h0: Var,
) -> Result<Var> {
    let batch = Batch::new(items, false)?;
    check_rows(tape, h0, batch.num_nodes())?;
    let fuse = params.fuse_gate(tape, store)?;
    let gru = params.gru(tape, store)?;
    let mut h = h0;
    for _ in 0..params.config.hops {
        h = biggnn_hop(tape, h, &batch.edges, &fuse, &gru)?;
    }
    Ok(h)
}

fn check_rows(tape: &Tape, h0: Var, n: usize) -> Result<()> {
    let rows = tape.value(h0).rows();
    if rows != n {
        return Err(Error::shape(
            "encode",
            format!("initial states have {rows} rows for {n} nodes"),
        ));
    }
    Ok(())
}

/// Encodes a batch from given initial node states `h0`.
pub fn encode_from_initial(
    tape: &mut Tape,
    store: &ParamStore,
    params: &EncoderParams,
    items: &[&EncoderInput],
    h0: Var,
) -> Result<Encoded> {
    let cfg = params.config;
    let batch = Batch::new(items, cfg.use_attention)?;
    check_rows(tape, h0, batch.num_nodes())?;
    let zeros = || Tensor::zeros(&[batch.len(), cfg.dim]);

    let graph = if cfg.use_biggnn {
        let h = biggnn_node_states(tape, store, params, items, h0)?;
        let fc = params.readout_layer(tape, store)?;
        graph_readout(tape, h, &batch.node_offsets, &fc)?
    } else {
        tape.constant(zeros())?
    };
    let sequence = if cfg.use_attention {
        let x = tape.gather_rows(h0, &batch.sequence)?;
        let attn = params.attention(tape, store)?;
        let (ctx, _) = multi_head_attention(tape, x, &batch.seq_offsets, cfg.heads, &attn)?;
        sequence_readout(tape, ctx, &batch.seq_offsets)?
    } else {
        tape.constant(zeros())?
    };
    let joint = tape.concat(&[graph, sequence], 1)?;
    Ok(Encoded { graph, sequence, joint })
}

/// Encodes a batch; one row of length `2 * dim` per item.
pub fn encode_batch(tape: &mut Tape, store: &ParamStore, params: &EncoderParams, items: &[&EncoderInput]) -> Result<Var> {
    let h0 = init_node_states(tape, store, params, items)?;
    Ok(encode_from_initial(tape, store, params, items, h0)?.joint)
}

/// Eval-mode encoding of a single item.
pub fn encode_joint(store: &ParamStore, params: &EncoderParams, item: &EncoderInput) -> Result<Vec<f64>> {
    let mut tape = Tape::new(Mode::Eval);
    let r = encode_batch(&mut tape, store, params, &[item])?;
    Ok(tape.value(r).data().to_vec())
}

/// Eval-mode encodings of many items, computed in chunks of `chunk`.
pub fn encode_all(store: &ParamStore, params: &EncoderParams, items: &[&EncoderInput], chunk: usize) -> Result<Vec<Vec<f64>>> {
    let width = params.config.output_dim();
    let mut out = Vec::with_capacity(items.len());
    for part in items.chunks(chunk.max(1)) {
        let mut tape = Tape::new(Mode::Eval);
        let r = encode_batch(&mut tape, store, params, part)?;
        out.extend(tape.value(r).data().chunks(width).map(<[f64]>::to_vec));
    }
    Ok(out)
}
