//! Differentiable building blocks shared by the encoders and the baseline
//! GNN cells. Every function works on row-stacked node or token states.

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Direction of neighbour aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Sum over incoming neighbours `u -> v`.
    Backward,
    /// Sum over outgoing neighbours `v -> u`.
    Forward,
}

/// Affine map `x W + b` with `W: [in, out]`, `b: [1, out]`.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub weight: Var,
    pub bias: Var,
}

impl Linear {
    pub fn apply(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let xw = tape.matmul(x, self.weight)?;
        tape.add(xw, self.bias)
    }
}

/// Gate, reset and candidate maps of a GRU over `[m; h]` (each `[2d, d]`).
#[derive(Debug, Clone, Copy)]
pub struct GruVars {
    pub update: Linear,
    pub reset: Linear,
    pub candidate: Linear,
}

/// Query/key/value projections `[d, h*dk]` and output projection `[h*dk, d]`.
#[derive(Debug, Clone, Copy)]
pub struct AttentionVars {
    pub query: Var,
    pub key: Var,
    pub value: Var,
    pub output: Var,
}

fn same_shape(tape: &Tape, a: Var, b: Var, op: &'static str) -> Result<()> {
    let (sa, sb) = (tape.value(a).shape(), tape.value(b).shape());
    if sa != sb {
        return Err(Error::shape(op, format!("{sa:?} vs {sb:?}")));
    }
    Ok(())
}

/// Untyped sum of neighbour states; nodes without neighbours get zeros.
pub fn aggregate_directional(tape: &mut Tape, states: Var, edges: &[(usize, usize)], direction: Direction) -> Result<Var> {
    let (n, d) = (tape.value(states).rows(), tape.value(states).cols());
    if edges.is_empty() {
        return tape.constant(Tensor::zeros(&[n, d]));
    }
    let (from, to): (Vec<usize>, Vec<usize>) = match direction {
        Direction::Backward => edges.iter().copied().unzip(),
        Direction::Forward => edges.iter().map(|&(s, t)| (t, s)).unzip(),
    };
    let gathered = tape.gather_rows(states, &from)?;
    tape.scatter_add_rows(gathered, &to, n)
}

/// Gated sum `z * a + (1 - z) * b` with `z = sigmoid([a; b; a*b; a-b] W + b_z)`.
pub fn fuse_gated(tape: &mut Tape, a: Var, b: Var, gate: &Linear) -> Result<Var> {
    same_shape(tape, a, b, "fuse")?;
    let prod = tape.mul(a, b)?;
    let diff = tape.sub(a, b)?;
    let features = tape.concat(&[a, b, prod, diff], 1)?;
    let pre = gate.apply(tape, features)?;
    let z = tape.sigmoid(pre)?;
    let gated = tape.mul(z, diff)?;
    tape.add(b, gated)
}

/// Standard GRU update of `h` with message `m`:
/// `z = s([m;h]Wz+bz)`, `r = s([m;h]Wr+br)`, `c = tanh([m; r*h]Wc+bc)`,
/// `h' = (1-z)*h + z*c`.
pub fn gru_cell(tape: &mut Tape, h: Var, m: Var, gru: &GruVars) -> Result<Var> {
    same_shape(tape, h, m, "gru")?;
    let mh = tape.concat(&[m, h], 1)?;
    let zp = gru.update.apply(tape, mh)?;
    let z = tape.sigmoid(zp)?;
    let rp = gru.reset.apply(tape, mh)?;
    let r = tape.sigmoid(rp)?;
    let rh = tape.mul(r, h)?;
    let mrh = tape.concat(&[m, rh], 1)?;
    let cp = gru.candidate.apply(tape, mrh)?;
    let c = tape.tanh(cp)?;
    let delta = tape.sub(c, h)?;
    let step = tape.mul(z, delta)?;
    tape.add(h, step)
}

/// One bidirectional hop: aggregate both ways, fuse, GRU update.
pub fn biggnn_hop(tape: &mut Tape, h: Var, edges: &[(usize, usize)], fuse: &Linear, gru: &GruVars) -> Result<Var> {
    let back = aggregate_directional(tape, h, edges, Direction::Backward)?;
    let fwd = aggregate_directional(tape, h, edges, Direction::Forward)?;
    let m = fuse_gated(tape, back, fwd, fuse)?;
    gru_cell(tape, h, m, gru)
}

/// `maxpool(relu(h W + b))` over each node segment.
pub fn graph_readout(tape: &mut Tape, h: Var, offsets: &[usize], fc: &Linear) -> Result<Var> {
    let pre = fc.apply(tape, h)?;
    let act = tape.relu(pre)?;
    tape.segment_max(act, offsets)
}

/// Columnwise mean over each sequence segment.
pub fn sequence_readout(tape: &mut Tape, x: Var, offsets: &[usize]) -> Result<Var> {
    tape.segment_mean(x, offsets)
}

/// Multi-head scaled dot-product self-attention applied independently to
/// each row segment of `x`. Returns the contextualized rows and, per
/// segment and head, the attention weight matrix.
pub fn multi_head_attention(
    tape: &mut Tape,
    x: Var,
    offsets: &[usize],
    heads: usize,
    attn: &AttentionVars,
) -> Result<(Var, Vec<Vec<Var>>)> {
    let width = tape.value(attn.query).cols();
    if heads == 0 || !width.is_multiple_of(heads) {
        return Err(Error::InvalidArgument(format!("{heads} heads do not divide width {width}")));
    }
    if offsets.len() < 2 || offsets.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::EmptySequence);
    }
    let dk = width / heads;
    let scale = 1.0 / (dk as f64).sqrt();
    let q = tape.matmul(x, attn.query)?;
    let k = tape.matmul(x, attn.key)?;
    let v = tape.matmul(x, attn.value)?;
    let mut segments = Vec::with_capacity(offsets.len() - 1);
    let mut weights = Vec::with_capacity(offsets.len() - 1);
    for seg in offsets.windows(2) {
        let rows = seg[0]..seg[1];
        let mut head_out = Vec::with_capacity(heads);
        let mut head_w = Vec::with_capacity(heads);
        for i in 0..heads {
            let cols = i * dk..(i + 1) * dk;
            let qi = tape.slice(q, rows.clone(), cols.clone())?;
            let ki = tape.slice(k, rows.clone(), cols.clone())?;
            let vi = tape.slice(v, rows.clone(), cols)?;
            let kt = tape.transpose(ki)?;
            let scores = tape.matmul(qi, kt)?;
            let scaled = tape.scale(scores, scale)?;
            let w = tape.softmax_rows(scaled)?;
            head_out.push(tape.matmul(w, vi)?);
            head_w.push(w);
        }
        segments.push(if heads == 1 { head_out[0] } else { tape.concat(&head_out, 1)? });
        weights.push(head_w);
    }
    let joined = if segments.len() == 1 { segments[0] } else { tape.concat(&segments, 0)? };
    Ok((tape.matmul(joined, attn.output)?, weights))
}

/// GGNN hop with incoming messages: `h' = GRU(h, sum_{u -> v} h_u W)`.
pub fn baseline_ggnn_hop(tape: &mut Tape, h: Var, edges: &[(usize, usize)], message: Var, gru: &GruVars) -> Result<Var> {
    let hw = tape.matmul(h, message)?;
    let m = aggregate_directional(tape, hw, edges, Direction::Backward)?;
    gru_cell(tape, h, m, gru)
}

/// Symmetric-normalized GCN layer with self loops over incoming
/// neighbours: `h'_v = relu(sum_{u in N(v) + v} h_u W / sqrt((|N(v)|+1)(|N(u)|+1)))`.
pub fn baseline_gcn_layer(tape: &mut Tape, h: Var, edges: &[(usize, usize)], weight: Var) -> Result<Var> {
    let n = tape.value(h).rows();
    let mut neighbours = vec![std::collections::BTreeSet::new(); n];
    for &(s, d) in edges {
        if s >= n || d >= n {
            return Err(Error::UnknownNode(s.max(d)));
        }
        if s != d {
            neighbours[d].insert(s);
        }
    }
    let deg: Vec<f64> = neighbours.iter().map(|s| s.len() as f64 + 1.0).collect();
    let mut norm = vec![0.0; n * n];
    for v in 0..n {
        norm[v * n + v] = 1.0 / deg[v];
        for &u in &neighbours[v] {
            norm[v * n + u] = 1.0 / (deg[v] * deg[u]).sqrt();
        }
    }
    let a = tape.constant(Tensor::matrix(n, n, norm)?)?;
    let hw = tape.matmul(h, weight)?;
    let mixed = tape.matmul(a, hw)?;
    tape.relu(mixed)
}
