//! Reverse-mode differentiation over a linear tape of dense matrix primitives.
//!
//! Every primitive evaluates eagerly and appends a record holding its output
//! value and enough state to run its backward rule. Records are only ever
//! appended, so inputs always precede their consumers and a single reverse
//! sweep visits each record once.

use std::collections::BTreeMap;
use std::ops::Range;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::kernels::gemm;
use super::tensor::{ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Train mode enables dropout; eval mode makes dropout the identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(ParamId),
    Embed {
        param: ParamId,
        indices: Vec<usize>,
        table_len: usize,
    },
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Exp(Var),
    Log(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    Concat { inputs: Vec<Var>, axis: usize },
    Slice { input: Var, rows: Range<usize>, cols: Range<usize> },
    GatherRows { input: Var, indices: Vec<usize> },
    ScatterAddRows { input: Var, indices: Vec<usize> },
    Sum { input: Var, axis: Option<usize> },
    Max { input: Var, argmax: Vec<usize> },
    Mean { input: Var, axis: Option<usize> },
    Transpose(Var),
    Dropout { input: Var, mask: Vec<f64> },
    SegmentMax { input: Var, argmax: Vec<usize> },
    SegmentMean { input: Var, offsets: Vec<usize> },
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        use Op::*;
        match self {
            Leaf | Param(_) | Embed { .. } => vec![],
            MatMul(a, b) | Add(a, b) | Sub(a, b) | Mul(a, b) => vec![*a, *b],
            Scale(a, _) | Sigmoid(a) | Tanh(a) | Relu(a) | Exp(a) | Log(a) | SoftmaxRows(a)
            | LogSoftmaxRows(a) | Transpose(a) => vec![*a],
            Concat { inputs, .. } => inputs.clone(),
            Slice { input, .. }
            | GatherRows { input, .. }
            | ScatterAddRows { input, .. }
            | Sum { input, .. }
            | Max { input, .. }
            | Mean { input, .. }
            | Dropout { input, .. }
            | SegmentMax { input, .. }
            | SegmentMean { input, .. } => vec![*input],
        }
    }
}

#[derive(Debug)]
struct Record {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// A primitive together with its attributes, for generic dispatch through
/// [`Tape::apply`].
#[derive(Debug, Clone, PartialEq)]
pub enum Primitive {
    MatMul,
    Add,
    Sub,
    Mul,
    Scale(f64),
    Sigmoid,
    Tanh,
    Relu,
    Exp,
    Log,
    SoftmaxRows,
    LogSoftmaxRows,
    Concat { axis: usize },
    Slice { rows: Range<usize>, cols: Range<usize> },
    GatherRows { indices: Vec<usize> },
    ScatterAddRows { indices: Vec<usize>, rows: usize },
    Sum { axis: Option<usize> },
    Max { axis: usize },
    Mean { axis: Option<usize> },
    Transpose,
    Dropout { rate: f64 },
    SegmentMax { offsets: Vec<usize> },
    SegmentMean { offsets: Vec<usize> },
}

impl Primitive {
    pub fn name(&self) -> &'static str {
        use Primitive::*;
        match self {
            MatMul => "matmul",
            Add => "add",
            Sub => "subtract",
            Mul => "multiply",
            Scale(_) => "scale",
            Sigmoid => "sigmoid",
            Tanh => "tanh",
            Relu => "relu",
            Exp => "exp",
            Log => "log",
            SoftmaxRows => "softmax",
            LogSoftmaxRows => "log_softmax",
            Concat { .. } => "concat",
            Slice { .. } => "slice",
            GatherRows { .. } => "gather",
            ScatterAddRows { .. } => "scatter_add",
            Sum { .. } => "sum",
            Max { .. } => "max",
            Mean { .. } => "mean",
            Transpose => "transpose",
            Dropout { .. } => "dropout",
            SegmentMax { .. } => "segment_max",
            SegmentMean { .. } => "segment_mean",
        }
    }
}

/// Parses attribute-free primitive names; attributes take their defaults
/// (`sum`/`mean` reduce everything, `concat`/`max` use axis 0).
impl FromStr for Primitive {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        use Primitive::*;
        Ok(match s {
            "matmul" => MatMul,
            "add" => Add,
            "subtract" | "sub" => Sub,
            "multiply" | "mul" => Mul,
            "sigmoid" => Sigmoid,
            "tanh" => Tanh,
            "relu" => Relu,
            "exp" => Exp,
            "log" => Log,
            "softmax" => SoftmaxRows,
            "log_softmax" => LogSoftmaxRows,
            "concat" => Concat { axis: 0 },
            "sum" => Sum { axis: None },
            "max" => Max { axis: 0 },
            "mean" => Mean { axis: None },
            "transpose" => Transpose,
            other => return Err(Error::UnknownPrimitive(other.to_string())),
        })
    }
}

/// Linear record of executed primitives.
#[derive(Debug)]
pub struct Tape {
    records: Vec<Record>,
    mode: Mode,
    rng: ChaCha8Rng,
    consumed: bool,
}

impl Tape {
    pub fn new(mode: Mode) -> Self {
        Self::with_seed(mode, 0)
    }

    /// Tape whose dropout masks come from a seeded stream.
    pub fn with_seed(mode: Mode, seed: u64) -> Self {
        Tape {
            records: Vec::new(),
            mode,
            rng: ChaCha8Rng::seed_from_u64(seed),
            consumed: false,
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.records[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.records[v.0].needs_grad
    }

    fn push(&mut self, value: Tensor, op: Op, name: &str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(name.to_string()));
        }
        let needs_grad = match &op {
            Op::Leaf => value.requires_grad(),
            Op::Param(_) | Op::Embed { .. } => true,
            other => other.inputs().iter().any(|v| self.records[v.0].needs_grad),
        };
        let mut value = value;
        value.set_requires_grad(false);
        value.clear_grad();
        self.records.push(Record {
            value,
            op,
            needs_grad,
        });
        Ok(Var(self.records.len() - 1))
    }

    /// Records a leaf; it receives a gradient iff `tensor.requires_grad()`.
    pub fn leaf(&mut self, tensor: Tensor) -> Result<Var> {
        self.push(tensor, Op::Leaf, "leaf")
    }

    /// Records a constant leaf that never receives a gradient.
    pub fn constant(&mut self, mut tensor: Tensor) -> Result<Var> {
        tensor.set_requires_grad(false);
        self.push(tensor, Op::Leaf, "constant")
    }

    /// Records a parameter leaf; its gradient is routed back to the store.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Result<Var> {
        let value = store.get(id).clone();
        self.push(value, Op::Param(id), "param")
    }

    /// Gathers rows of a parameter matrix without copying the whole table.
    pub fn embed(&mut self, store: &ParamStore, id: ParamId, indices: &[usize]) -> Result<Var> {
        let table = store.get(id);
        let (rows, cols) = (table.rows(), table.cols());
        if indices.is_empty() {
            return Err(Error::shape("embed", "no indices"));
        }
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &i in indices {
            if i >= rows {
                return Err(Error::shape("embed", format!("row {i} out of {rows}")));
            }
            data.extend_from_slice(table.row(i));
        }
        let value = Tensor::matrix(indices.len(), cols, data)?;
        self.push(
            value,
            Op::Embed {
                param: id,
                indices: indices.to_vec(),
                table_len: table.numel(),
            },
            "embed",
        )
    }

    /// Generic dispatch over [`Primitive`].
    pub fn apply(&mut self, prim: &Primitive, inputs: &[Var]) -> Result<Var> {
        use Primitive::*;
        let arity = match prim {
            MatMul | Add | Sub | Mul => 2,
            Concat { .. } => inputs.len().max(1),
            _ => 1,
        };
        if inputs.len() != arity {
            return Err(Error::shape(
                "apply",
                format!("{} takes {arity} inputs, got {}", prim.name(), inputs.len()),
            ));
        }
        let a = inputs[0];
        match prim {
            MatMul => self.matmul(a, inputs[1]),
            Add => self.add(a, inputs[1]),
            Sub => self.sub(a, inputs[1]),
            Mul => self.mul(a, inputs[1]),
            Scale(c) => self.scale(a, *c),
            Sigmoid => self.sigmoid(a),
            Tanh => self.tanh(a),
            Relu => self.relu(a),
            Exp => self.exp(a),
            Log => self.log(a),
            SoftmaxRows => self.softmax_rows(a),
            LogSoftmaxRows => self.log_softmax_rows(a),
            Concat { axis } => self.concat(inputs, *axis),
            Slice { rows, cols } => self.slice(a, rows.clone(), cols.clone()),
            GatherRows { indices } => self.gather_rows(a, indices),
            ScatterAddRows { indices, rows } => self.scatter_add_rows(a, indices, *rows),
            Sum { axis } => self.sum(a, *axis),
            Max { axis } => self.max(a, *axis),
            Mean { axis } => self.mean(a, *axis),
            Transpose => self.transpose(a),
            Dropout { rate } => self.dropout(a, *rate),
            SegmentMax { offsets } => self.segment_max(a, offsets),
            SegmentMean { offsets } => self.segment_mean(a, offsets),
        }
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        let t = &self.records[v.0].value;
        (t.rows(), t.cols())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims(a);
        let (k2, n) = self.dims(b);
        if k != k2 {
            return Err(Error::shape("matmul", format!("[{m},{k}] x [{k2},{n}]")));
        }
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            self.value(a).data(),
            false,
            self.value(b).data(),
            false,
            &mut out,
            false,
        );
        self.push(Tensor::matrix(m, n, out)?, Op::MatMul(a, b), "matmul")
    }

    /// Whether `b` broadcasts as a row over `a`.
    fn broadcast_kind(&self, a: Var, b: Var, op: &'static str) -> Result<bool> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() == tb.shape() {
            Ok(false)
        } else if tb.numel() == ta.cols() && tb.rows() == 1 {
            Ok(true)
        } else {
            Err(Error::shape(
                op,
                format!("{:?} vs {:?}", ta.shape(), tb.shape()),
            ))
        }
    }

    fn binary(&mut self, a: Var, b: Var, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Vec<f64>> {
        let bcast = self.broadcast_kind(a, b, op)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let cols = ta.cols();
        let out = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let y = if bcast { tb.data()[i % cols] } else { tb.data()[i] };
                f(x, y)
            })
            .collect();
        Ok(out)
    }

    /// `a + b`; `b` may be a row vector broadcast over the rows of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary(a, b, "add", |x, y| x + y)?;
        let t = Tensor::new(self.value(a).shape(), out)?;
        self.push(t, Op::Add(a, b), "add")
    }

    /// `a - b`; `b` may be a row vector broadcast over the rows of `a`.
    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary(a, b, "subtract", |x, y| x - y)?;
        let t = Tensor::new(self.value(a).shape(), out)?;
        self.push(t, Op::Sub(a, b), "subtract")
    }

    /// Elementwise product of equally shaped operands.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::shape(
                "multiply",
                format!("{:?} vs {:?}", self.value(a).shape(), self.value(b).shape()),
            ));
        }
        let out = self.binary(a, b, "multiply", |x, y| x * y)?;
        let t = Tensor::new(self.value(a).shape(), out)?;
        self.push(t, Op::Mul(a, b), "multiply")
    }

    fn unary(&mut self, a: Var, op: Op, name: &str, f: impl Fn(f64) -> f64) -> Result<Var> {
        let ta = self.value(a);
        let out = ta.data().iter().map(|&x| f(x)).collect();
        let t = Tensor::new(ta.shape(), out)?;
        self.push(t, op, name)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary(a, Op::Scale(a, c), "scale", |x| c * x)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::Sigmoid(a), "sigmoid", sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::Tanh(a), "tanh", f64::tanh)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::Relu(a), "relu", |x| x.max(0.0))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::Exp(a), "exp", f64::exp)
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.unary(a, Op::Log(a), "log", f64::ln)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let cols = ta.cols();
        let mut out = ta.data().to_vec();
        for row in out.chunks_mut(cols) {
            softmax_in_place(row);
        }
        let t = Tensor::new(ta.shape(), out)?;
        self.push(t, Op::SoftmaxRows(a), "softmax")
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let cols = ta.cols();
        let mut out = ta.data().to_vec();
        for row in out.chunks_mut(cols) {
            let lse = log_sum_exp(row);
            row.iter_mut().for_each(|x| *x -= lse);
        }
        let t = Tensor::new(ta.shape(), out)?;
        self.push(t, Op::LogSoftmaxRows(a), "log_softmax")
    }

    /// Concatenation of matrices along `axis` (0 stacks rows, 1 stacks columns).
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        if inputs.is_empty() || axis > 1 {
            return Err(Error::shape("concat", "needs inputs and axis 0 or 1"));
        }
        let dims: Vec<_> = inputs.iter().map(|&v| self.dims(v)).collect();
        let t = if axis == 0 {
            let cols = dims[0].1;
            if dims.iter().any(|d| d.1 != cols) {
                return Err(Error::shape("concat", format!("column counts {dims:?}")));
            }
            let rows = dims.iter().map(|d| d.0).sum();
            let mut data = Vec::with_capacity(rows * cols);
            for &v in inputs {
                data.extend_from_slice(self.value(v).data());
            }
            Tensor::matrix(rows, cols, data)?
        } else {
            let rows = dims[0].0;
            if dims.iter().any(|d| d.0 != rows) {
                return Err(Error::shape("concat", format!("row counts {dims:?}")));
            }
            let cols: usize = dims.iter().map(|d| d.1).sum();
            let mut data = Vec::with_capacity(rows * cols);
            for r in 0..rows {
                for &v in inputs {
                    data.extend_from_slice(self.value(v).row(r));
                }
            }
            Tensor::matrix(rows, cols, data)?
        };
        self.push(
            t,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            "concat",
        )
    }

    /// Rectangular sub-block `rows × cols`.
    pub fn slice(&mut self, a: Var, rows: Range<usize>, cols: Range<usize>) -> Result<Var> {
        let (r, c) = self.dims(a);
        if rows.is_empty() || cols.is_empty() || rows.end > r || cols.end > c {
            return Err(Error::shape(
                "slice",
                format!("{rows:?} x {cols:?} out of [{r},{c}]"),
            ));
        }
        let ta = self.value(a);
        let mut data = Vec::with_capacity(rows.len() * cols.len());
        for i in rows.clone() {
            data.extend_from_slice(&ta.row(i)[cols.clone()]);
        }
        let t = Tensor::matrix(rows.len(), cols.len(), data)?;
        self.push(t, Op::Slice { input: a, rows, cols }, "slice")
    }

    pub fn gather_rows(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let (r, c) = self.dims(a);
        if indices.is_empty() || indices.iter().any(|&i| i >= r) {
            return Err(Error::shape("gather", format!("indices invalid for {r} rows")));
        }
        let ta = self.value(a);
        let mut data = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            data.extend_from_slice(ta.row(i));
        }
        let t = Tensor::matrix(indices.len(), c, data)?;
        self.push(
            t,
            Op::GatherRows {
                input: a,
                indices: indices.to_vec(),
            },
            "gather",
        )
    }

    /// `out[indices[i]] += a[i]` into a zero matrix with `rows` rows.
    pub fn scatter_add_rows(&mut self, a: Var, indices: &[usize], rows: usize) -> Result<Var> {
        let (r, c) = self.dims(a);
        if indices.len() != r || indices.iter().any(|&i| i >= rows) {
            return Err(Error::shape(
                "scatter_add",
                format!("{} indices for {r} rows into {rows}", indices.len()),
            ));
        }
        let ta = self.value(a);
        let mut data = vec![0.0; rows * c];
        for (src, &dst) in indices.iter().enumerate() {
            let out = &mut data[dst * c..(dst + 1) * c];
            out.iter_mut().zip(ta.row(src)).for_each(|(o, x)| *o += x);
        }
        let t = Tensor::matrix(rows, c, data)?;
        self.push(
            t,
            Op::ScatterAddRows {
                input: a,
                indices: indices.to_vec(),
            },
            "scatter_add",
        )
    }

    /// Sum over everything (`None`, giving shape `[1]`), over rows (`Some(0)`,
    /// giving `[1, cols]`) or over columns (`Some(1)`, giving `[rows, 1]`).
    pub fn sum(&mut self, a: Var, axis: Option<usize>) -> Result<Var> {
        let t = reduce(self.value(a), axis, "sum", |xs| xs.iter().sum())?;
        self.push(t, Op::Sum { input: a, axis }, "sum")
    }

    pub fn mean(&mut self, a: Var, axis: Option<usize>) -> Result<Var> {
        let t = reduce(self.value(a), axis, "mean", |xs| {
            xs.iter().sum::<f64>() / xs.len() as f64
        })?;
        self.push(t, Op::Mean { input: a, axis }, "mean")
    }

    /// Maximum along `axis`; ties route the gradient to the first maximum.
    pub fn max(&mut self, a: Var, axis: usize) -> Result<Var> {
        let ta = self.value(a);
        let (r, c) = (ta.rows(), ta.cols());
        let (shape, argmax): (Vec<usize>, Vec<usize>) = match axis {
            0 => (
                vec![1, c],
                (0..c)
                    .map(|j| first_argmax((0..r).map(|i| (i * c + j, ta.data()[i * c + j]))))
                    .collect(),
            ),
            1 => (
                vec![r, 1],
                (0..r)
                    .map(|i| first_argmax((0..c).map(|j| (i * c + j, ta.data()[i * c + j]))))
                    .collect(),
            ),
            _ => return Err(Error::shape("max", format!("axis {axis}"))),
        };
        let data = argmax.iter().map(|&i| ta.data()[i]).collect();
        let t = Tensor::new(&shape, data)?;
        self.push(t, Op::Max { input: a, argmax }, "max")
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let (r, c) = (ta.rows(), ta.cols());
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = ta.data()[i * c + j];
            }
        }
        let t = Tensor::matrix(c, r, data)?;
        self.push(t, Op::Transpose(a), "transpose")
    }

    /// Inverted dropout in train mode; identity (no record) in eval mode.
    pub fn dropout(&mut self, a: Var, rate: f64) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidArgument(format!("dropout rate {rate}")));
        }
        if self.mode == Mode::Eval || rate == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - rate);
        let n = self.value(a).numel();
        let mask: Vec<f64> = (0..n)
            .map(|_| if self.rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let ta = self.value(a);
        let data = ta.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let t = Tensor::new(ta.shape(), data)?;
        self.push(t, Op::Dropout { input: a, mask }, "dropout")
    }

    /// Columnwise maximum within each row segment `offsets[s]..offsets[s+1]`.
    pub fn segment_max(&mut self, a: Var, offsets: &[usize]) -> Result<Var> {
        let ta = self.value(a);
        let c = ta.cols();
        check_segments(offsets, ta.rows(), "segment_max")?;
        let mut argmax = Vec::with_capacity((offsets.len() - 1) * c);
        for seg in offsets.windows(2) {
            for j in 0..c {
                argmax.push(first_argmax(
                    (seg[0]..seg[1]).map(|i| (i * c + j, ta.data()[i * c + j])),
                ));
            }
        }
        let data = argmax.iter().map(|&i| ta.data()[i]).collect();
        let t = Tensor::matrix(offsets.len() - 1, c, data)?;
        self.push(t, Op::SegmentMax { input: a, argmax }, "segment_max")
    }

    /// Columnwise mean within each row segment.
    pub fn segment_mean(&mut self, a: Var, offsets: &[usize]) -> Result<Var> {
        let ta = self.value(a);
        let c = ta.cols();
        check_segments(offsets, ta.rows(), "segment_mean")?;
        let mut data = Vec::with_capacity((offsets.len() - 1) * c);
        for seg in offsets.windows(2) {
            let n = (seg[1] - seg[0]) as f64;
            for j in 0..c {
                data.push((seg[0]..seg[1]).map(|i| ta.data()[i * c + j]).sum::<f64>() / n);
            }
        }
        let t = Tensor::matrix(offsets.len() - 1, c, data)?;
        self.push(
            t,
            Op::SegmentMean {
                input: a,
                offsets: offsets.to_vec(),
            },
            "segment_mean",
        )
    }

    /// Runs the reverse sweep from a scalar `root` and consumes the tape.
    pub fn backward(&mut self, root: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        let root_value = self.value(root);
        if root_value.numel() != 1 {
            return Err(Error::NonScalarRoot(root_value.shape().to_vec()));
        }
        self.consumed = true;

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        let mut params: BTreeMap<ParamId, Vec<f64>> = BTreeMap::new();
        grads[root.0] = Some(vec![1.0]);

        for i in (0..=root.0).rev() {
            let rec = &self.records[i];
            if !rec.needs_grad {
                continue;
            }
            match &rec.op {
                Op::Leaf => continue,
                Op::Param(id) => {
                    if let Some(g) = grads[i].take() {
                        add_into(params.entry(*id).or_insert_with(|| vec![0.0; g.len()]), &g);
                    }
                    continue;
                }
                _ => {}
            }
            let Some(g) = grads[i].take() else { continue };
            self.backward_record(i, &g, &mut grads, &mut params);
        }
        Ok(Gradients { grads, params })
    }

    fn backward_record(
        &self,
        i: usize,
        g: &[f64],
        grads: &mut [Option<Vec<f64>>],
        params: &mut BTreeMap<ParamId, Vec<f64>>,
    ) {
        let rec = &self.records[i];
        let out = &rec.value;
        let needs = |v: &Var| self.records[v.0].needs_grad;
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !self.records[v.0].needs_grad {
                return;
            }
            let n = self.records[v.0].value.numel();
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; n]);
            f(slot);
        };
        match &rec.op {
            Op::Leaf | Op::Param(_) => unreachable!(),
            Op::Embed {
                param,
                indices,
                table_len,
            } => {
                let c = out.cols();
                let table = params.entry(*param).or_insert_with(|| vec![0.0; *table_len]);
                for (r, &idx) in indices.iter().enumerate() {
                    add_into(&mut table[idx * c..(idx + 1) * c], &g[r * c..(r + 1) * c]);
                }
            }
            Op::MatMul(a, b) => {
                let (m, k) = self.dims(*a);
                let n = self.dims(*b).1;
                if needs(a) {
                    let bv = self.value(*b).data();
                    acc(*a, &mut |da| gemm(m, n, k, g, false, bv, true, da, true));
                }
                if needs(b) {
                    let av = self.value(*a).data();
                    acc(*b, &mut |db| gemm(k, m, n, av, true, g, false, db, true));
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(rec.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                acc(*a, &mut |da| add_into(da, g));
                let cols = out.cols();
                let bcast = self.value(*b).numel() != out.numel();
                acc(*b, &mut |db| {
                    for (idx, gv) in g.iter().enumerate() {
                        let t = if bcast { idx % cols } else { idx };
                        db[t] += sign * gv;
                    }
                });
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                acc(*a, &mut |da| {
                    da.iter_mut().zip(g.iter().zip(bv)).for_each(|(d, (gv, y))| *d += gv * y)
                });
                acc(*b, &mut |db| {
                    db.iter_mut().zip(g.iter().zip(av)).for_each(|(d, (gv, x))| *d += gv * x)
                });
            }
            Op::Scale(a, c) => acc(*a, &mut |da| {
                da.iter_mut().zip(g).for_each(|(d, gv)| *d += c * gv)
            }),
            Op::Sigmoid(a) => acc(*a, &mut |da| {
                for ((d, gv), y) in da.iter_mut().zip(g).zip(out.data()) {
                    *d += gv * y * (1.0 - y);
                }
            }),
            Op::Tanh(a) => acc(*a, &mut |da| {
                for ((d, gv), y) in da.iter_mut().zip(g).zip(out.data()) {
                    *d += gv * (1.0 - y * y);
                }
            }),
            Op::Relu(a) => {
                let x = self.value(*a).data();
                acc(*a, &mut |da| {
                    for ((d, gv), xv) in da.iter_mut().zip(g).zip(x) {
                        if *xv > 0.0 {
                            *d += gv;
                        }
                    }
                })
            }
            Op::Exp(a) => acc(*a, &mut |da| {
                for ((d, gv), y) in da.iter_mut().zip(g).zip(out.data()) {
                    *d += gv * y;
                }
            }),
            Op::Log(a) => {
                let x = self.value(*a).data();
                acc(*a, &mut |da| {
                    for ((d, gv), xv) in da.iter_mut().zip(g).zip(x) {
                        *d += gv / xv;
                    }
                })
            }
            Op::SoftmaxRows(a) => {
                let c = out.cols();
                acc(*a, &mut |da| {
                    for ((drow, grow), yrow) in
                        da.chunks_mut(c).zip(g.chunks(c)).zip(out.data().chunks(c))
                    {
                        let dot: f64 = grow.iter().zip(yrow).map(|(x, y)| x * y).sum();
                        for ((d, gv), y) in drow.iter_mut().zip(grow).zip(yrow) {
                            *d += y * (gv - dot);
                        }
                    }
                })
            }
            Op::LogSoftmaxRows(a) => {
                let c = out.cols();
                acc(*a, &mut |da| {
                    for ((drow, grow), yrow) in
                        da.chunks_mut(c).zip(g.chunks(c)).zip(out.data().chunks(c))
                    {
                        let total: f64 = grow.iter().sum();
                        for ((d, gv), y) in drow.iter_mut().zip(grow).zip(yrow) {
                            *d += gv - y.exp() * total;
                        }
                    }
                })
            }
            Op::Concat { inputs, axis } => {
                let oc = out.cols();
                let mut offset = 0;
                for &v in inputs {
                    let (r, c) = self.dims(v);
                    if *axis == 0 {
                        let start = offset * oc;
                        acc(v, &mut |dv| add_into(dv, &g[start..start + r * c]));
                        offset += r;
                    } else {
                        acc(v, &mut |dv| {
                            for row in 0..r {
                                let src = &g[row * oc + offset..row * oc + offset + c];
                                add_into(&mut dv[row * c..(row + 1) * c], src);
                            }
                        });
                        offset += c;
                    }
                }
            }
            Op::Slice { input, rows, cols } => {
                let ic = self.dims(*input).1;
                let w = cols.len();
                acc(*input, &mut |dv| {
                    for (k, r) in rows.clone().enumerate() {
                        let dst = &mut dv[r * ic + cols.start..r * ic + cols.end];
                        add_into(dst, &g[k * w..(k + 1) * w]);
                    }
                })
            }
            Op::GatherRows { input, indices } => {
                let c = out.cols();
                acc(*input, &mut |dv| {
                    for (k, &r) in indices.iter().enumerate() {
                        add_into(&mut dv[r * c..(r + 1) * c], &g[k * c..(k + 1) * c]);
                    }
                })
            }
            Op::ScatterAddRows { input, indices } => {
                let c = out.cols();
                acc(*input, &mut |dv| {
                    for (k, &r) in indices.iter().enumerate() {
                        add_into(&mut dv[k * c..(k + 1) * c], &g[r * c..(r + 1) * c]);
                    }
                })
            }
            Op::Sum { input, axis } | Op::Mean { input, axis } => {
                let (r, c) = self.dims(*input);
                let is_mean = matches!(rec.op, Op::Mean { .. });
                let count = match axis {
                    None => r * c,
                    Some(0) => r,
                    _ => c,
                } as f64;
                let w = if is_mean { 1.0 / count } else { 1.0 };
                acc(*input, &mut |dv| {
                    for i in 0..r {
                        for j in 0..c {
                            let gv = match axis {
                                None => g[0],
                                Some(0) => g[j],
                                _ => g[i],
                            };
                            dv[i * c + j] += w * gv;
                        }
                    }
                })
            }
            Op::Max { input, argmax } | Op::SegmentMax { input, argmax } => {
                acc(*input, &mut |dv| {
                    for (gv, &src) in g.iter().zip(argmax) {
                        dv[src] += gv;
                    }
                })
            }
            Op::SegmentMean { input, offsets } => {
                let c = out.cols();
                acc(*input, &mut |dv| {
                    for (s, seg) in offsets.windows(2).enumerate() {
                        let n = (seg[1] - seg[0]) as f64;
                        for r in seg[0]..seg[1] {
                            for j in 0..c {
                                dv[r * c + j] += g[s * c + j] / n;
                            }
                        }
                    }
                })
            }
            Op::Transpose(a) => {
                let (r, c) = self.dims(*a);
                acc(*a, &mut |dv| {
                    for i in 0..r {
                        for j in 0..c {
                            dv[i * c + j] += g[j * r + i];
                        }
                    }
                })
            }
            Op::Dropout { input, mask } => acc(*input, &mut |dv| {
                for ((d, gv), m) in dv.iter_mut().zip(g).zip(mask) {
                    *d += gv * m;
                }
            }),
        }
    }
}

/// Gradients produced by one backward sweep.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    params: BTreeMap<ParamId, Vec<f64>>,
}

impl Gradients {
    /// Gradient of the root with respect to a leaf recorded with
    /// `requires_grad`.
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn param(&self, id: ParamId) -> Option<&[f64]> {
        self.params.get(&id).map(Vec::as_slice)
    }

    /// Adds every parameter gradient into the store's accumulators.
    pub fn accumulate_into(&self, store: &mut ParamStore) {
        for (id, g) in &self.params {
            store.get_mut(*id).accumulate_grad(g);
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn softmax_in_place(row: &mut [f64]) {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in row.iter_mut() {
        *x = (*x - m).exp();
        total += *x;
    }
    row.iter_mut().for_each(|x| *x /= total);
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

fn first_argmax(items: impl Iterator<Item = (usize, f64)>) -> usize {
    let mut best = (usize::MAX, f64::NEG_INFINITY);
    for (i, v) in items {
        if best.0 == usize::MAX || v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

fn check_segments(offsets: &[usize], rows: usize, op: &'static str) -> Result<()> {
    let ok = offsets.len() >= 2
        && offsets[0] == 0
        && *offsets.last().unwrap() == rows
        && offsets.windows(2).all(|w| w[0] < w[1]);
    if ok {
        Ok(())
    } else {
        Err(Error::shape(op, format!("bad segment offsets {offsets:?} for {rows} rows")))
    }
}

fn reduce(t: &Tensor, axis: Option<usize>, op: &'static str, f: impl Fn(&[f64]) -> f64) -> Result<Tensor> {
    let (r, c) = (t.rows(), t.cols());
    match axis {
        None => Ok(Tensor::scalar(f(t.data()))),
        Some(0) => {
            let data = (0..c)
                .map(|j| f(&(0..r).map(|i| t.data()[i * c + j]).collect::<Vec<_>>()))
                .collect();
            Tensor::matrix(1, c, data)
        }
        Some(1) => Tensor::matrix(r, 1, t.data().chunks(c).map(&f).collect()),
        Some(a) => Err(Error::shape(op, format!("axis {a}"))),
    }
}
