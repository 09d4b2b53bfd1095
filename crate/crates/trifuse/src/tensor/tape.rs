//! The operation tape: forward primitives and the reverse pass.
//!
//! A [`Tape`] owns every intermediate value of one forward computation.
//! Each op appends a node whose inputs are earlier node ids, so the tape
//! is already in topological order and [`Tape::backward`] can propagate
//! gradients by a single reverse sweep, visiting each node exactly once.
//! Nodes that cannot reach a gradient-requiring leaf are skipped, and
//! leaves never touched by the loss keep an all-zero gradient.
//!
//! Masked attention relies on two f64 facts used deliberately here:
//! `exp(-1e30) == 0.0` exactly, and `x + 0.0 == x` bit-for-bit, so padded
//! positions contribute nothing to softmax sums no matter how many there
//! are.

use super::Tensor;
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Handle to a value stored on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TensorId(pub(crate) usize);

/// Pointwise nonlinearity used by encoder blocks and fusion heads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Gelu,
    Relu,
    Tanh,
    /// Pass-through; lets fusion heads combine raw logits.
    Identity,
}

impl Activation {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gelu" => Ok(Activation::Gelu),
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::parameter(
                "Activation::parse",
                format!("unknown activation {other:?}; expected one of gelu, relu, tanh, identity"),
            )),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Gelu => "gelu",
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }
}

enum Op {
    Leaf,
    /// Elementwise sum of same-shape operands.
    Add(TensorId, TensorId),
    /// Sum of several same-shape operands (used to average batch losses).
    AddN(Vec<TensorId>),
    /// `[m,n] + [n]`, the bias term of a row-major linear layer.
    AddRowBias {
        x: TensorId,
        bias: TensorId,
    },
    /// Elementwise product of same-shape operands.
    Mul(TensorId, TensorId),
    /// Multiplication by a compile-time constant.
    Scale(TensorId, f64),
    /// Product with a learned scalar (shape `[1]`), e.g. late-fusion weights.
    ScaleBy {
        x: TensorId,
        s: TensorId,
    },
    MatMul {
        a: TensorId,
        b: TensorId,
        m: usize,
        k: usize,
        n: usize,
    },
    /// `[m,k] · [k] -> [m]`.
    MatVec {
        w: TensorId,
        x: TensorId,
        m: usize,
        k: usize,
    },
    Transpose {
        a: TensorId,
        rows: usize,
        cols: usize,
    },
    Gelu(TensorId),
    Relu(TensorId),
    Tanh(TensorId),
    /// Row softmax; `sm` caches the forward output for the backward rule.
    Softmax {
        a: TensorId,
        rows: usize,
        cols: usize,
    },
    /// Per-row standardization followed by a learned affine map.
    LayerNorm {
        x: TensorId,
        gain: TensorId,
        bias: TensorId,
        rows: usize,
        cols: usize,
        eps: f64,
    },
    /// Inverted dropout; `mask` entries are `0` or `1/(1-p)`.
    Dropout {
        x: TensorId,
        mask: Vec<f64>,
    },
    /// Row gather: output row r is `table` row `indices[r]`.
    Embed {
        table: TensorId,
        indices: Vec<usize>,
        cols: usize,
    },
    /// Mean over rows (`axis == 0`) or columns (`axis == 1`) of a matrix.
    MeanAxis {
        a: TensorId,
        rows: usize,
        cols: usize,
        axis: usize,
    },
    /// Column-wise concatenation of matrices with equal row counts.
    ConcatCols {
        a: TensorId,
        b: TensorId,
        rows: usize,
        ca: usize,
        cb: usize,
    },
    /// Row-wise concatenation of matrices with equal column counts.
    ConcatRows {
        a: TensorId,
        b: TensorId,
        ra: usize,
        cols: usize,
    },
    SelectRow {
        a: TensorId,
        row: usize,
        cols: usize,
    },
    /// Same data, new shape; gradient passes through untouched.
    Reshape(TensorId),
    SumAll(TensorId),
    /// `logsumexp(z) - z[label]`, numerically safe for extreme logits.
    CrossEntropyLogits {
        logits: TensorId,
        label: usize,
    },
    /// `-ln p[label]` on an explicit probability vector.
    CrossEntropyProbs {
        probs: TensorId,
        label: usize,
    },
}

struct Node {
    data: Vec<f64>,
    shape: Vec<usize>,
    op: Op,
    /// True when this value can influence some gradient-requiring leaf.
    needs_grad: bool,
}

/// Recorded forward computation plus, after [`Tape::backward`], gradients.
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    rng: ChaCha8Rng,
    /// Test fixture: deliberately corrupt the GELU backward rule so the
    /// gradient checker can prove it catches bad analytic gradients.
    gelu_backward_fault: bool,
}

impl Tape {
    /// A fresh tape; `seed` fixes every stochastic op recorded on it.
    pub fn new(seed: u64) -> Self {
        Tape {
            nodes: Vec::new(),
            grads: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            gelu_backward_fault: false,
        }
    }

    #[doc(hidden)]
    pub fn inject_gelu_backward_fault(&mut self) {
        self.gelu_backward_fault = true;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: TensorId) -> &[f64] {
        &self.nodes[id.0].data
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    /// Gradient of the last backward target w.r.t. node `id`; `None` if
    /// no backward pass ran or the node needed no gradient.
    pub fn grad(&self, id: TensorId) -> Option<&[f64]> {
        self.grads.get(id.0).and_then(|g| g.as_deref())
    }

    /// Exports a node as a standalone [`Tensor`] value.
    pub fn export(&self, id: TensorId) -> Tensor {
        Tensor::new(self.shape(id).to_vec(), self.value(id).to_vec())
            .expect("tape node is consistent")
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<f64>, op: Op, needs_grad: bool) -> TensorId {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.nodes.push(Node {
            data,
            shape,
            op,
            needs_grad,
        });
        TensorId(self.nodes.len() - 1)
    }

    fn needs(&self, id: TensorId) -> bool {
        self.nodes[id.0].needs_grad
    }

    fn rows_cols(&self, id: TensorId, op: &'static str) -> Result<(usize, usize)> {
        match *self.shape(id) {
            [rows, cols] => Ok((rows, cols)),
            [cols] => Ok((1, cols)),
            ref s => Err(Error::shape(
                op,
                format!("expected a vector or matrix, got shape {s:?}"),
            )),
        }
    }

    // ── Leaves ──────────────────────────────────────────────────────────

    /// Copies a tensor onto the tape, honoring its `requires_grad` flag.
    pub fn leaf(&mut self, t: &Tensor) -> TensorId {
        self.push(
            t.shape().to_vec(),
            t.data().to_vec(),
            Op::Leaf,
            t.requires_grad(),
        )
    }

    /// A constant leaf that never receives gradient.
    pub fn constant(&mut self, shape: Vec<usize>, data: Vec<f64>) -> Result<TensorId> {
        let t = Tensor::new(shape, data)?;
        Ok(self.leaf(&t))
    }

    pub fn scalar_constant(&mut self, v: f64) -> TensorId {
        self.push(vec![1], vec![v], Op::Leaf, false)
    }

    // ── Elementwise and linear ops ──────────────────────────────────────

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(
                "add",
                format!(
                    "operand shapes {:?} and {:?} differ",
                    self.shape(a),
                    self.shape(b)
                ),
            ));
        }
        let data = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x + y)
            .collect();
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(self.shape(a).to_vec(), data, Op::Add(a, b), needs))
    }

    pub fn add_n(&mut self, inputs: &[TensorId]) -> Result<TensorId> {
        let first = *inputs
            .first()
            .ok_or_else(|| Error::contract("add_n", "empty input list"))?;
        let shape = self.shape(first).to_vec();
        for &id in inputs {
            if self.shape(id) != shape {
                return Err(Error::shape(
                    "add_n",
                    format!("operand shapes {:?} and {:?} differ", shape, self.shape(id)),
                ));
            }
        }
        let mut data = vec![0.0; shape.iter().product()];
        for &id in inputs {
            for (o, v) in data.iter_mut().zip(self.value(id)) {
                *o += v;
            }
        }
        let needs = inputs.iter().any(|&id| self.needs(id));
        Ok(self.push(shape, data, Op::AddN(inputs.to_vec()), needs))
    }

    /// Adds a `[n]` bias to every row of a `[m,n]` matrix.
    pub fn add_row_bias(&mut self, x: TensorId, bias: TensorId) -> Result<TensorId> {
        let (m, n) = self.rows_cols(x, "add_row_bias")?;
        if self.shape(bias) != [n] {
            return Err(Error::shape(
                "add_row_bias",
                format!(
                    "matrix {:?} needs bias [{}], got {:?}",
                    self.shape(x),
                    n,
                    self.shape(bias)
                ),
            ));
        }
        let mut data = self.value(x).to_vec();
        let b = self.value(bias);
        for row in data.chunks_mut(n) {
            for (o, v) in row.iter_mut().zip(b) {
                *o += v;
            }
        }
        let needs = self.needs(x) || self.needs(bias);
        let _ = m;
        Ok(self.push(
            self.shape(x).to_vec(),
            data,
            Op::AddRowBias { x, bias },
            needs,
        ))
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(
                "mul",
                format!(
                    "operand shapes {:?} and {:?} differ",
                    self.shape(a),
                    self.shape(b)
                ),
            ));
        }
        let data = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x * y)
            .collect();
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(self.shape(a).to_vec(), data, Op::Mul(a, b), needs))
    }

    pub fn scale(&mut self, a: TensorId, c: f64) -> TensorId {
        let data = self.value(a).iter().map(|x| x * c).collect();
        let needs = self.needs(a);
        self.push(self.shape(a).to_vec(), data, Op::Scale(a, c), needs)
    }

    /// Multiplies every element of `x` by a learned scalar of shape `[1]`.
    pub fn scale_by(&mut self, x: TensorId, s: TensorId) -> Result<TensorId> {
        if self.shape(s) != [1] {
            return Err(Error::shape(
                "scale_by",
                format!("scale must have shape [1], got {:?}", self.shape(s)),
            ));
        }
        let sv = self.value(s)[0];
        let data = self.value(x).iter().map(|v| v * sv).collect();
        let needs = self.needs(x) || self.needs(s);
        Ok(self.push(self.shape(x).to_vec(), data, Op::ScaleBy { x, s }, needs))
    }

    /// `[m,k] · [k,n] -> [m,n]` with the usual gradient rules
    /// (`da += g·bᵀ`, `db += aᵀ·g`).
    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (m, k) = self.rows_cols(a, "matmul")?;
        let (kb, n) = self.rows_cols(b, "matmul")?;
        if k != kb {
            return Err(Error::shape(
                "matmul",
                format!(
                    "inner dimensions differ: {:?} x {:?}",
                    self.shape(a),
                    self.shape(b)
                ),
            ));
        }
        let mut data = vec![0.0; m * n];
        {
            let av = self.value(a);
            let bv = self.value(b);
            for i in 0..m {
                for kk in 0..k {
                    let aik = av[i * k + kk];
                    let brow = &bv[kk * n..(kk + 1) * n];
                    let orow = &mut data[i * n..(i + 1) * n];
                    for (o, bb) in orow.iter_mut().zip(brow) {
                        *o += aik * bb;
                    }
                }
            }
        }
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(vec![m, n], data, Op::MatMul { a, b, m, k, n }, needs))
    }

    /// `[m,k] · [k] -> [m]`; each output is a sequential dot product, so
    /// column-block weight layouts sum in the same order as split matrices.
    pub fn matvec(&mut self, w: TensorId, x: TensorId) -> Result<TensorId> {
        let (m, k) = self.rows_cols(w, "matvec")?;
        if self.shape(x) != [k] {
            return Err(Error::shape(
                "matvec",
                format!(
                    "matrix {:?} needs vector [{}], got {:?}",
                    self.shape(w),
                    k,
                    self.shape(x)
                ),
            ));
        }
        let wv = self.value(w);
        let xv = self.value(x);
        let data: Vec<f64> = (0..m)
            .map(|i| {
                wv[i * k..(i + 1) * k]
                    .iter()
                    .zip(xv)
                    .fold(0.0, |acc, (a, b)| acc + a * b)
            })
            .collect();
        let needs = self.needs(w) || self.needs(x);
        Ok(self.push(vec![m], data, Op::MatVec { w, x, m, k }, needs))
    }

    pub fn transpose(&mut self, a: TensorId) -> Result<TensorId> {
        let (rows, cols) = self.rows_cols(a, "transpose")?;
        let av = self.value(a);
        let mut data = vec![0.0; rows * cols];
        for i in 0..rows {
            for j in 0..cols {
                data[j * rows + i] = av[i * cols + j];
            }
        }
        let needs = self.needs(a);
        Ok(self.push(
            vec![cols, rows],
            data,
            Op::Transpose { a, rows, cols },
            needs,
        ))
    }

    // ── Nonlinearities ──────────────────────────────────────────────────

    pub fn activation(&mut self, a: TensorId, f: Activation) -> TensorId {
        match f {
            Activation::Gelu => self.gelu(a),
            Activation::Relu => self.relu(a),
            Activation::Tanh => self.tanh(a),
            Activation::Identity => a,
        }
    }

    /// GELU in the tanh approximation
    /// `0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))`.
    pub fn gelu(&mut self, a: TensorId) -> TensorId {
        let data = self.value(a).iter().map(|&x| gelu_value(x)).collect();
        let needs = self.needs(a);
        self.push(self.shape(a).to_vec(), data, Op::Gelu(a), needs)
    }

    pub fn relu(&mut self, a: TensorId) -> TensorId {
        let data = self.value(a).iter().map(|&x| x.max(0.0)).collect();
        let needs = self.needs(a);
        self.push(self.shape(a).to_vec(), data, Op::Relu(a), needs)
    }

    pub fn tanh(&mut self, a: TensorId) -> TensorId {
        let data = self.value(a).iter().map(|&x| x.tanh()).collect();
        let needs = self.needs(a);
        self.push(self.shape(a).to_vec(), data, Op::Tanh(a), needs)
    }

    /// Row-wise softmax with max subtraction; rows of the output sum to 1
    /// for any finite input, including logits around ±1e3.
    pub fn softmax(&mut self, a: TensorId) -> Result<TensorId> {
        let (rows, cols) = self.rows_cols(a, "softmax")?;
        if cols == 0 {
            return Err(Error::shape("softmax", "cannot normalize zero-length rows"));
        }
        let mut data = self.value(a).to_vec();
        for row in data.chunks_mut(cols) {
            let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        let needs = self.needs(a);
        Ok(self.push(
            self.shape(a).to_vec(),
            data,
            Op::Softmax { a, rows, cols },
            needs,
        ))
    }

    /// Standardizes each row to mean 0, variance 1 (biased, `1/n`), then
    /// applies the learned per-column `gain` and `bias`.
    pub fn layernorm(
        &mut self,
        x: TensorId,
        gain: TensorId,
        bias: TensorId,
        eps: f64,
    ) -> Result<TensorId> {
        let (rows, cols) = self.rows_cols(x, "layernorm")?;
        if self.shape(gain) != [cols] || self.shape(bias) != [cols] {
            return Err(Error::shape(
                "layernorm",
                format!(
                    "input {:?} needs gain/bias [{}], got {:?} and {:?}",
                    self.shape(x),
                    cols,
                    self.shape(gain),
                    self.shape(bias)
                ),
            ));
        }
        if eps <= 0.0 {
            return Err(Error::parameter(
                "layernorm",
                format!("eps must be positive, got {eps}"),
            ));
        }
        let mut data = self.value(x).to_vec();
        let g = self.value(gain);
        let b = self.value(bias);
        for row in data.chunks_mut(cols) {
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let inv = 1.0 / (var + eps).sqrt();
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - mean) * inv * g[j] + b[j];
            }
        }
        let needs = self.needs(x) || self.needs(gain) || self.needs(bias);
        Ok(self.push(
            self.shape(x).to_vec(),
            data,
            Op::LayerNorm {
                x,
                gain,
                bias,
                rows,
                cols,
                eps,
            },
            needs,
        ))
    }

    /// Inverted dropout: zeroes each element with probability `p` and
    /// scales survivors by `1/(1-p)`, so expectations match inference.
    /// Outside training (or with `p == 0`) the input passes through as-is.
    pub fn dropout(&mut self, x: TensorId, p: f64, training: bool) -> Result<TensorId> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::parameter(
                "dropout",
                format!("p must lie in [0, 1), got {p}"),
            ));
        }
        if !training || p == 0.0 {
            return Ok(x);
        }
        let scale = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..self.value(x).len())
            .map(|_| {
                if self.rng.gen::<f64>() < p {
                    0.0
                } else {
                    scale
                }
            })
            .collect();
        let data = self
            .value(x)
            .iter()
            .zip(&mask)
            .map(|(v, m)| v * m)
            .collect();
        let needs = self.needs(x);
        Ok(self.push(self.shape(x).to_vec(), data, Op::Dropout { x, mask }, needs))
    }

    // ── Structural ops ──────────────────────────────────────────────────

    /// Gathers rows of `table` (shape `[v, d]`) at `indices` into a
    /// `[len, d]` matrix; gradients scatter-add back into the table.
    pub fn embed(&mut self, table: TensorId, indices: &[usize]) -> Result<TensorId> {
        let (v, d) = self.rows_cols(table, "embed")?;
        if let Some(&bad) = indices.iter().find(|&&i| i >= v) {
            return Err(Error::parameter(
                "embed",
                format!("index {bad} out of range for table with {v} rows"),
            ));
        }
        let tv = self.value(table);
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            data.extend_from_slice(&tv[i * d..(i + 1) * d]);
        }
        let needs = self.needs(table);
        Ok(self.push(
            vec![indices.len(), d],
            data,
            Op::Embed {
                table,
                indices: indices.to_vec(),
                cols: d,
            },
            needs,
        ))
    }

    /// Mean along `axis` of a matrix: `axis == 0` averages rows into a
    /// `[cols]` vector, `axis == 1` averages columns into `[rows]`.
    pub fn mean_axis(&mut self, a: TensorId, axis: usize) -> Result<TensorId> {
        let (rows, cols) = self.rows_cols(a, "mean_axis")?;
        if axis > 1 {
            return Err(Error::parameter(
                "mean_axis",
                format!("axis must be 0 or 1, got {axis}"),
            ));
        }
        let av = self.value(a);
        let (shape, data) = if axis == 0 {
            let mut out = vec![0.0; cols];
            for row in av.chunks(cols) {
                for (o, v) in out.iter_mut().zip(row) {
                    *o += v;
                }
            }
            for o in out.iter_mut() {
                *o /= rows as f64;
            }
            (vec![cols], out)
        } else {
            let out = av
                .chunks(cols)
                .map(|row| row.iter().sum::<f64>() / cols as f64)
                .collect();
            (vec![rows], out)
        };
        let needs = self.needs(a);
        Ok(self.push(
            shape,
            data,
            Op::MeanAxis {
                a,
                rows,
                cols,
                axis,
            },
            needs,
        ))
    }

    /// Concatenates along the last dimension: `[m,ca]` ++ `[m,cb]` →
    /// `[m,ca+cb]`, or `[ca]` ++ `[cb]` → `[ca+cb]` for vectors.
    pub fn concat_cols(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let vector = self.shape(a).len() == 1 && self.shape(b).len() == 1;
        let (ra, ca) = self.rows_cols(a, "concat_cols")?;
        let (rb, cb) = self.rows_cols(b, "concat_cols")?;
        if ra != rb {
            return Err(Error::shape(
                "concat_cols",
                format!(
                    "row counts differ: {:?} vs {:?}",
                    self.shape(a),
                    self.shape(b)
                ),
            ));
        }
        let av = self.value(a);
        let bv = self.value(b);
        let mut data = Vec::with_capacity(ra * (ca + cb));
        for i in 0..ra {
            data.extend_from_slice(&av[i * ca..(i + 1) * ca]);
            data.extend_from_slice(&bv[i * cb..(i + 1) * cb]);
        }
        let shape = if vector {
            vec![ca + cb]
        } else {
            vec![ra, ca + cb]
        };
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(
            shape,
            data,
            Op::ConcatCols {
                a,
                b,
                rows: ra,
                ca,
                cb,
            },
            needs,
        ))
    }

    /// Stacks matrices vertically: `[ra,d]` over `[rb,d]` → `[ra+rb,d]`.
    pub fn concat_rows(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (ra, ca) = self.rows_cols(a, "concat_rows")?;
        let (rb, cb) = self.rows_cols(b, "concat_rows")?;
        if ca != cb {
            return Err(Error::shape(
                "concat_rows",
                format!(
                    "column counts differ: {:?} vs {:?}",
                    self.shape(a),
                    self.shape(b)
                ),
            ));
        }
        let mut data = Vec::with_capacity((ra + rb) * ca);
        data.extend_from_slice(self.value(a));
        data.extend_from_slice(self.value(b));
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(
            vec![ra + rb, ca],
            data,
            Op::ConcatRows { a, b, ra, cols: ca },
            needs,
        ))
    }

    /// Extracts row `row` of a matrix as a `[cols]` vector.
    pub fn select_row(&mut self, a: TensorId, row: usize) -> Result<TensorId> {
        let (rows, cols) = self.rows_cols(a, "select_row")?;
        if row >= rows {
            return Err(Error::parameter(
                "select_row",
                format!("row {row} out of range for shape {:?}", self.shape(a)),
            ));
        }
        let data = self.value(a)[row * cols..(row + 1) * cols].to_vec();
        let needs = self.needs(a);
        Ok(self.push(vec![cols], data, Op::SelectRow { a, row, cols }, needs))
    }

    pub fn reshape(&mut self, a: TensorId, shape: Vec<usize>) -> Result<TensorId> {
        if shape.iter().product::<usize>() != self.value(a).len() {
            return Err(Error::shape(
                "reshape",
                format!("cannot view {:?} as {:?}", self.shape(a), shape),
            ));
        }
        let data = self.value(a).to_vec();
        let needs = self.needs(a);
        Ok(self.push(shape, data, Op::Reshape(a), needs))
    }

    pub fn sum_all(&mut self, a: TensorId) -> TensorId {
        let s = self.value(a).iter().sum();
        let needs = self.needs(a);
        self.push(vec![1], vec![s], Op::SumAll(a), needs)
    }

    // ── Losses ──────────────────────────────────────────────────────────

    /// Cross-entropy straight from logits via log-sum-exp; the stable path
    /// used by training.
    pub fn cross_entropy_logits(&mut self, logits: TensorId, label: usize) -> Result<TensorId> {
        let shape = self.shape(logits);
        let [c] = *shape else {
            return Err(Error::shape(
                "cross_entropy_logits",
                format!("expected a logit vector, got shape {shape:?}"),
            ));
        };
        if label >= c {
            return Err(Error::parameter(
                "cross_entropy_logits",
                format!("label {label} out of range for {c} classes"),
            ));
        }
        let z = self.value(logits);
        let max = z.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let loss = lse - z[label];
        let needs = self.needs(logits);
        Ok(self.push(
            vec![1],
            vec![loss],
            Op::CrossEntropyLogits { logits, label },
            needs,
        ))
    }

    /// Cross-entropy on an explicit probability vector: `-ln p[label]`.
    /// A perfectly confident correct prediction scores exactly 0.
    pub fn cross_entropy_probs(&mut self, probs: TensorId, label: usize) -> Result<TensorId> {
        let shape = self.shape(probs);
        let [c] = *shape else {
            return Err(Error::shape(
                "cross_entropy_probs",
                format!("expected a probability vector, got shape {shape:?}"),
            ));
        };
        if label >= c {
            return Err(Error::parameter(
                "cross_entropy_probs",
                format!("label {label} out of range for {c} classes"),
            ));
        }
        let p = self.value(probs)[label];
        if p <= 0.0 {
            return Err(Error::parameter(
                "cross_entropy_probs",
                format!("probability of the true class must be positive, got {p}"),
            ));
        }
        let needs = self.needs(probs);
        Ok(self.push(
            vec![1],
            vec![-p.ln()],
            Op::CrossEntropyProbs { probs, label },
            needs,
        ))
    }

    /// Mean of scalar losses — the batch reduction used by the trainer.
    pub fn mean_of(&mut self, losses: &[TensorId]) -> Result<TensorId> {
        if losses.is_empty() {
            return Err(Error::contract("mean_of", "empty batch"));
        }
        let total = self.add_n(losses)?;
        Ok(self.scale(total, 1.0 / losses.len() as f64))
    }

    // ── Backward ────────────────────────────────────────────────────────

    /// Reverse sweep from a scalar `loss`. After it returns, every node
    /// that requires gradient holds `dloss/dnode`, and gradient-requiring
    /// leaves the loss never reached hold exact zeros.
    pub fn backward(&mut self, loss: TensorId) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::contract(
                "backward",
                format!("loss must be a scalar, got shape {:?}", self.shape(loss)),
            ));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<f64>>> = (0..n)
            .map(|i| {
                self.nodes[i]
                    .needs_grad
                    .then(|| vec![0.0; self.nodes[i].data.len()])
            })
            .collect();
        if grads[loss.0].is_none() {
            // Loss does not depend on any trainable leaf; all grads stay zero.
            self.grads = grads;
            return Ok(());
        }
        grads[loss.0].as_mut().unwrap()[0] = 1.0;

        for id in (0..=loss.0).rev() {
            if !self.nodes[id].needs_grad {
                continue;
            }
            let g = match grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            self.propagate(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    /// Applies one node's local gradient rule, accumulating into inputs.
    fn propagate(&self, id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[id];
        // Adds `delta` into the gradient buffer of `src` if it wants one.
        macro_rules! acc {
            ($src:expr, $f:expr) => {
                if let Some(dst) = grads[$src.0].as_mut() {
                    #[allow(clippy::redundant_closure_call)]
                    ($f)(dst.as_mut_slice());
                }
            };
        }
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc!(a, |dst: &mut [f64]| add_into(dst, g));
                acc!(b, |dst: &mut [f64]| add_into(dst, g));
            }
            Op::AddN(inputs) => {
                for a in inputs {
                    acc!(a, |dst: &mut [f64]| add_into(dst, g));
                }
            }
            Op::AddRowBias { x, bias } => {
                acc!(x, |dst: &mut [f64]| add_into(dst, g));
                let n = self.nodes[bias.0].data.len();
                acc!(bias, |dst: &mut [f64]| {
                    for row in g.chunks(n) {
                        add_into(dst, row);
                    }
                });
            }
            Op::Mul(a, b) => {
                let av = &self.nodes[a.0].data;
                let bv = &self.nodes[b.0].data;
                acc!(a, |dst: &mut [f64]| {
                    for ((d, gv), bb) in dst.iter_mut().zip(g).zip(bv) {
                        *d += gv * bb;
                    }
                });
                acc!(b, |dst: &mut [f64]| {
                    for ((d, gv), aa) in dst.iter_mut().zip(g).zip(av) {
                        *d += gv * aa;
                    }
                });
            }
            Op::Scale(a, c) => {
                acc!(a, |dst: &mut [f64]| {
                    for (d, gv) in dst.iter_mut().zip(g) {
                        *d += gv * c;
                    }
                });
            }
            Op::ScaleBy { x, s } => {
                let xv = &self.nodes[x.0].data;
                let sv = self.nodes[s.0].data[0];
                acc!(x, |dst: &mut [f64]| {
                    for (d, gv) in dst.iter_mut().zip(g) {
                        *d += gv * sv;
                    }
                });
                acc!(s, |dst: &mut [f64]| {
                    dst[0] += g.iter().zip(xv).map(|(gv, xx)| gv * xx).sum::<f64>();
                });
            }
            Op::MatMul { a, b, m, k, n } => {
                let (m, k, n) = (*m, *k, *n);
                let av = &self.nodes[a.0].data;
                let bv = &self.nodes[b.0].data;
                acc!(a, |dst: &mut [f64]| {
                    // da[i,kk] += sum_j g[i,j] * b[kk,j]
                    for i in 0..m {
                        for kk in 0..k {
                            let mut s = 0.0;
                            let grow = &g[i * n..(i + 1) * n];
                            let brow = &bv[kk * n..(kk + 1) * n];
                            for (gv, bb) in grow.iter().zip(brow) {
                                s += gv * bb;
                            }
                            dst[i * k + kk] += s;
                        }
                    }
                });
                acc!(b, |dst: &mut [f64]| {
                    // db[kk,j] += sum_i a[i,kk] * g[i,j]
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for kk in 0..k {
                            let aik = av[i * k + kk];
                            if aik == 0.0 {
                                continue;
                            }
                            let drow = &mut dst[kk * n..(kk + 1) * n];
                            for (d, gv) in drow.iter_mut().zip(grow) {
                                *d += aik * gv;
                            }
                        }
                    }
                });
            }
            Op::MatVec { w, x, m, k } => {
                let (m, k) = (*m, *k);
                let wv = &self.nodes[w.0].data;
                let xv = &self.nodes[x.0].data;
                acc!(w, |dst: &mut [f64]| {
                    for i in 0..m {
                        let gi = g[i];
                        if gi == 0.0 {
                            continue;
                        }
                        let drow = &mut dst[i * k..(i + 1) * k];
                        for (d, xx) in drow.iter_mut().zip(xv) {
                            *d += gi * xx;
                        }
                    }
                });
                acc!(x, |dst: &mut [f64]| {
                    for i in 0..m {
                        let gi = g[i];
                        if gi == 0.0 {
                            continue;
                        }
                        let wrow = &wv[i * k..(i + 1) * k];
                        for (d, ww) in dst.iter_mut().zip(wrow) {
                            *d += gi * ww;
                        }
                    }
                });
            }
            Op::Transpose { a, rows, cols } => {
                let (rows, cols) = (*rows, *cols);
                acc!(a, |dst: &mut [f64]| {
                    for i in 0..rows {
                        for j in 0..cols {
                            dst[i * cols + j] += g[j * rows + i];
                        }
                    }
                });
            }
            Op::Gelu(a) => {
                let av = &self.nodes[a.0].data;
                let fault = if self.gelu_backward_fault { 1.01 } else { 1.0 };
                acc!(a, |dst: &mut [f64]| {
                    for ((d, gv), &x) in dst.iter_mut().zip(g).zip(av) {
                        *d += gv * gelu_derivative(x) * fault;
                    }
                });
            }
            Op::Relu(a) => {
                let av = &self.nodes[a.0].data;
                acc!(a, |dst: &mut [f64]| {
                    for ((d, gv), &x) in dst.iter_mut().zip(g).zip(av) {
                        if x > 0.0 {
                            *d += gv;
                        }
                    }
                });
            }
            Op::Tanh(a) => {
                let yv = &node.data;
                acc!(a, |dst: &mut [f64]| {
                    for ((d, gv), &y) in dst.iter_mut().zip(g).zip(yv) {
                        *d += gv * (1.0 - y * y);
                    }
                });
            }
            Op::Softmax { a, rows, cols } => {
                let (rows, cols) = (*rows, *cols);
                let sv = &node.data;
                acc!(a, |dst: &mut [f64]| {
                    for r in 0..rows {
                        let s = &sv[r * cols..(r + 1) * cols];
                        let gr = &g[r * cols..(r + 1) * cols];
                        let dot: f64 = s.iter().zip(gr).map(|(si, gi)| si * gi).sum();
                        let drow = &mut dst[r * cols..(r + 1) * cols];
                        for ((d, &si), &gi) in drow.iter_mut().zip(s).zip(gr) {
                            *d += si * (gi - dot);
                        }
                    }
                });
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                rows,
                cols,
                eps,
            } => {
                let (rows, cols, eps) = (*rows, *cols, *eps);
                let xv = &self.nodes[x.0].data;
                let gv_gain = &self.nodes[gain.0].data;
                // Recompute per-row statistics; cheaper than caching them
                // for every layernorm node on the tape.
                for r in 0..rows {
                    let xr = &xv[r * cols..(r + 1) * cols];
                    let gr = &g[r * cols..(r + 1) * cols];
                    let mean = xr.iter().sum::<f64>() / cols as f64;
                    let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
                    let inv = 1.0 / (var + eps).sqrt();
                    let xhat: Vec<f64> = xr.iter().map(|v| (v - mean) * inv).collect();
                    if let Some(dst) = grads[gain.0].as_mut() {
                        for ((d, gv), xh) in dst.iter_mut().zip(gr).zip(&xhat) {
                            *d += gv * xh;
                        }
                    }
                    if let Some(dst) = grads[bias.0].as_mut() {
                        add_into(dst, gr);
                    }
                    if let Some(dst) = grads[x.0].as_mut() {
                        let dxhat: Vec<f64> =
                            gr.iter().zip(gv_gain).map(|(gv, ga)| gv * ga).collect();
                        let mean_dxhat = dxhat.iter().sum::<f64>() / cols as f64;
                        let mean_dxhat_xhat =
                            dxhat.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / cols as f64;
                        let drow = &mut dst[r * cols..(r + 1) * cols];
                        for ((d, dxh), xh) in drow.iter_mut().zip(&dxhat).zip(&xhat) {
                            *d += inv * (dxh - mean_dxhat - xh * mean_dxhat_xhat);
                        }
                    }
                }
            }
            Op::Dropout { x, mask } => {
                acc!(x, |dst: &mut [f64]| {
                    for ((d, gv), m) in dst.iter_mut().zip(g).zip(mask) {
                        *d += gv * m;
                    }
                });
            }
            Op::Embed {
                table,
                indices,
                cols,
            } => {
                let cols = *cols;
                acc!(table, |dst: &mut [f64]| {
                    for (r, &i) in indices.iter().enumerate() {
                        let grow = &g[r * cols..(r + 1) * cols];
                        let drow = &mut dst[i * cols..(i + 1) * cols];
                        add_into(drow, grow);
                    }
                });
            }
            Op::MeanAxis {
                a,
                rows,
                cols,
                axis,
            } => {
                let (rows, cols, axis) = (*rows, *cols, *axis);
                acc!(a, |dst: &mut [f64]| {
                    if axis == 0 {
                        let inv = 1.0 / rows as f64;
                        for drow in dst.chunks_mut(cols) {
                            for (d, gv) in drow.iter_mut().zip(g) {
                                *d += gv * inv;
                            }
                        }
                    } else {
                        let inv = 1.0 / cols as f64;
                        for (drow, gv) in dst.chunks_mut(cols).zip(g) {
                            for d in drow.iter_mut() {
                                *d += gv * inv;
                            }
                        }
                    }
                });
            }
            Op::ConcatCols { a, b, rows, ca, cb } => {
                let (rows, ca, cb) = (*rows, *ca, *cb);
                let w = ca + cb;
                acc!(a, |dst: &mut [f64]| {
                    for i in 0..rows {
                        add_into(&mut dst[i * ca..(i + 1) * ca], &g[i * w..i * w + ca]);
                    }
                });
                acc!(b, |dst: &mut [f64]| {
                    for i in 0..rows {
                        add_into(&mut dst[i * cb..(i + 1) * cb], &g[i * w + ca..(i + 1) * w]);
                    }
                });
            }
            Op::ConcatRows { a, b, ra, cols } => {
                let split = ra * cols;
                acc!(a, |dst: &mut [f64]| add_into(dst, &g[..split]));
                acc!(b, |dst: &mut [f64]| add_into(dst, &g[split..]));
            }
            Op::SelectRow { a, row, cols } => {
                let (row, cols) = (*row, *cols);
                acc!(a, |dst: &mut [f64]| {
                    add_into(&mut dst[row * cols..(row + 1) * cols], g);
                });
            }
            Op::Reshape(a) => {
                acc!(a, |dst: &mut [f64]| add_into(dst, g));
            }
            Op::SumAll(a) => {
                let gv = g[0];
                acc!(a, |dst: &mut [f64]| {
                    for d in dst.iter_mut() {
                        *d += gv;
                    }
                });
            }
            Op::CrossEntropyLogits { logits, label } => {
                let z = &self.nodes[logits.0].data;
                let label = *label;
                let gv = g[0];
                acc!(logits, |dst: &mut [f64]| {
                    let max = z.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
                    let sum: f64 = z.iter().map(|v| (v - max).exp()).sum();
                    for (j, (d, &zj)) in dst.iter_mut().zip(z).enumerate() {
                        let p = (zj - max).exp() / sum;
                        *d += gv * (p - if j == label { 1.0 } else { 0.0 });
                    }
                });
            }
            Op::CrossEntropyProbs { probs, label } => {
                let p = self.nodes[probs.0].data[*label];
                let label = *label;
                let gv = g[0];
                acc!(probs, |dst: &mut [f64]| {
                    dst[label] += -gv / p;
                });
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    debug_assert_eq!(dst.len(), src.len());
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

const GELU_C: f64 = 0.7978845608028654; // sqrt(2/pi)

fn gelu_value(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_derivative(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}
