//! Tape-based reverse-mode differentiation over 2-D `f64` tensors.
//!
//! Every value is an `rows × cols` matrix; scalars are `1 × 1` and vectors
//! are single rows. Operations are recorded on a [`Tape`] in creation
//! order, which is already a topological order, so [`Tape::backward`] is a
//! single reverse sweep.
//!
//! ```
//! use ghn_core::autodiff::Tape;
//! use ndarray::array;
//!
//! let mut tape = Tape::new();
//! let x = tape.param(array![[1.0, -2.0]]);
//! let half = tape.squared_norm(x);
//! let loss = tape.scale(half, 0.5);
//! tape.backward(loss).unwrap();
//! assert_eq!(tape.grad(x).unwrap(), &array![[1.0, -2.0]]);
//! ```

use ndarray::{s, Array2, Axis};
use rand::Rng;
use thiserror::Error;

use crate::error::ShapeError;
use crate::sparse::CsrMatrix;

pub type Mat = Array2<f64>;

#[derive(Debug, Error, PartialEq)]
pub enum AutodiffError {
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error("{op} over an empty axis")]
    EmptyAxis { op: &'static str },
    #[error("backward target must be 1x1, got {0:?}")]
    NonScalarLoss((usize, usize)),
    #[error("backward already ran on this tape; call zero_grad first")]
    BackwardTwice,
    #[error("slice {start}..{end} out of bounds for extent {extent}")]
    Slice {
        start: usize,
        end: usize,
        extent: usize,
    },
    #[error("class {class} out of range for {classes} logits")]
    Target { class: usize, classes: usize },
}

type OpResult = Result<Var, AutodiffError>;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<'a> {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    SparseMatMul(&'a CsrMatrix, Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddRow(Var, Var),
    AddCol(Var, Var),
    MulCol(Var, Var),
    MulScalar(Var, Var),
    Scale(Var, f64),
    AddConst(Var),
    ElemMul(Var, Var),
    RowSoftmax(Var),
    LogSumExp { input: Var, probs: Mat },
    Relu(Var),
    Sigmoid(Var),
    Exp(Var),
    RowNormalize { input: Var, sums: Vec<f64> },
    ConcatCols(Var, Var),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    LayerNorm {
        input: Var,
        gain: Var,
        bias: Var,
        normalized: Mat,
        inv_std: Vec<f64>,
    },
    Dropout(Var, Mat),
    SquaredNorm(Var),
    Sum(Var),
    RowSquaredNorms(Var),
    CrossEntropy {
        logits: Var,
        targets: Vec<(usize, usize)>,
        probs: Mat,
    },
}

struct Node<'a> {
    value: Mat,
    op: Op<'a>,
    requires_grad: bool,
}

/// Records a computation for one forward/backward pass.
///
/// The lifetime ties the tape to sparse operands it borrows (the graph
/// Laplacian), which stay constant during a pass.
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
    grads: Vec<Option<Mat>>,
    backward_done: bool,
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err(op: &'static str, a: &Mat, b: &Mat) -> AutodiffError {
    ShapeError::new(op, a.dim(), b.dim()).into()
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            backward_done: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Mat, op: Op<'a>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Non-trainable leaf.
    pub fn constant(&mut self, value: Mat) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.constant(Array2::from_elem((1, 1), value))
    }

    pub fn value(&self, v: Var) -> &Mat {
        &self.nodes[v.0].value
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    // ---- linear algebra ----

    pub fn matmul(&mut self, a: Var, b: Var) -> OpResult {
        let (va, vb) = (self.value(a), self.value(b));
        if va.ncols() != vb.nrows() {
            return Err(shape_err("matmul", va, vb));
        }
        let out = va.dot(vb);
        let rg = self.needs(&[a, b]);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).t().to_owned();
        let rg = self.needs(&[a]);
        self.push(out, Op::Transpose(a), rg)
    }

    /// `L · a` for a constant sparse `L`.
    pub fn sparse_matmul(&mut self, l: &'a CsrMatrix, a: Var) -> OpResult {
        let out = l.matmul(&self.value(a).view())?;
        let rg = self.needs(&[a]);
        Ok(self.push(out, Op::SparseMatMul(l, a), rg))
    }

    // ---- elementwise arithmetic ----

    pub fn add(&mut self, a: Var, b: Var) -> OpResult {
        let (va, vb) = (self.value(a), self.value(b));
        if va.dim() != vb.dim() {
            return Err(shape_err("add", va, vb));
        }
        let out = va + vb;
        let rg = self.needs(&[a, b]);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> OpResult {
        let (va, vb) = (self.value(a), self.value(b));
        if va.dim() != vb.dim() {
            return Err(shape_err("sub", va, vb));
        }
        let out = va - vb;
        let rg = self.needs(&[a, b]);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    /// `a + 1·row` where `row` is `1 × cols`.
    pub fn add_row(&mut self, a: Var, row: Var) -> OpResult {
        let (va, vr) = (self.value(a), self.value(row));
        if vr.nrows() != 1 || vr.ncols() != va.ncols() {
            return Err(shape_err("add_row", va, vr));
        }
        let out = va + vr;
        let rg = self.needs(&[a, row]);
        Ok(self.push(out, Op::AddRow(a, row), rg))
    }

    /// `a + col·1ᵀ` where `col` is `rows × 1`.
    pub fn add_col(&mut self, a: Var, col: Var) -> OpResult {
        let (va, vc) = (self.value(a), self.value(col));
        if vc.ncols() != 1 || vc.nrows() != va.nrows() {
            return Err(shape_err("add_col", va, vc));
        }
        let out = va + vc;
        let rg = self.needs(&[a, col]);
        Ok(self.push(out, Op::AddCol(a, col), rg))
    }

    /// Scales each row of `a` by the matching entry of the `rows × 1` column.
    pub fn mul_col(&mut self, a: Var, col: Var) -> OpResult {
        let (va, vc) = (self.value(a), self.value(col));
        if vc.ncols() != 1 || vc.nrows() != va.nrows() {
            return Err(shape_err("mul_col", va, vc));
        }
        let out = va * vc;
        let rg = self.needs(&[a, col]);
        Ok(self.push(out, Op::MulCol(a, col), rg))
    }

    /// `s · a` for a `1 × 1` node `s`.
    pub fn mul_scalar(&mut self, a: Var, s: Var) -> OpResult {
        let (va, vs) = (self.value(a), self.value(s));
        if vs.dim() != (1, 1) {
            return Err(shape_err("mul_scalar", va, vs));
        }
        let out = va * vs[[0, 0]];
        let rg = self.needs(&[a, s]);
        Ok(self.push(out, Op::MulScalar(a, s), rg))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a) * c;
        let rg = self.needs(&[a]);
        self.push(out, Op::Scale(a, c), rg)
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a) + c;
        let rg = self.needs(&[a]);
        self.push(out, Op::AddConst(a), rg)
    }

    pub fn elementwise_mul(&mut self, a: Var, b: Var) -> OpResult {
        let (va, vb) = (self.value(a), self.value(b));
        if va.dim() != vb.dim() {
            return Err(shape_err("elementwise_mul", va, vb));
        }
        let out = va * vb;
        let rg = self.needs(&[a, b]);
        Ok(self.push(out, Op::ElemMul(a, b), rg))
    }

    // ---- nonlinearities ----

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(|v| v.max(0.0));
        let rg = self.needs(&[a]);
        self.push(out, Op::Relu(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(sigmoid);
        let rg = self.needs(&[a]);
        self.push(out, Op::Sigmoid(a), rg)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(f64::exp);
        let rg = self.needs(&[a]);
        self.push(out, Op::Exp(a), rg)
    }

    pub fn rowwise_softmax(&mut self, a: Var) -> OpResult {
        let va = self.value(a);
        if va.ncols() == 0 {
            return Err(AutodiffError::EmptyAxis { op: "rowwise_softmax" });
        }
        let out = softmax_rows(va, 1.0);
        let rg = self.needs(&[a]);
        Ok(self.push(out, Op::RowSoftmax(a), rg))
    }

    /// Row-wise `β⁻¹ log Σ_j exp(β z_ij)`, giving a `rows × 1` column.
    pub fn logsumexp(&mut self, a: Var, beta: f64) -> OpResult {
        let va = self.value(a);
        if va.ncols() == 0 {
            return Err(AutodiffError::EmptyAxis { op: "logsumexp" });
        }
        let mut out = Array2::zeros((va.nrows(), 1));
        for (i, row) in va.rows().into_iter().enumerate() {
            let m = row.fold(f64::NEG_INFINITY, |acc, &v| acc.max(v));
            let s: f64 = row.iter().map(|&v| (beta * (v - m)).exp()).sum();
            out[[i, 0]] = m + s.ln() / beta;
        }
        let probs = softmax_rows(va, beta);
        let rg = self.needs(&[a]);
        Ok(self.push(out, Op::LogSumExp { input: a, probs }, rg))
    }

    /// Divides each row by its sum. Rows whose sum is not positive map to
    /// zero and pass no gradient.
    pub fn row_normalize(&mut self, a: Var) -> Var {
        let va = self.value(a);
        let sums: Vec<f64> = va.rows().into_iter().map(|r| r.sum()).collect();
        let mut out = va.clone();
        for (mut row, &s) in out.rows_mut().into_iter().zip(&sums) {
            if s > 0.0 {
                row.mapv_inplace(|v| v / s);
            } else {
                row.fill(0.0);
            }
        }
        let rg = self.needs(&[a]);
        self.push(out, Op::RowNormalize { input: a, sums }, rg)
    }

    // ---- structure ----

    /// Horizontal concatenation `[a | b]` of two matrices with the same
    /// number of rows (each output row is the concatenation of the input
    /// rows).
    pub fn concat_rows(&mut self, a: Var, b: Var) -> OpResult {
        let (va, vb) = (self.value(a), self.value(b));
        if va.nrows() != vb.nrows() {
            return Err(shape_err("concat_rows", va, vb));
        }
        let out = ndarray::concatenate(Axis(1), &[va.view(), vb.view()]).expect("rows checked");
        let rg = self.needs(&[a, b]);
        Ok(self.push(out, Op::ConcatCols(a, b), rg))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> OpResult {
        let va = self.value(a);
        if start > end || end > va.ncols() {
            return Err(AutodiffError::Slice {
                start,
                end,
                extent: va.ncols(),
            });
        }
        let out = va.slice(s![.., start..end]).to_owned();
        let rg = self.needs(&[a]);
        Ok(self.push(out, Op::SliceCols(a, start), rg))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> OpResult {
        let va = self.value(a);
        if start > end || end > va.nrows() {
            return Err(AutodiffError::Slice {
                start,
                end,
                extent: va.nrows(),
            });
        }
        let out = va.slice(s![start..end, ..]).to_owned();
        let rg = self.needs(&[a]);
        Ok(self.push(out, Op::SliceRows(a, start), rg))
    }

    /// Row-wise layer normalization with learnable `1 × cols` gain and bias.
    pub fn layer_norm(&mut self, a: Var, gain: Var, bias: Var, eps: f64) -> OpResult {
        let va = self.value(a);
        let c = va.ncols();
        if c == 0 {
            return Err(AutodiffError::EmptyAxis { op: "layer_norm" });
        }
        let (vg, vb) = (self.value(gain), self.value(bias));
        if vg.dim() != (1, c) {
            return Err(shape_err("layer_norm", va, vg));
        }
        if vb.dim() != (1, c) {
            return Err(shape_err("layer_norm", va, vb));
        }
        let mut normalized = va.clone();
        let mut inv_std = Vec::with_capacity(va.nrows());
        for mut row in normalized.rows_mut() {
            let mean = row.sum() / c as f64;
            row.mapv_inplace(|v| v - mean);
            let var = row.iter().map(|v| v * v).sum::<f64>() / c as f64;
            let inv = 1.0 / (var + eps).sqrt();
            row.mapv_inplace(|v| v * inv);
            inv_std.push(inv);
        }
        let out = &normalized * vg + vb;
        let rg = self.needs(&[a, gain, bias]);
        Ok(self.push(
            out,
            Op::LayerNorm {
                input: a,
                gain,
                bias,
                normalized,
                inv_std,
            },
            rg,
        ))
    }

    /// Inverted dropout: entries are zeroed with probability `rate` and the
    /// survivors scaled by `1/(1-rate)`. A zero rate returns `a` itself.
    pub fn dropout_mask<R: Rng + ?Sized>(&mut self, a: Var, rate: f64, rng: &mut R) -> Var {
        if rate <= 0.0 {
            return a;
        }
        let keep = 1.0 - rate;
        let (r, c) = self.shape(a);
        let mask = Array2::from_shape_simple_fn((r, c), || {
            if rng.random::<f64>() < keep {
                1.0 / keep
            } else {
                0.0
            }
        });
        let out = self.value(a) * &mask;
        let rg = self.needs(&[a]);
        self.push(out, Op::Dropout(a, mask), rg)
    }

    // ---- reductions ----

    /// `‖a‖²_F` as a `1 × 1` node.
    pub fn squared_norm(&mut self, a: Var) -> Var {
        let v = self.value(a).iter().map(|x| x * x).sum::<f64>();
        let rg = self.needs(&[a]);
        self.push(Array2::from_elem((1, 1), v), Op::SquaredNorm(a), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = self.value(a).sum();
        let rg = self.needs(&[a]);
        self.push(Array2::from_elem((1, 1), v), Op::Sum(a), rg)
    }

    /// `‖a_i‖²` for every row, as a `rows × 1` column.
    pub fn row_squared_norms(&mut self, a: Var) -> Var {
        let out = self
            .value(a)
            .map_axis(Axis(1), |r| r.dot(&r))
            .insert_axis(Axis(1));
        let rg = self.needs(&[a]);
        self.push(out, Op::RowSquaredNorms(a), rg)
    }

    /// Mean softmax cross-entropy over `(row, class)` targets.
    pub fn cross_entropy_with_logits(&mut self, logits: Var, targets: &[(usize, usize)]) -> OpResult {
        let vl = self.value(logits);
        if vl.ncols() == 0 || targets.is_empty() {
            return Err(AutodiffError::EmptyAxis { op: "cross_entropy_with_logits" });
        }
        for &(row, class) in targets {
            if row >= vl.nrows() {
                return Err(AutodiffError::Slice {
                    start: row,
                    end: row + 1,
                    extent: vl.nrows(),
                });
            }
            if class >= vl.ncols() {
                return Err(AutodiffError::Target {
                    class,
                    classes: vl.ncols(),
                });
            }
        }
        let probs = softmax_rows(vl, 1.0);
        let mut loss = 0.0;
        for &(row, class) in targets {
            let r = vl.row(row);
            let m = r.fold(f64::NEG_INFINITY, |acc, &v| acc.max(v));
            let lse = m + r.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
            loss += lse - r[class];
        }
        loss /= targets.len() as f64;
        let rg = self.needs(&[logits]);
        Ok(self.push(
            Array2::from_elem((1, 1), loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            rg,
        ))
    }

    // ---- reverse sweep ----

    /// Propagates gradients from the scalar `loss` to every node that
    /// requires them.
    pub fn backward(&mut self, loss: Var) -> Result<(), AutodiffError> {
        if self.backward_done {
            return Err(AutodiffError::BackwardTwice);
        }
        let dim = self.shape(loss);
        if dim != (1, 1) {
            return Err(AutodiffError::NonScalarLoss(dim));
        }
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        self.grads[loss.0] = Some(Array2::ones((1, 1)));
        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(g) = self.grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &g);
            self.grads[idx] = Some(g);
        }
        self.backward_done = true;
        Ok(())
    }

    /// Gradient of the last backward target with respect to `v`. Nodes
    /// that did not influence the target report `None`.
    pub fn grad(&self, v: Var) -> Option<&Mat> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient, materialising zeros for disconnected nodes.
    pub fn grad_or_zeros(&self, v: Var) -> Mat {
        self.grad(v)
            .cloned()
            .unwrap_or_else(|| Array2::zeros(self.shape(v)))
    }

    /// Clears accumulated gradients so backward may run again.
    pub fn zero_grad(&mut self) {
        self.grads.clear();
        self.backward_done = false;
    }

    fn accumulate(&mut self, target: Var, contribution: Mat) {
        if !self.nodes[target.0].requires_grad {
            return;
        }
        match &mut self.grads[target.0] {
            Some(existing) => *existing += &contribution,
            slot @ None => *slot = Some(contribution),
        }
    }

    fn propagate(&mut self, idx: usize, g: &Mat) {
        let node = &self.nodes[idx];
        let out = &node.value;
        let mut pending: Vec<(Var, Mat)> = Vec::with_capacity(2);
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                if self.nodes[a.0].requires_grad {
                    pending.push((*a, g.dot(&vb.t())));
                }
                if self.nodes[b.0].requires_grad {
                    pending.push((*b, va.t().dot(g)));
                }
            }
            Op::Transpose(a) => pending.push((*a, g.t().to_owned())),
            Op::SparseMatMul(l, a) => {
                let ga = l.matmul_transposed(&g.view()).expect("shape fixed at forward");
                pending.push((*a, ga));
            }
            Op::Add(a, b) => {
                pending.push((*a, g.clone()));
                pending.push((*b, g.clone()));
            }
            Op::Sub(a, b) => {
                pending.push((*a, g.clone()));
                pending.push((*b, -g));
            }
            Op::AddRow(a, r) => {
                pending.push((*a, g.clone()));
                pending.push((*r, g.sum_axis(Axis(0)).insert_axis(Axis(0))));
            }
            Op::AddCol(a, c) => {
                pending.push((*a, g.clone()));
                pending.push((*c, g.sum_axis(Axis(1)).insert_axis(Axis(1))));
            }
            Op::MulCol(a, c) => {
                let (va, vc) = (&self.nodes[a.0].value, &self.nodes[c.0].value);
                pending.push((*a, g * vc));
                pending.push((*c, (g * va).sum_axis(Axis(1)).insert_axis(Axis(1))));
            }
            Op::MulScalar(a, sv) => {
                let (va, vs) = (&self.nodes[a.0].value, &self.nodes[sv.0].value);
                pending.push((*a, g * vs[[0, 0]]));
                let gs = (g * va).sum();
                pending.push((*sv, Array2::from_elem((1, 1), gs)));
            }
            Op::Scale(a, c) => pending.push((*a, g * *c)),
            Op::AddConst(a) => pending.push((*a, g.clone())),
            Op::ElemMul(a, b) => {
                let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                pending.push((*a, g * vb));
                pending.push((*b, g * va));
            }
            Op::RowSoftmax(a) => pending.push((*a, softmax_vjp(out, g))),
            Op::LogSumExp { input, probs } => pending.push((*input, probs * g)),
            Op::Relu(a) => {
                let va = &self.nodes[a.0].value;
                let mut ga = g.clone();
                ga.zip_mut_with(va, |gv, &x| {
                    if x <= 0.0 {
                        *gv = 0.0
                    }
                });
                pending.push((*a, ga));
            }
            Op::Sigmoid(a) => {
                let mut ga = g.clone();
                ga.zip_mut_with(out, |gv, &y| *gv *= y * (1.0 - y));
                pending.push((*a, ga));
            }
            Op::Exp(a) => pending.push((*a, g * out)),
            Op::RowNormalize { input, sums } => {
                // d(a_ij / s_i) pulls back to (g_ij − ⟨g_i, y_i⟩) / s_i.
                let mut ga = Array2::zeros(g.dim());
                for (i, &s) in sums.iter().enumerate() {
                    if s > 0.0 {
                        let dot = g.row(i).dot(&out.row(i));
                        for j in 0..g.ncols() {
                            ga[[i, j]] = (g[[i, j]] - dot) / s;
                        }
                    }
                }
                pending.push((*input, ga));
            }
            Op::ConcatCols(a, b) => {
                let ca = self.nodes[a.0].value.ncols();
                pending.push((*a, g.slice(s![.., ..ca]).to_owned()));
                pending.push((*b, g.slice(s![.., ca..]).to_owned()));
            }
            Op::SliceCols(a, start) => {
                let mut ga = Array2::zeros(self.nodes[a.0].value.dim());
                ga.slice_mut(s![.., *start..*start + g.ncols()]).assign(g);
                pending.push((*a, ga));
            }
            Op::SliceRows(a, start) => {
                let mut ga = Array2::zeros(self.nodes[a.0].value.dim());
                ga.slice_mut(s![*start..*start + g.nrows(), ..]).assign(g);
                pending.push((*a, ga));
            }
            Op::LayerNorm {
                input,
                gain,
                bias,
                normalized,
                inv_std,
            } => {
                let vg = &self.nodes[gain.0].value;
                pending.push((*bias, g.sum_axis(Axis(0)).insert_axis(Axis(0))));
                pending.push((*gain, (g * normalized).sum_axis(Axis(0)).insert_axis(Axis(0))));
                let gx_hat = g * vg;
                let c = g.ncols() as f64;
                let mut ga = Array2::zeros(g.dim());
                for i in 0..g.nrows() {
                    let gh = gx_hat.row(i);
                    let xh = normalized.row(i);
                    let sum_g = gh.sum();
                    let sum_gx = gh.dot(&xh);
                    for j in 0..g.ncols() {
                        ga[[i, j]] = inv_std[i] / c * (c * gh[j] - sum_g - xh[j] * sum_gx);
                    }
                }
                pending.push((*input, ga));
            }
            Op::Dropout(a, mask) => pending.push((*a, g * mask)),
            Op::SquaredNorm(a) => pending.push((*a, &self.nodes[a.0].value * (2.0 * g[[0, 0]]))),
            Op::Sum(a) => pending.push((*a, Array2::from_elem(self.nodes[a.0].value.dim(), g[[0, 0]]))),
            Op::RowSquaredNorms(a) => pending.push((*a, &self.nodes[a.0].value * g * 2.0)),
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let scale = g[[0, 0]] / targets.len() as f64;
                let mut ga = Array2::zeros(probs.dim());
                for &(row, class) in targets {
                    let mut gr = ga.row_mut(row);
                    gr.scaled_add(scale, &probs.row(row));
                    gr[class] -= scale;
                }
                pending.push((*logits, ga));
            }
        }
        for (target, contribution) in pending {
            self.accumulate(target, contribution);
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-wise `softmax(β z)` with max subtraction.
pub fn softmax_rows(z: &Mat, beta: f64) -> Mat {
    let mut out = z.clone();
    for mut row in out.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |acc, &v| acc.max(v));
        row.mapv_inplace(|v| (beta * (v - m)).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    out
}

/// `y ⊙ (g − ⟨g, y⟩)` row by row: the softmax vector-Jacobian product.
fn softmax_vjp(y: &Mat, g: &Mat) -> Mat {
    let mut out = Array2::zeros(y.dim());
    for i in 0..y.nrows() {
        let dot = g.row(i).dot(&y.row(i));
        for j in 0..y.ncols() {
            out[[i, j]] = y[[i, j]] * (g[[i, j]] - dot);
        }
    }
    out
}
