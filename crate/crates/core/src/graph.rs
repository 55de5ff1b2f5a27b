//! Reverse-mode automatic differentiation on a flat tape.
//!
//! A [`Graph`] is an append-only arena of nodes; creation order is a valid
//! topological order, so one reverse sweep computes adjoints for every
//! reachable leaf. Backward passes emit their vector-Jacobian products as
//! ordinary graph nodes, which makes gradients themselves differentiable —
//! that is what the second-order gradient-norm penalty relies on.

use crate::error::{Error, Result};
use crate::tensor::{sigmoid_scalar, softplus_scalar, Tensor};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

// Some payload fields (scalar constants, source shapes) are consumed at
// construction time only; they stay on the variants for Debug output.
#[allow(dead_code)]
#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Constant,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    AddScalar(Var, f64),
    MulScalar(Var, f64),
    Neg(Var),
    Matmul(Var, Var),
    Transpose(Var),
    /// `[n, m] + [1, m]`, bias broadcast over rows.
    AddBias(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Ln(Var),
    Square(Var),
    Softplus(Var),
    Clamp(Var, f64, f64),
    SumAll(Var),
    MeanAll(Var),
    /// `[n, m] -> [n, 1]`
    RowSum(Var),
    /// `[n, m] -> [1, m]`
    ColSum(Var),
    /// `[1, m] -> [n, m]`
    BroadcastRows(Var, usize),
    /// `[n, 1] -> [n, m]`
    BroadcastCols(Var, usize),
    /// `[1] -> shape`
    BroadcastScalar(Var, Vec<usize>),
    /// Row-wise softmax with max-subtraction, `[n, m] -> [n, m]`.
    SoftmaxRows(Var),
    /// `[n, p] ++ [n, q] -> [n, p+q]`
    ConcatCols(Var, Var),
    /// `(start, len)` column slice.
    SliceCols(Var, usize, usize),
    /// `(left, right)` zero columns added on each side.
    PadCols(Var, usize, usize),
    /// Row-wise max `[n, m] -> [n, 1]`; treated as a constant by backward.
    /// Exact for log-sum-exp shifts, where any constant shift cancels.
    RowMaxDetached(Var),
    /// Each row of `[n, m]` repeated `k` times -> `[n*k, m]`.
    RepeatRows(Var, usize),
    /// Sum of consecutive row blocks of size `k`: `[n*k, m] -> [n, m]`.
    SumRowBlocks(Var, usize),
    Reshape(Var, Vec<usize>),
}

struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

/// Append-only computation tape.
pub struct Graph {
    nodes: Vec<Node>,
    nonfinite: Option<String>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            nonfinite: None,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// First op that produced a non-finite value, if any.
    pub fn nonfinite_op(&self) -> Option<&str> {
        self.nonfinite.as_deref()
    }

    pub fn check_finite(&self) -> Result<()> {
        match &self.nonfinite {
            Some(ctx) => Err(Error::NonFinite(ctx.clone())),
            None => Ok(()),
        }
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Value of a scalar node, checked finite.
    pub fn scalar_value(&self, v: Var) -> Result<f64> {
        self.check_finite()?;
        let t = self.value(v);
        if t.len() != 1 {
            return Err(Error::ShapeMismatch {
                context: "scalar_value",
                expected: vec![1],
                got: t.shape().to_vec(),
            });
        }
        Ok(t.data()[0])
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(if requires_grad { Op::Leaf } else { Op::Constant }, value, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Op::Constant, value, false)
    }

    pub fn constant_scalar(&mut self, value: f64) -> Var {
        self.constant(Tensor::scalar(value))
    }

    fn push(&mut self, op: Op, value: Tensor, requires_grad: bool) -> Var {
        if self.nonfinite.is_none() && !value.all_finite() {
            self.nonfinite = Some(op_name(&op).to_string());
        }
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg2(&self, a: Var, b: Var) -> bool {
        self.nodes[a.0].requires_grad || self.nodes[b.0].requires_grad
    }

    fn rg(&self, a: Var) -> bool {
        self.nodes[a.0].requires_grad
    }

    fn assert_same_shape(&self, a: Var, b: Var, context: &'static str) {
        assert_eq!(
            self.value(a).shape(),
            self.value(b).shape(),
            "{context}: operand shapes differ"
        );
    }

    // ---- elementwise binary ----

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.assert_same_shape(a, b, "add");
        let v = zip_map(self.value(a), self.value(b), |x, y| x + y);
        let rg = self.rg2(a, b);
        self.push(Op::Add(a, b), v, rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.assert_same_shape(a, b, "sub");
        let v = zip_map(self.value(a), self.value(b), |x, y| x - y);
        let rg = self.rg2(a, b);
        self.push(Op::Sub(a, b), v, rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.assert_same_shape(a, b, "mul");
        let v = zip_map(self.value(a), self.value(b), |x, y| x * y);
        let rg = self.rg2(a, b);
        self.push(Op::Mul(a, b), v, rg)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.assert_same_shape(a, b, "div");
        let v = zip_map(self.value(a), self.value(b), |x, y| x / y);
        let rg = self.rg2(a, b);
        self.push(Op::Div(a, b), v, rg)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x + s);
        let rg = self.rg(a);
        self.push(Op::AddScalar(a, s), v, rg)
    }

    pub fn mul_scalar(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x * s);
        let rg = self.rg(a);
        self.push(Op::MulScalar(a, s), v, rg)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| -x);
        let rg = self.rg(a);
        self.push(Op::Neg(a), v, rg)
    }

    // ---- elementwise unary ----

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        let rg = self.rg(a);
        self.push(Op::Relu(a), v, rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid_scalar);
        let rg = self.rg(a);
        self.push(Op::Sigmoid(a), v, rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        let rg = self.rg(a);
        self.push(Op::Tanh(a), v, rg)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::exp);
        let rg = self.rg(a);
        self.push(Op::Exp(a), v, rg)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::ln);
        let rg = self.rg(a);
        self.push(Op::Ln(a), v, rg)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x * x);
        let rg = self.rg(a);
        self.push(Op::Square(a), v, rg)
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let v = self.value(a).map(softplus_scalar);
        let rg = self.rg(a);
        self.push(Op::Softplus(a), v, rg)
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        assert!(lo <= hi, "clamp bounds out of order");
        let v = self.value(a).map(|x| x.clamp(lo, hi));
        let rg = self.rg(a);
        self.push(Op::Clamp(a, lo, hi), v, rg)
    }

    // ---- linear algebra ----

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.rank(), 2, "matmul lhs must be rank 2");
        assert_eq!(tb.rank(), 2, "matmul rhs must be rank 2");
        assert_eq!(
            ta.cols(),
            tb.rows(),
            "matmul inner dimensions differ: {:?} x {:?}",
            ta.shape(),
            tb.shape()
        );
        let v = matmul_values(ta, tb);
        let rg = self.rg2(a, b);
        self.push(Op::Matmul(a, b), v, rg)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let t = self.value(a);
        assert_eq!(t.rank(), 2, "transpose requires rank 2");
        let (n, m) = (t.rows(), t.cols());
        let mut out = vec![0.0; n * m];
        let d = t.data();
        for i in 0..n {
            for j in 0..m {
                out[j * n + i] = d[i * m + j];
            }
        }
        let rg = self.rg(a);
        self.push(Op::Transpose(a), Tensor::matrix(m, n, out), rg)
    }

    pub fn add_bias(&mut self, a: Var, bias: Var) -> Var {
        let (t, b) = (self.value(a), self.value(bias));
        assert_eq!(t.rank(), 2, "add_bias input must be rank 2");
        assert_eq!(
            b.shape(),
            &[1, t.cols()],
            "bias shape {:?} does not match input {:?}",
            b.shape(),
            t.shape()
        );
        let (n, m) = (t.rows(), t.cols());
        let mut out = Vec::with_capacity(n * m);
        let (d, bd) = (t.data(), b.data());
        for i in 0..n {
            for j in 0..m {
                out.push(d[i * m + j] + bd[j]);
            }
        }
        let rg = self.rg2(a, bias);
        self.push(Op::AddBias(a, bias), Tensor::matrix(n, m, out), rg)
    }

    // ---- reductions and broadcasts ----

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).data().iter().sum();
        let rg = self.rg(a);
        self.push(Op::SumAll(a), Tensor::scalar(s), rg)
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let t = self.value(a);
        assert!(!t.is_empty(), "mean_all of empty tensor");
        let s: f64 = t.data().iter().sum::<f64>() / t.len() as f64;
        let rg = self.rg(a);
        self.push(Op::MeanAll(a), Tensor::scalar(s), rg)
    }

    pub fn row_sum(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let (n, m) = (t.rows(), t.cols());
        let d = t.data();
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            out.push(d[i * m..(i + 1) * m].iter().sum());
        }
        let rg = self.rg(a);
        self.push(Op::RowSum(a), Tensor::matrix(n, 1, out), rg)
    }

    pub fn col_sum(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let (n, m) = (t.rows(), t.cols());
        let d = t.data();
        let mut out = vec![0.0; m];
        for i in 0..n {
            for j in 0..m {
                out[j] += d[i * m + j];
            }
        }
        let rg = self.rg(a);
        self.push(Op::ColSum(a), Tensor::matrix(1, m, out), rg)
    }

    pub fn broadcast_rows(&mut self, a: Var, n: usize) -> Var {
        let t = self.value(a);
        assert_eq!(t.rows(), 1, "broadcast_rows input must be [1, m]");
        let m = t.cols();
        let mut out = Vec::with_capacity(n * m);
        for _ in 0..n {
            out.extend_from_slice(t.data());
        }
        let rg = self.rg(a);
        self.push(Op::BroadcastRows(a, n), Tensor::matrix(n, m, out), rg)
    }

    pub fn broadcast_cols(&mut self, a: Var, m: usize) -> Var {
        let t = self.value(a);
        assert_eq!(t.cols(), 1, "broadcast_cols input must be [n, 1]");
        let n = t.rows();
        let d = t.data();
        let mut out = Vec::with_capacity(n * m);
        for i in 0..n {
            for _ in 0..m {
                out.push(d[i]);
            }
        }
        let rg = self.rg(a);
        self.push(Op::BroadcastCols(a, m), Tensor::matrix(n, m, out), rg)
    }

    pub fn broadcast_scalar(&mut self, a: Var, shape: Vec<usize>) -> Var {
        let t = self.value(a);
        assert_eq!(t.len(), 1, "broadcast_scalar input must be a scalar");
        let v = Tensor::full(shape.clone(), t.data()[0]);
        let rg = self.rg(a);
        self.push(Op::BroadcastScalar(a, shape), v, rg)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let (n, m) = (t.rows(), t.cols());
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            crate::tensor::softmax_slice(t.row(i), &mut out[i * m..(i + 1) * m]);
        }
        let rg = self.rg(a);
        self.push(Op::SoftmaxRows(a), Tensor::matrix(n, m, out), rg)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.rows(), tb.rows(), "concat_cols row counts differ");
        let (n, p, q) = (ta.rows(), ta.cols(), tb.cols());
        let mut out = Vec::with_capacity(n * (p + q));
        for i in 0..n {
            out.extend_from_slice(ta.row(i));
            out.extend_from_slice(tb.row(i));
        }
        let rg = self.rg2(a, b);
        self.push(Op::ConcatCols(a, b), Tensor::matrix(n, p + q, out), rg)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let t = self.value(a);
        let (n, m) = (t.rows(), t.cols());
        assert!(start + len <= m, "slice_cols out of range");
        let mut out = Vec::with_capacity(n * len);
        for i in 0..n {
            out.extend_from_slice(&t.row(i)[start..start + len]);
        }
        let rg = self.rg(a);
        self.push(Op::SliceCols(a, start, len), Tensor::matrix(n, len, out), rg)
    }

    pub fn pad_cols(&mut self, a: Var, left: usize, right: usize) -> Var {
        let t = self.value(a);
        let (n, m) = (t.rows(), t.cols());
        let w = left + m + right;
        let mut out = vec![0.0; n * w];
        for i in 0..n {
            out[i * w + left..i * w + left + m].copy_from_slice(t.row(i));
        }
        let rg = self.rg(a);
        self.push(Op::PadCols(a, left, right), Tensor::matrix(n, w, out), rg)
    }

    pub fn row_max_detached(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let n = t.rows();
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            out.push(t.row(i).iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        }
        self.push(Op::RowMaxDetached(a), Tensor::matrix(n, 1, out), false)
    }

    pub fn repeat_rows(&mut self, a: Var, k: usize) -> Var {
        let t = self.value(a);
        let (n, m) = (t.rows(), t.cols());
        let mut out = Vec::with_capacity(n * k * m);
        for i in 0..n {
            for _ in 0..k {
                out.extend_from_slice(t.row(i));
            }
        }
        let rg = self.rg(a);
        self.push(Op::RepeatRows(a, k), Tensor::matrix(n * k, m, out), rg)
    }

    pub fn sum_row_blocks(&mut self, a: Var, k: usize) -> Var {
        let t = self.value(a);
        let (nk, m) = (t.rows(), t.cols());
        assert_eq!(nk % k, 0, "sum_row_blocks: rows not divisible by block");
        let n = nk / k;
        let d = t.data();
        let mut out = vec![0.0; n * m];
        for i in 0..nk {
            let o = (i / k) * m;
            for j in 0..m {
                out[o + j] += d[i * m + j];
            }
        }
        let rg = self.rg(a);
        self.push(Op::SumRowBlocks(a, k), Tensor::matrix(n, m, out), rg)
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Var {
        let t = self.value(a).clone().reshape(shape.clone());
        let rg = self.rg(a);
        self.push(Op::Reshape(a, shape), t, rg)
    }

    /// Row-wise `ln softmax` via the max-shifted log-sum-exp composition.
    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let m = self.value(a).cols();
        let mx = self.row_max_detached(a);
        let mxb = self.broadcast_cols(mx, m);
        let shifted = self.sub(a, mxb);
        let e = self.exp(shifted);
        let s = self.row_sum(e);
        let ls = self.ln(s);
        let lse = self.add(ls, mx);
        let lseb = self.broadcast_cols(lse, m);
        self.sub(a, lseb)
    }

    // ---- differentiation ----

    /// Gradient of a scalar `loss` with respect to each var in `wrt`.
    ///
    /// Adjoints are emitted as graph nodes; with `create_graph` they carry
    /// `requires_grad` so a second `grad` call can differentiate through them.
    /// Vars not reachable from the loss get a zero gradient.
    pub fn grad(&mut self, loss: Var, wrt: &[Var], create_graph: bool) -> Result<Vec<Var>> {
        self.check_finite()?;
        if self.value(loss).len() != 1 {
            return Err(Error::ShapeMismatch {
                context: "grad: loss must be scalar",
                expected: vec![1],
                got: self.value(loss).shape().to_vec(),
            });
        }

        let mut adjoint: Vec<Option<Var>> = vec![None; loss.0 + 1];
        let seed = self.constant_scalar(1.0);
        adjoint[loss.0] = Some(seed);

        for id in (0..=loss.0).rev() {
            let Some(up) = adjoint[id] else { continue };
            if !self.nodes[id].requires_grad {
                continue;
            }
            let op = self.nodes[id].op.clone();
            let contributions = self.vjp(&op, Var(id), up);
            for (input, contrib) in contributions {
                if !self.nodes[input.0].requires_grad {
                    continue;
                }
                adjoint[input.0] = Some(match adjoint[input.0] {
                    Some(existing) => self.add(existing, contrib),
                    None => contrib,
                });
            }
        }

        let mut out = Vec::with_capacity(wrt.len());
        for &w in wrt {
            let g = match adjoint.get(w.0).copied().flatten() {
                Some(v) => v,
                None => {
                    let shape = self.value(w).shape().to_vec();
                    self.constant(Tensor::zeros(shape))
                }
            };
            out.push(g);
        }
        self.check_finite()?;
        if !create_graph {
            for &g in &out {
                self.nodes[g.0].requires_grad = false;
            }
        }
        Ok(out)
    }

    /// Gradient values for each `wrt` var (no graph kept).
    pub fn grad_values(&mut self, loss: Var, wrt: &[Var]) -> Result<Vec<Tensor>> {
        let vars = self.grad(loss, wrt, false)?;
        Ok(vars.into_iter().map(|v| self.value(v).clone()).collect())
    }

    /// Vector-Jacobian product of one op, emitted as graph nodes.
    fn vjp(&mut self, op: &Op, out: Var, up: Var) -> Vec<(Var, Var)> {
        match *op {
            Op::Leaf | Op::Constant | Op::RowMaxDetached(_) => vec![],
            Op::Add(a, b) => vec![(a, up), (b, up)],
            Op::Sub(a, b) => {
                let nb = self.neg(up);
                vec![(a, up), (b, nb)]
            }
            Op::Mul(a, b) => {
                let da = self.mul(up, b);
                let db = self.mul(up, a);
                vec![(a, da), (b, db)]
            }
            Op::Div(a, b) => {
                let da = self.div(up, b);
                let ratio = self.div(out, b);
                let prod = self.mul(up, ratio);
                let db = self.neg(prod);
                vec![(a, da), (b, db)]
            }
            Op::AddScalar(a, _) => vec![(a, up)],
            Op::MulScalar(a, s) => {
                let da = self.mul_scalar(up, s);
                vec![(a, da)]
            }
            Op::Neg(a) => {
                let da = self.neg(up);
                vec![(a, da)]
            }
            Op::Matmul(a, b) => {
                let bt = self.transpose(b);
                let da = self.matmul(up, bt);
                let at = self.transpose(a);
                let db = self.matmul(at, up);
                vec![(a, da), (b, db)]
            }
            Op::Transpose(a) => {
                let da = self.transpose(up);
                vec![(a, da)]
            }
            Op::AddBias(a, bias) => {
                let db = self.col_sum(up);
                vec![(a, up), (bias, db)]
            }
            Op::Relu(a) => {
                let mask = self.constant(self.value(a).map(|x| if x > 0.0 { 1.0 } else { 0.0 }));
                let da = self.mul(up, mask);
                vec![(a, da)]
            }
            Op::Sigmoid(a) => {
                // y' = y (1 - y), through the saved output so it stays differentiable
                let ny = self.neg(out);
                let onemy = self.add_scalar(ny, 1.0);
                let d = self.mul(out, onemy);
                let da = self.mul(up, d);
                vec![(a, da)]
            }
            Op::Tanh(a) => {
                let y2 = self.square(out);
                let ny2 = self.neg(y2);
                let d = self.add_scalar(ny2, 1.0);
                let da = self.mul(up, d);
                vec![(a, da)]
            }
            Op::Exp(a) => {
                let da = self.mul(up, out);
                vec![(a, da)]
            }
            Op::Ln(a) => {
                let da = self.div(up, a);
                vec![(a, da)]
            }
            Op::Square(a) => {
                let two_a = self.mul_scalar(a, 2.0);
                let da = self.mul(up, two_a);
                vec![(a, da)]
            }
            Op::Softplus(a) => {
                let s = self.sigmoid(a);
                let da = self.mul(up, s);
                vec![(a, da)]
            }
            Op::Clamp(a, lo, hi) => {
                let mask = self.constant(
                    self.value(a)
                        .map(|x| if (lo..=hi).contains(&x) { 1.0 } else { 0.0 }),
                );
                let da = self.mul(up, mask);
                vec![(a, da)]
            }
            Op::SumAll(a) => {
                let shape = self.value(a).shape().to_vec();
                let da = self.broadcast_scalar(up, shape);
                vec![(a, da)]
            }
            Op::MeanAll(a) => {
                let shape = self.value(a).shape().to_vec();
                let n = self.value(a).len() as f64;
                let scaled = self.mul_scalar(up, 1.0 / n);
                let da = self.broadcast_scalar(scaled, shape);
                vec![(a, da)]
            }
            Op::RowSum(a) => {
                let m = self.value(a).cols();
                let da = self.broadcast_cols(up, m);
                vec![(a, da)]
            }
            Op::ColSum(a) => {
                let n = self.value(a).rows();
                let da = self.broadcast_rows(up, n);
                vec![(a, da)]
            }
            Op::BroadcastRows(a, _) => {
                let da = self.col_sum(up);
                vec![(a, da)]
            }
            Op::BroadcastCols(a, _) => {
                let da = self.row_sum(up);
                vec![(a, da)]
            }
            Op::BroadcastScalar(a, _) => {
                let da = self.sum_all(up);
                vec![(a, da)]
            }
            Op::SoftmaxRows(a) => {
                // ds = s * (up - rowsum(up * s))
                let us = self.mul(up, out);
                let rs = self.row_sum(us);
                let m = self.value(a).cols();
                let rsb = self.broadcast_cols(rs, m);
                let centered = self.sub(up, rsb);
                let da = self.mul(out, centered);
                vec![(a, da)]
            }
            Op::ConcatCols(a, b) => {
                let p = self.value(a).cols();
                let q = self.value(b).cols();
                let da = self.slice_cols(up, 0, p);
                let db = self.slice_cols(up, p, q);
                vec![(a, da), (b, db)]
            }
            Op::SliceCols(a, start, len) => {
                let m = self.value(a).cols();
                let da = self.pad_cols(up, start, m - start - len);
                vec![(a, da)]
            }
            Op::PadCols(a, left, _) => {
                let m = self.value(a).cols();
                let da = self.slice_cols(up, left, m);
                vec![(a, da)]
            }
            Op::RepeatRows(a, k) => {
                let da = self.sum_row_blocks(up, k);
                vec![(a, da)]
            }
            Op::SumRowBlocks(a, k) => {
                let da = self.repeat_rows(up, k);
                vec![(a, da)]
            }
            Op::Reshape(a, _) => {
                let shape = self.value(a).shape().to_vec();
                let da = self.reshape(up, shape);
                vec![(a, da)]
            }
        }
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a
        .data()
        .iter()
        .zip(b.data().iter())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Tensor::new(a.shape().to_vec(), data)
}

fn matmul_values(a: &Tensor, b: &Tensor) -> Tensor {
    let (n, k) = (a.rows(), a.cols());
    let m = b.cols();
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let arow = &ad[i * k..(i + 1) * k];
        let orow = &mut out[i * m..(i + 1) * m];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &bd[p * m..(p + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow.iter()) {
                *o += av * bv;
            }
        }
    }
    Tensor::matrix(n, m, out)
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Constant => "constant",
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::Div(..) => "div",
        Op::AddScalar(..) => "add_scalar",
        Op::MulScalar(..) => "mul_scalar",
        Op::Neg(..) => "neg",
        Op::Matmul(..) => "matmul",
        Op::Transpose(..) => "transpose",
        Op::AddBias(..) => "add_bias",
        Op::Relu(..) => "relu",
        Op::Sigmoid(..) => "sigmoid",
        Op::Tanh(..) => "tanh",
        Op::Exp(..) => "exp",
        Op::Ln(..) => "ln",
        Op::Square(..) => "square",
        Op::Softplus(..) => "softplus",
        Op::Clamp(..) => "clamp",
        Op::SumAll(..) => "sum_all",
        Op::MeanAll(..) => "mean_all",
        Op::RowSum(..) => "row_sum",
        Op::ColSum(..) => "col_sum",
        Op::BroadcastRows(..) => "broadcast_rows",
        Op::BroadcastCols(..) => "broadcast_cols",
        Op::BroadcastScalar(..) => "broadcast_scalar",
        Op::SoftmaxRows(..) => "softmax_rows",
        Op::ConcatCols(..) => "concat_cols",
        Op::SliceCols(..) => "slice_cols",
        Op::PadCols(..) => "pad_cols",
        Op::RowMaxDetached(..) => "row_max_detached",
        Op::RepeatRows(..) => "repeat_rows",
        Op::SumRowBlocks(..) => "sum_row_blocks",
        Op::Reshape(..) => "reshape",
    }
}
