//! Reverse-mode automatic differentiation on a linear tape.
//!
//! A [`Graph`] records every operation applied to [`Var`] handles. Calling
//! [`Graph::backward`] walks the tape in reverse and accumulates gradients
//! for every node that transitively depends on a trainable leaf. Parameters
//! bound while [`Graph::set_grad_enabled`] is `false` become constants, which
//! is how a component is held fixed while gradients still flow through it.

use std::collections::HashMap;
use std::rc::Rc;

use super::param::Param;
use super::tensor::{gemm, Tensor};

/// Handle to a node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Exp(Var),
    Log(Var),
    Abs(Var),
    Clamp(Var, f64, f64),
    SoftmaxRows(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    Transpose(Var),
    SumAll(Var),
    SumCols(Var),
    SumRows(Var),
    RowNorm(Var),
    ShiftRows(Var, isize),
    GatherRows(Var, Rc<Vec<usize>>),
    Blend(Var, Var, Rc<Tensor>),
    LayerNorm(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    /// Op-specific cache (per-row inverse std for layer norm).
    aux: Option<Vec<f64>>,
}

/// The tape.
pub struct Graph {
    nodes: Vec<Node>,
    grad_enabled: bool,
    params: HashMap<usize, Var>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: HashMap<usize, Var>,
}

impl Gradients {
    pub fn of(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of a bound parameter. `None` if the parameter was not bound
    /// as trainable or did not influence the loss.
    pub fn param(&self, p: &Param) -> Option<&Tensor> {
        self.params.get(&param_key(p)).and_then(|v| self.of(*v))
    }
}

fn param_key(p: &Param) -> usize {
    &p.value as *const Tensor as usize
}

impl Graph {
    pub fn new() -> Self {
        Self {
            nodes: Vec::with_capacity(1024),
            grad_enabled: true,
            params: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn set_grad_enabled(&mut self, enabled: bool) {
        self.grad_enabled = enabled;
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad_enabled
    }

    /// Runs `f` with parameter binding in constant mode.
    pub fn frozen<T>(&mut self, f: impl FnOnce(&mut Graph) -> T) -> T {
        let prev = self.grad_enabled;
        self.grad_enabled = false;
        let out = f(self);
        self.grad_enabled = prev;
        out
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            aux: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// A constant input.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Binds a parameter. Repeated binds within one graph return the same
    /// node; the first bind decides whether it is trainable.
    pub fn param(&mut self, p: &Param) -> Var {
        let key = param_key(p);
        if let Some(v) = self.params.get(&key) {
            return *v;
        }
        let trainable = self.grad_enabled;
        let v = self.push(p.value.clone(), Op::Leaf, trainable);
        self.params.insert(key, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul(self.value(b));
        let rg = self.rg(&[a, b]);
        self.push(out, Op::MatMul(a, b), rg)
    }

    fn zip(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "elementwise shape mismatch");
        Tensor::from_vec(
            va.rows,
            va.cols,
            va.data.iter().zip(&vb.data).map(|(x, y)| f(*x, *y)).collect(),
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip(a, b, |x, y| x + y);
        let rg = self.rg(&[a, b]);
        self.push(out, Op::Add(a, b), rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip(a, b, |x, y| x - y);
        let rg = self.rg(&[a, b]);
        self.push(out, Op::Sub(a, b), rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.zip(a, b, |x, y| x * y);
        let rg = self.rg(&[a, b]);
        self.push(out, Op::Mul(a, b), rg)
    }

    /// Adds a `1 x c` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(row));
        assert_eq!((1, va.cols), vb.shape(), "add_row shape mismatch");
        let mut out = va.clone();
        for r in 0..out.rows {
            for (x, y) in out.row_mut(r).iter_mut().zip(&vb.data) {
                *x += y;
            }
        }
        let rg = self.rg(&[a, row]);
        self.push(out, Op::AddRow(a, row), rg)
    }

    /// Multiplies every row of `a` elementwise by a `1 x c` row.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(row));
        assert_eq!((1, va.cols), vb.shape(), "mul_row shape mismatch");
        let mut out = va.clone();
        for r in 0..out.rows {
            for (x, y) in out.row_mut(r).iter_mut().zip(&vb.data) {
                *x *= y;
            }
        }
        let rg = self.rg(&[a, row]);
        self.push(out, Op::MulRow(a, row), rg)
    }

    /// Scales row `r` of `a` by `col[r]` (`col` is `r x 1`).
    pub fn mul_col(&mut self, a: Var, col: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(col));
        assert_eq!((va.rows, 1), vb.shape(), "mul_col shape mismatch");
        let mut out = va.clone();
        for r in 0..out.rows {
            let s = vb.data[r];
            for x in out.row_mut(r) {
                *x *= s;
            }
        }
        let rg = self.rg(&[a, col]);
        self.push(out, Op::MulCol(a, col), rg)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a).map(|x| x * k);
        let rg = self.rg(&[a]);
        self.push(out, Op::Scale(a, k), rg)
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a).map(|x| x + k);
        let rg = self.rg(&[a]);
        self.push(out, Op::AddScalar(a), rg)
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out = self.value(a).map(f);
        let rg = self.rg(&[a]);
        self.push(out, op, rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, f64::ln, Op::Log(a))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        self.unary(a, f64::abs, Op::Abs(a))
    }

    /// Clamps into `[lo, hi]`; the gradient is zero where clamping is active.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.unary(a, |x| x.clamp(lo, hi), Op::Clamp(a, lo, hi))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for r in 0..out.rows {
            softmax_in_place(out.row_mut(r));
        }
        let rg = self.rg(&[a]);
        self.push(out, Op::SoftmaxRows(a), rg)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|p| self.value(*p).cols).sum();
        let mut out = Tensor::zeros(rows, cols);
        let mut off = 0;
        for p in parts {
            let v = self.value(*p);
            assert_eq!(v.rows, rows, "concat_cols row mismatch");
            for r in 0..rows {
                out.row_mut(r)[off..off + v.cols].copy_from_slice(v.row(r));
            }
            off += v.cols;
        }
        let rg = self.rg(parts);
        self.push(out, Op::ConcatCols(parts.to_vec()), rg)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols;
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            let v = self.value(*p);
            assert_eq!(v.cols, cols, "concat_rows col mismatch");
            data.extend_from_slice(&v.data);
            rows += v.rows;
        }
        let rg = self.rg(parts);
        self.push(Tensor::from_vec(rows, cols, data), Op::ConcatRows(parts.to_vec()), rg)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, width: usize) -> Var {
        let v = self.value(a);
        assert!(start + width <= v.cols, "slice_cols out of range");
        let mut out = Tensor::zeros(v.rows, width);
        for r in 0..v.rows {
            out.row_mut(r).copy_from_slice(&v.row(r)[start..start + width]);
        }
        let rg = self.rg(&[a]);
        self.push(out, Op::SliceCols(a, start), rg)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, count: usize) -> Var {
        let v = self.value(a);
        assert!(start + count <= v.rows, "slice_rows out of range");
        let out = Tensor::from_vec(
            count,
            v.cols,
            v.data[start * v.cols..(start + count) * v.cols].to_vec(),
        );
        let rg = self.rg(&[a]);
        self.push(out, Op::SliceRows(a, start), rg)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        let rg = self.rg(&[a]);
        self.push(out, Op::Transpose(a), rg)
    }

    /// Sum of all entries, as a `1 x 1` tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        let rg = self.rg(&[a]);
        self.push(out, Op::SumAll(a), rg)
    }

    /// Per-row sums, `r x 1`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let data = (0..v.rows).map(|r| v.row(r).iter().sum()).collect();
        let out = Tensor::from_vec(v.rows, 1, data);
        let rg = self.rg(&[a]);
        self.push(out, Op::SumCols(a), rg)
    }

    /// Per-column sums, `1 x c`.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let mut out = Tensor::zeros(1, v.cols);
        for r in 0..v.rows {
            for (o, x) in out.data.iter_mut().zip(v.row(r)) {
                *o += x;
            }
        }
        let rg = self.rg(&[a]);
        self.push(out, Op::SumRows(a), rg)
    }

    /// Euclidean norm of each row, `r x 1`. The gradient at a zero row is 0.
    pub fn row_norm(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let data = (0..v.rows)
            .map(|r| v.row(r).iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect();
        let out = Tensor::from_vec(v.rows, 1, data);
        let rg = self.rg(&[a]);
        self.push(out, Op::RowNorm(a), rg)
    }

    /// Output row `t` is input row `t + offset`, zero outside the input.
    pub fn shift_rows(&mut self, a: Var, offset: isize) -> Var {
        let v = self.value(a);
        let mut out = Tensor::zeros(v.rows, v.cols);
        for t in 0..v.rows {
            let src = t as isize + offset;
            if src >= 0 && (src as usize) < v.rows {
                out.row_mut(t).copy_from_slice(v.row(src as usize));
            }
        }
        let rg = self.rg(&[a]);
        self.push(out, Op::ShiftRows(a, offset), rg)
    }

    /// Row lookup (embedding tables).
    pub fn gather_rows(&mut self, table: Var, index: &[usize]) -> Var {
        let v = self.value(table);
        let mut out = Tensor::zeros(index.len(), v.cols);
        for (i, &k) in index.iter().enumerate() {
            out.row_mut(i).copy_from_slice(v.row(k));
        }
        let rg = self.rg(&[table]);
        self.push(out, Op::GatherRows(table, Rc::new(index.to_vec())), rg)
    }

    /// `mask * new + (1 - mask) * old` with a constant `r x 1` mask.
    pub fn blend(&mut self, new: Var, old: Var, mask: Rc<Tensor>) -> Var {
        let (vn, vo) = (self.value(new), self.value(old));
        assert_eq!(vn.shape(), vo.shape(), "blend shape mismatch");
        assert_eq!(mask.shape(), (vn.rows, 1), "blend mask shape mismatch");
        let mut out = vo.clone();
        for r in 0..out.rows {
            let m = mask.data[r];
            if m != 0.0 {
                for (o, n) in out.row_mut(r).iter_mut().zip(vn.row(r)) {
                    *o = m * n + (1.0 - m) * *o;
                }
            }
        }
        let rg = self.rg(&[new, old]);
        self.push(out, Op::Blend(new, old, mask), rg)
    }

    /// Normalizes each row to zero mean and unit variance.
    pub fn layer_norm(&mut self, a: Var, eps: f64) -> Var {
        let v = self.value(a);
        let n = v.cols as f64;
        let mut out = v.clone();
        let mut inv = Vec::with_capacity(v.rows);
        for r in 0..v.rows {
            let row = out.row_mut(r);
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            let is = 1.0 / (var + eps).sqrt();
            for x in row.iter_mut() {
                *x = (*x - mean) * is;
            }
            inv.push(is);
        }
        let rg = self.rg(&[a]);
        let var = self.push(out, Op::LayerNorm(a), rg);
        self.nodes[var.0].aux = Some(inv);
        var
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.shape(loss), (1, 1), "backward requires a scalar loss");
        let mut grads: Vec<Option<Tensor>> = Vec::new();
        grads.resize_with(self.nodes.len(), || None);
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Gradients {
            grads,
            params: self.params.clone(),
        }
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.requires_grad(*a) {
                    let vb = self.value(*b);
                    let mut ga = Tensor::zeros(g.rows, vb.rows);
                    gemm(g, false, vb, true, &mut ga, 0.0);
                    self.acc(grads, *a, ga);
                }
                if self.requires_grad(*b) {
                    let va = self.value(*a);
                    let mut gb = Tensor::zeros(va.cols, g.cols);
                    gemm(va, true, g, false, &mut gb, 0.0);
                    self.acc(grads, *b, gb);
                }
            }
            Op::Add(a, b) => {
                self.acc_ref(grads, *a, g, 1.0);
                self.acc_ref(grads, *b, g, 1.0);
            }
            Op::Sub(a, b) => {
                self.acc_ref(grads, *a, g, 1.0);
                self.acc_ref(grads, *b, g, -1.0);
            }
            Op::Mul(a, b) => {
                if self.requires_grad(*a) {
                    let vb = self.value(*b);
                    self.acc(grads, *a, zip_t(g, vb, |x, y| x * y));
                }
                if self.requires_grad(*b) {
                    let va = self.value(*a);
                    self.acc(grads, *b, zip_t(g, va, |x, y| x * y));
                }
            }
            Op::AddRow(a, row) => {
                self.acc_ref(grads, *a, g, 1.0);
                if self.requires_grad(*row) {
                    self.acc(grads, *row, col_sums(g));
                }
            }
            Op::MulRow(a, row) => {
                let vr = self.value(*row);
                if self.requires_grad(*a) {
                    let mut ga = g.clone();
                    for r in 0..ga.rows {
                        for (x, y) in ga.row_mut(r).iter_mut().zip(&vr.data) {
                            *x *= y;
                        }
                    }
                    self.acc(grads, *a, ga);
                }
                if self.requires_grad(*row) {
                    let va = self.value(*a);
                    self.acc(grads, *row, col_sums(&zip_t(g, va, |x, y| x * y)));
                }
            }
            Op::MulCol(a, col) => {
                let vc = self.value(*col);
                if self.requires_grad(*a) {
                    let mut ga = g.clone();
                    for r in 0..ga.rows {
                        let s = vc.data[r];
                        for x in ga.row_mut(r) {
                            *x *= s;
                        }
                    }
                    self.acc(grads, *a, ga);
                }
                if self.requires_grad(*col) {
                    let va = self.value(*a);
                    let data = (0..g.rows)
                        .map(|r| g.row(r).iter().zip(va.row(r)).map(|(x, y)| x * y).sum())
                        .collect();
                    self.acc(grads, *col, Tensor::from_vec(g.rows, 1, data));
                }
            }
            Op::Scale(a, k) => self.acc_ref(grads, *a, g, *k),
            Op::AddScalar(a) => self.acc_ref(grads, *a, g, 1.0),
            Op::Sigmoid(a) => self.acc(grads, *a, zip_t(g, out, |g, y| g * y * (1.0 - y))),
            Op::Tanh(a) => self.acc(grads, *a, zip_t(g, out, |g, y| g * (1.0 - y * y))),
            Op::Relu(a) => {
                self.acc(grads, *a, zip_t(g, out, |g, y| if y > 0.0 { g } else { 0.0 }))
            }
            Op::Exp(a) => self.acc(grads, *a, zip_t(g, out, |g, y| g * y)),
            Op::Log(a) => {
                let va = self.value(*a);
                self.acc(grads, *a, zip_t(g, va, |g, x| g / x));
            }
            Op::Abs(a) => {
                let va = self.value(*a);
                self.acc(grads, *a, zip_t(g, va, |g, x| g * sign(x)));
            }
            Op::Clamp(a, lo, hi) => {
                let va = self.value(*a);
                let (lo, hi) = (*lo, *hi);
                self.acc(
                    grads,
                    *a,
                    zip_t(g, va, |g, x| if x >= lo && x <= hi { g } else { 0.0 }),
                );
            }
            Op::SoftmaxRows(a) => {
                let mut ga = Tensor::zeros(g.rows, g.cols);
                for r in 0..g.rows {
                    let (gy, y) = (g.row(r), out.row(r));
                    let dot: f64 = gy.iter().zip(y).map(|(a, b)| a * b).sum();
                    for ((o, gi), yi) in ga.row_mut(r).iter_mut().zip(gy).zip(y) {
                        *o = yi * (gi - dot);
                    }
                }
                self.acc(grads, *a, ga);
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for p in parts {
                    let w = self.value(*p).cols;
                    if self.requires_grad(*p) {
                        let mut gp = Tensor::zeros(g.rows, w);
                        for r in 0..g.rows {
                            gp.row_mut(r).copy_from_slice(&g.row(r)[off..off + w]);
                        }
                        self.acc(grads, *p, gp);
                    }
                    off += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for p in parts {
                    let h = self.value(*p).rows;
                    if self.requires_grad(*p) {
                        let gp = Tensor::from_vec(
                            h,
                            g.cols,
                            g.data[off * g.cols..(off + h) * g.cols].to_vec(),
                        );
                        self.acc(grads, *p, gp);
                    }
                    off += h;
                }
            }
            Op::SliceCols(a, start) => {
                let va = self.value(*a);
                let mut ga = Tensor::zeros(va.rows, va.cols);
                for r in 0..g.rows {
                    ga.row_mut(r)[*start..*start + g.cols].copy_from_slice(g.row(r));
                }
                self.acc(grads, *a, ga);
            }
            Op::SliceRows(a, start) => {
                let va = self.value(*a);
                let mut ga = Tensor::zeros(va.rows, va.cols);
                ga.data[start * va.cols..(start + g.rows) * va.cols].copy_from_slice(&g.data);
                self.acc(grads, *a, ga);
            }
            Op::Transpose(a) => self.acc(grads, *a, g.transpose()),
            Op::SumAll(a) => {
                let va = self.value(*a);
                self.acc(grads, *a, Tensor::filled(va.rows, va.cols, g.item()));
            }
            Op::SumCols(a) => {
                let va = self.value(*a);
                let mut ga = Tensor::zeros(va.rows, va.cols);
                for r in 0..va.rows {
                    ga.row_mut(r).fill(g.data[r]);
                }
                self.acc(grads, *a, ga);
            }
            Op::SumRows(a) => {
                let va = self.value(*a);
                let mut ga = Tensor::zeros(va.rows, va.cols);
                for r in 0..va.rows {
                    ga.row_mut(r).copy_from_slice(&g.data);
                }
                self.acc(grads, *a, ga);
            }
            Op::RowNorm(a) => {
                let va = self.value(*a);
                let mut ga = Tensor::zeros(va.rows, va.cols);
                for r in 0..va.rows {
                    let n = out.data[r];
                    if n > 0.0 {
                        let s = g.data[r] / n;
                        for (o, x) in ga.row_mut(r).iter_mut().zip(va.row(r)) {
                            *o = s * x;
                        }
                    }
                }
                self.acc(grads, *a, ga);
            }
            Op::ShiftRows(a, offset) => {
                let mut ga = Tensor::zeros(g.rows, g.cols);
                for t in 0..g.rows {
                    let src = t as isize + offset;
                    if src >= 0 && (src as usize) < g.rows {
                        ga.row_mut(src as usize).copy_from_slice(g.row(t));
                    }
                }
                self.acc(grads, *a, ga);
            }
            Op::GatherRows(table, index) => {
                let vt = self.value(*table);
                let mut gt = Tensor::zeros(vt.rows, vt.cols);
                for (i, &k) in index.iter().enumerate() {
                    for (o, x) in gt.row_mut(k).iter_mut().zip(g.row(i)) {
                        *o += x;
                    }
                }
                self.acc(grads, *table, gt);
            }
            Op::Blend(new, old, mask) => {
                if self.requires_grad(*new) {
                    let mut gn = g.clone();
                    for r in 0..gn.rows {
                        let m = mask.data[r];
                        for x in gn.row_mut(r) {
                            *x *= m;
                        }
                    }
                    self.acc(grads, *new, gn);
                }
                if self.requires_grad(*old) {
                    let mut go = g.clone();
                    for r in 0..go.rows {
                        let m = 1.0 - mask.data[r];
                        for x in go.row_mut(r) {
                            *x *= m;
                        }
                    }
                    self.acc(grads, *old, go);
                }
            }
            Op::LayerNorm(a) => {
                let inv = node.aux.as_ref().expect("layer norm cache");
                let n = g.cols as f64;
                let mut ga = Tensor::zeros(g.rows, g.cols);
                for r in 0..g.rows {
                    let (gy, y) = (g.row(r), out.row(r));
                    let mean_g = gy.iter().sum::<f64>() / n;
                    let mean_gy = gy.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / n;
                    for ((o, gi), yi) in ga.row_mut(r).iter_mut().zip(gy).zip(y) {
                        *o = inv[r] * (gi - mean_g - yi * mean_gy);
                    }
                }
                self.acc(grads, *a, ga);
            }
        }
    }

    fn acc(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.requires_grad(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    fn acc_ref(&self, grads: &mut [Option<Tensor>], v: Var, g: &Tensor, k: f64) {
        if !self.requires_grad(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => {
                for (e, x) in existing.data.iter_mut().zip(&g.data) {
                    *e += k * x;
                }
            }
            slot => *slot = Some(if k == 1.0 { g.clone() } else { g.map(|x| k * x) }),
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

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        total += *x;
    }
    for x in row.iter_mut() {
        *x /= total;
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn zip_t(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    Tensor::from_vec(
        a.rows,
        a.cols,
        a.data.iter().zip(&b.data).map(|(x, y)| f(*x, *y)).collect(),
    )
}

fn col_sums(g: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(1, g.cols);
    for r in 0..g.rows {
        for (o, x) in out.data.iter_mut().zip(g.row(r)) {
            *o += x;
        }
    }
    out
}
