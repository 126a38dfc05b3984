use super::Tensor;
use crate::error::{Error, Result};
use crate::manifold::EPS_BALL;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var, transpose_b: bool },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Tanh(Var),
    Artanh(Var),
    Sinh(Var),
    Asinh(Var),
    Exp(Var),
    Log { a: Var, floor: f64 },
    SumCols(Var),
    Sum(Var),
    Mean(Var),
    Norm(Var),
    Concat(Vec<Var>),
    SliceCols { a: Var, start: usize },
    SliceRows { a: Var, start: usize },
    Project { a: Var, max_norm: f64 },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Append-only record of a forward computation.
///
/// Every node's parents precede it, so a single reverse sweep visits each node
/// once. A tape belongs to one thread; build a fresh one per step.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    clamp_events: usize,
    non_finite: Option<String>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<[usize; 2]>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    /// Gradient with respect to `v`, zeros when `v` does not reach the loss.
    pub fn wrt(&self, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let [r, c] = self.shapes[v.0];
                Tensor::zeros(r, c)
            }
        }
    }
}

fn broadcast_shape(a: [usize; 2], b: [usize; 2]) -> Option<[usize; 2]> {
    let dim = |x: usize, y: usize| {
        if x == y || y == 1 {
            Some(x)
        } else if x == 1 {
            Some(y)
        } else {
            None
        }
    };
    Some([dim(a[0], b[0])?, dim(a[1], b[1])?])
}

fn broadcast_zip(a: &Tensor, b: &Tensor, shape: [usize; 2], f: impl Fn(f64, f64) -> f64) -> Tensor {
    let [r, c] = shape;
    let mut out = Vec::with_capacity(r * c);
    let (ar, ac) = (a.rows(), a.cols());
    let (br, bc) = (b.rows(), b.cols());
    for i in 0..r {
        let ia = if ar == 1 { 0 } else { i };
        let ib = if br == 1 { 0 } else { i };
        for j in 0..c {
            let ja = if ac == 1 { 0 } else { j };
            let jb = if bc == 1 { 0 } else { j };
            out.push(f(a.get(ia, ja), b.get(ib, jb)));
        }
    }
    Tensor::new(out, r, c).expect("broadcast shape")
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of `artanh` arguments with `|a| ≥ 1` that were clamped.
    pub fn clamp_events(&self) -> usize {
        self.clamp_events
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        if self.non_finite.is_none() && !value.is_finite() {
            self.non_finite = Some(format!("{:?} at node {}", op_name(&op), self.nodes.len()));
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Errors if any forward value so far was NaN or infinite.
    pub fn check_finite(&self) -> Result<()> {
        match &self.non_finite {
            None => Ok(()),
            Some(at) => Err(Error::Numeric(format!("non-finite forward value ({at})"))),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, false)
    }

    /// `a · bᵀ`; used for weights stored as `out × in`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&mut self, a: Var, b: Var, transpose_b: bool) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b), transpose_b)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMul { a, b, transpose_b }, rg))
    }

    fn binary(&mut self, a: Var, b: Var, name: &str, f: impl Fn(f64, f64) -> f64) -> Result<(Tensor, bool)> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        let shape = broadcast_shape(sa, sb).ok_or_else(|| {
            Error::usage(format!("{name}: shapes {sa:?} and {sb:?} do not broadcast"))
        })?;
        let value = broadcast_zip(self.value(a), self.value(b), shape, f);
        Ok((value, self.rg(a) || self.rg(b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (v, rg) = self.binary(a, b, "add", |x, y| x + y)?;
        Ok(self.push(v, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (v, rg) = self.binary(a, b, "sub", |x, y| x - y)?;
        Ok(self.push(v, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (v, rg) = self.binary(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(v, Op::Mul(a, b), rg))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let (v, rg) = self.binary(a, b, "div", |x, y| x / y)?;
        Ok(self.push(v, Op::Div(a, b), rg))
    }

    pub fn scalar_mul(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x * s);
        let rg = self.rg(a);
        self.push(v, Op::Scale(a, s), rg)
    }

    /// `a + s` elementwise.
    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x + s);
        let rg = self.rg(a);
        self.push(v, Op::Offset(a), rg)
    }

    /// `s − a` elementwise.
    pub fn rsub_scalar(&mut self, s: f64, a: Var) -> Var {
        let neg = self.scalar_mul(a, -1.0);
        self.add_scalar(neg, s)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scalar_mul(a, -1.0)
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let v = self.value(a).map(f);
        let rg = self.rg(a);
        self.push(v, op, rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), f64::tanh)
    }

    /// `artanh`, clamping `|x| ≥ 1` to `±(1 − EPS_BALL)` and counting each
    /// clamped entry. Clamped entries pass no gradient.
    pub fn artanh(&mut self, a: Var) -> Var {
        let clamped = self.value(a).data().iter().filter(|x| x.abs() >= 1.0).count();
        self.clamp_events += clamped;
        self.unary(a, Op::Artanh(a), |x| {
            if x.abs() >= 1.0 {
                (x.signum() * (1.0 - EPS_BALL)).atanh()
            } else {
                x.atanh()
            }
        })
    }

    pub fn sinh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sinh(a), f64::sinh)
    }

    pub fn asinh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Asinh(a), f64::asinh)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a), f64::exp)
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, Op::Log { a, floor: 0.0 }, f64::ln)
    }

    /// `ln(max(a, floor))`; entries below the floor pass no gradient.
    pub fn log_floor(&mut self, a: Var, floor: f64) -> Var {
        self.unary(a, Op::Log { a, floor }, move |x| x.max(floor).ln())
    }

    /// Row sums, `r × c → r × 1`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let data = (0..t.rows()).map(|i| t.row(i).iter().sum()).collect();
        let v = Tensor::new(data, t.rows(), 1).expect("row sums");
        let rg = self.rg(a);
        self.push(v, Op::SumCols(a), rg)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).data().iter().sum());
        let rg = self.rg(a);
        self.push(v, Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let v = Tensor::scalar(t.data().iter().sum::<f64>() / t.len() as f64);
        let rg = self.rg(a);
        self.push(v, Op::Mean(a), rg)
    }

    /// Row-wise inner products, `r × 1`.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let p = self.mul(a, b)?;
        Ok(self.sum_cols(p))
    }

    /// Row-wise squared norms, `r × 1`.
    pub fn norm_sq(&mut self, a: Var) -> Var {
        let p = self.mul(a, a).expect("same shape");
        self.sum_cols(p)
    }

    /// Row-wise Euclidean norms, `r × 1`. The gradient at a zero row is zero.
    pub fn norm2(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let data = (0..t.rows())
            .map(|i| t.row(i).iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect();
        let v = Tensor::new(data, t.rows(), 1).expect("row norms");
        let rg = self.rg(a);
        self.push(v, Op::Norm(a), rg)
    }

    /// Column-wise concatenation of tensors with equal row counts.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts
            .first()
            .map(|&p| self.value(p).rows())
            .ok_or_else(|| Error::usage("concat of nothing"))?;
        let mut cols = 0;
        for &p in parts {
            if self.value(p).rows() != rows {
                return Err(Error::usage("concat: row counts differ"));
            }
            cols += self.value(p).cols();
        }
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(i));
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        let v = Tensor::new(data, rows, cols)?;
        Ok(self.push(v, Op::Concat(parts.to_vec()), rg))
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let t = self.value(a);
        if start > end || end > t.cols() {
            return Err(Error::usage(format!("slice {start}..{end} of {} columns", t.cols())));
        }
        let mut data = Vec::with_capacity(t.rows() * (end - start));
        for i in 0..t.rows() {
            data.extend_from_slice(&t.row(i)[start..end]);
        }
        let v = Tensor::new(data, t.rows(), end - start)?;
        let rg = self.rg(a);
        Ok(self.push(v, Op::SliceCols { a, start }, rg))
    }

    /// Rows `start..end`.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let t = self.value(a);
        if start > end || end > t.rows() {
            return Err(Error::usage(format!("slice {start}..{end} of {} rows", t.rows())));
        }
        let cols = t.cols();
        let v = Tensor::new(t.data()[start * cols..end * cols].to_vec(), end - start, cols)?;
        let rg = self.rg(a);
        Ok(self.push(v, Op::SliceRows { a, start }, rg))
    }

    /// Scales every row with norm at least `max_norm` back onto that norm.
    pub fn project_rows(&mut self, a: Var, max_norm: f64) -> Var {
        let mut v = self.value(a).clone();
        for i in 0..v.rows() {
            let row = v.row_mut(i);
            let n = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n >= max_norm {
                let s = max_norm / n;
                row.iter_mut().for_each(|x| *x *= s);
            }
        }
        let rg = self.rg(a);
        self.push(v, Op::Project { a, max_norm }, rg)
    }

    /// Reverse sweep from a scalar loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).shape() != [1, 1] {
            return Err(Error::usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        self.check_finite()?;
        let n = loss.0 + 1;
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for idx in (0..n).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape()).collect();
        Ok(Gradients { grads, shapes })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let mut send = |v: Var, contrib: Tensor| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            let contrib = contrib.reduce_to(self.nodes[v.0].value.shape());
            match &mut grads[v.0] {
                Some(acc) => acc.add_assign(&contrib),
                slot @ None => *slot = Some(contrib),
            }
        };
        let val = |v: Var| &self.nodes[v.0].value;
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul { a, b, transpose_b } => {
                if self.rg(a) {
                    let ga = g.matmul(val(b), !transpose_b).expect("matmul grad");
                    send(a, ga);
                }
                if self.rg(b) {
                    let gb = if transpose_b {
                        g.transpose().matmul(val(a), false)
                    } else {
                        val(a).transpose().matmul(g, false)
                    }
                    .expect("matmul grad");
                    send(b, gb);
                }
            }
            &Op::Add(a, b) => {
                send(a, g.clone());
                send(b, g.clone());
            }
            &Op::Sub(a, b) => {
                send(a, g.clone());
                send(b, g.map(|x| -x));
            }
            &Op::Mul(a, b) => {
                let s = g.shape();
                if self.rg(a) {
                    send(a, broadcast_zip(g, val(b), s, |g, y| g * y));
                }
                if self.rg(b) {
                    send(b, broadcast_zip(g, val(a), s, |g, x| g * x));
                }
            }
            &Op::Div(a, b) => {
                let s = g.shape();
                if self.rg(a) {
                    send(a, broadcast_zip(g, val(b), s, |g, y| g / y));
                }
                if self.rg(b) {
                    // d(a/b)/db = −(a/b)/b
                    let q = broadcast_zip(out, val(b), s, |q, y| q / y);
                    send(b, broadcast_zip(g, &q, s, |g, q| -g * q));
                }
            }
            &Op::Scale(a, s) => send(a, g.map(|x| x * s)),
            &Op::Offset(a) => send(a, g.clone()),
            &Op::Tanh(a) => send(a, zip(g, out, |g, y| g * (1.0 - y * y))),
            &Op::Artanh(a) => send(
                a,
                zip(g, val(a), |g, x| if x.abs() >= 1.0 { 0.0 } else { g / (1.0 - x * x) }),
            ),
            &Op::Sinh(a) => send(a, zip(g, val(a), |g, x| g * x.cosh())),
            &Op::Asinh(a) => send(a, zip(g, val(a), |g, x| g / (x * x + 1.0).sqrt())),
            &Op::Exp(a) => send(a, zip(g, out, |g, y| g * y)),
            &Op::Log { a, floor } => send(
                a,
                zip(g, val(a), |g, x| if x < floor { 0.0 } else { g / x }),
            ),
            &Op::SumCols(a) => {
                let x = val(a);
                let mut d = Tensor::zeros(x.rows(), x.cols());
                for i in 0..x.rows() {
                    let gi = g.get(i, 0);
                    d.row_mut(i).iter_mut().for_each(|v| *v = gi);
                }
                send(a, d);
            }
            &Op::Sum(a) => {
                let [r, c] = val(a).shape();
                send(a, Tensor::filled(r, c, g.data()[0]));
            }
            &Op::Mean(a) => {
                let [r, c] = val(a).shape();
                send(a, Tensor::filled(r, c, g.data()[0] / (r * c) as f64));
            }
            &Op::Norm(a) => {
                let x = val(a);
                let mut d = Tensor::zeros(x.rows(), x.cols());
                for i in 0..x.rows() {
                    let n = out.get(i, 0);
                    if n > 0.0 {
                        let s = g.get(i, 0) / n;
                        d.row_mut(i)
                            .iter_mut()
                            .zip(x.row(i))
                            .for_each(|(d, x)| *d = s * x);
                    }
                }
                send(a, d);
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let [r, c] = val(p).shape();
                    let mut d = Tensor::zeros(r, c);
                    for i in 0..r {
                        d.row_mut(i).copy_from_slice(&g.row(i)[offset..offset + c]);
                    }
                    offset += c;
                    send(p, d);
                }
            }
            &Op::SliceCols { a, start } => {
                let [r, c] = val(a).shape();
                let mut d = Tensor::zeros(r, c);
                for i in 0..r {
                    d.row_mut(i)[start..start + g.cols()].copy_from_slice(g.row(i));
                }
                send(a, d);
            }
            &Op::SliceRows { a, start } => {
                let [r, c] = val(a).shape();
                let mut d = Tensor::zeros(r, c);
                d.data_mut()[start * c..(start + g.rows()) * c].copy_from_slice(g.data());
                send(a, d);
            }
            &Op::Project { a, max_norm } => {
                let x = val(a);
                let mut d = g.clone();
                for i in 0..x.rows() {
                    let row = x.row(i);
                    let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if n >= max_norm {
                        // (m/n)(I − x̂x̂ᵀ) g
                        let gi = g.row(i);
                        let proj: f64 = gi.iter().zip(row).map(|(g, x)| g * x).sum::<f64>() / (n * n);
                        let s = max_norm / n;
                        d.row_mut(i)
                            .iter_mut()
                            .zip(gi.iter().zip(row))
                            .for_each(|(d, (g, x))| *d = s * (g - proj * x));
                    }
                }
                send(a, d);
            }
        }
    }
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(data, a.rows(), a.cols()).expect("same shape")
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::MatMul { .. } => "matmul",
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::Div(..) => "div",
        Op::Scale(..) => "scalar_mul",
        Op::Offset(..) => "add_scalar",
        Op::Tanh(_) => "tanh",
        Op::Artanh(_) => "artanh",
        Op::Sinh(_) => "sinh",
        Op::Asinh(_) => "asinh",
        Op::Exp(_) => "exp",
        Op::Log { .. } => "log",
        Op::SumCols(_) => "sum_cols",
        Op::Sum(_) => "sum",
        Op::Mean(_) => "mean",
        Op::Norm(_) => "norm2",
        Op::Concat(_) => "concat",
        Op::SliceCols { .. } => "slice_cols",
        Op::SliceRows { .. } => "slice_rows",
        Op::Project { .. } => "project_rows",
    }
}
