//! Define-by-run gradient tape.
//!
//! Every forward op appends a node holding its output value and the
//! handles of its inputs. `backward` walks the nodes in reverse recorded
//! order and accumulates adjoints into a buffer per node.

use crate::diffcore::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Per-element adjoint of a broadcast binary op: (output, lhs, rhs) flat indices.
type IndexFn<'a, T> = Box<dyn Fn(usize, usize, usize) -> T + 'a>;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub f: usize,
    pub kh: usize,
    pub kw: usize,
}

impl ConvGeom {
    pub fn oh(&self) -> usize {
        self.h - self.kh + 1
    }
    pub fn ow(&self) -> usize {
        self.w - self.kw + 1
    }
    pub fn patch(&self) -> usize {
        self.c * self.kh * self.kw
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Neg(Var),
    Scale(Var, T),
    AddScalar(Var),
    Square(Var),
    Sqrt(Var),
    Exp(Var),
    Log(Var),
    Relu(Var),
    Sigmoid(Var),
    SumAll(Var),
    SumAxis(Var, usize),
    MeanAxis(Var, usize),
    StdAxis(Var, usize),
    RowNorms(Var),
    RevCumsumCols(Var),
    SliceCols(Var, usize),
    Reshape(Var),
    Conv2d {
        input: Var,
        weight: Var,
        bias: Var,
        geom: ConvGeom,
        cols: Vec<T>,
    },
    MaxPool2(Var, Vec<usize>),
}

#[derive(Debug)]
struct Node<T> {
    shape: Vec<usize>,
    value: Vec<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Ordered record of executed operations.
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Adjoints produced by [`Tape::backward`], one optional buffer per node.
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Copies the adjoint of `v` into `t.grad`.
    pub fn write_to(&self, v: Var, t: &mut Tensor<T>) -> Result<()> {
        match self.get(v) {
            Some(g) => t.set_grad(g.to_vec()),
            None => t.set_grad(vec![T::zero(); t.numel()]),
        }
    }
}

/// Rank-2 view used by broadcasting ops.
fn as2d(shape: &[usize]) -> (usize, usize) {
    match shape.len() {
        0 => (1, 1),
        1 => (1, shape[0]),
        _ => (shape[0], shape[1..].iter().product()),
    }
}

fn broadcast_dim(a: usize, b: usize) -> Option<usize> {
    match (a, b) {
        _ if a == b => Some(a),
        (1, _) => Some(b),
        (_, 1) => Some(a),
        _ => None,
    }
}

#[derive(Clone, Copy)]
struct Bcast {
    rows: usize,
    cols: usize,
    a: (usize, usize),
    b: (usize, usize),
}

impl Bcast {
    #[inline]
    fn ia(&self, i: usize, j: usize) -> usize {
        let (r, c) = self.a;
        (if r == 1 { 0 } else { i }) * c + if c == 1 { 0 } else { j }
    }
    #[inline]
    fn ib(&self, i: usize, j: usize) -> usize {
        let (r, c) = self.b;
        (if r == 1 { 0 } else { i }) * c + if c == 1 { 0 } else { j }
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<T>, op: Op<T>, needs_grad: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            shape,
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node<T> {
        &self.nodes[v.0]
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Records a leaf; it participates in differentiation when the tensor
    /// has `requires_grad` set.
    pub fn leaf(&mut self, t: &Tensor<T>) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), Op::Leaf, t.requires_grad())
    }

    /// Records a value that never receives a gradient.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        let shape = t.shape().to_vec();
        self.push(shape, t.into_data(), Op::Leaf, false)
    }

    pub fn constant_scalar(&mut self, x: T) -> Var {
        self.push(vec![1], vec![x], Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.node(v).value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.node(v).shape
    }

    pub fn tensor(&self, v: Var) -> Tensor<T> {
        let n = self.node(v);
        Tensor::new(n.shape.clone(), n.value.clone()).expect("node shape matches value")
    }

    /// First element of a node's value; intended for scalar losses.
    pub fn scalar(&self, v: Var) -> T {
        self.node(v).value[0]
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![T::zero(); m * n];
        T::gemm(false, false, m, k, n, self.value(a), self.value(b), T::zero(), &mut out);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(vec![m, n], out, Op::MatMul(a, b), ng))
    }

    fn bcast(&self, op: &'static str, a: Var, b: Var) -> Result<(Vec<usize>, Bcast)> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let (ra, ca) = as2d(sa);
        let (rb, cb) = as2d(sb);
        let (rows, cols) = match (broadcast_dim(ra, rb), broadcast_dim(ca, cb)) {
            (Some(r), Some(c)) => (r, c),
            _ => return Err(Error::shape(op, sa, sb)),
        };
        let shape = if sa == sb || (ra, ca) == (rows, cols) {
            sa.to_vec()
        } else if (rb, cb) == (rows, cols) {
            sb.to_vec()
        } else {
            vec![rows, cols]
        };
        Ok((
            shape,
            Bcast {
                rows,
                cols,
                a: (ra, ca),
                b: (rb, cb),
            },
        ))
    }

    fn binary(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T, op: Op<T>) -> Result<Var> {
        let (shape, bc) = self.bcast(name, a, b)?;
        let (va, vb) = (self.value(a), self.value(b));
        let out = if va.len() == vb.len() && bc.a == bc.b {
            va.iter().zip(vb).map(|(&x, &y)| f(x, y)).collect()
        } else {
            let mut out = Vec::with_capacity(bc.rows * bc.cols);
            for i in 0..bc.rows {
                for j in 0..bc.cols {
                    out.push(f(va[bc.ia(i, j)], vb[bc.ib(i, j)]));
                }
            }
            out
        };
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(shape, out, op, ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Elementwise quotient; an exactly zero divisor is rejected.
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        if let Some(pos) = self.value(b).iter().position(|&y| y == T::zero()) {
            return Err(Error::domain("div", format!("zero divisor at flat index {pos}")));
        }
        self.binary("div", a, b, |x, y| x / y, Op::Div(a, b))
    }

    fn unary(&mut self, a: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let out = self.value(a).iter().map(|&x| f(x)).collect();
        let shape = self.shape(a).to_vec();
        let ng = self.ng(a);
        self.push(shape, out, op, ng)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.unary(a, |x| -x, Op::Neg(a))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        self.unary(a, |x| x * s, Op::Scale(a, s))
    }

    pub fn add_scalar(&mut self, a: Var, s: T) -> Var {
        self.unary(a, |x| x + s, Op::AddScalar(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * x, Op::Square(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        if let Some(pos) = self.value(a).iter().position(|&x| x < T::zero()) {
            return Err(Error::domain("sqrt", format!("negative input at flat index {pos}")));
        }
        Ok(self.unary(a, |x| x.sqrt(), Op::Sqrt(a)))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.exp(), Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        if let Some(pos) = self.value(a).iter().position(|&x| !(x > T::zero())) {
            return Err(Error::domain("log", format!("non-positive input at flat index {pos}")));
        }
        Ok(self.unary(a, |x| x.ln(), Op::Log(a)))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| if x > T::zero() { x } else { T::zero() }, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().copied().sum();
        let ng = self.ng(a);
        self.push(vec![1], vec![s], Op::SumAll(a), ng)
    }

    fn check_axis(&self, op: &'static str, a: Var, axis: usize) -> Result<(usize, usize)> {
        let shape = self.shape(a);
        if shape.len() != 2 || axis > 1 {
            return Err(Error::domain(op, format!("axis {axis} invalid for shape {shape:?}")));
        }
        Ok((shape[0], shape[1]))
    }

    /// Euclidean norm of every row, shape `[rows, 1]`. The gradient at a zero
    /// row is taken as zero.
    pub fn row_norms(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.check_axis("row_norms", a, 1)?;
        let (shape, out) = reduce_axis(self.value(a), r, c, 1, |xs| xs.iter().map(|v| *v * *v).sum::<T>().sqrt());
        let ng = self.ng(a);
        Ok(self.push(shape, out, Op::RowNorms(a), ng))
    }

    /// Sum along `axis` of a rank-2 tensor; the reduced extent is kept as 1.
    pub fn sum_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let (r, c) = self.check_axis("sum_axis", a, axis)?;
        let (shape, out) = reduce_axis(self.value(a), r, c, axis, |xs| xs.iter().copied().sum());
        let ng = self.ng(a);
        Ok(self.push(shape, out, Op::SumAxis(a, axis), ng))
    }

    pub fn mean_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let (r, c) = self.check_axis("mean_axis", a, axis)?;
        let len = T::lit(if axis == 0 { r } else { c } as f64);
        let (shape, out) = reduce_axis(self.value(a), r, c, axis, |xs| xs.iter().copied().sum::<T>() / len);
        let ng = self.ng(a);
        Ok(self.push(shape, out, Op::MeanAxis(a, axis), ng))
    }

    /// Population standard deviation (divides by the extent, not extent - 1).
    pub fn std_axis(&mut self, a: Var, axis: usize) -> Result<Var> {
        let (r, c) = self.check_axis("std_axis", a, axis)?;
        let extent = if axis == 0 { r } else { c };
        if extent < 2 {
            return Err(Error::domain("std_axis", format!("axis {axis} has extent {extent}; need at least 2")));
        }
        let (shape, out) = reduce_axis(self.value(a), r, c, axis, population_std);
        let ng = self.ng(a);
        Ok(self.push(shape, out, Op::StdAxis(a, axis), ng))
    }

    /// `out[i, k] = sum_{j >= k} x[i, j]`, accumulated from the last column
    /// towards the first.
    pub fn rev_cumsum_cols(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.check_axis("rev_cumsum_cols", a, 1)?;
        let x = self.value(a);
        let mut out = vec![T::zero(); r * c];
        for i in 0..r {
            let mut acc = T::zero();
            for j in (0..c).rev() {
                acc += x[i * c + j];
                out[i * c + j] = acc;
            }
        }
        let ng = self.ng(a);
        Ok(self.push(vec![r, c], out, Op::RevCumsumCols(a), ng))
    }

    /// Columns `start..end` of a rank-2 tensor.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (r, c) = self.check_axis("slice_cols", a, 1)?;
        if start > end || end > c {
            return Err(Error::domain("slice_cols", format!("range {start}..{end} outside {c} columns")));
        }
        let x = self.value(a);
        let w = end - start;
        let mut out = Vec::with_capacity(r * w);
        for i in 0..r {
            out.extend_from_slice(&x[i * c + start..i * c + end]);
        }
        let ng = self.ng(a);
        Ok(self.push(vec![r, w], out, Op::SliceCols(a, start), ng))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        if shape.iter().product::<usize>() != self.value(a).len() {
            return Err(Error::shape("reshape", self.shape(a), shape));
        }
        let out = self.value(a).to_vec();
        let ng = self.ng(a);
        Ok(self.push(shape.to_vec(), out, Op::Reshape(a), ng))
    }

    /// Valid (unpadded), stride-1 convolution.
    ///
    /// `input` is `[N, C, H, W]`, `weight` is `[F, C, KH, KW]` and `bias` is
    /// `[F]`; the result is `[N, F, H-KH+1, W-KW+1]`.
    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let (si, sw, sb) = (self.shape(input), self.shape(weight), self.shape(bias));
        if si.len() != 4 || sw.len() != 4 || si[1] != sw[1] || sw[2] > si[2] || sw[3] > si[3] {
            return Err(Error::shape("conv2d", si, sw));
        }
        if sb.iter().product::<usize>() != sw[0] {
            return Err(Error::shape("conv2d bias", sb, &sw[..1]));
        }
        let geom = ConvGeom {
            n: si[0],
            c: si[1],
            h: si[2],
            w: si[3],
            f: sw[0],
            kh: sw[2],
            kw: sw[3],
        };
        let (oh, ow, patch) = (geom.oh(), geom.ow(), geom.patch());
        let ohw = oh * ow;
        let x = self.value(input);
        let wt = self.value(weight);
        let bs = self.value(bias);
        let mut cols = vec![T::zero(); geom.n * patch * ohw];
        let mut out = vec![T::zero(); geom.n * geom.f * ohw];
        for s in 0..geom.n {
            let col = &mut cols[s * patch * ohw..(s + 1) * patch * ohw];
            im2col(&x[s * geom.c * geom.h * geom.w..(s + 1) * geom.c * geom.h * geom.w], &geom, col);
            let o = &mut out[s * geom.f * ohw..(s + 1) * geom.f * ohw];
            for (f, row) in o.chunks_mut(ohw).enumerate() {
                row.iter_mut().for_each(|v| *v = bs[f]);
            }
            T::gemm(false, false, geom.f, patch, ohw, wt, col, T::one(), o);
        }
        let ng = self.ng(input) || self.ng(weight) || self.ng(bias);
        Ok(self.push(
            vec![geom.n, geom.f, oh, ow],
            out,
            Op::Conv2d {
                input,
                weight,
                bias,
                geom,
                cols,
            },
            ng,
        ))
    }

    /// 2x2 max pooling with stride 2 over `[N, C, H, W]`; odd trailing
    /// rows/columns are dropped.
    pub fn max_pool2(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a);
        if s.len() != 4 || s[2] < 2 || s[3] < 2 {
            return Err(Error::domain("max_pool2", format!("needs [N, C, H>=2, W>=2], got {s:?}")));
        }
        let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
        let (ph, pw) = (h / 2, w / 2);
        let x = self.value(a);
        let mut out = Vec::with_capacity(n * c * ph * pw);
        let mut arg = Vec::with_capacity(n * c * ph * pw);
        for plane in 0..n * c {
            let base = plane * h * w;
            for i in 0..ph {
                for j in 0..pw {
                    let mut best = base + 2 * i * w + 2 * j;
                    for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = base + (2 * i + di) * w + 2 * j + dj;
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                    out.push(x[best]);
                    arg.push(best);
                }
            }
        }
        let ng = self.ng(a);
        Ok(self.push(vec![n, c, ph, pw], out, Op::MaxPool2(a, arg), ng))
    }

    /// Reverse sweep from a scalar `loss`.
    ///
    /// Every leaf recorded with `requires_grad` gets an adjoint buffer, zero
    /// when the loss does not depend on it.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let ls = self.shape(loss);
        if ls.iter().product::<usize>() != 1 {
            return Err(Error::NonScalarLoss(ls.to_vec()));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        if self.ng(loss) {
            grads[loss.0] = Some(vec![T::one()]);
        }
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if matches!(node.op, Op::Leaf) && node.needs_grad && grads[i].is_none() {
                grads[i] = Some(vec![T::zero(); node.value.len()]);
            }
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                if self.ng(*a) {
                    let buf = slot(grads, *a, m * k);
                    T::gemm(false, true, m, n, k, g, self.value(*b), T::one(), buf);
                }
                if self.ng(*b) {
                    let buf = slot(grads, *b, k * n);
                    T::gemm(true, false, k, m, n, self.value(*a), g, T::one(), buf);
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) => {
                let (_, bc) = self.bcast("backward", *a, *b).expect("shapes checked in forward");
                let (va, vb) = (self.value(*a), self.value(*b));
                let (da, db): (IndexFn<'_, T>, IndexFn<'_, T>) =
                    match &node.op {
                        Op::Add(..) => (Box::new(|o, _, _| g[o]), Box::new(|o, _, _| g[o])),
                        Op::Sub(..) => (Box::new(|o, _, _| g[o]), Box::new(|o, _, _| -g[o])),
                        Op::Mul(..) => (Box::new(|o, _, ib| g[o] * vb[ib]), Box::new(|o, ia, _| g[o] * va[ia])),
                        _ => (
                            Box::new(|o, _, ib| g[o] / vb[ib]),
                            Box::new(|o, _, ib| -g[o] * out[o] / vb[ib]),
                        ),
                    };
                for (v, d, len, is_a) in [(*a, &da, va.len(), true), (*b, &db, vb.len(), false)] {
                    if !self.ng(v) {
                        continue;
                    }
                    let buf = slot(grads, v, len);
                    for i in 0..bc.rows {
                        for j in 0..bc.cols {
                            let (ia, ib) = (bc.ia(i, j), bc.ib(i, j));
                            let o = i * bc.cols + j;
                            buf[if is_a { ia } else { ib }] += d(o, ia, ib);
                        }
                    }
                }
            }
            Op::Neg(a) => self.accum_map(grads, *a, |i| -g[i]),
            Op::Scale(a, s) => self.accum_map(grads, *a, |i| g[i] * *s),
            Op::AddScalar(a) | Op::Reshape(a) => self.accum_map(grads, *a, |i| g[i]),
            Op::Square(a) => {
                let x = self.value(*a);
                self.accum_map(grads, *a, |i| g[i] * (x[i] + x[i]))
            }
            Op::Sqrt(a) => {
                let half = T::lit(0.5);
                self.accum_map(grads, *a, |i| g[i] * half / out[i])
            }
            Op::Exp(a) => self.accum_map(grads, *a, |i| g[i] * out[i]),
            Op::Log(a) => {
                let x = self.value(*a);
                self.accum_map(grads, *a, |i| g[i] / x[i])
            }
            Op::Relu(a) => {
                let x = self.value(*a);
                self.accum_map(grads, *a, |i| if x[i] > T::zero() { g[i] } else { T::zero() })
            }
            Op::Sigmoid(a) => self.accum_map(grads, *a, |i| g[i] * out[i] * (T::one() - out[i])),
            Op::SumAll(a) => self.accum_map(grads, *a, |_| g[0]),
            Op::SumAxis(a, axis) | Op::MeanAxis(a, axis) | Op::StdAxis(a, axis) => {
                let s = self.shape(*a);
                let (r, c) = (s[0], s[1]);
                let x = self.value(*a);
                let extent = if *axis == 0 { r } else { c };
                let inv = T::one() / T::lit(extent as f64);
                let red = |i: usize, j: usize| if *axis == 0 { j } else { i };
                match &node.op {
                    Op::SumAxis(..) => self.accum_map(grads, *a, |p| g[red(p / c, p % c)]),
                    Op::MeanAxis(..) => self.accum_map(grads, *a, |p| g[red(p / c, p % c)] * inv),
                    _ => {
                        let (_, means) = reduce_axis(x, r, c, *axis, |xs| xs.iter().copied().sum::<T>() * inv);
                        self.accum_map(grads, *a, |p| {
                            let k = red(p / c, p % c);
                            if out[k] == T::zero() {
                                T::zero()
                            } else {
                                g[k] * (x[p] - means[k]) * inv / out[k]
                            }
                        })
                    }
                }
            }
            Op::RowNorms(a) => {
                let c = self.shape(*a)[1];
                let x = self.value(*a);
                self.accum_map(grads, *a, |p| {
                    let k = p / c;
                    if out[k] == T::zero() {
                        T::zero()
                    } else {
                        g[k] * x[p] / out[k]
                    }
                })
            }
            Op::RevCumsumCols(a) => {
                let c = self.shape(*a)[1];
                if self.ng(*a) {
                    let buf = slot(grads, *a, g.len());
                    for (grow, brow) in g.chunks(c).zip(buf.chunks_mut(c)) {
                        let mut acc = T::zero();
                        for (gv, bv) in grow.iter().zip(brow.iter_mut()) {
                            acc += *gv;
                            *bv += acc;
                        }
                    }
                }
            }
            Op::SliceCols(a, start) => {
                let c = self.shape(*a)[1];
                let w = node.shape[1];
                if self.ng(*a) {
                    let buf = slot(grads, *a, self.value(*a).len());
                    for (i, grow) in g.chunks(w).enumerate() {
                        for (j, gv) in grow.iter().enumerate() {
                            buf[i * c + start + j] += *gv;
                        }
                    }
                }
            }
            Op::Conv2d {
                input,
                weight,
                bias,
                geom,
                cols,
            } => {
                let (patch, ohw) = (geom.patch(), geom.oh() * geom.ow());
                let fo = geom.f * ohw;
                if self.ng(*bias) {
                    let buf = slot(grads, *bias, geom.f);
                    for s in 0..geom.n {
                        for (f, row) in g[s * fo..(s + 1) * fo].chunks(ohw).enumerate() {
                            buf[f] += row.iter().copied().sum();
                        }
                    }
                }
                if self.ng(*weight) {
                    let buf = slot(grads, *weight, geom.f * patch);
                    for s in 0..geom.n {
                        let col = &cols[s * patch * ohw..(s + 1) * patch * ohw];
                        T::gemm(false, true, geom.f, ohw, patch, &g[s * fo..(s + 1) * fo], col, T::one(), buf);
                    }
                }
                if self.ng(*input) {
                    let wt = self.value(*weight);
                    let chw = geom.c * geom.h * geom.w;
                    let mut dcol = vec![T::zero(); patch * ohw];
                    let buf = slot(grads, *input, geom.n * chw);
                    for s in 0..geom.n {
                        T::gemm(true, false, patch, geom.f, ohw, wt, &g[s * fo..(s + 1) * fo], T::zero(), &mut dcol);
                        col2im_add(&dcol, geom, &mut buf[s * chw..(s + 1) * chw]);
                    }
                }
            }
            Op::MaxPool2(a, arg) => {
                if self.ng(*a) {
                    let buf = slot(grads, *a, self.value(*a).len());
                    for (gv, &src) in g.iter().zip(arg) {
                        buf[src] += *gv;
                    }
                }
            }
        }
    }

    fn accum_map(&self, grads: &mut [Option<Vec<T>>], a: Var, f: impl Fn(usize) -> T) {
        if !self.ng(a) {
            return;
        }
        let buf = slot(grads, a, self.value(a).len());
        for (i, b) in buf.iter_mut().enumerate() {
            *b += f(i);
        }
    }
}

fn slot<T: Scalar>(grads: &mut [Option<Vec<T>>], v: Var, len: usize) -> &mut [T] {
    grads[v.0].get_or_insert_with(|| vec![T::zero(); len])
}

#[inline]
pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn population_std<T: Scalar>(xs: &[T]) -> T {
    let n = T::lit(xs.len() as f64);
    let mean = xs.iter().copied().sum::<T>() / n;
    let var = xs.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / n;
    var.sqrt()
}

fn reduce_axis<T: Scalar>(x: &[T], r: usize, c: usize, axis: usize, f: impl Fn(&[T]) -> T) -> (Vec<usize>, Vec<T>) {
    if axis == 0 {
        let mut col = Vec::with_capacity(r);
        let out = (0..c)
            .map(|j| {
                col.clear();
                col.extend((0..r).map(|i| x[i * c + j]));
                f(&col)
            })
            .collect();
        (vec![1, c], out)
    } else {
        (vec![r, 1], x.chunks(c).map(&f).collect())
    }
}

fn im2col<T: Scalar>(x: &[T], g: &ConvGeom, col: &mut [T]) {
    let (oh, ow) = (g.oh(), g.ow());
    let ohw = oh * ow;
    for ch in 0..g.c {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (ch * g.kh + ki) * g.kw + kj;
                let dst = &mut col[row * ohw..(row + 1) * ohw];
                for i in 0..oh {
                    let src = ch * g.h * g.w + (i + ki) * g.w + kj;
                    dst[i * ow..(i + 1) * ow].copy_from_slice(&x[src..src + ow]);
                }
            }
        }
    }
}

fn col2im_add<T: Scalar>(col: &[T], g: &ConvGeom, dx: &mut [T]) {
    let (oh, ow) = (g.oh(), g.ow());
    let ohw = oh * ow;
    for ch in 0..g.c {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (ch * g.kh + ki) * g.kw + kj;
                let src = &col[row * ohw..(row + 1) * ohw];
                for i in 0..oh {
                    let dst = ch * g.h * g.w + (i + ki) * g.w + kj;
                    for (d, s) in dx[dst..dst + ow].iter_mut().zip(&src[i * ow..(i + 1) * ow]) {
                        *d += *s;
                    }
                }
            }
        }
    }
}
