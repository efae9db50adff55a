//! Tape of recorded operations and the reverse sweep over it.
//!
//! Every operation appends a node holding its forward value. Nodes are
//! stored in creation order, which is a valid topological order, so the
//! backward pass is a single reverse scan. Gradients are accumulated with
//! `+=`, which makes a value used in several places (shared weights)
//! receive the sum of its contributions.

use crate::conv::{col2im_add, im2col, ConvGeom};
use crate::error::{shape_err, AutodiffError, Result};
use crate::real::{matmul_into, MatRef, Real};
use crate::tensor::Tensor;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Backward rule for a user-supplied elementwise op: `(x, y, dy) -> dx`.
pub type CustomBackward<T> = Box<dyn Fn(&[T], &[T], &[T]) -> Vec<T>>;

enum Op<T: Real> {
    Leaf,
    Conv { x: Var, w: Var, b: Option<Var>, geom: ConvGeom },
    Linear { x: Var, w: Var, b: Option<Var> },
    LeakyRelu { x: Var, slope: T },
    AvgPoolLast { x: Var, factor: usize },
    MeanAxis { x: Var, outer: usize, len: usize, inner: usize },
    Reshape { x: Var },
    Transpose12 { x: Var, d0: usize, d1: usize, d2: usize },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { x: Var, c: T },
    Sum { x: Var },
    Mean { x: Var },
    SoftmaxRows { x: Var, cols: usize },
    StdRows { x: Var, cols: usize },
    NormRows { x: Var, cols: usize },
    DiffAxis { x: Var, outer: usize, len: usize, inner: usize },
    CrossEntropy { p: Var, target: Vec<T>, cols: usize, eps: T },
    Custom { x: Var, backward: CustomBackward<T> },
}

struct Node<T: Real> {
    value: Tensor<T>,
    requires_grad: bool,
    op: Op<T>,
}

/// A dynamic computation graph. Build it, call [`Graph::backward`], drop it.
pub struct Graph<T: Real> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of the backward root with respect to every leaf that required them.
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn wrt(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, inputs: &[Var], op: Op<T>) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node { value, requires_grad, op });
        Var(self.nodes.len() - 1)
    }

    /// Input leaf. `requires_grad = false` makes it a constant.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, requires_grad, op: Op::Leaf });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn data(&self, v: Var) -> &[T] {
        self.nodes[v.0].value.data()
    }

    /// Cross-correlation of `N x C x H x W` input with `K x C x kh x kw` kernels plus optional bias.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, padding: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 4 || ws.len() != 4 {
            return Err(shape_err("conv2d", format!("input {xs:?}, kernel {ws:?}: both must be 4-D")));
        }
        self.conv_generic("conv2d", x, w, b, [xs[0], xs[1], xs[2], xs[3]], [ws[0], ws[1], ws[2], ws[3]], (stride, stride), (padding, padding))
    }

    /// Cross-correlation of `N x C x L` input with `K x C x kl` kernels plus optional bias.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, padding: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 3 || ws.len() != 3 {
            return Err(shape_err("conv1d", format!("input {xs:?}, kernel {ws:?}: both must be 3-D")));
        }
        let y = self.conv_generic("conv1d", x, w, b, [xs[0], xs[1], 1, xs[2]], [ws[0], ws[1], 1, ws[2]], (1, stride), (0, padding))?;
        let ys = self.shape(y).to_vec();
        self.nodes[y.0].value = self.nodes[y.0].value.clone().reshape(&[ys[0], ys[1], ys[3]])?;
        Ok(y)
    }

    #[allow(clippy::too_many_arguments)]
    fn conv_generic(
        &mut self,
        op: &'static str,
        x: Var,
        w: Var,
        b: Option<Var>,
        [n, c, h, wd]: [usize; 4],
        [k, wc, kh, kw]: [usize; 4],
        (sh, sw): (usize, usize),
        (ph, pw): (usize, usize),
    ) -> Result<Var> {
        if c != wc {
            return Err(shape_err(op, format!("input has {c} channels, kernel expects {wc}")));
        }
        if sh == 0 || sw == 0 {
            return Err(AutodiffError::Invalid { op, detail: "stride must be positive".into() });
        }
        if let Some(b) = b {
            if self.shape(b) != [k] {
                return Err(shape_err(op, format!("bias {:?} for {k} kernels", self.shape(b))));
            }
        }
        let span_h = h + 2 * ph;
        let span_w = wd + 2 * pw;
        if span_h < kh || span_w < kw || (span_h - kh) % sh != 0 || (span_w - kw) % sw != 0 {
            return Err(AutodiffError::Invalid {
                op,
                detail: format!("non-integral output size for input {h}x{wd}, kernel {kh}x{kw}, stride {sh}x{sw}, pad {ph}x{pw}"),
            });
        }
        let geom = ConvGeom {
            n,
            c,
            h,
            w: wd,
            k,
            kh,
            kw,
            sh,
            sw,
            ph,
            pw,
            ho: (span_h - kh) / sh + 1,
            wo: (span_w - kw) / sw + 1,
        };
        let area = geom.out_area();
        let rows = geom.col_rows();
        let mut out = vec![T::zero(); n * geom.out_sample()];
        let mut cols = vec![T::zero(); rows * area];
        let xd = self.data(x);
        let wmat = MatRef::new(self.data(w), k, rows);
        for s in 0..n {
            im2col(&geom, &xd[s * geom.in_sample()..(s + 1) * geom.in_sample()], &mut cols);
            let o = &mut out[s * geom.out_sample()..(s + 1) * geom.out_sample()];
            matmul_into(wmat, MatRef::new(&cols, rows, area), T::zero(), o);
            if let Some(b) = b {
                for (ki, &bv) in self.data(b).iter().enumerate() {
                    for v in &mut o[ki * area..(ki + 1) * area] {
                        *v += bv;
                    }
                }
            }
        }
        let value = Tensor::new(vec![n, k, geom.ho, geom.wo], out)?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        Ok(self.push(value, &inputs, Op::Conv { x, w, b, geom }))
    }

    /// `x (N x D) * w (D x E) + b (E)`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let xs = self.shape(x);
        let ws = self.shape(w);
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[0] {
            return Err(shape_err("linear", format!("input {xs:?}, weight {ws:?}")));
        }
        let (n, d, e) = (xs[0], xs[1], ws[1]);
        if let Some(b) = b {
            if self.shape(b) != [e] {
                return Err(shape_err("linear", format!("bias {:?} for output width {e}", self.shape(b))));
            }
        }
        let mut out = vec![T::zero(); n * e];
        if let Some(b) = b {
            for row in out.chunks_mut(e) {
                row.copy_from_slice(self.data(b));
            }
        }
        matmul_into(MatRef::new(self.data(x), n, d), MatRef::new(self.data(w), d, e), T::one(), &mut out);
        let value = Tensor::new(vec![n, e], out)?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        Ok(self.push(value, &inputs, Op::Linear { x, w, b }))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let slope = T::of(slope);
        let v = self.value(x);
        let data = v.data().iter().map(|&a| if a > T::zero() { a } else { a * slope }).collect();
        let value = Tensor::new(v.shape().to_vec(), data).expect("same shape");
        self.push(value, &[x], Op::LeakyRelu { x, slope })
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.leaky_relu(x, 0.0)
    }

    /// Average pooling by `factor` over the last axis.
    pub fn avg_pool_last(&mut self, x: Var, factor: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let last = *shape.last().ok_or_else(|| shape_err("avg_pool_last", "scalar input"))?;
        if factor == 0 || last % factor != 0 {
            return Err(shape_err("avg_pool_last", format!("last axis {last} not divisible by {factor}")));
        }
        let inv = T::one() / T::of(factor as f64);
        let data: Vec<T> = self.data(x).chunks(factor).map(|c| c.iter().copied().sum::<T>() * inv).collect();
        let mut out_shape = shape;
        *out_shape.last_mut().unwrap() = last / factor;
        let value = Tensor::new(out_shape, data)?;
        Ok(self.push(value, &[x], Op::AvgPoolLast { x, factor }))
    }

    /// Mean over one axis; the axis is removed from the shape.
    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || shape[axis] == 0 {
            return Err(shape_err("mean_axis", format!("axis {axis} of {shape:?}")));
        }
        let (outer, len, inner) = split_axis(&shape, axis);
        let xd = self.data(x);
        let inv = T::one() / T::of(len as f64);
        let mut out = vec![T::zero(); outer * inner];
        for o in 0..outer {
            let dst = &mut out[o * inner..(o + 1) * inner];
            for l in 0..len {
                let src = &xd[(o * len + l) * inner..(o * len + l + 1) * inner];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += s;
                }
            }
            for d in dst.iter_mut() {
                *d *= inv;
            }
        }
        let mut out_shape = shape;
        out_shape.remove(axis);
        if out_shape.is_empty() {
            out_shape.push(1);
        }
        let value = Tensor::new(out_shape, out)?;
        Ok(self.push(value, &[x], Op::MeanAxis { x, outer, len, inner }))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        Ok(self.push(value, &[x], Op::Reshape { x }))
    }

    /// Swap the last two axes of a 3-D tensor.
    pub fn transpose12(&mut self, x: Var) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if shape.len() != 3 {
            return Err(shape_err("transpose12", format!("{shape:?} is not 3-D")));
        }
        let (d0, d1, d2) = (shape[0], shape[1], shape[2]);
        let xd = self.data(x);
        let mut out = vec![T::zero(); xd.len()];
        for a in 0..d0 {
            for i in 0..d1 {
                for j in 0..d2 {
                    out[(a * d2 + j) * d1 + i] = xd[(a * d1 + i) * d2 + j];
                }
            }
        }
        let value = Tensor::new(vec![d0, d2, d1], out)?;
        Ok(self.push(value, &[x], Op::Transpose12 { x, d0, d1, d2 }))
    }

    fn binary(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(op, format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        let data = self.data(a).iter().zip(self.data(b)).map(|(&p, &q)| f(p, q)).collect();
        Tensor::new(self.shape(a).to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.binary("add", a, b, |p, q| p + q)?;
        Ok(self.push(value, &[a, b], Op::Add { a, b }))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.binary("sub", a, b, |p, q| p - q)?;
        Ok(self.push(value, &[a, b], Op::Sub { a, b }))
    }

    /// Elementwise product of equal-shape tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.binary("mul", a, b, |p, q| p * q)?;
        Ok(self.push(value, &[a, b], Op::Mul { a, b }))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let c = T::of(c);
        let v = self.value(x);
        let value = Tensor::new(v.shape().to_vec(), v.data().iter().map(|&a| a * c).collect()).expect("same shape");
        self.push(value, &[x], Op::Scale { x, c })
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.data(x).iter().copied().sum();
        self.push(Tensor::scalar(s), &[x], Op::Sum { x })
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let d = self.data(x);
        if d.is_empty() {
            return Err(shape_err("mean", "empty input"));
        }
        let s = d.iter().copied().sum::<T>() / T::of(d.len() as f64);
        Ok(self.push(Tensor::scalar(s), &[x], Op::Mean { x }))
    }

    fn rows(&self, op: &'static str, x: Var) -> Result<(usize, usize)> {
        let shape = self.shape(x);
        match shape {
            [r, c] if *c > 0 => Ok((*r, *c)),
            _ => Err(shape_err(op, format!("expected non-empty 2-D input, got {shape:?}"))),
        }
    }

    /// Row-wise softmax of a 2-D tensor.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let (_, cols) = self.rows("softmax", x)?;
        let mut out = self.data(x).to_vec();
        for row in out.chunks_mut(cols) {
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut total = T::zero();
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        let value = Tensor::new(self.shape(x).to_vec(), out)?;
        Ok(self.push(value, &[x], Op::SoftmaxRows { x, cols }))
    }

    /// Population standard deviation of each row of a 2-D tensor.
    pub fn std_rows(&mut self, x: Var) -> Result<Var> {
        let (r, cols) = self.rows("std_reduce", x)?;
        let inv = T::one() / T::of(cols as f64);
        let out = self
            .data(x)
            .chunks(cols)
            .map(|row| {
                let mu = row.iter().copied().sum::<T>() * inv;
                (row.iter().map(|&v| (v - mu) * (v - mu)).sum::<T>() * inv).sqrt()
            })
            .collect();
        let value = Tensor::new(vec![r], out)?;
        Ok(self.push(value, &[x], Op::StdRows { x, cols }))
    }

    /// Euclidean norm of each row of a 2-D tensor.
    pub fn norm_rows(&mut self, x: Var) -> Result<Var> {
        let (r, cols) = self.rows("norm_rows", x)?;
        let out = self.data(x).chunks(cols).map(|row| row.iter().map(|&v| v * v).sum::<T>().sqrt()).collect();
        let value = Tensor::new(vec![r], out)?;
        Ok(self.push(value, &[x], Op::NormRows { x, cols }))
    }

    /// Forward difference along `axis`: `y[i] = x[i + 1] - x[i]`.
    pub fn diff_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || shape[axis] < 2 {
            return Err(shape_err("diff_axis", format!("axis {axis} of {shape:?} needs length >= 2")));
        }
        let (outer, len, inner) = split_axis(&shape, axis);
        let xd = self.data(x);
        let mut out = Vec::with_capacity(outer * (len - 1) * inner);
        for o in 0..outer {
            for l in 0..len - 1 {
                let a = &xd[(o * len + l) * inner..(o * len + l + 1) * inner];
                let b = &xd[(o * len + l + 1) * inner..(o * len + l + 2) * inner];
                out.extend(a.iter().zip(b).map(|(&p, &q)| q - p));
            }
        }
        let mut out_shape = shape;
        out_shape[axis] -= 1;
        let value = Tensor::new(out_shape, out)?;
        Ok(self.push(value, &[x], Op::DiffAxis { x, outer, len, inner }))
    }

    /// Mean over rows of `-sum(target * ln(max(p, eps)))` for a 2-D probability tensor.
    pub fn cross_entropy(&mut self, p: Var, target: &Tensor<T>, eps: f64) -> Result<Var> {
        let (r, cols) = self.rows("cross_entropy", p)?;
        if target.shape() != self.shape(p) {
            return Err(shape_err("cross_entropy", format!("target {:?} vs probs {:?}", target.shape(), self.shape(p))));
        }
        let eps = T::of(eps);
        let total: T = self
            .data(p)
            .iter()
            .zip(target.data())
            .map(|(&pv, &tv)| if tv == T::zero() { T::zero() } else { -tv * pv.max(eps).ln() })
            .sum();
        let value = Tensor::scalar(total / T::of(r as f64));
        Ok(self.push(value, &[p], Op::CrossEntropy { p, target: target.data().to_vec(), cols, eps }))
    }

    /// Elementwise op with caller-provided forward and backward rules.
    pub fn custom(&mut self, x: Var, forward: impl Fn(T) -> T, backward: CustomBackward<T>) -> Var {
        let v = self.value(x);
        let value = Tensor::new(v.shape().to_vec(), v.data().iter().map(|&a| forward(a)).collect()).expect("same shape");
        self.push(value, &[x], Op::Custom { x, backward })
    }

    /// Reverse sweep from a scalar root. Consumes the tape; returns leaf gradients.
    pub fn backward(self, root: Var) -> Result<Gradients<T>> {
        let root_shape = self.shape(root).to_vec();
        if root_shape.iter().product::<usize>() != 1 {
            return Err(AutodiffError::NonScalarRoot(root_shape));
        }
        let nodes = self.nodes;
        let mut grads: Vec<Option<Vec<T>>> = (0..nodes.len()).map(|_| None).collect();
        if !nodes[root.0].requires_grad {
            return Ok(Gradients { grads });
        }
        grads[root.0] = Some(vec![T::one()]);

        // Accumulation buffer for an input, or None when it needs no gradient.
        fn slot<'a, T: Real>(nodes: &[Node<T>], grads: &'a mut [Option<Vec<T>>], v: Var) -> Option<&'a mut Vec<T>> {
            let node = &nodes[v.0];
            if !node.requires_grad {
                return None;
            }
            Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); node.value.numel()]))
        }

        for i in (0..=root.0).rev() {
            let node = &nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let y = node.value.data();
            let val = |v: Var| nodes[v.0].value.data();
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(g);
                }
                Op::Conv { x, w, b, geom } => {
                    let rows = geom.col_rows();
                    let area = geom.out_area();
                    let xd = val(*x);
                    let wd = val(*w);
                    let mut cols = vec![T::zero(); rows * area];
                    for s in 0..geom.n {
                        let dy = &g[s * geom.out_sample()..(s + 1) * geom.out_sample()];
                        if let Some(dw) = slot(&nodes, &mut grads, *w) {
                            im2col(geom, &xd[s * geom.in_sample()..(s + 1) * geom.in_sample()], &mut cols);
                            matmul_into(MatRef::new(dy, geom.k, area), MatRef::new(&cols, rows, area).t(), T::one(), dw);
                        }
                        if let Some(dx) = slot(&nodes, &mut grads, *x) {
                            matmul_into(MatRef::new(wd, geom.k, rows).t(), MatRef::new(dy, geom.k, area), T::zero(), &mut cols);
                            col2im_add(geom, &cols, &mut dx[s * geom.in_sample()..(s + 1) * geom.in_sample()]);
                        }
                        if let Some(b) = b {
                            if let Some(db) = slot(&nodes, &mut grads, *b) {
                                for (ki, d) in db.iter_mut().enumerate() {
                                    *d += dy[ki * area..(ki + 1) * area].iter().copied().sum::<T>();
                                }
                            }
                        }
                    }
                }
                Op::Linear { x, w, b } => {
                    let xs = nodes[x.0].value.shape();
                    let (n, d) = (xs[0], xs[1]);
                    let e = nodes[w.0].value.shape()[1];
                    if let Some(dx) = slot(&nodes, &mut grads, *x) {
                        matmul_into(MatRef::new(&g, n, e), MatRef::new(val(*w), d, e).t(), T::one(), dx);
                    }
                    if let Some(dw) = slot(&nodes, &mut grads, *w) {
                        matmul_into(MatRef::new(val(*x), n, d).t(), MatRef::new(&g, n, e), T::one(), dw);
                    }
                    if let Some(b) = b {
                        if let Some(db) = slot(&nodes, &mut grads, *b) {
                            for row in g.chunks(e) {
                                for (d, &v) in db.iter_mut().zip(row) {
                                    *d += v;
                                }
                            }
                        }
                    }
                }
                Op::LeakyRelu { x, slope } => {
                    let xd = val(*x);
                    if let Some(dx) = slot(&nodes, &mut grads, *x) {
                        for ((d, &gv), &a) in dx.iter_mut().zip(&g).zip(xd) {
                            *d += if a > T::zero() { gv } else { gv * *slope };
                        }
                    }
                }
                Op::AvgPoolLast { x, factor } => {
                    let inv = T::one() / T::of(*factor as f64);
                    if let Some(dx) = slot(&nodes, &mut grads, *x) {
                        for (chunk, &gv) in dx.chunks_mut(*factor).zip(&g) {
                            for d in chunk {
                                *d += gv * inv;
                            }
                        }
                    }
                }
                Op::MeanAxis { x, outer, len, inner } => {
                    let inv = T::one() / T::of(*len as f64);
                    if let Some(dx) = slot(&nodes, &mut grads, *x) {
                        for o in 0..*outer {
                            let src = &g[o * inner..(o + 1) * inner];
                            for l in 0..*len {
                                let dst = &mut dx[(o * len + l) * inner..(o * len + l + 1) * inner];
                                for (d, &s) in dst.iter_mut().zip(src) {
                                    *d += s * inv;
                                }
                            }
                        }
                    }
                }
                Op::Reshape { x } => {
                    if let Some(dx) = slot(&nodes, &mut grads, *x) {
                        for (d, &gv) in dx.iter_mut().zip(&g) {
                            *d += gv;
                        }
                    }
                }
                Op::Transpose12 { x, d0, d1, d2 } => {
                    if let Some(dx) = slot(&nodes, &mut grads, *x) {
                        for a in 0..*d0 {
                            for i in 0..*d1 {
                                for j in 0..*d2 {
                                    dx[(a * d1 + i) * d2 + j] += g[(a * d2 + j) * d1 + i];
                                }
                            }
                        }
                    }
                }
                Op::Add { a, b } | Op::Sub { a, b } => {
                    let sign = if matches!(node.op, Op::Sub { .. }) { -T::one() } else { T::one() };
                    if let Some(da) = slot(&nodes, &mut grads, *a) {
                        for (d, &gv) in da.iter_mut().zip(&g) {
                            *d += gv;
                        }
                    }
                    if let Some(db) = slot(&nodes, &mut grads, *b) {
                        for (d, &gv) in db.iter_mut().zip(&g) {
                            *d += sign * gv;
                        }
                    }
                }
                Op::Mul { a, b } => {
                    let (ad, bd) = (val(*a), val(*b));
                    if let Some(da) = slot(&nodes, &mut grads, *a) {
                        for ((d, &gv), &q) in da.iter_mut().zip(&g).zip(bd) {
                            *d += gv * q;
                        }
                    }
                    if let Some(db) = slot(&nodes, &mut grads, *b) {
                        for ((d, &gv), &p) in db.iter_mut().zip(&g).zip(ad) {
                            *d += gv * p;
                        }
                    }
                }
                Op::Scale { x, c } => {
                    if let Some(dx) = slot(&nodes, &mut grads, *x) {
                        for (d, &gv) in dx.iter_mut().zip(&g) {
                            *d += gv * *c;
                        }
                    }
                }
                Op::Sum { x } | Op::Mean { x } => {
                    let n = nodes[x.0].value.numel();
                    let gv = if matches!(node.op, Op::Mean { .. }) { g[0] / T::of(n as f64) } else { g[0] };
                    if let Some(dx) = slot(&nodes, &mut grads, *x) {
                        for d in dx.iter_mut() {
                            *d += gv;
                        }
                    }
                }
                Op::SoftmaxRows { x, cols } => {
                    if let Some(dx) = slot(&nodes, &mut grads, *x) {
                        for ((drow, yrow), grow) in dx.chunks_mut(*cols).zip(y.chunks(*cols)).zip(g.chunks(*cols)) {
                            let dot: T = yrow.iter().zip(grow).map(|(&a, &b)| a * b).sum();
                            for ((d, &yv), &gv) in drow.iter_mut().zip(yrow).zip(grow) {
                                *d += yv * (gv - dot);
                            }
                        }
                    }
                }
                Op::StdRows { x, cols } => {
                    let xd = val(*x);
                    let inv = T::one() / T::of(*cols as f64);
                    if let Some(dx) = slot(&nodes, &mut grads, *x) {
                        for (r, (drow, xrow)) in dx.chunks_mut(*cols).zip(xd.chunks(*cols)).enumerate() {
                            let s = y[r];
                            // subgradient 0 at the zero-variance point
                            if s <= T::zero() {
                                continue;
                            }
                            let mu = xrow.iter().copied().sum::<T>() * inv;
                            let k = g[r] * inv / s;
                            for (d, &v) in drow.iter_mut().zip(xrow) {
                                *d += k * (v - mu);
                            }
                        }
                    }
                }
                Op::NormRows { x, cols } => {
                    let xd = val(*x);
                    if let Some(dx) = slot(&nodes, &mut grads, *x) {
                        for (r, (drow, xrow)) in dx.chunks_mut(*cols).zip(xd.chunks(*cols)).enumerate() {
                            if y[r] <= T::zero() {
                                continue;
                            }
                            let k = g[r] / y[r];
                            for (d, &v) in drow.iter_mut().zip(xrow) {
                                *d += k * v;
                            }
                        }
                    }
                }
                Op::DiffAxis { x, outer, len, inner } => {
                    if let Some(dx) = slot(&nodes, &mut grads, *x) {
                        for o in 0..*outer {
                            for l in 0..len - 1 {
                                let src = &g[(o * (len - 1) + l) * inner..(o * (len - 1) + l + 1) * inner];
                                for (k, &gv) in src.iter().enumerate() {
                                    dx[(o * len + l) * inner + k] -= gv;
                                    dx[(o * len + l + 1) * inner + k] += gv;
                                }
                            }
                        }
                    }
                }
                Op::CrossEntropy { p, target, cols, eps } => {
                    let pd = val(*p);
                    let rows = pd.len() / cols;
                    let k = g[0] / T::of(rows as f64);
                    if let Some(dp) = slot(&nodes, &mut grads, *p) {
                        for ((d, &pv), &tv) in dp.iter_mut().zip(pd).zip(target) {
                            if pv > *eps {
                                *d -= k * tv / pv;
                            }
                        }
                    }
                }
                Op::Custom { x, backward } => {
                    let dxv = backward(val(*x), y, &g);
                    if let Some(dx) = slot(&nodes, &mut grads, *x) {
                        for (d, v) in dx.iter_mut().zip(dxv) {
                            *d += v;
                        }
                    }
                }
            }
        }
        // keep leaf gradients only
        for (g, node) in grads.iter_mut().zip(&nodes) {
            if !matches!(node.op, Op::Leaf) {
                *g = None;
            }
        }
        Ok(Gradients { grads })
    }
}
