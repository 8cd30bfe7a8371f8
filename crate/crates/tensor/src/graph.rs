//! Tape-based reverse-mode differentiation.
//!
//! Every op appends a node holding its forward value. Nodes whose inputs do
//! not require gradients are skipped on the backward sweep, so binding a
//! parameter set as constants freezes it without any extra bookkeeping.

use std::cell::RefCell;
use std::rc::Rc;

use crate::conv::{conv2d_backward, conv2d_forward, ConvGeom};
use crate::element::Element;
use crate::error::{invalid, Result, TensorError};
use crate::tensor::Tensor;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    LeakyRelu(Var, T),
    Tanh(Var),
    Abs(Var),
    Square(Var),
    Sum(Var),
    Mean(Var),
    Reshape(Var),
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeom,
        out_ch: usize,
    },
    Upsample2x(Var),
    MaxPool2 {
        x: Var,
        argmax: Vec<usize>,
    },
    InstanceNorm {
        x: Var,
        inv_std: Vec<T>,
    },
    GlobalAvgPool(Var),
    Concat(Vec<Var>),
    Slice {
        x: Var,
        start: usize,
    },
    AbsCosine {
        x: Var,
        y: Var,
        scale: T,
    },
    ScalarFn {
        x: Var,
        grad: Tensor<T>,
    },
}

struct Node<T> {
    value: Rc<Tensor<T>>,
    op: Op<T>,
    requires_grad: bool,
}

/// A single-use computation tape.
pub struct Graph<T: Element> {
    nodes: RefCell<Vec<Node<T>>>,
}

impl<T: Element> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of one backward sweep, indexed by [`Var`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Element> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

impl<T: Element> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op,
            requires_grad,
        });
        Var(nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes.borrow()[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> Rc<Tensor<T>> {
        Rc::clone(&self.nodes.borrow()[v.0].value)
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    pub fn leaf(&self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    /// A constant copy of `v`'s current value; gradients stop here.
    pub fn detach(&self, v: Var) -> Var {
        let value = (*self.value(v)).clone();
        self.constant(value)
    }

    fn binary(
        &self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(T, T) -> T,
        op: fn(Var, Var) -> Op<T>,
    ) -> Result<Var> {
        let value = self.value(a).zip_map(&self.value(b), name, f)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, op(a, b), rg))
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add)
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub)
    }

    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul)
    }

    pub fn scale(&self, a: Var, c: T) -> Var {
        let value = self.value(a).map(|x| x * c);
        self.push(value, Op::Scale(a, c), self.rg(a))
    }

    pub fn add_scalar(&self, a: Var, c: T) -> Var {
        let value = self.value(a).map(|x| x + c);
        self.push(value, Op::AddScalar(a), self.rg(a))
    }

    pub fn leaky_relu(&self, a: Var, slope: T) -> Var {
        let value = self.value(a).map(|x| if x > T::zero() { x } else { x * slope });
        self.push(value, Op::LeakyRelu(a, slope), self.rg(a))
    }

    pub fn relu(&self, a: Var) -> Var {
        self.leaky_relu(a, T::zero())
    }

    pub fn tanh(&self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.tanh());
        self.push(value, Op::Tanh(a), self.rg(a))
    }

    pub fn abs(&self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.abs());
        self.push(value, Op::Abs(a), self.rg(a))
    }

    pub fn square(&self, a: Var) -> Var {
        let value = self.value(a).map(|x| x * x);
        self.push(value, Op::Square(a), self.rg(a))
    }

    pub fn sum(&self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum());
        self.push(value, Op::Sum(a), self.rg(a))
    }

    pub fn mean(&self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).mean());
        self.push(value, Op::Mean(a), self.rg(a))
    }

    pub fn reshape(&self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).reshape(shape)?;
        Ok(self.push(value, Op::Reshape(a), self.rg(a)))
    }

    /// Zero-padded 2-D convolution. `w` is `[out, in, kh, kw]`, `b` is `[out]`.
    pub fn conv2d(&self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let xv = self.value(x);
        let wv = self.value(w);
        let (n, c, h, wd) = xv.dims4("conv2d")?;
        let (out_ch, wc, kh, kw) = wv.dims4("conv2d")?;
        if wc != c {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d",
                expected: vec![n, wc, h, wd],
                got: xv.shape().to_vec(),
            });
        }
        let geom = ConvGeom::new(c, h, wd, kh, kw, stride, pad)
            .ok_or_else(|| invalid("conv2d", format!("kernel {kh}x{kw} does not fit {h}x{wd}")))?;
        let bv = match b {
            Some(b) => {
                let bv = self.value(b);
                bv.expect_shape("conv2d bias", &[out_ch])?;
                Some(bv)
            }
            None => None,
        };
        let out = conv2d_forward(xv.data(), n, wv.data(), bv.as_ref().map(|t| t.data()), out_ch, &geom);
        let value = Tensor::from_vec(&[n, out_ch, geom.ho, geom.wo], out)?;
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        Ok(self.push(value, Op::Conv2d { x, w, b, geom, out_ch }, rg))
    }

    /// Nearest-neighbour 2× spatial upsampling.
    pub fn upsample2x(&self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let (n, c, h, w) = xv.dims4("upsample2x")?;
        let src = xv.data();
        let mut out = vec![T::zero(); n * c * 4 * h * w];
        for p in 0..n * c {
            let s = &src[p * h * w..(p + 1) * h * w];
            let d = &mut out[p * 4 * h * w..(p + 1) * 4 * h * w];
            for y in 0..2 * h {
                for xx in 0..2 * w {
                    d[y * 2 * w + xx] = s[(y / 2) * w + xx / 2];
                }
            }
        }
        let value = Tensor::from_vec(&[n, c, 2 * h, 2 * w], out)?;
        Ok(self.push(value, Op::Upsample2x(x), self.rg(x)))
    }

    /// 2×2 max pooling with stride 2 (odd trailing rows/cols are dropped).
    pub fn max_pool2(&self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let (n, c, h, w) = xv.dims4("max_pool2")?;
        let (ho, wo) = (h / 2, w / 2);
        if ho == 0 || wo == 0 {
            return Err(invalid("max_pool2", format!("input {h}x{w} too small")));
        }
        let src = xv.data();
        let mut out = Vec::with_capacity(n * c * ho * wo);
        let mut argmax = Vec::with_capacity(n * c * ho * wo);
        for p in 0..n * c {
            let base = p * h * w;
            for y in 0..ho {
                for xx in 0..wo {
                    let mut best = base + 2 * y * w + 2 * xx;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = base + (2 * y + dy) * w + 2 * xx + dx;
                        if src[idx] > src[best] {
                            best = idx;
                        }
                    }
                    out.push(src[best]);
                    argmax.push(best);
                }
            }
        }
        let value = Tensor::from_vec(&[n, c, ho, wo], out)?;
        Ok(self.push(value, Op::MaxPool2 { x, argmax }, self.rg(x)))
    }

    /// Per-sample, per-channel normalisation over spatial positions (no affine).
    pub fn instance_norm(&self, x: Var, eps: f64) -> Result<Var> {
        let xv = self.value(x);
        let (n, c, h, w) = xv.dims4("instance_norm")?;
        let hw = h * w;
        let inv_hw = T::from_f64(1.0 / hw as f64);
        let eps = T::from_f64(eps);
        let src = xv.data();
        let mut out = vec![T::zero(); src.len()];
        let mut inv_std = Vec::with_capacity(n * c);
        for p in 0..n * c {
            let s = &src[p * hw..(p + 1) * hw];
            let mean = s.iter().copied().sum::<T>() * inv_hw;
            let var = s.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_hw;
            let is = T::one() / (var + eps).sqrt();
            for (o, &v) in out[p * hw..(p + 1) * hw].iter_mut().zip(s) {
                *o = (v - mean) * is;
            }
            inv_std.push(is);
        }
        let value = Tensor::from_vec(&[n, c, h, w], out)?;
        Ok(self.push(value, Op::InstanceNorm { x, inv_std }, self.rg(x)))
    }

    /// `[n, c, h, w] -> [n, c]` spatial mean.
    pub fn global_avg_pool(&self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let (n, c, h, w) = xv.dims4("global_avg_pool")?;
        let hw = h * w;
        let inv = T::from_f64(1.0 / hw as f64);
        let out = xv
            .data()
            .chunks(hw)
            .map(|s| s.iter().copied().sum::<T>() * inv)
            .collect();
        let value = Tensor::from_vec(&[n, c], out)?;
        Ok(self.push(value, Op::GlobalAvgPool(x), self.rg(x)))
    }

    pub fn concat_batch(&self, parts: &[Var]) -> Result<Var> {
        let values: Vec<_> = parts.iter().map(|&p| self.value(p)).collect();
        let refs: Vec<&Tensor<T>> = values.iter().map(|v| v.as_ref()).collect();
        let value = Tensor::concat_batch(&refs)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(value, Op::Concat(parts.to_vec()), rg))
    }

    pub fn slice_batch(&self, x: Var, start: usize, len: usize) -> Result<Var> {
        let value = self.value(x).slice_batch(start, len)?;
        Ok(self.push(value, Op::Slice { x, start }, self.rg(x)))
    }

    /// Pairwise `|cos(x_j, y_i)|·scale − offset` as a `[kx, ky]` matrix.
    ///
    /// Rows with zero norm have cosine 0 with everything.
    pub fn abs_cosine_scores(&self, x: Var, y: Var, scale: T, offset: T) -> Result<Var> {
        let xv = self.value(x);
        let yv = self.value(y);
        let (kx, d) = rank2(&xv, "abs_cosine_scores")?;
        let (ky, dy) = rank2(&yv, "abs_cosine_scores")?;
        if d != dy {
            return Err(TensorError::ShapeMismatch {
                op: "abs_cosine_scores",
                expected: vec![ky, d],
                got: yv.shape().to_vec(),
            });
        }
        let cos = cosine_matrix(xv.data(), yv.data(), kx, ky, d);
        let out = cos.iter().map(|&c| c.abs() * scale - offset).collect();
        let value = Tensor::from_vec(&[kx, ky], out)?;
        let rg = self.rg(x) || self.rg(y);
        Ok(self.push(value, Op::AbsCosine { x, y, scale }, rg))
    }

    /// Scalar function of `x` whose value and gradient were computed elsewhere.
    pub fn scalar_fn(&self, x: Var, value: T, grad: Tensor<T>) -> Result<Var> {
        grad.expect_shape("scalar_fn", self.value(x).shape())?;
        Ok(self.push(Tensor::scalar(value), Op::ScalarFn { x, grad }, self.rg(x)))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let nodes = self.nodes.borrow();
        if nodes[loss.0].value.numel() != 1 {
            return Err(invalid("backward", "loss must be a scalar"));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(nodes[loss.0].value.shape(), T::one()));

        let accumulate = |grads: &mut Vec<Option<Tensor<T>>>, v: Var, g: Tensor<T>| {
            if !nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        };

        for id in (0..=loss.0).rev() {
            let node = &nodes[id];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            let val = |v: Var| Rc::clone(&nodes[v.0].value);
            let needs = |v: Var| nodes[v.0].requires_grad;
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::Add(a, b) => {
                    if needs(*b) {
                        accumulate(&mut grads, *b, g.clone());
                    }
                    accumulate(&mut grads, *a, g);
                }
                Op::Sub(a, b) => {
                    if needs(*b) {
                        accumulate(&mut grads, *b, g.map(|x| -x));
                    }
                    accumulate(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (val(*a), val(*b));
                    if needs(*a) {
                        accumulate(&mut grads, *a, g.zip_map(&bv, "mul", |x, y| x * y)?);
                    }
                    if needs(*b) {
                        accumulate(&mut grads, *b, g.zip_map(&av, "mul", |x, y| x * y)?);
                    }
                }
                Op::Scale(a, c) => {
                    let c = *c;
                    accumulate(&mut grads, *a, g.map(|x| x * c));
                }
                Op::AddScalar(a) | Op::Reshape(a) => {
                    let shape = nodes[a.0].value.shape().to_vec();
                    accumulate(&mut grads, *a, Tensor::from_vec(&shape, g.into_data())?);
                }
                Op::LeakyRelu(a, slope) => {
                    let slope = *slope;
                    let av = val(*a);
                    let d = g.zip_map(&av, "leaky_relu", |gi, x| if x > T::zero() { gi } else { gi * slope })?;
                    accumulate(&mut grads, *a, d);
                }
                Op::Tanh(a) => {
                    let d = g.zip_map(&node.value, "tanh", |gi, y| gi * (T::one() - y * y))?;
                    accumulate(&mut grads, *a, d);
                }
                Op::Abs(a) => {
                    let av = val(*a);
                    let d = g.zip_map(&av, "abs", |gi, x| gi * sign(x))?;
                    accumulate(&mut grads, *a, d);
                }
                Op::Square(a) => {
                    let av = val(*a);
                    let two = T::from_f64(2.0);
                    let d = g.zip_map(&av, "square", |gi, x| gi * two * x)?;
                    accumulate(&mut grads, *a, d);
                }
                Op::Sum(a) => {
                    let shape = nodes[a.0].value.shape().to_vec();
                    accumulate(&mut grads, *a, Tensor::full(&shape, g.item()));
                }
                Op::Mean(a) => {
                    let av = &nodes[a.0].value;
                    let scale = g.item() / T::from_f64(av.numel() as f64);
                    accumulate(&mut grads, *a, Tensor::full(av.shape(), scale));
                }
                Op::Conv2d { x, w, b, geom, out_ch } => {
                    let (xv, wv) = (val(*x), val(*w));
                    let n = xv.shape()[0];
                    let cg = conv2d_backward(
                        xv.data(),
                        n,
                        wv.data(),
                        *out_ch,
                        geom,
                        g.data(),
                        needs(*x),
                        needs(*w),
                        b.is_some_and(needs),
                    );
                    if let Some(dx) = cg.dx {
                        accumulate(&mut grads, *x, Tensor::from_vec(xv.shape(), dx)?);
                    }
                    if let Some(dw) = cg.dw {
                        accumulate(&mut grads, *w, Tensor::from_vec(wv.shape(), dw)?);
                    }
                    if let (Some(b), Some(db)) = (b, cg.db) {
                        accumulate(&mut grads, *b, Tensor::from_vec(&[*out_ch], db)?);
                    }
                }
                Op::Upsample2x(a) => {
                    let av = val(*a);
                    let (n, c, h, w) = av.dims4("upsample2x")?;
                    let mut d = vec![T::zero(); n * c * h * w];
                    let gd = g.data();
                    for p in 0..n * c {
                        let src = &gd[p * 4 * h * w..(p + 1) * 4 * h * w];
                        let dst = &mut d[p * h * w..(p + 1) * h * w];
                        for y in 0..2 * h {
                            for xx in 0..2 * w {
                                let k = (y / 2) * w + xx / 2;
                                dst[k] = dst[k] + src[y * 2 * w + xx];
                            }
                        }
                    }
                    accumulate(&mut grads, *a, Tensor::from_vec(av.shape(), d)?);
                }
                Op::MaxPool2 { x, argmax } => {
                    let xv = val(*x);
                    let mut d = vec![T::zero(); xv.numel()];
                    for (&idx, &gi) in argmax.iter().zip(g.data()) {
                        d[idx] = d[idx] + gi;
                    }
                    accumulate(&mut grads, *x, Tensor::from_vec(xv.shape(), d)?);
                }
                Op::InstanceNorm { x, inv_std } => {
                    let xhat = &node.value;
                    let (_, _, h, w) = xhat.dims4("instance_norm")?;
                    let hw = h * w;
                    let inv_hw = T::from_f64(1.0 / hw as f64);
                    let mut d = vec![T::zero(); xhat.numel()];
                    for (p, &is) in inv_std.iter().enumerate() {
                        let gs = &g.data()[p * hw..(p + 1) * hw];
                        let xs = &xhat.data()[p * hw..(p + 1) * hw];
                        let sum_g = gs.iter().copied().sum::<T>();
                        let sum_gx = gs.iter().zip(xs).map(|(&a, &b)| a * b).sum::<T>();
                        for ((o, &gi), &xh) in d[p * hw..(p + 1) * hw].iter_mut().zip(gs).zip(xs) {
                            *o = is * (gi - inv_hw * sum_g - xh * inv_hw * sum_gx);
                        }
                    }
                    accumulate(&mut grads, *x, Tensor::from_vec(xhat.shape(), d)?);
                }
                Op::GlobalAvgPool(a) => {
                    let av = val(*a);
                    let (_, _, h, w) = av.dims4("global_avg_pool")?;
                    let inv = T::from_f64(1.0 / (h * w) as f64);
                    let d = g
                        .data()
                        .iter()
                        .flat_map(|&gi| std::iter::repeat_n(gi * inv, h * w))
                        .collect();
                    accumulate(&mut grads, *a, Tensor::from_vec(av.shape(), d)?);
                }
                Op::Concat(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let len = nodes[p.0].value.shape()[0];
                        if needs(p) {
                            accumulate(&mut grads, p, g.slice_batch(start, len)?);
                        }
                        start += len;
                    }
                }
                Op::Slice { x, start } => {
                    let xv = val(*x);
                    let mut d = Tensor::zeros(xv.shape());
                    let off = start * (xv.numel() / xv.shape()[0]);
                    d.data_mut()[off..off + g.numel()].copy_from_slice(g.data());
                    accumulate(&mut grads, *x, d);
                }
                Op::AbsCosine { x, y, scale } => {
                    let (xv, yv) = (val(*x), val(*y));
                    let (kx, d) = rank2(&xv, "abs_cosine_scores")?;
                    let (ky, _) = rank2(&yv, "abs_cosine_scores")?;
                    let (dx, dy) = abs_cosine_backward(xv.data(), yv.data(), kx, ky, d, *scale, g.data());
                    if needs(*x) {
                        accumulate(&mut grads, *x, Tensor::from_vec(xv.shape(), dx)?);
                    }
                    if needs(*y) {
                        accumulate(&mut grads, *y, Tensor::from_vec(yv.shape(), dy)?);
                    }
                }
                Op::ScalarFn { x, grad } => {
                    let gi = g.item();
                    accumulate(&mut grads, *x, grad.map(|v| v * gi));
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn sign<T: Element>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

fn rank2<T: Element>(t: &Tensor<T>, op: &'static str) -> Result<(usize, usize)> {
    match t.shape() {
        &[k, d] => Ok((k, d)),
        other => Err(invalid(op, format!("expected [k, d], got {other:?}"))),
    }
}

fn norms<T: Element>(rows: &[T], k: usize, d: usize) -> Vec<T> {
    (0..k)
        .map(|r| rows[r * d..(r + 1) * d].iter().map(|&v| v * v).sum::<T>().sqrt())
        .collect()
}

fn cosine_matrix<T: Element>(x: &[T], y: &[T], kx: usize, ky: usize, d: usize) -> Vec<T> {
    let nx = norms(x, kx, d);
    let ny = norms(y, ky, d);
    let mut out = vec![T::zero(); kx * ky];
    for j in 0..kx {
        for i in 0..ky {
            if nx[j] > T::zero() && ny[i] > T::zero() {
                let dot = x[j * d..(j + 1) * d]
                    .iter()
                    .zip(&y[i * d..(i + 1) * d])
                    .map(|(&a, &b)| a * b)
                    .sum::<T>();
                out[j * ky + i] = dot / (nx[j] * ny[i]);
            }
        }
    }
    out
}

fn abs_cosine_backward<T: Element>(
    x: &[T],
    y: &[T],
    kx: usize,
    ky: usize,
    d: usize,
    scale: T,
    g: &[T],
) -> (Vec<T>, Vec<T>) {
    let nx = norms(x, kx, d);
    let ny = norms(y, ky, d);
    let cos = cosine_matrix(x, y, kx, ky, d);
    let mut dx = vec![T::zero(); kx * d];
    let mut dy = vec![T::zero(); ky * d];
    for j in 0..kx {
        for i in 0..ky {
            let c = cos[j * ky + i];
            if nx[j] == T::zero() || ny[i] == T::zero() {
                continue;
            }
            let coef = g[j * ky + i] * scale * sign(c);
            if coef == T::zero() {
                continue;
            }
            let (xj, yi) = (&x[j * d..(j + 1) * d], &y[i * d..(i + 1) * d]);
            let inv_xy = T::one() / (nx[j] * ny[i]);
            let cx = c / (nx[j] * nx[j]);
            let cy = c / (ny[i] * ny[i]);
            for t in 0..d {
                dx[j * d + t] = dx[j * d + t] + coef * (yi[t] * inv_xy - cx * xj[t]);
                dy[i * d + t] = dy[i * d + t] + coef * (xj[t] * inv_xy - cy * yi[t]);
            }
        }
    }
    (dx, dy)
}
