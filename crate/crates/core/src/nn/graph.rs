//! Tape-based reverse-mode differentiation over a fixed op set.
//!
//! A [`Graph`] records every op applied during a forward pass. Values are
//! computed eagerly, so the graph doubles as the inference path. Parameters
//! are read from a borrowed [`ParamStore`] and never copied onto the tape.

use super::conv::{col2im, im2col, ConvGeom};
use super::{Gradients, ParamId, ParamStore, Real, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(ParamId),
    Affine { x: Var, w: Var, b: Var },
    Relu(Var),
    Conv { x: Var, k: Var, b: Var, geom: ConvGeom },
    Deconv { x: Var, k: Var, b: Var, geom: ConvGeom },
    Reshape(Var),
    Concat(Vec<Var>),
    Slice { x: Var, start: usize },
    Add(Var, Var),
    Scale(Var, f64),
    Mse { pred: Var, target: Var, normalizer: f64 },
}

struct Node<T> {
    op: Op,
    value: Tensor<T>,
    needs_grad: bool,
}

pub struct Graph<'p, T: Real = f32> {
    params: &'p ParamStore<T>,
    nodes: Vec<Node<T>>,
}

impl<'p, T: Real> Graph<'p, T> {
    pub fn new(params: &'p ParamStore<T>) -> Self {
        Graph {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn params(&self) -> &'p ParamStore<T> {
        self.params
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        match self.nodes[v.0].op {
            Op::Param(id) => self.params.get(id),
            _ => &self.nodes[v.0].value,
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    /// Scalar value of a loss node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v).data()[0].f64()
    }

    fn push(&mut self, op: Op, value: Tensor<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A constant leaf; no gradient flows into it.
    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.push(Op::Input, t, false)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.push(Op::Param(id), Tensor::zeros(&[0]), true)
    }

    /// `x W^T + b` for `x: [batch, in]`, `W: [out, in]`, `b: [out]`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xs, ws, bs) = (self.shape(x), self.shape(w), self.shape(b));
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] {
            return Err(Error::shape(
                "affine",
                &[xs.first().copied().unwrap_or(0), ws.get(1).copied().unwrap_or(0)],
                xs,
            ));
        }
        if bs != [ws[0]] {
            return Err(Error::shape("affine bias", &[ws[0]], bs));
        }
        let (batch, inp, out) = (xs[0], xs[1], ws[0]);
        let mut y = Tensor::zeros(&[batch, out]);
        {
            let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
            for r in 0..batch {
                y.row_mut(r).copy_from_slice(bv.data());
            }
            T::gemm(
                batch,
                inp,
                out,
                T::one(),
                xv.data(),
                inp as isize,
                1,
                wv.data(),
                1,
                inp as isize,
                T::one(),
                y.data_mut(),
                out as isize,
                1,
            );
        }
        let ng = self.needs(x) || self.needs(w) || self.needs(b);
        Ok(self.push(Op::Affine { x, w, b }, y, ng))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let y = self.value(x).map(|v| if v > T::zero() { v } else { T::zero() });
        let ng = self.needs(x);
        self.push(Op::Relu(x), y, ng)
    }

    /// Strided convolution. `x: [b, c, h, w]`, `k: [o, c, kk, kk]`, `bias: [o]`.
    pub fn conv2d(&mut self, x: Var, k: Var, bias: Var, geom: ConvGeom) -> Result<Var> {
        let (xs, ks) = (self.shape(x).to_vec(), self.shape(k).to_vec());
        if xs.len() != 4 || ks.len() != 4 || ks[1] != xs[1] || ks[2] != geom.kernel || ks[3] != geom.kernel {
            return Err(Error::shape("conv2d", &ks, &xs));
        }
        if self.shape(bias) != [ks[0]] {
            return Err(Error::shape("conv2d bias", &[ks[0]], self.shape(bias)));
        }
        let (batch, c, h, w, o) = (xs[0], xs[1], xs[2], xs[3], ks[0]);
        let (oh, ow) = match (geom.conv_out(h), geom.conv_out(w)) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Error::shape("conv2d extent", &[geom.kernel], &[h, w])),
        };
        let plane = oh * ow;
        let ckk = c * geom.kernel * geom.kernel;
        let mut y = Tensor::zeros(&[batch, o, oh, ow]);
        {
            let (xv, kv, bv) = (self.value(x), self.value(k), self.value(bias));
            let mut cols = vec![T::zero(); ckk * plane];
            for n in 0..batch {
                im2col(xv.row(n), c, h, w, geom, oh, ow, &mut cols);
                let out = y.row_mut(n);
                for (ch, chunk) in out.chunks_mut(plane).enumerate() {
                    chunk.iter_mut().for_each(|v| *v = bv.data()[ch]);
                }
                T::gemm(
                    o,
                    ckk,
                    plane,
                    T::one(),
                    kv.data(),
                    ckk as isize,
                    1,
                    &cols,
                    plane as isize,
                    1,
                    T::one(),
                    out,
                    plane as isize,
                    1,
                );
            }
        }
        let ng = self.needs(x) || self.needs(k) || self.needs(bias);
        Ok(self.push(Op::Conv { x, k, b: bias, geom }, y, ng))
    }

    /// Transposed convolution. `x: [b, c, h, w]`, `k: [c, o, kk, kk]`, `bias: [o]`.
    pub fn deconv2d(&mut self, x: Var, k: Var, bias: Var, geom: ConvGeom) -> Result<Var> {
        let (xs, ks) = (self.shape(x).to_vec(), self.shape(k).to_vec());
        if xs.len() != 4 || ks.len() != 4 || ks[0] != xs[1] || ks[2] != geom.kernel || ks[3] != geom.kernel {
            return Err(Error::shape("deconv2d", &ks, &xs));
        }
        if self.shape(bias) != [ks[1]] {
            return Err(Error::shape("deconv2d bias", &[ks[1]], self.shape(bias)));
        }
        let (batch, c, h, w, o) = (xs[0], xs[1], xs[2], xs[3], ks[1]);
        let (oh, ow) = match (geom.deconv_out(h), geom.deconv_out(w)) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Error::shape("deconv2d extent", &[geom.kernel], &[h, w])),
        };
        let plane_in = h * w;
        let okk = o * geom.kernel * geom.kernel;
        let mut y = Tensor::zeros(&[batch, o, oh, ow]);
        {
            let (xv, kv, bv) = (self.value(x), self.value(k), self.value(bias));
            let mut cols = vec![T::zero(); okk * plane_in];
            for n in 0..batch {
                T::gemm(
                    okk,
                    c,
                    plane_in,
                    T::one(),
                    kv.data(),
                    1,
                    okk as isize,
                    xv.row(n),
                    plane_in as isize,
                    1,
                    T::zero(),
                    &mut cols,
                    plane_in as isize,
                    1,
                );
                let out = y.row_mut(n);
                for (ch, chunk) in out.chunks_mut(oh * ow).enumerate() {
                    chunk.iter_mut().for_each(|v| *v = bv.data()[ch]);
                }
                col2im(&cols, o, oh, ow, geom, h, w, out);
            }
        }
        let ng = self.needs(x) || self.needs(k) || self.needs(bias);
        Ok(self.push(Op::Deconv { x, k, b: bias, geom }, y, ng))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let y = self.value(x).clone().reshape(shape)?;
        let ng = self.needs(x);
        Ok(self.push(Op::Reshape(x), y, ng))
    }

    /// Concatenation along the feature axis of 2-D values.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Usage("concat of nothing".into()));
        }
        for &p in parts {
            if self.shape(p).len() != 2 {
                return Err(Error::shape("concat", &[0, 0], self.shape(p)));
            }
        }
        let y = {
            let views: Vec<&Tensor<T>> = parts.iter().map(|&p| self.value(p)).collect();
            Tensor::concat_cols(&views)?
        };
        let ng = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(Op::Concat(parts.to_vec()), y, ng))
    }

    /// Feature columns `[start, start + len)` of a 2-D value.
    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        if self.shape(x).len() != 2 {
            return Err(Error::shape("slice", &[0, 0], self.shape(x)));
        }
        let y = self.value(x).slice_cols(start, len)?;
        let ng = self.needs(x);
        Ok(self.push(Op::Slice { x, start }, y, ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape("add", self.shape(a), self.shape(b)));
        }
        let mut y = self.value(a).clone();
        for (o, &v) in y.data_mut().iter_mut().zip(self.value(b).data()) {
            *o = *o + v;
        }
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Op::Add(a, b), y, ng))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let f = T::of(s);
        let y = self.value(x).map(|v| v * f);
        let ng = self.needs(x);
        self.push(Op::Scale(x, s), y, ng)
    }

    /// `(1 / normalizer) * sum over batch and components of (pred - target)^2`.
    pub fn mse(&mut self, pred: Var, target: Var, normalizer: f64) -> Result<Var> {
        if self.shape(pred) != self.shape(target) {
            return Err(Error::shape("mse", self.shape(target), self.shape(pred)));
        }
        if !(normalizer > 0.0) {
            return Err(Error::Usage(format!("mse normalizer must be positive, got {normalizer}")));
        }
        let loss = sq_dist(self.value(pred).data(), self.value(target).data()) / normalizer;
        let ng = self.needs(pred) || self.needs(target);
        Ok(self.push(
            Op::Mse {
                pred,
                target,
                normalizer,
            },
            Tensor::scalar(T::of(loss)),
            ng,
        ))
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.nodes.is_empty() {
            return Err(Error::Usage("backward called before any forward op".into()));
        }
        if loss.0 >= self.nodes.len() {
            return Err(Error::Usage("loss node is not on this tape".into()));
        }
        if self.value(loss).len() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::scalar(T::one()));
        let mut out = Gradients::empty(self.params.len());

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            match &node.op {
                Op::Input => {}
                Op::Param(id) => match out.grads[id.0].as_mut() {
                    Some(acc) => add_into(acc, &g),
                    None => out.grads[id.0] = Some(g),
                },
                Op::Affine { x, w, b } => {
                    let (xv, wv) = (self.value(*x), self.value(*w));
                    let (batch, inp, outd) = (xv.rows(), xv.cols(), wv.rows());
                    if self.needs(*x) {
                        let mut dx = Tensor::zeros(xv.shape());
                        T::gemm(batch, outd, inp, T::one(), g.data(), outd as isize, 1, wv.data(), inp as isize, 1, T::zero(), dx.data_mut(), inp as isize, 1);
                        accumulate(&mut grads, *x, dx);
                    }
                    if self.needs(*w) {
                        let mut dw = Tensor::zeros(wv.shape());
                        T::gemm(outd, batch, inp, T::one(), g.data(), 1, outd as isize, xv.data(), inp as isize, 1, T::zero(), dw.data_mut(), inp as isize, 1);
                        accumulate(&mut grads, *w, dw);
                    }
                    if self.needs(*b) {
                        let mut db = Tensor::zeros(&[outd]);
                        for r in 0..batch {
                            for (d, &v) in db.data_mut().iter_mut().zip(g.row(r)) {
                                *d = *d + v;
                            }
                        }
                        accumulate(&mut grads, *b, db);
                    }
                }
                Op::Relu(x) => {
                    let mut dx = g;
                    for (d, &y) in dx.data_mut().iter_mut().zip(node.value.data()) {
                        if y <= T::zero() {
                            *d = T::zero();
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::Conv { x, k, b, geom } => {
                    let (xv, kv) = (self.value(*x), self.value(*k));
                    let (c, h, w) = (xv.shape()[1], xv.shape()[2], xv.shape()[3]);
                    let (o, oh, ow) = (g.shape()[1], g.shape()[2], g.shape()[3]);
                    let plane = oh * ow;
                    let ckk = c * geom.kernel * geom.kernel;
                    let mut cols = vec![T::zero(); ckk * plane];
                    let mut dk = Tensor::zeros(kv.shape());
                    let mut dx = self.needs(*x).then(|| Tensor::zeros(xv.shape()));
                    for n in 0..xv.rows() {
                        let gn = g.row(n);
                        if self.needs(*k) {
                            im2col(xv.row(n), c, h, w, *geom, oh, ow, &mut cols);
                            T::gemm(o, plane, ckk, T::one(), gn, plane as isize, 1, &cols, 1, plane as isize, T::one(), dk.data_mut(), ckk as isize, 1);
                        }
                        if let Some(dx) = dx.as_mut() {
                            T::gemm(ckk, o, plane, T::one(), kv.data(), 1, ckk as isize, gn, plane as isize, 1, T::zero(), &mut cols, plane as isize, 1);
                            col2im(&cols, c, h, w, *geom, oh, ow, dx.row_mut(n));
                        }
                    }
                    if self.needs(*k) {
                        accumulate(&mut grads, *k, dk);
                    }
                    if self.needs(*b) {
                        accumulate(&mut grads, *b, channel_sums(&g));
                    }
                    if let Some(dx) = dx {
                        accumulate(&mut grads, *x, dx);
                    }
                }
                Op::Deconv { x, k, b, geom } => {
                    let (xv, kv) = (self.value(*x), self.value(*k));
                    let (c, h, w) = (xv.shape()[1], xv.shape()[2], xv.shape()[3]);
                    let (o, oh, ow) = (g.shape()[1], g.shape()[2], g.shape()[3]);
                    let plane_in = h * w;
                    let okk = o * geom.kernel * geom.kernel;
                    let mut cols = vec![T::zero(); okk * plane_in];
                    let mut dk = Tensor::zeros(kv.shape());
                    let mut dx = self.needs(*x).then(|| Tensor::zeros(xv.shape()));
                    for n in 0..xv.rows() {
                        im2col(g.row(n), o, oh, ow, *geom, h, w, &mut cols);
                        if let Some(dx) = dx.as_mut() {
                            T::gemm(c, okk, plane_in, T::one(), kv.data(), okk as isize, 1, &cols, plane_in as isize, 1, T::zero(), dx.row_mut(n), plane_in as isize, 1);
                        }
                        if self.needs(*k) {
                            T::gemm(c, plane_in, okk, T::one(), xv.row(n), plane_in as isize, 1, &cols, 1, plane_in as isize, T::one(), dk.data_mut(), okk as isize, 1);
                        }
                    }
                    if self.needs(*k) {
                        accumulate(&mut grads, *k, dk);
                    }
                    if self.needs(*b) {
                        accumulate(&mut grads, *b, channel_sums(&g));
                    }
                    if let Some(dx) = dx {
                        accumulate(&mut grads, *x, dx);
                    }
                }
                Op::Reshape(x) => {
                    let shape = self.shape(*x).to_vec();
                    accumulate(&mut grads, *x, g.reshape(&shape)?);
                }
                Op::Concat(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let width = self.value(p).cols();
                        if self.needs(p) {
                            accumulate(&mut grads, p, g.slice_cols(start, width)?);
                        }
                        start += width;
                    }
                }
                Op::Slice { x, start } => {
                    let xv = self.value(*x);
                    let (rows, cols, width) = (xv.rows(), xv.cols(), g.cols());
                    let mut dx = Tensor::zeros(xv.shape());
                    for r in 0..rows {
                        dx.data_mut()[r * cols + start..r * cols + start + width]
                            .copy_from_slice(g.row(r));
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::Add(a, b) => {
                    if self.needs(*a) {
                        accumulate(&mut grads, *a, g.clone());
                    }
                    if self.needs(*b) {
                        accumulate(&mut grads, *b, g);
                    }
                }
                Op::Scale(x, s) => {
                    let f = T::of(*s);
                    accumulate(&mut grads, *x, g.map(|v| v * f));
                }
                Op::Mse {
                    pred,
                    target,
                    normalizer,
                } => {
                    let f = g.data()[0] * T::of(2.0 / normalizer);
                    let (pv, tv) = (self.value(*pred), self.value(*target));
                    let mut dp = Tensor::zeros(pv.shape());
                    for ((d, &p), &t) in dp.data_mut().iter_mut().zip(pv.data()).zip(tv.data()) {
                        *d = (p - t) * f;
                    }
                    if self.needs(*target) {
                        accumulate(&mut grads, *target, dp.map(|v| -v));
                    }
                    if self.needs(*pred) {
                        accumulate(&mut grads, *pred, dp);
                    }
                }
            }
        }
        Ok(out)
    }
}

fn sq_dist<T: Real>(a: &[T], b: &[T]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&p, &t)| {
            let d = p.f64() - t.f64();
            d * d
        })
        .sum()
}

fn add_into<T: Real>(acc: &mut Tensor<T>, g: &Tensor<T>) {
    for (a, &b) in acc.data_mut().iter_mut().zip(g.data()) {
        *a = *a + b;
    }
}

fn accumulate<T: Real>(grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
    match grads[v.0].as_mut() {
        Some(acc) => add_into(acc, &g),
        None => grads[v.0] = Some(g),
    }
}

fn channel_sums<T: Real>(g: &Tensor<T>) -> Tensor<T> {
    let (o, plane) = (g.shape()[1], g.shape()[2] * g.shape()[3]);
    let mut db = Tensor::zeros(&[o]);
    for n in 0..g.rows() {
        for (ch, chunk) in g.row(n).chunks(plane).enumerate() {
            let s = chunk.iter().fold(T::zero(), |a, &b| a + b);
            db.data_mut()[ch] = db.data()[ch] + s;
        }
    }
    db
}
