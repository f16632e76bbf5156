//! Tape of operations recorded in creation order. Because every node is
//! appended after its parents the tape is already a topological order, so a
//! backward sweep from the end visits each node once.

use super::kernels::{bilinear_matrix, conv_out, conv_transpose_out, gemm, Patch};
use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// A differentiable operation defined outside this module. The forward
/// value is computed by the caller and handed to [`Graph::custom`].
pub trait CustomOp<T: Scalar> {
    /// Gradients for each input given the output gradient; `None` where an
    /// input needs none.
    fn backward(&self, inputs: &[&Tensor<T>], output: &Tensor<T>, grad: &[T]) -> Vec<Option<Vec<T>>>;
}

enum Op<T: Scalar> {
    Leaf,
    Conv2d { patch: Patch, cols: Vec<T> },
    ConvTranspose2d { patch: Patch },
    Dense,
    LeakyRelu { alpha: T },
    Tanh,
    PixelNorm { inv_rms: Vec<T> },
    Reshape,
    ConcatChannels,
    ConcatBatch,
    SliceBatch { start: usize },
    TileSpatial,
    Resize { ah: Vec<T>, aw: Vec<T> },
    Affine { scale: T },
    Add,
    Sub,
    MeanSquareTo { target: T },
    MeanAbsDiff,
    WeightedSum { weights: Vec<T> },
    Custom(Box<dyn CustomOp<T>>),
}

struct Node<T: Scalar> {
    value: Tensor<T>,
    grad: Option<Vec<T>>,
    requires_grad: bool,
    parents: Vec<Var>,
    op: Op<T>,
}

pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn mismatch(expected: &[usize], actual: &[usize]) -> Error {
    Error::ShapeMismatch {
        expected: expected.to_vec(),
        actual: actual.to_vec(),
    }
}

fn dims4(shape: &[usize]) -> Result<[usize; 4]> {
    match *shape {
        [n, c, h, w] => Ok([n, c, h, w]),
        _ => Err(Error::invalid("tensor", format!("expected NCHW, got shape {shape:?}"))),
    }
}

fn sum_f64<T: Scalar>(values: impl Iterator<Item = T>) -> f64 {
    values.map(|v| v.to_f64().unwrap()).sum()
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, parents: Vec<Var>, op: Op<T>) -> Var {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            parents,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf; gradients are collected for it when `requires_grad` is set.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            parents: Vec::new(),
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    /// A constant input.
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    /// A constant copy of `v`'s current value, cut off from the graph.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.nodes[v.0].value.clone();
        self.input(value)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient after [`Graph::backward`].
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].grad.as_deref()
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Cross-correlation of `x [N,C,H,W]` with `w [O,C,k,k]`, plus optional
    /// per-channel bias `[O]`.
    pub fn conv2d(&mut self, x: Var, w: Var, bias: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let [n, c, h, wd] = dims4(self.shape(x))?;
        let [o, wc, k, k2] = dims4(self.shape(w))?;
        if wc != c || k != k2 {
            return Err(mismatch(&[o, c, k, k], self.shape(w)));
        }
        if let Some(b) = bias {
            if self.shape(b) != [o] {
                return Err(mismatch(&[o], self.shape(b)));
            }
        }
        let (Some(oh), Some(ow)) = (conv_out(h, k, stride, pad), conv_out(wd, k, stride, pad)) else {
            return Err(Error::invalid("conv2d", format!("kernel {k} larger than padded input {h}x{wd}")));
        };
        let patch = Patch {
            c,
            h,
            w: wd,
            k,
            stride,
            pad,
            grid_h: oh,
            grid_w: ow,
        };
        let (rows, grid) = (patch.rows(), patch.grid());
        let ld = n * grid;
        let mut cols = vec![T::zero(); rows * ld];
        let xv = self.value(x).data();
        for s in 0..n {
            patch.im2col(&xv[s * c * h * wd..(s + 1) * c * h * wd], &mut cols[s * grid..], ld);
        }
        let mut out = vec![T::zero(); n * o * grid];
        let wv = self.value(w).data();
        for s in 0..n {
            gemm(
                o,
                rows,
                grid,
                T::one(),
                wv,
                (rows, 1),
                &cols[s * grid..],
                (ld, 1),
                T::zero(),
                &mut out[s * o * grid..],
                (grid, 1),
            );
        }
        if let Some(b) = bias {
            add_channel_bias(&mut out, self.value(b).data(), n, o, grid);
        }
        let value = Tensor::new(vec![n, o, oh, ow], out)?;
        let mut parents = vec![x, w];
        parents.extend(bias);
        Ok(self.push(value, parents, Op::Conv2d { patch, cols }))
    }

    /// Transposed convolution of `x [N,C,H,W]` with `w [C,O,k,k]`; output
    /// side `(H-1)*stride + k - 2*pad`.
    pub fn conv_transpose2d(&mut self, x: Var, w: Var, bias: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let [n, c, h, wd] = dims4(self.shape(x))?;
        let [wc, o, k, k2] = dims4(self.shape(w))?;
        if wc != c || k != k2 {
            return Err(mismatch(&[c, o, k, k], self.shape(w)));
        }
        if let Some(b) = bias {
            if self.shape(b) != [o] {
                return Err(mismatch(&[o], self.shape(b)));
            }
        }
        let (Some(oh), Some(ow)) = (conv_transpose_out(h, k, stride, pad), conv_transpose_out(wd, k, stride, pad))
        else {
            return Err(Error::invalid("conv_transpose2d", "padding removes the whole output"));
        };
        // The output image is the "image" side of the patch geometry and the
        // input lattice is the grid.
        let patch = Patch {
            c: o,
            h: oh,
            w: ow,
            k,
            stride,
            pad,
            grid_h: h,
            grid_w: wd,
        };
        let (rows, grid) = (patch.rows(), patch.grid());
        let mut cols = vec![T::zero(); rows * grid];
        let mut out = vec![T::zero(); n * o * oh * ow];
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        for s in 0..n {
            gemm(
                rows,
                c,
                grid,
                T::one(),
                wv,
                (1, rows),
                &xv[s * c * grid..],
                (grid, 1),
                T::zero(),
                &mut cols,
                (grid, 1),
            );
            patch.col2im(&cols, grid, &mut out[s * o * oh * ow..(s + 1) * o * oh * ow]);
        }
        if let Some(b) = bias {
            add_channel_bias(&mut out, self.value(b).data(), n, o, oh * ow);
        }
        let value = Tensor::new(vec![n, o, oh, ow], out)?;
        let mut parents = vec![x, w];
        parents.extend(bias);
        Ok(self.push(value, parents, Op::ConvTranspose2d { patch }))
    }

    /// `x [N,in] * w[out,in]^T + b[out]`.
    pub fn dense(&mut self, x: Var, w: Var, bias: Option<Var>) -> Result<Var> {
        let (n, inp) = match *self.shape(x) {
            [n, i] => (n, i),
            _ => return Err(Error::invalid("dense", format!("input must be [N, in], got {:?}", self.shape(x)))),
        };
        let out = match *self.shape(w) {
            [o, i] if i == inp => o,
            _ => return Err(mismatch(&[0, inp], self.shape(w))),
        };
        if let Some(b) = bias {
            if self.shape(b) != [out] {
                return Err(mismatch(&[out], self.shape(b)));
            }
        }
        let mut y = vec![T::zero(); n * out];
        if let Some(b) = bias {
            for row in y.chunks_exact_mut(out) {
                row.copy_from_slice(self.value(b).data());
            }
        }
        let beta = if bias.is_some() { T::one() } else { T::zero() };
        gemm(
            n,
            inp,
            out,
            T::one(),
            self.value(x).data(),
            (inp, 1),
            self.value(w).data(),
            (1, inp),
            beta,
            &mut y,
            (out, 1),
        );
        let mut parents = vec![x, w];
        parents.extend(bias);
        Ok(self.push(Tensor::new(vec![n, out], y)?, parents, Op::Dense))
    }

    /// `max(x, alpha x)`; the slope at exactly zero is `alpha`.
    pub fn leaky_relu(&mut self, x: Var, alpha: T) -> Var {
        let v = self.value(x);
        let data = v.data().iter().map(|&a| if a > T::zero() { a } else { alpha * a }).collect();
        let value = Tensor::new(v.shape().to_vec(), data).unwrap();
        self.push(value, vec![x], Op::LeakyRelu { alpha })
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let value = Tensor::new(v.shape().to_vec(), v.data().iter().map(|a| a.tanh()).collect()).unwrap();
        self.push(value, vec![x], Op::Tanh)
    }

    /// Per pixel, divides the channel vector by its root mean square.
    pub fn pixel_norm(&mut self, x: Var, eps: T) -> Result<Var> {
        let [n, c, h, w] = dims4(self.shape(x))?;
        let hw = h * w;
        let xv = self.value(x).data();
        let mut inv_rms = vec![T::zero(); n * hw];
        let mut out = vec![T::zero(); xv.len()];
        let cf = T::from_usize(c).unwrap();
        for s in 0..n {
            let base = s * c * hw;
            for p in 0..hw {
                let mut ms = T::zero();
                for ch in 0..c {
                    let v = xv[base + ch * hw + p];
                    ms = ms + v * v;
                }
                let r = (ms / cf + eps).sqrt().recip();
                inv_rms[s * hw + p] = r;
                for ch in 0..c {
                    out[base + ch * hw + p] = xv[base + ch * hw + p] * r;
                }
            }
        }
        let value = Tensor::new(vec![n, c, h, w], out)?;
        Ok(self.push(value, vec![x], Op::PixelNorm { inv_rms }))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let value = self.value(x).clone().reshaped(shape)?;
        Ok(self.push(value, vec![x], Op::Reshape))
    }

    /// Channel concatenation of two `[N,*,H,W]` tensors.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let [n, ca, h, w] = dims4(self.shape(a))?;
        let [nb, cb, hb, wb] = dims4(self.shape(b))?;
        if (n, h, w) != (nb, hb, wb) {
            return Err(mismatch(&[n, cb, h, w], self.shape(b)));
        }
        let hw = h * w;
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let mut out = Vec::with_capacity(n * (ca + cb) * hw);
        for s in 0..n {
            out.extend_from_slice(&av[s * ca * hw..(s + 1) * ca * hw]);
            out.extend_from_slice(&bv[s * cb * hw..(s + 1) * cb * hw]);
        }
        let value = Tensor::new(vec![n, ca + cb, h, w], out)?;
        Ok(self.push(value, vec![a, b], Op::ConcatChannels))
    }

    /// Stacks two tensors along the leading (batch) axis.
    pub fn concat_batch(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa[1..] != sb[1..] {
            return Err(mismatch(sa, sb));
        }
        let mut shape = sa.to_vec();
        shape[0] += sb[0];
        let mut data = self.value(a).data().to_vec();
        data.extend_from_slice(self.value(b).data());
        Ok(self.push(Tensor::new(shape, data)?, vec![a, b], Op::ConcatBatch))
    }

    /// Rows `start..start+len` of the leading axis.
    pub fn slice_batch(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x);
        if start + len > shape[0] {
            return Err(Error::invalid("slice_batch", format!("{start}+{len} exceeds batch {}", shape[0])));
        }
        let row: usize = shape[1..].iter().product();
        let mut new_shape = shape.to_vec();
        new_shape[0] = len;
        let data = self.value(x).data()[start * row..(start + len) * row].to_vec();
        Ok(self.push(Tensor::new(new_shape, data)?, vec![x], Op::SliceBatch { start }))
    }

    /// Broadcasts `[N,C]` to `[N,C,h,w]`.
    pub fn tile_spatial(&mut self, x: Var, h: usize, w: usize) -> Result<Var> {
        let (n, c) = match *self.shape(x) {
            [n, c] => (n, c),
            _ => return Err(Error::invalid("tile_spatial", "input must be [N, C]")),
        };
        let data = self
            .value(x)
            .data()
            .iter()
            .flat_map(|&v| std::iter::repeat(v).take(h * w))
            .collect();
        Ok(self.push(Tensor::new(vec![n, c, h, w], data)?, vec![x], Op::TileSpatial))
    }

    /// Fixed bilinear resize of every channel to `out_h x out_w`.
    pub fn resize_bilinear(&mut self, x: Var, out_h: usize, out_w: usize) -> Result<Var> {
        let [n, c, h, w] = dims4(self.shape(x))?;
        let ah: Vec<T> = bilinear_matrix(h, out_h);
        let aw: Vec<T> = bilinear_matrix(w, out_w);
        let xv = self.value(x).data();
        let mut out = vec![T::zero(); n * c * out_h * out_w];
        let mut tmp = vec![T::zero(); out_h * w];
        for plane in 0..n * c {
            let src = &xv[plane * h * w..(plane + 1) * h * w];
            gemm(out_h, h, w, T::one(), &ah, (h, 1), src, (w, 1), T::zero(), &mut tmp, (w, 1));
            gemm(
                out_h,
                w,
                out_w,
                T::one(),
                &tmp,
                (w, 1),
                &aw,
                (1, w),
                T::zero(),
                &mut out[plane * out_h * out_w..],
                (out_w, 1),
            );
        }
        let value = Tensor::new(vec![n, c, out_h, out_w], out)?;
        Ok(self.push(value, vec![x], Op::Resize { ah, aw }))
    }

    /// `scale * x + offset`.
    pub fn affine(&mut self, x: Var, scale: T, offset: T) -> Var {
        let v = self.value(x);
        let data = v.data().iter().map(|&a| scale * a + offset).collect();
        let value = Tensor::new(v.shape().to_vec(), data).unwrap();
        self.push(value, vec![x], Op::Affine { scale })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x - y, Op::Sub)
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(T, T) -> T, op: Op<T>) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(mismatch(self.shape(a), self.shape(b)));
        }
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let value = Tensor::new(self.shape(a).to_vec(), data)?;
        Ok(self.push(value, vec![a, b], op))
    }

    /// `mean((x - target)^2)` as a one-element tensor.
    pub fn mean_square_to(&mut self, x: Var, target: T) -> Var {
        let v = self.value(x).data();
        let mean = sum_f64(v.iter().map(|&a| (a - target) * (a - target))) / v.len() as f64;
        self.push(Tensor::scalar(T::lit(mean)), vec![x], Op::MeanSquareTo { target })
    }

    /// `mean(|a - b|)` as a one-element tensor.
    pub fn mean_abs_diff(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(mismatch(self.shape(a), self.shape(b)));
        }
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let mean = sum_f64(av.iter().zip(bv).map(|(&x, &y)| (x - y).abs())) / av.len() as f64;
        Ok(self.push(Tensor::scalar(T::lit(mean)), vec![a, b], Op::MeanAbsDiff))
    }

    /// `sum_i w_i x_i` over one-element tensors.
    pub fn weighted_sum(&mut self, terms: &[(Var, T)]) -> Result<Var> {
        let mut total = 0.0f64;
        for &(v, w) in terms {
            if self.value(v).len() != 1 {
                return Err(mismatch(&[1], self.shape(v)));
            }
            total += (w * self.value(v).item()).to_f64().unwrap();
        }
        let parents = terms.iter().map(|t| t.0).collect();
        let weights = terms.iter().map(|t| t.1).collect();
        Ok(self.push(Tensor::scalar(T::lit(total)), parents, Op::WeightedSum { weights }))
    }

    /// Records an externally computed operation.
    pub fn custom(&mut self, inputs: &[Var], output: Tensor<T>, op: Box<dyn CustomOp<T>>) -> Var {
        self.push(output, inputs.to_vec(), Op::Custom(op))
    }

    /// Reverse sweep from a one-element `loss`, seeding its gradient with 1.
    /// Gradients from several paths into a node are summed.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(mismatch(&[1], self.shape(loss)));
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        self.nodes[loss.0].grad = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad || self.nodes[i].parents.is_empty() {
                continue;
            }
            let Some(grad) = self.nodes[i].grad.take() else {
                continue;
            };
            let contributions = self.op_backward(i, &grad);
            self.nodes[i].grad = Some(grad);
            let parents = self.nodes[i].parents.clone();
            for (p, g) in parents.into_iter().zip(contributions) {
                let Some(g) = g else { continue };
                let slot = &mut self.nodes[p.0].grad;
                match slot {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, &b)| *a = *a + b),
                    None => *slot = Some(g),
                }
            }
        }
        Ok(())
    }

    fn op_backward(&self, i: usize, g: &[T]) -> Vec<Option<Vec<T>>> {
        let node = &self.nodes[i];
        let parents = &node.parents;
        let need = |k: usize| parents.get(k).is_some_and(|p| self.nodes[p.0].requires_grad);
        let pv = |k: usize| self.nodes[parents[k].0].value.data();
        let pshape = |k: usize| self.nodes[parents[k].0].value.shape();
        match &node.op {
            Op::Leaf => Vec::new(),
            Op::Conv2d { patch, cols } => {
                let [n, c, h, w] = dims4(pshape(0)).unwrap();
                let o = pshape(1)[0];
                let (rows, grid) = (patch.rows(), patch.grid());
                let ld = n * grid;
                let wv = pv(1);
                let dx = need(0).then(|| {
                    let mut dx = vec![T::zero(); n * c * h * w];
                    let mut dcols = vec![T::zero(); rows * grid];
                    for s in 0..n {
                        gemm(
                            rows,
                            o,
                            grid,
                            T::one(),
                            wv,
                            (1, rows),
                            &g[s * o * grid..],
                            (grid, 1),
                            T::zero(),
                            &mut dcols,
                            (grid, 1),
                        );
                        patch.col2im(&dcols, grid, &mut dx[s * c * h * w..(s + 1) * c * h * w]);
                    }
                    dx
                });
                let dw = need(1).then(|| {
                    let mut dw = vec![T::zero(); o * rows];
                    for s in 0..n {
                        gemm(
                            o,
                            grid,
                            rows,
                            T::one(),
                            &g[s * o * grid..],
                            (grid, 1),
                            &cols[s * grid..],
                            (1, ld),
                            T::one(),
                            &mut dw,
                            (rows, 1),
                        );
                    }
                    dw
                });
                let db = need(2).then(|| channel_sums(g, n, o, grid));
                vec![dx, dw, db]
            }
            Op::ConvTranspose2d { patch } => {
                let [n, c, h, w] = dims4(pshape(0)).unwrap();
                let o = patch.c;
                let (rows, grid) = (patch.rows(), patch.grid());
                let out_plane = o * patch.h * patch.w;
                let xv = pv(0);
                let wv = pv(1);
                let mut dcols = vec![T::zero(); rows * grid];
                let mut dx = need(0).then(|| vec![T::zero(); n * c * h * w]);
                let mut dw = need(1).then(|| vec![T::zero(); c * rows]);
                if dx.is_some() || dw.is_some() {
                    for s in 0..n {
                        patch.im2col(&g[s * out_plane..(s + 1) * out_plane], &mut dcols, grid);
                        if let Some(dx) = dx.as_mut() {
                            gemm(
                                c,
                                rows,
                                grid,
                                T::one(),
                                wv,
                                (rows, 1),
                                &dcols,
                                (grid, 1),
                                T::zero(),
                                &mut dx[s * c * grid..],
                                (grid, 1),
                            );
                        }
                        if let Some(dw) = dw.as_mut() {
                            gemm(
                                c,
                                grid,
                                rows,
                                T::one(),
                                &xv[s * c * grid..],
                                (grid, 1),
                                &dcols,
                                (1, grid),
                                T::one(),
                                dw,
                                (rows, 1),
                            );
                        }
                    }
                }
                let db = need(2).then(|| channel_sums(g, n, o, patch.h * patch.w));
                vec![dx, dw, db]
            }
            Op::Dense => {
                let (n, inp) = (pshape(0)[0], pshape(0)[1]);
                let out = pshape(1)[0];
                let dx = need(0).then(|| {
                    let mut dx = vec![T::zero(); n * inp];
                    gemm(n, out, inp, T::one(), g, (out, 1), pv(1), (inp, 1), T::zero(), &mut dx, (inp, 1));
                    dx
                });
                let dw = need(1).then(|| {
                    let mut dw = vec![T::zero(); out * inp];
                    gemm(out, n, inp, T::one(), g, (1, out), pv(0), (inp, 1), T::zero(), &mut dw, (inp, 1));
                    dw
                });
                let db = need(2).then(|| {
                    (0..out)
                        .map(|j| T::lit(sum_f64((0..n).map(|s| g[s * out + j]))))
                        .collect()
                });
                vec![dx, dw, db]
            }
            Op::LeakyRelu { alpha } => {
                let x = pv(0);
                vec![Some(
                    x.iter()
                        .zip(g)
                        .map(|(&a, &gv)| if a > T::zero() { gv } else { *alpha * gv })
                        .collect(),
                )]
            }
            Op::Tanh => {
                let y = node.value.data();
                vec![Some(y.iter().zip(g).map(|(&t, &gv)| gv * (T::one() - t * t)).collect())]
            }
            Op::PixelNorm { inv_rms } => {
                let [n, c, h, w] = dims4(pshape(0)).unwrap();
                let hw = h * w;
                let x = pv(0);
                let cf = T::from_usize(c).unwrap();
                let mut dx = vec![T::zero(); x.len()];
                for s in 0..n {
                    let base = s * c * hw;
                    for p in 0..hw {
                        let r = inv_rms[s * hw + p];
                        let mut dot = T::zero();
                        for ch in 0..c {
                            let idx = base + ch * hw + p;
                            dot = dot + g[idx] * x[idx];
                        }
                        let k = r * r * r * dot / cf;
                        for ch in 0..c {
                            let idx = base + ch * hw + p;
                            dx[idx] = r * g[idx] - x[idx] * k;
                        }
                    }
                }
                vec![Some(dx)]
            }
            Op::Reshape => vec![Some(g.to_vec())],
            Op::ConcatChannels => {
                let [n, ca, h, w] = dims4(pshape(0)).unwrap();
                let cb = pshape(1)[1];
                let hw = h * w;
                let ct = ca + cb;
                let da = need(0).then(|| {
                    (0..n)
                        .flat_map(|s| g[s * ct * hw..(s * ct + ca) * hw].iter().copied())
                        .collect()
                });
                let db = need(1).then(|| {
                    (0..n)
                        .flat_map(|s| g[(s * ct + ca) * hw..(s + 1) * ct * hw].iter().copied())
                        .collect()
                });
                vec![da, db]
            }
            Op::ConcatBatch => {
                let split = self.nodes[parents[0].0].value.len();
                vec![
                    need(0).then(|| g[..split].to_vec()),
                    need(1).then(|| g[split..].to_vec()),
                ]
            }
            Op::SliceBatch { start } => {
                let row: usize = pshape(0)[1..].iter().product();
                let mut dx = vec![T::zero(); pv(0).len()];
                dx[start * row..start * row + g.len()].copy_from_slice(g);
                vec![Some(dx)]
            }
            Op::TileSpatial => {
                let [_, _, h, w] = dims4(node.value.shape()).unwrap();
                vec![Some(g.chunks_exact(h * w).map(|plane| T::lit(sum_f64(plane.iter().copied()))).collect())]
            }
            Op::Resize { ah, aw } => {
                let [n, c, h, w] = dims4(pshape(0)).unwrap();
                let [_, _, out_h, out_w] = dims4(node.value.shape()).unwrap();
                let mut dx = vec![T::zero(); n * c * h * w];
                let mut tmp = vec![T::zero(); out_h * w];
                for plane in 0..n * c {
                    // dX = Ah^T dY Aw
                    gemm(
                        out_h,
                        out_w,
                        w,
                        T::one(),
                        &g[plane * out_h * out_w..],
                        (out_w, 1),
                        aw,
                        (w, 1),
                        T::zero(),
                        &mut tmp,
                        (w, 1),
                    );
                    gemm(
                        h,
                        out_h,
                        w,
                        T::one(),
                        ah,
                        (1, h),
                        &tmp,
                        (w, 1),
                        T::zero(),
                        &mut dx[plane * h * w..],
                        (w, 1),
                    );
                }
                vec![Some(dx)]
            }
            Op::Affine { scale } => vec![Some(g.iter().map(|&v| *scale * v).collect())],
            Op::Add => vec![need(0).then(|| g.to_vec()), need(1).then(|| g.to_vec())],
            Op::Sub => vec![need(0).then(|| g.to_vec()), need(1).then(|| g.iter().map(|&v| -v).collect())],
            Op::MeanSquareTo { target } => {
                let x = pv(0);
                let k = T::lit(2.0 / x.len() as f64) * g[0];
                vec![Some(x.iter().map(|&a| k * (a - *target)).collect())]
            }
            Op::MeanAbsDiff => {
                let (a, b) = (pv(0), pv(1));
                let k = g[0] / T::from_usize(a.len()).unwrap();
                let sign: Vec<T> = a
                    .iter()
                    .zip(b)
                    .map(|(&x, &y)| {
                        if x > y {
                            k
                        } else if x < y {
                            -k
                        } else {
                            T::zero()
                        }
                    })
                    .collect();
                let db = need(1).then(|| sign.iter().map(|&v| -v).collect());
                vec![need(0).then_some(sign), db]
            }
            Op::WeightedSum { weights } => weights.iter().map(|&w| Some(vec![w * g[0]])).collect(),
            Op::Custom(op) => {
                let inputs: Vec<&Tensor<T>> = parents.iter().map(|p| &self.nodes[p.0].value).collect();
                op.backward(&inputs, &node.value, g)
            }
        }
    }
}

fn add_channel_bias<T: Scalar>(out: &mut [T], bias: &[T], n: usize, channels: usize, plane: usize) {
    for s in 0..n {
        for (ch, &b) in bias.iter().enumerate().take(channels) {
            let start = (s * channels + ch) * plane;
            out[start..start + plane].iter_mut().for_each(|v| *v = *v + b);
        }
    }
}

fn channel_sums<T: Scalar>(g: &[T], n: usize, channels: usize, plane: usize) -> Vec<T> {
    (0..channels)
        .map(|ch| {
            T::lit(sum_f64(
                (0..n).flat_map(|s| g[(s * channels + ch) * plane..(s * channels + ch + 1) * plane].iter().copied()),
            ))
        })
        .collect()
}
