//! Reverse-mode differentiation over the handful of primitives the model uses.

use std::sync::Arc;

use super::kernels::{self, bmm_acc, gemm_acc, transpose};
use super::{Real, RowMap, Tensor};
use crate::error::{ensure, Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    MatMul { a: Var, b: Var, m: usize, k: usize, n: usize },
    Bmm { a: Var, b: Var, batch: usize, m: usize, k: usize, n: usize, trans_b: bool },
    Add { a: Var, b: Var },
    AddTiled { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { a: Var, s: T },
    Softmax { a: Var, cols: usize },
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<T>, rstd: Vec<T> },
    Gelu { a: Var },
    Relu { a: Var },
    RowMap { a: Var, map: Arc<RowMap>, width: usize },
    Reshape { a: Var },
    Sum { a: Var },
    Charbonnier { a: Var, target: Vec<T>, eps: T },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Ordered record of primitive applications. One tape per forward pass; not shared across threads.
pub struct Tape<T: Real> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of a scalar with respect to every node that depends on a parameter.
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient of `v`, zeros if the loss does not depend on it.
    pub fn take_or_zeros(&mut self, v: Var, len: usize) -> Vec<T> {
        self.grads.get_mut(v.0).and_then(Option::take).unwrap_or_else(|| vec![T::zero(); len])
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A learnable leaf.
    pub fn param(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// A leaf treated as constant.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// `a[…×k] · b[k×n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ash, bsh) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        ensure!(bsh.len() == 2, Dimension, "matmul rhs must be 2-D, got {:?}", bsh);
        let k = *ash.last().unwrap_or(&1);
        ensure!(k == bsh[0], Dimension, "matmul inner extents {:?} × {:?}", ash, bsh);
        let n = bsh[1];
        let m = self.value(a).len() / k.max(1);
        let mut out = vec![T::zero(); m * n];
        gemm_acc(m, k, n, self.value(a).data(), self.value(b).data(), &mut out);
        let mut shape = ash[..ash.len().saturating_sub(1)].to_vec();
        shape.push(n);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(Tensor::new(&shape, out)?, Op::MatMul { a, b, m, k, n }, ng))
    }

    /// Batched product of `a[B×m×k]` with `b[B×k×n]`, or with `b[B×n×k]` transposed.
    pub fn bmm(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (ash, bsh) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        ensure!(ash.len() == 3 && bsh.len() == 3, Dimension, "bmm needs 3-D operands");
        ensure!(ash[0] == bsh[0], Dimension, "bmm batch {} vs {}", ash[0], bsh[0]);
        let (batch, m, k) = (ash[0], ash[1], ash[2]);
        let (kb, n) = if trans_b { (bsh[2], bsh[1]) } else { (bsh[1], bsh[2]) };
        ensure!(k == kb, Dimension, "bmm inner extents {:?} × {:?}", ash, bsh);
        let mut out = vec![T::zero(); batch * m * n];
        bmm_acc(batch, m, k, n, self.value(a).data(), self.value(b).data(), trans_b, &mut out);
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(Tensor::new(&[batch, m, n], out)?, Op::Bmm { a, b, batch, m, k, n, trans_b }, ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        ensure!(
            self.shape(a) == self.shape(b),
            Dimension,
            "add shapes {:?} vs {:?}",
            self.shape(a),
            self.shape(b)
        );
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| x + y).collect();
        let t = Tensor::new(self.shape(a), data)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(t, Op::Add { a, b }, ng))
    }

    /// `a + b` where `b` is repeated over consecutive blocks of `a` (bias rows, per-head bias maps).
    pub fn add_tiled(&mut self, a: Var, b: Var) -> Result<Var> {
        let (la, lb) = (self.value(a).len(), self.value(b).len());
        ensure!(lb > 0 && la % lb == 0, Dimension, "cannot tile {} values over {}", lb, la);
        let bv = self.value(b).data();
        let mut data = self.value(a).data().to_vec();
        for chunk in data.chunks_mut(lb) {
            for (x, &y) in chunk.iter_mut().zip(bv) {
                *x += y;
            }
        }
        let t = Tensor::new(self.shape(a), data)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(t, Op::AddTiled { a, b }, ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        ensure!(self.shape(a) == self.shape(b), Dimension, "mul shapes differ");
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| x * y).collect();
        let t = Tensor::new(self.shape(a), data)?;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(t, Op::Mul { a, b }, ng))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let data = self.value(a).data().iter().map(|&x| x * s).collect();
        let t = Tensor::new(self.shape(a), data).expect("same shape");
        let ng = self.ng(a);
        self.push(t, Op::Scale { a, s }, ng)
    }

    /// Softmax over the last axis.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let cols = self.value(a).last_dim();
        ensure!(cols > 0, Dimension, "softmax over an empty axis");
        let mut data = self.value(a).data().to_vec();
        kernels::softmax_rows_inplace(cols, &mut data);
        let t = Tensor::new(self.shape(a), data)?;
        let ng = self.ng(a);
        Ok(self.push(t, Op::Softmax { a, cols }, ng))
    }

    /// Layer normalisation over the last axis.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let c = self.value(x).last_dim();
        ensure!(c > 0, Dimension, "layer norm over an empty axis");
        ensure!(
            self.value(gamma).len() == c && self.value(beta).len() == c,
            Dimension,
            "layer norm affine parameters must have {} entries",
            c
        );
        let xs = self.value(x).data();
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let rows = xs.len() / c;
        let mut xhat = vec![T::zero(); xs.len()];
        let mut rstd = vec![T::zero(); rows];
        let mut out = vec![T::zero(); xs.len()];
        let inv_c = T::lit(1.0 / c as f64);
        for r in 0..rows {
            let row = &xs[r * c..(r + 1) * c];
            // One refinement pass removes the first pass's rounding, so a constant row centres to exact zeros.
            let rough = row.iter().copied().sum::<T>() * inv_c;
            let mean = rough + row.iter().map(|&v| v - rough).sum::<T>() / T::lit(c as f64);
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_c;
            let rs = T::one() / (var + T::lit(eps)).sqrt();
            rstd[r] = rs;
            for j in 0..c {
                let h = (row[j] - mean) * rs;
                xhat[r * c + j] = h;
                out[r * c + j] = h * g[j] + b[j];
            }
        }
        let t = Tensor::new(self.shape(x), out)?;
        let ng = self.ng(x) || self.ng(gamma) || self.ng(beta);
        Ok(self.push(t, Op::LayerNorm { x, gamma, beta, xhat, rstd }, ng))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let data = self.value(a).data().iter().map(|&x| kernels::gelu(x)).collect();
        let t = Tensor::new(self.shape(a), data).expect("same shape");
        let ng = self.ng(a);
        self.push(t, Op::Gelu { a }, ng)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let data = self.value(a).data().iter().map(|&x| x.max(T::zero())).collect();
        let t = Tensor::new(self.shape(a), data).expect("same shape");
        let ng = self.ng(a);
        self.push(t, Op::Relu { a }, ng)
    }

    /// Apply a row map to `a` viewed as `[rows × last_dim]`.
    pub fn row_map(&mut self, a: Var, map: Arc<RowMap>) -> Result<Var> {
        let width = self.value(a).last_dim();
        map.check_input(width, self.value(a).data())?;
        let data = map.apply(width, self.value(a).data());
        let t = Tensor::new(&[map.out_rows(), width], data)?;
        let ng = self.ng(a);
        Ok(self.push(t, Op::RowMap { a, map, width }, ng))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a).clone().reshape(shape)?;
        let ng = self.ng(a);
        Ok(self.push(t, Op::Reshape { a }, ng))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().copied().sum();
        let ng = self.ng(a);
        self.push(Tensor::scalar(s), Op::Sum { a }, ng)
    }

    /// Mean of `sqrt((a - target)² + eps²)`.
    pub fn charbonnier(&mut self, a: Var, target: &Tensor<T>, eps: f64) -> Result<Var> {
        ensure!(
            self.value(a).len() == target.len(),
            Dimension,
            "charbonnier: prediction has {} values, target {}",
            self.value(a).len(),
            target.len()
        );
        ensure!(!target.is_empty(), Dimension, "charbonnier of an empty tensor");
        let e = T::lit(eps);
        let total: T = kernels::compensated_sum(
            self.value(a).data().iter().zip(target.data()).map(|(&p, &g)| ((p - g) * (p - g) + e * e).sqrt()),
        );
        let loss = total / T::lit(target.len() as f64);
        let ng = self.ng(a);
        Ok(self.push(Tensor::scalar(loss), Op::Charbonnier { a, target: target.data().to_vec(), eps: e }, ng))
    }

    /// Reverse sweep from a scalar.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        ensure!(self.value(loss).len() == 1, Dimension, "backward needs a scalar loss");
        if !self.value(loss).is_finite() {
            return Err(Error::Numerical("loss is not finite".into()));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(gy) = grads[i].take() else { continue };
            self.backprop(node, &gy, &mut grads);
            grads[i] = Some(gy);
        }
        Ok(Gradients { grads })
    }

    fn backprop(&self, node: &Node<T>, gy: &[T], grads: &mut [Option<Vec<T>>]) {
        let val = |v: Var| self.nodes[v.0].value.data();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b, m, k, n } => {
                let (m, k, n) = (*m, *k, *n);
                if self.ng(*a) {
                    let bt = transpose(k, n, val(*b));
                    gemm_acc(m, n, k, gy, &bt, slot(grads, *a, m * k));
                }
                if self.ng(*b) {
                    let at = transpose(m, k, val(*a));
                    gemm_acc(k, m, n, &at, gy, slot(grads, *b, k * n));
                }
            }
            Op::Bmm { a, b, batch, m, k, n, trans_b } => {
                let (batch, m, k, n) = (*batch, *m, *k, *n);
                if self.ng(*a) {
                    // dA = dC · Bᵀ (or dC · B when B was used transposed)
                    bmm_acc(batch, m, n, k, gy, val(*b), !*trans_b, slot(grads, *a, batch * m * k));
                }
                if self.ng(*b) {
                    let av = val(*a);
                    let gb = slot(grads, *b, batch * k * n);
                    for i in 0..batch {
                        let ai = &av[i * m * k..(i + 1) * m * k];
                        let gi = &gy[i * m * n..(i + 1) * m * n];
                        let dst = &mut gb[i * k * n..(i + 1) * k * n];
                        if *trans_b {
                            // dB = dCᵀ · A, shape n×k
                            let gt = transpose(m, n, gi);
                            gemm_acc(n, m, k, &gt, ai, dst);
                        } else {
                            // dB = Aᵀ · dC, shape k×n
                            let at = transpose(m, k, ai);
                            gemm_acc(k, m, n, &at, gi, dst);
                        }
                    }
                }
            }
            Op::Add { a, b } => {
                for v in [*a, *b] {
                    if self.ng(v) {
                        acc(slot(grads, v, gy.len()), gy);
                    }
                }
            }
            Op::AddTiled { a, b } => {
                if self.ng(*a) {
                    acc(slot(grads, *a, gy.len()), gy);
                }
                if self.ng(*b) {
                    let lb = self.nodes[b.0].value.len();
                    let gb = slot(grads, *b, lb);
                    for chunk in gy.chunks(lb) {
                        acc(gb, chunk);
                    }
                }
            }
            Op::Mul { a, b } => {
                let (av, bv) = (val(*a), val(*b));
                if self.ng(*a) {
                    let ga = slot(grads, *a, gy.len());
                    for ((g, &d), &y) in ga.iter_mut().zip(gy).zip(bv) {
                        *g += d * y;
                    }
                }
                if self.ng(*b) {
                    let gb = slot(grads, *b, gy.len());
                    for ((g, &d), &x) in gb.iter_mut().zip(gy).zip(av) {
                        *g += d * x;
                    }
                }
            }
            Op::Scale { a, s } => {
                let ga = slot(grads, *a, gy.len());
                for (g, &d) in ga.iter_mut().zip(gy) {
                    *g += d * *s;
                }
            }
            Op::Softmax { a, cols } => {
                let y = node.value.data();
                let ga = slot(grads, *a, gy.len());
                for ((grow, yrow), dyrow) in ga.chunks_mut(*cols).zip(y.chunks(*cols)).zip(gy.chunks(*cols)) {
                    let dot: T = yrow.iter().zip(dyrow).map(|(&p, &d)| p * d).sum();
                    for ((g, &p), &d) in grow.iter_mut().zip(yrow).zip(dyrow) {
                        *g += p * (d - dot);
                    }
                }
            }
            Op::LayerNorm { x, gamma, beta, xhat, rstd } => {
                let c = node.value.last_dim();
                let g = val(*gamma);
                if self.ng(*gamma) {
                    let gg = slot(grads, *gamma, c);
                    for (dyrow, hrow) in gy.chunks(c).zip(xhat.chunks(c)) {
                        for j in 0..c {
                            gg[j] += dyrow[j] * hrow[j];
                        }
                    }
                }
                if self.ng(*beta) {
                    let gb = slot(grads, *beta, c);
                    for dyrow in gy.chunks(c) {
                        acc(gb, dyrow);
                    }
                }
                if self.ng(*x) {
                    let gx = slot(grads, *x, gy.len());
                    let inv_c = T::lit(1.0 / c as f64);
                    let mut dh = vec![T::zero(); c];
                    for (r, (dyrow, hrow)) in gy.chunks(c).zip(xhat.chunks(c)).enumerate() {
                        let mut mean_dh = T::zero();
                        let mut mean_dh_h = T::zero();
                        for j in 0..c {
                            dh[j] = dyrow[j] * g[j];
                            mean_dh += dh[j];
                            mean_dh_h += dh[j] * hrow[j];
                        }
                        mean_dh = mean_dh * inv_c;
                        mean_dh_h = mean_dh_h * inv_c;
                        let out = &mut gx[r * c..(r + 1) * c];
                        for j in 0..c {
                            out[j] += rstd[r] * (dh[j] - mean_dh - hrow[j] * mean_dh_h);
                        }
                    }
                }
            }
            Op::Gelu { a } => {
                let xs = val(*a);
                let ga = slot(grads, *a, gy.len());
                for ((g, &d), &x) in ga.iter_mut().zip(gy).zip(xs) {
                    *g += d * kernels::gelu_grad(x);
                }
            }
            Op::Relu { a } => {
                let xs = val(*a);
                let ga = slot(grads, *a, gy.len());
                for ((g, &d), &x) in ga.iter_mut().zip(gy).zip(xs) {
                    if x > T::zero() {
                        *g += d;
                    }
                }
            }
            Op::RowMap { a, map, width } => {
                let len = self.nodes[a.0].value.len();
                map.apply_adjoint_acc(*width, gy, slot(grads, *a, len));
            }
            Op::Reshape { a } => acc(slot(grads, *a, gy.len()), gy),
            Op::Sum { a } => {
                let len = self.nodes[a.0].value.len();
                let ga = slot(grads, *a, len);
                for g in ga.iter_mut() {
                    *g += gy[0];
                }
            }
            Op::Charbonnier { a, target, eps } => {
                let p = val(*a);
                let scale = gy[0] / T::lit(target.len() as f64);
                let ga = slot(grads, *a, p.len());
                for ((g, &x), &t) in ga.iter_mut().zip(p).zip(target) {
                    let d = x - t;
                    *g += scale * d / (d * d + *eps * *eps).sqrt();
                }
            }
        }
    }
}

fn slot<T: Real>(grads: &mut [Option<Vec<T>>], v: Var, len: usize) -> &mut Vec<T> {
    grads[v.0].get_or_insert_with(|| vec![T::zero(); len])
}

fn acc<T: Real>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
