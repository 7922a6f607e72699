//! Dense tensors, the neural primitives and a small reverse-mode tape.

pub mod kernels;
mod real;
mod rowmap;
mod tape;
mod tensor;

pub use real::Real;
pub use rowmap::RowMap;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

use crate::error::{ensure, Error, Result};

/// Matrix product of `a[m×k]` and `b[k×n]`, summing over `k` left to right.
pub fn matmul<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    ensure!(a.shape().len() == 2 && b.shape().len() == 2, Dimension, "matmul needs 2-D operands");
    let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    ensure!(k == b.shape()[0], Dimension, "matmul inner extents {:?} × {:?}", a.shape(), b.shape());
    let mut out = vec![T::zero(); m * n];
    kernels::gemm_acc(m, k, n, a.data(), b.data(), &mut out);
    Tensor::new(&[m, n], out)?.check_finite("matmul")
}

/// Softmax over the last axis.
pub fn softmax_rows<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let cols = x.last_dim();
    ensure!(cols > 0 && !x.shape().is_empty(), Dimension, "softmax over an empty axis");
    let mut data = x.data().to_vec();
    kernels::softmax_rows_inplace(cols, &mut data);
    Tensor::new(x.shape(), data)?.check_finite("softmax")
}

/// `(x - mean) / sqrt(var + eps) * gamma + beta` over the last axis.
pub fn layer_norm<T: Real>(x: &Tensor<T>, gamma: &Tensor<T>, beta: &Tensor<T>, eps: f64) -> Result<Tensor<T>> {
    let mut tape = Tape::new();
    let (xv, g, b) = (tape.constant(x.clone()), tape.constant(gamma.clone()), tape.constant(beta.clone()));
    let y = tape.layer_norm(xv, g, b, eps)?;
    tape.value(y).clone().check_finite("layer norm")
}

/// Exact (erf) GELU.
pub fn gelu<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    Tensor::new(x.shape(), x.data().iter().map(|&v| kernels::gelu(v)).collect()).expect("same shape")
}

/// Compares tape gradients of a scalar composite against central differences.
///
/// `build` records the composite on a fresh tape given `theta` as a parameter
/// and returns the scalar output. The result is
/// `max_i |analytic_i - cd_i| / max(|analytic_i|, |cd_i|, 1e-8)`.
pub fn grad_check<F>(build: F, theta: &Tensor<f64>, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, Var) -> Result<Var>,
{
    Ok(grad_check_errors(build, theta, eps)?.into_iter().fold(0.0, f64::max))
}

/// Per-coordinate relative errors behind [`grad_check`].
pub fn grad_check_errors<F>(build: F, theta: &Tensor<f64>, eps: f64) -> Result<Vec<f64>>
where
    F: Fn(&mut Tape<f64>, Var) -> Result<Var>,
{
    let eval = |t: &Tensor<f64>| -> Result<f64> {
        let mut tape = Tape::new();
        let p = tape.param(t.clone());
        let y = build(&mut tape, p)?;
        ensure!(tape.value(y).len() == 1, Dimension, "grad_check needs a scalar function");
        let v = tape.value(y).data()[0];
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Numerical("function is not finite".into()))
        }
    };
    let mut tape = Tape::new();
    let p = tape.param(theta.clone());
    let y = build(&mut tape, p)?;
    let mut grads = tape.backward(y)?;
    let analytic = grads.take_or_zeros(p, theta.len());
    let mut errors = Vec::with_capacity(theta.len());
    let mut probe = theta.clone();
    for i in 0..theta.len() {
        let orig = theta.data()[i];
        probe.data_mut()[i] = orig + eps;
        let hi = eval(&probe)?;
        probe.data_mut()[i] = orig - eps;
        let lo = eval(&probe)?;
        probe.data_mut()[i] = orig;
        let cd = (hi - lo) / (2.0 * eps);
        let a = analytic[i];
        errors.push((a - cd).abs() / a.abs().max(cd.abs()).max(1e-8));
    }
    Ok(errors)
}
