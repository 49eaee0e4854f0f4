//! The primitive set shared by eager evaluation, the gradient tape and dual numbers.
//!
//! Model code is written once against [`Kernel`] and runs unchanged in all
//! three modes. Shape errors inside a primitive are programming errors and
//! panic; public entry points validate their inputs before reaching here.

use super::tensor::Tensor;

pub trait Kernel {
    type Value: Clone;

    /// A value that carries no gradient path and no tangent.
    fn constant(&mut self, t: Tensor) -> Self::Value;
    fn primal<'a>(&'a self, v: &'a Self::Value) -> &'a Tensor;

    fn add(&mut self, a: &Self::Value, b: &Self::Value) -> Self::Value;
    fn sub(&mut self, a: &Self::Value, b: &Self::Value) -> Self::Value;
    fn mul(&mut self, a: &Self::Value, b: &Self::Value) -> Self::Value;
    fn scale(&mut self, a: &Self::Value, s: f64) -> Self::Value;
    fn matmul(&mut self, a: &Self::Value, b: &Self::Value) -> Self::Value;
    /// Sum of all entries, shape `[1]`.
    fn sum(&mut self, a: &Self::Value) -> Self::Value;
    /// Mean of all entries, shape `[1]`.
    fn mean(&mut self, a: &Self::Value) -> Self::Value;
    /// `[B, D] -> [B, 1]`
    fn sum_rows(&mut self, a: &Self::Value) -> Self::Value;
    /// `[1, H] -> [rows, H]`
    fn broadcast_rows(&mut self, a: &Self::Value, rows: usize) -> Self::Value;
    /// `[B, 1] -> [B, cols]`
    fn broadcast_cols(&mut self, a: &Self::Value, cols: usize) -> Self::Value;
    fn concat_cols(&mut self, parts: &[&Self::Value]) -> Self::Value;
    fn slice_cols(&mut self, a: &Self::Value, start: usize, len: usize) -> Self::Value;
    /// `x · sigmoid(x)`
    fn silu(&mut self, a: &Self::Value) -> Self::Value;
    fn sin(&mut self, a: &Self::Value) -> Self::Value;
    fn cos(&mut self, a: &Self::Value) -> Self::Value;
    fn square(&mut self, a: &Self::Value) -> Self::Value;
    fn sqrt(&mut self, a: &Self::Value) -> Self::Value;
    fn powf(&mut self, a: &Self::Value, p: f64) -> Self::Value;
    fn recip(&mut self, a: &Self::Value) -> Self::Value;
    /// Same value; blocks gradients and zeroes tangents.
    fn stop_gradient(&mut self, a: &Self::Value) -> Self::Value;
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

pub(crate) fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// `d/dx x^p`. At `x == 0` with `p < 1` the derivative is unbounded; 0 is
/// returned, which lies in the subdifferential of `‖Δ‖` at the origin.
pub(crate) fn pow_grad(x: f64, p: f64) -> f64 {
    if x == 0.0 && p < 1.0 {
        0.0
    } else {
        p * x.powf(p - 1.0)
    }
}

/// Plain evaluation with no bookkeeping.
#[derive(Clone, Copy, Debug, Default)]
pub struct Eager;

impl Kernel for Eager {
    type Value = Tensor;

    fn constant(&mut self, t: Tensor) -> Tensor {
        t
    }
    fn primal<'a>(&'a self, v: &'a Tensor) -> &'a Tensor {
        v
    }
    fn add(&mut self, a: &Tensor, b: &Tensor) -> Tensor {
        a.add(b)
    }
    fn sub(&mut self, a: &Tensor, b: &Tensor) -> Tensor {
        a.sub(b)
    }
    fn mul(&mut self, a: &Tensor, b: &Tensor) -> Tensor {
        a.mul(b)
    }
    fn scale(&mut self, a: &Tensor, s: f64) -> Tensor {
        a.scale(s)
    }
    fn matmul(&mut self, a: &Tensor, b: &Tensor) -> Tensor {
        a.matmul(b)
    }
    fn sum(&mut self, a: &Tensor) -> Tensor {
        Tensor::scalar(a.sum())
    }
    fn mean(&mut self, a: &Tensor) -> Tensor {
        Tensor::scalar(a.sum() / a.len() as f64)
    }
    fn sum_rows(&mut self, a: &Tensor) -> Tensor {
        a.sum_rows()
    }
    fn broadcast_rows(&mut self, a: &Tensor, rows: usize) -> Tensor {
        a.broadcast_rows(rows)
    }
    fn broadcast_cols(&mut self, a: &Tensor, cols: usize) -> Tensor {
        a.broadcast_cols(cols)
    }
    fn concat_cols(&mut self, parts: &[&Tensor]) -> Tensor {
        Tensor::concat_cols(parts)
    }
    fn slice_cols(&mut self, a: &Tensor, start: usize, len: usize) -> Tensor {
        a.slice_cols(start, len)
    }
    fn silu(&mut self, a: &Tensor) -> Tensor {
        a.map(silu)
    }
    fn sin(&mut self, a: &Tensor) -> Tensor {
        a.map(f64::sin)
    }
    fn cos(&mut self, a: &Tensor) -> Tensor {
        a.map(f64::cos)
    }
    fn square(&mut self, a: &Tensor) -> Tensor {
        a.map(|v| v * v)
    }
    fn sqrt(&mut self, a: &Tensor) -> Tensor {
        a.map(f64::sqrt)
    }
    fn powf(&mut self, a: &Tensor, p: f64) -> Tensor {
        a.map(|v| v.powf(p))
    }
    fn recip(&mut self, a: &Tensor) -> Tensor {
        a.map(|v| 1.0 / v)
    }
    fn stop_gradient(&mut self, a: &Tensor) -> Tensor {
        a.clone()
    }
}
