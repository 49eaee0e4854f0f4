//! Forward-mode directional derivatives with dual tensors.
//!
//! Every value carries a primal and a tangent; a single pass through a
//! function built from [`Kernel`] primitives yields `(f(x), J_f(x)·v)`.
//! Tangents known to be zero (constants, stop-gradient outputs) are stored as
//! `None` so that parameter matmuls do not pay for a second product.

use super::kernel::{pow_grad, silu, silu_grad, Kernel};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct DualTensor {
    primal: Tensor,
    tangent: Option<Tensor>,
}

impl DualTensor {
    pub fn new(primal: Tensor, tangent: Tensor) -> Result<Self> {
        if primal.shape() != tangent.shape() {
            return Err(Error::shape(format!(
                "primal {:?} vs tangent {:?}",
                primal.shape(),
                tangent.shape()
            )));
        }
        Ok(Self {
            primal,
            tangent: Some(tangent),
        })
    }

    pub fn constant(primal: Tensor) -> Self {
        Self {
            primal,
            tangent: None,
        }
    }

    pub fn primal(&self) -> &Tensor {
        &self.primal
    }

    pub fn tangent(&self) -> Tensor {
        self.tangent
            .clone()
            .unwrap_or_else(|| Tensor::zeros(self.primal.shape()))
    }

    pub fn into_parts(self) -> (Tensor, Tensor) {
        let tangent = self
            .tangent
            .unwrap_or_else(|| Tensor::zeros(self.primal.shape()));
        (self.primal, tangent)
    }
}

/// Dual-number evaluator. Remembers the first primitive that produced a
/// non-finite primal or tangent.
#[derive(Debug, Default)]
pub struct DualKernel {
    overflow: Option<&'static str>,
    evaluations: usize,
}

impl DualKernel {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of primitive evaluations performed so far.
    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    fn finish(&mut self, op: &'static str, primal: Tensor, tangent: Option<Tensor>) -> DualTensor {
        self.evaluations += 1;
        if self.overflow.is_none()
            && (!primal.is_finite() || tangent.as_ref().is_some_and(|t| !t.is_finite()))
        {
            self.overflow = Some(op);
        }
        DualTensor { primal, tangent }
    }

    fn elementwise(
        &mut self,
        op: &'static str,
        a: &DualTensor,
        f: impl Fn(f64) -> f64,
        df: impl Fn(f64) -> f64,
    ) -> DualTensor {
        let primal = a.primal.map(&f);
        let tangent = a
            .tangent
            .as_ref()
            .map(|t| t.zip_map(&a.primal, |dt, x| dt * df(x)));
        self.finish(op, primal, tangent)
    }
}

fn add_opt(a: Option<Tensor>, b: Option<Tensor>) -> Option<Tensor> {
    match (a, b) {
        (Some(a), Some(b)) => Some(a.add(&b)),
        (a, None) => a,
        (None, b) => b,
    }
}

impl Kernel for DualKernel {
    type Value = DualTensor;

    fn constant(&mut self, t: Tensor) -> DualTensor {
        DualTensor::constant(t)
    }
    fn primal<'a>(&'a self, v: &'a DualTensor) -> &'a Tensor {
        &v.primal
    }
    fn add(&mut self, a: &DualTensor, b: &DualTensor) -> DualTensor {
        let t = add_opt(a.tangent.clone(), b.tangent.clone());
        self.finish("add", a.primal.add(&b.primal), t)
    }
    fn sub(&mut self, a: &DualTensor, b: &DualTensor) -> DualTensor {
        let t = add_opt(a.tangent.clone(), b.tangent.as_ref().map(|t| t.scale(-1.0)));
        self.finish("sub", a.primal.sub(&b.primal), t)
    }
    fn mul(&mut self, a: &DualTensor, b: &DualTensor) -> DualTensor {
        let t = add_opt(
            a.tangent.as_ref().map(|t| t.mul(&b.primal)),
            b.tangent.as_ref().map(|t| a.primal.mul(t)),
        );
        self.finish("mul", a.primal.mul(&b.primal), t)
    }
    fn scale(&mut self, a: &DualTensor, s: f64) -> DualTensor {
        let t = a.tangent.as_ref().map(|t| t.scale(s));
        self.finish("scale", a.primal.scale(s), t)
    }
    fn matmul(&mut self, a: &DualTensor, b: &DualTensor) -> DualTensor {
        let t = add_opt(
            a.tangent.as_ref().map(|t| t.matmul(&b.primal)),
            b.tangent.as_ref().map(|t| a.primal.matmul(t)),
        );
        self.finish("matmul", a.primal.matmul(&b.primal), t)
    }
    fn sum(&mut self, a: &DualTensor) -> DualTensor {
        let t = a.tangent.as_ref().map(|t| Tensor::scalar(t.sum()));
        self.finish("sum", Tensor::scalar(a.primal.sum()), t)
    }
    fn mean(&mut self, a: &DualTensor) -> DualTensor {
        let n = a.primal.len() as f64;
        let t = a.tangent.as_ref().map(|t| Tensor::scalar(t.sum() / n));
        self.finish("mean", Tensor::scalar(a.primal.sum() / n), t)
    }
    fn sum_rows(&mut self, a: &DualTensor) -> DualTensor {
        let t = a.tangent.as_ref().map(Tensor::sum_rows);
        self.finish("sum_rows", a.primal.sum_rows(), t)
    }
    fn broadcast_rows(&mut self, a: &DualTensor, rows: usize) -> DualTensor {
        let t = a.tangent.as_ref().map(|t| t.broadcast_rows(rows));
        self.finish("broadcast_rows", a.primal.broadcast_rows(rows), t)
    }
    fn broadcast_cols(&mut self, a: &DualTensor, cols: usize) -> DualTensor {
        let t = a.tangent.as_ref().map(|t| t.broadcast_cols(cols));
        self.finish("broadcast_cols", a.primal.broadcast_cols(cols), t)
    }
    fn concat_cols(&mut self, parts: &[&DualTensor]) -> DualTensor {
        let primals: Vec<&Tensor> = parts.iter().map(|p| &p.primal).collect();
        let primal = Tensor::concat_cols(&primals);
        let tangent = if parts.iter().any(|p| p.tangent.is_some()) {
            let owned: Vec<Tensor> = parts.iter().map(|p| p.tangent()).collect();
            let refs: Vec<&Tensor> = owned.iter().collect();
            Some(Tensor::concat_cols(&refs))
        } else {
            None
        };
        self.finish("concat", primal, tangent)
    }
    fn slice_cols(&mut self, a: &DualTensor, start: usize, len: usize) -> DualTensor {
        let t = a.tangent.as_ref().map(|t| t.slice_cols(start, len));
        self.finish("slice", a.primal.slice_cols(start, len), t)
    }
    fn silu(&mut self, a: &DualTensor) -> DualTensor {
        self.elementwise("silu", a, silu, silu_grad)
    }
    fn sin(&mut self, a: &DualTensor) -> DualTensor {
        self.elementwise("sin", a, f64::sin, f64::cos)
    }
    fn cos(&mut self, a: &DualTensor) -> DualTensor {
        self.elementwise("cos", a, f64::cos, |x| -x.sin())
    }
    fn square(&mut self, a: &DualTensor) -> DualTensor {
        self.elementwise("square", a, |x| x * x, |x| 2.0 * x)
    }
    fn sqrt(&mut self, a: &DualTensor) -> DualTensor {
        self.elementwise("sqrt", a, f64::sqrt, |x| pow_grad(x, 0.5))
    }
    fn powf(&mut self, a: &DualTensor, p: f64) -> DualTensor {
        self.elementwise("powf", a, |x| x.powf(p), |x| pow_grad(x, p))
    }
    fn recip(&mut self, a: &DualTensor) -> DualTensor {
        self.elementwise("recip", a, |x| 1.0 / x, |x| -1.0 / (x * x))
    }
    fn stop_gradient(&mut self, a: &DualTensor) -> DualTensor {
        DualTensor::constant(a.primal.clone())
    }
}

/// Jacobian–vector product of `f` at `inputs` along `tangents`, computed in a
/// single dual-number pass. Returns `(f(inputs), J_f(inputs) · tangents)`.
pub fn jvp<F>(f: F, inputs: &[Tensor], tangents: &[Tensor]) -> Result<(Tensor, Tensor)>
where
    F: FnOnce(&mut DualKernel, &[DualTensor]) -> DualTensor,
{
    if inputs.len() != tangents.len() {
        return Err(Error::contract(format!(
            "{} inputs but {} tangents",
            inputs.len(),
            tangents.len()
        )));
    }
    let duals = inputs
        .iter()
        .zip(tangents)
        .map(|(x, v)| DualTensor::new(x.clone(), v.clone()))
        .collect::<Result<Vec<_>>>()?;
    let mut kernel = DualKernel::new();
    let out = f(&mut kernel, &duals);
    if let Some(op) = kernel.overflow {
        return Err(Error::NumericOverflow(format!("jvp primitive `{op}`")));
    }
    Ok(out.into_parts())
}
