use crate::error::{Error, Result};
use crate::flowcore::{TimePair, VelocityModel};
use crate::netmodel::ModelParams;
use crate::numkit::{jvp, DualTensor, Kernel, Tensor};

/// A detached regression target with the network work spent producing it.
#[derive(Clone, Debug, PartialEq)]
pub struct Target {
    pub value: Tensor,
    pub forwards: usize,
    pub jvps: usize,
}

fn same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.shape() == b.shape() {
        Ok(())
    } else {
        Err(Error::shape(format!("{what}: {:?} vs {:?}", a.shape(), b.shape())))
    }
}

/// `x1 − x0`
pub fn cfm_target(x0: &Tensor, x1: &Tensor) -> Result<Tensor> {
    same_shape(x0, x1, "cfm endpoints")?;
    Ok(x1.sub(x0))
}

/// `v − (t1 − t2)·D` with `v = x1 − x0` and `D` the JVP of `u(·, ·, t2, y)` at
/// `(x_t1, t1)` along `(v, 1)`. Inputs are `[B, D]` batches.
pub fn meanflow_jvp_target(
    params: &ModelParams,
    x_t1: &Tensor,
    t1: f64,
    t2: f64,
    y: &Tensor,
    x0: &Tensor,
    x1: &Tensor,
) -> Result<Target> {
    let v = cfm_target(x0, x1)?;
    let xb = params.as_batch(x_t1)?;
    let yb = params.as_batch(y)?;
    let vb = params.as_batch(&v)?;
    if !(t2 <= t1) {
        return Err(Error::contract(format!("meanflow target needs t2 <= t1, got {t1}, {t2}")));
    }
    let b = xb.rows();
    let (_, derivative) = jvp(
        |k, ins| {
            let w: Vec<DualTensor> = params.tensors().iter().map(|p| k.constant(p.clone())).collect();
            let t2v = k.constant(Tensor::full(&[b, 1], t2));
            let yv = k.constant(yb.clone());
            params.forward_with(k, &w, &ins[0], &ins[1], &t2v, &yv)
        },
        &[xb, Tensor::full(&[b, 1], t1)],
        &[vb.clone(), Tensor::full(&[b, 1], 1.0)],
    )?;
    Ok(Target {
        value: vb.axpy(-(t1 - t2), &derivative),
        forwards: 0,
        jvps: 1,
    })
}

/// MeanFlow target with the total derivative replaced by a central
/// difference of step `h` along `(v, 1)`; works for any [`VelocityModel`].
pub fn meanflow_fd_target<M: VelocityModel>(
    model: &M,
    x_t1: &Tensor,
    t1: f64,
    t2: f64,
    y: &Tensor,
    v: &Tensor,
    h: f64,
) -> Result<Target> {
    same_shape(x_t1, v, "meanflow velocity")?;
    let plus = model.average_velocity(&x_t1.axpy(h, v), t1 + h, t2, y)?;
    let minus = model.average_velocity(&x_t1.axpy(-h, v), t1 - h, t2, y)?;
    let derivative = plus.sub(&minus).scale(0.5 / h);
    Ok(Target {
        value: v.axpy(-(t1 - t2), &derivative),
        forwards: 2,
        jvps: 0,
    })
}

/// `α·u(x, t1, m) + (1 − α)·u(x_m, m, t2)` with `x_m = x − (t1 − m)·u(x, t1, m)`.
///
/// The convex form makes `α = 0` and `α = 1` reproduce the model's own
/// full-interval prediction exactly.
pub fn composition_target<M: VelocityModel>(
    model: &M,
    x_t1: &Tensor,
    tp: &TimePair,
    y: &Tensor,
) -> Result<Target> {
    let head = model.average_velocity(x_t1, tp.t1(), tp.m(), y)?;
    let x_m = x_t1.axpy(-tp.d1(), &head);
    let tail = model.average_velocity(&x_m, tp.m(), tp.t2(), y)?;
    let a = tp.alpha();
    Ok(Target {
        value: head.zip_map(&tail, |h, t| a * h + (1.0 - a) * t),
        forwards: 2,
        jvps: 0,
    })
}

/// [`composition_target`] written with step lengths `d1 = t1 − m`, `d2 = m − t2`.
pub fn composition_target_split<M: VelocityModel>(
    model: &M,
    x_t1: &Tensor,
    t1: f64,
    d1: f64,
    d2: f64,
    alpha: f64,
    y: &Tensor,
) -> Result<Target> {
    let head = model.average_velocity(x_t1, t1, t1 - d1, y)?;
    let x_mid = x_t1.axpy(-d1, &head);
    let tail = model.average_velocity(&x_mid, t1 - d1, t1 - d1 - d2, y)?;
    Ok(Target {
        value: head.zip_map(&tail, |h, t| alpha * h + (1.0 - alpha) * t),
        forwards: 2,
        jvps: 0,
    })
}
