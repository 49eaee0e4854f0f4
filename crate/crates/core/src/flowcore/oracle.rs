//! Analytic instantaneous-velocity fields and their trajectory integrals.
//!
//! Three fields with closed forms:
//!
//! * `Constant(c)`: `v = c`.
//! * `SinglePoint(a)`: the data distribution is a point mass at `a`, so the
//!   path from `x` at time `t` is the straight line to `a` and `v = (x − a)/t`.
//! * `Gaussian1d(σ0)`: clean data `x0 ~ N(0, σ0²)` per coordinate, prior
//!   `x1 ~ N(0, 1)`. With `V(t) = (1−t)²σ0² + t²` the conditional expectation
//!   `E[x1 − x0 | x_t = x]` is `V'(t)/(2V(t)) · x`, whose trajectories are
//!   `x(τ) = x(t)·sqrt(V(τ)/V(t))`.
//!
//! [`OracleField::displacement`] integrates with fixed-step RK4 and is the
//! route under test; [`OracleField::exact_average_velocity`] evaluates the
//! closed-form trajectories and serves as the independent check.

use super::VelocityModel;
use crate::error::{Error, Result};
use crate::numkit::Tensor;

pub const DEFAULT_RK4_STEPS: usize = 1024;

/// Smallest time at which fields that divide by `t` may be queried.
pub const MIN_TIME: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub enum OracleField {
    Constant(Tensor),
    SinglePoint(Tensor),
    Gaussian1d { sigma0: f64 },
}

impl OracleField {
    pub fn name(&self) -> &'static str {
        match self {
            OracleField::Constant(_) => "constant",
            OracleField::SinglePoint(_) => "single-point",
            OracleField::Gaussian1d { .. } => "gaussian-1d",
        }
    }

    fn check_time(&self, t: f64) -> Result<()> {
        let ok = match self {
            OracleField::Constant(_) => (0.0..=1.0).contains(&t),
            OracleField::SinglePoint(_) => (MIN_TIME..=1.0).contains(&t),
            OracleField::Gaussian1d { sigma0 } => {
                (0.0..=1.0).contains(&t) && (*sigma0 != 0.0 || t >= MIN_TIME)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain {
                field: self.name(),
                t,
            })
        }
    }

    fn check_shape(&self, x: &Tensor) -> Result<()> {
        match self {
            OracleField::Constant(p) | OracleField::SinglePoint(p) if p.len() != x.len() => {
                Err(Error::shape(format!(
                    "{} field of size {} queried with {:?}",
                    self.name(),
                    p.len(),
                    x.shape()
                )))
            }
            _ => Ok(()),
        }
    }

    fn variance(sigma0: f64, t: f64) -> f64 {
        (1.0 - t).powi(2) * sigma0 * sigma0 + t * t
    }

    fn velocity_unchecked(&self, x: &Tensor, t: f64) -> Tensor {
        match self {
            OracleField::Constant(c) => Tensor::from_parts(x.shape().to_vec(), c.data().to_vec()),
            OracleField::SinglePoint(a) => Tensor::from_parts(
                x.shape().to_vec(),
                x.data().iter().zip(a.data()).map(|(x, a)| (x - a) / t).collect(),
            ),
            OracleField::Gaussian1d { sigma0 } => {
                let s2 = sigma0 * sigma0;
                let gain = (t - (1.0 - t) * s2) / Self::variance(*sigma0, t);
                x.scale(gain)
            }
        }
    }

    /// Instantaneous velocity `v(x, t)`.
    pub fn velocity(&self, x: &Tensor, t: f64) -> Result<Tensor> {
        self.check_time(t)?;
        self.check_shape(x)?;
        Ok(self.velocity_unchecked(x, t))
    }

    /// Integrates the flow ODE from `(x, from)` to `to` with `steps` classical
    /// RK4 steps. Returns the end state and the accumulated
    /// `∫_to^from v(x_τ, τ) dτ` (for `to ≤ from`).
    pub fn flow(&self, x: &Tensor, from: f64, to: f64, steps: usize) -> Result<(Tensor, Tensor)> {
        if steps == 0 {
            return Err(Error::contract("RK4 needs at least one step"));
        }
        self.check_time(from)?;
        self.check_time(to)?;
        self.check_shape(x)?;
        let h = (to - from) / steps as f64;
        let mut state = x.clone();
        let mut integral = Tensor::zeros(x.shape());
        for i in 0..steps {
            let t = from + i as f64 * h;
            let k1 = self.velocity_unchecked(&state, t);
            let k2 = self.velocity_unchecked(&state.axpy(0.5 * h, &k1), t + 0.5 * h);
            let k3 = self.velocity_unchecked(&state.axpy(0.5 * h, &k2), t + 0.5 * h);
            let k4 = self.velocity_unchecked(&state.axpy(h, &k3), t + h);
            let slope = Tensor::from_parts(
                k1.shape().to_vec(),
                (0..k1.len())
                    .map(|j| {
                        (k1.data()[j] + 2.0 * k2.data()[j] + 2.0 * k3.data()[j] + k4.data()[j])
                            / 6.0
                    })
                    .collect(),
            );
            state = state.axpy(h, &slope);
            integral = integral.axpy(-h, &slope);
        }
        Ok((state, integral))
    }

    /// Displacement `k(x, t1, t2) = ∫_{t2}^{t1} v(x_τ, τ) dτ` along the
    /// trajectory through `(x, t1)`.
    pub fn displacement(&self, x: &Tensor, t1: f64, t2: f64, steps: usize) -> Result<Tensor> {
        if t2 > t1 {
            return Err(Error::contract(format!("displacement needs t2 <= t1, got {t1}, {t2}")));
        }
        Ok(self.flow(x, t1, t2, steps)?.1)
    }

    /// `k(x, t1, t2) / (t1 − t2)`, and `v(x, t1)` when the interval is empty.
    pub fn average_velocity(&self, x: &Tensor, t1: f64, t2: f64, steps: usize) -> Result<Tensor> {
        if t1 == t2 {
            return self.velocity(x, t1);
        }
        let k = self.displacement(x, t1, t2, steps)?;
        Ok(k.scale(1.0 / (t1 - t2)))
    }

    /// Average velocity from the closed-form trajectories, no integration.
    pub fn exact_average_velocity(&self, x: &Tensor, t1: f64, t2: f64) -> Result<Tensor> {
        if t2 > t1 {
            return Err(Error::contract(format!("average velocity needs t2 <= t1, got {t1}, {t2}")));
        }
        if t1 == t2 {
            return self.velocity(x, t1);
        }
        self.check_time(t1)?;
        self.check_shape(x)?;
        match self {
            OracleField::Constant(c) => Ok(Tensor::from_parts(x.shape().to_vec(), c.data().to_vec())),
            OracleField::SinglePoint(a) => Ok(Tensor::from_parts(
                x.shape().to_vec(),
                x.data().iter().zip(a.data()).map(|(x, a)| (x - a) / t1).collect(),
            )),
            OracleField::Gaussian1d { sigma0 } => {
                if !(0.0..=1.0).contains(&t2) {
                    return Err(Error::Domain {
                        field: self.name(),
                        t: t2,
                    });
                }
                let ratio = (Self::variance(*sigma0, t2) / Self::variance(*sigma0, t1)).sqrt();
                Ok(x.scale((1.0 - ratio) / (t1 - t2)))
            }
        }
    }

    /// Exact state at time `to` on the trajectory through `(x, from)`.
    pub fn exact_flow(&self, x: &Tensor, from: f64, to: f64) -> Result<Tensor> {
        self.check_time(from)?;
        self.check_shape(x)?;
        match self {
            OracleField::Constant(c) => Ok(x.axpy(to - from, &Tensor::from_parts(x.shape().to_vec(), c.data().to_vec()))),
            OracleField::SinglePoint(a) => Ok(Tensor::from_parts(
                x.shape().to_vec(),
                x.data()
                    .iter()
                    .zip(a.data())
                    .map(|(x, a)| a + (to / from) * (x - a))
                    .collect(),
            )),
            OracleField::Gaussian1d { sigma0 } => {
                let ratio = (Self::variance(*sigma0, to) / Self::variance(*sigma0, from)).sqrt();
                Ok(x.scale(ratio))
            }
        }
    }

    fn rowwise(
        x: &Tensor,
        f: impl Fn(&Tensor) -> Result<Tensor>,
    ) -> Result<Tensor> {
        if x.rank() == 1 {
            return f(x);
        }
        let rows = (0..x.rows()).map(|i| f(&x.row(i))).collect::<Result<Vec<_>>>()?;
        Tensor::stack_rows(&rows)
    }
}

impl VelocityModel for OracleField {
    fn average_velocity(&self, x: &Tensor, t1: f64, t2: f64, _y: &Tensor) -> Result<Tensor> {
        Self::rowwise(x, |row| OracleField::average_velocity(self, row, t1, t2, DEFAULT_RK4_STEPS))
    }
}

/// Uses the closed-form average velocity of the wrapped field.
#[derive(Clone, Copy, Debug)]
pub struct ExactOracle<'a>(pub &'a OracleField);

impl VelocityModel for ExactOracle<'_> {
    fn average_velocity(&self, x: &Tensor, t1: f64, t2: f64, _y: &Tensor) -> Result<Tensor> {
        OracleField::rowwise(x, |row| self.0.exact_average_velocity(row, t1, t2))
    }
}
