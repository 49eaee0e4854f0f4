//! Euler and average-velocity samplers on a uniform time grid.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowcore::VelocityModel;
use crate::numkit::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerMode {
    /// `x ← x − Δt·u(x, t, t, y)`
    Euler,
    /// `x ← x − (t_i − t_{i+1})·u(x, t_i, t_{i+1}, y)`
    Avg,
}

impl SamplerMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SamplerMode::Euler => "euler",
            SamplerMode::Avg => "avg",
        }
    }
}

impl fmt::Display for SamplerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SamplerMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "euler" => Ok(SamplerMode::Euler),
            "avg" => Ok(SamplerMode::Avg),
            _ => Err(format!("unknown sampler mode `{s}` (expected euler or avg)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub nfe: usize,
    pub mode: SamplerMode,
}

impl SamplerConfig {
    pub fn new(nfe: usize, mode: SamplerMode) -> Result<Self> {
        let cfg = Self { nfe, mode };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nfe == 0 {
            return Err(Error::contract("nfe must be at least 1"));
        }
        Ok(())
    }
}

/// Grid point `i` of `n`, from `t_0 = 1` down to `t_n = 0`.
fn grid(i: usize, n: usize) -> f64 {
    if i == n {
        0.0
    } else {
        1.0 - i as f64 / n as f64
    }
}

fn check(x: &Tensor, t: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::SamplerDivergence { t })
    }
}

/// Integrates the instantaneous field `u(·, t, t, y)` from `t = 1` to `t = 0`
/// with `nfe` Euler steps of size `1/nfe`.
pub fn euler_sample<M: VelocityModel + ?Sized>(model: &M, x1: &Tensor, y: &Tensor, nfe: usize) -> Result<Tensor> {
    SamplerConfig::new(nfe, SamplerMode::Euler)?;
    let dt = 1.0 / nfe as f64;
    let mut x = x1.clone();
    for i in 0..nfe {
        let t = grid(i, nfe);
        let v = model.average_velocity(&x, t, t, y)?;
        x = x.axpy(-dt, &v);
        check(&x, grid(i + 1, nfe))?;
    }
    Ok(x)
}

/// Jumps across `nfe` equal intervals using the average velocity of each.
pub fn avg_velocity_sample<M: VelocityModel + ?Sized>(
    model: &M,
    x1: &Tensor,
    y: &Tensor,
    nfe: usize,
) -> Result<Tensor> {
    SamplerConfig::new(nfe, SamplerMode::Avg)?;
    let mut x = x1.clone();
    for i in 0..nfe {
        let (hi, lo) = (grid(i, nfe), grid(i + 1, nfe));
        let u = model.average_velocity(&x, hi, lo, y)?;
        x = x.axpy(-(hi - lo), &u);
        check(&x, lo)?;
    }
    Ok(x)
}

pub fn sample<M: VelocityModel + ?Sized>(model: &M, x1: &Tensor, y: &Tensor, cfg: &SamplerConfig) -> Result<Tensor> {
    match cfg.mode {
        SamplerMode::Euler => euler_sample(model, x1, y, cfg.nfe),
        SamplerMode::Avg => avg_velocity_sample(model, x1, y, cfg.nfe),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Constant(Vec<f64>);

    impl VelocityModel for Constant {
        fn average_velocity(&self, x: &Tensor, _: f64, _: f64, _: &Tensor) -> Result<Tensor> {
            Ok(Tensor::new(x.shape().to_vec(), self.0.repeat(x.len() / self.0.len())).unwrap())
        }
    }

    struct Exploding;

    impl VelocityModel for Exploding {
        fn average_velocity(&self, x: &Tensor, _: f64, _: f64, _: &Tensor) -> Result<Tensor> {
            Ok(x.map(|_| f64::INFINITY))
        }
    }

    #[test]
    fn grid_endpoints_are_exact() {
        for n in [1, 3, 7, 64] {
            assert_eq!(grid(0, n), 1.0);
            assert_eq!(grid(n, n), 0.0);
        }
    }

    #[test]
    fn zero_field_is_identity() {
        let x = Tensor::from_vec(vec![0.3, -2.0]);
        let zero = Constant(vec![0.0, 0.0]);
        for n in [1, 5, 32] {
            assert_eq!(euler_sample(&zero, &x, &x, n).unwrap(), x);
            assert_eq!(avg_velocity_sample(&zero, &x, &x, n).unwrap(), x);
        }
    }

    #[test]
    fn constant_field_telescopes() {
        let x = Tensor::from_vec(vec![1.0, 4.0]);
        let c = Constant(vec![0.5, -1.5]);
        for n in [1, 2, 10, 64] {
            let out = euler_sample(&c, &x, &x, n).unwrap();
            assert!(out.max_abs_diff(&Tensor::from_vec(vec![0.5, 5.5])) < 1e-13);
        }
    }

    #[test]
    fn divergence_and_zero_nfe() {
        let x = Tensor::from_vec(vec![1.0]);
        assert!(matches!(euler_sample(&Exploding, &x, &x, 3), Err(Error::SamplerDivergence { .. })));
        assert!(matches!(avg_velocity_sample(&Exploding, &x, &x, 1), Err(Error::SamplerDivergence { t }) if t == 0.0));
        assert!(euler_sample(&Constant(vec![0.0]), &x, &x, 0).is_err());
        assert!("rk4".parse::<SamplerMode>().is_err());
    }
}
