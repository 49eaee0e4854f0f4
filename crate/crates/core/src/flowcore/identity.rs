//! Residual checks for the average-velocity identities on oracle fields.

use serde::Serialize;

use super::oracle::{OracleField, DEFAULT_RK4_STEPS};
use crate::error::{Error, Result};
use crate::numkit::Tensor;

pub const ADDITIVITY_TOL: f64 = 1e-8;
pub const COMPOSITION_TOL: f64 = 1e-8;
/// MeanFlow-identity tolerance at the reference finite-difference step.
pub const MEANFLOW_TOL: f64 = 1e-6;
pub const MEANFLOW_REF_STEP: f64 = 1e-4;

/// `‖u(x,t1,t2) − [v(x,t1) − (t1−t2)·D]‖` where `D` is the central difference of
/// `u` along the trajectory tangent `(v, 1)` with step `fd_step`.
pub fn check_meanflow_identity(
    field: &OracleField,
    x: &Tensor,
    t1: f64,
    t2: f64,
    fd_step: f64,
    steps: usize,
) -> Result<f64> {
    if t1 <= t2 {
        return Err(Error::contract(format!("meanflow check needs t1 > t2, got {t1}, {t2}")));
    }
    if !(fd_step > 0.0) || t1 - fd_step <= t2 || t1 + fd_step > 1.0 {
        return Err(Error::contract(format!(
            "fd_step {fd_step} leaves the interval ({t2}, 1] around t1 = {t1}"
        )));
    }
    let u = field.average_velocity(x, t1, t2, steps)?;
    let v = field.velocity(x, t1)?;
    let forward = field.average_velocity(&x.axpy(fd_step, &v), t1 + fd_step, t2, steps)?;
    let backward = field.average_velocity(&x.axpy(-fd_step, &v), t1 - fd_step, t2, steps)?;
    let total_derivative = forward.sub(&backward).scale(0.5 / fd_step);
    let predicted = v.axpy(-(t1 - t2), &total_derivative);
    Ok(u.sub(&predicted).norm())
}

/// `‖k(t1,t2) − k(t1,m) − k(m,t2)‖` with the second piece starting from `x_m`.
pub fn check_additivity(
    field: &OracleField,
    x: &Tensor,
    t1: f64,
    m: f64,
    t2: f64,
    steps: usize,
) -> Result<f64> {
    check_split(t1, m, t2)?;
    let (x_m, k_head) = field.flow(x, t1, m, steps)?;
    let k_tail = field.displacement(&x_m, m, t2, steps)?;
    let k_full = field.displacement(x, t1, t2, steps)?;
    Ok(k_full.sub(&k_head).sub(&k_tail).norm())
}

/// `‖u(x,t1,t2) − [α·u(x,t1,m) + (1−α)·u(x_m,m,t2)]‖`, `α = (t1−m)/(t1−t2)`.
pub fn check_composition_identity(
    field: &OracleField,
    x: &Tensor,
    t1: f64,
    m: f64,
    t2: f64,
    steps: usize,
) -> Result<f64> {
    if t1 == t2 {
        return Err(Error::contract("composition identity is undefined for t1 == t2"));
    }
    check_split(t1, m, t2)?;
    let x_m = if m == t1 { x.clone() } else { field.flow(x, t1, m, steps)?.0 };
    let u_full = field.average_velocity(x, t1, t2, steps)?;
    let u_head = field.average_velocity(x, t1, m, steps)?;
    let u_tail = field.average_velocity(&x_m, m, t2, steps)?;
    let alpha = (t1 - m) / (t1 - t2);
    let composed = u_head.zip_map(&u_tail, |h, t| alpha * h + (1.0 - alpha) * t);
    Ok(u_full.sub(&composed).norm())
}

fn check_split(t1: f64, m: f64, t2: f64) -> Result<()> {
    if t2 <= m && m <= t1 {
        Ok(())
    } else {
        Err(Error::contract(format!("split needs t2 <= m <= t1, got {t1}, {m}, {t2}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum IdentityKind {
    Additivity,
    Composition,
    Meanflow,
}

impl IdentityKind {
    pub fn as_str(self) -> &'static str {
        match self {
            IdentityKind::Additivity => "additivity",
            IdentityKind::Composition => "composition",
            IdentityKind::Meanflow => "meanflow",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ResidualRow {
    pub field: &'static str,
    pub identity: IdentityKind,
    pub t1: f64,
    pub m: f64,
    pub t2: f64,
    pub residual: f64,
    pub tolerance: f64,
}

impl ResidualRow {
    pub fn passed(&self) -> bool {
        self.residual < self.tolerance
    }
}

#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub fields: Vec<OracleField>,
    pub x: Tensor,
    pub grid: Vec<f64>,
    pub steps: usize,
    pub fd_step: f64,
}

impl SweepConfig {
    /// 5×5×5 grid on [0.1, 0.9] over the three oracle fields.
    pub fn standard(fd_step: f64, steps: usize) -> Self {
        Self {
            fields: vec![
                OracleField::Constant(Tensor::from_vec(vec![0.7, -1.2])),
                OracleField::SinglePoint(Tensor::from_vec(vec![0.25, -1.0])),
                OracleField::Gaussian1d { sigma0: 2.0 },
            ],
            x: Tensor::from_vec(vec![1.0, -0.5]),
            grid: vec![0.1, 0.3, 0.5, 0.7, 0.9],
            steps,
            fd_step,
        }
    }

    /// The MeanFlow tolerance scales with the `O(h²)` truncation error of the
    /// central difference.
    pub fn meanflow_tolerance(&self) -> f64 {
        MEANFLOW_TOL * (self.fd_step / MEANFLOW_REF_STEP).powi(2).max(1.0)
    }
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self::standard(MEANFLOW_REF_STEP, 2048)
    }
}

/// Runs every identity over every valid `(t1, m, t2)` triple of the grid.
pub fn identity_sweep(cfg: &SweepConfig) -> Result<Vec<ResidualRow>> {
    let mut rows = Vec::new();
    let steps = if cfg.steps == 0 { DEFAULT_RK4_STEPS } else { cfg.steps };
    for field in &cfg.fields {
        for &t1 in &cfg.grid {
            for &t2 in &cfg.grid {
                if t2 >= t1 {
                    continue;
                }
                let residual = check_meanflow_identity(field, &cfg.x, t1, t2, cfg.fd_step, steps)?;
                rows.push(ResidualRow {
                    field: field.name(),
                    identity: IdentityKind::Meanflow,
                    t1,
                    m: f64::NAN,
                    t2,
                    residual,
                    tolerance: cfg.meanflow_tolerance(),
                });
                for &m in &cfg.grid {
                    if !(t2 <= m && m <= t1) {
                        continue;
                    }
                    let additivity = check_additivity(field, &cfg.x, t1, m, t2, steps)?;
                    rows.push(ResidualRow {
                        field: field.name(),
                        identity: IdentityKind::Additivity,
                        t1,
                        m,
                        t2,
                        residual: additivity,
                        tolerance: ADDITIVITY_TOL,
                    });
                    let composition = check_composition_identity(field, &cfg.x, t1, m, t2, steps)?;
                    rows.push(ResidualRow {
                        field: field.name(),
                        identity: IdentityKind::Composition,
                        t1,
                        m,
                        t2,
                        residual: composition,
                        tolerance: COMPOSITION_TOL,
                    });
                }
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_field_residuals_vanish() {
        let c = OracleField::Constant(Tensor::from_vec(vec![0.7]));
        let x = Tensor::from_vec(vec![1.0]);
        let r = check_meanflow_identity(&c, &x, 0.8, 0.2, 1e-4, 64).unwrap();
        assert!(r < 1e-10, "residual {r}");
        assert!(check_composition_identity(&c, &x, 0.8, 0.5, 0.2, 64).unwrap() < 1e-14);
    }

    #[test]
    fn single_point_meanflow_residual_is_roundoff() {
        let p = OracleField::SinglePoint(Tensor::from_vec(vec![0.25]));
        let x = Tensor::from_vec(vec![1.0]);
        let r = check_meanflow_identity(&p, &x, 0.8, 0.2, 1e-4, 256).unwrap();
        assert!(r < 1e-10, "residual {r}");
    }

    #[test]
    fn degenerate_splits_are_exact() {
        let g = OracleField::Gaussian1d { sigma0: 2.0 };
        let x = Tensor::from_vec(vec![1.0, -0.3]);
        assert_eq!(check_composition_identity(&g, &x, 0.9, 0.1, 0.1, 64).unwrap(), 0.0);
        assert_eq!(check_composition_identity(&g, &x, 0.9, 0.9, 0.1, 64).unwrap(), 0.0);
    }

    #[test]
    fn gaussian_identities_hold() {
        let g = OracleField::Gaussian1d { sigma0: 2.0 };
        let x = Tensor::from_vec(vec![1.0]);
        assert!(check_composition_identity(&g, &x, 0.9, 0.5, 0.1, 2048).unwrap() < 1e-8);
        assert!(check_meanflow_identity(&g, &x, 0.8, 0.2, 1e-4, 1024).unwrap() < 1e-6);
    }

    #[test]
    fn composition_rejects_empty_interval() {
        let g = OracleField::Gaussian1d { sigma0: 2.0 };
        let x = Tensor::from_vec(vec![1.0]);
        assert!(check_composition_identity(&g, &x, 0.5, 0.5, 0.5, 8).is_err());
    }
}
