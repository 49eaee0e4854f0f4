use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numkit::Tensor;

/// Largest magnitude any dB metric reports.
pub const DB_CAP: f64 = 100.0;

/// `10·log10(num/den)`, clamped to `±DB_CAP`.
pub fn ratio_db(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        return if num == 0.0 { -DB_CAP } else { DB_CAP };
    }
    let db = 10.0 * (num / den).log10();
    if db.is_nan() {
        -DB_CAP
    } else {
        db.clamp(-DB_CAP, DB_CAP)
    }
}

fn check_pair(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::shape(format!("metric inputs of length {} and {}", a.len(), b.len())));
    }
    Ok(())
}

/// Scale-invariant signal-to-distortion ratio of `estimate` against `reference`.
pub fn si_sdr(reference: &Tensor, estimate: &Tensor) -> Result<f64> {
    check_pair(reference, estimate)?;
    let ss = reference.norm_sq();
    if ss == 0.0 {
        return Err(Error::contract("si_sdr reference is zero"));
    }
    let beta = estimate.dot(reference) / ss;
    let target = reference.scale(beta);
    let residual = estimate.sub(&target);
    Ok(ratio_db(target.norm_sq(), residual.norm_sq()))
}

/// Projection of `estimate` onto `span{s, n}` split into its target part
/// (on `span{s}`), interference part and artifact residual.
#[derive(Clone, Debug, PartialEq)]
pub struct Decomposition {
    pub target: Tensor,
    pub interference: Tensor,
    pub artifacts: Tensor,
}

/// Relative Gram determinant below which `s` and `n` count as collinear.
pub const COLLINEAR_TOL: f64 = 1e-12;

pub fn decompose(s: &Tensor, n: &Tensor, estimate: &Tensor) -> Result<Decomposition> {
    check_pair(s, n)?;
    check_pair(s, estimate)?;
    let ss = s.norm_sq();
    let nn = n.norm_sq();
    if ss == 0.0 || nn == 0.0 {
        return Err(Error::contract("decomposition needs nonzero source and interference"));
    }
    let sn = s.dot(n);
    let det = ss * nn - sn * sn;
    if !(det > COLLINEAR_TOL * ss * nn) {
        return Err(Error::Collinear);
    }
    let se = s.dot(estimate);
    let ne = n.dot(estimate);
    let a = (nn * se - sn * ne) / det;
    let b = (ss * ne - sn * se) / det;
    let target = s.scale(se / ss);
    let projection = s.scale(a).add(&n.scale(b));
    Ok(Decomposition {
        interference: projection.sub(&target),
        artifacts: estimate.sub(&projection),
        target,
    })
}

/// `(si_sir, si_sar)` in dB.
pub fn si_sir_sar(s: &Tensor, n: &Tensor, estimate: &Tensor) -> Result<(f64, f64)> {
    let d = decompose(s, n, estimate)?;
    let sir = ratio_db(d.target.norm_sq(), d.interference.norm_sq());
    let sar = ratio_db(d.target.add(&d.interference).norm_sq(), d.artifacts.norm_sq());
    Ok((sir, sar))
}

fn mean_pair_distance(a: &Tensor, b: &Tensor) -> f64 {
    let rows: Vec<f64> = (0..a.rows())
        .into_par_iter()
        .map(|i| {
            let x = a.row_slice(i);
            (0..b.rows())
                .map(|j| {
                    x.iter()
                        .zip(b.row_slice(j))
                        .map(|(p, q)| (p - q) * (p - q))
                        .sum::<f64>()
                        .sqrt()
                })
                .sum::<f64>()
        })
        .collect();
    rows.iter().sum::<f64>() / (a.rows() * b.rows()) as f64
}

/// Energy distance `2·E‖a − b‖ − E‖a − a′‖ − E‖b − b′‖` between the rows of
/// two `[N, D]` sets, as a V-statistic.
pub fn energy_distance(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols() {
        return Err(Error::shape(format!("energy distance sets {:?} and {:?}", a.shape(), b.shape())));
    }
    if a.rows() == 0 || b.rows() == 0 {
        return Err(Error::contract("energy distance needs nonempty sets"));
    }
    let cross = mean_pair_distance(a, b);
    let within_a = mean_pair_distance(a, a);
    let within_b = mean_pair_distance(b, b);
    Ok((2.0 * cross - within_a - within_b).max(0.0))
}
