use crate::error::{Error, Result};
use crate::numkit::Tensor;

/// A point `x_t` on the straight path between a clean sample and the prior.
#[derive(Clone, Debug, PartialEq)]
pub struct PathState {
    pub value: Tensor,
    pub time: f64,
}

/// `x_t = (1 - t)·x0 + t·x1`
pub fn interpolate(x0: &Tensor, x1: &Tensor, t: f64) -> Result<PathState> {
    if x0.shape() != x1.shape() {
        return Err(Error::shape(format!(
            "interpolate endpoints {:?} and {:?}",
            x0.shape(),
            x1.shape()
        )));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::contract(format!("path time {t} outside [0, 1]")));
    }
    Ok(PathState {
        value: x0.zip_map(x1, |a, b| (1.0 - t) * a + t * b),
        time: t,
    })
}
