//! Interpolation paths, time sampling and analytic velocity fields.

mod identity;
mod oracle;
mod path;
mod time;

pub use identity::{
    check_additivity, check_composition_identity, check_meanflow_identity, identity_sweep,
    IdentityKind, ResidualRow, SweepConfig, ADDITIVITY_TOL, COMPOSITION_TOL, MEANFLOW_REF_STEP,
    MEANFLOW_TOL,
};
pub use oracle::{ExactOracle, OracleField, DEFAULT_RK4_STEPS, MIN_TIME};
pub use path::{interpolate, PathState};
pub use time::{sample_time_pair, TimePair, TimeSamplerConfig};

use crate::error::Result;
use crate::numkit::Tensor;

/// Anything that can report an average velocity `u(x, t1, t2, y)`.
///
/// `x` and `y` are `[B, D]` batches (or single `[D]` vectors); `t1 == t2`
/// asks for the instantaneous velocity.
pub trait VelocityModel {
    fn average_velocity(&self, x: &Tensor, t1: f64, t2: f64, y: &Tensor) -> Result<Tensor>;
}

impl<M: VelocityModel + ?Sized> VelocityModel for &M {
    fn average_velocity(&self, x: &Tensor, t1: f64, t2: f64, y: &Tensor) -> Result<Tensor> {
        (**self).average_velocity(x, t1, t2, y)
    }
}
