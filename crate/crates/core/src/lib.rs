//! Average-velocity flow matching at desk scale.
//!
//! The crate is layered bottom-up:
//!
//! * [`numkit`]: tensors, reverse-mode tape and dual-number JVPs.
//! * [`flowcore`]: interpolation paths, time sampling and analytic velocity
//!   fields with residual checks for the average-velocity identities.
//! * [`netmodel`]: the conditional average-velocity MLP `u(x, t1, t2, y)`.
//! * [`training`]: CFM, JVP-based MeanFlow and velocity-composition objectives.
//! * [`sampler`]: Euler and average-velocity samplers.
//! * [`tasks`]: synthetic conditional-denoising datasets.
//! * [`evalkit`]: SI-SDR family metrics and energy distance.

mod codec;
pub mod error;
pub mod evalkit;
pub mod flowcore;
pub mod netmodel;
pub mod numkit;
pub mod sampler;
pub mod tasks;
pub mod training;

pub use error::{Error, Result};
pub use numkit::Tensor;

/// Deterministic generator used everywhere a seed is accepted.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Generator streams; each consumer of a run seed draws from its own.
pub(crate) mod stream {
    pub const INIT: u64 = 0;
    pub const SHUFFLE: u64 = 1;
    pub const TIMES: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const DATA: u64 = 4;
}

/// Builds the generator for one independent purpose (`stream`) of a seeded run.
pub fn seeded_rng(seed: u64, stream: u64) -> Rng {
    use rand::SeedableRng;
    let mut rng = Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
