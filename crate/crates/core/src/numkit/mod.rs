//! Minimal dense-tensor compute kernel.
//!
//! * [`Tensor`]: row-major `f64` storage.
//! * [`Kernel`]: the fixed primitive set, implemented by [`Eager`],
//!   [`GradTape`] (reverse mode) and [`DualKernel`] (forward mode).

mod dual;
mod kernel;
mod tape;
mod tensor;

pub use dual::{jvp, DualKernel, DualTensor};
pub use kernel::{Eager, Kernel};
pub use tape::{grad, GradTape, Var};
pub use tensor::Tensor;
