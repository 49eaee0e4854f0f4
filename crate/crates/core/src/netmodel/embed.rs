use std::f64::consts::TAU;

use crate::numkit::Tensor;

/// Log-spaced frequencies `2^(k-1)` for `k = 0..n`, i.e. `1/2, 1, 2, ..., 2^(n-2)`.
///
/// The lowest frequency completes half a period on `[0, 1]`, so `t = 0` and
/// `t = 1` embed differently.
pub fn frequencies(n: usize) -> Vec<f64> {
    (0..n).map(|k| 2f64.powi(k as i32 - 1)).collect()
}

/// `[sin(2π f_k t)..., cos(2π f_k t)...]`, length `2n`.
pub fn fourier_embed(t: f64, n: usize) -> Tensor {
    let freqs = frequencies(n);
    let mut out = Vec::with_capacity(2 * n);
    out.extend(freqs.iter().map(|f| (TAU * f * t).sin()));
    out.extend(freqs.iter().map(|f| (TAU * f * t).cos()));
    Tensor::from_vec(out)
}
