use super::AdaptiveLossConfig;
use crate::numkit::{Kernel, Tensor};

/// `(weighted, raw)` for one residual: `raw = ‖Δ‖²`,
/// `weighted = ‖Δ‖^(2γ) / (‖Δ‖² + c)^p`, or `raw` when weighting is disabled.
pub fn adaptive_weight(delta: &Tensor, cfg: &AdaptiveLossConfig) -> (f64, f64) {
    let raw = delta.norm_sq();
    if !cfg.enabled {
        return (raw, raw);
    }
    let w = 1.0 / (raw + cfg.c).powf(cfg.p);
    (w * raw.powf(cfg.gamma), raw)
}

/// Batch-mean adaptive loss of `pred` against a constant `target`, both `[B, D]`.
///
/// Per-row weights are computed from the primal values and enter as
/// constants. Returns the loss value and the batch-mean raw loss.
pub fn weighted_batch_loss<K: Kernel>(
    k: &mut K,
    pred: &K::Value,
    target: &Tensor,
    cfg: &AdaptiveLossConfig,
) -> (K::Value, f64) {
    let target = k.constant(target.clone());
    let delta = k.sub(pred, &target);
    let sq = k.square(&delta);
    let per_row = k.sum_rows(&sq);
    let raw_rows = k.primal(&per_row).clone();
    let raw = raw_rows.sum() / raw_rows.len() as f64;
    if !cfg.enabled {
        return (k.mean(&per_row), raw);
    }
    let weights = k.constant(raw_rows.map(|s| 1.0 / (s + cfg.c).powf(cfg.p)));
    let shaped = k.powf(&per_row, cfg.gamma);
    let weighted = k.mul(&weights, &shaped);
    (k.mean(&weighted), raw)
}
