//! Scale-invariant separation metrics, energy distance and evaluation reports.
//!
//! Every dB quantity is clamped to `±100` so reports stay finite.

mod metrics;
mod report;

pub use metrics::{
    decompose, energy_distance, ratio_db, si_sdr, si_sir_sar, Decomposition, COLLINEAR_TOL, DB_CAP,
};
pub use report::{evaluate, EvalReport, EvalSummary, SampleMetrics, Summary, EVAL_CSV_HEADER};
