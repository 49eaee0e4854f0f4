use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::{energy_distance, si_sdr, si_sir_sar};
use crate::error::{Error, Result};
use crate::numkit::Tensor;
use crate::tasks::{Dataset, TaskKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub index: usize,
    pub si_sdr: f64,
    pub si_sir: f64,
    pub si_sar: f64,
    pub mse: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    /// Mean and population standard deviation.
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return Self { mean: f64::NAN, std: f64::NAN };
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub si_sdr: Summary,
    pub si_sir: Summary,
    pub si_sar: Summary,
    pub mse: Summary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub count: usize,
    pub summary: EvalSummary,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub energy_distance: Option<f64>,
    pub samples: Vec<SampleMetrics>,
}

pub const EVAL_CSV_HEADER: &str = "index,si_sdr,si_sir,si_sar,mse";

impl EvalReport {
    pub fn from_samples(samples: Vec<SampleMetrics>, energy_distance: Option<f64>) -> Self {
        let summary = EvalSummary {
            si_sdr: Summary::of(samples.iter().map(|s| s.si_sdr)),
            si_sir: Summary::of(samples.iter().map(|s| s.si_sir)),
            si_sar: Summary::of(samples.iter().map(|s| s.si_sar)),
            mse: Summary::of(samples.iter().map(|s| s.mse)),
        };
        Self {
            count: samples.len(),
            summary,
            energy_distance,
            samples,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(EVAL_CSV_HEADER);
        out.push('\n');
        for s in &self.samples {
            let _ = writeln!(out, "{},{},{},{},{}", s.index, s.si_sdr, s.si_sir, s.si_sar, s.mse);
        }
        out
    }
}

/// Scores `estimates` (`[N, D]`) against the clean signals of `test`.
///
/// Energy distance to the held-out clean set is added for `points2d`.
pub fn evaluate(test: &Dataset, estimates: &Tensor) -> Result<EvalReport> {
    if estimates.shape() != [test.len(), test.signal_dim] {
        return Err(Error::shape(format!(
            "estimates {:?} for a test set of {} × {}",
            estimates.shape(),
            test.len(),
            test.signal_dim
        )));
    }
    let samples = test
        .pairs
        .iter()
        .enumerate()
        .map(|(i, pair)| {
            let est = estimates.row(i);
            let (si_sir, si_sar) = si_sir_sar(&pair.clean, &pair.noise, &est)?;
            Ok(SampleMetrics {
                index: i,
                si_sdr: si_sdr(&pair.clean, &est)?,
                si_sir,
                si_sar,
                mse: est.sub(&pair.clean).norm_sq() / est.len() as f64,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let energy = match test.kind {
        TaskKind::Points2d => Some(energy_distance(estimates, &test.clean_batch())?),
        TaskKind::Specgrid => None,
    };
    Ok(EvalReport::from_samples(samples, energy))
}
