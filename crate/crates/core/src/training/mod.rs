//! Training objectives, adaptive loss weighting, Adam and the step loop.
//!
//! Three objectives share one network and one loop:
//!
//! * `cfm`: regress the instantaneous velocity `x1 − x0` at `t2 = t1`.
//! * `meanflow-jvp`: regress `v − (t1 − t2)·du/dt1`, with the total derivative
//!   taken by a dual-number JVP along `(v, 1)`.
//! * `composition`: regress the composition of two shorter average velocities
//!   evaluated by the model itself; no derivatives of the network are needed.
//!
//! All targets are computed outside the gradient tape, so no gradient flows
//! through them.

mod adam;
mod loss;
mod overhead;
mod targets;
mod trainer;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use adam::Adam;
pub use loss::{adaptive_weight, weighted_batch_loss};
pub use overhead::{bench_objective, BenchRow};
pub use targets::{
    cfm_target, composition_target, composition_target_split, meanflow_fd_target,
    meanflow_jvp_target, Target,
};
pub use trainer::{
    median_ms, replay_time_pairs, step_gradient, step_target, steps_csv, train, train_step, StepGradient, StepInputs,
    StepRecord, Trainer, STEPS_CSV_HEADER,
};

use crate::error::{Error, Result};
use crate::flowcore::TimeSamplerConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    Cfm,
    MeanflowJvp,
    Composition,
}

impl Objective {
    pub const ALL: [Objective; 3] = [Objective::Cfm, Objective::MeanflowJvp, Objective::Composition];

    pub fn as_str(self) -> &'static str {
        match self {
            Objective::Cfm => "cfm",
            Objective::MeanflowJvp => "meanflow-jvp",
            Objective::Composition => "composition",
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Objective {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Objective::ALL
            .into_iter()
            .find(|o| o.as_str() == s)
            .ok_or_else(|| format!("unknown objective `{s}` (expected cfm, meanflow-jvp or composition)"))
    }
}

/// `L = sg(w)·‖Δ‖^(2γ)` with `w = 1/(‖Δ‖² + c)^p`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveLossConfig {
    pub c: f64,
    pub p: f64,
    pub gamma: f64,
    pub enabled: bool,
}

impl Default for AdaptiveLossConfig {
    fn default() -> Self {
        Self {
            c: 1e-3,
            p: 1.0,
            gamma: 1.0,
            enabled: true,
        }
    }
}

impl AdaptiveLossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.c > 0.0 && self.p >= 0.0 && self.gamma > 0.0 {
            Ok(())
        } else {
            Err(Error::contract(format!(
                "adaptive loss needs c > 0, p >= 0, gamma > 0; got {self:?}"
            )))
        }
    }
}

pub const DEFAULT_LEARNING_RATE: f64 = 1e-3;
pub const REFERENCE_LEARNING_RATE: f64 = 5e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub objective: Objective,
    pub adaptive: AdaptiveLossConfig,
    pub time_sampler: TimeSamplerConfig,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(objective: Objective) -> Self {
        Self {
            objective,
            adaptive: AdaptiveLossConfig::default(),
            time_sampler: TimeSamplerConfig::default(),
            learning_rate: DEFAULT_LEARNING_RATE,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 32,
            steps: 1000,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.adaptive.validate()?;
        self.time_sampler.validate()?;
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::contract(format!("learning rate {} is invalid", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::contract("batch_size must be at least 1"));
        }
        let betas = [self.adam_beta1, self.adam_beta2];
        if betas.iter().any(|b| !(0.0..1.0).contains(b)) || !(self.adam_eps > 0.0) {
            return Err(Error::contract("Adam moments need beta in [0, 1) and eps > 0"));
        }
        Ok(())
    }
}
