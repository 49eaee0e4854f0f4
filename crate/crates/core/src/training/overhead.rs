use serde::Serialize;

use super::adam::Adam;
use super::trainer::{median_ms, train_step, StepInputs};
use super::{Objective, TrainConfig};
use crate::error::Result;
use crate::flowcore::sample_time_pair;
use crate::netmodel::ModelParams;

/// Per-step cost of one objective on a fixed model and batch.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub objective: Objective,
    pub median_ms: f64,
    pub forwards: usize,
    pub jvps: usize,
    pub steps: usize,
}

/// Times `measure` steps of `objective` after `warmup` untimed ones.
///
/// Every objective starts from a copy of `params` and sees the same batch.
/// Equal-times pairs are disabled so every composition step pays its full
/// three forwards.
pub fn bench_objective(
    objective: Objective,
    params: &ModelParams,
    batch: &StepInputs,
    base: &TrainConfig,
    warmup: usize,
    measure: usize,
) -> Result<BenchRow> {
    let mut cfg = base.clone();
    cfg.objective = objective;
    cfg.time_sampler.p_equal = 0.0;
    cfg.validate()?;
    let mut params = params.clone();
    let mut adam = Adam::new(
        params.tensors(),
        cfg.learning_rate,
        cfg.adam_beta1,
        cfg.adam_beta2,
        cfg.adam_eps,
    );
    let mut rng = crate::seeded_rng(cfg.seed, crate::stream::TIMES);
    let mut records = Vec::with_capacity(measure);
    for step in 0..warmup + measure {
        let mut inputs = batch.clone();
        if objective != Objective::Cfm {
            inputs.times = sample_time_pair(&mut rng, &cfg.time_sampler);
        }
        let record = train_step(&mut params, &mut adam, &inputs, &cfg, step)?;
        if step >= warmup {
            records.push(record);
        }
    }
    let last = records.last();
    Ok(BenchRow {
        objective,
        median_ms: median_ms(&records),
        forwards: last.map_or(0, |r| r.forwards),
        jvps: last.map_or(0, |r| r.jvps),
        steps: records.len(),
    })
}
