use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::adam::Adam;
use super::loss::weighted_batch_loss;
use super::targets::{cfm_target, composition_target, meanflow_jvp_target, Target};
use super::{Objective, TrainConfig};
use crate::error::{Error, Result};
use crate::flowcore::{interpolate, sample_time_pair, TimePair};
use crate::netmodel::{init, ModelParams, NetConfig};
use crate::numkit::{grad, Kernel, Tensor};
use crate::tasks::Dataset;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub raw_loss: f64,
    pub weighted_loss: f64,
    pub forwards: usize,
    pub jvps: usize,
    pub ms: f64,
    pub t1: f64,
    pub t2: f64,
    pub alpha: f64,
}

pub const STEPS_CSV_HEADER: &str = "step,raw_loss,weighted_loss,forwards,jvps,ms";

pub fn steps_csv(records: &[StepRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(STEPS_CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:.3}",
            r.step, r.raw_loss, r.weighted_loss, r.forwards, r.jvps, r.ms
        );
    }
    out
}

/// Median wall-clock per step, in milliseconds.
pub fn median_ms(records: &[StepRecord]) -> f64 {
    if records.is_empty() {
        return f64::NAN;
    }
    let mut ms: Vec<f64> = records.iter().map(|r| r.ms).collect();
    ms.sort_by(f64::total_cmp);
    let n = ms.len();
    if n % 2 == 1 {
        ms[n / 2]
    } else {
        0.5 * (ms[n / 2 - 1] + ms[n / 2])
    }
}

/// The time pair of one step. CFM draws `t ~ U(0, 1)` and sets `t2 = t1`.
fn draw_time_pair<R: Rng + ?Sized>(rng: &mut R, cfg: &TrainConfig) -> TimePair {
    match cfg.objective {
        Objective::Cfm => TimePair::equal(rng.random::<f64>()).expect("unit interval"),
        _ => sample_time_pair(rng, &cfg.time_sampler),
    }
}

/// The time pairs of the first `steps` steps of a run with this config.
pub fn replay_time_pairs(cfg: &TrainConfig, steps: usize) -> Vec<TimePair> {
    let mut rng = crate::seeded_rng(cfg.seed, crate::stream::TIMES);
    (0..steps).map(|_| draw_time_pair(&mut rng, cfg)).collect()
}

/// Everything random about one step, drawn up front.
#[derive(Clone, Debug)]
pub struct StepInputs {
    /// Clean batch `[B, D]`.
    pub clean: Tensor,
    /// Conditioning batch `[B, D]`.
    pub noisy: Tensor,
    /// Prior sample `[B, D]`.
    pub prior: Tensor,
    pub times: TimePair,
}

/// Loss, gradient and network work of one step, before the optimizer runs.
#[derive(Clone, Debug)]
pub struct StepGradient {
    pub weighted_loss: f64,
    pub raw_loss: f64,
    pub grads: Vec<Tensor>,
    pub forwards: usize,
    pub jvps: usize,
}

/// The regression target of one step, with `x_t1` the interpolant it is fitted at.
pub fn step_target(params: &ModelParams, inputs: &StepInputs, objective: Objective) -> Result<(Tensor, Target)> {
    let StepInputs {
        clean,
        noisy,
        prior,
        times,
    } = inputs;
    if clean.shape() != noisy.shape() || clean.shape() != prior.shape() {
        return Err(Error::shape("step batch tensors disagree in shape"));
    }
    if clean.rank() != 2 || clean.rows() == 0 {
        return Err(Error::contract("step batch must be a non-empty [B, D] matrix"));
    }
    let (t1, t2) = (times.t1(), times.t2());
    let x_t1 = interpolate(clean, prior, t1)?.value;
    let target = match objective {
        Objective::MeanflowJvp => meanflow_jvp_target(params, &x_t1, t1, t2, noisy, clean, prior)?,
        Objective::Composition if !times.is_equal() => composition_target(params, &x_t1, times, noisy)?,
        _ => Target {
            value: cfm_target(clean, prior)?,
            forwards: 0,
            jvps: 0,
        },
    };
    Ok((x_t1, target))
}

/// Builds the detached target of `cfg.objective` and differentiates the
/// adaptive loss of the prediction against it.
pub fn step_gradient(params: &ModelParams, inputs: &StepInputs, cfg: &TrainConfig) -> Result<StepGradient> {
    let (x_t1, target) = step_target(params, inputs, cfg.objective)?;
    let (t1, t2) = (inputs.times.t1(), inputs.times.t2());
    let noisy = &inputs.noisy;
    let b = x_t1.rows();
    let mut raw_loss = f64::NAN;
    let (weighted_loss, grads) = grad(params.tensors(), |tape, w| {
        let x = tape.constant(x_t1.clone());
        let y = tape.constant(noisy.clone());
        let t1v = tape.constant(Tensor::full(&[b, 1], t1));
        let t2v = tape.constant(Tensor::full(&[b, 1], t2));
        let pred = params.forward_with(tape, w, &x, &t1v, &t2v, &y);
        let (loss, raw) = weighted_batch_loss(tape, &pred, &target.value, &cfg.adaptive);
        raw_loss = raw;
        Ok(loss)
    })?;
    Ok(StepGradient {
        weighted_loss,
        raw_loss,
        grads,
        forwards: 1 + target.forwards,
        jvps: target.jvps,
    })
}

/// One Adam step of `cfg.objective` on a prepared batch.
pub fn train_step(
    params: &mut ModelParams,
    adam: &mut Adam,
    inputs: &StepInputs,
    cfg: &TrainConfig,
    step: usize,
) -> Result<StepRecord> {
    let start = Instant::now();
    let g = step_gradient(params, inputs, cfg)?;
    if !g.weighted_loss.is_finite() || !g.raw_loss.is_finite() || g.grads.iter().any(|t| !t.is_finite()) {
        return Err(Error::TrainingDiverged { step });
    }
    adam.update(params.tensors_mut(), &g.grads);
    Ok(StepRecord {
        step,
        raw_loss: g.raw_loss,
        weighted_loss: g.weighted_loss,
        forwards: g.forwards,
        jvps: g.jvps,
        ms: start.elapsed().as_secs_f64() * 1e3,
        t1: inputs.times.t1(),
        t2: inputs.times.t2(),
        alpha: inputs.times.alpha(),
    })
}

/// Owns the parameters, optimizer state and random streams of one run.
pub struct Trainer<'a> {
    cfg: TrainConfig,
    params: ModelParams,
    adam: Adam,
    data: &'a Dataset,
    order: Vec<usize>,
    cursor: usize,
    step: usize,
    shuffle_rng: crate::Rng,
    time_rng: crate::Rng,
    noise_rng: crate::Rng,
}

impl<'a> Trainer<'a> {
    pub fn new(cfg: TrainConfig, net: NetConfig, data: &'a Dataset) -> Result<Self> {
        let params = init(net, cfg.seed)?;
        Self::with_params(cfg, params, data)
    }

    pub fn with_params(cfg: TrainConfig, params: ModelParams, data: &'a Dataset) -> Result<Self> {
        cfg.validate()?;
        if data.is_empty() {
            return Err(Error::contract("training dataset is empty"));
        }
        if data.signal_dim != params.config().signal_dim {
            return Err(Error::shape(format!(
                "dataset width {} vs network width {}",
                data.signal_dim,
                params.config().signal_dim
            )));
        }
        let adam = Adam::new(
            params.tensors(),
            cfg.learning_rate,
            cfg.adam_beta1,
            cfg.adam_beta2,
            cfg.adam_eps,
        );
        let seed = cfg.seed;
        Ok(Self {
            cfg,
            params,
            adam,
            data,
            order: (0..data.len()).collect(),
            cursor: data.len(),
            step: 0,
            shuffle_rng: crate::seeded_rng(seed, crate::stream::SHUFFLE),
            time_rng: crate::seeded_rng(seed, crate::stream::TIMES),
            noise_rng: crate::seeded_rng(seed, crate::stream::NOISE),
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn into_params(self) -> ModelParams {
        self.params
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    fn next_indices(&mut self) -> Vec<usize> {
        let mut idx = Vec::with_capacity(self.cfg.batch_size);
        while idx.len() < self.cfg.batch_size {
            if self.cursor == self.order.len() {
                self.order.shuffle(&mut self.shuffle_rng);
                self.cursor = 0;
            }
            idx.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        idx
    }

    /// Draws the next minibatch, prior sample and time pair.
    pub fn next_inputs(&mut self) -> StepInputs {
        let idx = self.next_indices();
        let clean = self.data.batch(&idx, |p| &p.clean);
        let noisy = self.data.batch(&idx, |p| &p.noisy);
        let prior: Vec<f64> = (0..clean.len())
            .map(|_| self.noise_rng.sample(StandardNormal))
            .collect();
        let prior = Tensor::new(clean.shape().to_vec(), prior).expect("same shape as batch");
        let times = draw_time_pair(&mut self.time_rng, &self.cfg);
        StepInputs {
            clean,
            noisy,
            prior,
            times,
        }
    }

    pub fn step(&mut self) -> Result<StepRecord> {
        let inputs = self.next_inputs();
        let record = train_step(&mut self.params, &mut self.adam, &inputs, &self.cfg, self.step)?;
        self.step += 1;
        Ok(record)
    }
}

/// Runs `cfg.steps` steps from a fresh initialization.
pub fn train(cfg: &TrainConfig, net: NetConfig, data: &Dataset) -> Result<(ModelParams, Vec<StepRecord>)> {
    let mut trainer = Trainer::new(cfg.clone(), net, data)?;
    let records = (0..cfg.steps)
        .map(|_| trainer.step())
        .collect::<Result<Vec<_>>>()?;
    Ok((trainer.into_params(), records))
}
