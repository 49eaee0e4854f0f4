use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{ensure, Context, Result};
use avflow_core::evalkit::evaluate;
use avflow_core::flowcore::{identity_sweep, SweepConfig};
use avflow_core::netmodel::{self, init, NetConfig};
use avflow_core::sampler::{sample, SamplerConfig, SamplerMode};
use avflow_core::tasks::{generate, load_dataset, save_dataset, Dataset, TaskKind, TaskSpec};
use avflow_core::training::{
    bench_objective, steps_csv, train, Objective, StepInputs, TrainConfig, REFERENCE_LEARNING_RATE,
};
use avflow_core::flowcore::TimePair;
use avflow_core::{seeded_rng, Tensor};
use clap::{Args, Parser, Subcommand};
use rand_distr::{Distribution, StandardNormal};

use crate::artifacts::*;
use crate::svg;

/// Stream for prior draws made outside training.
const SAMPLE_STREAM: u64 = 16;

#[derive(Debug, Parser)]
#[command(name = "avflow", version, about = "Average-velocity flow matching on synthetic denoising tasks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate train/test datasets.
    GenData(GenDataArgs),
    /// Train a model and write its checkpoint and step log.
    Train(TrainArgs),
    /// Draw estimates for the test set from a checkpoint.
    Sample(SampleArgs),
    /// Score estimates and draw figures.
    Eval(EvalArgs),
    /// Check the flow identities on the analytic fields.
    Verify(VerifyArgs),
    /// Time one training step of every objective.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub kind: TaskKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 5.0)]
    pub snr_db: f64,
    #[arg(long, default_value_t = 4096)]
    pub n_train: usize,
    #[arg(long, default_value_t = 256)]
    pub n_test: usize,
    #[arg(long, default_value_t = 16)]
    pub freq_bins: usize,
    #[arg(long, default_value_t = 16)]
    pub frames: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct NetArgs {
    #[arg(long, default_value_t = 256)]
    pub hidden_width: usize,
    #[arg(long, default_value_t = 3)]
    pub hidden_layers: usize,
    #[arg(long, default_value_t = 16)]
    pub n_frequencies: usize,
}

impl NetArgs {
    fn config(&self, signal_dim: usize) -> NetConfig {
        NetConfig {
            signal_dim,
            hidden_width: self.hidden_width,
            hidden_layers: self.hidden_layers,
            n_frequencies: self.n_frequencies,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory written by `gen-data`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub objective: Objective,
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3, conflicts_with = "paper_lr")]
    pub lr: f64,
    /// Use the reference learning rate of 5e-5.
    #[arg(long)]
    pub paper_lr: bool,
    /// Plain squared error instead of the adaptive weighting.
    #[arg(long)]
    pub no_adaptive: bool,
    #[arg(long)]
    pub adaptive_p: Option<f64>,
    #[arg(long)]
    pub adaptive_gamma: Option<f64>,
    /// Probability of training on `t2 = t1`.
    #[arg(long)]
    pub p_equal: Option<f64>,
    /// Mean of the logit-normal time law.
    #[arg(long, allow_negative_numbers = true)]
    pub logit_mean: Option<f64>,
    #[arg(long)]
    pub logit_std: Option<f64>,
    #[command(flatten)]
    pub net: NetArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Run directory holding `checkpoint.bin`.
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub nfe: u32,
    #[arg(long, default_value = "avg")]
    pub mode: SamplerMode,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Defaults to the run directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Directory holding `estimates.bin`; reports are written here too.
    #[arg(long)]
    pub run: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 1e-4)]
    pub fd_step: f64,
    /// RK4 steps per oracle integration.
    #[arg(long, default_value_t = 2048)]
    pub steps: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub warmup: usize,
    #[arg(long, default_value_t = 20)]
    pub measure: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[command(flatten)]
    pub net: NetArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train_cmd(a),
        Command::Sample(a) => sample_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Verify(a) => verify(a),
        Command::Bench(a) => bench(a),
    }
}

fn gen_data(a: GenDataArgs) -> Result<ExitCode> {
    let spec = TaskSpec {
        snr_db: a.snr_db,
        n_train: a.n_train,
        n_test: a.n_test,
        freq_bins: a.freq_bins,
        frames: a.frames,
        ..TaskSpec::new(a.kind, a.seed)
    };
    let (train_set, test_set) = generate(&spec)?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    save_dataset(&train_set, &a.out.join(TRAIN_FILE))?;
    save_dataset(&test_set, &a.out.join(TEST_FILE))?;
    RunConfig {
        task: Some(spec),
        out_dir: a.out.clone(),
        ..Default::default()
    }
    .save(&a.out)?;
    Manifest::update(&a.out, &[TRAIN_FILE, TEST_FILE])?;
    println!(
        "wrote {} train and {} test {} pairs to {}",
        train_set.len(),
        test_set.len(),
        a.kind,
        a.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn train_cmd(a: TrainArgs) -> Result<ExitCode> {
    let data = load_dataset(&a.data.join(TRAIN_FILE))?;
    let task = RunConfig::load_or_default(&a.data)?.task;
    let mut cfg = TrainConfig::new(a.objective);
    cfg.steps = a.steps;
    cfg.seed = a.seed;
    cfg.batch_size = a.batch_size;
    cfg.learning_rate = if a.paper_lr { REFERENCE_LEARNING_RATE } else { a.lr };
    cfg.adaptive.enabled = !a.no_adaptive;
    if let Some(p) = a.adaptive_p {
        cfg.adaptive.p = p;
    }
    if let Some(g) = a.adaptive_gamma {
        cfg.adaptive.gamma = g;
    }
    if let Some(p) = a.p_equal {
        cfg.time_sampler.p_equal = p;
    }
    if let Some(m) = a.logit_mean {
        cfg.time_sampler.logit_mean = m;
    }
    if let Some(s) = a.logit_std {
        cfg.time_sampler.logit_std = s;
    }
    cfg.validate()?;
    let net = a.net.config(data.signal_dim);
    net.validate()?;

    let (params, log) = train(&cfg, net, &data)?;
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    netmodel::save(&params, &a.out.join(CHECKPOINT_FILE))?;
    write_file(&a.out.join(STEPS_FILE), steps_csv(&log).as_bytes())?;
    RunConfig {
        task,
        net: Some(net),
        train: Some(cfg),
        out_dir: a.out.clone(),
        ..Default::default()
    }
    .save(&a.out)?;
    Manifest::update(&a.out, &[CHECKPOINT_FILE])?;
    let tail = &log[log.len().saturating_sub(100)..];
    if !tail.is_empty() {
        let mean = tail.iter().map(|r| r.raw_loss).sum::<f64>() / tail.len() as f64;
        println!("{} steps of {}; final raw loss {mean:.4}", log.len(), a.objective);
    }
    Ok(ExitCode::SUCCESS)
}

/// Standard-normal priors for `rows` test signals.
pub fn draw_prior(seed: u64, rows: usize, cols: usize) -> Tensor {
    let mut rng = seeded_rng(seed, SAMPLE_STREAM);
    let data = (0..rows * cols).map(|_| StandardNormal.sample(&mut rng)).collect();
    Tensor::new(vec![rows, cols], data).expect("prior shape")
}

fn sample_cmd(a: SampleArgs) -> Result<ExitCode> {
    let params = netmodel::load(&a.run.join(CHECKPOINT_FILE))?;
    let test = load_dataset(&a.data.join(TEST_FILE))?;
    ensure!(
        test.signal_dim == params.config().signal_dim,
        "test signals have width {} but the model expects {}",
        test.signal_dim,
        params.config().signal_dim
    );
    let cfg = SamplerConfig::new(a.nfe as usize, a.mode)?;
    let x1 = draw_prior(a.seed, test.len(), test.signal_dim);
    let estimates = sample(&params, &x1, &test.noisy_batch(), &cfg)?;
    let out = a.out.unwrap_or_else(|| a.run.clone());
    save_estimates(&estimates, &out.join(ESTIMATES_FILE))?;
    let mut config = RunConfig::load_or_default(&a.run)?;
    config.sampler = Some(cfg);
    config.sample_seed = Some(a.seed);
    config.out_dir = out.clone();
    config.save(&out)?;
    Manifest::update(&out, &[ESTIMATES_FILE])?;
    println!("wrote {} estimates ({} × {}) to {}", test.len(), a.mode, a.nfe, out.display());
    Ok(ExitCode::SUCCESS)
}

fn grid_shape(task: Option<&TaskSpec>, dim: usize) -> (usize, usize) {
    match task {
        Some(t) if t.freq_bins * t.frames == dim => (t.freq_bins, t.frames),
        _ => {
            let side = (dim as f64).sqrt().round() as usize;
            if side * side == dim {
                (side, side)
            } else {
                (1, dim)
            }
        }
    }
}

fn figures(dir: &Path, test: &Dataset, estimates: &Tensor, task: Option<&TaskSpec>) -> Result<()> {
    let dir = dir.join(FIGURES_DIR);
    match test.kind {
        TaskKind::Points2d => {
            let clean = test.clean_batch();
            let noisy = test.noisy_batch();
            let sets = [("clean", "#4d4d4d", &clean), ("noisy", "#e69f00", &noisy), ("estimate", "#0072b2", estimates)];
            write_file(&dir.join("scatter.svg"), svg::scatter("points2d estimates", &sets).as_bytes())
        }
        TaskKind::Specgrid => {
            let (rows, cols) = grid_shape(task, test.signal_dim);
            let first = &test.pairs[0];
            let est = estimates.row(0);
            let panels = [
                ("clean", first.clean.data()),
                ("noisy", first.noisy.data()),
                ("estimate", est.data()),
            ];
            write_file(
                &dir.join("triptych.svg"),
                svg::heatmaps("specgrid sample 0", rows, cols, &panels).as_bytes(),
            )
        }
    }
}

fn eval_cmd(a: EvalArgs) -> Result<ExitCode> {
    let test = load_dataset(&a.data.join(TEST_FILE))?;
    let estimates = load_estimates(&a.run.join(ESTIMATES_FILE))?;
    let report = evaluate(&test, &estimates)?;
    write_file(&a.run.join(EVAL_CSV_FILE), report.to_csv().as_bytes())?;
    write_file(&a.run.join(EVAL_JSON_FILE), report.to_json().as_bytes())?;
    let task = RunConfig::load_or_default(&a.data)?.task;
    figures(&a.run, &test, &estimates, task.as_ref())?;
    Manifest::update(&a.run, &[EVAL_CSV_FILE, EVAL_JSON_FILE])?;
    let s = &report.summary;
    println!(
        "si_sdr {:.3} ± {:.3} dB, si_sir {:.3} dB, si_sar {:.3} dB, mse {:.5}",
        s.si_sdr.mean, s.si_sdr.std, s.si_sir.mean, s.si_sar.mean, s.mse.mean
    );
    if let Some(e) = report.energy_distance {
        println!("energy distance {e:.5}");
    }
    Ok(ExitCode::SUCCESS)
}

pub const RESIDUALS_HEADER: &str = "field,identity,t1,m,t2,residual,tolerance,passed";

fn verify(a: VerifyArgs) -> Result<ExitCode> {
    ensure!(a.fd_step > 0.0 && a.fd_step < 0.1, "--fd-step must lie in (0, 0.1)");
    ensure!(a.steps > 0, "--steps must be positive");
    let rows = identity_sweep(&SweepConfig::standard(a.fd_step, a.steps))?;
    let mut csv = format!("{RESIDUALS_HEADER}\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{:e},{:e},{}\n",
            r.field,
            r.identity.as_str(),
            r.t1,
            r.m,
            r.t2,
            r.residual,
            r.tolerance,
            r.passed()
        ));
    }
    if let Some(out) = &a.out {
        write_file(&out.join(RESIDUALS_FILE), csv.as_bytes())?;
    }
    for kind in ["additivity", "composition", "meanflow"] {
        let worst = rows
            .iter()
            .filter(|r| r.identity.as_str() == kind)
            .map(|r| r.residual)
            .fold(0.0f64, f64::max);
        println!("max {kind} residual {worst:.3e}");
    }
    let failures: Vec<_> = rows.iter().filter(|r| !r.passed()).collect();
    if failures.is_empty() {
        println!("all {} residuals within tolerance", rows.len());
        return Ok(ExitCode::SUCCESS);
    }
    for r in &failures {
        eprintln!(
            "FAILED {} {} at (t1={}, m={}, t2={}): residual {:e} > {:e}",
            r.field,
            r.identity.as_str(),
            r.t1,
            r.m,
            r.t2,
            r.residual,
            r.tolerance
        );
    }
    Ok(ExitCode::from(3))
}

pub const BENCH_HEADER: &str = "objective,median_ms,forwards,jvps,steps";

fn bench(a: BenchArgs) -> Result<ExitCode> {
    let data = load_dataset(&a.data.join(TRAIN_FILE))?;
    ensure!(a.measure > 0, "--measure must be positive");
    ensure!(a.batch_size > 0 && a.batch_size <= data.len(), "--batch-size must lie in 1..={}", data.len());
    let net = a.net.config(data.signal_dim);
    let params = init(net, a.seed)?;
    let idx: Vec<usize> = (0..a.batch_size).collect();
    let batch = StepInputs {
        clean: data.batch(&idx, |p| &p.clean),
        noisy: data.batch(&idx, |p| &p.noisy),
        prior: draw_prior(a.seed, a.batch_size, data.signal_dim),
        times: TimePair::equal(0.5)?,
    };
    let mut base = TrainConfig::new(Objective::Cfm);
    base.seed = a.seed;
    base.batch_size = a.batch_size;
    let mut csv = format!("{BENCH_HEADER}\n");
    let mut rows = Vec::new();
    for objective in Objective::ALL {
        let row = bench_objective(objective, &params, &batch, &base, a.warmup, a.measure)?;
        csv.push_str(&format!(
            "{},{:.4},{},{},{}\n",
            row.objective, row.median_ms, row.forwards, row.jvps, row.steps
        ));
        rows.push(row);
    }
    print!("{csv}");
    let ms = |o: Objective| rows.iter().find(|r| r.objective == o).map(|r| r.median_ms).unwrap();
    let ratio = ms(Objective::Composition) / ms(Objective::MeanflowJvp);
    println!("composition:meanflow-jvp time ratio {ratio:.3}");
    if let Some(out) = &a.out {
        write_file(&out.join(BENCH_FILE), csv.as_bytes())?;
    }
    Ok(ExitCode::SUCCESS)
}
