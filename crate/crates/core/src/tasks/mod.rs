//! Synthetic conditional-denoising tasks: `noisy = clean + noise` at an exact SNR.

mod dataset;

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use dataset::{dataset_from_bytes, dataset_to_bytes, load_dataset, save_dataset, Dataset, DATASET_MAGIC, DATASET_VERSION};

use crate::error::{Error, Result};
use crate::numkit::Tensor;

/// One clean/noise/mixture triple.
#[derive(Clone, Debug, PartialEq)]
pub struct SignalPair {
    pub clean: Tensor,
    pub noise: Tensor,
    pub noisy: Tensor,
    pub snr_db: f64,
}

impl SignalPair {
    /// Builds the mixture `clean + noise`.
    pub fn new(clean: Tensor, noise: Tensor, snr_db: f64) -> Result<Self> {
        if clean.shape() != noise.shape() {
            return Err(Error::shape(format!(
                "clean {:?} vs noise {:?}",
                clean.shape(),
                noise.shape()
            )));
        }
        let noisy = clean.add(&noise);
        Ok(Self {
            clean,
            noise,
            noisy,
            snr_db,
        })
    }

    /// `10·log10(‖clean‖² / ‖noise‖²)`
    pub fn empirical_snr_db(&self) -> f64 {
        10.0 * (self.clean.norm_sq() / self.noise.norm_sq()).log10()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Points2d,
    Specgrid,
}

impl TaskKind {
    pub fn code(self) -> u8 {
        match self {
            TaskKind::Points2d => 0,
            TaskKind::Specgrid => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(TaskKind::Points2d),
            1 => Some(TaskKind::Specgrid),
            _ => None,
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::Points2d => "points2d",
            TaskKind::Specgrid => "specgrid",
        })
    }
}

impl FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "points2d" => Ok(TaskKind::Points2d),
            "specgrid" => Ok(TaskKind::Specgrid),
            other => Err(format!("unknown task kind `{other}` (expected points2d or specgrid)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    /// Rows of the spectrogram grid.
    pub freq_bins: usize,
    /// Columns of the spectrogram grid.
    pub frames: usize,
    /// Infinite means noise-free.
    pub snr_db: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    /// Inclusive range of harmonic tracks per grid.
    pub tracks: (usize, usize),
    pub amplitude: (f64, f64),
    pub flat_envelope: bool,
}

pub const POINTS_RADIUS: f64 = 2.0;
pub const POINTS_MODES: usize = 8;
pub const POINTS_STD: f64 = 0.1;

impl TaskSpec {
    pub fn new(kind: TaskKind, seed: u64) -> Self {
        Self {
            kind,
            freq_bins: 16,
            frames: 16,
            snr_db: 5.0,
            n_train: 4096,
            n_test: 256,
            seed,
            tracks: (1, 3),
            amplitude: (0.5, 1.0),
            flat_envelope: false,
        }
    }

    pub fn signal_dim(&self) -> usize {
        match self.kind {
            TaskKind::Points2d => 2,
            TaskKind::Specgrid => self.freq_bins * self.frames,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.n_test == 0 {
            return Err(Error::contract("n_train and n_test must be at least 1"));
        }
        if self.signal_dim() == 0 {
            return Err(Error::contract("signal dimension must be at least 1"));
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(Error::contract(format!("snr_db {} is not usable", self.snr_db)));
        }
        if self.kind == TaskKind::Specgrid {
            let (lo, hi) = self.tracks;
            if lo == 0 || lo > hi || hi > self.freq_bins {
                return Err(Error::contract(format!(
                    "track range {lo}..={hi} invalid for {} rows",
                    self.freq_bins
                )));
            }
            let (a, b) = self.amplitude;
            if !(a > 0.0 && a <= b && b.is_finite()) {
                return Err(Error::contract(format!("amplitude range [{a}, {b}] invalid")));
            }
        }
        Ok(())
    }

    fn sample_rng(&self, index: usize) -> crate::Rng {
        crate::seeded_rng(self.seed, (crate::stream::DATA << 32) + index as u64)
    }
}

/// Scales white noise so that the pair hits `snr_db` exactly.
fn mix<R: Rng + ?Sized>(rng: &mut R, clean: Tensor, snr_db: f64) -> Result<SignalPair> {
    let white: Vec<f64> = (0..clean.len()).map(|_| rng.sample(StandardNormal)).collect();
    let white = Tensor::new(clean.shape().to_vec(), white)?;
    let gain = if snr_db == f64::INFINITY {
        0.0
    } else {
        (clean.norm_sq() / (white.norm_sq() * 10f64.powf(snr_db / 10.0))).sqrt()
    };
    SignalPair::new(clean, white.scale(gain), snr_db)
}

fn points2d_clean<R: Rng + ?Sized>(rng: &mut R) -> Tensor {
    let mode = rng.random_range(0..POINTS_MODES);
    let angle = TAU * mode as f64 / POINTS_MODES as f64;
    let dx: f64 = rng.sample(StandardNormal);
    let dy: f64 = rng.sample(StandardNormal);
    Tensor::from_vec(vec![
        POINTS_RADIUS * angle.cos() + POINTS_STD * dx,
        POINTS_RADIUS * angle.sin() + POINTS_STD * dy,
    ])
}

fn specgrid_clean<R: Rng + ?Sized>(rng: &mut R, spec: &TaskSpec) -> Tensor {
    let (rows, cols) = (spec.freq_bins, spec.frames);
    let mut grid = vec![0.0; rows * cols];
    let count = rng.random_range(spec.tracks.0..=spec.tracks.1);
    for row in index::sample(rng, rows, count).into_iter() {
        let (lo, hi) = spec.amplitude;
        let amp = if lo == hi { lo } else { rng.random_range(lo..=hi) };
        let phase = rng.random_range(0.0..TAU);
        for j in 0..cols {
            let env = if spec.flat_envelope {
                1.0
            } else {
                0.6 + 0.4 * (TAU * j as f64 / cols as f64 + phase).sin()
            };
            grid[row * cols + j] += amp * env;
        }
    }
    Tensor::from_vec(grid)
}

/// `n_train + n_test` pairs of the 8-mode circle mixture.
pub fn gen_points2d(spec: &TaskSpec) -> Result<Vec<SignalPair>> {
    if spec.kind != TaskKind::Points2d {
        return Err(Error::contract("gen_points2d needs kind points2d"));
    }
    spec.validate()?;
    (0..spec.n_train + spec.n_test)
        .map(|i| {
            let mut rng = spec.sample_rng(i);
            let clean = points2d_clean(&mut rng);
            mix(&mut rng, clean, spec.snr_db)
        })
        .collect()
}

/// `n_train + n_test` flattened `freq_bins × frames` grids of horizontal tracks.
pub fn gen_specgrid(spec: &TaskSpec) -> Result<Vec<SignalPair>> {
    if spec.kind != TaskKind::Specgrid {
        return Err(Error::contract("gen_specgrid needs kind specgrid"));
    }
    spec.validate()?;
    (0..spec.n_train + spec.n_test)
        .map(|i| {
            let mut rng = spec.sample_rng(i);
            let clean = specgrid_clean(&mut rng, spec);
            mix(&mut rng, clean, spec.snr_db)
        })
        .collect()
}

/// Generates the task and splits it into `(train, test)`.
pub fn generate(spec: &TaskSpec) -> Result<(Dataset, Dataset)> {
    let mut pairs = match spec.kind {
        TaskKind::Points2d => gen_points2d(spec)?,
        TaskKind::Specgrid => gen_specgrid(spec)?,
    };
    let test = pairs.split_off(spec.n_train);
    let wrap = |pairs| Dataset {
        kind: spec.kind,
        signal_dim: spec.signal_dim(),
        snr_db: spec.snr_db,
        pairs,
    };
    Ok((wrap(pairs), wrap(test)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_are_seeded_and_exact() {
        let mut spec = TaskSpec::new(TaskKind::Points2d, 3);
        spec.n_train = 50;
        spec.n_test = 5;
        let a = gen_points2d(&spec).unwrap();
        assert_eq!(a, gen_points2d(&spec).unwrap());
        for p in &a {
            assert_eq!(p.noisy, p.clean.add(&p.noise));
            assert!((p.empirical_snr_db() - 5.0).abs() < 1e-9);
            let r = p.clean.norm();
            assert!((r - POINTS_RADIUS).abs() < 1.0);
        }
    }

    #[test]
    fn infinite_snr_is_noise_free() {
        let mut spec = TaskSpec::new(TaskKind::Points2d, 0);
        spec.snr_db = f64::INFINITY;
        spec.n_train = 10;
        for p in gen_points2d(&spec).unwrap() {
            assert_eq!(p.noisy, p.clean);
        }
    }

    #[test]
    fn single_flat_track() {
        let mut spec = TaskSpec::new(TaskKind::Specgrid, 1);
        spec.tracks = (1, 1);
        spec.amplitude = (1.0, 1.0);
        spec.flat_envelope = true;
        spec.n_train = 20;
        for p in gen_specgrid(&spec).unwrap() {
            let nz: Vec<f64> = p.clean.data().iter().copied().filter(|&v| v != 0.0).collect();
            assert_eq!(nz.len(), spec.frames);
            assert!(nz.iter().all(|&v| v == 1.0));
        }
    }

    #[test]
    fn kind_mismatch_is_rejected() {
        let spec = TaskSpec::new(TaskKind::Specgrid, 0);
        assert!(gen_points2d(&spec).is_err());
    }

    #[test]
    fn split_respects_counts() {
        let mut spec = TaskSpec::new(TaskKind::Specgrid, 4);
        spec.n_train = 7;
        spec.n_test = 3;
        let (train, test) = generate(&spec).unwrap();
        assert_eq!(train.pairs.len(), 7);
        assert_eq!(test.pairs.len(), 3);
        assert_eq!(train.signal_dim, 256);
    }
}
