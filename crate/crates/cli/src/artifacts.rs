use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use avflow_core::netmodel::NetConfig;
use avflow_core::sampler::SamplerConfig;
use avflow_core::tasks::TaskSpec;
use avflow_core::training::TrainConfig;
use avflow_core::Tensor;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const CONFIG_FILE: &str = "config.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRAIN_FILE: &str = "train.bin";
pub const TEST_FILE: &str = "test.bin";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const STEPS_FILE: &str = "steps.csv";
pub const ESTIMATES_FILE: &str = "estimates.bin";
pub const EVAL_CSV_FILE: &str = "eval.csv";
pub const EVAL_JSON_FILE: &str = "eval.json";
pub const RESIDUALS_FILE: &str = "residuals.csv";
pub const BENCH_FILE: &str = "bench.csv";
pub const FIGURES_DIR: &str = "figures";

pub const ESTIMATES_MAGIC: &[u8; 8] = b"AVFLOWES";
pub const ESTIMATES_VERSION: u32 = 1;

/// Everything that determined the contents of a run directory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<TaskSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub net: Option<NetConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampler: Option<SamplerConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_seed: Option<u64>,
    pub out_dir: PathBuf,
}

impl RunConfig {
    /// Reads `dir/config.json`, or an empty config if there is none.
    pub fn load_or_default(dir: &Path) -> Result<Self> {
        let path = dir.join(CONFIG_FILE);
        if !path.exists() {
            return Ok(Self::default());
        }
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        write_file(&dir.join(CONFIG_FILE), serde_json::to_string_pretty(self)?.as_bytes())
    }
}

/// SHA-256 of every data file a command produced, keyed by file name.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub files: BTreeMap<String, String>,
}

impl Manifest {
    pub fn load_or_default(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(Self::default());
        }
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn record(&mut self, dir: &Path, name: &str) -> Result<()> {
        let bytes = fs::read(dir.join(name)).with_context(|| format!("hashing {name}"))?;
        self.files.insert(name.to_string(), sha256_hex(&bytes));
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        write_file(&dir.join(MANIFEST_FILE), serde_json::to_string_pretty(self)?.as_bytes())
    }

    /// Adds `names` to the manifest already in `dir` and writes it back.
    pub fn update(dir: &Path, names: &[&str]) -> Result<Self> {
        let mut m = Self::load_or_default(dir)?;
        for name in names {
            m.record(dir, name)?;
        }
        m.save(dir)?;
        Ok(m)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn estimates_to_bytes(estimates: &Tensor) -> Vec<u8> {
    let (rows, cols) = (estimates.rows(), estimates.cols());
    let mut out = Vec::with_capacity(20 + 8 * estimates.len());
    out.extend_from_slice(ESTIMATES_MAGIC);
    out.extend_from_slice(&ESTIMATES_VERSION.to_le_bytes());
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(cols as u32).to_le_bytes());
    for v in estimates.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn estimates_from_bytes(bytes: &[u8]) -> Result<Tensor> {
    ensure!(bytes.len() >= 20, "estimates file is truncated");
    ensure!(&bytes[..8] == ESTIMATES_MAGIC, "not an estimates file");
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
    let version = word(8) as u32;
    if version != ESTIMATES_VERSION {
        bail!("unsupported estimates version {version}");
    }
    let (rows, cols) = (word(12), word(16));
    let payload = &bytes[20..];
    ensure!(
        payload.len() == rows * cols * 8,
        "estimates header says {rows} × {cols} but payload holds {} bytes",
        payload.len()
    );
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Tensor::new(vec![rows, cols], data)?)
}

pub fn save_estimates(estimates: &Tensor, path: &Path) -> Result<()> {
    write_file(path, &estimates_to_bytes(estimates))
}

pub fn load_estimates(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    estimates_from_bytes(&bytes).with_context(|| format!("loading {}", path.display()))
}
