use std::fs;
use std::path::Path;

use super::{SignalPair, TaskKind};
use crate::codec::Reader;
use crate::error::{Error, Result};
use crate::numkit::Tensor;

pub const DATASET_MAGIC: &[u8; 8] = b"AVFLOWDS";
pub const DATASET_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub kind: TaskKind,
    pub signal_dim: usize,
    pub snr_db: f64,
    pub pairs: Vec<SignalPair>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Stacks one field of the selected pairs into a `[B, D]` batch.
    pub fn batch(&self, indices: &[usize], field: impl Fn(&SignalPair) -> &Tensor) -> Tensor {
        let mut data = Vec::with_capacity(indices.len() * self.signal_dim);
        for &i in indices {
            data.extend_from_slice(field(&self.pairs[i]).data());
        }
        Tensor::new(vec![indices.len(), self.signal_dim], data).expect("rows share signal_dim")
    }

    pub fn clean_batch(&self) -> Tensor {
        let all: Vec<usize> = (0..self.len()).collect();
        self.batch(&all, |p| &p.clean)
    }

    pub fn noisy_batch(&self) -> Tensor {
        let all: Vec<usize> = (0..self.len()).collect();
        self.batch(&all, |p| &p.noisy)
    }
}

pub fn dataset_to_bytes(ds: &Dataset) -> Result<Vec<u8>> {
    let count = u32::try_from(ds.len()).map_err(|_| Error::contract("too many pairs"))?;
    let mut out = Vec::with_capacity(29 + 16 * ds.len() * ds.signal_dim);
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    out.push(ds.kind.code());
    out.extend_from_slice(&(ds.signal_dim as u32).to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    out.extend_from_slice(&ds.snr_db.to_le_bytes());
    for p in &ds.pairs {
        if p.clean.len() != ds.signal_dim || p.noise.len() != ds.signal_dim {
            return Err(Error::shape(format!(
                "pair of width {} in a dataset of width {}",
                p.clean.len(),
                ds.signal_dim
            )));
        }
        for v in p.clean.data().iter().chain(p.noise.data()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn dataset_from_bytes(bytes: &[u8]) -> Result<Dataset, String> {
    let mut r = Reader::new(bytes);
    if r.take(8)? != DATASET_MAGIC {
        return Err("bad magic, not a dataset".into());
    }
    let version = r.u32()?;
    if version != DATASET_VERSION {
        return Err(format!("unsupported dataset version {version}"));
    }
    let code = r.u8()?;
    let kind = TaskKind::from_code(code).ok_or(format!("unknown task kind code {code}"))?;
    let signal_dim = r.u32()? as usize;
    let count = r.u32()? as usize;
    let snr_db = r.f64()?;
    if signal_dim == 0 {
        return Err("signal_dim is zero".into());
    }
    let expected = count
        .checked_mul(16)
        .and_then(|n| n.checked_mul(signal_dim))
        .ok_or("header sizes overflow")?;
    if r.remaining() != expected {
        return Err(format!(
            "header declares {count} pairs of width {signal_dim} ({expected} bytes), payload has {}",
            r.remaining()
        ));
    }
    let mut pairs = Vec::with_capacity(count);
    for _ in 0..count {
        let clean = Tensor::from_vec(r.f64s(signal_dim)?);
        let noise = Tensor::from_vec(r.f64s(signal_dim)?);
        pairs.push(SignalPair::new(clean, noise, snr_db).map_err(|e| e.to_string())?);
    }
    r.finish()?;
    Ok(Dataset {
        kind,
        signal_dim,
        snr_db,
        pairs,
    })
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    fs::write(path, dataset_to_bytes(ds)?).map_err(|e| Error::io(path, e))
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    dataset_from_bytes(&bytes).map_err(|reason| Error::format(path, reason))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tasks::{generate, TaskSpec};

    fn small() -> Dataset {
        let mut spec = TaskSpec::new(TaskKind::Specgrid, 2);
        spec.freq_bins = 4;
        spec.frames = 3;
        spec.n_train = 6;
        spec.n_test = 1;
        generate(&spec).unwrap().0
    }

    #[test]
    fn roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.bin");
        let ds = small();
        save_dataset(&ds, &path).unwrap();
        assert_eq!(load_dataset(&path).unwrap(), ds);
    }

    #[test]
    fn count_mismatch_is_rejected() {
        let mut bytes = dataset_to_bytes(&small()).unwrap();
        bytes[17..21].copy_from_slice(&7u32.to_le_bytes());
        let err = dataset_from_bytes(&bytes).unwrap_err();
        assert!(err.contains("declares 7 pairs"), "{err}");
    }

    #[test]
    fn truncation_and_magic() {
        let bytes = dataset_to_bytes(&small()).unwrap();
        assert!(dataset_from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[7] = b'!';
        assert!(dataset_from_bytes(&bad).unwrap_err().contains("magic"));
    }
}
