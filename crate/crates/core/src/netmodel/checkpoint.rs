//! Binary checkpoint: magic, version, config, then every tensor as
//! `(rank u32, dims u32..., f64 payload)`, little-endian throughout.

use std::fs;
use std::path::Path;

use super::{ModelParams, NetConfig};
use crate::codec::Reader;
use crate::error::{Error, Result};
use crate::numkit::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"AVFLOWCK";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn to_bytes(params: &ModelParams) -> Vec<u8> {
    let cfg = params.config();
    let mut out = Vec::with_capacity(64 + 8 * cfg.param_count());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for v in [cfg.signal_dim, cfg.hidden_width, cfg.hidden_layers, cfg.n_frequencies] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for t in std::iter::once(params.frequencies()).chain(params.tensors()) {
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn save(params: &ModelParams, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(params)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<ModelParams> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes).map_err(|reason| Error::format(path, reason))
}

fn read_tensor(r: &mut Reader<'_>, expected: &[usize]) -> Result<Tensor, String> {
    let rank = r.u32()? as usize;
    if rank != expected.len() {
        return Err(format!("tensor rank {rank}, expected shape {expected:?}"));
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(r.u32()? as usize);
    }
    if shape != expected {
        return Err(format!("tensor shape {shape:?}, expected {expected:?}"));
    }
    let data = r.f64s(shape.iter().product())?;
    Tensor::new(shape, data).map_err(|e| e.to_string())
}

pub fn from_bytes(bytes: &[u8]) -> Result<ModelParams, String> {
    let mut r = Reader::new(bytes);
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err("bad magic, not a checkpoint".into());
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(format!("unsupported checkpoint version {version}"));
    }
    let config = NetConfig {
        signal_dim: r.u32()? as usize,
        hidden_width: r.u32()? as usize,
        hidden_layers: r.u32()? as usize,
        n_frequencies: r.u32()? as usize,
    };
    config.validate().map_err(|e| e.to_string())?;
    let frequencies = read_tensor(&mut r, &[1, config.n_frequencies])?;
    let tensors = config
        .param_shapes()
        .iter()
        .map(|s| read_tensor(&mut r, s))
        .collect::<Result<Vec<_>, _>>()?;
    r.finish()?;
    ModelParams::from_parts(config, frequencies, tensors).map_err(|e| e.to_string())
}
