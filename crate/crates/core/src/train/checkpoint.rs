//! Checkpoint container.
//!
//! Layout: the 8-byte magic `BRCATCKP`, a little-endian `u32` format
//! version, a little-endian `u64` manifest length, the UTF-8 JSON manifest,
//! then every block of the manifest's shape table as little-endian `f64`
//! values in table order.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optim::AdamW;
use super::{EpochRecord, TrainConfig};
use crate::bridge::ScheduleDescriptor;
use crate::error::{Error, Result};
use crate::nn::{DenoiserConfig, ParameterSet, Tensor};

pub const MAGIC: &[u8; 8] = b"BRCATCKP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: DenoiserConfig,
    pub schedule: ScheduleDescriptor,
    pub params: ParameterSet,
    pub train: Option<TrainConfig>,
    pub optimizer: Option<AdamW>,
    pub rng: Option<ChaCha8Rng>,
    pub epoch: usize,
    pub step: u64,
    pub history: Vec<EpochRecord>,
}

impl Checkpoint {
    /// Inference-only checkpoint without training state.
    pub fn for_model(config: DenoiserConfig, schedule: ScheduleDescriptor, params: ParameterSet) -> Self {
        Checkpoint {
            config,
            schedule,
            params,
            train: None,
            optimizer: None,
            rng: None,
            epoch: 0,
            step: 0,
            history: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BlockEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct OptimizerMeta {
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    t: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    config: DenoiserConfig,
    schedule: ScheduleDescriptor,
    train: Option<TrainConfig>,
    optimizer: Option<OptimizerMeta>,
    rng: Option<ChaCha8Rng>,
    epoch: usize,
    step: u64,
    history: Vec<EpochRecord>,
    blocks: Vec<BlockEntry>,
}

const PARAM: &str = "param/";
const MOMENT1: &str = "adam_m/";
const MOMENT2: &str = "adam_v/";

fn push_blocks<'a>(prefix: &str, set: &'a ParameterSet, table: &mut Vec<BlockEntry>, data: &mut Vec<&'a Tensor>) {
    for (name, t) in set.iter() {
        table.push(BlockEntry {
            name: format!("{prefix}{name}"),
            rows: t.rows,
            cols: t.cols,
        });
        data.push(t);
    }
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let mut blocks = Vec::new();
    let mut data = Vec::new();
    push_blocks(PARAM, &ckpt.params, &mut blocks, &mut data);
    if let Some(opt) = &ckpt.optimizer {
        push_blocks(MOMENT1, &opt.m, &mut blocks, &mut data);
        push_blocks(MOMENT2, &opt.v, &mut blocks, &mut data);
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        config: ckpt.config.clone(),
        schedule: ckpt.schedule,
        train: ckpt.train.clone(),
        optimizer: ckpt.optimizer.as_ref().map(|o| OptimizerMeta {
            beta1: o.beta1,
            beta2: o.beta2,
            eps: o.eps,
            weight_decay: o.weight_decay,
            t: o.t,
        }),
        rng: ckpt.rng.clone(),
        epoch: ckpt.epoch,
        step: ckpt.step,
        history: ckpt.history.clone(),
        blocks,
    };
    let json = serde_json::to_vec(&manifest)?;
    let payload: usize = data.iter().map(|t| t.len()).sum();
    let mut out = Vec::with_capacity(20 + json.len() + 8 * payload);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for t in data {
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn take<'a>(bytes: &'a [u8], pos: &mut usize, n: usize, what: &str) -> Result<&'a [u8]> {
    let end = pos
        .checked_add(n)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| Error::Checkpoint(format!("truncated checkpoint: {what} incomplete")))?;
    let s = &bytes[*pos..end];
    *pos = end;
    Ok(s)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut pos = 0;
    if take(bytes, &mut pos, 8, "header")? != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(take(bytes, &mut pos, 4, "header")?.try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "format version {version} is not supported (expected {FORMAT_VERSION})"
        )));
    }
    let len = u64::from_le_bytes(take(bytes, &mut pos, 8, "header")?.try_into().unwrap());
    let len = usize::try_from(len).map_err(|_| Error::Checkpoint("manifest length overflows".into()))?;
    let json = take(bytes, &mut pos, len, "manifest")?;
    let manifest: Manifest =
        serde_json::from_slice(json).map_err(|e| Error::Checkpoint(format!("corrupt manifest: {e}")))?;
    if manifest.format_version != version {
        return Err(Error::Checkpoint("manifest version disagrees with header".into()));
    }
    let mut params = ParameterSet::new();
    let mut m = ParameterSet::new();
    let mut v = ParameterSet::new();
    for b in &manifest.blocks {
        let count = b
            .rows
            .checked_mul(b.cols)
            .and_then(|c| c.checked_mul(8))
            .ok_or_else(|| Error::Checkpoint(format!("block {} is too large", b.name)))?;
        let raw = take(bytes, &mut pos, count, "payload")?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let t = Tensor {
            rows: b.rows,
            cols: b.cols,
            data,
        };
        if let Some(n) = b.name.strip_prefix(PARAM) {
            params.insert(n, t);
        } else if let Some(n) = b.name.strip_prefix(MOMENT1) {
            m.insert(n, t);
        } else if let Some(n) = b.name.strip_prefix(MOMENT2) {
            v.insert(n, t);
        } else {
            return Err(Error::Checkpoint(format!("unknown block {}", b.name)));
        }
    }
    if pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes after payload",
            bytes.len() - pos
        )));
    }
    params.check_shapes(&manifest.config.parameter_shapes())?;
    let optimizer = match manifest.optimizer {
        Some(o) => {
            if !m.same_shapes(&params) || !v.same_shapes(&params) {
                return Err(Error::Checkpoint("optimizer moments do not match parameters".into()));
            }
            Some(AdamW {
                beta1: o.beta1,
                beta2: o.beta2,
                eps: o.eps,
                weight_decay: o.weight_decay,
                t: o.t,
                m,
                v,
            })
        }
        None => {
            if !m.is_empty() || !v.is_empty() {
                return Err(Error::Checkpoint("moment blocks without optimizer state".into()));
            }
            None
        }
    };
    Ok(Checkpoint {
        config: manifest.config,
        schedule: manifest.schedule,
        params,
        train: manifest.train,
        optimizer,
        rng: manifest.rng,
        epoch: manifest.epoch,
        step: manifest.step,
        history: manifest.history,
    })
}

/// Write atomically via a sibling temporary file.
pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_checkpoint(ckpt)?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    decode_checkpoint(&fs::read(path)?)
}
