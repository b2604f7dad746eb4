//! Checkpoint container (little-endian):
//!
//! | bytes | field                                        |
//! |-------|----------------------------------------------|
//! | 4     | magic `LFCK`                                 |
//! | 2     | version (u16)                                |
//! | 4     | header length `n` (u32)                      |
//! | n     | JSON header: configs, counters, tensor table |
//! | 4·N   | f32 values, then Adam first and second moments, in table order |

use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{TrainConfig, Trainer};
use crate::autograd::{Adam, AdamConfig, ParamGroup, Tensor};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, Network};
use crate::schedule::{Schedule, ScheduleConfig};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"LFCK";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    group: u8,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct RngState {
    seed: Vec<u8>,
    stream: u64,
    word_pos: u128,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    schedule: ScheduleConfig,
    train: TrainConfig,
    iter: u64,
    adam: AdamConfig,
    adam_step: u64,
    rng: RngState,
    /// frozen groups by code
    frozen: Vec<u8>,
    tensors: Vec<TensorEntry>,
}

/// Everything restored from a checkpoint.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub trainer: Trainer,
}

impl Checkpoint {
    pub fn network(&self) -> &Network<f32> {
        &self.trainer.net
    }

    pub fn schedule(&self) -> &Schedule {
        &self.trainer.sched
    }
}

const GROUPS: [ParamGroup; 3] = [ParamGroup::Backbone, ParamGroup::Adapter, ParamGroup::Predictor];

pub fn save_checkpoint(path: impl AsRef<Path>, tr: &Trainer) -> Result<()> {
    let store = &tr.net.params;
    let header = Header {
        model: tr.net.config.clone(),
        schedule: tr.sched.config(),
        train: tr.config.clone(),
        iter: tr.iter,
        adam: tr.opt.config,
        adam_step: tr.opt.step,
        rng: RngState {
            seed: tr.rng.get_seed().to_vec(),
            stream: tr.rng.get_stream(),
            word_pos: tr.rng.get_word_pos(),
        },
        frozen: GROUPS.iter().filter(|&&g| store.is_frozen(g)).map(|g| g.code()).collect(),
        tensors: store
            .iter()
            .map(|p| TensorEntry {
                name: p.name.clone(),
                group: p.group.code(),
                shape: p.value.shape().to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(10 + json.len() + 12 * store.numel());
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    let tensors = store.iter().map(|p| &p.value).chain(&tr.opt.m).chain(&tr.opt.v);
    for t in tensors {
        for x in t.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn take<'a>(bytes: &'a [u8], at: &mut usize, n: usize) -> Result<&'a [u8]> {
    let end = *at + n;
    if end > bytes.len() {
        return Err(Error::Truncated {
            expected: end,
            found: bytes.len(),
        });
    }
    let s = &bytes[*at..end];
    *at = end;
    Ok(s)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    decode(&std::fs::read(path)?)
}

fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let mut at = 0;
    let magic: [u8; 4] = take(bytes, &mut at, 4)?.try_into().expect("4 bytes");
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic {
            expected: CHECKPOINT_MAGIC,
            found: magic,
        });
    }
    let version = u16::from_le_bytes(take(bytes, &mut at, 2)?.try_into().expect("2 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            expected: CHECKPOINT_VERSION,
            found: version,
        });
    }
    let len = u32::from_le_bytes(take(bytes, &mut at, 4)?.try_into().expect("4 bytes")) as usize;
    let header: Header = serde_json::from_slice(take(bytes, &mut at, len)?)?;

    let mut net = Network::<f32>::new(header.model.clone())?;
    if net.params.len() != header.tensors.len() {
        return Err(Error::DimMismatch(format!(
            "checkpoint has {} tensors, model expects {}",
            header.tensors.len(),
            net.params.len()
        )));
    }
    for (p, e) in net.params.iter().zip(&header.tensors) {
        if p.name != e.name || p.group.code() != e.group || p.value.shape() != e.shape.as_slice() {
            return Err(Error::DimMismatch(format!("checkpoint tensor `{}` {:?} does not match `{}` {:?}", e.name, e.shape, p.name, p.value.shape())));
        }
    }
    let numel = net.params.numel();
    let payload = &bytes[at..];
    if payload.len() != 12 * numel {
        return Err(Error::Truncated {
            expected: at + 12 * numel,
            found: bytes.len(),
        });
    }
    let mut floats = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")));
    let mut read = |shape: &[usize]| -> Tensor<f32> { Tensor::from_fn(shape, |_| floats.next().expect("length checked")) };
    for p in net.params.iter_mut() {
        let shape = p.value.shape().to_vec();
        p.value = read(&shape);
    }
    let shapes: Vec<Vec<usize>> = net.params.iter().map(|p| p.value.shape().to_vec()).collect();
    let m = shapes.iter().map(|s| read(s)).collect();
    let v = shapes.iter().map(|s| read(s)).collect();
    for g in GROUPS {
        net.params.set_frozen(g, header.frozen.contains(&g.code()));
    }

    let sched = Schedule::new(header.schedule)?;
    let seed: [u8; 32] = header.rng.seed.as_slice().try_into().map_err(|_| Error::config("checkpoint rng seed must be 32 bytes"))?;
    let mut rng = <ChaCha8Rng as rand::SeedableRng>::from_seed(seed);
    rng.set_stream(header.rng.stream);
    rng.set_word_pos(header.rng.word_pos);
    header.train.validate(&sched)?;
    Ok(Checkpoint {
        trainer: Trainer {
            net,
            sched,
            config: header.train,
            opt: Adam {
                config: header.adam,
                step: header.adam_step,
                m,
                v,
            },
            rng,
            iter: header.iter,
        },
    })
}
