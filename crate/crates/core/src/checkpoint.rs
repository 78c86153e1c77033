//! Binary checkpoint files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "CXRN"                 4-byte magic
//! u32 version            currently 1
//! --- payload (covered by the CRC) ---
//! u32 n, n bytes         JSON descriptor: model spec, epoch, seed, optimizer scalars
//! u32 count              number of tensors that follow
//! per tensor:
//!   u32 rank, rank x u32 extents, numel x f32 values
//! --- trailer ---
//! u32 crc32              CRC-32 (IEEE) of the payload
//! ```
//!
//! Tensors are the network parameters in layer order, followed (when an
//! optimizer is stored) by every Adam first moment and then every second moment.

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{ModelSpec, Network};
use crate::optim::{AdamConfig, AdamState};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"CXRN";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Descriptor {
    model: ModelSpec,
    epoch: u32,
    seed: u64,
    optimizer: Option<OptimizerScalars>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OptimizerScalars {
    config: AdamConfig,
    learning_rate: f64,
    step: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerSnapshot {
    pub config: AdamConfig,
    pub learning_rate: f64,
    pub step: u64,
    pub m: Vec<Tensor<f32>>,
    pub v: Vec<Tensor<f32>>,
}

/// Everything needed to restore a network (and optionally resume its optimizer).
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: ModelSpec,
    pub epoch: u32,
    pub seed: u64,
    pub params: Vec<Tensor<f32>>,
    pub optimizer: Option<OptimizerSnapshot>,
}

impl Checkpoint {
    pub fn capture<T: Scalar>(network: &Network<T>, adam: Option<&AdamState<T>>, epoch: u32, seed: u64) -> Self {
        Checkpoint {
            spec: network.spec().clone(),
            epoch,
            seed,
            params: network.params().into_iter().map(Tensor::cast).collect(),
            optimizer: adam.map(|a| OptimizerSnapshot {
                config: a.config,
                learning_rate: a.learning_rate,
                step: a.step,
                m: a.m.iter().map(Tensor::cast).collect(),
                v: a.v.iter().map(Tensor::cast).collect(),
            }),
        }
    }

    pub fn network<T: Scalar>(&self) -> Result<Network<T>> {
        Network::from_params(self.spec.clone(), self.params.iter().map(Tensor::cast).collect())
    }

    pub fn adam_state<T: Scalar>(&self) -> Option<AdamState<T>> {
        self.optimizer.as_ref().map(|o| AdamState {
            config: o.config,
            learning_rate: o.learning_rate,
            step: o.step,
            m: o.m.iter().map(Tensor::cast).collect(),
            v: o.v.iter().map(Tensor::cast).collect(),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let descriptor = Descriptor {
            model: self.spec.clone(),
            epoch: self.epoch,
            seed: self.seed,
            optimizer: self.optimizer.as_ref().map(|o| OptimizerScalars {
                config: o.config,
                learning_rate: o.learning_rate,
                step: o.step,
            }),
        };
        let json = serde_json::to_vec(&descriptor).expect("descriptor serializes");
        let mut tensors: Vec<&Tensor<f32>> = self.params.iter().collect();
        if let Some(o) = &self.optimizer {
            tensors.extend(o.m.iter().chain(&o.v));
        }
        let floats: usize = tensors.iter().map(|t| t.numel()).sum();
        let mut out = Vec::with_capacity(HEADER_LEN + 8 + json.len() + 4 * floats + 64 * tensors.len() + 4);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for t in tensors {
            out.extend_from_slice(&(t.dims().len() as u32).to_le_bytes());
            for &d in t.dims() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out[HEADER_LEN..]);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN + 4 {
            return Err(Error::Format(format!("file too short ({} bytes)", bytes.len())));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Format("bad magic bytes (not a CXRN checkpoint)".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                supported: FORMAT_VERSION,
            });
        }
        let (payload, trailer) = bytes[HEADER_LEN..].split_at(bytes.len() - HEADER_LEN - 4);
        let stored = u32::from_le_bytes(trailer.try_into().expect("4 bytes"));
        let actual = crc32fast::hash(payload);
        if stored != actual {
            return Err(Error::Format(format!(
                "checksum mismatch (stored {stored:08x}, computed {actual:08x})"
            )));
        }

        let mut r = Reader { buf: payload, pos: 0 };
        let json_len = r.u32()? as usize;
        let descriptor: Descriptor =
            serde_json::from_slice(r.take(json_len)?).map_err(|e| Error::Format(format!("bad descriptor: {e}")))?;
        descriptor
            .model
            .validate()
            .map_err(|e| Error::Format(format!("descriptor holds an invalid model: {e}")))?;
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            tensors.push(r.tensor()?);
        }
        if r.pos != payload.len() {
            return Err(Error::Format(format!(
                "{} trailing payload bytes",
                payload.len() - r.pos
            )));
        }

        let shapes = descriptor.model.param_shapes();
        let n = shapes.len();
        let expected = if descriptor.optimizer.is_some() { 3 * n } else { n };
        if tensors.len() != expected {
            return Err(Error::Format(format!(
                "expected {expected} tensors, found {}",
                tensors.len()
            )));
        }
        for (i, t) in tensors.iter().enumerate() {
            if t.dims() != shapes[i % n].as_slice() {
                return Err(Error::Format(format!(
                    "tensor {i} has shape {}, model needs {:?}",
                    t.shape(),
                    shapes[i % n]
                )));
            }
        }
        let mut rest = tensors.split_off(n);
        let optimizer = descriptor.optimizer.map(|o| {
            let v = rest.split_off(n);
            OptimizerSnapshot {
                config: o.config,
                learning_rate: o.learning_rate,
                step: o.step,
                m: rest,
                v,
            }
        });
        Ok(Checkpoint {
            spec: descriptor.model,
            epoch: descriptor.epoch,
            seed: descriptor.seed,
            params: tensors,
            optimizer,
        })
    }

    /// Writes to a sibling temporary file and renames it into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        fs::write(&tmp, self.to_bytes())?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
        Checkpoint::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format("truncated payload".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn tensor(&mut self) -> Result<Tensor<f32>> {
        let rank = self.u32()? as usize;
        if rank == 0 || rank > 8 {
            return Err(Error::Format(format!("implausible tensor rank {rank}")));
        }
        let dims = (0..rank)
            .map(|_| self.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let numel = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Format(format!("bad tensor extents {dims:?}")))?;
        let raw = self.take(
            numel
                .checked_mul(4)
                .ok_or_else(|| Error::Format("tensor too large".into()))?,
        )?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Tensor::from_vec(&dims, data).map_err(|e| Error::Format(e.to_string()))
    }
}
