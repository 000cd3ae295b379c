//! Binary model container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "RRWN"  magic
//! u32     format version
//! u64     header length n
//! [u8; n] UTF-8 JSON header: model config, provenance, tensor table
//! ...     f32 tensor data in table order
//! ```
//!
//! The tensor table lists every parameter, followed by the Adam first and
//! second moments when optimiser state is stored. Values round-trip bit-exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{AdamConfig, AdamState, NdArray, Params};
use crate::error::{Error, Result};
use crate::networks::{Rrwnet, RrwnetConfig};

pub const MAGIC: &[u8; 4] = b"RRWN";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    /// Last completed epoch (1-based; 0 before training).
    pub epoch: usize,
    pub fold: Option<usize>,
    pub val_loss: Option<f64>,
    pub note: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct OptimizerHeader {
    config: AdamConfig,
    step_count: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Header {
    model: RrwnetConfig,
    provenance: Provenance,
    tensors: Vec<TensorEntry>,
    optimizer: Option<OptimizerHeader>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: RrwnetConfig,
    pub provenance: Provenance,
    pub params: Params<f32>,
    pub optimizer: Option<AdamState<f32>>,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let tensors = self
            .params
            .iter()
            .map(|(n, v)| TensorEntry { name: n.to_string(), shape: v.shape().to_vec() })
            .collect();
        let header = Header {
            model: self.model,
            provenance: self.provenance.clone(),
            tensors,
            optimizer: self.optimizer.as_ref().map(|o| OptimizerHeader { config: o.config, step_count: o.step_count }),
        };
        let json = serde_json::to_vec(&header).expect("header serialises");
        let mut out = Vec::with_capacity(16 + json.len() + 4 * self.params.count() * 3);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        let mut put = |a: &NdArray<f32>| a.data().iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
        self.params.values().iter().for_each(&mut put);
        if let Some(o) = &self.optimizer {
            o.first_moment.iter().for_each(&mut put);
            o.second_moment.iter().for_each(&mut put);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(corrupt("not a model checkpoint (bad magic)"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(corrupt(format!("unsupported checkpoint version {version}")));
        }
        let n = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let json = bytes.get(16..16 + n).ok_or_else(|| corrupt("truncated header"))?;
        let header: Header = serde_json::from_slice(json).map_err(|e| corrupt(format!("bad header: {e}")))?;
        header.model.validate().map_err(|e| corrupt(format!("invalid model config: {e}")))?;
        let mut pos = 16 + n;
        let mut take = |shape: &[usize]| -> Result<NdArray<f32>> {
            let len: usize = shape.iter().product();
            let raw = bytes.get(pos..pos + 4 * len).ok_or_else(|| corrupt("truncated tensor data"))?;
            pos += 4 * len;
            let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
            NdArray::new(shape.to_vec(), data)
        };
        let mut params = Params::new();
        for t in &header.tensors {
            params.insert(t.name.clone(), take(&t.shape)?)?;
        }
        let optimizer = match header.optimizer {
            Some(o) => {
                let first = header.tensors.iter().map(|t| take(&t.shape)).collect::<Result<Vec<_>>>()?;
                let second = header.tensors.iter().map(|t| take(&t.shape)).collect::<Result<Vec<_>>>()?;
                Some(AdamState { config: o.config, step_count: o.step_count, first_moment: first, second_moment: second })
            }
            None => None,
        };
        if pos != bytes.len() {
            return Err(corrupt(format!("{} trailing bytes", bytes.len() - pos)));
        }
        let ckpt = Checkpoint { model: header.model, provenance: header.provenance, params, optimizer };
        ckpt.check_params()?;
        Ok(ckpt)
    }

    /// Verifies that the stored parameters are exactly those the model needs.
    pub fn check_params(&self) -> Result<()> {
        let expected = Rrwnet::new(self.model)?.zero_params::<f32>()?;
        let mismatch = expected.len() != self.params.len()
            || expected.iter().any(|(n, v)| self.params.get(n).is_none_or(|p| p.shape() != v.shape()));
        if mismatch {
            return Err(corrupt(format!(
                "parameters do not match a {} model with {} base channels and depth {}",
                self.model.variant, self.model.base.base_channels, self.model.base.depth
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}
