//! Named parameter tensors, initialization and the checkpoint file format.
//!
//! Checkpoint layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "TSADCKPT"
//! version  u32      1
//! hdr_len  u64      length of the JSON header in bytes
//! header   JSON     {"architecture": {...}, "tensors": [{"name", "shape", "offset"}]}
//! payload  f64 LE   tensors concatenated in header order; offset counts values
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::models::Architecture;
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"TSADCKPT";
const VERSION: u32 = 1;

/// Shape and fan metadata for one parameter tensor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub fan_in: usize,
    pub fan_out: usize,
    pub is_bias: bool,
}

impl ParamSpec {
    pub fn weight(
        name: impl Into<String>,
        shape: Vec<usize>,
        fan_in: usize,
        fan_out: usize,
    ) -> Self {
        Self {
            name: name.into(),
            shape,
            fan_in,
            fan_out,
            is_bias: false,
        }
    }

    pub fn bias(name: impl Into<String>, len: usize) -> Self {
        Self {
            name: name.into(),
            shape: vec![len],
            fan_in: 0,
            fan_out: 0,
            is_bias: true,
        }
    }
}

/// Learned weights keyed by parameter name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModelParams {
    tensors: BTreeMap<String, Tensor>,
}

impl ModelParams {
    pub fn new() -> Self {
        Self::default()
    }

    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    /// Tensors are drawn in `specs` order from one seeded stream.
    pub fn glorot(specs: &[ParamSpec], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Self::new();
        for spec in specs {
            let mut t = Tensor::zeros(&spec.shape);
            if !spec.is_bias {
                let limit = (6.0 / (spec.fan_in + spec.fan_out) as f64).sqrt();
                for v in t.data_mut() {
                    *v = rng.gen_range(-limit..limit);
                }
            }
            params.insert(spec.name.clone(), t);
        }
        params
    }

    /// All-zero parameters with the given layout.
    pub fn zeros(specs: &[ParamSpec]) -> Self {
        let mut params = Self::new();
        for spec in specs {
            params.insert(spec.name.clone(), Tensor::zeros(&spec.shape));
        }
        params
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Option<Tensor> {
        self.tensors.insert(name.into(), tensor)
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Contract(format!("missing parameter `{name}`")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| Error::Contract(format!("missing parameter `{name}`")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn parameter_count(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    /// Checks that names and shapes match `specs` exactly.
    pub fn check_layout(&self, specs: &[ParamSpec]) -> Result<()> {
        if specs.len() != self.tensors.len() {
            return Err(Error::Contract(format!(
                "expected {} parameter tensors, found {}",
                specs.len(),
                self.tensors.len()
            )));
        }
        for spec in specs {
            let t = self.get(&spec.name)?;
            if t.shape() != spec.shape.as_slice() {
                return Err(Error::Dimension {
                    op: "parameter layout",
                    left: spec.shape.clone(),
                    right: t.shape().to_vec(),
                });
            }
        }
        Ok(())
    }

    /// Records every tensor on `tape`, differentiable or constant.
    pub fn bind(&self, tape: &mut Tape, differentiable: bool) -> BoundParams {
        let vars = self
            .tensors
            .iter()
            .map(|(name, t)| {
                let var = if differentiable {
                    tape.variable(t.clone())
                } else {
                    tape.constant(t.clone())
                };
                (name.clone(), var)
            })
            .collect();
        BoundParams { vars }
    }

    pub fn to_bytes(&self, architecture: &Architecture) -> Result<Vec<u8>> {
        let mut entries = Vec::with_capacity(self.tensors.len());
        let mut offset = 0;
        for (name, t) in &self.tensors {
            entries.push(TensorEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
                offset,
            });
            offset += t.numel();
        }
        let header = serde_json::to_vec(&Header {
            architecture: architecture.clone(),
            tensors: entries,
        })?;

        let mut out = Vec::with_capacity(20 + header.len() + offset * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for t in self.tensors.values() {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<(Architecture, Self)> {
        let bad = |msg: &str| Error::Checkpoint(msg.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let hdr_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let payload_start = 20usize
            .checked_add(hdr_len)
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(&bytes[20..payload_start])?;
        let payload = &bytes[payload_start..];
        if payload.len() % 8 != 0 {
            return Err(bad("payload is not a whole number of f64 values"));
        }
        let values: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();

        let mut params = Self::new();
        for entry in header.tensors {
            let n: usize = entry.shape.iter().product();
            let data = values.get(entry.offset..entry.offset + n).ok_or_else(|| {
                Error::Checkpoint(format!("tensor `{}` overruns payload", entry.name))
            })?;
            params.insert(entry.name, Tensor::new(entry.shape, data.to_vec())?);
        }
        Ok((header.architecture, params))
    }

    pub fn save(&self, path: impl AsRef<Path>, architecture: &Architecture) -> Result<()> {
        fs::write(path, self.to_bytes(architecture)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Architecture, Self)> {
        Self::from_bytes(&fs::read(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    architecture: Architecture,
    tensors: Vec<TensorEntry>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

/// Parameter tensors recorded on a tape.
#[derive(Clone, Debug)]
pub struct BoundParams {
    vars: BTreeMap<String, Var>,
}

impl BoundParams {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::Contract(format!("missing parameter `{name}`")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, &v)| (k.as_str(), v))
    }

    /// Replaces the variable bound to `name`, e.g. to differentiate with
    /// respect to a single tensor.
    pub fn with(mut self, name: &str, var: Var) -> Result<Self> {
        let slot = self
            .vars
            .get_mut(name)
            .ok_or_else(|| Error::Contract(format!("missing parameter `{name}`")))?;
        *slot = var;
        Ok(self)
    }
}
