//! DNRW weight files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "DNRW" | version: u32 = 1 | count: u32
//! count × { name_len: u16 | name: UTF-8 | ndim: u8 | dims: u32 × ndim | payload: f32 × Π dims }
//! crc32: u32   (IEEE CRC-32 of every preceding byte)
//! ```
//!
//! Each convolution layer `<name>` contributes `<name>.weight` with dims
//! `[kh, kw, c_in, c_out]` and `<name>.bias` with dims `[c_out]`.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

use super::{LayerSpec, Network, NetworkSpec};
use crate::engine::tensor::Kernel;

pub const MAGIC: &[u8; 4] = b"DNRW";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum WeightsError {
    #[error("not a DNRW file (bad magic)")]
    BadMagic,
    #[error("unsupported DNRW version {0}")]
    UnsupportedVersion(u32),
    #[error("weight file truncated: {0}")]
    Truncated(String),
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("missing tensor {0}")]
    MissingTensor(String),
    #[error("tensor {name} has dims {found:?}, expected {expected:?}")]
    DimMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("unexpected tensor {0}")]
    UnexpectedTensor(String),
    #[error("duplicate tensor {0}")]
    DuplicateTensor(String),
    #[error("malformed entry: {0}")]
    Malformed(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

pub fn encode(tensors: &[NamedTensor]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        let name = t.name.as_bytes();
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name);
        out.push(t.dims.len() as u8);
        for &d in &t.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], WeightsError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| WeightsError::Truncated(format!("reading {what} at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, WeightsError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u16(&mut self, what: &str) -> Result<u16, WeightsError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u8(&mut self, what: &str) -> Result<u8, WeightsError> {
        Ok(self.take(1, what)?[0])
    }
}

/// Parses a DNRW buffer. The checksum is verified before anything else is
/// decoded, so a damaged file yields no tensors at all.
pub fn decode(bytes: &[u8]) -> Result<Vec<NamedTensor>, WeightsError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(WeightsError::BadMagic);
    }
    if bytes.len() < 16 {
        return Err(WeightsError::Truncated(format!("{} bytes", bytes.len())));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let computed = crc32fast::hash(body);
    let mut r = Reader { buf: body, pos: 4 };
    let version = r.u32("version")?;
    if stored != computed {
        return Err(WeightsError::Checksum { stored, computed });
    }
    if version != VERSION {
        return Err(WeightsError::UnsupportedVersion(version));
    }
    let count = r.u32("tensor count")? as usize;
    let mut tensors = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let len = r.u16("name length")? as usize;
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|_| WeightsError::Malformed("tensor name is not UTF-8".into()))?
            .to_string();
        let ndim = r.u8("ndim")? as usize;
        let dims = (0..ndim)
            .map(|_| r.u32("dims").map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let n: usize = dims.iter().product();
        let raw = r.take(n.checked_mul(4).ok_or_else(|| WeightsError::Malformed(name.clone()))?, &name)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push(NamedTensor { name, dims, data });
    }
    if r.pos != body.len() {
        return Err(WeightsError::Malformed(format!(
            "{} trailing bytes after last tensor",
            body.len() - r.pos
        )));
    }
    Ok(tensors)
}

/// Tensors for every convolution of `net`, in layer order.
pub fn network_tensors(net: &Network) -> Vec<NamedTensor> {
    let mut out = Vec::new();
    for (name, k) in net.spec().conv_names().into_iter().zip(net.kernels()) {
        let (kh, kw, ci, co) = k.shape();
        out.push(NamedTensor {
            name: format!("{name}.weight"),
            dims: vec![kh, kw, ci, co],
            data: k.weights().to_vec(),
        });
        out.push(NamedTensor {
            name: format!("{name}.bias"),
            dims: vec![co],
            data: k.bias().to_vec(),
        });
    }
    out
}

pub fn save_weights(net: &Network, path: &Path) -> Result<(), WeightsError> {
    fs::write(path, encode(&network_tensors(net)))?;
    Ok(())
}

/// Builds a network for `spec` from decoded tensors.
pub fn network_from_tensors(spec: NetworkSpec, tensors: Vec<NamedTensor>) -> Result<Network, WeightsError> {
    let mut by_name: HashMap<String, NamedTensor> = HashMap::new();
    for t in tensors {
        if by_name.contains_key(&t.name) {
            return Err(WeightsError::DuplicateTensor(t.name));
        }
        by_name.insert(t.name.clone(), t);
    }
    let mut fetch = |name: String, expected: Vec<usize>| -> Result<Vec<f32>, WeightsError> {
        let t = by_name.remove(&name).ok_or_else(|| WeightsError::MissingTensor(name.clone()))?;
        if t.dims != expected {
            return Err(WeightsError::DimMismatch {
                name,
                expected,
                found: t.dims,
            });
        }
        if t.data.iter().any(|v| !v.is_finite()) {
            return Err(WeightsError::Malformed(format!("{name} contains non-finite values")));
        }
        Ok(t.data)
    };
    let mut kernels = Vec::new();
    for layer in &spec.layers {
        if let LayerSpec::Conv {
            name,
            kh,
            kw,
            c_in,
            c_out,
            ..
        } = layer
        {
            let w = fetch(format!("{name}.weight"), vec![*kh, *kw, *c_in, *c_out])?;
            let b = fetch(format!("{name}.bias"), vec![*c_out])?;
            kernels.push(
                Kernel::new(*kh, *kw, *c_in, *c_out, w, b)
                    .map_err(|e| WeightsError::Malformed(e.to_string()))?,
            );
        }
    }
    if let Some(extra) = by_name.into_keys().min() {
        return Err(WeightsError::UnexpectedTensor(extra));
    }
    Network::new(spec, kernels).map_err(|e| WeightsError::Malformed(e.to_string()))
}

pub fn load_weights(spec: NetworkSpec, path: &Path) -> Result<Network, WeightsError> {
    let bytes = fs::read(path)?;
    network_from_tensors(spec, decode(&bytes)?)
}
