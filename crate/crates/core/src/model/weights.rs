//! Named f32 tensors plus metadata, and the `.sfw` container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      "SFWB"                       4 bytes
//! version    u32                          currently 1
//! seed       u64
//! spec_hash  u64
//! trained_fs f64
//! count      u64                          number of tensors
//! directory  count × { name_len u64, name utf-8, rank u64, dims u64 × rank }
//! payload    f32 × Π dims, per tensor in directory order
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

pub const SFW_MAGIC: &[u8; 4] = b"SFWB";
pub const SFW_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum WeightError {
    #[error("i/o error on weight file: {0}")]
    Io(#[from] std::io::Error),
    #[error("weight file format error: {0}")]
    Format(String),
    #[error("unsupported weight file version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("missing tensor `{0}`")]
    MissingTensor(String),
    #[error("tensor `{name}` has shape {found:?}, expected {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("weights were produced for model spec {found:016x}, config describes {expected:016x}")]
    SpecMismatch { expected: u64, found: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|v| *v as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightMeta {
    pub seed: u64,
    pub spec_hash: u64,
    pub trained_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightBundle {
    pub meta: WeightMeta,
    pub tensors: BTreeMap<String, Tensor>,
}

impl WeightBundle {
    pub fn new(meta: WeightMeta) -> Self {
        Self {
            meta,
            tensors: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.tensors.insert(name.into(), tensor);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor, WeightError> {
        self.tensors
            .get(name)
            .ok_or_else(|| WeightError::MissingTensor(name.to_string()))
    }

    /// Fetch a tensor and check its shape.
    pub fn expect(&self, name: &str, shape: &[usize]) -> Result<&Tensor, WeightError> {
        let t = self.get(name)?;
        if t.shape != shape {
            return Err(WeightError::ShapeMismatch {
                name: name.to_string(),
                expected: shape.to_vec(),
                found: t.shape.clone(),
            });
        }
        Ok(t)
    }

    /// Check that every `(name, shape)` pair is present with that shape.
    pub fn validate(&self, expected: &[(String, Vec<usize>)]) -> Result<(), WeightError> {
        for (name, shape) in expected {
            self.expect(name, shape)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(SFW_MAGIC);
        out.extend_from_slice(&SFW_VERSION.to_le_bytes());
        out.extend_from_slice(&self.meta.seed.to_le_bytes());
        out.extend_from_slice(&self.meta.spec_hash.to_le_bytes());
        out.extend_from_slice(&self.meta.trained_rate.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u64).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u64).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.shape.len() as u64).to_le_bytes());
            for d in &t.shape {
                out.extend_from_slice(&(*d as u64).to_le_bytes());
            }
        }
        for t in self.tensors.values() {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, WeightError> {
        let mut rd = Reader { bytes, pos: 0 };
        let magic = rd.take(4, "magic")?;
        if magic != SFW_MAGIC {
            return Err(WeightError::Format("bad magic, not an .sfw file".into()));
        }
        let version = u32::from_le_bytes(rd.take(4, "version")?.try_into().unwrap());
        if version != SFW_VERSION {
            return Err(WeightError::Version {
                found: version,
                expected: SFW_VERSION,
            });
        }
        let seed = rd.u64("seed")?;
        let spec_hash = rd.u64("spec hash")?;
        let trained_rate = f64::from_le_bytes(rd.take(8, "trained rate")?.try_into().unwrap());
        let count = rd.u64("tensor count")? as usize;
        let mut directory = Vec::with_capacity(count.min(1 << 16));
        for i in 0..count {
            let len = rd.u64("tensor name length")? as usize;
            let name = std::str::from_utf8(rd.take(len, "tensor name")?)
                .map_err(|_| WeightError::Format(format!("tensor {i} name is not utf-8")))?
                .to_string();
            let rank = rd.u64("tensor rank")? as usize;
            if rank > 8 {
                return Err(WeightError::Format(format!("tensor `{name}` has rank {rank}")));
            }
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(rd.u64("tensor dimension")? as usize);
            }
            directory.push((name, shape));
        }
        let mut tensors = BTreeMap::new();
        for (name, shape) in directory {
            let n = shape
                .iter()
                .try_fold(1usize, |acc, d| acc.checked_mul(*d))
                .ok_or_else(|| WeightError::Format(format!("tensor `{name}` is too large")))?;
            let raw = rd.take(n.saturating_mul(4), "tensor payload")?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.insert(name, Tensor { shape, data });
        }
        if rd.pos != bytes.len() {
            return Err(WeightError::Format(format!(
                "{} trailing bytes after payload",
                bytes.len() - rd.pos
            )));
        }
        Ok(Self {
            meta: WeightMeta {
                seed,
                spec_hash,
                trained_rate,
            },
            tensors,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], WeightError> {
        if self.bytes.len() - self.pos < n {
            return Err(WeightError::Format(format!(
                "truncated file while reading {what} at byte {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self, what: &str) -> Result<u64, WeightError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn save_weights(path: impl AsRef<Path>, bundle: &WeightBundle) -> Result<(), WeightError> {
    fs::write(path, bundle.to_bytes())?;
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<WeightBundle, WeightError> {
    WeightBundle::from_bytes(&fs::read(path)?)
}
