//! Binary model snapshots.
//!
//! A checkpoint is a flat list of named f64 tensors plus a free-form meta
//! string, covering both learnable parameters and batch-norm running
//! statistics. Layout, all integers little-endian:
//!
//! ```text
//! "SNCK"  magic
//! u16     format version (currently 1)
//! u32     meta length, then that many UTF-8 bytes
//! u32     tensor count
//! per tensor:
//!   u16   name length, then that many UTF-8 bytes
//!   u8    dtype (0 = f64)
//!   u8    rank
//!   u64 * rank   dims
//!   f64 * prod(dims)   row-major data
//! ```
//!
//! Restoring verifies that the stored names and shapes exactly match the
//! target model; extra, missing, or reshaped tensors are errors.

use super::layers::{BufferVisitor, ParamVisitor};
use super::model::{BaselineModel, FusionModel};
use crate::tensor::Tensor;
use std::error::Error;
use std::fmt;
use std::io;
use std::path::Path;

pub const MAGIC: [u8; 4] = *b"SNCK";
pub const VERSION: u16 = 1;

const MAX_NAME: usize = 1 << 12;
const MAX_RANK: u8 = 8;
const MAX_ELEMENTS: u64 = 1 << 30;

#[derive(Debug)]
pub enum CheckpointError {
    Io { path: String, source: io::Error },
    BadMagic { found: [u8; 4] },
    UnsupportedVersion(u16),
    /// The buffer ended before `needed` more bytes at `offset`.
    Truncated { offset: usize, needed: usize },
    BadUtf8 { offset: usize },
    BadDtype { offset: usize, value: u8 },
    Oversize { offset: usize, what: &'static str, value: u64 },
    DuplicateName(String),
    /// The model owns a tensor the checkpoint lacks.
    MissingTensor(String),
    /// The checkpoint stores a tensor the model does not own.
    UnexpectedTensor(String),
    ShapeMismatch { name: String, expected: Vec<usize>, found: Vec<usize> },
}

impl fmt::Display for CheckpointError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CheckpointError::Io { path, source } => write!(f, "{path}: {source}"),
            CheckpointError::BadMagic { found } => {
                write!(f, "bad magic {found:?}, expected {MAGIC:?}")
            }
            CheckpointError::UnsupportedVersion(v) => {
                write!(f, "unsupported checkpoint version {v}")
            }
            CheckpointError::Truncated { offset, needed } => {
                write!(f, "truncated at byte {offset}: {needed} more bytes expected")
            }
            CheckpointError::BadUtf8 { offset } => {
                write!(f, "invalid UTF-8 in string at byte {offset}")
            }
            CheckpointError::BadDtype { offset, value } => {
                write!(f, "unknown dtype {value} at byte {offset}")
            }
            CheckpointError::Oversize { offset, what, value } => {
                write!(f, "{what} {value} at byte {offset} exceeds the format limit")
            }
            CheckpointError::DuplicateName(n) => write!(f, "duplicate tensor name {n:?}"),
            CheckpointError::MissingTensor(n) => {
                write!(f, "checkpoint has no tensor named {n:?}")
            }
            CheckpointError::UnexpectedTensor(n) => {
                write!(f, "checkpoint tensor {n:?} has no home in the model")
            }
            CheckpointError::ShapeMismatch { name, expected, found } => {
                write!(f, "tensor {name:?}: model expects shape {expected:?}, checkpoint holds {found:?}")
            }
        }
    }
}

impl Error for CheckpointError {
    fn source(&self) -> Option<&(dyn Error + 'static)> {
        match self {
            CheckpointError::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

#[derive(Debug)]
pub struct Checkpoint {
    pub meta: String,
    tensors: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn new(meta: &str) -> Self {
        Checkpoint { meta: meta.to_string(), tensors: Vec::new() }
    }

    pub fn insert(&mut self, name: &str, t: &Tensor) -> Result<(), CheckpointError> {
        if self.tensors.iter().any(|(n, _)| n == name) {
            return Err(CheckpointError::DuplicateName(name.to_string()));
        }
        self.tensors.push((name.to_string(), t.clone()));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.meta.len() as u32).to_le_bytes());
        out.extend_from_slice(self.meta.as_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(0);
            out.push(t.shape().len() as u8);
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut c = Cursor { bytes, pos: 0 };
        let magic = c.take(4)?;
        if magic != MAGIC {
            return Err(CheckpointError::BadMagic { found: [magic[0], magic[1], magic[2], magic[3]] });
        }
        let version = c.u16()?;
        if version != VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        let meta_len = c.u32()? as usize;
        let meta_off = c.pos;
        let meta_bytes = c.take(meta_len)?;
        let meta = std::str::from_utf8(meta_bytes)
            .map_err(|_| CheckpointError::BadUtf8 { offset: meta_off })?
            .to_string();
        let count = c.u32()? as usize;
        let mut out = Checkpoint { meta, tensors: Vec::with_capacity(count) };
        for _ in 0..count {
            let name_len_off = c.pos;
            let name_len = c.u16()? as usize;
            if name_len > MAX_NAME {
                return Err(CheckpointError::Oversize {
                    offset: name_len_off,
                    what: "name length",
                    value: name_len as u64,
                });
            }
            let name_off = c.pos;
            let name_bytes = c.take(name_len)?;
            let name = std::str::from_utf8(name_bytes)
                .map_err(|_| CheckpointError::BadUtf8 { offset: name_off })?
                .to_string();
            let dtype_off = c.pos;
            let dtype = c.u8()?;
            if dtype != 0 {
                return Err(CheckpointError::BadDtype { offset: dtype_off, value: dtype });
            }
            let rank_off = c.pos;
            let rank = c.u8()?;
            if rank > MAX_RANK {
                return Err(CheckpointError::Oversize {
                    offset: rank_off,
                    what: "rank",
                    value: rank as u64,
                });
            }
            let mut shape = Vec::with_capacity(rank as usize);
            let mut elements: u64 = 1;
            for _ in 0..rank {
                let dim_off = c.pos;
                let d = c.u64()?;
                elements = elements.saturating_mul(d.max(1));
                if elements > MAX_ELEMENTS {
                    return Err(CheckpointError::Oversize {
                        offset: dim_off,
                        what: "element count",
                        value: elements,
                    });
                }
                shape.push(d as usize);
            }
            let n: usize = shape.iter().product();
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                data.push(f64::from_le_bytes(c.take(8)?.try_into().unwrap()));
            }
            if out.tensors.iter().any(|(existing, _)| *existing == name) {
                return Err(CheckpointError::DuplicateName(name));
            }
            out.tensors.push((name, Tensor::from_vec(&shape, data)));
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        std::fs::write(path, self.encode())
            .map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let bytes = std::fs::read(path)
            .map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })?;
        Checkpoint::decode(&bytes)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.bytes.len() - self.pos < n {
            return Err(CheckpointError::Truncated {
                offset: self.pos,
                needed: n - (self.bytes.len() - self.pos),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Anything whose full state walks through the two visitor callbacks.
pub trait Checkpointable {
    fn visit_params(&mut self, f: &mut ParamVisitor);
    fn visit_buffers(&mut self, f: &mut BufferVisitor);
}

impl Checkpointable for BaselineModel {
    fn visit_params(&mut self, f: &mut ParamVisitor) {
        BaselineModel::visit_params(self, f);
    }
    fn visit_buffers(&mut self, f: &mut BufferVisitor) {
        BaselineModel::visit_buffers(self, f);
    }
}

impl Checkpointable for FusionModel {
    fn visit_params(&mut self, f: &mut ParamVisitor) {
        FusionModel::visit_params(self, f);
    }
    fn visit_buffers(&mut self, f: &mut BufferVisitor) {
        FusionModel::visit_buffers(self, f);
    }
}

/// Snapshots every parameter and buffer of `model`.
pub fn capture(model: &mut dyn Checkpointable, meta: &str) -> Checkpoint {
    let mut ck = Checkpoint::new(meta);
    model.visit_params(&mut |name, value, _| {
        ck.insert(name, value).expect("parameter names are unique");
    });
    model.visit_buffers(&mut |name, value| {
        ck.insert(name, value).expect("buffer names are unique");
    });
    ck
}

/// Writes a checkpoint back into `model`, verifying an exact one-to-one
/// match between stored and owned tensors.
pub fn restore(model: &mut dyn Checkpointable, ck: &Checkpoint) -> Result<(), CheckpointError> {
    let mut err = None;
    let mut used = vec![false; ck.len()];
    {
        let mut apply = |name: &str, value: &mut Tensor| {
            if err.is_some() {
                return;
            }
            match ck.tensors.iter().position(|(n, _)| n == name) {
                None => err = Some(CheckpointError::MissingTensor(name.to_string())),
                Some(i) => {
                    let stored = &ck.tensors[i].1;
                    if stored.shape() != value.shape() {
                        err = Some(CheckpointError::ShapeMismatch {
                            name: name.to_string(),
                            expected: value.shape().to_vec(),
                            found: stored.shape().to_vec(),
                        });
                    } else {
                        value.data_mut().copy_from_slice(stored.data());
                        used[i] = true;
                    }
                }
            }
        };
        model.visit_params(&mut |name, value, _| apply(name, value));
        model.visit_buffers(&mut |name, value| apply(name, value));
    }
    if let Some(e) = err {
        return Err(e);
    }
    if let Some(i) = used.iter().position(|&u| !u) {
        return Err(CheckpointError::UnexpectedTensor(ck.tensors[i].0.clone()));
    }
    Ok(())
}
