//! Binary checkpoint format.
//!
//! ```text
//! "ABSC" | u32 version | u64 header_len | header (JSON) | u32 tensor_count |
//! per tensor: u32 name_len | name | u32 ndim | u64 dims[ndim] | f64 data (row-major)
//! ```
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingTable;
use crate::error::{Error, Result};
use crate::features::IdfTable;
use crate::net::{ModelParams, ModelSpec};

pub const MAGIC: &[u8; 4] = b"ABSC";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A trained model plus the feature artifacts it was trained against.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub idf_hash: Option<String>,
    pub embedding_source: String,
    pub embedding_dim: usize,
    /// Free-form provenance (the effective run configuration).
    pub provenance: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct TensorShape {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    model: ModelSpec,
    label_names: Vec<String>,
    idf_hash: Option<String>,
    embedding_source: String,
    embedding_dim: usize,
    tensors: Vec<TensorShape>,
    #[serde(default)]
    provenance: serde_json::Value,
}

impl Checkpoint {
    pub fn new(params: ModelParams, idf: Option<&IdfTable>, table: &EmbeddingTable) -> Self {
        Checkpoint {
            params,
            idf_hash: idf.map(IdfTable::content_hash),
            embedding_source: table.source_name().to_string(),
            embedding_dim: table.dim(),
            provenance: serde_json::Value::Null,
        }
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.params.spec
    }

    /// Rejects an embedding table whose dimension differs from training.
    pub fn validate_embedding(&self, table: &EmbeddingTable) -> Result<()> {
        if table.dim() != self.embedding_dim || table.dim() != self.params.spec.input_dim {
            return Err(Error::shape(
                "embedding dimension for checkpoint",
                self.embedding_dim,
                table.dim(),
            ));
        }
        Ok(())
    }

    pub fn validate_idf(&self, idf: &IdfTable) -> Result<()> {
        match &self.idf_hash {
            Some(h) if *h != idf.content_hash() => Err(Error::Checkpoint(format!(
                "idf table hash {} does not match checkpoint {h}",
                idf.content_hash()
            ))),
            _ => Ok(()),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let tensors = self.params.tensors();
        let header = Header {
            format_version: CHECKPOINT_VERSION,
            model: self.params.spec.clone(),
            label_names: self.params.label_names.clone(),
            idf_hash: self.idf_hash.clone(),
            embedding_source: self.embedding_source.clone(),
            embedding_dim: self.embedding_dim,
            tensors: tensors
                .iter()
                .map(|(n, t)| TensorShape {
                    name: n.clone(),
                    shape: vec![t.rows(), t.cols()],
                })
                .collect(),
            provenance: self.provenance.clone(),
        };
        let header = serde_json::to_vec(&header)?;

        let mut out = Vec::with_capacity(64 + header.len() + self.params.param_count() * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for (name, t) in tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&2u32.to_le_bytes());
            out.extend_from_slice(&(t.rows() as u64).to_le_bytes());
            out.extend_from_slice(&(t.cols() as u64).to_le_bytes());
            for v in t.as_slice() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4)?;
        if magic != MAGIC {
            return Err(Error::Checkpoint(format!(
                "bad magic: expected {:?}, found {:?}",
                String::from_utf8_lossy(MAGIC),
                String::from_utf8_lossy(magic)
            )));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version: expected {CHECKPOINT_VERSION}, found {version}"
            )));
        }
        let header_len = r.u64()? as usize;
        let header: Header = serde_json::from_slice(r.take(header_len)?)
            .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
        if header.format_version != version {
            return Err(Error::Checkpoint("header version disagrees with preamble".into()));
        }

        let mut params = ModelParams::zeros(&header.model, header.label_names)?;
        let expected: Vec<(String, (usize, usize))> = params
            .tensors()
            .into_iter()
            .map(|(n, t)| (n, t.shape()))
            .collect();
        let count = r.u32()? as usize;
        if count != expected.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {count}",
                expected.len()
            )));
        }
        for ((name, shape), slot) in expected.iter().zip(params.tensors_mut()) {
            let name_len = r.u32()? as usize;
            let found = String::from_utf8_lossy(r.take(name_len)?).into_owned();
            if found != *name {
                return Err(Error::Checkpoint(format!(
                    "tensor order: expected {name}, found {found}"
                )));
            }
            let ndim = r.u32()? as usize;
            let dims = (0..ndim).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            if dims != [shape.0, shape.1] {
                return Err(Error::shape(
                    format!("checkpoint tensor {name}"),
                    format!("{:?}", [shape.0, shape.1]),
                    format!("{dims:?}"),
                ));
            }
            for v in slot.as_mut_slice() {
                *v = f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes after tensors",
                bytes.len() - r.pos
            )));
        }
        Ok(Checkpoint {
            params,
            idf_hash: header.idf_hash,
            embedding_source: header.embedding_source,
            embedding_dim: header.embedding_dim,
            provenance: header.provenance,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Checkpoint(format!("truncated file at byte {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    fs::write(path, ckpt.to_bytes()?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}
