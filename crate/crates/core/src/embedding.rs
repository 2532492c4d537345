//! Sentence-vector sets and the `EMB1` binary format.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! b"EMB1"  u32 count  u32 dim
//! count × { u16 id_len, id_len bytes of UTF-8 id, dim × f32 }
//! ```

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"EMB1";
/// Id of the single record in a centroid file.
pub const CENTROID_ID: &str = "__centroid__";

/// Id-keyed vectors of a common dimension, kept in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    dim: usize,
    rows: Vec<(String, Vec<f32>)>,
    ids: HashSet<String>,
}

impl EmbeddingSet {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument(
                "embedding dimension must be positive".into(),
            ));
        }
        Ok(EmbeddingSet {
            dim,
            rows: Vec::new(),
            ids: HashSet::new(),
        })
    }

    pub fn push(&mut self, id: impl Into<String>, vector: Vec<f32>) -> Result<()> {
        let id = id.into();
        if id.is_empty() || id.len() > u16::MAX as usize {
            return Err(Error::InvalidData(format!(
                "embedding id of length {} is not allowed",
                id.len()
            )));
        }
        if vector.len() != self.dim {
            return Err(Error::InvalidData(format!(
                "vector `{id}` has dimension {}, expected {}",
                vector.len(),
                self.dim
            )));
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidData(format!(
                "vector `{id}` has a non-finite component"
            )));
        }
        if !self.ids.insert(id.clone()) {
            return Err(Error::InvalidData(format!("duplicate embedding id `{id}`")));
        }
        self.rows.push((id, vector));
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[(String, Vec<f32>)] {
        &self.rows
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.rows
            .iter()
            .find(|(i, _)| i == id)
            .map(|(_, v)| v.as_slice())
    }

    /// Wraps a centroid as a one-record set under [`CENTROID_ID`].
    pub fn from_centroid(center: &[f64]) -> Result<Self> {
        let mut set = EmbeddingSet::new(center.len())?;
        set.push(CENTROID_ID, center.iter().map(|&x| x as f32).collect())?;
        Ok(set)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + self.rows.len() * (2 + 16 + 4 * self.dim));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.rows.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for (id, v) in &self.rows {
            out.extend_from_slice(&(id.len() as u16).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::InvalidData("missing EMB1 magic".into()));
        }
        let count = r.u32()? as usize;
        let dim = r.u32()? as usize;
        let mut set = EmbeddingSet::new(dim)?;
        for _ in 0..count {
            let len = r.u16()? as usize;
            let id = std::str::from_utf8(r.take(len)?)
                .map_err(|_| {
                    Error::InvalidData(format!("record id at byte {} is not UTF-8", r.pos - len))
                })?
                .to_string();
            let raw = r.take(4 * dim)?;
            let v = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            set.push(id, v)?;
        }
        if r.pos != bytes.len() {
            return Err(Error::InvalidData(format!(
                "{} trailing bytes after {count} records",
                bytes.len() - r.pos
            )));
        }
        Ok(set)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| Error::parse(path, 0, e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::InvalidData(format!(
                "truncated EMB1 data at byte {}",
                self.pos
            )));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
}
