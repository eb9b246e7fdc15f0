//! Versioned binary checkpoint container shared by every trained model.
//!
//! Layout: `CIAICKPT` magic, format version (u32 LE), then a body holding a
//! kind string, a JSON header, named tensors of little-endian f64 values and
//! named child checkpoints, followed by the SHA-256 of everything before it.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const MAGIC: &[u8; 8] = b"CIAICKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint content hash mismatch")]
    HashMismatch,
    #[error("checkpoint truncated")]
    Truncated,
    #[error("checkpoint holds a {found} model, expected {expected}")]
    Kind { expected: String, found: String },
    #[error("checkpoint header: {0}")]
    Header(String),
    #[error("checkpoint is missing {0}")]
    Missing(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub header: serde_json::Value,
    pub tensors: Vec<(String, Vec<f64>)>,
    pub children: Vec<(String, Checkpoint)>,
}

impl Checkpoint {
    pub fn new(kind: impl Into<String>, header: &impl Serialize) -> Result<Self, CheckpointError> {
        Ok(Self {
            kind: kind.into(),
            header: serde_json::to_value(header).map_err(|e| CheckpointError::Header(e.to_string()))?,
            tensors: Vec::new(),
            children: Vec::new(),
        })
    }

    pub fn with_tensor(mut self, name: impl Into<String>, values: Vec<f64>) -> Self {
        self.tensors.push((name.into(), values));
        self
    }

    pub fn with_child(mut self, name: impl Into<String>, child: Checkpoint) -> Self {
        self.children.push((name.into(), child));
        self
    }

    pub fn expect_kind(&self, kind: &str) -> Result<(), CheckpointError> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(CheckpointError::Kind {
                expected: kind.to_string(),
                found: self.kind.clone(),
            })
        }
    }

    pub fn header_as<T: DeserializeOwned>(&self) -> Result<T, CheckpointError> {
        serde_json::from_value(self.header.clone()).map_err(|e| CheckpointError::Header(e.to_string()))
    }

    pub fn tensor(&self, name: &str) -> Result<&[f64], CheckpointError> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| CheckpointError::Missing(format!("tensor {name}")))
    }

    pub fn child(&self, name: &str) -> Result<&Checkpoint, CheckpointError> {
        self.children
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, c)| c)
            .ok_or_else(|| CheckpointError::Missing(format!("child {name}")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        put_str(&mut out, &self.kind);
        put_str(&mut out, &self.header.to_string());
        put_u32(&mut out, self.tensors.len());
        for (name, values) in &self.tensors {
            put_str(&mut out, name);
            out.extend_from_slice(&(values.len() as u64).to_le_bytes());
            for v in values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        put_u32(&mut out, self.children.len());
        for (name, child) in &self.children {
            put_str(&mut out, name);
            let bytes = child.to_bytes();
            out.extend_from_slice(&(bytes.len() as u64).to_le_bytes());
            out.extend_from_slice(&bytes);
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        if bytes.len() < MAGIC.len() + 4 + 32 {
            return Err(CheckpointError::Truncated);
        }
        let (content, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(content).as_slice() != digest {
            return Err(CheckpointError::HashMismatch);
        }
        let mut r = Reader {
            buf: content,
            pos: MAGIC.len(),
        };
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(CheckpointError::Version {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let kind = r.string()?;
        let header = serde_json::from_str(&r.string()?).map_err(|e| CheckpointError::Header(e.to_string()))?;
        let n_tensors = r.u32()?;
        let mut tensors = Vec::with_capacity(n_tensors as usize);
        for _ in 0..n_tensors {
            let name = r.string()?;
            let len = r.u64()? as usize;
            let raw = r.take(len.checked_mul(8).ok_or(CheckpointError::Truncated)?)?;
            let values = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            tensors.push((name, values));
        }
        let n_children = r.u32()?;
        let mut children = Vec::with_capacity(n_children as usize);
        for _ in 0..n_children {
            let name = r.string()?;
            let len = r.u64()? as usize;
            children.push((name, Checkpoint::from_bytes(r.take(len)?)?));
        }
        if r.pos != content.len() {
            return Err(CheckpointError::Header("trailing bytes after body".into()));
        }
        Ok(Self {
            kind,
            header,
            tensors,
            children,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Hex SHA-256 of the serialized checkpoint.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }
}

fn put_u32(out: &mut Vec<u8>, n: usize) {
    out.extend_from_slice(&(n as u32).to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).ok_or(CheckpointError::Truncated)?;
        let slice = self.buf.get(self.pos..end).ok_or(CheckpointError::Truncated)?;
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String, CheckpointError> {
        let len = self.u32()? as usize;
        String::from_utf8(self.take(len)?.to_vec()).map_err(|e| CheckpointError::Header(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        Checkpoint::new("toy", &serde_json::json!({"a": 1}))
            .unwrap()
            .with_tensor("w", vec![1.5, -0.0, f64::MIN_POSITIVE])
            .with_child("inner", Checkpoint::new("leaf", &()).unwrap().with_tensor("b", vec![2.0]))
    }

    #[test]
    fn round_trip_is_exact() {
        let ck = sample();
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.child("inner").unwrap().tensor("b").unwrap(), [2.0]);
    }

    #[test]
    fn corrupted_byte_fails_hash() {
        let mut bytes = sample().to_bytes();
        bytes[20] ^= 1;
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(CheckpointError::HashMismatch)));
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let mut bytes = sample().to_bytes();
        bytes[8..12].copy_from_slice(&7u32.to_le_bytes());
        let n = bytes.len();
        let digest = Sha256::digest(&bytes[..n - 32]);
        bytes[n - 32..].copy_from_slice(&digest);
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(CheckpointError::Version { found: 7, .. })
        ));
    }

    #[test]
    fn wrong_magic() {
        assert!(matches!(Checkpoint::from_bytes(b"hello world"), Err(CheckpointError::BadMagic)));
    }
}
