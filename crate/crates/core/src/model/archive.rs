//! Versioned weight archive.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "QSW1" | header length (u64) | JSON header | zero padding to a 64-byte boundary
//!        | payload (each tensor starts 64-byte aligned) | CRC-32 of payload (u32)
//! ```
//!
//! The header holds the model config and a tensor directory with name, dtype,
//! shape, and byte offset/length relative to the payload start.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{tensor_specs, ModelConfig, ModelError, ModelWeights};

pub const ARCHIVE_MAGIC: &[u8; 4] = b"QSW1";
const FORMAT_VERSION: u32 = 1;
const ALIGN: usize = 64;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    dtype: String,
    shape: Vec<usize>,
    offset: usize,
    length: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: ModelConfig,
    tensors: Vec<TensorEntry>,
}

fn align(n: usize) -> usize {
    n.div_ceil(ALIGN) * ALIGN
}

/// Serializes weights and config into archive bytes.
pub fn write_archive(weights: &ModelWeights<f32>, config: &ModelConfig) -> Result<Vec<u8>, ModelError> {
    weights.audit(config)?;
    let mut entries = Vec::new();
    let mut offset = 0;
    for (name, shape, data) in weights.named_tensors() {
        let length = data.len() * 4;
        entries.push(TensorEntry {
            name,
            dtype: "f32".into(),
            shape,
            offset,
            length,
        });
        offset = align(offset + length);
    }
    let header = Header {
        format_version: FORMAT_VERSION,
        config: config.clone(),
        tensors: entries,
    };
    let header_bytes = serde_json::to_vec(&header).map_err(|e| ModelError::CorruptArchive(e.to_string()))?;
    let payload_start = align(4 + 8 + header_bytes.len());

    let mut payload = vec![0u8; offset];
    for (entry, data) in header.tensors.iter().zip(weights.tensors()) {
        let dst = &mut payload[entry.offset..entry.offset + entry.length];
        for (chunk, v) in dst.chunks_exact_mut(4).zip(data) {
            chunk.copy_from_slice(&v.to_le_bytes());
        }
    }

    let mut out = Vec::with_capacity(payload_start + payload.len() + 4);
    out.extend_from_slice(ARCHIVE_MAGIC);
    out.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_bytes);
    out.resize(payload_start, 0);
    out.extend_from_slice(&payload);
    out.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
    Ok(out)
}

/// Parses archive bytes, auditing every tensor against the embedded config.
pub fn read_archive(bytes: &[u8]) -> Result<(ModelWeights<f32>, ModelConfig), ModelError> {
    let corrupt = |m: &str| ModelError::CorruptArchive(m.to_string());
    if bytes.len() < 12 {
        return Err(corrupt("file shorter than the fixed preamble"));
    }
    if &bytes[..4] != ARCHIVE_MAGIC {
        if &bytes[..3] == b"QSW" {
            return Err(ModelError::UnsupportedVersion(
                String::from_utf8_lossy(&bytes[..4]).into_owned(),
            ));
        }
        return Err(corrupt("bad magic"));
    }
    let header_len = u64::from_le_bytes(bytes[4..12].try_into().unwrap()) as usize;
    let header_end = 12usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| corrupt("header extends past end of file"))?;
    let header: Header = serde_json::from_slice(&bytes[12..header_end])
        .map_err(|e| ModelError::CorruptArchive(format!("header: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(ModelError::UnsupportedVersion(header.format_version.to_string()));
    }
    let config = header.config;
    config.validate()?;

    let specs = tensor_specs(&config);
    if header.tensors.len() != specs.len() {
        return Err(ModelError::CorruptArchive(format!(
            "directory lists {} tensors, config implies {}",
            header.tensors.len(),
            specs.len()
        )));
    }
    for (spec, entry) in specs.iter().zip(&header.tensors) {
        if spec.name != entry.name {
            return Err(ModelError::CorruptArchive(format!(
                "expected tensor `{}`, found `{}`",
                spec.name, entry.name
            )));
        }
        if spec.shape != entry.shape {
            return Err(ModelError::ShapeMismatch {
                tensor: entry.name.clone(),
                expected: spec.shape.clone(),
                found: entry.shape.clone(),
            });
        }
        if entry.dtype != "f32" {
            return Err(ModelError::CorruptArchive(format!(
                "tensor `{}` has dtype {}",
                entry.name, entry.dtype
            )));
        }
    }

    let payload_start = align(header_end);
    if bytes.len() < payload_start + 4 {
        return Err(corrupt("payload missing"));
    }
    let payload = &bytes[payload_start..bytes.len() - 4];
    let stored_crc = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    if crc32fast::hash(payload) != stored_crc {
        return Err(corrupt("payload checksum mismatch"));
    }

    let mut tensors = Vec::with_capacity(specs.len());
    for (spec, entry) in specs.iter().zip(&header.tensors) {
        if entry.length != spec.numel() * 4 || entry.offset % ALIGN != 0 {
            return Err(ModelError::CorruptArchive(format!(
                "tensor `{}` has bad extent",
                entry.name
            )));
        }
        let raw = payload
            .get(entry.offset..entry.offset + entry.length)
            .ok_or_else(|| ModelError::CorruptArchive(format!("tensor `{}` truncated", entry.name)))?;
        tensors.push(
            raw.chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        );
    }
    let weights = ModelWeights::from_flat(&config, tensors)?;
    Ok((weights, config))
}

pub fn save_weights(weights: &ModelWeights<f32>, config: &ModelConfig, path: impl AsRef<Path>) -> Result<(), ModelError> {
    std::fs::write(path, write_archive(weights, config)?)?;
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<(ModelWeights<f32>, ModelConfig), ModelError> {
    read_archive(&std::fs::read(path)?)
}

/// Hex SHA-256 of archive bytes, used to identify a model.
pub fn archive_fingerprint(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
