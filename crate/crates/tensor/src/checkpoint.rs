//! Single-file parameter checkpoints.
//!
//! Layout: one line of compact JSON ([`CheckpointHeader`]) terminated by
//! `\n`, followed by every parameter's values as little-endian floats,
//! concatenated in header order.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::element::Element;
use crate::error::{Result, TensorError};
use crate::params::ParamStore;
use crate::rng::RngState;
use crate::tensor::Tensor;

pub const FORMAT: &str = "emojinet-checkpoint/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub dtype: String,
    pub params: Vec<ParamEntry>,
    pub rng: Option<RngState>,
    pub vocab_hash: Option<String>,
    /// Free-form metadata, e.g. the model configuration.
    #[serde(default)]
    pub meta: serde_json::Value,
}

pub fn save<T: Element>(
    path: &Path,
    params: &ParamStore<T>,
    rng: Option<RngState>,
    vocab_hash: Option<String>,
    meta: serde_json::Value,
) -> Result<()> {
    let header = CheckpointHeader {
        format: FORMAT.to_string(),
        dtype: T::DTYPE.to_string(),
        params: params
            .iter()
            .map(|p| ParamEntry {
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
            })
            .collect(),
        rng,
        vocab_hash,
        meta,
    };
    let mut buf = serde_json::to_vec(&header)?;
    buf.push(b'\n');
    buf.reserve(params.num_elements() * T::BYTES);
    for p in params.iter() {
        for &v in p.value.data() {
            v.write_le(&mut buf);
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn read_header(path: &Path) -> Result<CheckpointHeader> {
    let mut reader = BufReader::new(fs::File::open(path)?);
    read_header_from(&mut reader)
}

fn read_header_from<R: BufRead>(reader: &mut R) -> Result<CheckpointHeader> {
    let mut line = Vec::new();
    reader.read_until(b'\n', &mut line)?;
    if line.last() != Some(&b'\n') {
        return Err(TensorError::Checkpoint("missing header terminator".into()));
    }
    let header: CheckpointHeader = serde_json::from_slice(&line[..line.len() - 1])?;
    if header.format != FORMAT {
        return Err(TensorError::Checkpoint(format!("unsupported format {:?}", header.format)));
    }
    Ok(header)
}

/// Reads a checkpoint back into a fresh store, in header order.
pub fn load<T: Element>(path: &Path) -> Result<(CheckpointHeader, ParamStore<T>)> {
    let mut reader = BufReader::new(fs::File::open(path)?);
    let header = read_header_from(&mut reader)?;
    if header.dtype != T::DTYPE {
        return Err(TensorError::Checkpoint(format!(
            "checkpoint holds {} values, expected {}",
            header.dtype,
            T::DTYPE
        )));
    }
    let mut body = Vec::new();
    reader.read_to_end(&mut body)?;
    let expected: usize = header.params.iter().map(|p| p.shape.iter().product::<usize>()).sum();
    if body.len() != expected * T::BYTES {
        return Err(TensorError::Checkpoint(format!(
            "body has {} bytes, header describes {}",
            body.len(),
            expected * T::BYTES
        )));
    }
    let mut store = ParamStore::new();
    let mut chunks = body.chunks_exact(T::BYTES);
    for entry in &header.params {
        let n: usize = entry.shape.iter().product();
        let data: Vec<T> = chunks.by_ref().take(n).map(T::read_le).collect();
        store.add(entry.name.clone(), Tensor::new(entry.shape.clone(), data)?);
    }
    Ok((header, store))
}
