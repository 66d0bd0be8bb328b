//! Embedding store files: one JSON manifest line (version, count, dim,
//! model kind, checkpoint hash, id list) followed by the raw little-endian
//! IEEE-754 float32 matrix in id order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::EmbeddingSet;

pub const STORE_FORMAT: &str = "scenario-embedding-store";
pub const STORE_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    count: usize,
    dim: usize,
    model: String,
    checkpoint_sha256: String,
    ids: Vec<String>,
}

/// A loaded embedding store. Labels are not persisted here; they live with
/// the scenario records.
pub struct LoadedStore {
    pub ids: Vec<String>,
    pub vectors: Array2<f64>,
    pub model: String,
    pub checkpoint_sha256: String,
}

pub fn write_store(
    path: &Path,
    set: &EmbeddingSet,
    model: &str,
    checkpoint_sha256: &str,
) -> Result<()> {
    let manifest = Manifest {
        format: STORE_FORMAT.into(),
        version: STORE_VERSION,
        count: set.len(),
        dim: set.vectors.ncols(),
        model: model.into(),
        checkpoint_sha256: checkpoint_sha256.into(),
        ids: set.ids.clone(),
    };
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, &manifest)?;
    w.write_all(b"\n")?;
    for v in set.vectors.iter() {
        w.write_all(&(*v as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_store(path: &Path) -> Result<LoadedStore> {
    let mut r = BufReader::new(File::open(path)?);
    let mut header = Vec::new();
    loop {
        let mut byte = [0u8; 1];
        r.read_exact(&mut byte)?;
        if byte[0] == b'\n' {
            break;
        }
        header.push(byte[0]);
    }
    let manifest: Manifest = serde_json::from_slice(&header)?;
    if manifest.format != STORE_FORMAT || manifest.version != STORE_VERSION {
        return Err(Error::Store(format!(
            "unsupported store header in {}",
            path.display()
        )));
    }
    if manifest.ids.len() != manifest.count {
        return Err(Error::Store("manifest count and id list disagree".into()));
    }
    let mut buf = vec![0u8; manifest.count * manifest.dim * 4];
    r.read_exact(&mut buf).map_err(|_| {
        Error::Store(format!(
            "store body shorter than count * dim * 4 = {} bytes",
            buf.len()
        ))
    })?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::Store("trailing bytes after embedding matrix".into()));
    }
    let data: Vec<f64> = buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    let vectors = Array2::from_shape_vec((manifest.count, manifest.dim), data)
        .map_err(|e| Error::Store(e.to_string()))?;
    Ok(LoadedStore {
        ids: manifest.ids,
        vectors,
        model: manifest.model,
        checkpoint_sha256: manifest.checkpoint_sha256,
    })
}
