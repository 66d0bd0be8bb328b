//! Checkpoint files: a JSON manifest line describing every named tensor,
//! followed by raw little-endian f64 data in manifest order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::encoder::EncoderDims;
use crate::error::{Error, Result};
use crate::graph::BuilderConfig;
use crate::nn::ParamStore;

pub const CHECKPOINT_FORMAT: &str = "scenario-embed-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorMeta {
    name: String,
    rows: usize,
    cols: usize,
    trainable: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    model_kind: String,
    encoder: EncoderDims,
    builder: BuilderConfig,
    tensors: Vec<TensorMeta>,
}

/// A loaded checkpoint: parameters plus the configuration echo.
pub struct Checkpoint {
    pub params: ParamStore,
    pub model_kind: String,
    pub encoder: EncoderDims,
    pub builder: BuilderConfig,
}

pub fn save_checkpoint(
    path: &Path,
    params: &ParamStore,
    model_kind: &str,
    encoder: &EncoderDims,
    builder: &BuilderConfig,
) -> Result<()> {
    let manifest = Manifest {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        model_kind: model_kind.into(),
        encoder: encoder.clone(),
        builder: builder.clone(),
        tensors: params
            .entries()
            .iter()
            .map(|e| TensorMeta {
                name: e.name.clone(),
                rows: e.value.nrows(),
                cols: e.value.ncols(),
                trainable: e.trainable,
            })
            .collect(),
    };
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, &manifest)?;
    w.write_all(b"\n")?;
    for e in params.entries() {
        for v in e.value.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
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
    if manifest.format != CHECKPOINT_FORMAT || manifest.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint header in {}",
            path.display()
        )));
    }
    let mut params = ParamStore::new();
    for t in &manifest.tensors {
        let mut buf = vec![0u8; t.rows * t.cols * 8];
        r.read_exact(&mut buf)?;
        let data: Vec<f64> = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let value = Array2::from_shape_vec((t.rows, t.cols), data)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        params.insert(&t.name, value, t.trainable);
    }
    Ok(Checkpoint {
        params,
        model_kind: manifest.model_kind,
        encoder: manifest.encoder,
        builder: manifest.builder,
    })
}

/// SHA-256 of a checkpoint file, recorded in embedding-store manifests.
pub fn checkpoint_sha256(path: &Path) -> Result<String> {
    use sha2::{Digest, Sha256};
    let bytes = std::fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}
