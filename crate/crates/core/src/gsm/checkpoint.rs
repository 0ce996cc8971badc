//! Binary checkpoint format.
//!
//! ```text
//! offset  size  content
//! 0       8     magic "TGSMCKPT"
//! 8       4     format version, u32 little-endian (currently 1)
//! 12      8     header length H, u64 little-endian
//! 20      H     UTF-8 JSON header (see `Header`)
//! 20+H    8·N   every tensor listed in the header, in order, as row-major
//!               little-endian IEEE-754 f64
//! end-32  32    SHA-256 of all preceding bytes
//! ```
//!
//! Tensors are the learnable parameters in network order followed by the
//! running mean and variance (as `1×w` rows) of every batch-norm layer.

use std::io::Write;
use std::path::Path;

use ndarray::Array1;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::layers::BatchNorm;
use super::network::{build_network, GsmNetwork, Layer};
use super::scaler::TargetScaler;
use crate::autodiff::Matrix;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"TGSMCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    architecture: String,
    heads: usize,
    in_features: usize,
    seed: u64,
    epochs_trained: usize,
    scaler: TargetScaler,
    tensors: Vec<TensorEntry>,
}

fn running_stats(net: &GsmNetwork) -> Vec<(String, Matrix)> {
    let mut out = Vec::new();
    for (i, layer) in net.layers().iter().enumerate() {
        if let Layer::BatchNorm(b) = layer {
            let row = |a: &Array1<f64>| a.clone().insert_axis(ndarray::Axis(0));
            out.push((format!("{i}.batchnorm.running_mean"), row(&b.running_mean)));
            out.push((format!("{i}.batchnorm.running_var"), row(&b.running_var)));
        }
    }
    out
}

pub fn to_bytes(net: &GsmNetwork) -> Result<Vec<u8>> {
    let stats = running_stats(net);
    let mut tensors: Vec<(String, &Matrix)> = net
        .parameter_names()
        .into_iter()
        .zip(net.parameters())
        .collect();
    tensors.extend(stats.iter().map(|(n, m)| (n.clone(), m)));
    let header = Header {
        architecture: net.architecture().to_string(),
        heads: net.heads(),
        in_features: net.in_features(),
        seed: net.seed(),
        epochs_trained: net.epochs_trained(),
        scaler: *net.scaler(),
        tensors: tensors
            .iter()
            .map(|(name, m)| TensorEntry {
                name: name.clone(),
                rows: m.nrows(),
                cols: m.ncols(),
            })
            .collect(),
    };
    let header = serde_json::to_vec(&header)?;
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(header.len() as u64).to_le_bytes());
    buf.extend_from_slice(&header);
    for (_, m) in &tensors {
        for v in m.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    Ok(buf)
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Corrupt(msg.into())
}

pub fn from_bytes(bytes: &[u8]) -> Result<GsmNetwork> {
    if bytes.len() < 20 + 32 {
        return Err(corrupt("checkpoint is truncated"));
    }
    if &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(corrupt("not a checkpoint file (bad magic)"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(corrupt("checksum mismatch (truncated or modified file)"));
    }
    let header_len = u64::from_le_bytes(body[12..20].try_into().expect("8 bytes")) as usize;
    let header_end = 20usize
        .checked_add(header_len)
        .filter(|e| *e <= body.len())
        .ok_or_else(|| corrupt("header length exceeds file"))?;
    let header: Header =
        serde_json::from_slice(&body[20..header_end]).map_err(|e| corrupt(format!("header: {e}")))?;

    let mut net = build_network(&header.architecture, header.heads, header.in_features, header.seed)?;
    net.seed = header.seed;
    net.epochs_trained = header.epochs_trained;
    net.scaler = header.scaler;

    let mut cursor = header_end;
    let mut read = |entry: &TensorEntry| -> Result<Matrix> {
        let n = entry.rows * entry.cols;
        let end = cursor + 8 * n;
        if end > body.len() {
            return Err(corrupt(format!("tensor {} runs past the end of the file", entry.name)));
        }
        let values: Vec<f64> = body[cursor..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        cursor = end;
        Matrix::from_shape_vec((entry.rows, entry.cols), values).map_err(|e| corrupt(e.to_string()))
    };

    let names = net.parameter_names();
    let stats_names: Vec<String> = running_stats(&net).into_iter().map(|(n, _)| n).collect();
    if header.tensors.len() != names.len() + stats_names.len() {
        return Err(corrupt(format!(
            "{} tensors stored, architecture needs {}",
            header.tensors.len(),
            names.len() + stats_names.len()
        )));
    }
    let (param_entries, stat_entries) = header.tensors.split_at(names.len());
    let mut loaded = Vec::with_capacity(names.len());
    for (entry, expected) in param_entries.iter().zip(&names) {
        if &entry.name != expected {
            return Err(corrupt(format!("expected tensor {expected}, found {}", entry.name)));
        }
        loaded.push(read(entry)?);
    }
    for (slot, value) in net.parameters_mut().into_iter().zip(loaded) {
        if slot.dim() != value.dim() {
            return Err(corrupt(format!("tensor shape {:?} vs {:?}", value.dim(), slot.dim())));
        }
        *slot = value;
    }
    let mut stats = Vec::with_capacity(stat_entries.len());
    for (entry, expected) in stat_entries.iter().zip(&stats_names) {
        if &entry.name != expected {
            return Err(corrupt(format!("expected tensor {expected}, found {}", entry.name)));
        }
        stats.push(read(entry)?);
    }
    let mut it = stats.into_iter();
    for layer in net.layers_mut() {
        if let Layer::BatchNorm(b) = layer {
            let BatchNorm {
                running_mean,
                running_var,
                ..
            } = b;
            for slot in [running_mean, running_var] {
                let m = it.next().expect("count checked");
                if m.dim() != (1, slot.len()) {
                    return Err(corrupt("running statistics shape"));
                }
                *slot = m.row(0).to_owned();
            }
        }
    }
    if cursor != body.len() {
        return Err(corrupt("trailing bytes after tensors"));
    }
    Ok(net)
}

pub fn save_checkpoint(net: &GsmNetwork, path: impl AsRef<Path>) -> Result<()> {
    let bytes = to_bytes(net)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<GsmNetwork> {
    from_bytes(&std::fs::read(path)?)
}

/// Loads a checkpoint and checks that its architecture string matches.
pub fn load_checkpoint_for(path: impl AsRef<Path>, architecture: &str) -> Result<GsmNetwork> {
    let net = load_checkpoint(path)?;
    if net.architecture() != architecture {
        return Err(Error::ArchitectureMismatch {
            found: net.architecture().to_string(),
            expected: architecture.to_string(),
        });
    }
    Ok(net)
}
