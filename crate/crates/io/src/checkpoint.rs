//! Model checkpoint container: named f64 matrices plus the two
//! hyperparameters needed to rebuild the architecture.
//!
//! Layout: magic "WDSM", u32 version, u64 latent width, u64 layer count,
//! u64 tensor count, then per tensor a length-prefixed name, u64 rows,
//! u64 cols and the row-major f64 payload.

use std::path::Path;

use crate::container::{Reader, Writer};
use crate::ContainerError;

const MAGIC: &str = "WDSM";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// Row-major, rows × cols entries.
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointData {
    pub latent_dim: usize,
    pub n_layers: usize,
    pub tensors: Vec<NamedTensor>,
}

pub fn save_checkpoint(path: &Path, ckpt: &CheckpointData) -> Result<(), ContainerError> {
    let mut w = Writer::new(b"WDSM", VERSION);
    w.u64(ckpt.latent_dim as u64);
    w.u64(ckpt.n_layers as u64);
    w.u64(ckpt.tensors.len() as u64);
    for t in &ckpt.tensors {
        debug_assert_eq!(t.data.len(), t.rows * t.cols);
        w.str(&t.name);
        w.u64(t.rows as u64);
        w.u64(t.cols as u64);
        w.f64s(&t.data);
    }
    std::fs::write(path, w.into_bytes())?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<CheckpointData, ContainerError> {
    let bytes = std::fs::read(path)?;
    let mut r = Reader::new(&bytes, MAGIC, VERSION)?;
    let latent_dim = r.u64("latent width")? as usize;
    let n_layers = r.u64("layer count")? as usize;
    let n_tensors = r.count("tensor count", 8)?;
    let mut tensors = Vec::with_capacity(n_tensors);
    for _ in 0..n_tensors {
        let name = r.str("tensor name")?;
        let rows = r.count("tensor rows", 1)?;
        let cols = r.count("tensor cols", 1)?;
        if rows.checked_mul(cols).is_none() || rows * cols > bytes.len() / 8 {
            return Err(ContainerError::BadValue {
                what: "tensor shape",
                value: rows as u64,
            });
        }
        let data = r.f64s(rows * cols, "tensor data")?;
        tensors.push(NamedTensor {
            name,
            rows,
            cols,
            data,
        });
    }
    r.finish()?;
    Ok(CheckpointData {
        latent_dim,
        n_layers,
        tensors,
    })
}
