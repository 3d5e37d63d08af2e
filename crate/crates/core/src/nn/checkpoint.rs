//! Binary checkpoints: an 8-byte little-endian header length, a JSON
//! header, then every parameter as a little-endian f64.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mlp::MlpModel;
use super::qnet::{QNet, QNetConfig};
use super::{Activation, NnError};
use crate::scalar::Scalar;

pub const CHECKPOINT_FORMAT: u32 = 1;

pub const KIND_MLP: &str = "mlp";
pub const KIND_Q_MODEL: &str = "q_model";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: u32,
    pub kind: String,
    pub seed: u64,
    pub param_count: usize,
    pub architecture: serde_json::Value,
}

pub fn write_checkpoint<W: Write>(mut w: W, header: &CheckpointHeader, params: &[f64]) -> Result<(), NnError> {
    if header.param_count != params.len() {
        return Err(NnError::Checkpoint(format!(
            "header announces {} parameters but {} were given",
            header.param_count,
            params.len()
        )));
    }
    let json = serde_json::to_vec(header).map_err(|e| NnError::Checkpoint(e.to_string()))?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for p in params {
        w.write_all(&p.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(CheckpointHeader, Vec<f64>), NnError> {
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len);
    if len > 1 << 24 {
        return Err(NnError::Checkpoint(format!("implausible header length {len}")));
    }
    let mut json = vec![0u8; len as usize];
    r.read_exact(&mut json)?;
    let header: CheckpointHeader =
        serde_json::from_slice(&json).map_err(|e| NnError::Checkpoint(e.to_string()))?;
    if header.format != CHECKPOINT_FORMAT {
        return Err(NnError::Checkpoint(format!("unsupported format {}", header.format)));
    }
    let mut blob = Vec::new();
    r.read_to_end(&mut blob)?;
    if blob.len() != header.param_count * 8 {
        return Err(NnError::Checkpoint(format!(
            "expected {} parameter bytes, found {}",
            header.param_count * 8,
            blob.len()
        )));
    }
    let params = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok((header, params))
}

pub fn save_file(path: &Path, header: &CheckpointHeader, params: &[f64]) -> Result<(), NnError> {
    write_checkpoint(BufWriter::new(File::create(path)?), header, params)
}

pub fn load_file(path: &Path) -> Result<(CheckpointHeader, Vec<f64>), NnError> {
    let f = File::open(path).map_err(|e| NnError::Checkpoint(format!("{}: {e}", path.display())))?;
    read_checkpoint(BufReader::new(f))
}

fn expect_kind(header: &CheckpointHeader, kind: &str) -> Result<(), NnError> {
    if header.kind != kind {
        return Err(NnError::Checkpoint(format!(
            "expected a '{kind}' checkpoint, found '{}'",
            header.kind
        )));
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct MlpArchitecture {
    widths: Vec<usize>,
    activations: Vec<Activation>,
}

impl<T: Scalar> MlpModel<T> {
    pub fn checkpoint_header(&self, kind: &str) -> CheckpointHeader {
        CheckpointHeader {
            format: CHECKPOINT_FORMAT,
            kind: kind.to_string(),
            seed: self.seed(),
            param_count: self.param_count(),
            architecture: serde_json::to_value(MlpArchitecture {
                widths: self.widths().to_vec(),
                activations: self.activations().to_vec(),
            })
            .expect("architecture serializes"),
        }
    }

    pub fn from_checkpoint(header: &CheckpointHeader, params: &[f64]) -> Result<Self, NnError> {
        let arch: MlpArchitecture = serde_json::from_value(header.architecture.clone())
            .map_err(|e| NnError::Checkpoint(e.to_string()))?;
        Self::from_params(
            &arch.widths,
            &arch.activations,
            header.seed,
            params.iter().map(|p| T::of(*p)).collect(),
        )
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        let params: Vec<f64> = self.params().iter().map(|p| p.as_f64()).collect();
        save_file(path, &self.checkpoint_header(KIND_MLP), &params)
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        let (h, p) = load_file(path)?;
        expect_kind(&h, KIND_MLP)?;
        Self::from_checkpoint(&h, &p)
    }
}

impl<T: Scalar> QNet<T> {
    pub fn checkpoint_header(&self) -> CheckpointHeader {
        CheckpointHeader {
            format: CHECKPOINT_FORMAT,
            kind: KIND_Q_MODEL.to_string(),
            seed: self.seed(),
            param_count: self.param_count(),
            architecture: serde_json::to_value(self.config()).expect("config serializes"),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), NnError> {
        let params: Vec<f64> = self.params().iter().map(|p| p.as_f64()).collect();
        save_file(path, &self.checkpoint_header(), &params)
    }

    pub fn load(path: &Path) -> Result<Self, NnError> {
        let (h, p) = load_file(path)?;
        expect_kind(&h, KIND_Q_MODEL)?;
        let config: QNetConfig =
            serde_json::from_value(h.architecture).map_err(|e| NnError::Checkpoint(e.to_string()))?;
        let params: Vec<T> = p.iter().map(|v| T::of(*v)).collect();
        QNet::from_params(config, h.seed, &params)
    }
}
