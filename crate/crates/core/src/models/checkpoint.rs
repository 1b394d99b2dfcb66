//! Model checkpoints.
//!
//! A checkpoint is one JSON document:
//!
//! ```text
//! {
//!   "format": "mvcca-checkpoint/1",
//!   "config_hash": "<hex>",
//!   "config": { ...TrainConfig... },
//!   "encoders": [
//!     { "kind": "mlp",
//!       "layers": [ { "rows": R, "cols": C,
//!                     "weight": [R*C values, row-major],
//!                     "bias": [R values] | null } ] }
//!   ]
//! }
//! ```
//!
//! Floats are written in shortest round-trip form, so loading restores every
//! parameter bit for bit.

use std::fs;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dataset::write_atomic;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::models::encoder::{Encoder, EncoderKind, Layer};
use crate::models::train::TrainConfig;

pub const CHECKPOINT_FORMAT: &str = "mvcca-checkpoint/1";

#[derive(Debug, Serialize, Deserialize)]
struct LayerRecord {
    rows: usize,
    cols: usize,
    weight: Vec<f64>,
    bias: Option<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EncoderRecord {
    kind: EncoderKind,
    layers: Vec<LayerRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    config_hash: String,
    config: TrainConfig,
    encoders: Vec<EncoderRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config_hash: String,
    pub config: TrainConfig,
    pub encoders: Vec<Encoder>,
}

fn to_record(enc: &Encoder) -> EncoderRecord {
    EncoderRecord {
        kind: enc.kind(),
        layers: enc
            .layers()
            .iter()
            .map(|l| LayerRecord {
                rows: l.weight.nrows(),
                cols: l.weight.ncols(),
                weight: l.weight.transpose().as_slice().to_vec(),
                bias: l.bias.as_ref().map(|b| b.as_slice().to_vec()),
            })
            .collect(),
    }
}

fn from_record(rec: EncoderRecord) -> Result<Encoder> {
    let layers = rec
        .layers
        .into_iter()
        .map(|l| {
            if l.weight.len() != l.rows * l.cols {
                return Err(Error::contract(format!(
                    "layer claims {}x{} but holds {} weights",
                    l.rows,
                    l.cols,
                    l.weight.len()
                )));
            }
            if l.bias.as_ref().is_some_and(|b| b.len() != l.rows) {
                return Err(Error::contract("bias length does not match layer rows"));
            }
            Ok(Layer {
                weight: Matrix::from_row_slice(l.rows, l.cols, &l.weight),
                bias: l.bias.map(DVector::from_vec),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Encoder::new(rec.kind, layers)
}

impl Checkpoint {
    pub fn to_json(&self) -> Result<String> {
        let file = CheckpointFile {
            format: CHECKPOINT_FORMAT.to_string(),
            config_hash: self.config_hash.clone(),
            config: self.config.clone(),
            encoders: self.encoders.iter().map(to_record).collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CheckpointFile = serde_json::from_str(text)?;
        if file.format != CHECKPOINT_FORMAT {
            return Err(Error::contract(format!("unsupported checkpoint format {:?}", file.format)));
        }
        Ok(Checkpoint {
            config_hash: file.config_hash,
            config: file.config,
            encoders: file.encoders.into_iter().map(from_record).collect::<Result<_>>()?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::parse(path, e.to_string()))
    }
}
