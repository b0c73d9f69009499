use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, Array3};
use serde::{Deserialize, Serialize};

use super::params::{TihmmParams, TransitionMode, N_SYMBOLS};
use crate::error::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Training provenance stored alongside the logits.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub seed: u64,
    pub trained_with_dp: bool,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub sigma: Option<f64>,
    pub clip: Option<f64>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

/// On-disk JSON layout of a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    #[serde(rename = "H")]
    pub n_states: usize,
    #[serde(rename = "L")]
    pub seq_len: usize,
    pub mode: TransitionMode,
    pub prior_logits: Vec<f64>,
    pub emission_logits: Vec<Vec<f64>>,
    pub transition_logits: Vec<Vec<Vec<f64>>>,
    pub metadata: ModelMetadata,
}

impl ModelFile {
    pub fn from_params(params: &TihmmParams, metadata: ModelMetadata) -> Result<Self> {
        if params.to_flat().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(
                "models with -inf logits cannot be serialized".into(),
            ));
        }
        Ok(Self {
            format_version: MODEL_FORMAT_VERSION,
            n_states: params.n_states(),
            seq_len: params.seq_len(),
            mode: params.mode(),
            prior_logits: params.prior_logits().to_vec(),
            emission_logits: params
                .emission_logits()
                .outer_iter()
                .map(|r| r.to_vec())
                .collect(),
            transition_logits: params
                .transition_logits()
                .outer_iter()
                .map(|s| s.outer_iter().map(|r| r.to_vec()).collect())
                .collect(),
            metadata,
        })
    }

    pub fn to_params(&self) -> Result<TihmmParams> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported model format version {}",
                self.format_version
            )));
        }
        let h = self.n_states;
        let flat_e: Vec<f64> = self.emission_logits.iter().flatten().copied().collect();
        if self.emission_logits.iter().any(|r| r.len() != N_SYMBOLS) {
            return Err(Error::shape("emission rows must have 3 entries"));
        }
        let slices = self.transition_logits.len();
        if self
            .transition_logits
            .iter()
            .any(|s| s.len() != h || s.iter().any(|r| r.len() != h))
        {
            return Err(Error::shape(format!("transition slices must be {h}x{h}")));
        }
        let flat_t: Vec<f64> = self
            .transition_logits
            .iter()
            .flatten()
            .flatten()
            .copied()
            .collect();
        let emission = Array2::from_shape_vec((self.emission_logits.len(), N_SYMBOLS), flat_e)
            .map_err(|e| Error::shape(e.to_string()))?;
        let transition = Array3::from_shape_vec((slices, h, h), flat_t)
            .map_err(|e| Error::shape(e.to_string()))?;
        TihmmParams::new(
            self.seq_len,
            self.mode,
            Array1::from(self.prior_logits.clone()),
            emission,
            transition,
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

pub fn save_model(path: impl AsRef<Path>, params: &TihmmParams, metadata: ModelMetadata) -> Result<()> {
    let path = path.as_ref();
    let json = ModelFile::from_params(params, metadata)?.to_json()?;
    fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(TihmmParams, ModelMetadata)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file = ModelFile::from_json(&text)?;
    Ok((file.to_params()?, file.metadata))
}
