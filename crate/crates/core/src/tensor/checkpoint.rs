//! Versioned JSON checkpoints. Values are written with shortest round-trip
//! decimal formatting and parsed back exactly, so save/load is bit-exact for
//! finite doubles.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ParamStore, Tensor, TensorError};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub name: String,
    pub shape: [usize; 2],
    pub values: Vec<f64>,
    #[serde(default = "default_true")]
    pub trainable: bool,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRecord {
    pub name: String,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct OptimizerState {
    pub step: u64,
    pub moments: Vec<MomentRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub rng_seed: u64,
    pub params: Vec<ParamRecord>,
    pub optimizer_state: OptimizerState,
    /// Model-level data (configuration, vocabulary, recorded metrics).
    #[serde(default)]
    pub metadata: serde_json::Value,
}

impl Checkpoint {
    pub fn capture(store: &ParamStore, rng_seed: u64, metadata: serde_json::Value) -> Result<Self, TensorError> {
        let mut params = Vec::with_capacity(store.len());
        let mut moments = Vec::with_capacity(store.len());
        for p in store.params() {
            if !p.value.all_finite() {
                return Err(TensorError::NonFinite(p.name.clone()));
            }
            params.push(ParamRecord {
                name: p.name.clone(),
                shape: p.value.shape(),
                values: p.value.data().to_vec(),
                trainable: p.trainable,
            });
            moments.push(MomentRecord {
                name: p.name.clone(),
                m: p.m.data().to_vec(),
                v: p.v.data().to_vec(),
            });
        }
        Ok(Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            rng_seed,
            params,
            optimizer_state: OptimizerState {
                step: store.step(),
                moments,
            },
            metadata,
        })
    }

    pub fn restore(&self) -> Result<ParamStore, TensorError> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(TensorError::Checkpoint(format!(
                "unsupported format_version {}",
                self.format_version
            )));
        }
        let mut store = ParamStore::new();
        for rec in &self.params {
            let [r, c] = rec.shape;
            if rec.values.len() != r * c {
                return Err(TensorError::Checkpoint(format!(
                    "parameter {} has {} values for shape {r}x{c}",
                    rec.name,
                    rec.values.len()
                )));
            }
            store.add(&rec.name, Tensor::new(r, c, rec.values.clone()), rec.trainable)?;
        }
        for mom in &self.optimizer_state.moments {
            let id = store
                .id(&mom.name)
                .ok_or_else(|| TensorError::Checkpoint(format!("moments for unknown parameter {}", mom.name)))?;
            let p = store.param_mut(id);
            if mom.m.len() != p.value.len() || mom.v.len() != p.value.len() {
                return Err(TensorError::Checkpoint(format!(
                    "moment shape mismatch for {}",
                    mom.name
                )));
            }
            let (r, c) = (p.value.rows(), p.value.cols());
            p.m = Tensor::new(r, c, mom.m.clone());
            p.v = Tensor::new(r, c, mom.v.clone());
        }
        store.set_step(self.optimizer_state.step);
        Ok(store)
    }

    pub fn to_json(&self) -> Result<String, TensorError> {
        serde_json::to_string(self).map_err(|e| TensorError::Checkpoint(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, TensorError> {
        serde_json::from_str(text).map_err(|e| TensorError::Checkpoint(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), TensorError> {
        std::fs::write(path, self.to_json()?).map_err(|e| TensorError::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, TensorError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| TensorError::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}
