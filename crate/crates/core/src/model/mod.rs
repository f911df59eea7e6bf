//! The reasoning network: distance-aware node initialization, LSTM question
//! encoding, stacked gated graph convolutions and per-node answer
//! classification.

mod network;
mod vocab;

pub use network::{node_labels, ForwardOutput, GraphInput, Rdas};
pub use vocab::{load_word_vectors, Vocab, UNK};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("question has no tokens")]
    EmptyQuestion,
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("missing parameter {0}")]
    MissingParam(String),
    #[error("parameter {name} has unexpected shape {shape:?}")]
    ParamShape { name: String, shape: [usize; 2] },
    #[error("{labels} labels for {nodes} nodes")]
    LabelMismatch { nodes: usize, labels: usize },
    #[error("{0}")]
    Io(String),
}

/// Nonlinearity applied to the update message before gating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phi {
    #[default]
    Tanh,
    Sigmoid,
    Relu,
}

impl std::str::FromStr for Phi {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tanh" => Ok(Phi::Tanh),
            "sigmoid" => Ok(Phi::Sigmoid),
            "relu" => Ok(Phi::Relu),
            other => Err(format!("unknown nonlinearity {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Word and distance embedding size.
    pub word_dim: usize,
    /// LSTM hidden size.
    pub hidden: usize,
    pub layers: usize,
    pub dropout: f64,
    /// Hop distances above this share the last distance embedding.
    pub max_distance: usize,
    pub phi: Phi,
    pub no_distance_embedding: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            word_dim: 100,
            hidden: 100,
            layers: 2,
            dropout: 0.1,
            max_distance: 8,
            phi: Phi::Tanh,
            no_distance_embedding: false,
        }
    }
}

impl ModelConfig {
    /// Every layer runs at `word_dim + hidden`.
    pub fn gcn_width(&self) -> usize {
        self.word_dim + self.hidden
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.layers == 0 {
            return Err(ModelError::InvalidConfig("layers must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::InvalidConfig(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        if self.word_dim == 0 || self.hidden == 0 {
            return Err(ModelError::InvalidConfig("dimensions must be positive".into()));
        }
        Ok(())
    }
}
