//! Training, evaluation and ablation runs.

mod ablation;
mod metrics;
mod prepare;
mod train;

pub use ablation::{run_ablations, AblationReport, AblationRow, StructureCheck, Variant};
pub use metrics::{argmax_first, decode, full_metric, hits_at_1, MetricsReport, Prediction, QuestionRecord};
pub use prepare::{prepare_example, PreparedExample};
pub use train::{
    config_digest, evaluate, split_dev, train, train_with_progress, EpochRecord, ModelBundle, TrainOutcome,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graphbuild::{GraphError, GraphOptions};
use crate::kbstore::{KbError, DEFAULT_NODE_BUDGET};
use crate::model::ModelError;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("non-finite {what} at epoch {epoch}; try a smaller learning rate (current {lr})")]
    NumericFailure { what: String, epoch: usize, lr: f64 },
    #[error("vocabulary mismatch: {0}")]
    VocabMismatch(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("training set is empty")]
    EmptyTrainSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    /// Graphs whose gradients are averaged per optimizer step.
    pub batch_size: usize,
    /// Stop after this many epochs without a dev improvement.
    pub patience: Option<usize>,
    pub graph: GraphOptions,
    pub node_budget: usize,
    /// Share of training questions held out when no dev set is given.
    pub dev_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            lr: 1e-3,
            seed: 0,
            batch_size: 1,
            patience: None,
            graph: GraphOptions::default(),
            node_budget: DEFAULT_NODE_BUDGET,
            dev_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.epochs == 0 {
            return Err(HarnessError::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(HarnessError::InvalidConfig("batch size must be at least 1".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(HarnessError::InvalidConfig(format!("learning rate {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.dev_fraction) {
            return Err(HarnessError::InvalidConfig(format!(
                "dev fraction {}",
                self.dev_fraction
            )));
        }
        Ok(())
    }
}
