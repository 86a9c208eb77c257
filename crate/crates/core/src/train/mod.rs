//! Orchestration behind the command-line tool: dataset preparation,
//! training with validation-based model selection, evaluation and
//! prediction.

mod commands;
mod config;
mod prepare;
mod trainer;

pub use commands::{cmd_eval, cmd_predict, cmd_prepare, cmd_train, run_training, write_learning_curve, EvalOutput};
pub use config::{parse_config_text, parse_override, ConfigError, Monitor, RunConfig, CONFIG_KEYS};
pub use prepare::{prepare_dataset, write_split, PrepareOptions, Subset};
pub use trainer::{monitored_tasks, monitored_value, select_best, validation_mse, EpochLog, TrainLog, Trainer};

use thiserror::Error;

use crate::data::DataError;
use crate::loss::LossError;
use crate::metrics::MetricError;
use crate::nn::NnError;
use crate::optim::OptimError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Pipeline(#[from] DataError),
    #[error(transparent)]
    Model(#[from] NnError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("epoch {epoch}, batch {batch}: {detail}")]
    NonFinite { epoch: usize, batch: usize, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

impl TrainError {
    /// 2 for configuration errors, 3 for data errors, 4 for numeric
    /// failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            TrainError::Config(_) | TrainError::Optim(_) => EXIT_CONFIG,
            TrainError::Model(NnError::InvalidSpec(_) | NnError::UnknownModel(_)) => EXIT_CONFIG,
            TrainError::NonFinite { .. } | TrainError::Loss(_) => EXIT_NUMERIC,
            _ => EXIT_DATA,
        }
    }
}
