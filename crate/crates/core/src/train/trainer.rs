use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Monitor, RunConfig, TrainError};
use crate::data::DtaRecord;
use crate::loss::{batch_objective, LodeState, LossMode, TaskLabels};
use crate::metrics::{Predictor, TaskMetrics};
use crate::nn::{build_model, Checkpoint, Encoder, ModelInput, ModelSpec, NnError};
use crate::optim::Optimizer;
use crate::task::Task;
use crate::tensor::{Tape, Tensor, TensorError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean composite objective over the epoch's batches.
    pub objective: f64,
    /// Mean masked loss per task over batches that had labels for it.
    pub train_loss: BTreeMap<Task, Option<f64>>,
    pub validation_mse: BTreeMap<Task, Option<f64>>,
    /// Mean validation MSE over the monitored tasks.
    pub monitored: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub model: String,
    pub seed: u64,
    pub monitor: Vec<Task>,
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_validation: f64,
    /// Relative to the run directory.
    pub best_checkpoint: String,
}

/// First (1-based) epoch attaining the minimum.
pub fn select_best(monitored: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in monitored.iter().enumerate() {
        if best.map_or(true, |(_, b)| v < b) {
            best = Some((i + 1, v));
        }
    }
    best.map(|(e, _)| e)
}

fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Resolves the monitored tasks against the model and validation data.
pub fn monitored_tasks(spec: &ModelSpec, monitor: &Monitor, validation: &[DtaRecord]) -> Vec<Task> {
    match monitor {
        Monitor::Tasks(t) => t.clone(),
        Monitor::Auto if !spec.is_multitask() => spec.tasks.clone(),
        Monitor::Auto if spec.plus => vec![Task::Kd, Task::Ec50],
        Monitor::Auto => {
            let count = |t: Task| validation.iter().filter(|r| r.label(t).is_some()).count();
            let constants: Vec<Task> = spec.tasks.iter().copied().filter(|t| t.is_constant()).collect();
            let pool = if constants.is_empty() { spec.tasks.clone() } else { constants };
            let best = pool.iter().copied().max_by_key(|&t| (count(t), std::cmp::Reverse(t.index())));
            best.into_iter().collect()
        }
    }
}

/// Model, optimizer and missing-label state for one run.
pub struct Trainer {
    pub checkpoint: Checkpoint,
    pub optimizer: Optimizer,
    pub lode: Option<LodeState>,
    pub weights: Vec<f64>,
    pub mode: LossMode,
    pub batch_size: usize,
    pub seed: u64,
    records: Vec<DtaRecord>,
    inputs: Vec<ModelInput>,
}

fn numeric(e: NnError, epoch: usize, batch: usize) -> TrainError {
    match e {
        NnError::Tensor(TensorError::NonFinite { op }) => TrainError::NonFinite {
            epoch,
            batch,
            detail: format!("non-finite value in {op}"),
        },
        other => TrainError::Model(other),
    }
}

impl Trainer {
    /// Fits the vocabularies on `train` and initializes a fresh model.
    pub fn new(cfg: &RunConfig, train: &[DtaRecord]) -> Result<Self, TrainError> {
        let spec = cfg.validate()?;
        if train.is_empty() {
            return Err(TrainError::Data("training partition is empty".into()));
        }
        let encoder = Encoder::fit(train, spec.drug_branch, cfg.max_drug_len, cfg.max_protein_len)?;
        let model = build_model(&spec, encoder.drug_vocab.size(), encoder.protein_vocab.size(), cfg.seed)?;
        let checkpoint = Checkpoint {
            model,
            encoder,
            seed: cfg.seed,
        };
        Self::from_checkpoint(cfg, checkpoint, train)
    }

    /// Continues from existing weights with fresh optimizer state.
    pub fn from_checkpoint(cfg: &RunConfig, checkpoint: Checkpoint, train: &[DtaRecord]) -> Result<Self, TrainError> {
        let n_tasks = checkpoint.model.tasks().len();
        let optimizer = Optimizer::new(cfg.optim, checkpoint.model.params())?;
        let lode = match cfg.loss_mode {
            LossMode::Lode => Some(LodeState::new(n_tasks, cfg.gamma)?),
            LossMode::Mask => None,
        };
        let inputs = checkpoint.encoder.encode_all(train)?;
        Ok(Self {
            optimizer,
            lode,
            weights: cfg.loss_weights(n_tasks)?,
            mode: cfg.loss_mode,
            batch_size: cfg.batch_size,
            seed: cfg.seed,
            records: train.to_vec(),
            inputs,
            checkpoint,
        })
    }

    pub fn tasks(&self) -> &[Task] {
        self.checkpoint.model.tasks()
    }

    pub fn n_records(&self) -> usize {
        self.records.len()
    }

    /// One optimizer step on the given training indices. Returns the
    /// objective and each task's loss, both measured before the update.
    pub fn step(&mut self, indices: &[usize], epoch: usize, batch: usize) -> Result<(f64, Vec<f64>, Vec<bool>), TrainError> {
        let tasks = self.checkpoint.model.tasks().to_vec();
        let batch_records: Vec<DtaRecord> = indices.iter().map(|&i| self.records[i].clone()).collect();
        let refs: Vec<&ModelInput> = indices.iter().map(|&i| &self.inputs[i]).collect();
        let labels: Vec<TaskLabels> = tasks.iter().map(|&t| TaskLabels::from_records(&batch_records, t)).collect();

        let model = &self.checkpoint.model;
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape, true);
        let outs = model.forward(&mut tape, &bound, &refs).map_err(|e| numeric(e, epoch, batch))?;
        let (objective, per_task) = batch_objective(
            &mut tape,
            self.mode,
            &tasks,
            &outs,
            &labels,
            &self.weights,
            self.lode.as_mut(),
        )
        .map_err(|e| match e {
            crate::loss::LossError::Tensor(TensorError::NonFinite { op }) => TrainError::NonFinite {
                epoch,
                batch,
                detail: format!("non-finite value in {op}"),
            },
            other => TrainError::Loss(other),
        })?;
        let value = tape.value(objective).item();
        let mut grads = tape.backward(objective).map_err(|e| TrainError::NonFinite {
            epoch,
            batch,
            detail: e.to_string(),
        })?;
        let g: Vec<Tensor> = bound.iter().map(|v| grads.take(*v).expect("trainable leaf")).collect();
        self.optimizer
            .step(self.checkpoint.model.params_mut(), &g)
            .map_err(|e| TrainError::NonFinite {
                epoch,
                batch,
                detail: e.to_string(),
            })?;
        let observed = labels.iter().map(|l| l.present_count() > 0).collect();
        Ok((value, per_task, observed))
    }

    /// Shuffles with a seed derived from `(seed, epoch)` and steps through
    /// every batch. Returns the mean objective and per-task mean loss.
    pub fn run_epoch(&mut self, epoch: usize) -> Result<(f64, Vec<Option<f64>>), TrainError> {
        let mut order: Vec<usize> = (0..self.records.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed(self.seed, epoch)));
        let n_tasks = self.tasks().len();
        let (mut sums, mut counts) = (vec![0.0; n_tasks], vec![0usize; n_tasks]);
        let mut total = 0.0;
        let mut n_batches = 0;
        for (b, chunk) in order.chunks(self.batch_size).enumerate() {
            let (obj, per_task, observed) = self.step(chunk, epoch, b)?;
            total += obj;
            n_batches += 1;
            for t in 0..n_tasks {
                if observed[t] {
                    sums[t] += per_task[t];
                    counts[t] += 1;
                }
            }
        }
        let means = sums.iter().zip(&counts).map(|(s, &c)| (c > 0).then(|| s / c as f64)).collect();
        Ok((total / n_batches as f64, means))
    }

    /// Validation MSE per task over present labels.
    pub fn validation_mse(&self, validation: &[DtaRecord]) -> Result<Vec<Option<f64>>, TrainError> {
        validation_mse(&self.checkpoint, validation)
    }
}

pub fn validation_mse(checkpoint: &Checkpoint, validation: &[DtaRecord]) -> Result<Vec<Option<f64>>, TrainError> {
    let preds = checkpoint.predict_records(validation)?;
    checkpoint
        .model
        .tasks()
        .iter()
        .zip(&preds)
        .map(|(&t, p)| {
            let labels: Vec<Option<f64>> = validation.iter().map(|r| r.label(t)).collect();
            Ok(TaskMetrics::compute(t, &labels, p)?.mse)
        })
        .collect()
}

/// Mean over the monitored tasks that have a value.
pub fn monitored_value(tasks: &[Task], monitor: &[Task], mse: &[Option<f64>]) -> Option<f64> {
    let vals: Vec<f64> = monitor
        .iter()
        .filter_map(|m| tasks.iter().position(|t| t == m).and_then(|i| mse[i]))
        .collect();
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}
