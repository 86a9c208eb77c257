//! Objectives over batches in which most labels are missing.
//!
//! Two modes. Masking drops missing positions from each task's loss. LODE
//! (last observed discounted error) does the same when a batch holds at least
//! one label for a task; when it holds none, the task contributes
//! `γ · last_error`, the most recent observed loss for that task, as a
//! constant.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::DtaRecord;
use crate::task::Task;
use crate::tensor::{Tape, Tensor, TensorError, Var};

/// Lower clamp for predicted probabilities in the cross-entropy.
pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("expected {expected} weights, got {found}")]
    WeightCount { expected: usize, found: usize },
    #[error("prediction has {pred} entries but there are {labels} labels")]
    LabelLength { pred: usize, labels: usize },
    #[error("discount must lie in (0, 1], got {0}")]
    InvalidGamma(f64),
    #[error("unknown loss mode {0:?}")]
    UnknownMode(String),
}

/// One task's labels for a batch. Values at absent positions are never read.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskLabels {
    values: Vec<f64>,
    present: Vec<bool>,
}

impl TaskLabels {
    pub fn from_options(labels: &[Option<f64>]) -> Self {
        Self {
            values: labels.iter().map(|l| l.unwrap_or(0.0)).collect(),
            present: labels.iter().map(Option::is_some).collect(),
        }
    }

    pub fn from_records(records: &[DtaRecord], task: Task) -> Self {
        let labels: Vec<Option<f64>> = records.iter().map(|r| r.label(task)).collect();
        Self::from_options(&labels)
    }

    pub fn len(&self) -> usize {
        self.present.len()
    }

    pub fn is_empty(&self) -> bool {
        self.present.is_empty()
    }

    pub fn present_count(&self) -> usize {
        self.present.iter().filter(|p| **p).count()
    }

    pub fn present_mask(&self) -> &[bool] {
        &self.present
    }

    fn present_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.present[i]).collect()
    }

    fn present_values(&self) -> Vec<f64> {
        (0..self.len()).filter(|&i| self.present[i]).map(|i| self.values[i]).collect()
    }
}

/// Gathers the present positions of `pred`, or `None` when no label is
/// present.
fn present_slice(tape: &mut Tape, pred: Var, labels: &TaskLabels) -> Result<Option<(Var, Var)>, LossError> {
    let n = tape.value(pred).len();
    if n != labels.len() {
        return Err(LossError::LabelLength {
            pred: n,
            labels: labels.len(),
        });
    }
    let idx = labels.present_indices();
    if idx.is_empty() {
        return Ok(None);
    }
    let p = tape.gather(pred, &idx)?;
    let y = tape.constant(Tensor::vector(labels.present_values()));
    Ok(Some((p, y)))
}

/// Mean squared error over present positions; a constant 0 when none are
/// present.
pub fn masked_mse(tape: &mut Tape, pred: Var, labels: &TaskLabels) -> Result<Var, LossError> {
    let Some((p, y)) = present_slice(tape, pred, labels)? else {
        return Ok(tape.constant(Tensor::scalar(0.0)));
    };
    let diff = tape.sub(p, y)?;
    let sq = tape.mul(diff, diff)?;
    Ok(tape.mean(sq)?)
}

/// Mean binary cross-entropy over present positions, with predictions
/// clamped to `[1e-12, 1 - 1e-12]`; a constant 0 when none are present.
pub fn masked_bce(tape: &mut Tape, pred: Var, labels: &TaskLabels) -> Result<Var, LossError> {
    let Some((p, y)) = present_slice(tape, pred, labels)? else {
        return Ok(tape.constant(Tensor::scalar(0.0)));
    };
    let k = tape.value(p).len();
    let p = tape.clamp(p, PROB_CLAMP, 1.0 - PROB_CLAMP)?;
    let ones = tape.constant(Tensor::full(&[k], 1.0));
    let q = tape.sub(ones, p)?;
    let not_y = tape.sub(ones, y)?;
    let ln_p = tape.ln(p)?;
    let ln_q = tape.ln(q)?;
    let a = tape.mul(y, ln_p)?;
    let b = tape.mul(not_y, ln_q)?;
    let ll = tape.add(a, b)?;
    let mean = tape.mean(ll)?;
    Ok(tape.scale(mean, -1.0)?)
}

/// Cross-entropy for the activity head, squared error for everything else.
pub fn task_loss(tape: &mut Tape, task: Task, pred: Var, labels: &TaskLabels) -> Result<Var, LossError> {
    if task.is_binary() {
        masked_bce(tape, pred, labels)
    } else {
        masked_mse(tape, pred, labels)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LodeTaskState {
    pub last_error: f64,
    pub observed_once: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LodeState {
    pub gamma: f64,
    pub tasks: Vec<LodeTaskState>,
}

pub const DEFAULT_GAMMA: f64 = 0.5;

impl LodeState {
    pub fn new(n_tasks: usize, gamma: f64) -> Result<Self, LossError> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(LossError::InvalidGamma(gamma));
        }
        Ok(Self {
            gamma,
            tasks: vec![LodeTaskState::default(); n_tasks],
        })
    }
}

/// The task's masked loss when the batch has a label for it, otherwise the
/// constant `gamma * last_error` (0 before the first observation). The
/// discount is not compounded across consecutive empty batches.
pub fn lode_loss(
    tape: &mut Tape,
    task: Task,
    pred: Var,
    labels: &TaskLabels,
    state: &mut LodeTaskState,
    gamma: f64,
) -> Result<Var, LossError> {
    if labels.present_count() == 0 {
        let n = tape.value(pred).len();
        if n != labels.len() {
            return Err(LossError::LabelLength {
                pred: n,
                labels: labels.len(),
            });
        }
        let substitute = if state.observed_once { gamma * state.last_error } else { 0.0 };
        return Ok(tape.constant(Tensor::scalar(substitute)));
    }
    let loss = task_loss(tape, task, pred, labels)?;
    state.last_error = tape.value(loss).item();
    state.observed_once = true;
    Ok(loss)
}

/// `Σ w_t · L_t`.
pub fn composite_loss(tape: &mut Tape, losses: &[Var], weights: &[f64]) -> Result<Var, LossError> {
    if losses.len() != weights.len() || losses.is_empty() {
        return Err(LossError::WeightCount {
            expected: losses.len(),
            found: weights.len(),
        });
    }
    let mut total = tape.scale(losses[0], weights[0])?;
    for (&l, &w) in losses.iter().zip(weights).skip(1) {
        let term = tape.scale(l, w)?;
        total = tape.add(total, term)?;
    }
    Ok(total)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossMode {
    Mask,
    Lode,
}

impl std::str::FromStr for LossMode {
    type Err = LossError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mask" => Ok(LossMode::Mask),
            "lode" => Ok(LossMode::Lode),
            _ => Err(LossError::UnknownMode(s.to_string())),
        }
    }
}

/// Composite objective over every head, plus each task's loss value.
/// `lode` is required in LODE mode and ignored when masking.
pub fn batch_objective(
    tape: &mut Tape,
    mode: LossMode,
    tasks: &[Task],
    outputs: &[Var],
    labels: &[TaskLabels],
    weights: &[f64],
    lode: Option<&mut LodeState>,
) -> Result<(Var, Vec<f64>), LossError> {
    if outputs.len() != tasks.len() || labels.len() != tasks.len() {
        return Err(LossError::WeightCount {
            expected: tasks.len(),
            found: outputs.len().min(labels.len()),
        });
    }
    let mut losses = Vec::with_capacity(tasks.len());
    match (mode, lode) {
        (LossMode::Lode, Some(state)) => {
            if state.tasks.len() != tasks.len() {
                return Err(LossError::WeightCount {
                    expected: tasks.len(),
                    found: state.tasks.len(),
                });
            }
            let gamma = state.gamma;
            for (i, &task) in tasks.iter().enumerate() {
                losses.push(lode_loss(tape, task, outputs[i], &labels[i], &mut state.tasks[i], gamma)?);
            }
        }
        _ => {
            for (i, &task) in tasks.iter().enumerate() {
                losses.push(task_loss(tape, task, outputs[i], &labels[i])?);
            }
        }
    }
    let values = losses.iter().map(|l| tape.value(*l).item()).collect();
    Ok((composite_loss(tape, &losses, weights)?, values))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(v: &[Option<f64>]) -> TaskLabels {
        TaskLabels::from_options(v)
    }

    fn mse_value(pred: &[f64], l: &TaskLabels) -> f64 {
        let mut tape = Tape::new();
        let p = tape.param(Tensor::vector(pred.to_vec()));
        let loss = masked_mse(&mut tape, p, l).unwrap();
        tape.value(loss).item()
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse_value(&[1.0, 2.0], &labels(&[Some(1.0), None])), 0.0);
        assert_eq!(mse_value(&[2.0, 5.0], &labels(&[Some(1.0), None])), 1.0);

        let mut tape = Tape::new();
        let p = tape.param(Tensor::vector(vec![3.0, -1.0]));
        let loss = masked_mse(&mut tape, p, &labels(&[None, None])).unwrap();
        assert_eq!(tape.value(loss).item(), 0.0);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(p).unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn bce_examples() {
        let bce = |p: f64, y: f64| {
            let mut tape = Tape::new();
            let v = tape.constant(Tensor::vector(vec![p]));
            let l = masked_bce(&mut tape, v, &labels(&[Some(y)])).unwrap();
            tape.value(l).item()
        };
        assert!((bce(0.5, 1.0) - std::f64::consts::LN_2).abs() < 1e-15);
        let clamped = bce(0.0, 1.0);
        assert!(clamped.is_finite());
        assert!((clamped + PROB_CLAMP.ln()).abs() < 1e-9);
        let mut tape = Tape::new();
        let v = tape.constant(Tensor::vector(vec![0.3, 0.9]));
        let l = masked_bce(&mut tape, v, &labels(&[None, None])).unwrap();
        assert_eq!(tape.value(l).item(), 0.0);
    }

    #[test]
    fn missing_positions_get_zero_gradient() {
        let mut tape = Tape::new();
        let p = tape.param(Tensor::vector(vec![0.2, 0.7, 0.4, 0.9]));
        let l1 = masked_mse(&mut tape, p, &labels(&[Some(1.0), None, Some(0.0), None])).unwrap();
        let l2 = masked_bce(&mut tape, p, &labels(&[None, Some(1.0), None, None])).unwrap();
        let total = composite_loss(&mut tape, &[l1, l2], &[1.0, 2.0]).unwrap();
        let g = tape.backward(total).unwrap();
        let g = g.get(p).unwrap().data();
        assert_eq!(g[3], 0.0);
        assert!(g[0] != 0.0 && g[1] != 0.0 && g[2] != 0.0);
    }

    #[test]
    fn lode_examples() {
        let mut state = LodeTaskState::default();
        let mut tape = Tape::new();
        let p = tape.param(Tensor::vector(vec![0.0, 0.0]));
        let first = lode_loss(&mut tape, Task::Kd, p, &labels(&[None, None]), &mut state, 0.5).unwrap();
        assert_eq!(tape.value(first).item(), 0.0);
        assert!(!state.observed_once);

        let a = labels(&[Some(0.8f64.sqrt()), None]);
        let seen = lode_loss(&mut tape, Task::Kd, p, &a, &mut state, 0.5).unwrap();
        let masked = masked_mse(&mut tape, p, &a).unwrap();
        assert_eq!(tape.value(seen).item(), tape.value(masked).item());
        assert!((state.last_error - 0.8).abs() < 1e-15);

        let b = lode_loss(&mut tape, Task::Kd, p, &labels(&[None, None]), &mut state, 0.5).unwrap();
        assert!((tape.value(b).item() - 0.4).abs() < 1e-15);
        let again = lode_loss(&mut tape, Task::Kd, p, &labels(&[None, None]), &mut state, 0.5).unwrap();
        assert_eq!(tape.value(again).item(), tape.value(b).item());
        let g = tape.backward(b).unwrap();
        assert_eq!(g.get(p).unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn composite_examples() {
        let mut tape = Tape::new();
        let ls: Vec<Var> = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]
            .iter()
            .map(|v| tape.constant(Tensor::scalar(*v)))
            .collect();
        let one = composite_loss(&mut tape, &ls, &[1.0; 7]).unwrap();
        assert_eq!(tape.value(one).item(), 1.0);
        let mut w = [1.0; 7];
        w[0] = 2.0;
        let two = composite_loss(&mut tape, &ls, &w).unwrap();
        assert_eq!(tape.value(two).item(), 2.0);
        let zero = composite_loss(&mut tape, &ls, &[0.0; 7]).unwrap();
        assert_eq!(tape.value(zero).item(), 0.0);
        assert!(matches!(
            composite_loss(&mut tape, &ls, &[1.0; 6]),
            Err(LossError::WeightCount { expected: 7, found: 6 })
        ));
    }

    #[test]
    fn gamma_and_mode_parsing() {
        assert!(LodeState::new(7, 0.0).is_err());
        assert!(LodeState::new(7, 1.5).is_err());
        assert!(LodeState::new(7, 1.0).is_ok());
        assert_eq!("LODE".parse::<LossMode>().unwrap(), LossMode::Lode);
        assert!("drop".parse::<LossMode>().is_err());
    }
}
