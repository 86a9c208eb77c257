//! Adam, Nadam and the LookAhead wrapper.
//!
//! With gradient `g` at step `t` (1-based), all three share
//!
//! ```text
//! m ← β1·m + (1 − β1)·g        m̂ = m / (1 − β1^t)
//! v ← β2·v + (1 − β2)·g²       v̂ = v / (1 − β2^t)
//! ```
//!
//! and update
//!
//! ```text
//! Adam:   θ ← θ − lr · m̂ / (√v̂ + ε)
//! Nadam:  θ ← θ − lr · (β1·m̂ + (1 − β1)·g / (1 − β1^t)) / (√v̂ + ε)
//! ```
//!
//! LookAhead keeps slow weights and, every `k` inner steps, sets
//! `slow ← slow + α·(fast − slow)` and resets the fast weights to the slow
//! ones. The interpolation is evaluated as `(1 − α)·slow + α·fast` so that
//! `α = 1` reproduces the inner optimizer bit for bit.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimError {
    #[error("gradient for parameter {0} is not finite")]
    NonFiniteGradient(usize),
    #[error("parameter {index}: shape {param:?} does not match gradient {grad:?}")]
    ShapeMismatch {
        index: usize,
        param: Vec<usize>,
        grad: Vec<usize>,
    },
    #[error("expected {expected} tensors, got {found}")]
    Count { expected: usize, found: usize },
    #[error("invalid optimizer setting: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<(), OptimError> {
        let ok = self.lr > 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(OptimError::Invalid(format!("{self:?}")))
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self::with_lr(0.001)
    }
}

/// First and second moments plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
}

impl MomentState {
    pub fn new(params: &[Tensor]) -> Self {
        let zeros = |p: &Tensor| Tensor::zeros(p.shape());
        Self {
            m: params.iter().map(zeros).collect(),
            v: params.iter().map(zeros).collect(),
            t: 0,
        }
    }
}

fn check(params: &[Tensor], grads: &[Tensor], state: &MomentState) -> Result<(), OptimError> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(OptimError::Count {
            expected: params.len(),
            found: grads.len().min(state.m.len()),
        });
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || state.m[i].shape() != p.shape() {
            return Err(OptimError::ShapeMismatch {
                index: i,
                param: p.shape().to_vec(),
                grad: g.shape().to_vec(),
            });
        }
        if !g.all_finite() {
            return Err(OptimError::NonFiniteGradient(i));
        }
    }
    Ok(())
}

fn moment_step(
    params: &mut [Tensor],
    grads: &[Tensor],
    state: &mut MomentState,
    cfg: &AdamConfig,
    nesterov: bool,
) -> Result<(), OptimError> {
    check(params, grads, state)?;
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (i, p) in params.iter_mut().enumerate() {
        let g = grads[i].data();
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (j, theta) in p.data_mut().iter_mut().enumerate() {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            let num = if nesterov {
                cfg.beta1 * m_hat + (1.0 - cfg.beta1) * g[j] / bc1
            } else {
                m_hat
            };
            *theta -= cfg.lr * num / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

pub fn adam_step(params: &mut [Tensor], grads: &[Tensor], state: &mut MomentState, cfg: &AdamConfig) -> Result<(), OptimError> {
    moment_step(params, grads, state, cfg, false)
}

pub fn nadam_step(params: &mut [Tensor], grads: &[Tensor], state: &mut MomentState, cfg: &AdamConfig) -> Result<(), OptimError> {
    moment_step(params, grads, state, cfg, true)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LookaheadState {
    pub slow: Vec<Tensor>,
    pub sync_period: u64,
    pub alpha: f64,
    pub counter: u64,
}

impl LookaheadState {
    pub fn new(params: &[Tensor], sync_period: u64, alpha: f64) -> Result<Self, OptimError> {
        if sync_period == 0 {
            return Err(OptimError::Invalid("sync period must be positive".into()));
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(OptimError::Invalid(format!("alpha must lie in (0, 1], got {alpha}")));
        }
        Ok(Self {
            slow: params.to_vec(),
            sync_period,
            alpha,
            counter: 0,
        })
    }
}

/// Runs `inner` on the fast weights, then synchronizes when the counter
/// reaches a multiple of the period. Returns whether a sync happened.
pub fn lookahead_step<F>(inner: F, params: &mut [Tensor], la: &mut LookaheadState) -> Result<bool, OptimError>
where
    F: FnOnce(&mut [Tensor]) -> Result<(), OptimError>,
{
    if la.slow.len() != params.len() {
        return Err(OptimError::Count {
            expected: la.slow.len(),
            found: params.len(),
        });
    }
    inner(params)?;
    la.counter += 1;
    if la.counter % la.sync_period != 0 {
        return Ok(false);
    }
    let a = la.alpha;
    for (slow, fast) in la.slow.iter_mut().zip(params.iter_mut()) {
        for (s, f) in slow.data_mut().iter_mut().zip(fast.data_mut()) {
            *s = (1.0 - a) * *s + a * *f;
            *f = *s;
        }
    }
    Ok(true)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    Nadam,
    LookaheadNadam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = OptimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace(['-', '/'], "_").as_str() {
            "adam" => Ok(Self::Adam),
            "nadam" => Ok(Self::Nadam),
            "lookahead_nadam" => Ok(Self::LookaheadNadam),
            _ => Err(OptimError::Invalid(format!("unknown optimizer {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub adam: AdamConfig,
    pub sync_period: u64,
    pub alpha: f64,
    /// Rescale gradients whose global L2 norm exceeds this value.
    pub clip_norm: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::LookaheadNadam,
            adam: AdamConfig::with_lr(0.001),
            sync_period: 3,
            alpha: 0.5,
            clip_norm: None,
        }
    }
}

/// One of the three optimizers with its state.
#[derive(Clone, Debug, PartialEq)]
pub struct Optimizer {
    pub config: OptimizerConfig,
    pub moments: MomentState,
    pub lookahead: Option<LookaheadState>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, params: &[Tensor]) -> Result<Self, OptimError> {
        config.adam.validate()?;
        if let Some(c) = config.clip_norm {
            if !(c > 0.0 && c.is_finite()) {
                return Err(OptimError::Invalid(format!("clip norm must be positive, got {c}")));
            }
        }
        let lookahead = match config.kind {
            OptimizerKind::LookaheadNadam => Some(LookaheadState::new(params, config.sync_period, config.alpha)?),
            _ => None,
        };
        Ok(Self {
            config,
            moments: MomentState::new(params),
            lookahead,
        })
    }

    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<(), OptimError> {
        let clipped;
        let grads = match self.config.clip_norm {
            Some(max) => {
                clipped = clip_global_norm(grads, max);
                &clipped
            }
            None => grads,
        };
        let cfg = self.config.adam;
        match self.config.kind {
            OptimizerKind::Adam => adam_step(params, grads, &mut self.moments, &cfg),
            OptimizerKind::Nadam => nadam_step(params, grads, &mut self.moments, &cfg),
            OptimizerKind::LookaheadNadam => {
                let moments = &mut self.moments;
                let la = self.lookahead.as_mut().expect("lookahead state");
                lookahead_step(|p| nadam_step(p, grads, moments, &cfg), params, la).map(|_| ())
            }
        }
    }

    /// Named state tensors for checkpointing.
    pub fn state_blocks(&self, names: &[String]) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (i, n) in names.iter().enumerate() {
            out.push((format!("m/{n}"), self.moments.m[i].clone()));
            out.push((format!("v/{n}"), self.moments.v[i].clone()));
            if let Some(la) = &self.lookahead {
                out.push((format!("slow/{n}"), la.slow[i].clone()));
            }
        }
        out
    }

    /// Restores state written by [`Optimizer::state_blocks`] together with
    /// the step counters.
    pub fn restore(&mut self, names: &[String], blocks: Vec<(String, Tensor)>, t: u64, counter: u64) -> Result<(), OptimError> {
        let mut map: std::collections::HashMap<String, Tensor> = blocks.into_iter().collect();
        let mut take = |key: String, like: &Tensor| -> Result<Tensor, OptimError> {
            let t = map.remove(&key).ok_or_else(|| OptimError::Invalid(format!("missing state {key}")))?;
            if t.shape() != like.shape() {
                return Err(OptimError::Invalid(format!("state {key} has shape {:?}", t.shape())));
            }
            Ok(t)
        };
        for (i, n) in names.iter().enumerate() {
            self.moments.m[i] = take(format!("m/{n}"), &self.moments.m[i].clone())?;
            self.moments.v[i] = take(format!("v/{n}"), &self.moments.v[i].clone())?;
            if let Some(la) = &mut self.lookahead {
                la.slow[i] = take(format!("slow/{n}"), &la.slow[i].clone())?;
            }
        }
        self.moments.t = t;
        if let Some(la) = &mut self.lookahead {
            la.counter = counter;
        }
        Ok(())
    }
}

/// Scales every gradient by `max / norm` when the global norm exceeds `max`.
pub fn clip_global_norm(grads: &[Tensor], max: f64) -> Vec<Tensor> {
    let norm = grads
        .iter()
        .flat_map(|g| g.data())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if norm <= max || !norm.is_finite() {
        return grads.to_vec();
    }
    let s = max / norm;
    grads
        .iter()
        .map(|g| {
            let mut g = g.clone();
            g.data_mut().iter_mut().for_each(|v| *v *= s);
            g
        })
        .collect()
}
