use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::loss::{LossMode, DEFAULT_GAMMA};
use crate::nn::{ModelSpec, NnError};
use crate::optim::{AdamConfig, OptimizerConfig, OptimizerKind};
use crate::task::Task;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected key = value")]
    Syntax { line: usize },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("{key}: {reason} (got {value:?})")]
    BadValue { key: String, value: String, reason: String },
    #[error("{0} must be set")]
    Missing(&'static str),
    #[error("{0}")]
    Invalid(String),
}

/// Which validation losses select the best epoch.
#[derive(Clone, Debug, PartialEq)]
pub enum Monitor {
    /// Kd and EC50 for the "+" models, the model's task for single-task
    /// models, otherwise the binding constant with the most validation
    /// labels.
    Auto,
    Tasks(Vec<Task>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub data_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub model: String,
    pub target: Task,
    pub tasks: Option<Vec<Task>>,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub conv_channels: usize,
    pub drug_kernel: usize,
    pub protein_kernel: usize,
    pub protein_conv_blocks: usize,
    pub gin_epsilon: f64,
    pub loss_mode: LossMode,
    pub gamma: f64,
    pub weights: Option<Vec<f64>>,
    pub optim: OptimizerConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub max_drug_len: usize,
    pub max_protein_len: usize,
    pub monitor: Monitor,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data_dir: None,
            out_dir: None,
            model: "resCNN1".into(),
            target: Task::Kd,
            tasks: None,
            embed_dim: 128,
            hidden_dim: 256,
            conv_channels: 64,
            drug_kernel: 5,
            protein_kernel: 7,
            protein_conv_blocks: 3,
            gin_epsilon: 0.0,
            loss_mode: LossMode::Lode,
            gamma: DEFAULT_GAMMA,
            weights: None,
            optim: OptimizerConfig::default(),
            batch_size: 256,
            epochs: 100,
            seed: 0,
            max_drug_len: 100,
            max_protein_len: 1000,
            monitor: Monitor::Auto,
        }
    }
}

/// `(key, default, description)` for every recognised key.
pub const CONFIG_KEYS: &[(&str, &str, &str)] = &[
    ("data.dir", "", "prepared dataset directory holding train.tsv and validation.tsv"),
    ("out.dir", "", "run directory for checkpoints and logs"),
    ("model.name", "resCNN1", "resCNN1 | resCNN1gcn4 | resCNN1gin5 | gcn3 | gin5, optional trailing +"),
    ("model.target", "kd", "task predicted by the single-task models gcn3 and gin5"),
    ("model.tasks", "", "comma-separated head subset for multi-task models (default: all seven)"),
    ("model.embed_dim", "128", "token embedding width"),
    ("model.hidden_dim", "256", "trunk width"),
    ("model.conv_channels", "64", "convolution and graph layer width"),
    ("model.drug_kernel", "5", "drug convolution kernel size"),
    ("model.protein_kernel", "7", "protein convolution kernel size"),
    ("model.protein_conv_blocks", "3", "number of protein convolution blocks"),
    ("model.gin_epsilon", "0", "GIN self-weight ε"),
    ("loss.mode", "lode", "mask | lode"),
    ("loss.gamma", "0.5", "LODE discount in (0, 1]"),
    ("loss.weights", "", "comma-separated per-head weights (default: all 1)"),
    ("optim.kind", "lookahead_nadam", "adam | nadam | lookahead_nadam"),
    ("optim.lr", "0.001", "learning rate"),
    ("optim.sync_period", "3", "LookAhead synchronization period"),
    ("optim.alpha", "0.5", "LookAhead interpolation α in (0, 1]"),
    ("optim.clip_norm", "", "clip gradients to this global L2 norm (default: off)"),
    ("train.batch_size", "256", "records per batch"),
    ("train.epochs", "100", "number of epochs"),
    ("train.seed", "0", "seed for initialization and shuffling"),
    ("train.monitor", "auto", "auto, or comma-separated tasks whose mean validation MSE selects the best epoch"),
    ("data.max_drug_len", "100", "SMILES tokens kept per drug"),
    ("data.max_protein_len", "1000", "residues kept per protein"),
];

fn bad(key: &str, value: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::BadValue {
        key: key.into(),
        value: value.into(),
        reason: reason.into(),
    }
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.trim().parse().map_err(|_| bad(key, value, "not a number"))
}

fn positive(key: &str, value: &str) -> Result<usize, ConfigError> {
    match num::<usize>(key, value)? {
        0 => Err(bad(key, value, "must be positive")),
        v => Ok(v),
    }
}

fn task_list(key: &str, value: &str) -> Result<Vec<Task>, ConfigError> {
    value
        .split(',')
        .map(|t| t.parse::<Task>().map_err(|e| bad(key, value, e.to_string())))
        .collect()
}

/// `key = value` lines; blank lines and lines starting with `#` are skipped.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Splits a `--set key=value` argument.
pub fn parse_override(arg: &str) -> Result<(String, String), ConfigError> {
    arg.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| bad("--set", arg, "expected key=value"))
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        match key {
            "data.dir" => self.data_dir = Some(PathBuf::from(v)),
            "out.dir" => self.out_dir = Some(PathBuf::from(v)),
            "model.name" => self.model = v.to_string(),
            "model.target" => self.target = v.parse().map_err(|e: crate::task::UnknownTask| bad(key, v, e.to_string()))?,
            "model.tasks" => self.tasks = if v.is_empty() { None } else { Some(task_list(key, v)?) },
            "model.embed_dim" => self.embed_dim = positive(key, v)?,
            "model.hidden_dim" => self.hidden_dim = positive(key, v)?,
            "model.conv_channels" => self.conv_channels = positive(key, v)?,
            "model.drug_kernel" => self.drug_kernel = positive(key, v)?,
            "model.protein_kernel" => self.protein_kernel = positive(key, v)?,
            "model.protein_conv_blocks" => self.protein_conv_blocks = positive(key, v)?,
            "model.gin_epsilon" => self.gin_epsilon = num(key, v)?,
            "loss.mode" => self.loss_mode = v.parse().map_err(|_| bad(key, v, "expected mask or lode"))?,
            "loss.gamma" => self.gamma = num(key, v)?,
            "loss.weights" => {
                self.weights = if v.is_empty() {
                    None
                } else {
                    Some(v.split(',').map(|w| num(key, w)).collect::<Result<_, _>>()?)
                }
            }
            "optim.kind" => self.optim.kind = v.parse::<OptimizerKind>().map_err(|e| bad(key, v, e.to_string()))?,
            "optim.lr" => self.optim.adam = AdamConfig { lr: num(key, v)?, ..self.optim.adam },
            "optim.sync_period" => self.optim.sync_period = positive(key, v)? as u64,
            "optim.alpha" => self.optim.alpha = num(key, v)?,
            "optim.clip_norm" => self.optim.clip_norm = if v.is_empty() { None } else { Some(num(key, v)?) },
            "train.batch_size" => self.batch_size = positive(key, v)?,
            "train.epochs" => self.epochs = positive(key, v)?,
            "train.seed" => self.seed = num(key, v)?,
            "train.monitor" => {
                self.monitor = if v.eq_ignore_ascii_case("auto") {
                    Monitor::Auto
                } else {
                    Monitor::Tasks(task_list(key, v)?)
                }
            }
            "data.max_drug_len" => self.max_drug_len = positive(key, v)?,
            "data.max_protein_len" => self.max_protein_len = positive(key, v)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    pub fn from_pairs<I, K, V>(pairs: I) -> Result<Self, ConfigError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let mut cfg = Self::default();
        for (k, v) in pairs {
            cfg.set(k.as_ref(), v.as_ref())?;
        }
        Ok(cfg)
    }

    /// The architecture this config describes.
    pub fn model_spec(&self) -> Result<ModelSpec, ConfigError> {
        let invalid = |e: NnError| ConfigError::Invalid(e.to_string());
        let mut spec = ModelSpec::named(&self.model).map_err(invalid)?;
        if spec.is_multitask() {
            if let Some(tasks) = &self.tasks {
                spec = spec.with_tasks(tasks);
            }
        } else {
            if self.tasks.is_some() {
                return Err(ConfigError::Invalid(format!("{} is single-task; use model.target", self.model)));
            }
            spec = spec.with_tasks(&[self.target]);
        }
        spec = spec.with_widths(self.embed_dim, self.conv_channels, self.hidden_dim);
        spec.drug_kernel = self.drug_kernel;
        spec.protein_kernel = self.protein_kernel;
        spec.protein_conv_blocks = self.protein_conv_blocks;
        spec.gin_epsilon = self.gin_epsilon;
        spec.validate().map_err(invalid)?;
        Ok(spec)
    }

    /// Per-head loss weights, all 1 unless configured.
    pub fn loss_weights(&self, n_tasks: usize) -> Result<Vec<f64>, ConfigError> {
        match &self.weights {
            None => Ok(vec![1.0; n_tasks]),
            Some(w) if w.len() != n_tasks => Err(ConfigError::Invalid(format!(
                "loss.weights has {} entries for {n_tasks} heads",
                w.len()
            ))),
            Some(w) if w.iter().any(|x| !x.is_finite() || *x < 0.0) => {
                Err(ConfigError::Invalid("loss weights must be finite and non-negative".into()))
            }
            Some(w) => Ok(w.clone()),
        }
    }

    /// Checks everything that can be checked without reading data.
    pub fn validate(&self) -> Result<ModelSpec, ConfigError> {
        let spec = self.model_spec()?;
        self.loss_weights(spec.tasks.len())?;
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(bad("loss.gamma", &self.gamma.to_string(), "must lie in (0, 1]"));
        }
        self.optim.adam.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if !(self.optim.alpha > 0.0 && self.optim.alpha <= 1.0) {
            return Err(bad("optim.alpha", &self.optim.alpha.to_string(), "must lie in (0, 1]"));
        }
        if let Some(c) = self.optim.clip_norm {
            if !(c > 0.0 && c.is_finite()) {
                return Err(bad("optim.clip_norm", &c.to_string(), "must be positive"));
            }
        }
        if let Monitor::Tasks(t) = &self.monitor {
            if let Some(bad_task) = t.iter().find(|t| !spec.tasks.contains(t)) {
                return Err(ConfigError::Invalid(format!("monitored task {bad_task} has no head")));
            }
        }
        Ok(spec)
    }

    /// Resolved settings as `key = value` text that parses back to `self`.
    pub fn to_text(&self) -> String {
        let list = |t: &[Task]| t.iter().map(|t| t.name()).collect::<Vec<_>>().join(",");
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let kind = match self.optim.kind {
            OptimizerKind::Adam => "adam",
            OptimizerKind::Nadam => "nadam",
            OptimizerKind::LookaheadNadam => "lookahead_nadam",
        };
        let rows = [
            ("data.dir", path(&self.data_dir)),
            ("out.dir", path(&self.out_dir)),
            ("model.name", self.model.clone()),
            ("model.target", self.target.to_string()),
            ("model.tasks", self.tasks.as_deref().map(list).unwrap_or_default()),
            ("model.embed_dim", self.embed_dim.to_string()),
            ("model.hidden_dim", self.hidden_dim.to_string()),
            ("model.conv_channels", self.conv_channels.to_string()),
            ("model.drug_kernel", self.drug_kernel.to_string()),
            ("model.protein_kernel", self.protein_kernel.to_string()),
            ("model.protein_conv_blocks", self.protein_conv_blocks.to_string()),
            ("model.gin_epsilon", self.gin_epsilon.to_string()),
            ("loss.mode", if self.loss_mode == LossMode::Lode { "lode" } else { "mask" }.to_string()),
            ("loss.gamma", self.gamma.to_string()),
            (
                "loss.weights",
                self.weights
                    .as_ref()
                    .map(|w| w.iter().map(f64::to_string).collect::<Vec<_>>().join(","))
                    .unwrap_or_default(),
            ),
            ("optim.kind", kind.to_string()),
            ("optim.lr", self.optim.adam.lr.to_string()),
            ("optim.sync_period", self.optim.sync_period.to_string()),
            ("optim.alpha", self.optim.alpha.to_string()),
            ("optim.clip_norm", self.optim.clip_norm.map(|c| c.to_string()).unwrap_or_default()),
            ("train.batch_size", self.batch_size.to_string()),
            ("train.epochs", self.epochs.to_string()),
            ("train.seed", self.seed.to_string()),
            (
                "train.monitor",
                match &self.monitor {
                    Monitor::Auto => "auto".to_string(),
                    Monitor::Tasks(t) => list(t),
                },
            ),
            ("data.max_drug_len", self.max_drug_len.to_string()),
            ("data.max_protein_len", self.max_protein_len.to_string()),
        ];
        rows.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
