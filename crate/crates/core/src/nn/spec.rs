use serde::{Deserialize, Serialize};

use super::NnError;
use crate::task::Task;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DrugBranch {
    Cnn,
    Gcn,
    Gin,
}

impl DrugBranch {
    pub fn is_graph(self) -> bool {
        self != DrugBranch::Cnn
    }
}

/// Architecture description. Everything needed to rebuild a model apart from
/// vocabulary sizes and the seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub drug_branch: DrugBranch,
    pub drug_depth: usize,
    pub protein_conv_blocks: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub conv_channels: usize,
    pub drug_kernel: usize,
    pub protein_kernel: usize,
    pub gin_epsilon: f64,
    pub head_dims: Vec<usize>,
    pub tasks: Vec<Task>,
    /// Residual protein and drug convolutions. The single-task graph
    /// baselines use plain convolutions on the protein side.
    pub residual: bool,
    /// Trained on the merged Kd + EC50 dataset.
    pub plus: bool,
}

/// The named architectures: multi-task models accept a trailing `+`.
pub const MODEL_NAMES: [&str; 5] = ["resCNN1", "resCNN1gcn4", "resCNN1gin5", "gcn3", "gin5"];

impl ModelSpec {
    fn base(name: &str, branch: DrugBranch, depth: usize, tasks: Vec<Task>, residual: bool) -> Self {
        Self {
            name: name.to_string(),
            drug_branch: branch,
            drug_depth: depth,
            protein_conv_blocks: 3,
            embed_dim: 128,
            hidden_dim: 256,
            conv_channels: 64,
            drug_kernel: 5,
            protein_kernel: 7,
            gin_epsilon: 0.0,
            head_dims: vec![1; tasks.len()],
            tasks,
            residual,
            plus: false,
        }
    }

    /// Looks up a named architecture, case-insensitively. `gcn3` and `gin5`
    /// predict Kd; use [`ModelSpec::with_tasks`] for another target.
    pub fn named(name: &str) -> Result<Self, NnError> {
        let trimmed = name.trim();
        let (stem, plus) = match trimmed.strip_suffix('+') {
            Some(s) => (s, true),
            None => (trimmed, false),
        };
        let all = Task::ALL.to_vec();
        let mut spec = match stem.to_ascii_lowercase().as_str() {
            "rescnn1" => Self::base("resCNN1", DrugBranch::Cnn, 1, all, true),
            "rescnn1gcn4" => Self::base("resCNN1gcn4", DrugBranch::Gcn, 4, all, true),
            "rescnn1gin5" => Self::base("resCNN1gin5", DrugBranch::Gin, 5, all, true),
            "gcn3" => Self::base("gcn3", DrugBranch::Gcn, 3, vec![Task::Kd], false),
            "gin5" => Self::base("gin5", DrugBranch::Gin, 5, vec![Task::Kd], false),
            _ => return Err(NnError::UnknownModel(name.to_string())),
        };
        if plus {
            if spec.tasks.len() != Task::ALL.len() {
                return Err(NnError::InvalidSpec(format!(
                    "{stem}: the + variant exists only for multi-task models"
                )));
            }
            spec.plus = true;
            spec.name.push('+');
        }
        Ok(spec)
    }

    pub fn with_tasks(mut self, tasks: &[Task]) -> Self {
        self.tasks = tasks.to_vec();
        self.head_dims = vec![1; tasks.len()];
        self
    }

    pub fn with_widths(mut self, embed_dim: usize, conv_channels: usize, hidden_dim: usize) -> Self {
        self.embed_dim = embed_dim;
        self.conv_channels = conv_channels;
        self.hidden_dim = hidden_dim;
        self
    }

    pub fn is_multitask(&self) -> bool {
        self.tasks.len() > 1
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |m: String| Err(NnError::InvalidSpec(m));
        if self.tasks.is_empty() {
            return bad("no tasks".into());
        }
        if self.tasks.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("tasks must follow the fixed head order without repeats: {:?}", self.tasks));
        }
        if self.head_dims.len() != self.tasks.len() || self.head_dims.iter().any(|&d| d != 1) {
            return bad("every task head has width 1".into());
        }
        for (label, v) in [
            ("drug_depth", self.drug_depth),
            ("protein_conv_blocks", self.protein_conv_blocks),
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("conv_channels", self.conv_channels),
            ("drug_kernel", self.drug_kernel),
            ("protein_kernel", self.protein_kernel),
        ] {
            if v == 0 {
                return bad(format!("{label} must be positive"));
            }
        }
        if !self.gin_epsilon.is_finite() {
            return bad("gin_epsilon must be finite".into());
        }
        if self.plus && self.tasks.len() != Task::ALL.len() {
            return bad("the + variant exists only for multi-task models".into());
        }
        // Family names fix the branch and depth.
        if let Ok(reference) = Self::named(&self.name) {
            if reference.drug_branch != self.drug_branch || reference.drug_depth != self.drug_depth {
                return bad(format!(
                    "{} implies a {:?} drug branch of depth {}",
                    self.name, reference.drug_branch, reference.drug_depth
                ));
            }
        }
        Ok(())
    }
}
