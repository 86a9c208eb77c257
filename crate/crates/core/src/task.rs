use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Prediction targets in the fixed head order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Kd,
    Ki,
    Ic50,
    Ec50,
    Active,
    Ph,
    Qed,
}

impl Task {
    pub const ALL: [Task; 7] = [
        Task::Kd,
        Task::Ki,
        Task::Ic50,
        Task::Ec50,
        Task::Active,
        Task::Ph,
        Task::Qed,
    ];

    /// The four binding constants.
    pub const CONSTANTS: [Task; 4] = [Task::Kd, Task::Ki, Task::Ic50, Task::Ec50];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Kd => "kd",
            Task::Ki => "ki",
            Task::Ic50 => "ic50",
            Task::Ec50 => "ec50",
            Task::Active => "active",
            Task::Ph => "ph",
            Task::Qed => "qed",
        }
    }

    pub fn is_constant(self) -> bool {
        self.index() < 4
    }

    /// Binary classification target; every other task is a regression.
    pub fn is_binary(self) -> bool {
        self == Task::Active
    }

    /// Heads squashed through a sigmoid.
    pub fn is_bounded(self) -> bool {
        matches!(self, Task::Active | Task::Qed)
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown task {0:?}")]
pub struct UnknownTask(pub String);

impl FromStr for Task {
    type Err = UnknownTask;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Task::ALL
            .into_iter()
            .find(|t| t.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| UnknownTask(s.to_string()))
    }
}
