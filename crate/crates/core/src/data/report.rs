use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::DtaRecord;
use crate::task::Task;

/// Number of records carrying every constant in `constants`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapCount {
    pub constants: Vec<Task>,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissingnessReport {
    pub records: usize,
    /// Non-missing label count per task.
    pub present: BTreeMap<Task, usize>,
    /// Every combination of two or more binding constants, pairs first.
    pub overlaps: Vec<OverlapCount>,
}

impl MissingnessReport {
    pub fn present(&self, task: Task) -> usize {
        self.present.get(&task).copied().unwrap_or(0)
    }

    pub fn overlap(&self, constants: &[Task]) -> Option<usize> {
        self.overlaps.iter().find(|o| o.constants == constants).map(|o| o.count)
    }

    /// Fraction of missing cells over the seven task columns.
    pub fn missing_fraction(&self) -> f64 {
        if self.records == 0 {
            return 0.0;
        }
        let present: usize = self.present.values().sum();
        1.0 - present as f64 / (self.records * Task::ALL.len()) as f64
    }
}

pub fn missingness_report(records: &[DtaRecord]) -> MissingnessReport {
    let present = Task::ALL
        .into_iter()
        .map(|t| (t, records.iter().filter(|r| r.label(t).is_some()).count()))
        .collect();
    let mut subsets: Vec<Vec<Task>> = (1u32..16)
        .filter(|mask| mask.count_ones() >= 2)
        .map(|mask| {
            Task::CONSTANTS
                .into_iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, t)| t)
                .collect()
        })
        .collect();
    subsets.sort_by_key(|s: &Vec<Task>| (s.len(), s.clone()));
    let overlaps = subsets
        .into_iter()
        .map(|constants| {
            let count = records
                .iter()
                .filter(|r| constants.iter().all(|t| r.constant(*t).is_some()))
                .count();
            OverlapCount { constants, count }
        })
        .collect();
    MissingnessReport {
        records: records.len(),
        present,
        overlaps,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_kd_records() {
        let mut a = DtaRecord::new("C", "M");
        a.kd_nm = Some(3.0);
        let b = a.clone();
        let report = missingness_report(&[a, b]);
        assert_eq!(report.present(Task::Kd), 2);
        for t in [Task::Ki, Task::Ic50, Task::Ec50, Task::Active, Task::Ph, Task::Qed] {
            assert_eq!(report.present(t), 0, "{t}");
        }
        assert_eq!(report.overlaps.len(), 11);
        assert!(report.overlaps.iter().all(|o| o.count == 0));
    }

    #[test]
    fn overlap_counts() {
        let mut all = DtaRecord::new("C", "M");
        all.kd_nm = Some(1.0);
        all.ki_nm = Some(1.0);
        all.ic50_nm = Some(1.0);
        all.ec50_nm = Some(1.0);
        let mut pair = DtaRecord::new("CC", "M");
        pair.kd_nm = Some(1.0);
        pair.ec50_nm = Some(2.0);
        let report = missingness_report(&[all, pair]);
        assert_eq!(report.overlap(&[Task::Kd, Task::Ec50]), Some(2));
        assert_eq!(report.overlap(&[Task::Kd, Task::Ki]), Some(1));
        assert_eq!(report.overlap(&Task::CONSTANTS), Some(1));
        assert_eq!(report.overlaps[0].constants.len(), 2);
        assert_eq!(report.overlaps.last().unwrap().constants.len(), 4);
    }
}
