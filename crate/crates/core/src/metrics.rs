//! Ranking, regression and classification metrics, the paired sign test,
//! and per-task evaluation reports.

use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::data::DtaRecord;
use crate::nn::{Checkpoint, NnError};
use crate::task::Task;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("need at least {needed} values, got {found}")]
    TooFew { needed: usize, found: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("all true values are equal; no comparable pairs")]
    NoComparablePairs,
    #[error("only one class present")]
    SingleClass,
    #[error("non-finite value in input")]
    NonFinite,
    #[error("no untied pairs")]
    NoPairs,
    #[error("empty partition")]
    EmptyPartition,
    #[error(transparent)]
    Model(#[from] NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn check_pair(a: &[f64], b: &[f64], needed: usize) -> Result<(), MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < needed {
        return Err(MetricError::TooFew { needed, found: a.len() });
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(MetricError::NonFinite);
    }
    Ok(())
}

struct Fenwick(Vec<u64>);

impl Fenwick {
    fn add(&mut self, mut i: usize) {
        i += 1;
        while i < self.0.len() {
            self.0[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Count of inserted ranks `< i`.
    fn below(&self, mut i: usize) -> u64 {
        let mut s = 0;
        while i > 0 {
            s += self.0[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}

/// Twice the concordant-pair score and the number of comparable pairs.
fn concordance_counts(truth: &[f64], pred: &[f64]) -> (u64, u64) {
    let mut ranks: Vec<f64> = pred.to_vec();
    ranks.sort_by(f64::total_cmp);
    ranks.dedup();
    let rank = |p: f64| ranks.partition_point(|r| *r < p);

    let mut order: Vec<usize> = (0..truth.len()).collect();
    order.sort_by(|&i, &j| truth[i].total_cmp(&truth[j]));
    let mut tree = Fenwick(vec![0; ranks.len() + 1]);
    let (mut doubled, mut pairs, mut inserted) = (0u64, 0u64, 0u64);
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end < order.len() && truth[order[end]] == truth[order[start]] {
            end += 1;
        }
        for &i in &order[start..end] {
            let r = rank(pred[i]);
            let lower = tree.below(r);
            let tied = tree.below(r + 1) - lower;
            doubled += 2 * lower + tied;
            pairs += inserted;
        }
        for &i in &order[start..end] {
            tree.add(rank(pred[i]));
        }
        inserted += (end - start) as u64;
        start = end;
    }
    (doubled, pairs)
}

/// Fraction of pairs with `true_i > true_j` that the predictions order the
/// same way, ties in prediction counting one half. `O(n log n)`.
pub fn concordance_index(truth: &[f64], pred: &[f64]) -> Result<f64, MetricError> {
    check_pair(truth, pred, 2)?;
    let (doubled, pairs) = concordance_counts(truth, pred);
    if pairs == 0 {
        return Err(MetricError::NoComparablePairs);
    }
    Ok(doubled as f64 * 0.5 / pairs as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub mse: f64,
    pub rmse: f64,
    /// `None` when either side has zero variance.
    pub pearson_r: Option<f64>,
}

pub fn regression_metrics(truth: &[f64], pred: &[f64]) -> Result<RegressionMetrics, MetricError> {
    check_pair(truth, pred, 2)?;
    let n = truth.len() as f64;
    let mse = truth.iter().zip(pred).map(|(t, p)| (t - p) * (t - p)).sum::<f64>() / n;
    let mt = truth.iter().sum::<f64>() / n;
    let mp = pred.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (t, p) in truth.iter().zip(pred) {
        sxy += (t - mt) * (p - mp);
        sxx += (t - mt) * (t - mt);
        syy += (p - mp) * (p - mp);
    }
    let pearson_r = (sxx > 0.0 && syy > 0.0).then(|| (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0));
    Ok(RegressionMetrics {
        mse,
        rmse: mse.sqrt(),
        pearson_r,
    })
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half.
pub fn auc(labels: &[bool], scores: &[f64]) -> Result<f64, MetricError> {
    let truth: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
    check_pair(&truth, scores, 2)?;
    if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
        return Err(MetricError::SingleClass);
    }
    concordance_index(&truth, scores)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignTestResult {
    pub n_pairs: u64,
    pub n_positive: u64,
    pub n_negative: u64,
    pub n_ties_dropped: u64,
    pub log10_p: f64,
    /// May underflow to 0; `log10_p` is authoritative.
    pub p_value: f64,
}

fn ln_choose(n: u64, k: u64) -> f64 {
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// `log10` of the two-sided exact binomial p-value for `k` successes in `n`
/// fair trials: `min(1, 2·P(X ≥ max(k, n − k)))`.
pub fn binomial_two_sided_log10(n: u64, k: u64) -> f64 {
    assert!(k <= n && n > 0);
    let m = k.max(n - k);
    let terms: Vec<f64> = (m..=n).map(|i| ln_choose(n, i)).collect();
    let top = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ln_tail = top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln() - n as f64 * std::f64::consts::LN_2;
    ((std::f64::consts::LN_2 + ln_tail) / std::f64::consts::LN_10).min(0.0)
}

/// Sign test from counts of positive and negative differences.
pub fn sign_test_counts(n_positive: u64, n_negative: u64, ties: u64) -> Result<SignTestResult, MetricError> {
    let n = n_positive + n_negative;
    if n == 0 {
        return Err(MetricError::NoPairs);
    }
    let log10_p = binomial_two_sided_log10(n, n_negative);
    Ok(SignTestResult {
        n_pairs: n,
        n_positive,
        n_negative,
        n_ties_dropped: ties,
        log10_p,
        p_value: 10f64.powf(log10_p),
    })
}

/// Paired sign test on absolute errors. A pair is positive when
/// `|a − ref| > |b − ref|` (model B closer) and negative when model A is
/// closer; equal errors are dropped.
pub fn sign_test(pred_a: &[f64], pred_b: &[f64], reference: &[f64]) -> Result<SignTestResult, MetricError> {
    check_pair(pred_a, pred_b, 0)?;
    check_pair(pred_a, reference, 0)?;
    let (mut pos, mut neg, mut ties) = (0, 0, 0);
    for ((a, b), r) in pred_a.iter().zip(pred_b).zip(reference) {
        let d = (a - r).abs() - (b - r).abs();
        if d > 0.0 {
            pos += 1;
        } else if d < 0.0 {
            neg += 1;
        } else {
            ties += 1;
        }
    }
    sign_test_counts(pos, neg, ties)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskMetrics {
    pub task: Task,
    pub n_evaluated: usize,
    pub mse: Option<f64>,
    pub rmse: Option<f64>,
    pub pearson_r: Option<f64>,
    pub ci: Option<f64>,
    pub auc: Option<f64>,
}

impl TaskMetrics {
    /// Metrics over present labels; everything is `None` below two labels.
    pub fn compute(task: Task, labels: &[Option<f64>], pred: &[f64]) -> Result<Self, MetricError> {
        if labels.len() != pred.len() {
            return Err(MetricError::LengthMismatch(labels.len(), pred.len()));
        }
        let (truth, p): (Vec<f64>, Vec<f64>) = labels
            .iter()
            .zip(pred)
            .filter_map(|(l, p)| l.map(|l| (l, *p)))
            .unzip();
        let mut out = Self {
            task,
            n_evaluated: truth.len(),
            mse: None,
            rmse: None,
            pearson_r: None,
            ci: None,
            auc: None,
        };
        if truth.len() < 2 {
            return Ok(out);
        }
        let reg = regression_metrics(&truth, &p)?;
        out.mse = Some(reg.mse);
        out.rmse = Some(reg.rmse);
        out.pearson_r = reg.pearson_r;
        out.ci = concordance_index(&truth, &p).ok();
        if task.is_binary() {
            let classes: Vec<bool> = truth.iter().map(|&t| t > 0.5).collect();
            out.auc = auc(&classes, &p).ok();
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub model: String,
    pub partition: String,
    pub n_records: usize,
    pub tasks: Vec<TaskMetrics>,
}

impl MetricReport {
    pub fn task(&self, task: Task) -> Option<&TaskMetrics> {
        self.tasks.iter().find(|m| m.task == task)
    }

    pub fn to_json(&self) -> Result<String, MetricError> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub const CSV_HEADER: [&str; 9] = ["model", "partition", "task", "n_evaluated", "mse", "rmse", "pearson_r", "ci", "auc"];

/// One row per task, partition and model.
pub fn write_metrics_csv<W: Write>(writer: W, reports: &[MetricReport]) -> Result<(), MetricError> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| MetricError::Io(e.into());
    w.write_record(CSV_HEADER).map_err(io)?;
    let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in reports {
        for m in &r.tasks {
            w.write_record([
                r.model.clone(),
                r.partition.clone(),
                m.task.to_string(),
                m.n_evaluated.to_string(),
                f(m.mse),
                f(m.rmse),
                f(m.pearson_r),
                f(m.ci),
                f(m.auc),
            ])
            .map_err(io)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Anything that maps records to per-task predictions, indexed
/// `[task][record]` in the order of [`Predictor::tasks`].
pub trait Predictor {
    fn tasks(&self) -> &[Task];
    fn predict_records(&self, records: &[DtaRecord]) -> Result<Vec<Vec<f64>>, MetricError>;
}

/// Records per forward pass during evaluation.
pub const EVAL_CHUNK: usize = 256;

impl Predictor for Checkpoint {
    fn tasks(&self) -> &[Task] {
        self.model.tasks()
    }

    fn predict_records(&self, records: &[DtaRecord]) -> Result<Vec<Vec<f64>>, MetricError> {
        let mut out = vec![Vec::with_capacity(records.len()); self.model.tasks().len()];
        for chunk in records.chunks(EVAL_CHUNK) {
            let inputs = self.encoder.encode_all(chunk)?;
            for (all, part) in out.iter_mut().zip(self.model.predict(&inputs)?) {
                all.extend(part);
            }
        }
        Ok(out)
    }
}

pub fn evaluate<P: Predictor>(predictor: &P, records: &[DtaRecord], model: &str, partition: &str) -> Result<MetricReport, MetricError> {
    if records.is_empty() {
        return Err(MetricError::EmptyPartition);
    }
    let preds = predictor.predict_records(records)?;
    let tasks = predictor
        .tasks()
        .iter()
        .zip(&preds)
        .map(|(&task, p)| {
            let labels: Vec<Option<f64>> = records.iter().map(|r| r.label(task)).collect();
            TaskMetrics::compute(task, &labels, p)
        })
        .collect::<Result<_, _>>()?;
    Ok(MetricReport {
        model: model.to_string(),
        partition: partition.to_string(),
        n_records: records.len(),
        tasks,
    })
}
