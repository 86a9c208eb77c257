use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};

use super::trainer::{monitored_tasks, monitored_value, EpochLog, TrainLog, Trainer};
use super::{prepare_dataset, PrepareOptions, RunConfig, TrainError};
use crate::data::{read_partition, DtaRecord, Manifest};
use crate::loss::LodeState;
use crate::metrics::{evaluate, sign_test, write_metrics_csv, MetricReport, Predictor, SignTestResult};
use crate::nn::{read_blocks, write_blocks, Checkpoint};
use crate::task::Task;
use crate::tensor::Tensor;

pub fn cmd_prepare(input: &Path, output: &Path, opts: &PrepareOptions) -> Result<Vec<Manifest>, TrainError> {
    Ok(prepare_dataset(input, output, opts)?)
}

#[derive(Serialize, Deserialize)]
struct ResumeState {
    epoch: usize,
    step: u64,
    lookahead_counter: u64,
    lode: Option<LodeState>,
    epochs: Vec<EpochLog>,
    best: Option<(usize, f64)>,
    config: String,
}

fn save_resume(dir: &Path, trainer: &Trainer, state: &ResumeState) -> Result<(), TrainError> {
    trainer.checkpoint.save(dir)?;
    let names = trainer.checkpoint.model.names();
    let blocks = trainer.optimizer.state_blocks(names);
    let refs: Vec<(&str, &Tensor)> = blocks.iter().map(|(n, t)| (n.as_str(), t)).collect();
    write_blocks(&dir.join("optim.bin"), &refs)?;
    fs::write(dir.join("state.json"), serde_json::to_string(state)?)?;
    Ok(())
}

fn load_resume(dir: &Path, cfg: &RunConfig, train: &[DtaRecord]) -> Result<(Trainer, ResumeState), TrainError> {
    let state: ResumeState = serde_json::from_str(&fs::read_to_string(dir.join("state.json"))?)?;
    let checkpoint = Checkpoint::load(dir)?;
    if checkpoint.model.spec() != &cfg.model_spec()? || checkpoint.seed != cfg.seed {
        return Err(super::ConfigError::Invalid("the saved run was trained with a different model or seed".into()).into());
    }
    let mut trainer = Trainer::from_checkpoint(cfg, checkpoint, train)?;
    let names = trainer.checkpoint.model.names().to_vec();
    trainer
        .optimizer
        .restore(&names, read_blocks(&dir.join("optim.bin"))?, state.step, state.lookahead_counter)?;
    trainer.lode = state.lode.clone();
    Ok((trainer, state))
}

/// Rows of `epoch,task,split,value`: training losses and validation MSE
/// per task, plus the composite objective as task `composite`.
pub fn write_learning_curve<W: Write>(writer: W, log: &TrainLog) -> Result<(), TrainError> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| TrainError::Io(e.into());
    w.write_record(["epoch", "task", "split", "value"]).map_err(io)?;
    for e in &log.epochs {
        let epoch = e.epoch.to_string();
        w.write_record([epoch.as_str(), "composite", "train", &e.objective.to_string()]).map_err(io)?;
        for (split, map) in [("train", &e.train_loss), ("validation", &e.validation_mse)] {
            for (task, v) in map {
                if let Some(v) = v {
                    w.write_record([epoch.as_str(), task.name(), split, &v.to_string()]).map_err(io)?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// The epoch loop. Writes `best/` whenever the monitored validation MSE
/// improves, `last/` with optimizer state after every epoch, and
/// `train_log.json`, `learning_curve.csv` and `timing.csv` into `out_dir`.
/// With `resume`, continues from `last/` when it exists.
pub fn run_training(
    cfg: &RunConfig,
    train: &[DtaRecord],
    validation: &[DtaRecord],
    out_dir: &Path,
    resume: bool,
) -> Result<TrainLog, TrainError> {
    let spec = cfg.validate()?;
    if validation.is_empty() {
        return Err(TrainError::Data("validation partition is empty".into()));
    }
    let monitor = monitored_tasks(&spec, &cfg.monitor, validation);
    let labelled = |t: Task| validation.iter().filter(|r| r.label(t).is_some()).count();
    if monitor.iter().all(|&t| labelled(t) < 2) {
        return Err(TrainError::Data(format!(
            "validation partition has fewer than two labels for every monitored task {monitor:?}"
        )));
    }
    fs::create_dir_all(out_dir)?;
    let last_dir = out_dir.join("last");
    let best_dir = out_dir.join("best");

    let (mut trainer, mut epochs, mut best) = if resume && last_dir.join("state.json").exists() {
        let (t, s) = load_resume(&last_dir, cfg, train)?;
        info!("resuming after epoch {}", s.epoch);
        (t, s.epochs, s.best)
    } else {
        fs::write(out_dir.join("timing.csv"), "epoch,seconds\n")?;
        (Trainer::new(cfg, train)?, Vec::new(), None)
    };
    fs::write(out_dir.join("config.txt"), cfg.to_text())?;

    let tasks = trainer.tasks().to_vec();
    for epoch in epochs.len() + 1..=cfg.epochs {
        let started = Instant::now();
        let (objective, train_loss) = trainer.run_epoch(epoch)?;
        let val = trainer.validation_mse(validation)?;
        let monitored = monitored_value(&tasks, &monitor, &val).unwrap_or(f64::INFINITY);
        if best.map_or(true, |(_, b): (usize, f64)| monitored < b) {
            best = Some((epoch, monitored));
            trainer.checkpoint.save(&best_dir)?;
        }
        info!("epoch {epoch}: objective {objective:.5}, monitored validation MSE {monitored:.5}");
        epochs.push(EpochLog {
            epoch,
            objective,
            train_loss: tasks.iter().copied().zip(train_loss).collect(),
            validation_mse: tasks.iter().copied().zip(val).collect(),
            monitored,
        });
        let state = ResumeState {
            epoch,
            step: trainer.optimizer.moments.t,
            lookahead_counter: trainer.optimizer.lookahead.as_ref().map_or(0, |l| l.counter),
            lode: trainer.lode.clone(),
            epochs: epochs.clone(),
            best,
            config: cfg.to_text(),
        };
        save_resume(&last_dir, &trainer, &state)?;
        let mut timing = fs::OpenOptions::new().append(true).create(true).open(out_dir.join("timing.csv"))?;
        writeln!(timing, "{epoch},{}", started.elapsed().as_secs_f64())?;
    }

    let (best_epoch, best_validation) = best.ok_or_else(|| TrainError::Data("no epochs were run".into()))?;
    let log = TrainLog {
        model: spec.name.clone(),
        seed: cfg.seed,
        monitor,
        epochs,
        best_epoch,
        best_validation,
        best_checkpoint: "best".into(),
    };
    fs::write(out_dir.join("train_log.json"), serde_json::to_string_pretty(&log)? + "\n")?;
    write_learning_curve(fs::File::create(out_dir.join("learning_curve.csv"))?, &log)?;
    Ok(log)
}

/// Reads `train.tsv` and `validation.tsv` from `data.dir` and trains into
/// `out.dir`.
pub fn cmd_train(cfg: &RunConfig, resume: bool) -> Result<TrainLog, TrainError> {
    cfg.validate()?;
    let data = cfg.data_dir.as_ref().ok_or(super::ConfigError::Missing("data.dir"))?;
    let out = cfg.out_dir.as_ref().ok_or(super::ConfigError::Missing("out.dir"))?;
    let train = read_partition(&data.join("train.tsv"))?;
    let validation = read_partition(&data.join("validation.tsv"))?;
    run_training(cfg, &train, &validation, out, resume)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub reports: Vec<MetricReport>,
    /// Per task, present only when a second model was given.
    pub sign_tests: BTreeMap<Task, SignTestResult>,
}

/// Evaluates `checkpoint` (and optionally `compare`) on a partition file and
/// writes `<prefix>.json` and `<prefix>.csv`; with a second model, also
/// `<prefix>_sign_test.json` comparing the two per task.
pub fn cmd_eval(
    checkpoint: &Path,
    partition: &Path,
    partition_name: &str,
    prefix: &Path,
    compare: Option<&Path>,
) -> Result<EvalOutput, TrainError> {
    let records = read_partition(partition)?;
    let mut models = vec![Checkpoint::load(checkpoint)?];
    if let Some(other) = compare {
        models.push(Checkpoint::load(other)?);
    }
    let mut reports = Vec::new();
    for m in &models {
        reports.push(evaluate(m, &records, &m.model.spec().name, partition_name)?);
    }
    let mut sign_tests = BTreeMap::new();
    if let [a, b] = models.as_slice() {
        let (pa, pb) = (a.predict_records(&records)?, b.predict_records(&records)?);
        for (i, &task) in a.tasks().iter().enumerate() {
            let Some(j) = b.tasks().iter().position(|&t| t == task) else {
                continue;
            };
            let (mut xa, mut xb, mut r) = (Vec::new(), Vec::new(), Vec::new());
            for (k, rec) in records.iter().enumerate() {
                if let Some(label) = rec.label(task) {
                    xa.push(pa[i][k]);
                    xb.push(pb[j][k]);
                    r.push(label);
                }
            }
            if let Ok(res) = sign_test(&xa, &xb, &r) {
                sign_tests.insert(task, res);
            }
        }
    }
    if let Some(parent) = prefix.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let with_ext = |ext: &str| {
        let mut s = prefix.as_os_str().to_owned();
        s.push(ext);
        std::path::PathBuf::from(s)
    };
    fs::write(with_ext(".json"), serde_json::to_string_pretty(&reports)? + "\n")?;
    write_metrics_csv(fs::File::create(with_ext(".csv"))?, &reports)?;
    if compare.is_some() {
        fs::write(with_ext("_sign_test.json"), serde_json::to_string_pretty(&sign_tests)? + "\n")?;
    }
    Ok(EvalOutput { reports, sign_tests })
}

/// Per-task predictions for one pair: p-scale for binding constants, a
/// probability for activity, raw pH and QED in `[0, 1]`.
pub fn cmd_predict(checkpoint: &Path, smiles: &str, protein: &str) -> Result<Vec<(Task, f64)>, TrainError> {
    let ck = Checkpoint::load(checkpoint)?;
    let input = ck.encoder.encode(smiles, protein)?;
    let out = ck.model.predict(&[input])?;
    Ok(ck.model.tasks().iter().copied().zip(out.into_iter().map(|v| v[0])).collect())
}
