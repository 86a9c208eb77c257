use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

use mltle::train::{
    cmd_eval, cmd_predict, cmd_prepare, cmd_train, parse_config_text, parse_override, ConfigError, PrepareOptions,
    RunConfig, Subset, TrainError, CONFIG_KEYS,
};

/// Multi-task drug-target affinity models.
#[derive(Parser)]
#[command(name = "mltle", version)]
struct Cli {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `train.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Filter, aggregate and split a raw TSV into partition files.
    Prepare {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Comma-separated: all, kd, ki, ic50, ec50.
        #[arg(long, default_value = "all", value_delimiter = ',')]
        subset: Vec<Subset>,
        /// Also write the merged Kd + EC50 dataset.
        #[arg(long)]
        plus: bool,
    },
    /// Train with validation-based model selection.
    Train {
        /// Overrides `data.dir`.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Overrides `out.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue from `<out>/last` when present.
        #[arg(long)]
        resume: bool,
    },
    /// Metric reports for one model, or two with a per-task sign test.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Partition TSV.
        #[arg(long)]
        partition: PathBuf,
        /// Output prefix; writes `<prefix>.json` and `<prefix>.csv`.
        #[arg(long)]
        output: PathBuf,
        /// Partition label used in the reports.
        #[arg(long, default_value = "test")]
        name: String,
        /// Second checkpoint to compare against.
        #[arg(long)]
        compare: Option<PathBuf>,
    },
    /// Print one prediction per task for a drug-protein pair.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        smiles: String,
        #[arg(long)]
        protein: String,
    },
}

fn config_help() -> String {
    let mut s = String::from("Config keys (file lines `key = value`, or --set key=value):\n");
    for (key, default, doc) in CONFIG_KEYS {
        let default = if default.is_empty() { "unset" } else { default };
        s.push_str(&format!("  {key:<26} {doc} [default: {default}]\n"));
    }
    s.push_str("\nExit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.");
    s
}

fn load_config(cli: &Cli) -> Result<RunConfig, TrainError> {
    let mut pairs = Vec::new();
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Invalid(format!("cannot read {}: {e}", path.display())))?;
        pairs.extend(parse_config_text(&text)?);
    }
    for o in &cli.overrides {
        pairs.push(parse_override(o)?);
    }
    if let Some(seed) = cli.seed {
        pairs.push(("train.seed".into(), seed.to_string()));
    }
    Ok(RunConfig::from_pairs(pairs)?)
}

fn run(cli: Cli) -> Result<(), TrainError> {
    let mut cfg = load_config(&cli)?;
    match cli.command {
        Command::Prepare {
            input,
            output,
            subset,
            plus,
        } => {
            let opts = PrepareOptions {
                seed: cfg.seed,
                subsets: subset,
                plus,
            };
            for m in cmd_prepare(&input, &output, &opts)? {
                let counts: Vec<String> = m.counts.iter().map(|(k, v)| format!("{k}={v}")).collect();
                println!("{}\t{}", m.name, counts.join(" "));
            }
        }
        Command::Train { data, out, resume } => {
            if data.is_some() {
                cfg.data_dir = data;
            }
            if out.is_some() {
                cfg.out_dir = out;
            }
            let log = cmd_train(&cfg, resume)?;
            println!("best_epoch\t{}", log.best_epoch);
            println!("best_validation_mse\t{}", log.best_validation);
        }
        Command::Eval {
            checkpoint,
            partition,
            output,
            name,
            compare,
        } => {
            let out = cmd_eval(&checkpoint, &partition, &name, &output, compare.as_deref())?;
            for r in &out.reports {
                for t in &r.tasks {
                    let f = |v: Option<f64>| v.map_or("NA".to_string(), |v| format!("{v:.6}"));
                    println!(
                        "{}\t{}\tn={}\tmse={}\tci={}",
                        r.model,
                        t.task.name(),
                        t.n_evaluated,
                        f(t.mse),
                        f(t.ci)
                    );
                }
            }
            for (task, s) in &out.sign_tests {
                println!("sign_test\t{}\tn={}\tlog10_p={:.4}", task.name(), s.n_pairs, s.log10_p);
            }
        }
        Command::Predict {
            checkpoint,
            smiles,
            protein,
        } => {
            for (task, v) in cmd_predict(&checkpoint, &smiles, &protein)? {
                println!("{}\t{v}", task.name());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let matches = Cli::command().after_help(config_help()).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
