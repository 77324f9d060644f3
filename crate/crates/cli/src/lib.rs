//! `usx` command-line pipeline: simulate a dataset, train a completion model,
//! complete held-out vertebrae, evaluate predictions and compare methods.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numerical failure (diverged training, non-finite model).

pub mod complete;
pub mod config;
pub mod error;
pub mod evaluate;
pub mod output;
pub mod simulate;
pub mod stats;
pub mod train;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::complete::{parse_split, Selection};
use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use usx_net::Mode;

#[derive(Debug, Parser)]
#[command(name = "usx", version, about = "Multi-modal vertebra shape completion pipeline")]
pub struct Cli {
    /// Experiment configuration (TOML); built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configuration's seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for simulation and evaluation.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Use the posterior mean instead of a sampled latent at completion.
    #[arg(long, global = true)]
    pub deterministic: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a dataset from the toy generator or from mesh files/directories.
    Simulate {
        #[arg(long)]
        out: PathBuf,
        /// Mesh files (one vertebra each) or directories (one spine each).
        meshes: Vec<PathBuf>,
    },
    /// Train a model on the train/val splits of a dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// baseline | ef | lf | ours; defaults to the configured ablation mode.
        #[arg(long)]
        mode: Option<String>,
    },
    /// Complete vertebrae with a trained model.
    Complete {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// train | val | test | all
        #[arg(long, default_value = "test")]
        split: String,
        /// Complete these sample directories instead of a split.
        #[arg(long)]
        sample: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predictions against ground truth (whole, arch and body).
    Evaluate {
        #[arg(long)]
        data: PathBuf,
        /// NAME=DIR, repeatable.
        #[arg(long, required = true)]
        pred: Vec<String>,
        #[arg(long, default_value = "test")]
        split: String,
        /// F1 threshold; overrides eval.tau.
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Paired Wilcoxon signed-rank tests between two methods' pairs.csv.
    Stats {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        method_a: Option<String>,
        #[arg(long)]
        method_b: Option<String>,
        /// Write the results as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> CliResult<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

pub fn execute(cli: Cli) -> CliResult<()> {
    if cli.jobs == 0 {
        return Err(CliError::usage("--jobs must be >= 1"));
    }
    let cfg = load_config(&cli)?;
    match &cli.command {
        Command::Simulate { out, meshes } => simulate::run(&cfg, out, cli.jobs, meshes),
        Command::Train { data, out, mode } => {
            let mode = match mode {
                Some(m) => m.parse::<Mode>()?,
                None => cfg.ablation.mode,
            };
            cfg.net_config(mode).validate()?;
            train::run(&cfg, data, out, mode)
        }
        Command::Complete {
            model,
            data,
            split,
            sample,
            out,
        } => {
            let selection = if sample.is_empty() {
                Selection::Split(parse_split(split)?)
            } else {
                Selection::Dirs(sample.clone())
            };
            complete::run(model, data, &selection, out, cfg.seed, cli.deterministic)
        }
        Command::Evaluate {
            data,
            pred,
            split,
            tau,
            out,
        } => {
            let preds = pred.iter().map(|p| evaluate::parse_pred(p)).collect::<CliResult<Vec<_>>>()?;
            let mut opts = cfg.eval;
            if let Some(t) = tau {
                if !(*t > 0.0 && t.is_finite()) {
                    return Err(CliError::usage("--tau must be a positive number"));
                }
                opts.tau = *t;
            }
            evaluate::run(data, &preds, parse_split(split)?, &opts, out, cli.jobs, &cfg.digest())
        }
        Command::Stats {
            a,
            b,
            method_a,
            method_b,
            out,
        } => stats::run(a, b, method_a.as_deref(), method_b.as_deref(), out.as_deref(), &cfg.digest()),
    }
}

/// Parses `args` and runs the command, printing errors to stderr. Returns the
/// process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}
