//! `mvcca`: generate synthetic multi-view data, train Linear CCA / DCCA /
//! NR-DCCA, evaluate checkpoints, ingest external CSV data and run sweeps.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mvcca::dataset::{write_atomic, MultiViewDataset};
use mvcca::experiment::{
    self, evaluate_checkpoint, gen_data, hash_str, run_experiment, summary_csv, DatasetSpec, ExperimentConfig,
    RunMethod, SplitSpec,
};
use mvcca::models::Checkpoint;

#[derive(Parser)]
#[command(name = "mvcca", version, about = "Multi-view CCA experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML experiment config.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in experiment preset.
    #[arg(long)]
    preset: Option<String>,
    /// Master seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides MVCCA_OUT and the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Epochs between probe records (overrides the config).
    #[arg(long)]
    cadence: Option<usize>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => ExperimentConfig::load(path)?,
            (None, Some(name)) => ExperimentConfig::preset(name)?,
            (None, None) => bail!(
                "pass --config PATH or --preset NAME (presets: {})",
                experiment::PRESETS.join(", ")
            ),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(c) = self.cadence {
            cfg.cadence = c;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write one synthetic dataset directory per common rate.
    GenData {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Train the config's methods on one dataset.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Dataset directory to train on instead of the config's dataset.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Restrict to these methods (repeatable).
        #[arg(long = "method")]
        methods: Vec<String>,
    },
    /// Probe a checkpoint on a dataset's test split.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Summary CSV path (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convert view and task CSVs into a dataset directory.
    Ingest {
        /// View CSV, features x samples (repeat once per view).
        #[arg(long = "view", required = true)]
        views: Vec<PathBuf>,
        #[arg(long)]
        tasks: PathBuf,
        /// Leading training count, or a fraction in (0, 1).
        #[arg(long, default_value = "0.5")]
        split: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every (method, common rate) cell of the config.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Cells run concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

fn report(out: &Path, rows: usize) {
    println!("wrote {rows} summary rows to {}", out.join("summary.csv").display());
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { cfg } => {
            let exp = cfg.load()?;
            let out = exp.resolve_output(cfg.out.as_deref());
            for dir in gen_data(&exp, &out)? {
                println!("{}", dir.display());
            }
        }
        Command::Train { cfg, dataset, methods } => {
            let mut exp = cfg.load()?;
            if let Some(path) = dataset {
                exp.dataset = DatasetSpec {
                    path: Some(path),
                    synthetic: None,
                };
            } else if exp.common_rates.len() > 1 {
                bail!("train runs one dataset; use `sweep` for several common rates");
            }
            if !methods.is_empty() {
                exp.methods = methods
                    .iter()
                    .map(|m| m.parse::<RunMethod>())
                    .collect::<mvcca::Result<Vec<_>>>()?;
            }
            exp.validate()?;
            let out = exp.resolve_output(cfg.out.as_deref());
            let results = run_experiment(&exp, Some(&out), 1)?;
            report(&out, results.len());
        }
        Command::Evaluate { checkpoint, dataset, out } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let ds = MultiViewDataset::load(&dataset)?;
            let row = evaluate_checkpoint(&ck, &ds)
                .with_context(|| format!("evaluating {} on {}", checkpoint.display(), dataset.display()))?;
            let text = summary_csv(&[row], &ck.config_hash);
            match out {
                Some(path) => write_atomic(&path, text.as_bytes())?,
                None => print!("{text}"),
            }
        }
        Command::Ingest { views, tasks, split, out } => {
            let spec: SplitSpec = split.parse()?;
            let ds = experiment::ingest(&views, &tasks, spec)?;
            let provenance = format!("{views:?}|{tasks:?}|{split}");
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            ds.save(&out, &hash_str(&provenance))?;
            println!("{}", out.display());
        }
        Command::Sweep { cfg, jobs } => {
            let exp = cfg.load()?;
            let out = exp.resolve_output(cfg.out.as_deref());
            let results = run_experiment(&exp, Some(&out), jobs)?;
            report(&out, results.len());
        }
    }
    Ok(())
}

fn main() {
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
