//! Experiment configs and the runner behind the command-line tool.
//!
//! An experiment is a grid of cells (method x common rate). Each cell
//! trains one model with probe metrics recorded every `cadence` epochs and
//! at the final epoch, then writes
//!
//! ```text
//! <out>/metrics/<method>_cr<CR>.jsonl   one MetricRecord per epoch
//! <out>/models/<method>_cr<CR>.json     checkpoint (not for concat)
//! <out>/metrics.csv                     probe epochs of every cell, tidy
//! <out>/summary.csv                     final epoch of every cell
//! ```
//!
//! Every file carries the hash of the resolved config that produced it.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{read_csv, write_atomic, MultiViewDataset, Provenance, Split};
use crate::error::{Error, Result};
use crate::eval::{mean_std, MetricRecord, ProbeSet};
use crate::models::{train_with, Checkpoint, Encoder, Method, TrainConfig};
use crate::noise::NoiseDist;
use crate::synthgen::{build_dataset, SynthConfig};

/// Environment variable that overrides the output root.
pub const OUT_ENV: &str = "MVCCA_OUT";
pub const DEFAULT_CADENCE: usize = 100;
/// Probes never use a ridge below this, so a ridge-free run can still be
/// probed on rank-deficient encodings.
pub const MIN_PROBE_RIDGE: f64 = 1e-6;

pub const PRESETS: [&str; 6] = [
    "synthetic-dcca",
    "synthetic-nr-dcca",
    "synthetic-table",
    "depth-ablation",
    "noise-ablation",
    "reduced",
];

/// A trained method or the untrained concatenation baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMethod {
    Concat,
    LinearCca,
    Dcca,
    NrDcca,
}

impl RunMethod {
    pub fn name(self) -> &'static str {
        match self {
            RunMethod::Concat => "concat",
            RunMethod::LinearCca => "linear_cca",
            RunMethod::Dcca => "dcca",
            RunMethod::NrDcca => "nr_dcca",
        }
    }

    pub fn trained(self) -> Option<Method> {
        match self {
            RunMethod::Concat => None,
            RunMethod::LinearCca => Some(Method::LinearCca),
            RunMethod::Dcca => Some(Method::Dcca),
            RunMethod::NrDcca => Some(Method::NrDcca),
        }
    }
}

impl std::str::FromStr for RunMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "concat" {
            return Ok(RunMethod::Concat);
        }
        Ok(match s.parse::<Method>()? {
            Method::LinearCca => RunMethod::LinearCca,
            Method::Dcca => RunMethod::Dcca,
            Method::NrDcca => RunMethod::NrDcca,
        })
    }
}

/// Partial [`TrainConfig`] applied on top of a method preset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOverrides {
    pub learning_rate: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub alpha: Option<f64>,
    pub ridge: Option<f64>,
    pub noise_dist: Option<NoiseDist>,
    pub hidden_dims: Option<Vec<usize>>,
    pub embed_dim: Option<usize>,
    pub nr_subsample: Option<usize>,
    pub noise_per_batch: Option<bool>,
}

impl TrainOverrides {
    fn apply(&self, cfg: &mut TrainConfig) {
        macro_rules! set {
            ($($f:ident),*) => {$(
                if let Some(v) = &self.$f {
                    cfg.$f = v.clone();
                }
            )*};
        }
        set!(learning_rate, epochs, batch_size, alpha, ridge, noise_dist, embed_dim, noise_per_batch);
        if let Some(h) = &self.hidden_dims {
            if cfg.method != Method::LinearCca {
                cfg.hidden_dims = h.clone();
            }
        }
        if self.nr_subsample.is_some() {
            cfg.nr_subsample = self.nr_subsample;
        }
    }
}

/// Where the data comes from: generated from a [`SynthConfig`] (one dataset
/// per common rate) or loaded from a dataset directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SynthConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_cadence")]
    pub cadence: usize,
    pub methods: Vec<RunMethod>,
    /// Sweep axis for synthetic data; ignored for a dataset path.
    #[serde(default = "default_rates")]
    pub common_rates: Vec<u32>,
    pub dataset: DatasetSpec,
    /// Keys are method names or `all` (applied first).
    #[serde(default)]
    pub overrides: BTreeMap<String, TrainOverrides>,
    /// Output root; `--out` and the environment override it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn default_cadence() -> usize {
    DEFAULT_CADENCE
}

fn default_rates() -> Vec<u32> {
    vec![40]
}

/// One (method, common rate) run of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cell {
    pub method: RunMethod,
    pub common_rate: Option<u32>,
}

impl Cell {
    pub fn stem(&self) -> String {
        match self.common_rate {
            Some(cr) => format!("{}_cr{cr}", self.method.name()),
            None => self.method.name().to_string(),
        }
    }
}

impl ExperimentConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let synthetic = |cr: u32| DatasetSpec {
            path: None,
            synthetic: Some(SynthConfig {
                common_rate: cr,
                ..SynthConfig::default()
            }),
        };
        let base = |methods: Vec<RunMethod>| ExperimentConfig {
            name: name.to_string(),
            seed: 0,
            cadence: DEFAULT_CADENCE,
            methods,
            common_rates: vec![40],
            dataset: synthetic(40),
            overrides: BTreeMap::new(),
            output_dir: None,
        };
        let cfg = match name {
            "synthetic-dcca" => base(vec![RunMethod::Dcca]),
            "synthetic-nr-dcca" => base(vec![RunMethod::NrDcca]),
            "synthetic-table" => ExperimentConfig {
                common_rates: SynthConfig::COMMON_RATES.to_vec(),
                ..base(vec![RunMethod::Concat, RunMethod::LinearCca, RunMethod::Dcca, RunMethod::NrDcca])
            },
            "depth-ablation" => {
                let mut cfg = base(vec![RunMethod::Dcca, RunMethod::NrDcca]);
                cfg.overrides.insert(
                    "all".into(),
                    TrainOverrides {
                        hidden_dims: Some(vec![256, 256, 256]),
                        ..TrainOverrides::default()
                    },
                );
                cfg
            }
            "noise-ablation" => {
                let mut cfg = base(vec![RunMethod::Dcca, RunMethod::NrDcca]);
                cfg.overrides.insert(
                    "nr_dcca".into(),
                    TrainOverrides {
                        noise_dist: Some(NoiseDist::Uniform),
                        ..TrainOverrides::default()
                    },
                );
                cfg
            }
            "reduced" => {
                let mut cfg = base(vec![RunMethod::Dcca, RunMethod::NrDcca]);
                cfg.dataset = DatasetSpec {
                    path: None,
                    // 500 test samples cannot support 200 probe features
                    // at unit noise, so the small preset is less noisy and
                    // narrower.
                    synthetic: Some(SynthConfig {
                        n: 1000,
                        view_noise_scale: 0.3,
                        common_rate: 40,
                        ..SynthConfig::default()
                    }),
                };
                cfg.overrides.insert(
                    "all".into(),
                    TrainOverrides {
                        epochs: Some(400),
                        hidden_dims: Some(vec![64]),
                        embed_dim: Some(32),
                        ..TrainOverrides::default()
                    },
                );
                cfg
            }
            other => {
                return Err(Error::contract(format!(
                    "unknown preset {other:?}; known presets: {}",
                    PRESETS.join(", ")
                )))
            }
        };
        Ok(cfg)
    }

    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::parse(origin, e.to_string()))?;
        cfg.validate().map_err(|e| Error::parse(origin, e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, path)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::contract(format!("config is not representable as TOML: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::contract("methods must not be empty"));
        }
        if self.cadence == 0 {
            return Err(Error::contract("cadence must be positive"));
        }
        match (&self.dataset.path, &self.dataset.synthetic) {
            (Some(_), None) => {}
            (None, Some(s)) => {
                if self.common_rates.is_empty() {
                    return Err(Error::contract("common_rates must not be empty"));
                }
                for &cr in &self.common_rates {
                    SynthConfig { common_rate: cr, ..s.clone() }.validate()?;
                }
            }
            _ => return Err(Error::contract("dataset needs exactly one of `path` or `synthetic`")),
        }
        for key in self.overrides.keys() {
            if key != "all" {
                key.parse::<Method>()?;
            }
        }
        for m in &self.methods {
            if let Some(method) = m.trained() {
                self.train_config(method).validate()?;
            }
        }
        Ok(())
    }

    /// Method preset, then `all` overrides, then per-method overrides; the
    /// seed is the experiment's master seed.
    pub fn train_config(&self, method: Method) -> TrainConfig {
        let mut cfg = TrainConfig::preset(method);
        if let Some(o) = self.overrides.get("all") {
            o.apply(&mut cfg);
        }
        if let Some(o) = self.overrides.get(method.name()) {
            o.apply(&mut cfg);
        }
        cfg.seed = self.seed;
        cfg
    }

    pub fn synth_config(&self, common_rate: u32) -> Option<SynthConfig> {
        self.dataset.synthetic.as_ref().map(|s| SynthConfig {
            common_rate,
            seed: self.seed,
            ..s.clone()
        })
    }

    pub fn cells(&self) -> Vec<Cell> {
        let rates: Vec<Option<u32>> = if self.dataset.synthetic.is_some() {
            self.common_rates.iter().map(|&c| Some(c)).collect()
        } else {
            vec![None]
        };
        rates
            .iter()
            .flat_map(|&cr| self.methods.iter().map(move |&m| Cell { method: m, common_rate: cr }))
            .collect()
    }

    /// SHA-256 of the config with the output location stripped, so the
    /// same experiment hashes identically wherever it is written.
    pub fn config_hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = None;
        let json = serde_json::to_string(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    /// `--out`, then the environment override, then the config, then
    /// `runs/<name>`.
    pub fn resolve_output(&self, cli_out: Option<&Path>) -> PathBuf {
        if let Some(p) = cli_out {
            return p.to_path_buf();
        }
        if let Some(p) = std::env::var_os(OUT_ENV) {
            return PathBuf::from(p).join(&self.name);
        }
        self.output_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from("runs").join(&self.name))
    }

    /// Dataset for a cell: generated for synthetic configs, loaded otherwise.
    pub fn dataset_for(&self, common_rate: Option<u32>) -> Result<MultiViewDataset> {
        match (&self.dataset.path, common_rate.and_then(|cr| self.synth_config(cr))) {
            (Some(path), _) => MultiViewDataset::load(path),
            (None, Some(s)) => build_dataset(&s),
            (None, None) => Err(Error::contract("synthetic dataset needs a common rate")),
        }
    }
}

/// Hex SHA-256 of a string, for outputs whose provenance is not an
/// experiment config.
pub fn hash_str(s: &str) -> String {
    hex::encode(Sha256::digest(s.as_bytes()))
}

pub fn data_dir(out: &Path, common_rate: u32) -> PathBuf {
    out.join("data").join(format!("cr{common_rate}"))
}

/// Writes one dataset directory per common rate.
pub fn gen_data(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    if cfg.dataset.synthetic.is_none() {
        return Err(Error::contract("gen-data needs a synthetic dataset config"));
    }
    let hash = cfg.config_hash();
    cfg.common_rates
        .iter()
        .map(|&cr| {
            let dir = data_dir(out, cr);
            cfg.dataset_for(Some(cr))?.save(&dir, &hash)?;
            Ok(dir)
        })
        .collect()
}

/// Final-epoch metrics of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub common_rate: Option<u32>,
    pub epoch: usize,
    pub mean_r2: f64,
    pub r2_std: f64,
    pub corr_with_noise: f64,
    pub raw_corr_with_noise: f64,
    pub nesum_mean: f64,
    pub recon_loss: f64,
    pub denoise_loss: f64,
}

fn mean(v: &[f64]) -> f64 {
    mean_std(v).0
}

impl SummaryRow {
    pub fn from_record(method: RunMethod, common_rate: Option<u32>, rec: &MetricRecord) -> Result<Self> {
        let p = rec
            .probes
            .as_ref()
            .ok_or_else(|| Error::contract(format!("epoch {} has no probe metrics", rec.epoch)))?;
        Ok(SummaryRow {
            method: method.name().to_string(),
            common_rate,
            epoch: rec.epoch,
            mean_r2: p.mean_r2,
            r2_std: p.r2_std,
            corr_with_noise: mean(&p.corr_with_noise),
            raw_corr_with_noise: mean(&p.raw_corr_with_noise),
            nesum_mean: p.nesum_mean,
            recon_loss: mean(&p.recon_loss),
            denoise_loss: mean(&p.denoise_loss),
        })
    }
}

const SUMMARY_HEADER: &str =
    "config_hash,method,common_rate,epoch,mean_r2,r2_std,corr_with_noise,raw_corr_with_noise,nesum_mean,recon_loss,denoise_loss";

fn summary_line(out: &mut String, hash: &str, r: &SummaryRow) {
    let cr = r.common_rate.map(|c| c.to_string()).unwrap_or_default();
    writeln!(
        out,
        "{hash},{},{cr},{},{},{},{},{},{},{},{}",
        r.method,
        r.epoch,
        r.mean_r2,
        r.r2_std,
        r.corr_with_noise,
        r.raw_corr_with_noise,
        r.nesum_mean,
        r.recon_loss,
        r.denoise_loss
    )
    .expect("write to String");
}

pub fn summary_csv(rows: &[SummaryRow], hash: &str) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in rows {
        summary_line(&mut out, hash, r);
    }
    out
}

/// Reads a summary CSV back (used by tests and downstream tooling).
pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::parse(path, e.to_string()))?;
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse()
                .map_err(|_| Error::parse(path, format!("row {}: bad number {:?}", rows.len() + 2, &rec[i])))
        };
        rows.push(SummaryRow {
            method: rec[1].to_string(),
            common_rate: if rec[2].is_empty() { None } else { Some(num(2)? as u32) },
            epoch: num(3)? as usize,
            mean_r2: num(4)?,
            r2_std: num(5)?,
            corr_with_noise: num(6)?,
            raw_corr_with_noise: num(7)?,
            nesum_mean: num(8)?,
            recon_loss: num(9)?,
            denoise_loss: num(10)?,
        });
    }
    Ok(rows)
}

/// Outcome of one cell.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub cell: Cell,
    pub history: Vec<MetricRecord>,
    pub summary: SummaryRow,
    pub encoders: Vec<Encoder>,
    pub train_config: Option<TrainConfig>,
}

impl CellResult {
    /// Probe-bearing records, in epoch order.
    pub fn probe_records(&self) -> impl Iterator<Item = &MetricRecord> {
        self.history.iter().filter(|r| r.probes.is_some())
    }

    pub fn probe_at(&self, epoch: usize) -> Option<&crate::eval::Probes> {
        self.history
            .iter()
            .find(|r| r.epoch == epoch)
            .and_then(|r| r.probes.as_ref())
    }
}

fn probe_ridge(ridge: f64) -> f64 {
    ridge.max(MIN_PROBE_RIDGE)
}

/// Probe set matching a training config; `evaluate` rebuilds the same one
/// from a checkpoint.
pub fn probe_set(ds: &MultiViewDataset, cfg: &TrainConfig) -> Result<ProbeSet> {
    ProbeSet::new(ds, cfg.noise_dist, probe_ridge(cfg.ridge), cfg.seed)
}

fn jsonl(history: &[MetricRecord], hash: &str) -> Result<String> {
    #[derive(Serialize)]
    struct Line<'a> {
        config_hash: &'a str,
        #[serde(flatten)]
        record: &'a MetricRecord,
    }
    let mut out = String::new();
    for record in history {
        out.push_str(&serde_json::to_string(&Line { config_hash: hash, record })?);
        out.push('\n');
    }
    Ok(out)
}

/// Trains (or, for concat, evaluates) one cell on `ds`. With `out` set,
/// metrics and the checkpoint are written there; the metric stream is
/// written even when training diverges.
pub fn run_cell(cfg: &ExperimentConfig, cell: Cell, ds: &MultiViewDataset, out: Option<&Path>) -> Result<CellResult> {
    let hash = cfg.config_hash();
    let write_metrics = |history: &[MetricRecord]| -> Result<()> {
        if let Some(out) = out {
            let dir = out.join("metrics");
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            write_atomic(&dir.join(format!("{}.jsonl", cell.stem())), jsonl(history, &hash)?.as_bytes())?;
        }
        Ok(())
    };

    let Some(method) = cell.method.trained() else {
        let encoders: Vec<Encoder> = ds.view_dims().iter().map(|&d| Encoder::identity(d)).collect();
        // Concat is probed with the DCCA ridge and the master seed.
        let reference = cfg.train_config(Method::Dcca);
        let probes = probe_set(ds, &reference)?.run(&encoders)?;
        let mut rec = MetricRecord::new(0, 0.0, 0.0, Vec::new());
        rec.probes = Some(probes);
        let history = vec![rec];
        write_metrics(&history)?;
        return Ok(CellResult {
            cell,
            summary: SummaryRow::from_record(cell.method, cell.common_rate, &history[0])?,
            history,
            encoders,
            train_config: None,
        });
    };

    let tcfg = cfg.train_config(method);
    let probes = probe_set(ds, &tcfg)?;
    let mut history = Vec::with_capacity(tcfg.epochs);
    let cadence = cfg.cadence;
    let epochs = tcfg.epochs;
    let result = train_with(ds, &tcfg, |rec, encs| {
        if rec.epoch % cadence == 0 || rec.epoch == epochs {
            rec.probes = Some(probes.run(encs)?);
        }
        history.push(rec.clone());
        Ok(())
    });
    write_metrics(&history)?;
    let model = result?;
    tracing::info!(cell = %cell.stem(), "cell finished");
    if let Some(out) = out {
        let dir = out.join("models");
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Checkpoint {
            config_hash: hash.clone(),
            config: tcfg.clone(),
            encoders: model.encoders.clone(),
        }
        .save(&dir.join(format!("{}.json", cell.stem())))?;
    }
    let last = model.history.last().expect("epochs > 0");
    Ok(CellResult {
        cell,
        summary: SummaryRow::from_record(cell.method, cell.common_rate, last)?,
        history: model.history,
        encoders: model.encoders,
        train_config: Some(tcfg),
    })
}

const METRICS_HEADER: &str = "config_hash,method,common_rate,epoch,corr_value,nr_loss_mean,mean_r2,r2_std,corr_with_noise,raw_corr_with_noise,nesum_mean,recon_loss,denoise_loss";

/// Tidy table of every probe epoch of every cell.
pub fn metrics_csv(results: &[CellResult], hash: &str) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in results {
        for rec in r.probe_records() {
            let p = rec.probes.as_ref().expect("filtered");
            let cr = r.cell.common_rate.map(|c| c.to_string()).unwrap_or_default();
            let nr = if rec.nr_losses.is_empty() { String::new() } else { mean(&rec.nr_losses).to_string() };
            writeln!(
                out,
                "{hash},{},{cr},{},{},{nr},{},{},{},{},{},{},{}",
                r.cell.method.name(),
                rec.epoch,
                rec.corr_value,
                p.mean_r2,
                p.r2_std,
                mean(&p.corr_with_noise),
                mean(&p.raw_corr_with_noise),
                p.nesum_mean,
                mean(&p.recon_loss),
                mean(&p.denoise_loss)
            )
            .expect("write to String");
        }
    }
    out
}

/// Runs every cell, `jobs` at a time, and writes the CSV tables. Results
/// come back in cell order regardless of scheduling.
pub fn run_experiment(cfg: &ExperimentConfig, out: Option<&Path>, jobs: usize) -> Result<Vec<CellResult>> {
    cfg.validate()?;
    let cells = cfg.cells();
    let rates: Vec<Option<u32>> = {
        let mut r: Vec<Option<u32>> = cells.iter().map(|c| c.common_rate).collect();
        r.dedup();
        r
    };
    let datasets: BTreeMap<Option<u32>, MultiViewDataset> = rates
        .iter()
        .map(|&cr| Ok((cr, cfg.dataset_for(cr)?)))
        .collect::<Result<_>>()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::contract(format!("cannot start worker pool: {e}")))?;
    let results: Vec<CellResult> = pool.install(|| {
        cells
            .par_iter()
            .map(|&cell| run_cell(cfg, cell, &datasets[&cell.common_rate], out))
            .collect::<Result<Vec<_>>>()
    })?;
    if let Some(out) = out {
        let hash = cfg.config_hash();
        let rows: Vec<SummaryRow> = results.iter().map(|r| r.summary.clone()).collect();
        write_atomic(&out.join("summary.csv"), summary_csv(&rows, &hash).as_bytes())?;
        write_atomic(&out.join("metrics.csv"), metrics_csv(&results, &hash).as_bytes())?;
        write_atomic(&out.join("config.toml"), cfg.to_toml()?.as_bytes())?;
    }
    Ok(results)
}

/// Re-runs the probes of a saved model on a dataset's test split.
pub fn evaluate_checkpoint(ck: &Checkpoint, ds: &MultiViewDataset) -> Result<SummaryRow> {
    let dims = ds.view_dims();
    let expected: Vec<usize> = ck.encoders.iter().map(|e| e.input_dim()).collect();
    if dims != expected {
        return Err(Error::contract(format!(
            "checkpoint expects view dimensions {expected:?}, dataset has {dims:?}"
        )));
    }
    let probes = probe_set(ds, &ck.config)?.run(&ck.encoders)?;
    let common_rate = match &ds.provenance {
        Provenance::Synthetic { config } => Some(config.common_rate),
        Provenance::External { .. } => None,
    };
    let method = match ck.config.method {
        Method::LinearCca => RunMethod::LinearCca,
        Method::Dcca => RunMethod::Dcca,
        Method::NrDcca => RunMethod::NrDcca,
    };
    let mut rec = MetricRecord::new(ck.config.epochs, 0.0, 0.0, Vec::new());
    rec.probes = Some(probes);
    SummaryRow::from_record(method, common_rate, &rec)
}

/// How to split ingested samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SplitSpec {
    /// Leading fraction of columns for training.
    Fraction(f64),
    /// Leading count of columns for training.
    Count(usize),
}

impl std::str::FromStr for SplitSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Ok(n) = s.parse::<usize>() {
            return Ok(SplitSpec::Count(n));
        }
        match s.parse::<f64>() {
            Ok(f) if f > 0.0 && f < 1.0 => Ok(SplitSpec::Fraction(f)),
            _ => Err(Error::contract(format!(
                "split must be a train count or a fraction in (0, 1), got {s:?}"
            ))),
        }
    }
}

/// Builds a dataset from per-view CSVs (features x samples) and a task CSV.
pub fn ingest(view_paths: &[PathBuf], task_path: &Path, split: SplitSpec) -> Result<MultiViewDataset> {
    let views = view_paths.iter().map(|p| read_csv(p)).collect::<Result<Vec<_>>>()?;
    let tasks = read_csv(task_path)?;
    let n = tasks.ncols();
    for (p, v) in view_paths.iter().zip(&views) {
        if v.ncols() != n {
            return Err(Error::parse(
                p,
                format!("{} columns, but the task file has {n}", v.ncols()),
            ));
        }
    }
    let n_train = match split {
        SplitSpec::Count(c) => c,
        SplitSpec::Fraction(f) => (f * n as f64).round() as usize,
    };
    if n_train == 0 || n_train >= n {
        return Err(Error::contract(format!("split leaves an empty side ({n_train} of {n} for training)")));
    }
    let source = view_paths
        .iter()
        .chain(std::iter::once(&task_path.to_path_buf()))
        .map(|p| p.display().to_string())
        .collect::<Vec<_>>()
        .join(",");
    MultiViewDataset::new(views, tasks, Split::leading(n, n_train), Provenance::External { source })
}
