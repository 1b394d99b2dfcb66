//! Training loops for Linear CCA, DCCA and NR-DCCA.
//!
//! All three share one loop: fixed-step gradient descent on the objective
//! in [`super::objective`], with encoders and the regularization weight
//! chosen by the method.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::{select_columns, MultiViewDataset};
use crate::error::{Error, Result};
use crate::eval::MetricRecord;
use crate::linalg::{self, Matrix};
use crate::models::encoder::{init_encoder, Encoder, EncoderKind, EncoderSpec};
use crate::models::objective::{loss_and_grad, Objective};
use crate::noise::{self, NoiseDist, NoiseSpec};
use crate::seeds::{self, Lane};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    LinearCca,
    Dcca,
    NrDcca,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::LinearCca, Method::Dcca, Method::NrDcca];

    pub fn name(self) -> &'static str {
        match self {
            Method::LinearCca => "linear_cca",
            Method::Dcca => "dcca",
            Method::NrDcca => "nr_dcca",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear_cca" => Ok(Method::LinearCca),
            "dcca" => Ok(Method::Dcca),
            "nr_dcca" => Ok(Method::NrDcca),
            other => Err(Error::contract(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub method: Method,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub ridge: f64,
    #[serde(default)]
    pub noise_dist: NoiseDist,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub hidden_dims: Vec<usize>,
    pub embed_dim: usize,
    #[serde(default)]
    pub nr_subsample: Option<usize>,
    /// Fresh noise for every batch instead of once per epoch.
    #[serde(default)]
    pub noise_per_batch: bool,
}

impl TrainConfig {
    /// Hyperparameters used for the synthetic benchmark.
    pub fn preset(method: Method) -> Self {
        let (learning_rate, alpha, ridge) = match method {
            Method::LinearCca => (1e-4, 0.0, 1e-3),
            Method::Dcca => (5e-3, 0.0, 1e-3),
            Method::NrDcca => (1.5e-2, 200.0, 0.0),
        };
        TrainConfig {
            method,
            learning_rate,
            epochs: 1200,
            batch_size: 2000,
            alpha,
            ridge,
            noise_dist: NoiseDist::Gaussian,
            seed: 0,
            hidden_dims: if method == Method::LinearCca { vec![] } else { vec![256] },
            embed_dim: 100,
            nr_subsample: None,
            noise_per_batch: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::contract(msg.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive and finite");
        }
        if self.epochs == 0 || self.batch_size == 0 || self.embed_dim == 0 {
            return bad("epochs, batch_size and embed_dim must be positive");
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be non-negative and finite");
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return bad("ridge must be non-negative and finite");
        }
        if self.hidden_dims.contains(&0) {
            return bad("hidden_dims entries must be positive");
        }
        if self.nr_subsample == Some(0) {
            return bad("nr_subsample must be positive when set");
        }
        if self.method == Method::LinearCca && !self.hidden_dims.is_empty() {
            return bad("linear_cca takes no hidden layers");
        }
        Ok(())
    }

    /// Regularization weight actually applied for this method.
    pub fn effective_alpha(&self) -> f64 {
        match self.method {
            Method::NrDcca => self.alpha,
            Method::LinearCca | Method::Dcca => 0.0,
        }
    }

    pub fn effective_batch(&self, n: usize) -> usize {
        self.batch_size.min(n)
    }

    /// Encoder shape for a view of dimension `input_dim`. Linear CCA maps
    /// to at most `input_dim` components.
    pub fn encoder_spec(&self, input_dim: usize) -> EncoderSpec {
        match self.method {
            Method::LinearCca => EncoderSpec {
                kind: EncoderKind::Linear,
                input_dim,
                hidden: vec![],
                output_dim: self.embed_dim.min(input_dim),
            },
            Method::Dcca | Method::NrDcca => EncoderSpec {
                kind: EncoderKind::Mlp,
                input_dim,
                hidden: self.hidden_dims.clone(),
                output_dim: self.embed_dim,
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub encoders: Vec<Encoder>,
    pub history: Vec<MetricRecord>,
    pub config: TrainConfig,
}

impl TrainedModel {
    pub fn encode_concat(&self, views: &[Matrix]) -> Result<Matrix> {
        encode_concat(&self.encoders, views)
    }
}

/// Stacks per-view encodings vertically: `(sum of output dims) x n`.
pub fn encode_concat(encoders: &[Encoder], views: &[Matrix]) -> Result<Matrix> {
    if encoders.len() != views.len() {
        return Err(Error::contract(format!(
            "{} encoders for {} views",
            encoders.len(),
            views.len()
        )));
    }
    let parts = encoders
        .iter()
        .zip(views)
        .map(|(e, v)| e.forward(v))
        .collect::<Result<Vec<_>>>()?;
    let n = parts[0].ncols();
    if parts.iter().any(|p| p.ncols() != n) {
        return Err(Error::contract("views disagree on sample count"));
    }
    let rows: usize = parts.iter().map(|p| p.nrows()).sum();
    let mut out = Matrix::zeros(rows, n);
    let mut at = 0;
    for p in &parts {
        out.rows_mut(at, p.nrows()).copy_from(p);
        at += p.nrows();
    }
    Ok(out)
}

/// Column index sets for one epoch. With a single batch the natural order
/// is kept; otherwise the order is shuffled and a short trailing batch is
/// folded into the previous one.
fn epoch_batches(n: usize, batch: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    if batch >= n {
        return vec![order];
    }
    order.shuffle(&mut seeds::rng(seeds::derive(seed, Lane::Shuffle, epoch as u64)));
    let mut out: Vec<Vec<usize>> = order.chunks(batch).map(|c| c.to_vec()).collect();
    if out.len() > 1 && out.last().map_or(false, |c| c.len() < batch) {
        let tail = out.pop().expect("non-empty");
        out.last_mut().expect("non-empty").extend(tail);
    }
    out
}

fn noise_for(cfg: &TrainConfig, dims: &[usize], cols: usize, stream: u64) -> Result<Vec<Matrix>> {
    dims.iter()
        .enumerate()
        .map(|(k, &rows)| {
            noise::sample(&NoiseSpec {
                dist: cfg.noise_dist,
                rows,
                cols,
                seed: seeds::derive(cfg.seed, Lane::TrainNoise, (stream << 8) | k as u64),
            })
        })
        .collect()
}

pub fn init_encoders(cfg: &TrainConfig, view_dims: &[usize]) -> Result<Vec<Encoder>> {
    view_dims
        .iter()
        .enumerate()
        .map(|(k, &d)| init_encoder(&cfg.encoder_spec(d), seeds::derive(cfg.seed, Lane::Init, k as u64)))
        .collect()
}

pub fn train(ds: &MultiViewDataset, cfg: &TrainConfig) -> Result<TrainedModel> {
    train_with(ds, cfg, |_, _| Ok(()))
}

/// Trains on the dataset's train split. `hook` sees each epoch's record
/// after the update, together with the updated encoders, and may fill in
/// probe metrics before the record is stored.
pub fn train_with<F>(ds: &MultiViewDataset, cfg: &TrainConfig, mut hook: F) -> Result<TrainedModel>
where
    F: FnMut(&mut MetricRecord, &[Encoder]) -> Result<()>,
{
    cfg.validate()?;
    let views = ds.train_views();
    for v in &views {
        linalg::check_finite(v, "training view")?;
    }
    let dims = ds.view_dims();
    let n = views[0].ncols();
    let batch = cfg.effective_batch(n);
    if batch < 2 {
        return Err(Error::contract("training needs at least two samples per batch"));
    }
    let obj = Objective {
        alpha: cfg.effective_alpha(),
        ridge: cfg.ridge,
        nr_subsample: cfg.nr_subsample,
    };
    let with_noise = cfg.method == Method::NrDcca;

    let mut encoders = init_encoders(cfg, &dims)?;
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let diverged = |detail: String| Error::Diverged { epoch, detail };
        let batches = epoch_batches(n, batch, cfg.seed, epoch);
        let widest = batches.iter().map(Vec::len).max().unwrap_or(0);
        let epoch_noise = if with_noise && !cfg.noise_per_batch {
            Some(noise_for(cfg, &dims, widest, epoch as u64)?)
        } else {
            None
        };

        let (mut loss, mut corr) = (0.0, 0.0);
        let mut zetas = vec![0.0; if with_noise { dims.len() } else { 0 }];
        for (b, idx) in batches.iter().enumerate() {
            let xb: Vec<Matrix> = if batches.len() == 1 {
                views.clone()
            } else {
                views.iter().map(|v| select_columns(v, idx)).collect()
            };
            let noise = match &epoch_noise {
                Some(full) => Some(full.iter().map(|a| a.columns(0, idx.len()).into_owned()).collect::<Vec<_>>()),
                None if with_noise => {
                    let stream = ((epoch as u64) << 20) | b as u64;
                    Some(noise_for(cfg, &dims, idx.len(), stream)?)
                }
                None => None,
            };
            let ev = loss_and_grad(&encoders, &xb, noise.as_deref(), &obj).map_err(|e| match e {
                Error::Singular { .. } | Error::NumericFailure { .. } | Error::NonFinite(_) => diverged(e.to_string()),
                other => other,
            })?;
            if !ev.loss.is_finite() || ev.grads.iter().any(|g| !g.is_finite()) {
                return Err(diverged(format!("non-finite loss or gradient (loss {})", ev.loss)));
            }
            for (enc, g) in encoders.iter_mut().zip(&ev.grads) {
                enc.apply_update(g, cfg.learning_rate);
            }
            if encoders.iter().any(|e| !e.is_finite()) {
                return Err(diverged("non-finite parameters after update".into()));
            }
            loss += ev.loss;
            corr += ev.corr;
            for (z, v) in zetas.iter_mut().zip(&ev.zetas) {
                *z += v;
            }
        }
        let nb = batches.len() as f64;
        zetas.iter_mut().for_each(|z| *z /= nb);
        let mut record = MetricRecord::new(epoch, loss / nb, corr / nb, zetas);
        hook(&mut record, &encoders)?;
        history.push(record);
    }
    Ok(TrainedModel {
        encoders,
        history,
        config: cfg.clone(),
    })
}
