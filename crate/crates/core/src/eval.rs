//! Downstream probes and collapse diagnostics.
//!
//! Representations are judged by ridge-regression R2 on the regression
//! tasks (k-fold cross-validated on the test split) and diagnosed by
//! correlation with noise, NESum of the encoder weights, and the linear
//! reconstruction/denoising residuals.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::correlation::{center_rows, corr_pair};
use crate::dataset::MultiViewDataset;
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::models::{encode_concat, Encoder};
use crate::noise::{self, NoiseDist, NoiseSpec};
use crate::seeds::{self, Lane};

pub const DEFAULT_FOLDS: usize = 5;
pub const DEFAULT_PROBE_LAMBDA: f64 = 1.0;

/// Cheap per-epoch training quantities plus, at probe epochs, the full
/// diagnostic set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub epoch: usize,
    pub loss: f64,
    /// Training correlation summed over view pairs, averaged over batches.
    pub corr_value: f64,
    /// zeta_k per view (empty unless the method draws regularization noise).
    pub nr_losses: Vec<f64>,
    #[serde(flatten, default, skip_serializing_if = "Option::is_none")]
    pub probes: Option<Probes>,
}

impl MetricRecord {
    pub fn new(epoch: usize, loss: f64, corr_value: f64, nr_losses: Vec<f64>) -> Self {
        MetricRecord {
            epoch,
            loss,
            corr_value,
            nr_losses,
            probes: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probes {
    pub mean_r2: f64,
    /// Standard deviation of the per-task R2 values.
    pub r2_std: f64,
    pub task_r2: Vec<f64>,
    pub corr_with_noise: Vec<f64>,
    /// `Corr(X_k, A_k)` on the raw test views with the same noise.
    pub raw_corr_with_noise: Vec<f64>,
    pub nesum_mean: f64,
    pub recon_loss: Vec<f64>,
    pub denoise_loss: Vec<f64>,
    pub first_layer_spectrum: Vec<Vec<f64>>,
}

/// Ridge regression on row-standardized features: `coef` maps
/// standardized `Z` to centered targets.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeFit {
    pub mean: DVector<f64>,
    /// Per-feature train standard deviation (1 for constant features).
    pub scale: DVector<f64>,
    /// tasks x features
    pub coef: Matrix,
    pub intercept: DVector<f64>,
}

fn row_stats(m: &Matrix) -> (DVector<f64>, DVector<f64>) {
    let n = m.ncols() as f64;
    let mean = m.column_mean();
    let scale = DVector::from_fn(m.nrows(), |r, _| {
        let var = m.row(r).iter().map(|v| (v - mean[r]).powi(2)).sum::<f64>() / n;
        if var > 0.0 {
            var.sqrt()
        } else {
            1.0
        }
    });
    (mean, scale)
}

fn standardize(m: &Matrix, mean: &DVector<f64>, scale: &DVector<f64>) -> Matrix {
    Matrix::from_fn(m.nrows(), m.ncols(), |r, c| (m[(r, c)] - mean[r]) / scale[r])
}

/// Fits `w = (Z Z' + lambda I)^{-1} Z y'` on standardized train features
/// and centered train targets.
pub fn fit_ridge(z: &Matrix, y: &Matrix, lambda: f64) -> Result<RidgeFit> {
    if z.ncols() != y.ncols() || z.ncols() < 2 {
        return Err(Error::contract(format!(
            "ridge needs matching sample counts >= 2, got {} and {}",
            z.ncols(),
            y.ncols()
        )));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::contract(format!("lambda must be non-negative, got {lambda}")));
    }
    let (mean, scale) = row_stats(z);
    let zs = standardize(z, &mean, &scale);
    let intercept = y.column_mean();
    let yc = Matrix::from_fn(y.nrows(), y.ncols(), |r, c| y[(r, c)] - intercept[r]);
    let gram = linalg::mul_bt(&zs, &zs) + Matrix::identity(z.nrows(), z.nrows()) * lambda;
    let rhs = linalg::mul_bt(&zs, &yc);
    let coef_t = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => linalg::pinv_default(&gram)? * rhs,
    };
    Ok(RidgeFit {
        mean,
        scale,
        coef: coef_t.transpose(),
        intercept,
    })
}

impl RidgeFit {
    pub fn predict(&self, z: &Matrix) -> Matrix {
        let mut out = &self.coef * standardize(z, &self.mean, &self.scale);
        for mut col in out.column_iter_mut() {
            col += &self.intercept;
        }
        out
    }
}

/// Per-task `1 - SSE/SST`, SST about the test-target mean.
pub fn r2_scores(y: &Matrix, pred: &Matrix) -> Result<Vec<f64>> {
    if y.shape() != pred.shape() {
        return Err(Error::contract("prediction shape does not match targets"));
    }
    (0..y.nrows())
        .map(|t| {
            let row = y.row(t);
            let mean = row.mean();
            let sst: f64 = row.iter().map(|v| (v - mean).powi(2)).sum();
            if sst <= 0.0 {
                return Err(Error::UndefinedMetric(format!("task {t} has zero variance on the test fold")));
            }
            let sse: f64 = row.iter().zip(pred.row(t).iter()).map(|(a, b)| (a - b).powi(2)).sum();
            Ok(1.0 - sse / sst)
        })
        .collect()
}

pub fn ridge_r2_multi(
    z_train: &Matrix,
    y_train: &Matrix,
    z_test: &Matrix,
    y_test: &Matrix,
    lambda: f64,
) -> Result<Vec<f64>> {
    if z_train.nrows() != z_test.nrows() || y_train.nrows() != y_test.nrows() || z_test.ncols() != y_test.ncols() {
        return Err(Error::contract("ridge_r2 train/test shapes disagree"));
    }
    let fit = fit_ridge(z_train, y_train, lambda)?;
    r2_scores(y_test, &fit.predict(z_test))
}

/// R2 of a single target row.
pub fn ridge_r2(z_train: &Matrix, y_train: &Matrix, z_test: &Matrix, y_test: &Matrix, lambda: f64) -> Result<f64> {
    if y_train.nrows() != 1 {
        return Err(Error::contract("ridge_r2 takes a single target row"));
    }
    Ok(ridge_r2_multi(z_train, y_train, z_test, y_test, lambda)?[0])
}

#[derive(Debug, Clone, PartialEq)]
pub struct KFoldResult {
    /// Mean over folds and tasks.
    pub mean: f64,
    /// Standard deviation across tasks of the fold-averaged R2.
    pub std: f64,
    pub per_task: Vec<f64>,
    /// Mean over tasks, per fold.
    pub per_fold: Vec<f64>,
}

/// Contiguous fold `f` covers columns `[f n / k, (f + 1) n / k)`.
pub fn fold_bounds(n: usize, k: usize, f: usize) -> (usize, usize) {
    (f * n / k, (f + 1) * n / k)
}

pub fn kfold_mean_r2(z: &Matrix, tasks: &Matrix, k: usize, lambda: f64) -> Result<KFoldResult> {
    let n = z.ncols();
    if tasks.ncols() != n {
        return Err(Error::contract("representation and tasks disagree on sample count"));
    }
    if k < 2 || n < k {
        return Err(Error::contract(format!("need 2 <= k <= n, got k = {k}, n = {n}")));
    }
    let mut sums = vec![0.0; tasks.nrows()];
    let mut per_fold = Vec::with_capacity(k);
    for f in 0..k {
        let (lo, hi) = fold_bounds(n, k, f);
        let train: Vec<usize> = (0..lo).chain(hi..n).collect();
        let pick = |m: &Matrix, idx: &[usize]| Matrix::from_fn(m.nrows(), idx.len(), |r, c| m[(r, idx[c])]);
        let scores = ridge_r2_multi(
            &pick(z, &train),
            &pick(tasks, &train),
            &z.columns(lo, hi - lo).into_owned(),
            &tasks.columns(lo, hi - lo).into_owned(),
            lambda,
        )?;
        per_fold.push(scores.iter().sum::<f64>() / scores.len() as f64);
        for (s, v) in sums.iter_mut().zip(scores) {
            *s += v;
        }
    }
    let per_task: Vec<f64> = sums.iter().map(|s| s / k as f64).collect();
    let (mean, std) = mean_std(&per_task);
    Ok(KFoldResult {
        mean,
        std,
        per_task,
        per_fold,
    })
}

/// Mean and population standard deviation.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn centered(m: &Matrix) -> Result<Matrix> {
    Ok(center_rows(m)?.data)
}

/// `min_P ||P Z - X||_F / ||X||_F` on row-centered data.
pub fn reconstruction_loss(z: &Matrix, x: &Matrix) -> Result<f64> {
    if z.ncols() != x.ncols() {
        return Err(Error::contract("reconstruction_loss needs equal sample counts"));
    }
    let xc = centered(x)?;
    let norm = xc.norm();
    if norm == 0.0 {
        return Err(Error::UndefinedMetric("reconstruction target is constant".into()));
    }
    Ok(linalg::least_squares_residual(&centered(z)?, &xc)? / norm)
}

/// `min_Q ||Q enc(X + A) - enc(X)||_F` on row-centered encodings.
pub fn denoising_residual(enc: &Encoder, x: &Matrix, a: &Matrix) -> Result<(f64, f64)> {
    if x.shape() != a.shape() {
        return Err(Error::contract("denoising_loss needs X and A of the same shape"));
    }
    let clean = centered(&enc.forward(x)?)?;
    let noisy = centered(&enc.forward(&(x + a))?)?;
    Ok((linalg::least_squares_residual(&noisy, &clean)?, clean.norm()))
}

/// Denoising residual relative to `||enc(X)||_F`.
pub fn denoising_loss(enc: &Encoder, x: &Matrix, a: &Matrix) -> Result<f64> {
    let (res, norm) = denoising_residual(enc, x, a)?;
    if norm == 0.0 {
        return Err(Error::UndefinedMetric("encoding of X is constant".into()));
    }
    Ok(res / norm)
}

/// Row-cosine-similarity matrix of `W`; zero rows are dropped.
fn cosine_similarity(w: &Matrix) -> Result<Matrix> {
    let norms: Vec<f64> = w.row_iter().map(|r| r.norm()).collect();
    let keep: Vec<usize> = (0..w.nrows()).filter(|&r| norms[r] > 0.0).collect();
    if keep.is_empty() {
        return Err(Error::UndefinedMetric("weight matrix is all zeros".into()));
    }
    if keep.len() < w.nrows() {
        tracing::warn!(dropped = w.nrows() - keep.len(), "zero rows excluded from similarity");
    }
    let unit = Matrix::from_fn(keep.len(), w.ncols(), |r, c| w[(keep[r], c)] / norms[keep[r]]);
    Ok(linalg::symmetrize(&linalg::mul_bt(&unit, &unit)))
}

/// Descending eigenvalues of the row-cosine-similarity matrix.
pub fn weight_spectrum(w: &Matrix) -> Result<Vec<f64>> {
    linalg::check_finite(w, "weight matrix")?;
    Ok(linalg::sym_eig(&cosine_similarity(w)?)?.values)
}

/// `(1/out) sum_i lambda_i / lambda_1` over the similarity spectrum.
pub fn nesum(w: &Matrix) -> Result<f64> {
    let spec = weight_spectrum(w)?;
    let top = spec[0];
    Ok(spec.iter().map(|l| l / top).sum::<f64>() / spec.len() as f64)
}

/// Mean NESum over all weight matrices of an encoder.
pub fn encoder_nesum(enc: &Encoder) -> Result<f64> {
    let values = enc.weights().map(nesum).collect::<Result<Vec<_>>>()?;
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// `Corr(enc(X), enc(A))` on row-centered encodings.
pub fn corr_with_noise(enc: &Encoder, x: &Matrix, a: &Matrix, ridge: f64) -> Result<f64> {
    if x.shape() != a.shape() {
        return Err(Error::contract("corr_with_noise needs X and A of the same shape"));
    }
    let ex = center_rows(&enc.forward(x)?)?;
    let ea = center_rows(&enc.forward(a)?)?;
    Ok(corr_pair(&ex, &ea, ridge)?.value)
}

/// Fixed evaluation inputs for one run: the test split and one noise draw
/// per view, reused at every probe epoch so curves are comparable.
#[derive(Debug, Clone)]
pub struct ProbeSet {
    pub test_views: Vec<Matrix>,
    pub test_tasks: Matrix,
    pub noise: Vec<Matrix>,
    pub raw_corr_with_noise: Vec<f64>,
    pub ridge: f64,
    pub lambda: f64,
    pub folds: usize,
}

impl ProbeSet {
    pub fn new(ds: &MultiViewDataset, dist: NoiseDist, ridge: f64, seed: u64) -> Result<Self> {
        let test_views = ds.test_views();
        let noise = test_views
            .iter()
            .enumerate()
            .map(|(k, v)| {
                noise::sample(&NoiseSpec {
                    dist,
                    rows: v.nrows(),
                    cols: v.ncols(),
                    seed: seeds::derive(seed, Lane::EvalNoise, k as u64),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let raw_corr_with_noise = test_views
            .iter()
            .zip(&noise)
            .map(|(x, a)| Ok(corr_pair(&center_rows(x)?, &center_rows(a)?, ridge)?.value))
            .collect::<Result<Vec<_>>>()?;
        Ok(ProbeSet {
            test_views,
            test_tasks: ds.test_tasks(),
            noise,
            raw_corr_with_noise,
            ridge,
            lambda: DEFAULT_PROBE_LAMBDA,
            folds: DEFAULT_FOLDS,
        })
    }

    /// Downstream R2 only.
    pub fn r2(&self, encoders: &[Encoder]) -> Result<KFoldResult> {
        let z = encode_concat(encoders, &self.test_views)?;
        kfold_mean_r2(&z, &self.test_tasks, self.folds, self.lambda)
    }

    pub fn run(&self, encoders: &[Encoder]) -> Result<Probes> {
        let r2 = self.r2(encoders)?;
        let mut probes = Probes {
            mean_r2: r2.mean,
            r2_std: r2.std,
            task_r2: r2.per_task,
            corr_with_noise: Vec::new(),
            raw_corr_with_noise: self.raw_corr_with_noise.clone(),
            nesum_mean: 0.0,
            recon_loss: Vec::new(),
            denoise_loss: Vec::new(),
            first_layer_spectrum: Vec::new(),
        };
        for ((enc, x), a) in encoders.iter().zip(&self.test_views).zip(&self.noise) {
            probes.corr_with_noise.push(corr_with_noise(enc, x, a, self.ridge)?);
            probes.nesum_mean += encoder_nesum(enc)? / encoders.len() as f64;
            probes.recon_loss.push(reconstruction_loss(&enc.forward(x)?, x)?);
            probes.denoise_loss.push(denoising_loss(enc, x, a)?);
            probes.first_layer_spectrum.push(weight_spectrum(&enc.layers()[0].weight)?);
        }
        Ok(probes)
    }
}
