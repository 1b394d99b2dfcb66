//! Synthetic multi-view benchmarks.
//!
//! A latent "god embedding" `G` (d x n, i.i.d. standard normal) is sliced
//! into two overlapping feature ranges whose overlap is set by the common
//! rate. Each slice is perturbed with Gaussian noise and pushed through a
//! frozen random one-hidden-layer ReLU network to form a view. Downstream
//! regression targets are random linear read-outs of the full `G`.

use std::ops::Range;

use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use crate::dataset::{MultiViewDataset, Provenance, Split};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::seeds::{self, Lane};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub d: usize,
    pub n: usize,
    /// Percent of overlap between the two views' slices of `G`.
    pub common_rate: u32,
    /// Std of the Gaussian noise added to `G` before the view MLP. Unit
    /// noise puts raw-view regression near R2 = 0.3, the regime where DCCA
    /// collapse is visible.
    pub view_noise_scale: f64,
    pub transform_hidden: usize,
    pub task_count: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            d: 100,
            n: 4000,
            common_rate: 0,
            view_noise_scale: 1.0,
            transform_hidden: 256,
            task_count: 50,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub const COMMON_RATES: [u32; 6] = [0, 20, 40, 60, 80, 100];

    pub fn validate(&self) -> Result<()> {
        slice_views(self.d, self.common_rate)?;
        if self.n <= self.d {
            return Err(Error::contract(format!(
                "n ({}) must exceed d ({})",
                self.n, self.d
            )));
        }
        if self.n < 4 {
            return Err(Error::contract("n must be at least 4 to split train/test"));
        }
        if !(self.view_noise_scale >= 0.0 && self.view_noise_scale.is_finite()) {
            return Err(Error::contract("view_noise_scale must be finite and non-negative"));
        }
        if self.transform_hidden == 0 || self.task_count == 0 {
            return Err(Error::contract("transform_hidden and task_count must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GodEmbedding {
    pub g: Matrix,
    pub seed: u64,
}

fn gaussian(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = seeds::rng(seed);
    let mut m = Matrix::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            m[(r, c)] = StandardNormal.sample(&mut rng);
        }
    }
    m
}

pub fn generate_god(d: usize, n: usize, seed: u64) -> Result<GodEmbedding> {
    if d < 2 {
        return Err(Error::contract(format!("d must be at least 2, got {d}")));
    }
    if n <= d {
        return Err(Error::contract(format!("n ({n}) must exceed d ({d})")));
    }
    Ok(GodEmbedding {
        g: gaussian(d, n, seed),
        seed,
    })
}

/// Feature ranges of `G` consumed by the two views:
/// `[0, d/2 + CR d/200)` and `[d/2 - CR d/200, d)`.
pub fn slice_views(d: usize, common_rate: u32) -> Result<(Range<usize>, Range<usize>)> {
    if common_rate > 100 {
        return Err(Error::contract(format!("common rate {common_rate} exceeds 100")));
    }
    if d % 2 != 0 || common_rate % 2 != 0 || (common_rate as usize * d) % 200 != 0 {
        return Err(Error::contract(format!(
            "d = {d} and common rate {common_rate} do not give integral slice bounds"
        )));
    }
    let half = d / 2;
    let shift = common_rate as usize * d / 200;
    Ok((0..half + shift, half - shift..d))
}

/// Frozen random network applied to a noisy slice of `G`:
/// `W2 relu(W1 (x + s e) + b1) + b2`, output dimension = input dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewTransform {
    pub w1: Matrix,
    pub b1: DVector<f64>,
    pub w2: Matrix,
    pub b2: DVector<f64>,
}

impl ViewTransform {
    /// Gaussian weights with variance `1/fan_in`, Gaussian hidden biases
    /// with unit variance, zero output bias.
    pub fn random(dim: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = seeds::rng(seed);
        let mut fill = |rows: usize, cols: usize, scale: f64| {
            let mut m = Matrix::zeros(rows, cols);
            for r in 0..rows {
                for c in 0..cols {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    m[(r, c)] = z * scale;
                }
            }
            m
        };
        let w1 = fill(hidden, dim, 1.0 / (dim as f64).sqrt());
        let b1 = fill(hidden, 1, 1.0).column(0).into_owned();
        let w2 = fill(dim, hidden, 1.0 / (hidden as f64).sqrt());
        ViewTransform {
            w1,
            b1,
            w2,
            b2: DVector::zeros(dim),
        }
    }

    /// Identity-weight transform (`hidden = dim`) used to check the
    /// composition step by step.
    pub fn identity(dim: usize) -> Self {
        ViewTransform {
            w1: Matrix::identity(dim, dim),
            b1: DVector::zeros(dim),
            w2: Matrix::identity(dim, dim),
            b2: DVector::zeros(dim),
        }
    }

    pub fn apply(&self, x: &Matrix) -> Matrix {
        let mut h = &self.w1 * x;
        for mut col in h.column_iter_mut() {
            col += &self.b1;
            col.apply(|v| *v = v.max(0.0));
        }
        let mut out = &self.w2 * h;
        for mut col in out.column_iter_mut() {
            col += &self.b2;
        }
        out
    }
}

/// Noisy slice through a random transform seeded by `seed`.
pub fn apply_view_transform(
    g_slice: &Matrix,
    noise_scale: f64,
    hidden: usize,
    seed: u64,
) -> Result<Matrix> {
    let transform = ViewTransform::random(g_slice.nrows(), hidden, seeds::derive(seed, Lane::ViewTransform, 0));
    apply_transform_with(&transform, g_slice, noise_scale, seeds::derive(seed, Lane::ViewNoise, 0))
}

pub fn apply_transform_with(
    transform: &ViewTransform,
    g_slice: &Matrix,
    noise_scale: f64,
    noise_seed: u64,
) -> Result<Matrix> {
    if g_slice.is_empty() {
        return Err(Error::contract("empty slice of G"));
    }
    if transform.w1.ncols() != g_slice.nrows() {
        return Err(Error::contract("transform input dimension does not match slice"));
    }
    let noisy = if noise_scale > 0.0 {
        g_slice + gaussian(g_slice.nrows(), g_slice.ncols(), noise_seed) * noise_scale
    } else {
        g_slice.clone()
    };
    Ok(transform.apply(&noisy))
}

/// `J x d` read-out weights, entries `N(0, 1/d)` so tasks have unit variance.
pub fn task_weights(d: usize, task_count: usize, seed: u64) -> Matrix {
    gaussian(task_count, d, seed) / (d as f64).sqrt()
}

pub fn generate_tasks(g: &Matrix, task_count: usize, seed: u64) -> Result<Matrix> {
    if task_count == 0 {
        return Err(Error::contract("task_count must be at least 1"));
    }
    Ok(task_weights(g.nrows(), task_count, seed) * g)
}

pub fn generate_tasks_with(g: &Matrix, weights: &Matrix) -> Result<Matrix> {
    if weights.ncols() != g.nrows() {
        return Err(Error::contract("task weights do not match G's dimension"));
    }
    Ok(weights * g)
}

pub fn build_dataset(cfg: &SynthConfig) -> Result<MultiViewDataset> {
    cfg.validate()?;
    let god = generate_god(cfg.d, cfg.n, seeds::derive(cfg.seed, Lane::God, 0))?;
    let (r1, r2) = slice_views(cfg.d, cfg.common_rate)?;
    let views = [r1, r2]
        .into_iter()
        .enumerate()
        .map(|(k, range)| {
            let slice = god.g.rows(range.start, range.len()).into_owned();
            let transform = ViewTransform::random(
                slice.nrows(),
                cfg.transform_hidden,
                seeds::derive(cfg.seed, Lane::ViewTransform, k as u64),
            );
            apply_transform_with(
                &transform,
                &slice,
                cfg.view_noise_scale,
                seeds::derive(cfg.seed, Lane::ViewNoise, k as u64),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let tasks = generate_tasks(&god.g, cfg.task_count, seeds::derive(cfg.seed, Lane::Tasks, 0))?;
    MultiViewDataset::new(
        views,
        tasks,
        Split::leading(cfg.n, cfg.n / 2),
        Provenance::Synthetic {
            config: cfg.clone(),
        },
    )
}
