//! Zero-mean, unit-variance noise for the regularizer and the probes.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::seeds;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseDist {
    #[default]
    Gaussian,
    /// Uniform on `[-sqrt(3), sqrt(3)]`, i.e. unit variance.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseSpec {
    pub dist: NoiseDist,
    pub rows: usize,
    pub cols: usize,
    pub seed: u64,
}

fn draw(spec: &NoiseSpec, seed: u64) -> Matrix {
    let mut rng = seeds::rng(seed);
    let mut m = Matrix::zeros(spec.rows, spec.cols);
    let bound = 3f64.sqrt();
    // row-major fill
    for r in 0..spec.rows {
        for c in 0..spec.cols {
            m[(r, c)] = match spec.dist {
                NoiseDist::Gaussian => StandardNormal.sample(&mut rng),
                NoiseDist::Uniform => rng.random_range(-bound..=bound),
            };
        }
    }
    m
}

/// Full-rank check on the smaller Gram matrix: its eigenvalue ratio must
/// exceed 1e-12 (singular-value ratio 1e-6).
fn full_rank(m: &Matrix) -> Result<bool> {
    let gram = if m.nrows() <= m.ncols() {
        linalg::mul_bt(m, m)
    } else {
        m.transpose() * m
    };
    let eig = linalg::sym_eig(&gram)?;
    let top = eig.values[0];
    let bottom = *eig.values.last().expect("non-empty");
    Ok(top > 0.0 && bottom > 1e-12 * top)
}

/// Draws an i.i.d. noise matrix; rank-deficient draws are resampled once.
pub fn sample(spec: &NoiseSpec) -> Result<Matrix> {
    if spec.rows == 0 || spec.cols == 0 {
        return Err(Error::contract(format!(
            "noise shape must be positive, got {}x{}",
            spec.rows, spec.cols
        )));
    }
    let first = draw(spec, spec.seed);
    if full_rank(&first)? {
        return Ok(first);
    }
    let retry = draw(spec, seeds::derive(spec.seed, seeds::Lane::TrainNoise, 1));
    if full_rank(&retry)? {
        return Ok(retry);
    }
    Err(Error::Sampling(format!(
        "{}x{} noise was rank deficient twice",
        spec.rows, spec.cols
    )))
}
