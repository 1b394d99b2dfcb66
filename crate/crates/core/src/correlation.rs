//! The CCA correlation functional.
//!
//! `Corr(X1, X2)` is the trace norm (sum of singular values) of
//! `T = S11^{-1/2} S12 S22^{-1/2}` built from the sample covariances of the
//! two row-centered views. Multi-view correlation sums all pairs. The
//! pseudoinverse form `tr(A^+ A X^+ X)^{1/2}` lives in [`corr_mpi`] and is
//! never mixed with the trace-norm objective.

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::models::Encoder;

const CENTER_TOL: f64 = 1e-9;

/// Relative eigenvalue cutoff of [`Whitening::Pinv`].
pub const PINV_WHITENING_RTOL: f64 = 1e-9;

/// How `S^{-1/2}` is formed from a self-covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Whitening {
    /// `(S + rI)^{-1/2}`; singular `S + rI` is an error.
    Ridge(f64),
    /// Pseudo-inverse square root: near-null eigen-directions (relative
    /// cutoff [`PINV_WHITENING_RTOL`]) are dropped, so a rank-deficient
    /// encoder output contributes only its non-degenerate directions.
    Pinv,
}

impl Whitening {
    /// Ridge when positive, otherwise the pseudo-inverse form.
    pub fn for_training(ridge: f64) -> Self {
        if ridge > 0.0 {
            Whitening::Ridge(ridge)
        } else {
            Whitening::Pinv
        }
    }

    fn inv_sqrt(self, s: &Matrix) -> Result<Matrix> {
        match self {
            Whitening::Ridge(r) => linalg::inv_sqrt_psd(s, r),
            Whitening::Pinv => linalg::pinv_sqrt_psd(s, PINV_WHITENING_RTOL),
        }
    }
}

/// A features x samples batch of one view.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewBatch {
    pub data: Matrix,
    pub centered: bool,
}

impl ViewBatch {
    pub fn n(&self) -> usize {
        self.data.ncols()
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    fn require_centered(&self, what: &str) -> Result<()> {
        if !self.centered {
            return Err(Error::contract(format!("{what} must be row-centered")));
        }
        if self.n() < 2 {
            return Err(Error::contract(format!(
                "{what} needs at least two samples, got {}",
                self.n()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrResult {
    /// Sum of canonical correlations.
    pub value: f64,
    /// Canonical correlations, descending.
    pub singulars: Vec<f64>,
}

/// Subtracts each row's mean.
pub fn center_rows(x: &Matrix) -> Result<ViewBatch> {
    if x.ncols() < 2 {
        return Err(Error::contract(format!(
            "center_rows needs at least two columns, got {}",
            x.ncols()
        )));
    }
    linalg::check_finite(x, "view batch")?;
    let mut data = x.clone();
    for mut row in data.row_iter_mut() {
        let mean = row.sum() / row.len() as f64;
        row.add_scalar_mut(-mean);
    }
    Ok(ViewBatch {
        data,
        centered: true,
    })
}

/// Wraps data that the caller guarantees is row-centered; checked to 1e-9.
pub fn assume_centered(x: Matrix) -> Result<ViewBatch> {
    let scale = x.amax().max(1.0);
    for row in x.row_iter() {
        let mean = row.sum() / row.len().max(1) as f64;
        if mean.abs() > CENTER_TOL * scale {
            return Err(Error::contract(format!(
                "row mean {mean:e} exceeds centering tolerance"
            )));
        }
    }
    Ok(ViewBatch {
        data: x,
        centered: true,
    })
}

/// `(1/(n-1)) X Y'`, plus `ridge I` when `same_view` is set.
pub fn covariance(x: &ViewBatch, y: &ViewBatch, ridge: f64, same_view: bool) -> Result<Matrix> {
    x.require_centered("covariance input")?;
    y.require_centered("covariance input")?;
    if x.n() != y.n() {
        return Err(Error::contract(format!(
            "covariance needs equal sample counts, got {} and {}",
            x.n(),
            y.n()
        )));
    }
    if ridge < 0.0 {
        return Err(Error::contract(format!("ridge must be non-negative, got {ridge}")));
    }
    let scale = 1.0 / (x.n() as f64 - 1.0);
    let mut c = linalg::mul_bt(&x.data, &y.data) * scale;
    if same_view {
        if !c.is_square() {
            return Err(Error::contract("self-covariance of differently sized views"));
        }
        c = linalg::symmetrize(&c);
        for i in 0..c.nrows() {
            c[(i, i)] += ridge;
        }
    }
    Ok(c)
}

/// Intermediate quantities shared by the value and the gradient.
struct PairParts {
    isqrt11: Matrix,
    isqrt22: Matrix,
    t: linalg::Svd,
}

fn pair_parts(x1: &ViewBatch, x2: &ViewBatch, w: Whitening) -> Result<PairParts> {
    x1.require_centered("corr_pair view")?;
    x2.require_centered("corr_pair view")?;
    if x1.n() != x2.n() {
        return Err(Error::contract(format!(
            "corr_pair needs equal sample counts, got {} and {}",
            x1.n(),
            x2.n()
        )));
    }
    let s11 = covariance(x1, x1, 0.0, true)?;
    let s22 = covariance(x2, x2, 0.0, true)?;
    let s12 = covariance(x1, x2, 0.0, false)?;
    let isqrt11 = w.inv_sqrt(&s11)?;
    let isqrt22 = w.inv_sqrt(&s22)?;
    let t = linalg::svd(&(&isqrt11 * s12 * &isqrt22))?;
    Ok(PairParts {
        isqrt11,
        isqrt22,
        t,
    })
}

pub fn corr_pair(x1: &ViewBatch, x2: &ViewBatch, ridge: f64) -> Result<CorrResult> {
    corr_pair_with(x1, x2, Whitening::Ridge(ridge))
}

pub fn corr_pair_with(x1: &ViewBatch, x2: &ViewBatch, w: Whitening) -> Result<CorrResult> {
    let parts = pair_parts(x1, x2, w)?;
    Ok(CorrResult {
        value: parts.t.s.iter().sum(),
        singulars: parts.t.s,
    })
}

/// Sum of `corr_pair` over all pairs `k < j`.
pub fn corr_multi(views: &[ViewBatch], ridge: f64) -> Result<f64> {
    if views.len() < 2 {
        return Err(Error::contract(format!(
            "corr_multi needs at least two views, got {}",
            views.len()
        )));
    }
    let mut total = 0.0;
    for k in 0..views.len() {
        for j in (k + 1)..views.len() {
            total += corr_pair(&views[k], &views[j], ridge)?.value;
        }
    }
    Ok(total)
}

/// Gradient of `corr_pair(x1, x2).value` with respect to both batches.
pub fn corr_pair_grad(x1: &ViewBatch, x2: &ViewBatch, ridge: f64) -> Result<(Matrix, Matrix)> {
    let (_, g1, g2) = corr_pair_value_grad(x1, x2, ridge)?;
    Ok((g1, g2))
}

/// Value and gradient in one pass.
///
/// With `T = U D V'`:
///   dC/dS12 = S11^{-1/2} U V' S22^{-1/2}
///   dC/dS11 = -1/2 S11^{-1/2} U D U' S11^{-1/2}   (S22 symmetric)
/// chained through `S11 = X1 X1'/(n-1) + rI` and `S12 = X1 X2'/(n-1)`.
/// Coincident singular values are not special-cased: the result is then one
/// element of the subdifferential.
pub fn corr_pair_value_grad(
    x1: &ViewBatch,
    x2: &ViewBatch,
    ridge: f64,
) -> Result<(CorrResult, Matrix, Matrix)> {
    corr_pair_value_grad_with(x1, x2, Whitening::Ridge(ridge))
}

pub fn corr_pair_value_grad_with(
    x1: &ViewBatch,
    x2: &ViewBatch,
    w: Whitening,
) -> Result<(CorrResult, Matrix, Matrix)> {
    let parts = pair_parts(x1, x2, w)?;
    let PairParts {
        isqrt11,
        isqrt22,
        t,
    } = parts;
    let u = &t.u;
    let vt = &t.vt;
    let d = linalg::diag(&t.s);

    let d12 = &isqrt11 * u * vt * &isqrt22;
    let d11 = (&isqrt11 * u * &d * u.transpose() * &isqrt11) * -0.5;
    let v = vt.transpose();
    let d22 = (&isqrt22 * &v * &d * vt * &isqrt22) * -0.5;

    let scale = 1.0 / (x1.n() as f64 - 1.0);
    let g1 = (&d11 * &x1.data * 2.0 + &d12 * &x2.data) * scale;
    let g2 = (&d22 * &x2.data * 2.0 + d12.transpose() * &x1.data) * scale;
    let result = CorrResult {
        value: t.s.iter().sum(),
        singulars: t.s,
    };
    Ok((result, g1, g2))
}

/// `tr(A^+ A X^+ X)^{1/2}`, the pseudoinverse form of the correlation.
///
/// Evaluated as `tr((A X^+)(X A^+))` so nothing n x n is formed.
pub fn corr_mpi(x: &ViewBatch, a: &ViewBatch) -> Result<f64> {
    if x.n() != a.n() {
        return Err(Error::contract(format!(
            "corr_mpi needs equal sample counts, got {} and {}",
            x.n(),
            a.n()
        )));
    }
    let xp = linalg::pinv_default(&x.data)?;
    let ap = linalg::pinv_default(&a.data)?;
    let tr = ((&a.data * xp) * (&x.data * ap)).trace();
    Ok(tr.max(0.0).sqrt())
}

/// `|Corr(enc(X), enc(A)) - Corr(X, A)|` with the same ridge on both sides.
pub fn cip_violation(enc: &Encoder, x: &ViewBatch, a: &ViewBatch, ridge: f64) -> Result<f64> {
    if x.data.shape() != a.data.shape() {
        return Err(Error::contract("cip_violation needs X and A of the same shape"));
    }
    let raw = corr_pair(x, a, ridge)?.value;
    let ex = center_rows(&enc.forward(&x.data)?)?;
    let ea = center_rows(&enc.forward(&a.data)?)?;
    let encoded = corr_pair(&ex, &ea, ridge)?.value;
    Ok((encoded - raw).abs())
}

/// CIP violation of a linear map under the pseudoinverse form,
/// `|corr_mpi(W X, W A) - corr_mpi(X, A)|`. Defined for singular `W`, where
/// the trace-norm form needs a ridge.
pub fn cip_violation_mpi(w: &Matrix, x: &ViewBatch, a: &ViewBatch) -> Result<f64> {
    if w.ncols() != x.dim() || x.data.shape() != a.data.shape() {
        return Err(Error::contract("cip_violation_mpi shape mismatch"));
    }
    let wx = ViewBatch {
        data: w * &x.data,
        centered: x.centered,
    };
    let wa = ViewBatch {
        data: w * &a.data,
        centered: a.centered,
    };
    Ok((corr_mpi(&wx, &wa)? - corr_mpi(x, a)?).abs())
}
