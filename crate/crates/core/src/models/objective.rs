//! The training loss and its gradient through the encoders.
//!
//! loss = -sum_{k<j} Corr(f_k(X_k), f_j(X_j)) + alpha * sum_k zeta_k
//! zeta_k = |Corr(f_k(X_k), f_k(A_k)) - Corr(X_k, A_k)|

use crate::correlation::{center_rows, corr_pair_value_grad_with, corr_pair_with, Whitening};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::models::encoder::{Encoder, EncoderGrad};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub alpha: f64,
    /// Ridge on self-covariances; zero selects pseudo-inverse whitening.
    pub ridge: f64,
    /// Rows of `X_k`/`A_k` used for the raw `Corr(X_k, A_k)` term.
    pub nr_subsample: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub loss: f64,
    pub corr: f64,
    /// zeta_k per view; empty when no noise was supplied.
    pub zetas: Vec<f64>,
    pub grads: Vec<EncoderGrad>,
}

fn leading_rows(m: &Matrix, rows: Option<usize>) -> Matrix {
    match rows {
        Some(r) if r < m.nrows() => m.rows(0, r).into_owned(),
        _ => m.clone(),
    }
}

/// Loss and parameter gradients on one batch. `noise`, when present,
/// enables the noise-regularization terms (their gradients are skipped when
/// `alpha` is zero so the trajectory matches plain DCCA bit for bit).
pub fn loss_and_grad(
    encoders: &[Encoder],
    batches: &[Matrix],
    noise: Option<&[Matrix]>,
    obj: &Objective,
) -> Result<Evaluation> {
    let k = encoders.len();
    if k < 2 || batches.len() != k {
        return Err(Error::contract(format!(
            "need at least two views with one batch each, got {} encoders and {} batches",
            k,
            batches.len()
        )));
    }
    if let Some(a) = noise {
        if a.len() != k {
            return Err(Error::contract("one noise matrix per view is required"));
        }
    }

    let traces = encoders
        .iter()
        .zip(batches)
        .map(|(e, x)| e.trace(x))
        .collect::<Result<Vec<_>>>()?;
    let encoded = traces
        .iter()
        .map(|t| center_rows(t.output()))
        .collect::<Result<Vec<_>>>()?;

    let w = Whitening::for_training(obj.ridge);
    let mut corr = 0.0;
    let mut upstream: Vec<Matrix> = encoded
        .iter()
        .map(|h| Matrix::zeros(h.dim(), h.n()))
        .collect();
    for a in 0..k {
        for b in (a + 1)..k {
            let (res, ga, gb) = corr_pair_value_grad_with(&encoded[a], &encoded[b], w)?;
            corr += res.value;
            upstream[a] -= ga;
            upstream[b] -= gb;
        }
    }

    let mut grads = Vec::with_capacity(k);
    let mut zetas = Vec::new();
    let mut penalty = 0.0;
    for v in 0..k {
        let (mut grad, _) = encoders[v].backward_trace(&traces[v], &upstream[v], false)?;
        if let Some(noise) = noise {
            let a = &noise[v];
            if a.shape() != batches[v].shape() {
                return Err(Error::contract(format!("noise for view {v} has the wrong shape")));
            }
            let raw = corr_pair_with(
                &center_rows(&leading_rows(&batches[v], obj.nr_subsample))?,
                &center_rows(&leading_rows(a, obj.nr_subsample))?,
                w,
            )?
            .value;
            let noise_trace = encoders[v].trace(a)?;
            let encoded_noise = center_rows(noise_trace.output())?;
            let (res, gx, ga) = corr_pair_value_grad_with(&encoded[v], &encoded_noise, w)?;
            let diff = res.value - raw;
            zetas.push(diff.abs());
            penalty += diff.abs();
            if obj.alpha != 0.0 && diff != 0.0 {
                let scale = obj.alpha * diff.signum();
                let (gx_params, _) = encoders[v].backward_trace(&traces[v], &gx, false)?;
                let (ga_params, _) = encoders[v].backward_trace(&noise_trace, &ga, false)?;
                grad.add_scaled(&gx_params, scale);
                grad.add_scaled(&ga_params, scale);
            }
        }
        grads.push(grad);
    }

    Ok(Evaluation {
        loss: -corr + obj.alpha * penalty,
        corr,
        zetas,
        grads,
    })
}
