//! Dense linear-algebra kernel.
//!
//! Every routine here is a pure, deterministic function of its inputs. The
//! SVD is Householder QR (nalgebra) followed by one-sided Jacobi; the
//! symmetric eigen-solver and the blocked GEMM path are nalgebra's.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Dense real matrix. Views are stored features x samples.
pub type Matrix = DMatrix<f64>;

/// Relative singular-value cutoff used by [`pinv`] and [`numerical_rank`].
pub const RANK_RTOL: f64 = 1e-12;

/// Smallest eigenvalue [`inv_sqrt_psd`] accepts after the ridge shift.
pub const MIN_EIGENVALUE: f64 = 1e-12;

const SYMMETRY_TOL: f64 = 1e-9;
const MAX_SWEEPS: usize = 10_000;
/// Jacobi stops rotating a column pair once `|<a_p, a_q>|` falls below
/// `rows` times this multiple of `||a_p|| ||a_q||`.
const JACOBI_TOL: f64 = f64::EPSILON;
const JACOBI_SWEEPS: usize = 100;

/// Thin singular value decomposition `M = U diag(s) Vt`, `s` descending.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub vt: Matrix,
}

impl Svd {
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for (j, s) in self.s.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * &self.vt
    }
}

/// Eigen-decomposition of a symmetric matrix; `vectors` holds one
/// eigenvector per column, ordered like `values` (descending).
#[derive(Debug, Clone)]
pub struct SymEig {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

pub fn check_finite(m: &Matrix, what: &str) -> Result<()> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(Error::contract(format!("{what} is empty ({}x{})", m.nrows(), m.ncols())));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(what.to_string()));
    }
    Ok(())
}

/// One-sided (Hestenes) Jacobi SVD of a matrix with `rows >= cols`.
///
/// Column pairs of a working copy are rotated until mutually orthogonal;
/// the column norms are then the singular values. Exact rank deficiency
/// (zero columns) is handled naturally, which is why this is used instead
/// of nalgebra's bidiagonal SVD: that one returned wrong factors for
/// exactly rank-deficient inputs.
fn jacobi_svd(a: &Matrix) -> Result<Svd> {
    let (rows, cols) = a.shape();
    debug_assert!(rows >= cols);
    let mut w = a.clone();
    let mut v = Matrix::identity(cols, cols);
    // Columns below this norm are rounding residue of a null direction;
    // rotating them against each other never settles.
    let negligible = (f64::EPSILON * a.norm()).powi(2);
    let tol = JACOBI_TOL * rows as f64;
    let mut converged = false;
    for _ in 0..JACOBI_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let alpha = w.column(p).norm_squared();
                let beta = w.column(q).norm_squared();
                let gamma = w.column(p).dot(&w.column(q));
                if alpha <= negligible || beta <= negligible || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut w, p, q, c, s);
                rotate_columns(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NumericFailure { op: "svd", rows, cols });
    }

    let norms: Vec<f64> = (0..cols).map(|j| w.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let smax = norms[order[0]];
    let mut u = Matrix::zeros(rows, cols);
    let mut s = Vec::with_capacity(cols);
    let mut vt = Matrix::zeros(cols, cols);
    let mut missing = Vec::new();
    for (k, &j) in order.iter().enumerate() {
        let sj = norms[j];
        s.push(sj);
        vt.row_mut(k).copy_from(&v.column(j).transpose());
        if sj * sj > negligible && sj > f64::EPSILON * smax {
            u.column_mut(k).copy_from(&(w.column(j) / sj));
        } else {
            missing.push(k);
        }
    }
    complete_orthonormal(&mut u, &missing);
    Ok(Svd { u, s, vt })
}

fn rotate_columns(m: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    for r in 0..m.nrows() {
        let (a, b) = (m[(r, p)], m[(r, q)]);
        m[(r, p)] = c * a - s * b;
        m[(r, q)] = s * a + c * b;
    }
}

/// Fills the listed columns of `u` with unit vectors orthogonal to all
/// other columns (twice-applied Gram-Schmidt over the standard basis).
fn complete_orthonormal(u: &mut Matrix, missing: &[usize]) {
    let rows = u.nrows();
    let mut filled: Vec<usize> = (0..u.ncols()).filter(|k| !missing.contains(k)).collect();
    let mut basis = 0;
    for &k in missing {
        while basis < rows {
            let mut cand = DVector::zeros(rows);
            cand[basis] = 1.0;
            basis += 1;
            for _ in 0..2 {
                for &j in &filled {
                    let proj = u.column(j).dot(&cand);
                    cand -= u.column(j) * proj;
                }
            }
            let norm = cand.norm();
            if norm > 1e-8 {
                u.column_mut(k).copy_from(&(cand / norm));
                filled.push(k);
                break;
            }
        }
    }
}

/// Thin SVD. Tall inputs are first reduced by Householder QR so the Jacobi
/// sweeps run on a square factor; wide inputs go through the transpose.
pub fn svd(m: &Matrix) -> Result<Svd> {
    check_finite(m, "svd input")?;
    let (rows, cols) = m.shape();
    if rows < cols {
        let t = svd(&m.transpose())?;
        return Ok(Svd {
            u: t.vt.transpose(),
            s: t.s,
            vt: t.u.transpose(),
        });
    }
    if rows == cols {
        return jacobi_svd(m);
    }
    let qr = m.clone().qr();
    let inner = jacobi_svd(&qr.r())?;
    Ok(Svd {
        u: qr.q() * inner.u,
        s: inner.s,
        vt: inner.vt,
    })
}

/// Singular values only, descending.
pub fn singular_values(m: &Matrix) -> Result<Vec<f64>> {
    Ok(svd(m)?.s)
}

pub fn is_symmetric(m: &Matrix, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.amax().max(1.0);
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > tol * scale {
                return false;
            }
        }
    }
    true
}

pub fn sym_eig(m: &Matrix) -> Result<SymEig> {
    check_finite(m, "sym_eig input")?;
    if !m.is_square() {
        return Err(Error::contract(format!(
            "sym_eig needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if !is_symmetric(m, SYMMETRY_TOL) {
        return Err(Error::contract("sym_eig input is not symmetric within 1e-9"));
    }
    let n = m.nrows();
    let sym = symmetrize(m);
    let dec = nalgebra::SymmetricEigen::try_new(sym, f64::EPSILON, MAX_SWEEPS).ok_or(
        Error::NumericFailure {
            op: "symmetric eigen-decomposition",
            rows: n,
            cols: n,
        },
    )?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| dec.eigenvalues[b].total_cmp(&dec.eigenvalues[a]));
    let values = order.iter().map(|&i| dec.eigenvalues[i]).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| dec.eigenvectors[(r, order[c])]);
    Ok(SymEig { values, vectors })
}

/// Moore-Penrose pseudoinverse; singular values at or below
/// `tol * s_max` are treated as zero.
pub fn pinv(m: &Matrix, tol: f64) -> Result<Matrix> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::contract(format!("pinv tolerance must lie in (0, 1), got {tol}")));
    }
    let dec = svd(m)?;
    let (rows, cols) = m.shape();
    let smax = dec.s.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return Ok(Matrix::zeros(cols, rows));
    }
    let cutoff = tol * smax;
    // V diag(1/s) U'
    let mut v = dec.vt.transpose();
    for (j, s) in dec.s.iter().enumerate() {
        let inv = if *s > cutoff { 1.0 / s } else { 0.0 };
        v.column_mut(j).scale_mut(inv);
    }
    Ok(v * dec.u.transpose())
}

pub fn pinv_default(m: &Matrix) -> Result<Matrix> {
    pinv(m, RANK_RTOL)
}

/// Count of singular values above `RANK_RTOL * s_max`.
pub fn numerical_rank(m: &Matrix) -> Result<usize> {
    let s = singular_values(m)?;
    let smax = s.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return Ok(0);
    }
    Ok(s.iter().filter(|&&v| v > RANK_RTOL * smax).count())
}

/// `(M + ridge I)^{-1/2}` for symmetric positive semi-definite `M`.
pub fn inv_sqrt_psd(m: &Matrix, ridge: f64) -> Result<Matrix> {
    if ridge < 0.0 || !ridge.is_finite() {
        return Err(Error::contract(format!("ridge must be non-negative, got {ridge}")));
    }
    let shifted = if ridge > 0.0 {
        m + Matrix::identity(m.nrows(), m.ncols()) * ridge
    } else {
        m.clone()
    };
    let eig = sym_eig(&shifted)?;
    let lmin = eig.values.last().copied().unwrap_or(0.0);
    if lmin <= MIN_EIGENVALUE {
        return Err(Error::Singular {
            eigenvalue: lmin,
            hint: "use a positive ridge",
        });
    }
    Ok(spectral_map(&eig, |l| 1.0 / l.sqrt()))
}

/// Pseudo-inverse square root of a symmetric PSD matrix: eigen-directions
/// with `lambda <= rtol * lambda_max` are dropped instead of rejected.
pub fn pinv_sqrt_psd(m: &Matrix, rtol: f64) -> Result<Matrix> {
    if !(rtol > 0.0 && rtol < 1.0) {
        return Err(Error::contract(format!("rtol must lie in (0, 1), got {rtol}")));
    }
    let eig = sym_eig(m)?;
    let lmax = eig.values.first().copied().unwrap_or(0.0);
    let cut = rtol * lmax;
    Ok(spectral_map(&eig, |l| if lmax > 0.0 && l > cut { 1.0 / l.sqrt() } else { 0.0 }))
}

/// `V diag(f(values)) V'`.
pub(crate) fn spectral_map(eig: &SymEig, f: impl Fn(f64) -> f64) -> Matrix {
    let mut scaled = eig.vectors.clone();
    for (j, l) in eig.values.iter().enumerate() {
        scaled.column_mut(j).scale_mut(f(*l));
    }
    symmetrize(&(scaled * eig.vectors.transpose()))
}

/// Minimizer `R*` of `||R B - C||_F`, computed as `C B^+`.
///
/// `B` is input_dim x n and `C` is output_dim x n; rank-deficient `B` is
/// handled by the pseudoinverse.
pub fn least_squares(b: &Matrix, c: &Matrix) -> Result<Matrix> {
    if b.ncols() != c.ncols() {
        return Err(Error::contract(format!(
            "least_squares needs matching sample counts, got {} and {}",
            b.ncols(),
            c.ncols()
        )));
    }
    check_finite(c, "least_squares target")?;
    let bp = pinv_default(b)?;
    Ok(c * bp)
}

/// Residual `||R* B - C||_F` of the optimal linear map.
pub fn least_squares_residual(b: &Matrix, c: &Matrix) -> Result<f64> {
    let r = least_squares(b, c)?;
    Ok((r * b - c).norm())
}

/// `A B'` through the blocked GEMM path (nalgebra's `tr_mul` family is not
/// blocked and is an order of magnitude slower at our sizes).
pub fn mul_bt(a: &Matrix, b: &Matrix) -> Matrix {
    a * b.transpose()
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

pub fn diag(values: &[f64]) -> Matrix {
    Matrix::from_diagonal(&DVector::from_column_slice(values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn rel_err(a: &Matrix, b: &Matrix) -> f64 {
        (a - b).norm() / b.norm().max(1e-300)
    }

    #[test]
    fn svd_diagonal_and_identity() {
        let s = svd(&diag(&[3.0, 1.0])).unwrap();
        assert_eq!(s.s.len(), 2);
        assert!((s.s[0] - 3.0).abs() < 1e-14 && (s.s[1] - 1.0).abs() < 1e-14);
        let s = svd(&Matrix::identity(4, 4)).unwrap();
        assert!(s.s.iter().all(|v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn svd_reconstructs_random_wide_matrix() {
        let m = random(5, 8, 11);
        let dec = svd(&m).unwrap();
        assert!(rel_err(&dec.reconstruct(), &m) < 1e-10);
        assert!(dec.s.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn svd_rejects_nan() {
        let mut m = random(3, 3, 1);
        m[(1, 1)] = f64::NAN;
        assert!(matches!(svd(&m), Err(Error::NonFinite(_))));
    }

    #[test]
    fn sym_eig_examples() {
        let e = sym_eig(&diag(&[2.0, 5.0])).unwrap();
        assert_eq!(e.values, vec![5.0, 2.0]);
        let e = sym_eig(&Matrix::from_element(3, 3, 1.0)).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-12);
        assert!(e.values[1].abs() < 1e-12 && e.values[2].abs() < 1e-12);
    }

    #[test]
    fn sym_eig_residual_on_random_symmetric() {
        let a = random(6, 6, 5);
        let m = &a + a.transpose();
        let e = sym_eig(&m).unwrap();
        for (i, l) in e.values.iter().enumerate() {
            let v = e.vectors.column(i);
            let r = &m * v - v * *l;
            assert!(r.norm() < 1e-8);
        }
    }

    #[test]
    fn sym_eig_rejects_asymmetric() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(sym_eig(&m), Err(Error::Contract(_))));
    }

    #[test]
    fn pinv_examples() {
        let p = pinv_default(&diag(&[2.0, 0.0])).unwrap();
        assert!(rel_err(&p, &diag(&[0.5, 0.0])) < 1e-14);
        let p = pinv_default(&Matrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0])).unwrap();
        assert!(rel_err(&p, &Matrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.25])) < 1e-14);
    }

    #[test]
    fn pinv_of_zero_matrix_is_zero() {
        let p = pinv_default(&Matrix::zeros(2, 3)).unwrap();
        assert_eq!(p.shape(), (3, 2));
        assert_eq!(p.norm(), 0.0);
    }

    #[test]
    fn pinv_rejects_bad_tolerance() {
        assert!(pinv(&Matrix::identity(2, 2), 0.0).is_err());
        assert!(pinv(&Matrix::identity(2, 2), 1.5).is_err());
    }

    #[test]
    fn inv_sqrt_examples() {
        let r = inv_sqrt_psd(&diag(&[4.0, 9.0]), 0.0).unwrap();
        assert!(rel_err(&r, &diag(&[0.5, 1.0 / 3.0])) < 1e-14);
        let r = inv_sqrt_psd(&Matrix::identity(3, 3), 0.0).unwrap();
        assert!(rel_err(&r, &Matrix::identity(3, 3)) < 1e-14);
        let r = inv_sqrt_psd(&diag(&[0.0, 1.0]), 1.0).unwrap();
        assert!(rel_err(&r, &diag(&[1.0, 1.0 / 2f64.sqrt()])) < 1e-14);
    }

    #[test]
    fn svd_reconstructs_rank_one_tall_input() {
        let u = Matrix::from_column_slice(4, 1, &[-0.0384, 0.0694, 0.0135, -0.0722]);
        let v = Matrix::from_row_slice(1, 2, &[0.473, -12.3]);
        let m = u * v;
        let dec = svd(&m).unwrap();
        assert!(rel_err(&dec.reconstruct(), &m) < 1e-10);
        let p = pinv_default(&m).unwrap();
        assert!(rel_err(&(&m * p * &m), &m) < 1e-10);
    }

    /// Deterministic pseudo-random entries in [-1, 1).
    fn lcg(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut state = seed;
        Matrix::from_fn(rows, cols, |_, _| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 52) as f64 - 1.0
        })
    }

    #[test]
    fn svd_handles_exact_rank_deficiency() {
        for (rows, cols, rank) in [(8, 6, 1), (7, 12, 2), (30, 30, 5), (5, 5, 0)] {
            let m = lcg(rows, rank, 3) * lcg(rank, cols, 4);
            let dec = svd(&m).unwrap();
            assert!((&dec.reconstruct() - &m).norm() <= 1e-12 * m.norm().max(1.0));
            let k = rows.min(cols);
            assert!((dec.u.transpose() * &dec.u - Matrix::identity(k, k)).norm() < 1e-12);
            assert!((&dec.vt * dec.vt.transpose() - Matrix::identity(k, k)).norm() < 1e-12);
            assert!(dec.s.windows(2).all(|w| w[0] >= w[1]));
            assert_eq!(numerical_rank(&m).unwrap(), rank);
            assert_eq!(singular_values(&m).unwrap(), dec.s);
        }
    }

    #[test]
    fn pinv_sqrt_drops_null_directions() {
        let r = pinv_sqrt_psd(&diag(&[0.0, 4.0]), 1e-9).unwrap();
        assert!(rel_err(&r, &diag(&[0.0, 0.5])) < 1e-14);
        let full = pinv_sqrt_psd(&diag(&[4.0, 9.0]), 1e-9).unwrap();
        assert!(rel_err(&full, &inv_sqrt_psd(&diag(&[4.0, 9.0]), 0.0).unwrap()) < 1e-14);
        assert!(pinv_sqrt_psd(&Matrix::identity(2, 2), 0.0).is_err());
    }

    #[test]
    fn inv_sqrt_singular_names_eigenvalue() {
        match inv_sqrt_psd(&diag(&[0.0, 1.0]), 0.0) {
            Err(Error::Singular { eigenvalue, .. }) => assert!(eigenvalue.abs() < 1e-12),
            other => panic!("expected singularity error, got {other:?}"),
        }
    }

    #[test]
    fn inv_sqrt_squares_to_inverse() {
        let a = random(5, 30, 2);
        let m = mul_bt(&a, &a);
        let r = inv_sqrt_psd(&m, 0.1).unwrap();
        let shifted = &m + Matrix::identity(5, 5) * 0.1;
        let id = &r * &r * shifted;
        assert!((id - Matrix::identity(5, 5)).norm() < 1e-6);
        assert!(is_symmetric(&r, 1e-12));
    }

    #[test]
    fn least_squares_examples() {
        let b = random(3, 3, 9);
        let r = least_squares(&b, &b).unwrap();
        assert!((r - Matrix::identity(3, 3)).norm() < 1e-10);

        // One coefficient: minimize (r-1)^2 + (r+1)^2, optimum r = 0, residual sqrt(2).
        let b = Matrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let c = Matrix::from_row_slice(1, 2, &[1.0, -1.0]);
        let res = least_squares_residual(&b, &c).unwrap();
        assert!((res - 2f64.sqrt()).abs() < 1e-12);

        let b = random(4, 50, 3);
        let m = random(2, 4, 4);
        let c = &m * &b;
        assert!(least_squares_residual(&b, &c).unwrap() < 1e-8);
    }

    #[test]
    fn least_squares_rejects_mismatched_samples() {
        assert!(least_squares(&random(2, 5, 1), &random(2, 6, 2)).is_err());
    }
}
