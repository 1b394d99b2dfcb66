use mvcca::correlation::{center_rows, cip_violation, corr_mpi, corr_pair, ViewBatch};
use mvcca::eval::{denoising_residual, kfold_mean_r2, nesum, reconstruction_loss};
use mvcca::linalg::{least_squares, least_squares_residual, numerical_rank, pinv_default};
use mvcca::models::Encoder;
use mvcca::noise::{sample, NoiseDist, NoiseSpec};
use mvcca::Matrix;
use proptest::prelude::*;

fn gauss(rows: usize, cols: usize, seed: u64) -> Matrix {
    sample(&NoiseSpec { dist: NoiseDist::Gaussian, rows, cols, seed }).unwrap()
}

/// `rows x cols` with rank at most `rank`.
fn low_rank(rows: usize, cols: usize, rank: usize, seed: u64) -> Matrix {
    gauss(rows, rank, seed) * gauss(rank, cols, seed ^ 0x5bd1_e995)
}

fn centered(m: &Matrix) -> ViewBatch {
    center_rows(m).unwrap()
}

fn frob_rel(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).norm() / b.norm().max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn penrose_conditions(rows in 1usize..9, cols in 1usize..9, rank_cut in 0usize..3, seed in any::<u64>()) {
        let rank = rows.min(cols).saturating_sub(rank_cut).max(1);
        let m = low_rank(rows, cols, rank, seed);
        let p = pinv_default(&m).unwrap();
        prop_assert!(frob_rel(&(&m * &p * &m), &m) < 1e-8);
        prop_assert!(frob_rel(&(&p * &m * &p), &p) < 1e-8);
        let mp = &m * &p;
        let pm = &p * &m;
        prop_assert!((&mp - mp.transpose()).norm() < 1e-8);
        prop_assert!((&pm - pm.transpose()).norm() < 1e-8);
    }

    #[test]
    fn trace_of_projector_is_rank(rows in 1usize..10, cols in 1usize..10, rank_cut in 0usize..4, seed in any::<u64>()) {
        let rank = rows.min(cols).saturating_sub(rank_cut).max(1);
        let y = low_rank(rows, cols, rank, seed);
        let tr = (pinv_default(&y).unwrap() * &y).trace();
        prop_assert!((tr - numerical_rank(&y).unwrap() as f64).abs() < 1e-6);
    }

    #[test]
    fn singular_map_loses_rank(d in 2usize..8, cut in 1usize..4, seed in any::<u64>()) {
        let cut = cut.min(d - 1);
        let w = low_rank(d, d, d - cut, seed);
        let x = gauss(d, 5 * d, seed.wrapping_add(1));
        prop_assert!(numerical_rank(&(&w * &x)).unwrap() < numerical_rank(&x).unwrap());
    }

    #[test]
    fn least_squares_beats_random_candidates(din in 1usize..4, dout in 1usize..4, seed in any::<u64>()) {
        let b = gauss(din, 12, seed);
        let c = gauss(dout, 12, seed.wrapping_add(1));
        let best = least_squares_residual(&b, &c).unwrap();
        let r = least_squares(&b, &c).unwrap();
        for i in 0..1000u64 {
            let cand = &r + gauss(dout, din, seed.wrapping_add(2 + i)) * 0.5;
            prop_assert!(best <= (cand * &b - &c).norm() + 1e-12);
        }
    }

    #[test]
    fn corr_pair_is_symmetric(d1 in 1usize..5, d2 in 1usize..5, seed in any::<u64>()) {
        let x1 = centered(&gauss(d1, 60, seed));
        let x2 = centered(&gauss(d2, 60, seed.wrapping_add(1)));
        let a = corr_pair(&x1, &x2, 0.0).unwrap().value;
        let b = corr_pair(&x2, &x1, 0.0).unwrap().value;
        prop_assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn corr_pair_ignores_invertible_maps(d in 1usize..6, seed in any::<u64>()) {
        let x1 = gauss(d, 20 * d, seed);
        let x2 = gauss(d, 20 * d, seed.wrapping_add(1)) + &x1 * 0.5;
        let q = gauss(d, d, seed.wrapping_add(2)) + Matrix::identity(d, d) * (2.0 * d as f64);
        let base = corr_pair(&centered(&x1), &centered(&x2), 0.0).unwrap().value;
        let mapped = corr_pair(&centered(&(q * &x1)), &centered(&x2), 0.0).unwrap().value;
        prop_assert!((base - mapped).abs() < 1e-6);
    }

    #[test]
    fn corr_mpi_self_is_root_rank(d in 1usize..8, seed in any::<u64>()) {
        let x = centered(&gauss(d, 10 * d + 5, seed));
        let v = corr_mpi(&x, &x).unwrap();
        prop_assert!((v - (d as f64).sqrt()).abs() < 1e-6);
    }

    #[test]
    fn invertible_linear_encoders_preserve_correlation(d in 2usize..8, seed in any::<u64>()) {
        let x = centered(&gauss(d, 20 * d, seed));
        let a = centered(&gauss(d, 20 * d, seed.wrapping_add(1)));
        let w = gauss(d, d, seed.wrapping_add(2)) + Matrix::identity(d, d) * (2.0 * d as f64);
        let eta = cip_violation(&Encoder::linear(w).unwrap(), &x, &a, 0.0).unwrap();
        prop_assert!(eta < 1e-5);
    }

    #[test]
    fn denoising_residual_is_bounded_by_the_noise_image(d in 1usize..6, out in 1usize..6, seed in any::<u64>()) {
        let w = gauss(out, d, seed);
        let x = gauss(d, 40, seed.wrapping_add(1));
        let a = gauss(d, 40, seed.wrapping_add(2));
        let (res, _) = denoising_residual(&Encoder::linear(w.clone()).unwrap(), &x, &a).unwrap();
        prop_assert!(res <= (&w * &a).norm() + 1e-6);
    }

    #[test]
    fn reconstruction_separates_invertible_from_rank_deficient(d in 2usize..7, seed in any::<u64>()) {
        let x = gauss(d, 30 * d, seed);
        let w = gauss(d, d, seed.wrapping_add(1)) + Matrix::identity(d, d) * (2.0 * d as f64);
        prop_assert!(reconstruction_loss(&(&w * &x), &x).unwrap() < 1e-6);
        let singular = low_rank(d, d, d - 1, seed.wrapping_add(2));
        prop_assert!(reconstruction_loss(&(singular * &x), &x).unwrap() > 1e-3);
    }

    #[test]
    fn nesum_ignores_row_scaling(rows in 2usize..7, cols in 2usize..7, seed in any::<u64>(),
                                  scales in proptest::collection::vec(0.01f64..100.0, 7)) {
        let w = gauss(rows, cols, seed);
        let mut scaled = w.clone();
        for r in 0..rows {
            scaled.row_mut(r).scale_mut(scales[r]);
        }
        prop_assert!((nesum(&w).unwrap() - nesum(&scaled).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn kfold_is_invariant_to_task_order(tasks in 2usize..5, seed in any::<u64>(), rot in 1usize..4) {
        let z = gauss(4, 50, seed);
        let y = gauss(tasks, 4, seed.wrapping_add(1)) * &z + gauss(tasks, 50, seed.wrapping_add(2));
        let perm: Vec<usize> = (0..tasks).map(|t| (t + rot) % tasks).collect();
        let permuted = Matrix::from_fn(tasks, 50, |r, c| y[(perm[r], c)]);
        let a = kfold_mean_r2(&z, &y, 5, 1.0).unwrap();
        let b = kfold_mean_r2(&z, &permuted, 5, 1.0).unwrap();
        prop_assert!((a.mean - b.mean).abs() < 1e-12);
        prop_assert!((a.std - b.std).abs() < 1e-12);
        for (t, p) in perm.iter().enumerate() {
            prop_assert_eq!(b.per_task[t], a.per_task[*p]);
        }
    }
}
