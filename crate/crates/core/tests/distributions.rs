//! Matrix-variate density identities checked against dense vectorized oracles.

mod common;

use common::oracles::{case, gaussian_oracle, kron_dense, spd, student_oracle};
use common::random_matrix;
use mvproc::{MatrixNormal, MatrixT, RowPartition};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn normal_density_matches_vectorized_gaussian(seed in any::<u64>()) {
        let c = case(seed, 7, 4);
        let mn = MatrixNormal::new(c.m.clone(), c.sigma.clone(), c.omega.clone()).unwrap();
        let got = mn.ln_pdf(&c.x).unwrap();
        let want = gaussian_oracle(&c.x, &c.m, &c.sigma, &c.omega);
        prop_assert!(close(got, want, 1e-8), "{got} vs {want}");
    }

    #[test]
    fn student_density_matches_dense_form(seed in any::<u64>(), nu in 2.5f64..40.0) {
        let c = case(seed, 6, 4);
        let mt = MatrixT::new(nu, c.m.clone(), c.sigma.clone(), c.omega.clone()).unwrap();
        let got = mt.ln_pdf(&c.x).unwrap();
        let want = student_oracle(nu, &c.x, &c.m, &c.sigma, &c.omega);
        prop_assert!(close(got, want, 1e-8), "{got} vs {want}");
    }

    #[test]
    fn chain_rule_holds_over_rows_and_columns(seed in any::<u64>(), nu in 2.5f64..30.0) {
        let c = case(seed, 7, 4);
        let (n, d) = c.x.shape();
        let n1 = 1 + (seed as usize) % (n - 1);
        let d1 = 1 + (seed as usize / 7) % (d - 1);
        let part = RowPartition::new(n1, n - n1).unwrap();
        let top = c.x.rows(0, n1).into_owned();
        let bottom = c.x.rows(n1, n - n1).into_owned();
        let left = c.x.columns(0, d1).into_owned();
        let right = c.x.columns(d1, d - d1).into_owned();

        let mn = MatrixNormal::new(c.m.clone(), c.sigma.clone(), c.omega.clone()).unwrap();
        let joint = mn.ln_pdf(&c.x).unwrap();
        let rows = mn.row_marginal(part).unwrap().ln_pdf(&top).unwrap()
            + mn.row_conditional(part, &top).unwrap().ln_pdf(&bottom).unwrap();
        let cols = mn.col_marginal(d1).unwrap().ln_pdf(&left).unwrap()
            + mn.col_conditional(d1, &left).unwrap().ln_pdf(&right).unwrap();
        prop_assert!(close(rows, joint, 1e-8), "normal rows {rows} vs {joint}");
        prop_assert!(close(cols, joint, 1e-8), "normal cols {cols} vs {joint}");

        let mt = MatrixT::new(nu, c.m.clone(), c.sigma.clone(), c.omega.clone()).unwrap();
        let joint = mt.ln_pdf(&c.x).unwrap();
        let rows = mt.row_marginal(part).unwrap().ln_pdf(&top).unwrap()
            + mt.row_conditional(part, &top).unwrap().ln_pdf(&bottom).unwrap();
        let cols = mt.col_marginal(d1).unwrap().ln_pdf(&left).unwrap()
            + mt.col_conditional(d1, &left).unwrap().ln_pdf(&right).unwrap();
        prop_assert!(close(rows, joint, 1e-8), "student rows {rows} vs {joint}");
        prop_assert!(close(cols, joint, 1e-8), "student cols {cols} vs {joint}");
    }

    #[test]
    fn transposition_preserves_density(seed in any::<u64>(), nu in 2.5f64..30.0) {
        let c = case(seed, 7, 4);
        let xt = c.x.transpose();
        let mn = MatrixNormal::new(c.m.clone(), c.sigma.clone(), c.omega.clone()).unwrap();
        let (a, b) = (mn.ln_pdf(&c.x).unwrap(), mn.transpose().ln_pdf(&xt).unwrap());
        prop_assert!(close(a, b, 1e-10), "normal {a} vs {b}");
        let mt = MatrixT::new(nu, c.m.clone(), c.sigma.clone(), c.omega.clone()).unwrap();
        let (a, b) = (mt.ln_pdf(&c.x).unwrap(), mt.transpose().ln_pdf(&xt).unwrap());
        prop_assert!(close(a, b, 1e-10), "student {a} vs {b}");
    }

    // With the column covariance scaled by ν the Student-t law tends to the
    // Gaussian one; without the scaling it collapses onto the mean.
    #[test]
    fn student_tends_to_normal_for_large_nu(seed in any::<u64>()) {
        let c = case(seed, 5, 3);
        let nu = 1e6;
        let mn = MatrixNormal::new(c.m.clone(), c.sigma.clone(), c.omega.clone()).unwrap();
        let mt = MatrixT::new(nu, c.m.clone(), &c.sigma * nu, c.omega.clone()).unwrap();
        let gap = (mt.ln_pdf(&c.x).unwrap() - mn.ln_pdf(&c.x).unwrap()).abs();
        prop_assert!(gap < 1e-3, "gap {gap}");
    }
}

#[test]
fn sample_moments_follow_kronecker_covariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let sigma = spd(&mut rng, 3);
    let omega = spd(&mut rng, 2);
    let mean = random_matrix(&mut rng, 3, 2, -1.0, 1.0);
    let target = kron_dense(&sigma, &omega);
    let nu = 9.0;
    let mn = MatrixNormal::new(mean.clone(), sigma.clone(), omega.clone()).unwrap();
    let mt = MatrixT::new(nu, mean.clone(), sigma.clone(), omega.clone()).unwrap();
    let draws = 40_000;
    for (label, scale, sampler) in [
        ("normal", 1.0, Box::new(|r: &mut ChaCha8Rng| mn.sample_with(r)) as Box<dyn Fn(&mut ChaCha8Rng) -> DMatrix<f64>>),
        ("student", 1.0 / (nu - 2.0), Box::new(|r: &mut ChaCha8Rng| mt.sample_with(r))),
    ] {
        let mut sum = DVector::zeros(6);
        let mut outer = DMatrix::zeros(6, 6);
        for _ in 0..draws {
            let x = sampler(&mut rng);
            let v = DVector::from_fn(6, |k, _| x[(k / 2, k % 2)]);
            sum += &v;
            outer += &v * v.transpose();
        }
        let m = &sum / draws as f64;
        let cov = outer / draws as f64 - &m * m.transpose();
        let want_mean = DVector::from_fn(6, |k, _| mean[(k / 2, k % 2)]);
        let want_cov = &target * scale;
        let scale_ref = want_cov.diagonal().max().sqrt();
        assert!((m - want_mean).amax() < 0.05 * scale_ref, "{label} mean");
        assert!((cov - &want_cov).amax() < 0.08 * want_cov.diagonal().max(), "{label} covariance");
    }
}

#[test]
fn student_without_rescaling_concentrates() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let sigma = spd(&mut rng, 3);
    let omega = spd(&mut rng, 2);
    let mean = DMatrix::zeros(3, 2);
    let x = DMatrix::from_element(3, 2, 0.3);
    let mn = MatrixNormal::new(mean.clone(), sigma.clone(), omega.clone()).unwrap();
    let mt = MatrixT::new(1e6, mean, sigma, omega).unwrap();
    assert!((mt.ln_pdf(&x).unwrap() - mn.ln_pdf(&x).unwrap()).abs() > 1.0);
}

#[test]
fn student_gap_decreases_along_nu() {
    for seed in 0..30u64 {
        let c = case(seed, 3, 2);
        let mn = MatrixNormal::new(c.m.clone(), c.sigma.clone(), c.omega.clone()).unwrap();
        let base = mn.ln_pdf(&c.x).unwrap();
        let gaps: Vec<f64> = [1e2, 1e4, 1e6]
            .iter()
            .map(|&nu| {
                let mt = MatrixT::new(nu, c.m.clone(), &c.sigma * nu, c.omega.clone()).unwrap();
                (mt.ln_pdf(&c.x).unwrap() - base).abs()
            })
            .collect();
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2] && gaps[2] < 1e-3, "seed {seed}: {gaps:?}");
    }
}

#[test]
fn student_conditional_tends_to_normal_conditional() {
    let nu = 1e6;
    for seed in 0..30u64 {
        let c = case(seed, 6, 3);
        let n = c.x.nrows();
        let part = RowPartition::new(n / 2, n - n / 2).unwrap();
        let top = c.x.rows(0, n / 2).into_owned();
        let gn = MatrixNormal::new(c.m.clone(), c.sigma.clone(), c.omega.clone())
            .unwrap()
            .row_conditional(part, &top)
            .unwrap();
        let gt = MatrixT::new(nu, c.m.clone(), &c.sigma * nu, c.omega.clone())
            .unwrap()
            .row_conditional(part, &top)
            .unwrap();
        assert!((gt.mean() - gn.mean()).amax() < 1e-3);
        // the conditional scale lives in Σ·Ω/ν̂
        let scaled = gt.col_cov() * gt.row_cov()[(0, 0)] / gt.nu();
        let want = gn.col_cov() * gn.row_cov()[(0, 0)];
        assert!((scaled - want).amax() < 1e-3, "seed {seed}");
    }
}
