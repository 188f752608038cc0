mod common;

use glome_core::divergence::{
    c_rho, jkl_upper_bound, kl_gaussian_closed_form, tensorized_hellinger_mc, tensorized_jkl_mc, tensorized_kl_mc,
    CondDensity, ForwardDensity, LinearGaussianCond,
};
use glome_core::simulate::{ws_forward_params, ScenarioTruth};
use glome_core::{GaussianParams, GlomeError};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use common::{gaussian, normal_matrix, rng};

#[test]
fn x_dependent_kl_matches_average_of_closed_forms() {
    let mut r = rng(21);
    let (p, q) = (gaussian(&mut r, 2), gaussian(&mut r, 2));
    let (b0, b1) = (normal_matrix(&mut r, 2, 1, 1.0), normal_matrix(&mut r, 2, 1, 1.0));
    let s0 = LinearGaussianCond::new(b0.clone(), &p).unwrap();
    let s1 = LinearGaussianCond::new(b1.clone(), &q).unwrap();
    let xs = normal_matrix(&mut r, 300, 1, 1.0);
    let exact: f64 = (0..300)
        .map(|i| {
            let x = DVector::from_element(1, xs[(i, 0)]);
            let pi = GaussianParams::new(&b0 * &x + &p.mean, p.cov.clone()).unwrap();
            let qi = GaussianParams::new(&b1 * &x + &q.mean, q.cov.clone()).unwrap();
            kl_gaussian_closed_form(&pi, &qi).unwrap()
        })
        .sum::<f64>()
        / 300.0;
    let est = tensorized_kl_mc(&s0, &s1, &xs, 400, 5).unwrap();
    assert!((est.value - exact).abs() < 4.0 * est.std_error, "{} vs {exact} (se {})", est.value, est.std_error);
    assert_eq!((est.n_x, est.n_y), (300, 400));
}

#[test]
fn estimates_are_reproducible_and_thread_independent() {
    let truth = ScenarioTruth::Ws;
    let fwd = ForwardDensity::new(&ws_forward_params()).unwrap();
    let xs = DMatrix::from_fn(200, 1, |i, _| i as f64 / 200.0);
    let runs: Vec<_> = [1, 2]
        .iter()
        .map(|&t| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(t).build().unwrap();
            pool.install(|| tensorized_kl_mc(&truth, &fwd, &xs, 50, 3).unwrap())
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
    // The truth against its own forward form differs only by rounding.
    assert!(runs[0].value.abs() < 1e-12);
}

#[test]
fn argument_errors() {
    let g = GaussianParams::new(DVector::zeros(1), DMatrix::identity(1, 1)).unwrap();
    let s = LinearGaussianCond::new(DMatrix::zeros(1, 2), &g).unwrap();
    let xs = DMatrix::zeros(4, 2);
    assert!(matches!(tensorized_kl_mc(&s, &s, &xs, 0, 0), Err(GlomeError::OutOfRange(_))));
    assert!(matches!(tensorized_kl_mc(&s, &s, &DMatrix::zeros(4, 3), 5, 0), Err(GlomeError::DimensionMismatch { .. })));
    assert!(tensorized_jkl_mc(&s, &s, 1.0, &xs, 5, 0).is_err());
    assert!(LinearGaussianCond::new(DMatrix::zeros(2, 2), &g).is_err());
}

#[test]
fn c_rho_matches_direct_formula() {
    for rho in [0.1f64, 0.3, 0.5, 0.7, 0.9] {
        let direct = if rho <= 0.5 {
            (1.0 / rho) * ((1.0 / (1.0 - rho)).ln() - rho)
        } else {
            ((1.0 - rho) / (rho * rho)) * ((1.0 / (1.0 - rho)).ln() - rho)
        };
        assert!((c_rho(rho).unwrap() - direct).abs() < 1e-14);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn divergences_are_ordered_and_bounded(seed in any::<u64>(), rho in 0.05f64..0.95) {
        let mut r = rng(seed);
        let s0 = LinearGaussianCond::new(normal_matrix(&mut r, 1, 1, 1.0), &gaussian(&mut r, 1)).unwrap();
        let s1 = LinearGaussianCond::new(normal_matrix(&mut r, 1, 1, 1.0), &gaussian(&mut r, 1)).unwrap();
        let xs = normal_matrix(&mut r, 200, 1, 1.0);
        let kl = tensorized_kl_mc(&s0, &s1, &xs, 100, seed).unwrap();
        let jkl = tensorized_jkl_mc(&s0, &s1, rho, &xs, 100, seed).unwrap();
        let hel = tensorized_hellinger_mc(&s0, &s1, &xs, 100, seed).unwrap();
        let cr = c_rho(rho).unwrap();
        prop_assert!(jkl.value <= jkl_upper_bound(rho));
        prop_assert!(jkl.value <= kl.value + 3.0 * (kl.std_error.powi(2) + jkl.std_error.powi(2)).sqrt());
        prop_assert!(cr * hel.value <= jkl.value + 3.0 * (cr * cr * hel.std_error.powi(2) + jkl.std_error.powi(2)).sqrt());
        prop_assert!(hel.value <= 1.0);
        prop_assert_eq!(s0.response_dim(), 1);
    }
}
