mod common;

use std::f64::consts::PI;

use glome_core::model::{
    forward_conditional_logpdf, gating_probs, gaussian_logpdf, inverse_conditional_logpdf, inverse_to_forward,
    log_likelihood, GllimParams,
};
use glome_core::{Dataset, Direction, ForwardParams, GaussianParams, InverseParams};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

use common::{normal_vector, random_params, rng, spd};

/// Density via explicit determinant and inverse, independent of the Cholesky path.
fn oracle_normal_pdf(v: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let d = v.len() as f64;
    let diff = v - mean;
    let q = (diff.transpose() * cov.clone().try_inverse().unwrap() * &diff)[(0, 0)];
    (-0.5 * q).exp() / ((2.0 * PI).powf(d) * cov.determinant()).sqrt()
}

/// `p(y | x)` by Bayes' rule on the joint mixture written by the inverse parameters.
fn oracle_forward_pdf(y: &DVector<f64>, x: &DVector<f64>, inv: &GllimParams) -> f64 {
    let mut joint = 0.0;
    let mut marginal = 0.0;
    for k in 0..inv.n_components() {
        let (a, b, s) = (&inv.slopes[k], &inv.intercepts[k], &inv.noise_covs[k]);
        let (c, g) = (&inv.gate_means[k], &inv.gate_covs[k]);
        joint += inv.weights[k] * oracle_normal_pdf(y, c, g) * oracle_normal_pdf(x, &(a * y + b), s);
        marginal += inv.weights[k] * oracle_normal_pdf(x, &(a * c + b), &(s + a * g * a.transpose()));
    }
    joint / marginal
}

#[test]
fn gaussian_logpdf_matches_determinant_formula() {
    let mut r = rng(1);
    for d in 1..=4 {
        let cov = spd(&mut r, d, 0.2, 3.0);
        let params = GaussianParams::new(normal_vector(&mut r, d, 1.0), cov.clone()).unwrap();
        let v = normal_vector(&mut r, d, 1.5);
        let expected = oracle_normal_pdf(&v, &params.mean, &cov).ln();
        assert!((gaussian_logpdf(&v, &params).unwrap() - expected).abs() < 1e-10);
    }
}

#[test]
fn forward_scalar_case_matches_hand_values() {
    // c=0, Γ=1, A=2, b=0, Σ=1: forward mean slope A* = ΓA/(Σ + A²Γ) = 0.4, Σ* = 0.2.
    let m = |v: f64| DMatrix::from_element(1, 1, v);
    let v = |x: f64| DVector::from_element(1, x);
    let inv = InverseParams::new(GllimParams {
        weights: vec![1.0],
        gate_means: vec![v(0.0)],
        gate_covs: vec![m(1.0)],
        slopes: vec![m(2.0)],
        intercepts: vec![v(0.0)],
        noise_covs: vec![m(1.0)],
        cov_structure: glome_core::CovStructure::Full,
    })
    .unwrap();
    let fwd = inverse_to_forward(&inv).unwrap();
    assert!((fwd.slopes[0][(0, 0)] - 0.4).abs() < 1e-14);
    assert!((fwd.noise_covs[0][(0, 0)] - 0.2).abs() < 1e-14);
    assert!((fwd.gate_covs[0][(0, 0)] - 5.0).abs() < 1e-14);
    assert!(fwd.intercepts[0][0].abs() < 1e-14);
}

#[test]
fn forward_density_integrates_to_one() {
    let mut r = rng(2);
    for _ in 0..5 {
        let k = r.random_range(1..=4);
        let fwd = ForwardParams::new(random_params(&mut r, k, 1, 1)).unwrap();
        let x = normal_vector(&mut r, 1, 1.0);
        // Trapezoid rule on a grid far wider than any expert's spread.
        let (lo, hi, m) = (-40.0, 40.0, 80_000);
        let h = (hi - lo) / m as f64;
        let mut total = 0.0;
        for i in 0..=m {
            let y = DVector::from_element(1, lo + i as f64 * h);
            let w = if i == 0 || i == m { 0.5 } else { 1.0 };
            total += w * forward_conditional_logpdf(&y, &x, &fwd).unwrap().exp();
        }
        assert!((total * h - 1.0).abs() < 1e-6, "integral {}", total * h);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mapping_agrees_with_bayes_rule(seed in any::<u64>(), k in 1usize..=4, d in 1usize..=3, l in 1usize..=3) {
        let mut r = rng(seed);
        let inv = InverseParams::new(random_params(&mut r, k, l, d)).unwrap();
        let fwd = inverse_to_forward(&inv).unwrap();
        for _ in 0..5 {
            let x = normal_vector(&mut r, d, 1.5);
            let y = normal_vector(&mut r, l, 1.5);
            let got = forward_conditional_logpdf(&y, &x, &fwd).unwrap();
            let expected = oracle_forward_pdf(&y, &x, &inv).ln();
            prop_assert!((got - expected).abs() < 1e-8 * (1.0 + expected.abs()), "{got} vs {expected}");
        }
    }

    #[test]
    fn gating_probabilities_form_a_distribution(seed in any::<u64>(), k in 1usize..=6, l in 1usize..=4, scale in 0.1f64..50.0) {
        let mut r = rng(seed);
        let inv = InverseParams::new(random_params(&mut r, k, l, 1)).unwrap();
        let y = normal_vector(&mut r, l, scale);
        let g = gating_probs(&y, &inv).unwrap();
        prop_assert!(g.iter().all(|&p| (0.0..=1.0).contains(&p)));
        prop_assert!((g.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mapping_round_trip(seed in any::<u64>(), k in 1usize..=5, d in 1usize..=4, l in 1usize..=4) {
        let mut r = rng(seed);
        let inv = InverseParams::new(random_params(&mut r, k, l, d)).unwrap();
        let back = inverse_to_forward(&inverse_to_forward(&inv).unwrap().swap_roles()).unwrap().swap_roles();
        prop_assert!(inv.max_relative_diff(&back) < 1e-10);
    }

    #[test]
    fn densities_invariant_under_component_permutation(seed in any::<u64>(), k in 2usize..=5) {
        let mut r = rng(seed);
        let params = random_params(&mut r, k, 2, 2);
        let mut perm: Vec<usize> = (0..k).collect();
        perm.rotate_left(r.random_range(1..k));
        perm.swap(0, k - 1);
        let a = InverseParams::new(params.clone()).unwrap();
        let b = InverseParams::new(params.permuted(&perm)).unwrap();
        let x = normal_vector(&mut r, 2, 1.0);
        let y = normal_vector(&mut r, 2, 1.0);
        let (pa, pb) = (inverse_conditional_logpdf(&x, &y, &a).unwrap(), inverse_conditional_logpdf(&x, &y, &b).unwrap());
        prop_assert!((pa - pb).abs() < 1e-12 * (1.0 + pa.abs()));
        let (fa, fb) = (inverse_to_forward(&a).unwrap(), inverse_to_forward(&b).unwrap());
        let (qa, qb) = (forward_conditional_logpdf(&y, &x, &fa).unwrap(), forward_conditional_logpdf(&y, &x, &fb).unwrap());
        prop_assert!((qa - qb).abs() < 1e-10 * (1.0 + qa.abs()));
    }

    #[test]
    fn log_likelihood_sums_pointwise_terms(seed in any::<u64>(), n in 1usize..40) {
        let mut r = rng(seed);
        let inv = random_params(&mut r, 3, 1, 2);
        let x: Vec<f64> = (0..2 * n).map(|_| r.random_range(-2.0..2.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
        let data = Dataset::from_rows(n, 2, 1, x, y).unwrap();
        let total = log_likelihood(&data, &inv, Direction::Inverse).unwrap();
        let params = InverseParams::new(inv).unwrap();
        let by_point: f64 = (0..n)
            .map(|i| {
                let xi = DVector::from_column_slice(data.x_row(i));
                let yi = DVector::from_column_slice(data.y_row(i));
                inverse_conditional_logpdf(&xi, &yi, &params).unwrap()
            })
            .sum();
        prop_assert!((total - by_point).abs() < 1e-9 * (1.0 + total.abs()));
    }
}
