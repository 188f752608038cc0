use std::f64::consts::PI;

use glome_core::bounds::{
    complexity_bound, dim_gating_space, kappa0, kappa_primes, penalty_lower_bound, simplex_covering_bound, TheoryConfig,
};
use proptest::prelude::*;

#[test]
fn kappa0_by_substitution_at_half_rho() {
    // ρ = 1/2, C₁ = 2, ε_d = 1, inner constant 27.
    let k0p = 3.0;
    let k1p = 2.0 * (81.0 * 2f64.sqrt() + 28.0);
    let k2p = 2.0 * (42.0 + 3.0 / (4.0 * 3f64.sqrt()));
    let c_rho = 2.0 * (2f64.ln() - 0.5);
    let eps = 0.5;
    let s = (k1p + k2p) * (k1p + k2p);
    let expected = k0p * s * ((1.0 + 72.0 * c_rho * eps / (0.5 * k0p * s)).sqrt() + 1.0) / (2.0 * c_rho * eps) + 36.0;
    let cfg = TheoryConfig::default();
    let (a, b, c) = kappa_primes(&cfg);
    assert!((a - k0p).abs() < 1e-14 && (b - k1p).abs() < 1e-12 && (c - k2p).abs() < 1e-12);
    let got = kappa0(&cfg).unwrap();
    assert!((got - expected).abs() < 1e-9 * expected, "{got} vs {expected}");
}

#[test]
fn kappa0_rejects_bad_constants() {
    for cfg in [
        TheoryConfig { rho: 0.0, ..TheoryConfig::default() },
        TheoryConfig { rho: 1.0, ..TheoryConfig::default() },
        TheoryConfig { c1: 1.0, ..TheoryConfig::default() },
        TheoryConfig { eps_d: -1.0, ..TheoryConfig::default() },
    ] {
        assert!(kappa0(&cfg).is_err(), "{cfg:?}");
    }
}

#[test]
fn gating_dimension_matches_parameter_count() {
    // K−1 weights, K means in R^L, K symmetric L×L covariances.
    for k in 1..6 {
        for l in 1..5 {
            let count = (k - 1) + k * l + k * (l * (l + 1) / 2);
            assert_eq!(dim_gating_space(k, l), count);
        }
    }
}

#[test]
fn two_component_simplex_greedy_cover_at_quarter() {
    // Π₁ is the segment {(t, 1−t)}; sup-norm distance is |t − s|.
    let h: f64 = 1e-3 * 0.25;
    let radius = 0.25 - h;
    let m = (1.0 / h).round() as usize;
    let mut centers = 0;
    let mut covered_to = -1.0;
    for i in 0..=m {
        let t = i as f64 * h;
        if t > covered_to + 1e-12 {
            centers += 1;
            covered_to = t + 2.0 * radius;
        }
    }
    assert!(centers <= 3);
    assert!((simplex_covering_bound(2, 0.25).unwrap() - 136.6).abs() < 0.1);
    assert!(centers as f64 <= simplex_covering_bound(2, 0.25).unwrap());
}

proptest! {
    #[test]
    fn bounds_are_positive_and_homogeneous(dim in 1usize..500, n in 1usize..1_000_000, c in 0.0f64..50.0, z in 0.0f64..20.0, kappa in 0.01f64..100.0, t in 0.1f64..10.0) {
        let root = (c.sqrt() + PI.sqrt()).powi(2);
        let cb = complexity_bound(dim, c, n);
        prop_assert!(cb.is_finite() && cb > 0.0);
        prop_assert!(cb >= 2.0 * dim as f64 * root * (1.0 - 1e-15));
        let pen = penalty_lower_bound(dim, n, c, z, kappa);
        prop_assert!(pen > 0.0);
        let scaled = penalty_lower_bound(dim, n, c, z, t * kappa);
        prop_assert!((scaled - t * pen).abs() <= 1e-12 * scaled);
    }

    #[test]
    fn covering_bound_decreases_in_delta(k in 2usize..6, d1 in 0.01f64..1.0, d2 in 0.01f64..1.0) {
        let (lo, hi) = if d1 < d2 { (d1, d2) } else { (d2, d1) };
        prop_assert!(simplex_covering_bound(k, lo).unwrap() >= simplex_covering_bound(k, hi).unwrap());
    }
}
