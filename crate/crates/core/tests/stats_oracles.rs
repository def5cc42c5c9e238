//! Statistical primitives checked against independent implementations.

use approx::assert_relative_eq;
use pixelcert::stats::{binom_sf, certify_threshold, cohen_radius, fwer_alpha, inv_norm_cdf};
use pixelcert::Correction;
use proptest::prelude::*;
use statrs::function::erf::erfc;

fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Φ⁻¹ by bisection on the erf-based CDF.
fn bisect_quantile(p: f64) -> f64 {
    let (mut lo, mut hi) = (-40.0_f64, 40.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if norm_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// P(Bin(n,p) ≥ k) by weighting every one of the 2ⁿ outcome sequences.
fn enumerate_sf(k: u32, n: u32, p: f64) -> f64 {
    (0u32..1 << n)
        .filter(|s| s.count_ones() >= k)
        .map(|s| {
            let ones = s.count_ones() as i32;
            p.powi(ones) * (1.0 - p).powi(n as i32 - ones)
        })
        .sum()
}

/// Tail by direct pmf summation with multiplicative binomial coefficients.
fn pmf_tail(k: u64, n: u64, p: f64) -> f64 {
    let pmf = |i: u64| {
        let mut c = 1.0;
        for j in 0..i {
            c = c * (n - j) as f64 / (j + 1) as f64;
        }
        c * p.powi(i as i32) * (1.0 - p).powi((n - i) as i32)
    };
    (k..=n).map(pmf).sum()
}

#[test]
fn quantile_matches_bisection_oracle() {
    assert_eq!(inv_norm_cdf(0.5).unwrap(), 0.0);
    for (p, frozen) in [(0.75, 0.6744897502), (0.975, 1.9599639845)] {
        let oracle = bisect_quantile(p);
        assert!((oracle - frozen).abs() < 1e-10, "oracle {oracle}");
        assert!((inv_norm_cdf(p).unwrap() - oracle).abs() <= 1e-9);
    }
    for p in [1e-12, 1e-6, 0.01, 0.3, 0.6, 0.9, 0.999] {
        assert!((inv_norm_cdf(p).unwrap() - bisect_quantile(p)).abs() <= 1e-9, "p={p}");
    }
}

#[test]
fn quantile_inverts_cdf_on_wide_range() {
    let mut z = -6.0;
    while z <= 6.0 {
        let back = inv_norm_cdf(norm_cdf(z)).unwrap();
        assert!((back - z).abs() <= 1e-7, "z={z} back={back}");
        z += 0.01;
    }
}

#[test]
fn quantile_rejects_out_of_range() {
    for p in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
        assert!(inv_norm_cdf(p).is_err(), "p={p}");
    }
}

#[test]
fn binomial_tail_matches_enumeration() {
    for n in 0..=12u32 {
        for k in 0..=n {
            for p in [0.5, 0.75, 0.9] {
                let oracle = enumerate_sf(k, n, p);
                let got = binom_sf(k as u64, n as u64, p).unwrap();
                assert_relative_eq!(got, oracle, max_relative = 1e-12);
            }
        }
    }
}

#[test]
fn binomial_tail_examples() {
    assert_eq!(binom_sf(0, 10, 0.3).unwrap(), 1.0);
    assert_relative_eq!(binom_sf(9, 10, 0.5).unwrap(), 11.0 / 1024.0, max_relative = 1e-12);
    assert_relative_eq!(binom_sf(10, 10, 0.75).unwrap(), 0.75f64.powi(10), max_relative = 1e-12);
    assert!(binom_sf(11, 10, 0.5).is_err());
}

#[test]
fn binomial_tail_deep_values_match_pmf_sum() {
    for k in [60u64, 80, 90, 95, 97, 100] {
        let oracle = pmf_tail(k, 100, 0.75);
        assert_relative_eq!(binom_sf(k, 100, 0.75).unwrap(), oracle, max_relative = 1e-10);
    }
}

#[test]
fn threshold_examples() {
    assert_eq!(certify_threshold(10, 0.5, 0.05).unwrap(), 9);
    assert_eq!(certify_threshold(5, 0.99, 0.001).unwrap(), 6);
}

#[test]
fn threshold_matches_exhaustive_scan() {
    let scan = |n: u64, tau: f64, a: f64| (0..=n).find(|&c| pmf_tail(c, n, tau) <= a).unwrap_or(n + 1);
    let oracle = scan(100, 0.75, 1e-8);
    assert_eq!(oracle, 97);
    assert_eq!(certify_threshold(100, 0.75, 1e-8).unwrap(), oracle);
    for (tau, a) in [(0.6, 1e-3), (0.75, 0.001 / 1024.0), (0.9, 0.001 / 4096.0), (0.5, 0.05)] {
        assert_eq!(certify_threshold(100, tau, a).unwrap(), scan(100, tau, a), "tau={tau} a={a}");
    }
}

#[test]
fn bonferroni_division() {
    assert_eq!(fwer_alpha(0.001, 1024, Correction::Bonferroni).unwrap(), 9.765625e-7);
    assert_eq!(fwer_alpha(0.05, 1, Correction::Bonferroni).unwrap(), 0.05);
    assert_relative_eq!(
        fwer_alpha(0.001, 50176, Correction::Bonferroni).unwrap(),
        1.9930e-8,
        max_relative = 1e-4
    );
}

#[test]
fn cohen_radius_examples() {
    assert_eq!(cohen_radius(0.5, 0.5, 1.0).unwrap(), 0.0);
    assert!((cohen_radius(0.975, 0.025, 1.0).unwrap() - 1.9599639845).abs() < 1e-9);
    assert!((cohen_radius(0.75, 0.25, 0.15).unwrap() - 0.1011734625).abs() < 1e-9);
    assert!(cohen_radius(0.25, 0.75, 1.0).is_err());
}

proptest! {
    #[test]
    fn threshold_monotone_in_tau_and_alpha(
        n in 1u64..200,
        t1 in 0.5f64..0.99,
        dt in 0.0f64..0.3,
        a1 in 1e-10f64..0.5,
        shrink in 1.0f64..1000.0,
    ) {
        let t2 = (t1 + dt).min(0.999);
        prop_assert!(certify_threshold(n, t1, a1).unwrap() <= certify_threshold(n, t2, a1).unwrap());
        prop_assert!(certify_threshold(n, t1, a1).unwrap() <= certify_threshold(n, t1, a1 / shrink).unwrap());
    }

    #[test]
    fn binomial_tail_monotone(n in 1u64..300, k in 0u64..300, p in 0.0f64..1.0, dp in 0.0f64..0.5) {
        let k = k.min(n);
        let here = binom_sf(k, n, p).unwrap();
        prop_assert!((0.0..=1.0).contains(&here));
        if k < n {
            prop_assert!(binom_sf(k + 1, n, p).unwrap() <= here * (1.0 + 1e-12));
        }
        prop_assert!(binom_sf(k, n, (p + dp).min(1.0)).unwrap() >= here * (1.0 - 1e-12));
        prop_assert_eq!(binom_sf(0, n, p).unwrap(), 1.0);
    }
}
