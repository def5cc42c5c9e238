//! Statistical primitives behind the per-pixel certification test.

use crate::error::{domain, Result};
use crate::types::Correction;

/// Inverse of the standard normal CDF.
///
/// Wichura's AS241 (PPND16) rational approximation, accurate to about
/// 1e-16 relative over the whole open unit interval.
#[allow(clippy::excessive_precision)]
pub fn inv_norm_cdf(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return domain(format!("inv_norm_cdf requires 0 < p < 1, got {p}"));
    }
    const A: [f64; 8] = [
        3.387_132_872_796_366_608,
        1.331_416_678_917_843_774_5e2,
        1.971_590_950_306_551_442_7e3,
        1.373_169_376_550_946_112_5e4,
        4.592_195_393_154_987_145_7e4,
        6.726_577_092_700_870_085_3e4,
        3.343_057_558_358_812_810_5e4,
        2.509_080_928_730_122_672_7e3,
    ];
    const B: [f64; 8] = [
        1.0,
        4.231_333_070_160_091_125_2e1,
        6.871_870_074_920_579_083e2,
        5.394_196_021_424_751_107_7e3,
        2.121_379_430_158_659_586_7e4,
        3.930_789_580_009_271_061e4,
        2.872_908_573_572_194_267_4e4,
        5.226_495_278_852_854_561e3,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_577_34,
        4.630_337_846_156_545_295_9,
        5.769_497_221_460_691_405_5,
        3.647_848_324_763_204_605_04,
        1.270_458_252_452_368_382_58,
        2.417_807_251_774_506_117_7e-1,
        2.272_384_498_926_918_458_33e-2,
        7.745_450_142_783_414_076_4e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_758_821_87,
        1.676_384_830_183_803_849_4,
        6.897_673_349_851_000_045_5e-1,
        1.481_039_764_274_800_745_9e-1,
        1.519_866_656_361_645_719_66e-2,
        5.475_938_084_995_344_946e-4,
        1.050_750_071_644_416_843_24e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103_777_2,
        5.463_784_911_164_114_369_9,
        1.784_826_539_917_291_335_8,
        2.965_605_718_285_048_912_3e-1,
        2.653_218_952_657_612_309_3e-2,
        1.242_660_947_388_078_438_6e-3,
        2.711_555_568_743_487_578_15e-5,
        2.010_334_399_292_288_132_65e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        5.998_322_065_558_879_376_9e-1,
        1.369_298_809_227_358_053_1e-1,
        1.487_536_129_085_061_485_25e-2,
        7.868_691_311_456_132_591e-4,
        1.846_318_317_510_054_681_8e-5,
        1.421_511_758_316_445_888_7e-7,
        2.044_263_103_389_939_785_64e-15,
    ];

    fn poly(coef: &[f64; 8], x: f64) -> f64 {
        coef.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180_625 - q * q;
        return Ok(q * poly(&A, r) / poly(&B, r));
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let z = if r <= 5.0 {
        r -= 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        r -= 5.0;
        poly(&E, r) / poly(&F, r)
    };
    Ok(if q < 0.0 { -z } else { z })
}

/// Upper tail `P(Bin(n, p) >= k)`.
///
/// Terms are evaluated in log space and summed smallest first, so values
/// deep in the tail keep full relative precision.
pub fn binom_sf(k: u64, n: u64, p: f64) -> Result<f64> {
    if k > n {
        return domain(format!("binom_sf requires k <= n, got k={k}, n={n}"));
    }
    if !(0.0..=1.0).contains(&p) {
        return domain(format!("binom_sf requires p in [0, 1], got {p}"));
    }
    if k == 0 {
        return Ok(1.0);
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    if p == 1.0 {
        return Ok(1.0);
    }

    let ln_fact = ln_factorials(n);
    let ln_p = p.ln();
    let ln_q = (-p).ln_1p();
    let n_us = n as usize;
    let mut terms: Vec<f64> = (k as usize..=n_us)
        .map(|i| {
            let ln_choose = ln_fact[n_us] - ln_fact[i] - ln_fact[n_us - i];
            (ln_choose + i as f64 * ln_p + (n_us - i) as f64 * ln_q).exp()
        })
        .collect();
    terms.sort_by(f64::total_cmp);
    Ok(terms.iter().sum::<f64>().min(1.0))
}

fn ln_factorials(n: u64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n as usize + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for j in 1..=n {
        acc += (j as f64).ln();
        out.push(acc);
    }
    out
}

/// Minimal vote count `c` with `P(Bin(n, tau) >= c) <= alpha_per_test`.
///
/// Returns `n + 1` when even a unanimous vote is not significant.
pub fn certify_threshold(n: u64, tau: f64, alpha_per_test: f64) -> Result<u64> {
    if n == 0 {
        return domain("certify_threshold requires n >= 1");
    }
    if !(0.5..1.0).contains(&tau) {
        return domain(format!("tau must lie in [0.5, 1), got {tau}"));
    }
    if !(alpha_per_test > 0.0 && alpha_per_test < 1.0) {
        return domain(format!("alpha_per_test must lie in (0, 1), got {alpha_per_test}"));
    }
    // binom_sf is non-increasing in c, so the passing counts form a suffix.
    let (mut lo, mut hi) = (0u64, n + 1);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if binom_sf(mid, n, tau)? <= alpha_per_test {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(lo)
}

/// Per-test significance level for `num_tests` simultaneous tests.
///
/// For Holm this is the first (most stringent) step of the step-down
/// sequence; [`holm_rejections`] carries out the full procedure.
pub fn fwer_alpha(alpha: f64, num_tests: usize, correction: Correction) -> Result<f64> {
    if num_tests == 0 {
        return domain("fwer_alpha requires at least one test");
    }
    match correction {
        Correction::Bonferroni | Correction::Holm => Ok(alpha / num_tests as f64),
    }
}

/// Holm step-down: returns which hypotheses are rejected at family-wise
/// level `alpha`.
pub fn holm_rejections(p_values: &[f64], alpha: f64) -> Vec<bool> {
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]).then(a.cmp(&b)));
    let mut rejected = vec![false; m];
    for (step, &i) in order.iter().enumerate() {
        if p_values[i] <= alpha / (m - step) as f64 {
            rejected[i] = true;
        } else {
            break;
        }
    }
    rejected
}

/// Certified ℓ₂ radius of a smoothed classifier,
/// `(σ/2)(Φ⁻¹(p_A) − Φ⁻¹(p_B))`.
pub fn cohen_radius(pa_lower: f64, pb_upper: f64, sigma: f64) -> Result<f64> {
    if !(pb_upper > 0.0 && pb_upper <= pa_lower && pa_lower < 1.0) {
        return domain(format!(
            "cohen_radius requires 0 < pb_upper <= pa_lower < 1, got pa={pa_lower}, pb={pb_upper}"
        ));
    }
    let r = 0.5 * sigma * (inv_norm_cdf(pa_lower)? - inv_norm_cdf(pb_upper)?);
    Ok(r.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn inv_norm_cdf_reference_points() {
        assert_eq!(inv_norm_cdf(0.5).unwrap(), 0.0);
        assert!((inv_norm_cdf(0.75).unwrap() - 0.674_489_750_2).abs() < 1e-9);
        assert!((inv_norm_cdf(0.975).unwrap() - 1.959_963_984_5).abs() < 1e-9);
        assert!((inv_norm_cdf(0.025).unwrap() + 1.959_963_984_5).abs() < 1e-9);
    }

    #[test]
    fn inv_norm_cdf_domain() {
        for p in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(inv_norm_cdf(p).is_err(), "p = {p}");
        }
    }

    #[test]
    fn binom_sf_examples() {
        assert_eq!(binom_sf(0, 10, 0.3).unwrap(), 1.0);
        assert_relative_eq!(binom_sf(9, 10, 0.5).unwrap(), 11.0 / 1024.0, max_relative = 1e-13);
        assert_relative_eq!(binom_sf(10, 10, 0.75).unwrap(), 0.75f64.powi(10), max_relative = 1e-13);
        assert!(binom_sf(11, 10, 0.5).is_err());
    }

    #[test]
    fn binom_sf_degenerate_p() {
        assert_eq!(binom_sf(3, 5, 0.0).unwrap(), 0.0);
        assert_eq!(binom_sf(5, 5, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn certify_threshold_examples() {
        assert_eq!(certify_threshold(10, 0.5, 0.05).unwrap(), 9);
        assert_eq!(certify_threshold(5, 0.99, 0.001).unwrap(), 6);
    }

    #[test]
    fn fwer_examples() {
        let b = Correction::Bonferroni;
        assert_eq!(fwer_alpha(0.001, 1024, b).unwrap(), 9.765_625e-7);
        assert_eq!(fwer_alpha(0.05, 1, b).unwrap(), 0.05);
        assert_relative_eq!(fwer_alpha(0.001, 50176, b).unwrap(), 1.993_0e-8, max_relative = 1e-4);
        assert!(fwer_alpha(0.05, 0, b).is_err());
    }

    #[test]
    fn holm_is_at_least_as_powerful_as_bonferroni() {
        let p = [0.001, 0.011, 0.02, 0.04, 0.5];
        let holm = holm_rejections(&p, 0.05);
        assert_eq!(holm, vec![true, true, false, false, false]);
        let bonf: Vec<bool> = p.iter().map(|&v| v <= 0.05 / 5.0).collect();
        for (h, b) in holm.iter().zip(&bonf) {
            assert!(*h || !*b);
        }
    }

    #[test]
    fn cohen_radius_examples() {
        assert_eq!(cohen_radius(0.5, 0.5, 1.0).unwrap(), 0.0);
        assert!((cohen_radius(0.975, 0.025, 1.0).unwrap() - 1.959_963_984_5).abs() < 1e-9);
        assert!((cohen_radius(0.75, 0.25, 0.15).unwrap() - 0.101_173_462_5).abs() < 1e-9);
        assert!(cohen_radius(0.25, 0.75, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn binom_sf_monotone_in_k_and_p(n in 1u64..60, k in 0u64..60, p in 0.0f64..1.0, dp in 0.0f64..0.5) {
            let k = k.min(n);
            let here = binom_sf(k, n, p).unwrap();
            prop_assert!((0.0..=1.0).contains(&here));
            if k < n {
                prop_assert!(binom_sf(k + 1, n, p).unwrap() <= here * (1.0 + 1e-12));
            }
            let p2 = (p + dp).min(1.0);
            prop_assert!(binom_sf(k, n, p2).unwrap() >= here * (1.0 - 1e-12));
            prop_assert_eq!(binom_sf(0, n, p).unwrap(), 1.0);
        }

        #[test]
        fn certify_threshold_monotone(n in 1u64..200, tau in 0.5f64..0.99, dt in 0.0f64..0.2, a in 1e-9f64..0.5) {
            let c = certify_threshold(n, tau, a).unwrap();
            let tau2 = (tau + dt).min(0.999);
            prop_assert!(certify_threshold(n, tau2, a).unwrap() >= c);
            prop_assert!(certify_threshold(n, tau, (a * 2.0).min(0.99)).unwrap() <= c);
        }

        #[test]
        fn cohen_radius_symmetric_case(p in 0.5f64..0.999, sigma in 0.01f64..2.0) {
            let r = cohen_radius(p, 1.0 - p, sigma).unwrap();
            prop_assert!((r - sigma * inv_norm_cdf(p).unwrap()).abs() < 1e-12 * (1.0 + r));
        }
    }
}
