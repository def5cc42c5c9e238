//! Monte-Carlo vote collection and per-pixel certification of the smoothed
//! sparsified attribution.
//!
//! Each noise sample `x + ε_j` is drawn from its own stream keyed by
//! `(master_seed, j)` and votes are integer sums, so the counts do not
//! depend on how samples are scheduled across threads.

use log::warn;

use crate::attribution::Attributor;
use crate::error::{domain, Error, Result};
use crate::rng::{Purpose, RngStream};
use crate::sparsify::{sparsify, RankRule};
use crate::stats::{binom_sf, certify_threshold, fwer_alpha, holm_rejections, inv_norm_cdf};
use crate::types::{CertifiedMap, Correction, ImageTensor, Label, SmoothingConfig};

/// Per-pixel count of noisy samples whose sparsified bit was 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoteTensor {
    pub height: usize,
    pub width: usize,
    pub counts_one: Vec<u32>,
    pub n_samples: usize,
}

impl VoteTensor {
    pub fn new(height: usize, width: usize, counts_one: Vec<u32>, n_samples: usize) -> Result<Self> {
        if counts_one.len() != height * width {
            return Err(Error::Shape {
                expected: format!("{height}x{width} counts"),
                actual: format!("{} counts", counts_one.len()),
            });
        }
        if let Some(i) = counts_one.iter().position(|&c| c as usize > n_samples) {
            return domain(format!("count at pixel {i} exceeds n_samples = {n_samples}"));
        }
        Ok(Self {
            height,
            width,
            counts_one,
            n_samples,
        })
    }

    pub fn num_pixels(&self) -> usize {
        self.counts_one.len()
    }
}

/// Certified radius `σ·Φ⁻¹(τ)`.
pub fn radius(sigma: f64, tau: f64) -> Result<f64> {
    if sigma.is_nan() || sigma <= 0.0 {
        return domain(format!("sigma must be > 0, got {sigma}"));
    }
    if !(0.5..1.0).contains(&tau) {
        return domain(format!("tau must lie in [0.5, 1), got {tau}"));
    }
    Ok(sigma * inv_norm_cdf(tau)?)
}

/// The `j`-th noisy copy of `x`. Values are not clipped to `[0, 1]`.
pub fn noisy_input(x: &ImageTensor, sigma: f64, master_seed: u64, sample_index: u64) -> ImageTensor {
    let mut rng = RngStream::new(master_seed, Purpose::Noise, sample_index);
    let mut noisy = x.clone();
    for v in noisy.data_mut() {
        *v += sigma * rng.normal();
    }
    noisy
}

fn sample_bits(attr: &dyn Attributor, x: &ImageTensor, cfg: &SmoothingConfig, ks: &[f64], j: usize) -> Result<Vec<Vec<bool>>> {
    let noisy = noisy_input(x, cfg.sigma, cfg.master_seed, j as u64);
    let map = attr.attribute(&noisy)?;
    if map.height() != x.height() || map.width() != x.width() {
        return Err(Error::Shape {
            expected: format!("{}x{} attribution", x.height(), x.width()),
            actual: format!("{}x{}", map.height(), map.width()),
        });
    }
    ks.iter()
        .map(|&k| Ok(sparsify(&map, RankRule::top(k))?.bits))
        .collect()
}

/// Collects votes for several sparsification levels from one set of noise
/// samples; each sample's attribution is computed once.
pub fn sample_votes_multi(
    attr: &dyn Attributor,
    x: &ImageTensor,
    cfg: &SmoothingConfig,
    ks: &[f64],
) -> Result<Vec<VoteTensor>> {
    cfg.validate()?;
    for &k in ks {
        cfg.with_k(k).validate()?;
    }
    let n = cfg.n_samples;

    #[cfg(feature = "parallel")]
    let per_sample: Vec<Result<Vec<Vec<bool>>>> = {
        use rayon::prelude::*;
        (0..n)
            .into_par_iter()
            .map(|j| sample_bits(attr, x, cfg, ks, j))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let per_sample: Vec<Result<Vec<Vec<bool>>>> =
        (0..n).map(|j| sample_bits(attr, x, cfg, ks, j)).collect();

    let pixels = x.num_pixels();
    let mut counts = vec![vec![0u32; pixels]; ks.len()];
    for (j, bits) in per_sample.into_iter().enumerate() {
        let bits = bits.map_err(|e| Error::Sample {
            index: j,
            source: Box::new(e),
        })?;
        for (acc, b) in counts.iter_mut().zip(bits) {
            acc.iter_mut().zip(b).for_each(|(c, one)| *c += one as u32);
        }
    }
    Ok(counts
        .into_iter()
        .map(|counts_one| VoteTensor {
            height: x.height(),
            width: x.width(),
            counts_one,
            n_samples: n,
        })
        .collect())
}

/// Votes at `cfg.k_percent`.
pub fn sample_votes(attr: &dyn Attributor, x: &ImageTensor, cfg: &SmoothingConfig) -> Result<VoteTensor> {
    Ok(sample_votes_multi(attr, x, cfg, &[cfg.k_percent])?.remove(0))
}

/// Labels each pixel ONE, ZERO or ABSTAIN from its votes.
///
/// A pixel is certified for its majority class when the one-sided binomial
/// test of `P(class) > τ` rejects at the family-wise corrected level.
pub fn certify(votes: &VoteTensor, cfg: &SmoothingConfig) -> Result<CertifiedMap> {
    cfg.validate()?;
    if votes.n_samples != cfg.n_samples {
        return Err(Error::Config(format!(
            "votes hold {} samples but config expects {}",
            votes.n_samples, cfg.n_samples
        )));
    }
    let n = votes.n_samples;
    let num_pixels = votes.num_pixels();
    let winner = |ones: u32| -> (Label, usize) {
        let ones = ones as usize;
        if ones >= n - ones {
            (Label::One, ones)
        } else {
            (Label::Zero, n - ones)
        }
    };

    let alpha_floor = fwer_alpha(cfg.alpha, num_pixels, cfg.correction)?;
    let bonferroni_threshold = certify_threshold(n as u64, cfg.tau, alpha_floor)? as usize;

    let threshold = match cfg.correction {
        Correction::Bonferroni => bonferroni_threshold,
        Correction::Holm => {
            // p-values only depend on the winning count.
            let by_count: Vec<f64> = (0..=n)
                .map(|c| binom_sf(c as u64, n as u64, cfg.tau))
                .collect::<Result<_>>()?;
            let p_values: Vec<f64> = votes
                .counts_one
                .iter()
                .map(|&ones| by_count[winner(ones).1])
                .collect();
            let rejected = holm_rejections(&p_values, cfg.alpha);
            votes
                .counts_one
                .iter()
                .zip(&rejected)
                .filter(|(_, &r)| r)
                .map(|(&ones, _)| winner(ones).1)
                .min()
                .unwrap_or(n + 1)
        }
    };
    if threshold > n {
        warn!(
            "no pixel can be certified with n = {n}, tau = {}, alpha = {}; abstaining everywhere",
            cfg.tau, cfg.alpha
        );
    }

    let labels = votes
        .counts_one
        .iter()
        .map(|&ones| {
            let (label, count) = winner(ones);
            if count >= threshold {
                label
            } else {
                Label::Abstain
            }
        })
        .collect();

    Ok(CertifiedMap {
        height: votes.height,
        width: votes.width,
        labels,
        radius: radius(cfg.sigma, cfg.tau)?,
        sigma: cfg.sigma,
        tau: cfg.tau,
        alpha: cfg.alpha,
        k_percent: cfg.k_percent,
        n_samples: n,
        counts_one: votes.counts_one.clone(),
        threshold,
        correction: cfg.correction,
    })
}

/// Samples votes and certifies in one call.
pub fn certify_attribution(attr: &dyn Attributor, x: &ImageTensor, cfg: &SmoothingConfig) -> Result<CertifiedMap> {
    certify(&sample_votes(attr, x, cfg)?, cfg)
}

/// Certified maps for every `k` in `ks`, sharing one set of noise samples.
pub fn certify_multi(
    attr: &dyn Attributor,
    x: &ImageTensor,
    cfg: &SmoothingConfig,
    ks: &[f64],
) -> Result<Vec<CertifiedMap>> {
    sample_votes_multi(attr, x, cfg, ks)?
        .iter()
        .zip(ks)
        .map(|(votes, &k)| certify(votes, &cfg.with_k(k)))
        .collect()
}
