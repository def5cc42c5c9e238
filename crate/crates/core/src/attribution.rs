//! Input-layer attribution methods behind a single black-box interface.
//!
//! Gradient maps are reduced from `c·N` elements to `N` pixel scores:
//! Grad takes the channel-wise maximum of `|∂logit/∂x|`, while IxG and
//! IntGrad sum their per-element contributions over channels.

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{Purpose, RngStream};
use crate::toymodel::{softmax, ToyClassifier};
use crate::types::{AttributionMap, ImageTensor};

/// Anything that maps an image to one score per pixel.
pub trait Attributor: Send + Sync {
    fn attribute(&self, x: &ImageTensor) -> Result<AttributionMap>;
}

impl<F> Attributor for F
where
    F: Fn(&ImageTensor) -> Result<AttributionMap> + Send + Sync,
{
    fn attribute(&self, x: &ImageTensor) -> Result<AttributionMap> {
        self(x)
    }
}

/// Model output used by perturbation-based methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreKind {
    #[default]
    Probability,
    Logit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OcclusionParams {
    pub window: usize,
    pub stride: usize,
    pub fill_value: f64,
}

impl Default for OcclusionParams {
    fn default() -> Self {
        Self {
            window: 8,
            stride: 4,
            fill_value: 0.0,
        }
    }
}

impl OcclusionParams {
    pub fn validate(&self, height: usize, width: usize) -> Result<()> {
        if !(1 <= self.stride && self.stride <= self.window && self.window <= height.min(width)) {
            return Err(Error::Config(format!(
                "occlusion needs 1 <= stride ({}) <= window ({}) <= image size ({})",
                self.stride,
                self.window,
                height.min(width)
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RiseParams {
    pub num_masks: usize,
    pub grid_size: usize,
    pub activation_prob: f64,
}

impl Default for RiseParams {
    fn default() -> Self {
        Self {
            num_masks: 600,
            grid_size: 6,
            activation_prob: 0.1,
        }
    }
}

impl RiseParams {
    pub fn validate(&self) -> Result<()> {
        if self.num_masks == 0 || self.grid_size == 0 {
            return Err(Error::Config("RISE needs num_masks >= 1 and grid_size >= 1".into()));
        }
        if !(self.activation_prob > 0.0 && self.activation_prob < 1.0) {
            return Err(Error::Config(format!(
                "RISE activation_prob must lie in (0, 1), got {}",
                self.activation_prob
            )));
        }
        Ok(())
    }
}

fn default_steps() -> usize {
    32
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    Grad,
    Ixg,
    #[serde(rename = "intgrad")]
    IntGrad {
        #[serde(default = "default_steps")]
        steps: usize,
    },
    Occlusion {
        #[serde(default, flatten)]
        params: OcclusionParams,
    },
    Rise {
        #[serde(default, flatten)]
        params: RiseParams,
    },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Grad => "grad",
            Method::Ixg => "ixg",
            Method::IntGrad { .. } => "intgrad",
            Method::Occlusion { .. } => "occlusion",
            Method::Rise { .. } => "rise",
        }
    }

    pub fn validate(&self, height: usize, width: usize) -> Result<()> {
        match self {
            Method::IntGrad { steps } if *steps == 0 => {
                Err(Error::Config("intgrad steps must be >= 1".into()))
            }
            Method::Occlusion { params } => params.validate(height, width),
            Method::Rise { params } => params.validate(),
            _ => Ok(()),
        }
    }
}

/// A configured attribution method for one model and target class.
#[derive(Debug, Clone)]
pub struct AttributionRequest<'a> {
    pub model: &'a ToyClassifier,
    pub target_class: usize,
    pub method: Method,
    pub score: ScoreKind,
    /// Seeds the RISE masks; the same masks are reused on every call.
    pub seed: u64,
}

impl<'a> AttributionRequest<'a> {
    pub fn new(model: &'a ToyClassifier, target_class: usize, method: Method) -> Self {
        Self {
            model,
            target_class,
            method,
            score: ScoreKind::Probability,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_score(mut self, score: ScoreKind) -> Self {
        self.score = score;
        self
    }
}

impl Attributor for AttributionRequest<'_> {
    fn attribute(&self, x: &ImageTensor) -> Result<AttributionMap> {
        attribute(self, x)
    }
}

pub fn attribute(req: &AttributionRequest<'_>, x: &ImageTensor) -> Result<AttributionMap> {
    let model = req.model;
    if req.target_class >= model.num_classes {
        return Err(Error::Config(format!(
            "target class {} out of range for {} classes",
            req.target_class, model.num_classes
        )));
    }
    model.check_input(x)?;
    req.method.validate(x.height(), x.width())?;
    match req.method {
        Method::Grad => grad_map(model, x, req.target_class),
        Method::Ixg => ixg_map(model, x, req.target_class),
        Method::IntGrad { steps } => intgrad_map(model, x, req.target_class, steps, None),
        Method::Occlusion { params } => occlusion_map(model, x, req.target_class, &params, req.score),
        Method::Rise { params } => rise_map(model, x, req.target_class, &params, req.seed, req.score),
    }
}

fn per_pixel(x: &ImageTensor, values: &[f64], reduce: impl Fn(f64, f64) -> f64, init: f64) -> Result<AttributionMap> {
    let n = x.num_pixels();
    let mut out = vec![init; n];
    for c in 0..x.channels() {
        for (o, &v) in out.iter_mut().zip(&values[c * n..(c + 1) * n]) {
            *o = reduce(*o, v);
        }
    }
    AttributionMap::new(x.height(), x.width(), out)
}

/// Max over channels of `|∂logit_class/∂x|`.
pub fn grad_map(model: &ToyClassifier, x: &ImageTensor, class: usize) -> Result<AttributionMap> {
    let g = model.grad_input(x, class)?;
    per_pixel(x, g.data(), |acc, v| acc.max(v.abs()), 0.0)
}

/// Channel sum of `x ⊙ ∂logit_class/∂x`.
pub fn ixg_map(model: &ToyClassifier, x: &ImageTensor, class: usize) -> Result<AttributionMap> {
    let g = model.grad_input(x, class)?;
    let prod: Vec<f64> = x.data().iter().zip(g.data()).map(|(a, b)| a * b).collect();
    per_pixel(x, &prod, |acc, v| acc + v, 0.0)
}

/// Integrated gradients with a right Riemann sum over `steps` path points.
pub fn intgrad_map(
    model: &ToyClassifier,
    x: &ImageTensor,
    class: usize,
    steps: usize,
    baseline: Option<&ImageTensor>,
) -> Result<AttributionMap> {
    if steps == 0 {
        return Err(Error::Config("intgrad steps must be >= 1".into()));
    }
    let zeros;
    let baseline = match baseline {
        Some(b) => {
            if !b.same_shape(x) {
                return Err(Error::Shape {
                    expected: format!("{}x{}x{} baseline", x.channels(), x.height(), x.width()),
                    actual: format!("{}x{}x{}", b.channels(), b.height(), b.width()),
                });
            }
            b
        }
        None => {
            zeros = ImageTensor::zeros(x.channels(), x.height(), x.width());
            &zeros
        }
    };
    let delta: Vec<f64> = x.data().iter().zip(baseline.data()).map(|(a, b)| a - b).collect();
    let mut grad_sum = vec![0.0; delta.len()];
    let mut point = baseline.clone();
    for k in 1..=steps {
        let t = k as f64 / steps as f64;
        for ((p, &b), &d) in point.data_mut().iter_mut().zip(baseline.data()).zip(&delta) {
            *p = b + t * d;
        }
        let g = model.grad_input(&point, class)?;
        grad_sum.iter_mut().zip(g.data()).for_each(|(s, v)| *s += v);
    }
    let contrib: Vec<f64> = delta
        .iter()
        .zip(&grad_sum)
        .map(|(d, g)| d * g / steps as f64)
        .collect();
    per_pixel(x, &contrib, |acc, v| acc + v, 0.0)
}

fn scores_of_rows(model: &ToyClassifier, rows: &Array2<f64>, class: usize, score: ScoreKind) -> Result<Vec<f64>> {
    let logits = model.logits_batch(rows.view())?;
    Ok(logits
        .axis_iter(Axis(0))
        .map(|row| match score {
            ScoreKind::Logit => row[class],
            ScoreKind::Probability => softmax(&row.to_vec())[class],
        })
        .collect())
}

fn score_one(model: &ToyClassifier, x: &ImageTensor, class: usize, score: ScoreKind) -> Result<f64> {
    let pred = model.forward(x)?;
    Ok(match score {
        ScoreKind::Logit => pred.logits[class],
        ScoreKind::Probability => pred.probs[class],
    })
}

/// Window offsets along one axis. A final window flush with the far edge
/// is added when the stride does not land there.
pub fn window_starts(size: usize, window: usize, stride: usize) -> Vec<usize> {
    let mut starts: Vec<usize> = (0..=size - window).step_by(stride).collect();
    if let Some(&last) = starts.last() {
        if last + window < size {
            starts.push(size - window);
        }
    }
    starts
}

/// Sliding-window occlusion: each pixel gets the mean score drop over all
/// windows that cover it.
pub fn occlusion_map(
    model: &ToyClassifier,
    x: &ImageTensor,
    class: usize,
    params: &OcclusionParams,
    score: ScoreKind,
) -> Result<AttributionMap> {
    let (h, w) = (x.height(), x.width());
    params.validate(h, w)?;
    let base = score_one(model, x, class, score)?;
    let rows_at = window_starts(h, params.window, params.stride);
    let cols_at = window_starts(w, params.window, params.stride);
    let positions: Vec<(usize, usize)> = rows_at
        .iter()
        .flat_map(|&r| cols_at.iter().map(move |&c| (r, c)))
        .collect();

    let dim = x.data().len();
    let mut batch = Array2::zeros((positions.len(), dim));
    for (mut row, &(r0, c0)) in batch.axis_iter_mut(Axis(0)).zip(&positions) {
        let mut occluded = x.clone();
        for r in r0..r0 + params.window {
            for c in c0..c0 + params.window {
                occluded.fill_pixel(r * w + c, params.fill_value);
            }
        }
        row.assign(&ndarray::ArrayView1::from(occluded.data()));
    }
    let scores = scores_of_rows(model, &batch, class, score)?;

    let mut sum = vec![0.0; h * w];
    let mut count = vec![0u32; h * w];
    for (&(r0, c0), s) in positions.iter().zip(scores) {
        let delta = base - s;
        for r in r0..r0 + params.window {
            for c in c0..c0 + params.window {
                sum[r * w + c] += delta;
                count[r * w + c] += 1;
            }
        }
    }
    let values = sum
        .iter()
        .zip(&count)
        .map(|(&s, &n)| if n > 0 { s / n as f64 } else { 0.0 })
        .collect();
    AttributionMap::new(h, w, values)
}

/// One RISE mask of size `height × width` in `[0, 1]`.
///
/// An `s × s` Bernoulli grid is bilinearly upsampled to
/// `(height + cell_h) × (width + cell_w)` and cropped at a random offset.
pub fn rise_mask(params: &RiseParams, height: usize, width: usize, seed: u64, index: u64) -> Vec<f64> {
    let s = params.grid_size;
    let mut rng = RngStream::new(seed, Purpose::RiseMasks, index);
    let grid: Vec<f64> = (0..s * s)
        .map(|_| if rng.bernoulli(params.activation_prob) { 1.0 } else { 0.0 })
        .collect();
    let cell_h = height.div_ceil(s);
    let cell_w = width.div_ceil(s);
    let (up_h, up_w) = (height + cell_h, width + cell_w);
    let dy = rng.below(cell_h);
    let dx = rng.below(cell_w);

    let sample_axis = |dst: usize, up: usize| -> (usize, usize, f64) {
        let src = ((dst as f64 + 0.5) * s as f64 / up as f64 - 0.5).clamp(0.0, (s - 1) as f64);
        let lo = src.floor() as usize;
        let hi = (lo + 1).min(s - 1);
        (lo, hi, src - lo as f64)
    };

    let mut mask = Vec::with_capacity(height * width);
    for r in 0..height {
        let (y0, y1, wy) = sample_axis(r + dy, up_h);
        for c in 0..width {
            let (x0, x1, wx) = sample_axis(c + dx, up_w);
            let top = grid[y0 * s + x0] * (1.0 - wx) + grid[y0 * s + x1] * wx;
            let bottom = grid[y1 * s + x0] * (1.0 - wx) + grid[y1 * s + x1] * wx;
            mask.push(top * (1.0 - wy) + bottom * wy);
        }
    }
    mask
}

const RISE_CHUNK: usize = 100;

/// Randomized input sampling: `Σ_m score(x ⊙ M_m)·M_m / (num_masks · p)`.
pub fn rise_map(
    model: &ToyClassifier,
    x: &ImageTensor,
    class: usize,
    params: &RiseParams,
    seed: u64,
    score: ScoreKind,
) -> Result<AttributionMap> {
    params.validate()?;
    let (h, w, ch) = (x.height(), x.width(), x.channels());
    let n = h * w;
    let mut acc = vec![0.0; n];
    let mut start = 0;
    while start < params.num_masks {
        let end = (start + RISE_CHUNK).min(params.num_masks);
        let masks: Vec<Vec<f64>> = (start..end)
            .map(|m| rise_mask(params, h, w, seed, m as u64))
            .collect();
        let mut batch = Array2::zeros((masks.len(), ch * n));
        for (mut row, mask) in batch.axis_iter_mut(Axis(0)).zip(&masks) {
            for c in 0..ch {
                for p in 0..n {
                    row[c * n + p] = x.data()[c * n + p] * mask[p];
                }
            }
        }
        let scores = scores_of_rows(model, &batch, class, score)?;
        for (mask, s) in masks.iter().zip(scores) {
            acc.iter_mut().zip(mask).for_each(|(a, m)| *a += s * m);
        }
        start = end;
    }
    let norm = params.num_masks as f64 * params.activation_prob;
    AttributionMap::new(h, w, acc.into_iter().map(|a| a / norm).collect())
}

/// Attribution functions that ignore the model, for pipeline checks.
pub mod stub {
    use super::*;

    /// Returns the same map for every input.
    #[derive(Debug, Clone)]
    pub struct FixedMap(pub AttributionMap);

    impl Attributor for FixedMap {
        fn attribute(&self, _x: &ImageTensor) -> Result<AttributionMap> {
            Ok(self.0.clone())
        }
    }

    /// Uniform noise keyed by the exact input bits, so every distinct
    /// noisy input gets an unrelated map.
    #[derive(Debug, Clone)]
    pub struct NoiseMap {
        pub seed: u64,
    }

    impl Attributor for NoiseMap {
        fn attribute(&self, x: &ImageTensor) -> Result<AttributionMap> {
            let mut h: u64 = 0xcbf2_9ce4_8422_2325;
            for v in x.data() {
                h ^= v.to_bits();
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
            let mut rng = RngStream::new(self.seed, Purpose::Stub, h);
            let values = (0..x.num_pixels()).map(|_| rng.uniform()).collect();
            AttributionMap::new(x.height(), x.width(), values)
        }
    }

    /// Seeded uniform random map of the given size.
    pub fn random_map(height: usize, width: usize, seed: u64, index: u64) -> AttributionMap {
        let mut rng = RngStream::new(seed, Purpose::Stub, index);
        let values = (0..height * width).map(|_| rng.uniform()).collect();
        AttributionMap::new_unchecked(height, width, values)
    }
}
