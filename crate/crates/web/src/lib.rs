//! Browser bindings for the certification demo page in `www/`.
//!
//! The page explains a linear template classifier fitted in closed form to
//! the shape dataset, so nothing has to be trained in the browser.

use pixelcert::attribution::{ixg_map, Attributor};
use pixelcert::render::{render_input, render_map, render_panels, Palette, RgbImage};
use pixelcert::smoothing::{certify_multi, radius};
use pixelcert::sparsify::{sparsify, RankRule};
use pixelcert::stats::{certify_threshold, fwer_alpha};
use pixelcert::toymodel::{ShapeDataset, ToyClassifier, EVAL_OFFSET};
use pixelcert::{AttributionMap, CertifiedMap, Correction, ImageTensor, Label, SmoothingConfig};
use wasm_bindgen::prelude::*;

pub const DEMO_KS: [f64; 4] = [5.0, 10.0, 25.0, 50.0];
const TEMPLATE_SAMPLES: u64 = 64;

/// Class templates: the per-class mean of the channel-averaged image,
/// centred to zero sum so overall brightness does not sway the scores.
pub fn template_model(dataset: &ShapeDataset) -> pixelcert::Result<ToyClassifier> {
    let s = dataset.image_size;
    let (channels, classes) = (dataset.channels, dataset.num_classes);
    let mut templates = vec![vec![0.0; s * s]; classes];
    for i in 0..TEMPLATE_SAMPLES {
        let (x, label) = dataset.generate(i);
        for (p, t) in templates[label].iter_mut().enumerate() {
            *t += (0..channels).map(|c| x.get(c, p / s, p % s)).sum::<f64>() / channels as f64;
        }
    }
    let mut weights = Vec::with_capacity(classes * channels * s * s);
    for t in &templates {
        let centre = t.iter().sum::<f64>() / t.len() as f64;
        let scale = classes as f64 / TEMPLATE_SAMPLES as f64;
        for _ in 0..channels {
            weights.extend(t.iter().map(|v| (v - centre) * scale));
        }
    }
    ToyClassifier::linear(channels, s, s, weights, vec![0.0; classes])
}

struct Ixg<'a> {
    model: &'a ToyClassifier,
    class: usize,
}

impl Attributor for Ixg<'_> {
    fn attribute(&self, x: &ImageTensor) -> pixelcert::Result<AttributionMap> {
        ixg_map(self.model, x, self.class)
    }
}

/// Radius, per-pixel level and vote threshold for the given parameters.
pub fn summary(sigma: f64, tau: f64, n_samples: usize, alpha: f64, num_pixels: usize) -> pixelcert::Result<serde_json::Value> {
    let cfg = SmoothingConfig { sigma, tau, n_samples, alpha, ..SmoothingConfig::default() };
    cfg.validate()?;
    let per_test = fwer_alpha(alpha, num_pixels.max(1), Correction::Bonferroni)?;
    let threshold = certify_threshold(n_samples as u64, tau, per_test)?;
    Ok(serde_json::json!({
        "radius": radius(sigma, tau)?,
        "per_test_alpha": per_test,
        "threshold": threshold,
        "certifiable": threshold <= n_samples as u64,
    }))
}

fn to_rgba(img: &RgbImage) -> Vec<u8> {
    img.pixels.chunks(3).flat_map(|p| [p[0], p[1], p[2], 255]).collect()
}

/// Input image and its top-K sparsified IxG map, side by side.
pub fn sparsify_panels(seed: u64, index: u64, k_percent: f64, scale: usize) -> pixelcert::Result<RgbImage> {
    let dataset = ShapeDataset::new(seed);
    let model = template_model(&dataset)?;
    let (x, label) = dataset.generate(EVAL_OFFSET + index);
    let map = ixg_map(&model, &x, label)?;
    let sparse = sparsify(&map, RankRule::top(k_percent))?;
    let palette = Palette::default();
    let mut img = RgbImage::new(map.width(), map.height(), palette.zero);
    for p in sparse.ones() {
        img.put(p / map.width(), p % map.width(), palette.one(k_percent));
    }
    Ok(pixelcert::render::side_by_side(
        &[render_input(&x).upscale(scale), img.upscale(scale)],
        &palette,
    ))
}

pub fn certify_image(seed: u64, index: u64, cfg: &SmoothingConfig) -> pixelcert::Result<(ImageTensor, Vec<CertifiedMap>)> {
    let dataset = ShapeDataset::new(seed);
    let model = template_model(&dataset)?;
    let (x, label) = dataset.generate(EVAL_OFFSET + index);
    let certs = certify_multi(&Ixg { model: &model, class: label }, &x, cfg, &DEMO_KS)?;
    Ok((x, certs))
}

fn js_err(e: pixelcert::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// An RGBA image returned to JavaScript.
#[wasm_bindgen]
pub struct Frame {
    width: usize,
    height: usize,
    rgba: Vec<u8>,
    info: String,
}

#[wasm_bindgen]
impl Frame {
    #[wasm_bindgen(getter)]
    pub fn width(&self) -> usize {
        self.width
    }

    #[wasm_bindgen(getter)]
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn rgba(&self) -> Vec<u8> {
        self.rgba.clone()
    }

    /// JSON with per-K certification fractions, empty for plain views.
    #[wasm_bindgen(getter)]
    pub fn info(&self) -> String {
        self.info.clone()
    }
}

impl Frame {
    fn new(img: &RgbImage, info: String) -> Self {
        Self { width: img.width, height: img.height, rgba: to_rgba(img), info }
    }
}

#[wasm_bindgen(js_name = certificateSummary)]
pub fn certificate_summary(sigma: f64, tau: f64, n_samples: usize, alpha: f64, num_pixels: usize) -> Result<String, JsError> {
    summary(sigma, tau, n_samples, alpha, num_pixels).map(|v| v.to_string()).map_err(js_err)
}

#[wasm_bindgen(js_name = sparsifyView)]
pub fn sparsify_view(seed: u32, index: u32, k_percent: f64, scale: usize) -> Result<Frame, JsError> {
    let img = sparsify_panels(seed.into(), index.into(), k_percent, scale.max(1)).map_err(js_err)?;
    Ok(Frame::new(&img, String::new()))
}

/// Certifies one image at K = 5, 10, 25, 50 and returns the panel strip
/// (input, one map per K, overlay).
#[wasm_bindgen(js_name = certifyView)]
#[allow(clippy::too_many_arguments)]
pub fn certify_view(
    seed: u32,
    index: u32,
    sigma: f64,
    tau: f64,
    n_samples: usize,
    alpha: f64,
    noise_seed: u32,
    scale: usize,
) -> Result<Frame, JsError> {
    let cfg = SmoothingConfig { sigma, tau, n_samples, alpha, master_seed: noise_seed.into(), ..SmoothingConfig::default() };
    let (x, certs) = certify_image(seed.into(), index.into(), &cfg).map_err(js_err)?;
    let img = render_panels(Some(&x), &certs, &Palette::default(), scale.max(1)).map_err(js_err)?;
    let n = x.num_pixels() as f64;
    let info: Vec<serde_json::Value> = certs
        .iter()
        .map(|c| {
            serde_json::json!({
                "k_percent": c.k_percent,
                "one": c.count(Label::One) as f64 / n,
                "zero": c.count(Label::Zero) as f64 / n,
                "abstain": c.count(Label::Abstain) as f64 / n,
            })
        })
        .collect();
    Ok(Frame::new(&img, serde_json::Value::Array(info).to_string()))
}

/// A single certified map, for callers that want one K at a time.
pub fn certified_map_rgba(cert: &CertifiedMap) -> Vec<u8> {
    to_rgba(&render_map(cert, &Palette::default()))
}
