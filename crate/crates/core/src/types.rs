//! Shared domain types: images, attribution maps and certified maps.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// A `channels × height × width` image, row-major per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageTensor {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ImageTensor {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        let expected = channels * height * width;
        if data.len() != expected {
            return Err(Error::Shape {
                expected: format!("{channels}x{height}x{width} = {expected} values"),
                actual: format!("{} values", data.len()),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return domain(format!("image value at {i} is not finite"));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::filled(channels, height, width, 0.0)
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f64) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Number of pixels (`height × width`).
    pub fn num_pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, c: usize, row: usize, col: usize) -> f64 {
        self.data[(c * self.height + row) * self.width + col]
    }

    pub fn set(&mut self, c: usize, row: usize, col: usize, value: f64) {
        self.data[(c * self.height + row) * self.width + col] = value;
    }

    /// Sets every channel of pixel `p` (row-major index) to `value`.
    pub fn fill_pixel(&mut self, p: usize, value: f64) {
        let n = self.num_pixels();
        for c in 0..self.channels {
            self.data[c * n + p] = value;
        }
    }

    pub fn same_shape(&self, other: &ImageTensor) -> bool {
        self.channels == other.channels && self.height == other.height && self.width == other.width
    }

    pub(crate) fn check_shape(&self, channels: usize, height: usize, width: usize) -> Result<()> {
        if self.channels != channels || self.height != height || self.width != width {
            return Err(Error::Shape {
                expected: format!("{channels}x{height}x{width}"),
                actual: format!("{}x{}x{}", self.channels, self.height, self.width),
            });
        }
        Ok(())
    }
}

/// A real-valued relevance score per pixel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl AttributionMap {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::Shape {
                expected: format!("{height}x{width} map"),
                actual: format!("{} values", values.len()),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return domain(format!("attribution value at pixel {i} is not finite"));
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    /// Builds a map without the finiteness check.
    pub fn new_unchecked(height: usize, width: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), height * width);
        Self {
            height,
            width,
            values,
        }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            values: vec![0.0; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Binary top-K% map produced by [`crate::sparsify::sparsify`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsifiedMap {
    pub height: usize,
    pub width: usize,
    pub bits: Vec<bool>,
    pub k_percent: f64,
}

impl SparsifiedMap {
    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
    }
}

/// Certified class of a single pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    /// Certified to stay in the bottom (100 − K)%.
    Zero,
    /// Certified to stay in the top K%.
    One,
    Abstain,
}

impl Label {
    pub fn as_char(self) -> char {
        match self {
            Label::Zero => '0',
            Label::One => '1',
            Label::Abstain => '.',
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c {
            '0' => Some(Label::Zero),
            '1' => Some(Label::One),
            '.' => Some(Label::Abstain),
            _ => None,
        }
    }
}

/// Output of the smoothed sparsified attribution: a ternary label per
/// pixel together with the certificate parameters it holds for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertifiedMap {
    pub height: usize,
    pub width: usize,
    #[serde(with = "label_rows")]
    pub labels: Vec<Label>,
    /// ℓ₂ radius in input units within which non-abstain labels are fixed.
    pub radius: f64,
    pub sigma: f64,
    pub tau: f64,
    pub alpha: f64,
    pub k_percent: f64,
    pub n_samples: usize,
    pub counts_one: Vec<u32>,
    /// Minimal winning-class vote count that was certified, or
    /// `n_samples + 1` when nothing could be certified.
    pub threshold: usize,
    pub correction: Correction,
}

impl CertifiedMap {
    pub fn num_pixels(&self) -> usize {
        self.labels.len()
    }

    pub fn label(&self, row: usize, col: usize) -> Label {
        self.labels[row * self.width + col]
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    /// Indices of pixels that were not abstained from.
    pub fn certified_indices(&self) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, &l)| (l != Label::Abstain).then_some(i))
            .collect()
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, &l)| (l == Label::One).then_some(i))
    }
}

/// Family-wise error correction across the per-pixel tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Correction {
    #[default]
    Bonferroni,
    Holm,
}

/// Parameters of one smoothing/certification run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoothingConfig {
    pub sigma: f64,
    pub n_samples: usize,
    pub tau: f64,
    pub alpha: f64,
    pub k_percent: f64,
    pub master_seed: u64,
    pub correction: Correction,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        Self {
            sigma: 0.15,
            n_samples: 100,
            tau: 0.75,
            alpha: 0.001,
            k_percent: 50.0,
            master_seed: 0,
            correction: Correction::Bonferroni,
        }
    }
}

impl SmoothingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if self.n_samples == 0 {
            return Err(Error::Config("n_samples must be >= 1".into()));
        }
        if !(0.5..1.0).contains(&self.tau) {
            return Err(Error::Config(format!("tau must lie in [0.5, 1), got {}", self.tau)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        validate_k_percent(self.k_percent)
    }

    pub fn with_k(&self, k_percent: f64) -> Self {
        Self {
            k_percent,
            ..self.clone()
        }
    }
}

pub(crate) fn validate_k_percent(k: f64) -> Result<()> {
    if !(k > 0.0 && k <= 100.0) {
        return Err(Error::Config(format!("k_percent must lie in (0, 100], got {k}")));
    }
    Ok(())
}

/// Serializes labels as one string per row ('1', '0', '.').
mod label_rows {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::Label;

    pub fn serialize<S: Serializer>(labels: &[Label], s: S) -> Result<S::Ok, S::Error> {
        let text: String = labels.iter().map(|l| l.as_char()).collect();
        text.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Label>, D::Error> {
        let text = String::deserialize(d)?;
        text.chars()
            .map(|c| Label::from_char(c).ok_or_else(|| D::Error::custom(format!("bad label {c:?}"))))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_rejects_wrong_length_and_nan() {
        assert!(ImageTensor::new(3, 2, 2, vec![0.0; 11]).is_err());
        let mut data = vec![0.5; 12];
        data[3] = f64::NAN;
        assert!(matches!(ImageTensor::new(3, 2, 2, data), Err(Error::Domain(_))));
    }

    #[test]
    fn image_indexing_is_channel_major() {
        let img = ImageTensor::new(2, 2, 3, (0..12).map(f64::from).collect()).unwrap();
        assert_eq!(img.get(0, 1, 2), 5.0);
        assert_eq!(img.get(1, 0, 0), 6.0);
        let mut img = img;
        img.fill_pixel(4, -1.0);
        assert_eq!(img.get(0, 1, 1), -1.0);
        assert_eq!(img.get(1, 1, 1), -1.0);
    }

    #[test]
    fn smoothing_defaults_validate() {
        let cfg = SmoothingConfig::default();
        cfg.validate().unwrap();
        assert!(SmoothingConfig { tau: 1.0, ..cfg.clone() }.validate().is_err());
        assert!(SmoothingConfig { tau: 0.49, ..cfg.clone() }.validate().is_err());
        assert!(SmoothingConfig { k_percent: 0.0, ..cfg.clone() }.validate().is_err());
        assert!(SmoothingConfig { sigma: 0.0, ..cfg }.validate().is_err());
    }

    #[test]
    fn certified_map_serializes_labels_compactly() {
        let map = CertifiedMap {
            height: 1,
            width: 3,
            labels: vec![Label::One, Label::Zero, Label::Abstain],
            radius: 0.1,
            sigma: 0.15,
            tau: 0.75,
            alpha: 0.001,
            k_percent: 50.0,
            n_samples: 10,
            counts_one: vec![10, 0, 5],
            threshold: 10,
            correction: Correction::Bonferroni,
        };
        let json = serde_json::to_string(&map).unwrap();
        assert!(json.contains("\"labels\":\"10.\""));
        let back: CertifiedMap = serde_json::from_str(&json).unwrap();
        assert_eq!(back, map);
    }
}
