//! JSON report layout shared by the batch commands.

use std::path::Path;

use anyhow::Context;
use pixelcert::metrics::{AggAttBin, CertifiedFractions, FaithfulnessCurve, LocalizationScore};
use pixelcert::CertifiedMap;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

pub const SCHEMA_VERSION: &str = "1.0";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report<T> {
    pub schema_version: String,
    pub command: String,
    /// Seconds since the Unix epoch.
    pub generated_at: u64,
    pub config: RunConfig,
    pub per_image: Vec<T>,
    pub aggregates: Aggregates,
}

impl<T: Serialize> Report<T> {
    pub fn new(command: &str, config: RunConfig, per_image: Vec<T>, aggregates: Aggregates) -> Self {
        let generated_at = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            schema_version: SCHEMA_VERSION.into(),
            command: command.into(),
            generated_at,
            config,
            per_image,
            aggregates,
        }
    }

    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).with_context(|| format!("writing report {}", path.display()))
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Aggregates {
    /// Mean non-abstained fraction at the primary K, over successful images.
    pub percent_certified_mean: Option<f64>,
    pub certified_gridpg_mean: Option<f64>,
    pub radius: f64,
    pub runtime_sec: f64,
    pub images_ok: usize,
    pub images_failed: usize,
    pub per_k: Vec<KAggregate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gridpg_mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certified_gridpg_quartiles: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gridpg_quartiles: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggatt: Option<Vec<AggAttEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_confidence_mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_curve: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct KAggregate {
    pub k_percent: f64,
    pub percent_certified_mean: f64,
    pub one_mean: f64,
    pub zero_mean: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certified_gridpg_mean: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggAttEntry {
    #[serde(flatten)]
    pub bin: AggAttBin,
    /// Grid index of the exemplar, as listed in `per_image`.
    pub exemplar_grid: Option<usize>,
    pub image: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapEntry {
    pub k_percent: f64,
    pub fractions: CertifiedFractions,
    pub map: CertifiedMap,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertifyEntry {
    pub index: usize,
    pub dataset_index: u64,
    pub label: usize,
    pub target_class: Option<usize>,
    pub predicted_class: Option<usize>,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub maps: Vec<MapEntry>,
    pub images: Vec<String>,
    pub runtime_sec: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridKEntry {
    pub k_percent: f64,
    pub certified_gridpg: LocalizationScore,
    pub fractions: CertifiedFractions,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridEntry {
    pub index: usize,
    pub cell_labels: Vec<usize>,
    pub source_indices: Vec<u64>,
    pub target_cell: usize,
    pub target_class: usize,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub gridpg: Option<LocalizationScore>,
    pub per_k: Vec<GridKEntry>,
    pub runtime_sec: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FaithfulnessEntry {
    pub index: usize,
    pub dataset_index: u64,
    pub label: usize,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub curve: Option<FaithfulnessCurve>,
    pub fractions: Vec<CertifiedFractions>,
    pub runtime_sec: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Error,
}

pub fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Lower quartile, median and upper quartile by linear interpolation.
pub fn quartiles(values: &[f64]) -> Option<[f64; 3]> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let at = |q: f64| {
        let pos = q * (v.len() - 1) as f64;
        let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
        v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
    };
    Some([at(0.25), at(0.5), at(0.75)])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_statistics() {
        assert_eq!(mean([1.0, 2.0, 3.0]), Some(2.0));
        assert_eq!(mean([]), None);
        assert_eq!(quartiles(&[4.0, 1.0, 3.0, 2.0, 5.0]), Some([2.0, 3.0, 4.0]));
        assert_eq!(quartiles(&[7.0]), Some([7.0; 3]));
    }
}
