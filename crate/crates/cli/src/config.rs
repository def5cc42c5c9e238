//! Run configuration read from JSON, with defaults for every field.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use pixelcert::attribution::{Method, OcclusionParams, RiseParams, ScoreKind};
use pixelcert::metrics::{GridSpec, DEFAULT_AGGATT_EDGES};
use pixelcert::toymodel::TrainOptions;
use pixelcert::{Correction, SmoothingConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model_path: Option<PathBuf>,
    pub dataset: DatasetConfig,
    pub method: MethodConfig,
    pub score: ScoreKind,
    pub target: TargetChoice,
    pub smoothing: SmoothingSection,
    pub outputs: OutputConfig,
    pub grid: GridConfig,
    pub faithfulness: FaithfulnessConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model_path: None,
            dataset: DatasetConfig::default(),
            method: MethodConfig::Grad,
            score: ScoreKind::Probability,
            target: TargetChoice::Label,
            smoothing: SmoothingSection::default(),
            outputs: OutputConfig::default(),
            grid: GridConfig::default(),
            faithfulness: FaithfulnessConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

/// Held-out images `start .. start + count` of the shape dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub seed: u64,
    pub start: u64,
    pub count: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self { seed: 1, start: 0, count: 4 }
    }
}

fn default_steps() -> usize {
    32
}

/// Attribution methods, including model-free stubs used as oracles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MethodConfig {
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
    /// A random map fixed per image, ignoring the input.
    StubFixed {
        #[serde(default)]
        seed: u64,
    },
    /// Indicator of the target grid cell, ignoring the input.
    StubLocalizer,
    /// Fresh random map for every distinct input.
    StubNoise {
        #[serde(default)]
        seed: u64,
    },
}

impl MethodConfig {
    /// The model-based method, or `None` for stubs.
    pub fn model_method(&self) -> Option<Method> {
        match *self {
            MethodConfig::Grad => Some(Method::Grad),
            MethodConfig::Ixg => Some(Method::Ixg),
            MethodConfig::IntGrad { steps } => Some(Method::IntGrad { steps }),
            MethodConfig::Occlusion { params } => Some(Method::Occlusion { params }),
            MethodConfig::Rise { params } => Some(Method::Rise { params }),
            _ => None,
        }
    }
}

/// Which class the attribution explains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetChoice {
    Label,
    Predicted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoothingSection {
    pub sigma: f64,
    pub n_samples: usize,
    pub tau: f64,
    pub alpha: f64,
    /// Sparsification levels, ascending.
    pub k_percent: Vec<f64>,
    /// Level used for the scalar aggregates.
    pub primary_k: f64,
    pub correction: Correction,
    pub master_seed: u64,
}

impl Default for SmoothingSection {
    fn default() -> Self {
        let base = SmoothingConfig::default();
        Self {
            sigma: base.sigma,
            n_samples: base.n_samples,
            tau: base.tau,
            alpha: base.alpha,
            k_percent: vec![5.0, 10.0, 25.0, 50.0],
            primary_k: 50.0,
            correction: base.correction,
            master_seed: base.master_seed,
        }
    }
}

impl SmoothingSection {
    pub fn at(&self, k_percent: f64) -> SmoothingConfig {
        SmoothingConfig {
            sigma: self.sigma,
            n_samples: self.n_samples,
            tau: self.tau,
            alpha: self.alpha,
            k_percent,
            master_seed: self.master_seed,
            correction: self.correction,
        }
    }

    pub fn primary_index(&self) -> usize {
        self.k_percent
            .iter()
            .position(|&k| (k - self.primary_k).abs() < 1e-9)
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Output directory; `--out` replaces it.
    pub dir: PathBuf,
    /// Report file name inside `dir`.
    pub report: String,
    /// Image subdirectory inside `dir`.
    pub image_dir: String,
    /// Nearest-neighbour enlargement of rendered maps.
    pub image_scale: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("pixelcert-out"),
            report: "report.json".into(),
            image_dir: "images".into(),
            image_scale: 4,
        }
    }
}

impl OutputConfig {
    pub fn report_path(&self) -> PathBuf {
        self.dir.join(&self.report)
    }

    pub fn image_path(&self) -> PathBuf {
        self.dir.join(&self.image_dir)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub count: usize,
    pub grid_dim: usize,
    pub target_cell: (usize, usize),
    pub confidence_min: f64,
    pub seed: u64,
    pub aggatt_edges: Vec<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            count: 100,
            grid_dim: 2,
            target_cell: (0, 0),
            confidence_min: 0.99,
            seed: 0,
            aggatt_edges: DEFAULT_AGGATT_EDGES.to_vec(),
        }
    }
}

impl GridConfig {
    pub fn spec(&self, subimage_size: usize) -> GridSpec {
        GridSpec {
            grid_dim: self.grid_dim,
            subimage_size,
            target_cell: self.target_cell,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FaithfulnessConfig {
    pub k_schedule: Vec<f64>,
    pub fill: f64,
}

impl Default for FaithfulnessConfig {
    fn default() -> Self {
        Self {
            k_schedule: vec![5.0, 10.0, 25.0, 50.0],
            fill: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub train_size: usize,
    pub batch_size: usize,
    pub hidden: usize,
    pub held_out: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let t = TrainOptions::default();
        Self {
            epochs: t.epochs,
            lr: t.lr,
            seed: t.seed,
            train_size: t.train_size,
            batch_size: t.batch_size,
            hidden: t.hidden,
            held_out: 200,
        }
    }
}

impl TrainConfig {
    pub fn options(&self) -> TrainOptions {
        TrainOptions {
            epochs: self.epochs,
            lr: self.lr,
            seed: self.seed,
            train_size: self.train_size,
            batch_size: self.batch_size,
            hidden: self.hidden,
        }
    }
}

pub fn load(path: Option<&Path>) -> anyhow::Result<RunConfig> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

fn check_k_list(name: &str, ks: &[f64]) -> anyhow::Result<()> {
    if ks.is_empty() {
        bail!("{name} must not be empty");
    }
    if ks.windows(2).any(|w| w[0] >= w[1]) {
        bail!("{name} must be strictly ascending, got {ks:?}");
    }
    if let Some(k) = ks.iter().find(|&&k| !(k > 0.0 && k <= 100.0)) {
        bail!("{name} entries must lie in (0, 100], got {k}");
    }
    Ok(())
}

impl RunConfig {
    /// Checks everything shared by the certification commands.
    pub fn validate(&self, image_size: usize) -> anyhow::Result<()> {
        let s = &self.smoothing;
        check_k_list("smoothing.k_percent", &s.k_percent)?;
        if !s.k_percent.iter().any(|&k| (k - s.primary_k).abs() < 1e-9) {
            bail!("smoothing.primary_k {} is not in smoothing.k_percent {:?}", s.primary_k, s.k_percent);
        }
        s.at(s.primary_k).validate()?;
        if let Some(m) = self.method.model_method() {
            m.validate(image_size, image_size)?;
            if self.model_path.is_none() {
                bail!("method {} needs model_path", m.name());
            }
        }
        if let Some(p) = &self.model_path {
            if !p.is_file() {
                bail!("model_path {} does not exist", p.display());
            }
        }
        if self.outputs.image_scale == 0 {
            bail!("outputs.image_scale must be >= 1");
        }
        Ok(())
    }

    pub fn validate_grid(&self, image_size: usize) -> anyhow::Result<()> {
        self.grid.spec(image_size).validate()?;
        if !(0.0..=1.0).contains(&self.grid.confidence_min) {
            bail!("grid.confidence_min must lie in [0, 1]");
        }
        if self.grid.count == 0 {
            bail!("grid.count must be >= 1");
        }
        if self.model_path.is_none() {
            bail!("gridpg needs model_path to select confidently classified images");
        }
        pixelcert::metrics::aggatt_bins(&[0.0], &self.grid.aggatt_edges)?;
        Ok(())
    }

    pub fn validate_faithfulness(&self) -> anyhow::Result<()> {
        check_k_list("faithfulness.k_schedule", &self.faithfulness.k_schedule)?;
        if !self.faithfulness.fill.is_finite() {
            bail!("faithfulness.fill must be finite");
        }
        if self.model_path.is_none() {
            bail!("faithfulness needs model_path to measure confidence");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        let empty: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(empty, cfg);
    }

    #[test]
    fn method_kinds_parse() {
        let m: MethodConfig = serde_json::from_str(r#"{"kind":"rise","num_masks":50}"#).unwrap();
        assert_eq!(m.model_method().unwrap().name(), "rise");
        let m: MethodConfig = serde_json::from_str(r#"{"kind":"stub_noise"}"#).unwrap();
        assert!(m.model_method().is_none());
        assert!(serde_json::from_str::<MethodConfig>(r#"{"kind":"lrp"}"#).is_err());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"smoothing":{"sigmaa":1}}"#).is_err());
    }

    #[test]
    fn k_lists_are_checked() {
        let mut cfg = RunConfig { method: MethodConfig::StubFixed { seed: 0 }, ..RunConfig::default() };
        assert!(cfg.validate(32).is_ok());
        cfg.smoothing.k_percent = vec![10.0, 5.0];
        assert!(cfg.validate(32).is_err());
        cfg.smoothing.k_percent = vec![5.0, 10.0];
        assert!(cfg.validate(32).is_err(), "primary_k 50 missing");
        cfg.smoothing.primary_k = 10.0;
        assert!(cfg.validate(32).is_ok());
    }

    #[test]
    fn model_methods_need_a_model() {
        assert!(RunConfig::default().validate(32).is_err());
    }
}
