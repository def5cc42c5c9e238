//! Evaluation of certified maps: robustness, localization and faithfulness.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::toymodel::ToyClassifier;
use crate::types::{AttributionMap, CertifiedMap, ImageTensor, Label};

/// Fractions of certified pixels, split by certified class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertifiedFractions {
    /// Non-abstained pixels over all pixels.
    pub certified: f64,
    pub one: f64,
    pub zero: f64,
    pub abstain: f64,
}

pub fn percent_certified(cert: &CertifiedMap) -> CertifiedFractions {
    let n = cert.num_pixels().max(1) as f64;
    let one = cert.count(Label::One) as f64 / n;
    let zero = cert.count(Label::Zero) as f64 / n;
    let abstain = cert.count(Label::Abstain) as f64 / n;
    CertifiedFractions {
        certified: (cert.num_pixels() - cert.count(Label::Abstain)) as f64 / n,
        one,
        zero,
        abstain,
    }
}

/// Geometry of an `m × m` grid of equally sized square subimages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub grid_dim: usize,
    pub subimage_size: usize,
    /// `(row, col)` of the evaluated cell.
    pub target_cell: (usize, usize),
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            grid_dim: 2,
            subimage_size: 32,
            target_cell: (0, 0),
        }
    }
}

impl GridSpec {
    pub fn side(&self) -> usize {
        self.grid_dim * self.subimage_size
    }

    pub fn num_cells(&self) -> usize {
        self.grid_dim * self.grid_dim
    }

    pub fn target_index(&self) -> usize {
        self.target_cell.0 * self.grid_dim + self.target_cell.1
    }

    /// Row-major cell index of pixel `p` of the full grid image.
    pub fn cell_of(&self, p: usize) -> usize {
        let side = self.side();
        let (row, col) = (p / side, p % side);
        (row / self.subimage_size) * self.grid_dim + col / self.subimage_size
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_dim == 0 || self.subimage_size == 0 {
            return Err(Error::Config("grid_dim and subimage_size must be >= 1".into()));
        }
        if self.target_cell.0 >= self.grid_dim || self.target_cell.1 >= self.grid_dim {
            return Err(Error::Config(format!(
                "target cell {:?} outside a {}x{} grid",
                self.target_cell, self.grid_dim, self.grid_dim
            )));
        }
        Ok(())
    }

    fn check_dims(&self, height: usize, width: usize) -> Result<()> {
        self.validate()?;
        if height != self.side() || width != self.side() {
            return Err(Error::Shape {
                expected: format!("{0}x{0} grid", self.side()),
                actual: format!("{height}x{width}"),
            });
        }
        Ok(())
    }

    /// Map that is 1 inside `cell` and 0 elsewhere.
    pub fn cell_indicator(&self, cell: usize) -> AttributionMap {
        let side = self.side();
        let values = (0..side * side)
            .map(|p| if self.cell_of(p) == cell { 1.0 } else { 0.0 })
            .collect();
        AttributionMap::new_unchecked(side, side, values)
    }
}

/// A localization ratio; `degenerate` is set when the denominator was zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizationScore {
    pub score: f64,
    pub degenerate: bool,
}

fn ratio(inside: f64, total: f64) -> LocalizationScore {
    if total > 0.0 {
        LocalizationScore {
            score: inside / total,
            degenerate: false,
        }
    } else {
        LocalizationScore {
            score: 0.0,
            degenerate: true,
        }
    }
}

/// Share of positive attribution mass that falls in `cell`.
pub fn gridpg(attr: &AttributionMap, spec: &GridSpec, cell: usize) -> Result<LocalizationScore> {
    spec.check_dims(attr.height(), attr.width())?;
    let (mut inside, mut total) = (0.0, 0.0);
    for (p, &v) in attr.values().iter().enumerate() {
        let pos = v.max(0.0);
        total += pos;
        if spec.cell_of(p) == cell {
            inside += pos;
        }
    }
    Ok(ratio(inside, total))
}

/// Share of pixels certified ONE that fall in `cell`.
pub fn certified_gridpg(cert: &CertifiedMap, spec: &GridSpec, cell: usize) -> Result<LocalizationScore> {
    spec.check_dims(cert.height, cert.width)?;
    let (mut inside, mut total) = (0usize, 0usize);
    for p in cert.ones() {
        total += 1;
        if spec.cell_of(p) == cell {
            inside += 1;
        }
    }
    Ok(ratio(inside as f64, total as f64))
}

pub const DEFAULT_AGGATT_EDGES: [f64; 7] = [0.0, 2.0, 25.0, 50.0, 75.0, 98.0, 100.0];

/// One percentile slice of scores sorted best-first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggAttBin {
    pub lower_pct: f64,
    pub upper_pct: f64,
    /// Indices into the input scores, best first.
    pub members: Vec<usize>,
    /// Median member, shown as the bin's exemplar.
    pub exemplar: Option<usize>,
}

/// Sorts scores descending and slices them into percentile bins.
pub fn aggatt_bins(scores: &[f64], edges: &[f64]) -> Result<Vec<AggAttBin>> {
    if scores.is_empty() {
        return domain("aggatt_bins needs at least one score");
    }
    if edges.len() < 2
        || edges.windows(2).any(|w| w[0] >= w[1])
        || edges[0] < 0.0
        || edges[edges.len() - 1] > 100.0
    {
        return domain(format!("percentile edges must be ascending within [0, 100], got {edges:?}"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let n = scores.len() as f64;
    let pos = |pct: f64| ((pct * n / 100.0).round() as usize).min(scores.len());
    Ok(edges
        .windows(2)
        .map(|w| {
            let members = order[pos(w[0])..pos(w[1])].to_vec();
            let exemplar = (!members.is_empty()).then(|| members[members.len() / 2]);
            AggAttBin {
                lower_pct: w[0],
                upper_pct: w[1],
                members,
                exemplar,
            }
        })
        .collect())
}

/// Confidence in the ground-truth class as certified-important pixels are
/// removed cumulatively, smallest K first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaithfulnessCurve {
    pub k_schedule: Vec<f64>,
    pub confidences: Vec<f64>,
    pub baseline_confidence: f64,
    /// Number of deleted pixels after each step.
    pub deleted: Vec<usize>,
}

pub fn faithfulness_curve(
    model: &ToyClassifier,
    x: &ImageTensor,
    gt_class: usize,
    certs: &[CertifiedMap],
    k_schedule: &[f64],
    fill: f64,
) -> Result<FaithfulnessCurve> {
    if k_schedule.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!("k_schedule must be ascending, got {k_schedule:?}")));
    }
    if gt_class >= model.num_classes {
        return domain(format!("class {gt_class} out of range"));
    }
    let mut deleted = vec![false; x.num_pixels()];
    let mut images = Vec::with_capacity(k_schedule.len() + 1);
    let mut counts = Vec::with_capacity(k_schedule.len());
    images.push(x.clone());
    for &k in k_schedule {
        let cert = certs
            .iter()
            .find(|c| (c.k_percent - k).abs() < 1e-9)
            .ok_or_else(|| Error::Config(format!("no certified map for K = {k}")))?;
        if cert.height != x.height() || cert.width != x.width() {
            return Err(Error::Shape {
                expected: format!("{}x{} certified map", x.height(), x.width()),
                actual: format!("{}x{}", cert.height, cert.width),
            });
        }
        for p in cert.ones() {
            deleted[p] = true;
        }
        let mut img = x.clone();
        for (p, _) in deleted.iter().enumerate().filter(|(_, &d)| d) {
            img.fill_pixel(p, fill);
        }
        counts.push(deleted.iter().filter(|&&d| d).count());
        images.push(img);
    }
    let probs = model.probs_batch(&images)?;
    let mut confidences: Vec<f64> = probs.iter().map(|p| p[gt_class]).collect();
    let baseline_confidence = confidences.remove(0);
    Ok(FaithfulnessCurve {
        k_schedule: k_schedule.to_vec(),
        confidences,
        baseline_confidence,
        deleted: counts,
    })
}
