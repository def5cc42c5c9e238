//! Class-distinct image grids for the certified grid pointing game.

use crate::attribution::Attributor;
use crate::error::{Error, Result};
use crate::metrics::{certified_gridpg, gridpg, percent_certified, CertifiedFractions, GridSpec, LocalizationScore};
use crate::rng::{Purpose, RngStream};
use crate::smoothing::certify_attribution;
use crate::toymodel::{ShapeDataset, ToyClassifier, EVAL_OFFSET};
use crate::types::{CertifiedMap, ImageTensor, SmoothingConfig};

/// An `m × m` tiling of confidently classified images from distinct classes.
#[derive(Debug, Clone, PartialEq)]
pub struct GridInstance {
    pub image: ImageTensor,
    /// Class of each cell, row-major.
    pub cell_labels: Vec<usize>,
    /// Dataset index of each tile.
    pub source_indices: Vec<u64>,
    pub target_cell: usize,
    pub target_class: usize,
}

const SCAN_BATCH: usize = 64;

/// Held-out images whose own-class confidence reaches `confidence_min`,
/// grouped by class.
fn confident_pool(
    dataset: &ShapeDataset,
    model: &ToyClassifier,
    per_class: usize,
    confidence_min: f64,
) -> Result<Vec<Vec<u64>>> {
    let classes = dataset.num_classes;
    let scan_limit = (20 * per_class * classes).max(400) as u64;
    let mut pool = vec![Vec::new(); classes];
    let mut next = 0u64;
    while next < scan_limit && pool.iter().any(|p| p.len() < per_class) {
        let end = (next + SCAN_BATCH as u64).min(scan_limit);
        let (images, labels): (Vec<ImageTensor>, Vec<usize>) =
            (next..end).map(|i| dataset.generate(EVAL_OFFSET + i)).unzip();
        let probs = model.probs_batch(&images)?;
        for (offset, (p, &label)) in probs.iter().zip(&labels).enumerate() {
            if p[label] >= confidence_min && pool[label].len() < per_class {
                pool[label].push(EVAL_OFFSET + next + offset as u64);
            }
        }
        next = end;
    }
    Ok(pool)
}

/// Tiles `images` row-major into one grid image.
pub fn tile(images: &[ImageTensor], spec: &GridSpec) -> Result<ImageTensor> {
    spec.validate()?;
    if images.len() != spec.num_cells() {
        return Err(Error::Config(format!(
            "{} tiles given for a {}x{} grid",
            images.len(),
            spec.grid_dim,
            spec.grid_dim
        )));
    }
    let s = spec.subimage_size;
    let channels = images[0].channels();
    for img in images {
        img.check_shape(channels, s, s)?;
    }
    let side = spec.side();
    let mut grid = ImageTensor::zeros(channels, side, side);
    for (cell, img) in images.iter().enumerate() {
        let (r0, c0) = ((cell / spec.grid_dim) * s, (cell % spec.grid_dim) * s);
        for c in 0..channels {
            for r in 0..s {
                for col in 0..s {
                    grid.set(c, r0 + r, c0 + col, img.get(c, r, col));
                }
            }
        }
    }
    Ok(grid)
}

/// Copies cell `cell` back out of a grid image.
pub fn extract_tile(grid: &ImageTensor, spec: &GridSpec, cell: usize) -> ImageTensor {
    let s = spec.subimage_size;
    let (r0, c0) = ((cell / spec.grid_dim) * s, (cell % spec.grid_dim) * s);
    let mut out = ImageTensor::zeros(grid.channels(), s, s);
    for c in 0..grid.channels() {
        for r in 0..s {
            for col in 0..s {
                out.set(c, r, col, grid.get(c, r0 + r, c0 + col));
            }
        }
    }
    out
}

/// Builds `count` grids from held-out images the model classifies with
/// confidence at least `confidence_min`.
pub fn build_grids(
    dataset: &ShapeDataset,
    model: &ToyClassifier,
    count: usize,
    confidence_min: f64,
    seed: u64,
    spec: &GridSpec,
) -> Result<Vec<GridInstance>> {
    spec.validate()?;
    let cells = spec.num_cells();
    if dataset.num_classes < cells {
        return Err(Error::Config(format!(
            "a {0}x{0} grid needs {cells} classes, dataset has {1}",
            spec.grid_dim, dataset.num_classes
        )));
    }
    if spec.subimage_size != dataset.image_size {
        return Err(Error::Config(format!(
            "subimage_size {} does not match dataset image_size {}",
            spec.subimage_size, dataset.image_size
        )));
    }
    let pool = confident_pool(dataset, model, count.max(1), confidence_min)?;
    if pool.iter().any(Vec::is_empty) {
        let counts: Vec<String> = pool
            .iter()
            .enumerate()
            .map(|(c, p)| format!("{}={}", dataset.class_name(c), p.len()))
            .collect();
        return Err(Error::InsufficientImages(format!(
            "images with confidence >= {confidence_min} per class: {}",
            counts.join(", ")
        )));
    }

    (0..count)
        .map(|g| {
            let mut rng = RngStream::new(seed, Purpose::Grid, g as u64);
            let mut classes: Vec<usize> = (0..dataset.num_classes).collect();
            rng.shuffle(&mut classes);
            classes.truncate(cells);
            let source_indices: Vec<u64> = classes
                .iter()
                .map(|&c| pool[c][rng.below(pool[c].len())])
                .collect();
            let tiles: Vec<ImageTensor> = source_indices.iter().map(|&i| dataset.generate(i).0).collect();
            let target_cell = spec.target_index();
            Ok(GridInstance {
                image: tile(&tiles, spec)?,
                target_class: classes[target_cell],
                cell_labels: classes,
                source_indices,
                target_cell,
            })
        })
        .collect()
}

/// Certified and uncertified localization of one grid.
#[derive(Debug, Clone)]
pub struct GridEvaluation {
    pub cert: CertifiedMap,
    pub gridpg: LocalizationScore,
    pub certified_gridpg: LocalizationScore,
    pub fractions: CertifiedFractions,
}

/// Certifies `attr` on the grid image and scores the target cell. The
/// caller builds `attr` to explain `grid.target_class`.
pub fn evaluate_grid(
    grid: &GridInstance,
    attr: &dyn Attributor,
    cfg: &SmoothingConfig,
    spec: &GridSpec,
) -> Result<GridEvaluation> {
    let clean = attr.attribute(&grid.image)?;
    let cert = certify_attribution(attr, &grid.image, cfg)?;
    Ok(GridEvaluation {
        gridpg: gridpg(&clean, spec, grid.target_cell)?,
        certified_gridpg: certified_gridpg(&cert, spec, grid.target_cell)?,
        fractions: percent_certified(&cert),
        cert,
    })
}

/// Evaluates every grid, keeping results in grid order. A failing grid
/// does not stop the others.
pub fn evaluate_grids<F>(
    grids: &[GridInstance],
    make_attr: F,
    cfg: &SmoothingConfig,
    spec: &GridSpec,
) -> Vec<Result<GridEvaluation>>
where
    F: Fn(usize, &GridInstance) -> Box<dyn Attributor + '_> + Sync,
{
    let run = |(i, g): (usize, &GridInstance)| evaluate_grid(g, make_attr(i, g).as_ref(), cfg, spec);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        grids.par_iter().enumerate().map(run).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        grids.iter().enumerate().map(run).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::stub::{random_map, FixedMap, NoiseMap};

    fn spec() -> GridSpec {
        GridSpec::default()
    }

    #[test]
    fn tiling_is_lossless() {
        let ds = ShapeDataset::new(4);
        let tiles: Vec<ImageTensor> = (0..4).map(|i| ds.generate(i).0).collect();
        let grid = tile(&tiles, &spec()).unwrap();
        assert_eq!((grid.height(), grid.width()), (64, 64));
        for (cell, t) in tiles.iter().enumerate() {
            assert_eq!(&extract_tile(&grid, &spec(), cell), t);
        }
        assert!(tile(&tiles[..3], &spec()).is_err());
    }

    #[test]
    fn too_few_classes_is_rejected() {
        let ds = ShapeDataset { num_classes: 3, ..ShapeDataset::new(1) };
        let m = ToyClassifier::zeros(3, 32, 32, 4, 3);
        assert!(build_grids(&ds, &m, 2, 0.5, 0, &spec()).is_err());
    }

    #[test]
    fn impossible_confidence_reports_counts() {
        let ds = ShapeDataset::new(1);
        let m = ToyClassifier::zeros(3, 32, 32, 4, 4);
        let err = build_grids(&ds, &m, 2, 0.99, 0, &spec()).unwrap_err();
        match err {
            Error::InsufficientImages(msg) => assert!(msg.contains("square=0"), "{msg}"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn grids_use_distinct_classes_deterministically() {
        let ds = ShapeDataset::new(1);
        // Uniform 0.25 confidence passes a 0.2 threshold for every image.
        let m = ToyClassifier::zeros(3, 32, 32, 4, 4);
        let a = build_grids(&ds, &m, 5, 0.2, 11, &spec()).unwrap();
        let b = build_grids(&ds, &m, 5, 0.2, 11, &spec()).unwrap();
        assert_eq!(a, b);
        for g in &a {
            let mut labels = g.cell_labels.clone();
            labels.sort_unstable();
            assert_eq!(labels, vec![0, 1, 2, 3]);
            assert_eq!(g.target_cell, 0);
            assert_eq!(g.target_class, g.cell_labels[0]);
            for (cell, &idx) in g.source_indices.iter().enumerate() {
                assert_eq!(ds.label(idx), g.cell_labels[cell]);
                assert_eq!(extract_tile(&g.image, &spec(), cell), ds.generate(idx).0);
            }
        }
    }

    #[test]
    fn perfect_and_noisy_localizers() {
        let ds = ShapeDataset::new(1);
        let m = ToyClassifier::zeros(3, 32, 32, 4, 4);
        let grids = build_grids(&ds, &m, 2, 0.2, 3, &spec()).unwrap();
        let cfg = SmoothingConfig { n_samples: 100, k_percent: 25.0, ..SmoothingConfig::default() };
        let perfect = FixedMap(spec().cell_indicator(0));
        let eval = evaluate_grid(&grids[0], &perfect, &cfg, &spec()).unwrap();
        assert_eq!(eval.certified_gridpg.score, 1.0);
        assert_eq!(eval.gridpg.score, 1.0);

        let noisy = NoiseMap { seed: 5 };
        let eval = evaluate_grid(&grids[1], &noisy, &cfg, &spec()).unwrap();
        assert!(eval.certified_gridpg.degenerate);
        assert!(eval.fractions.certified < 0.01);
    }

    #[test]
    fn random_fixed_maps_score_near_chance() {
        let ds = ShapeDataset::new(1);
        let m = ToyClassifier::zeros(3, 32, 32, 4, 4);
        let grids = build_grids(&ds, &m, 50, 0.2, 9, &spec()).unwrap();
        let cfg = SmoothingConfig { n_samples: 100, k_percent: 25.0, ..SmoothingConfig::default() };
        let evals = evaluate_grids(
            &grids,
            |i, _| Box::new(FixedMap(random_map(64, 64, 2, i as u64))),
            &cfg,
            &spec(),
        );
        let mean = evals.iter().map(|e| e.as_ref().unwrap().certified_gridpg.score).sum::<f64>() / 50.0;
        assert!((mean - 0.25).abs() <= 0.05, "mean {mean}");
    }
}
