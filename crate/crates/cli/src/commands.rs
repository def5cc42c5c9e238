use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use pixelcert::attribution::stub::{random_map, FixedMap, NoiseMap};
use pixelcert::attribution::{AttributionRequest, Attributor};
use pixelcert::gridharness::build_grids;
use pixelcert::metrics::{aggatt_bins, certified_gridpg, faithfulness_curve, gridpg, percent_certified, GridSpec};
use pixelcert::render::{encode_png, render_input, render_map, render_overlay, render_panels, side_by_side, Palette};
use pixelcert::smoothing::{certify_multi, radius};
use pixelcert::toymodel::{held_out_accuracy, train_with, ShapeDataset, ToyClassifier, EVAL_OFFSET};
use pixelcert::{CertifiedMap, ImageTensor};

use crate::config::{MethodConfig, RunConfig, TargetChoice};
use crate::report::{
    mean, quartiles, AggAttEntry, Aggregates, CertifyEntry, FaithfulnessEntry, GridEntry, GridKEntry, KAggregate,
    MapEntry, Report, Status,
};
use crate::Failure;

/// Config problems exit with the usage code.
fn usage<T>(r: anyhow::Result<T>) -> Result<T, Failure> {
    r.map_err(Failure::Usage)
}

fn runtime<T, E: Into<anyhow::Error>>(r: Result<T, E>) -> Result<T, Failure> {
    r.map_err(|e| Failure::Runtime(e.into()))
}

fn load_model(cfg: &RunConfig, dataset: &ShapeDataset) -> Result<Option<ToyClassifier>, Failure> {
    let Some(path) = &cfg.model_path else {
        return Ok(None);
    };
    let file = usage(std::fs::File::open(path).with_context(|| format!("opening model {}", path.display())))?;
    let model = usage(
        ToyClassifier::load(std::io::BufReader::new(file)).with_context(|| format!("loading model {}", path.display())),
    )?;
    let s = dataset.image_size;
    if (model.channels, model.height, model.width) != (dataset.channels, s, s) {
        return Err(Failure::Usage(anyhow!(
            "model expects {}x{}x{} inputs but the dataset yields {}x{s}x{s}",
            model.channels,
            model.height,
            model.width,
            dataset.channels
        )));
    }
    if model.num_classes != dataset.num_classes {
        return Err(Failure::Usage(anyhow!(
            "model has {} classes but the dataset has {}",
            model.num_classes,
            dataset.num_classes
        )));
    }
    Ok(Some(model))
}

/// Grid geometry used by the localizer stub on an image of side `size`.
fn stub_spec(cfg: &RunConfig, size: usize) -> GridSpec {
    let dim = cfg.grid.grid_dim.max(1);
    cfg.grid.spec(size / dim)
}

fn build_attributor<'a>(
    cfg: &RunConfig,
    model: Option<&'a ToyClassifier>,
    target_class: usize,
    item: u64,
    x: &ImageTensor,
    spec: &GridSpec,
) -> anyhow::Result<Box<dyn Attributor + 'a>> {
    let seed = cfg.smoothing.master_seed;
    Ok(match &cfg.method {
        MethodConfig::StubFixed { seed } => Box::new(FixedMap(random_map(x.height(), x.width(), *seed, item))),
        MethodConfig::StubLocalizer => {
            if spec.side() != x.height() || spec.side() != x.width() {
                bail!("stub_localizer needs a {0}x{0} image, got {1}x{2}", spec.side(), x.height(), x.width());
            }
            Box::new(FixedMap(spec.cell_indicator(spec.target_index())))
        }
        MethodConfig::StubNoise { seed } => Box::new(NoiseMap { seed: *seed }),
        other => {
            let method = other.model_method().expect("stubs handled above");
            let model = model.ok_or_else(|| anyhow!("method {} needs a model", method.name()))?;
            Box::new(
                AttributionRequest::new(model, target_class, method)
                    .with_score(cfg.score)
                    .with_seed(seed),
            )
        }
    })
}

fn dataset_for(cfg: &RunConfig) -> ShapeDataset {
    ShapeDataset::new(cfg.dataset.seed)
}

fn write_png(dir: &Path, name: &str, img: &pixelcert::render::RgbImage) -> anyhow::Result<String> {
    std::fs::create_dir_all(dir)?;
    let bytes = encode_png(img)?;
    std::fs::write(dir.join(name), bytes).with_context(|| format!("writing {}", dir.join(name).display()))?;
    Ok(name.to_string())
}

/// Writes the panel strip and the overlay for one image; shared with
/// `render` so both produce identical files.
pub fn write_image_outputs(
    dir: &Path,
    stem: &str,
    x: Option<&ImageTensor>,
    certs: &[CertifiedMap],
    scale: usize,
) -> anyhow::Result<Vec<String>> {
    let palette = Palette::default();
    let panels = render_panels(x, certs, &palette, scale)?;
    let overlay = render_overlay(certs, &palette)?.upscale(scale);
    Ok(vec![
        write_png(dir, &format!("{stem}_panels.png"), &panels)?,
        write_png(dir, &format!("{stem}_overlay.png"), &overlay)?,
    ])
}

fn per_k_aggregate(k: f64, fractions: &[pixelcert::metrics::CertifiedFractions]) -> KAggregate {
    KAggregate {
        k_percent: k,
        percent_certified_mean: mean(fractions.iter().map(|f| f.certified)).unwrap_or(0.0),
        one_mean: mean(fractions.iter().map(|f| f.one)).unwrap_or(0.0),
        zero_mean: mean(fractions.iter().map(|f| f.zero)).unwrap_or(0.0),
        certified_gridpg_mean: None,
    }
}

pub fn train_toy(cfg: &RunConfig, out: &Path) -> Result<(), Failure> {
    let dataset = dataset_for(cfg);
    usage(dataset.validate().map_err(Into::into))?;
    if cfg.train.epochs == 0 || cfg.train.train_size == 0 || cfg.train.batch_size == 0 || cfg.train.hidden == 0 {
        return Err(Failure::Usage(anyhow!("train epochs, train_size, batch_size and hidden must be >= 1")));
    }
    let summary = runtime(train_with(&dataset, &cfg.train.options()))?;
    let held_out = runtime(held_out_accuracy(&summary.model, &dataset, cfg.train.held_out))?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        runtime(std::fs::create_dir_all(dir))?;
    }
    runtime(std::fs::write(out, summary.model.to_bytes()).with_context(|| format!("writing {}", out.display())))?;
    println!("initial_loss {:.6}", summary.initial_loss);
    println!("final_loss {:.6}", summary.final_loss);
    println!("train_accuracy {:.4}", summary.train_accuracy);
    println!("held_out_accuracy {:.4}", held_out);
    println!("model {}", out.display());
    Ok(())
}

struct Prepared {
    dataset: ShapeDataset,
    model: Option<ToyClassifier>,
}

fn prepare(cfg: &RunConfig) -> Result<Prepared, Failure> {
    let dataset = dataset_for(cfg);
    usage(dataset.validate().map_err(Into::into))?;
    usage(cfg.validate(dataset.image_size))?;
    let model = load_model(cfg, &dataset)?;
    Ok(Prepared { dataset, model })
}

fn choose_target(cfg: &RunConfig, model: Option<&ToyClassifier>, x: &ImageTensor, label: usize) -> anyhow::Result<(usize, Option<usize>)> {
    let predicted = match model {
        Some(m) => Some(m.forward(x)?.argmax()),
        None => None,
    };
    let target = match cfg.target {
        TargetChoice::Label => label,
        TargetChoice::Predicted => predicted.ok_or_else(|| anyhow!("target \"predicted\" needs a model"))?,
    };
    Ok((target, predicted))
}

pub fn certify(cfg: &RunConfig) -> Result<(), Failure> {
    let Prepared { dataset, model } = prepare(cfg)?;
    let ks = cfg.smoothing.k_percent.clone();
    let primary = cfg.smoothing.primary_index();
    let image_dir = cfg.outputs.image_path();
    let started = Instant::now();
    let size = dataset.image_size;
    let spec = stub_spec(cfg, size);

    let mut entries = Vec::with_capacity(cfg.dataset.count);
    for i in 0..cfg.dataset.count {
        let t0 = Instant::now();
        let dataset_index = EVAL_OFFSET + cfg.dataset.start + i as u64;
        let (x, label) = dataset.generate(dataset_index);
        let mut entry = CertifyEntry {
            index: i,
            dataset_index,
            label,
            target_class: None,
            predicted_class: None,
            status: Status::Ok,
            error: None,
            maps: Vec::new(),
            images: Vec::new(),
            runtime_sec: 0.0,
        };
        let outcome = (|| -> anyhow::Result<()> {
            let (target, predicted) = choose_target(cfg, model.as_ref(), &x, label)?;
            entry.target_class = Some(target);
            entry.predicted_class = predicted;
            let attr = build_attributor(cfg, model.as_ref(), target, i as u64, &x, &spec)?;
            let certs = certify_multi(attr.as_ref(), &x, &cfg.smoothing.at(cfg.smoothing.primary_k), &ks)?;
            entry.images = write_image_outputs(&image_dir, &format!("image_{i:04}"), Some(&x), &certs, cfg.outputs.image_scale)?;
            entry.maps = certs
                .into_iter()
                .map(|map| MapEntry { k_percent: map.k_percent, fractions: percent_certified(&map), map })
                .collect();
            Ok(())
        })();
        if let Err(e) = outcome {
            log::error!("image {i}: {e:#}");
            entry.status = Status::Error;
            entry.error = Some(format!("{e:#}"));
            entry.maps.clear();
        }
        entry.runtime_sec = t0.elapsed().as_secs_f64();
        entries.push(entry);
    }

    let ok: Vec<&CertifyEntry> = entries.iter().filter(|e| e.status == Status::Ok).collect();
    let per_k: Vec<KAggregate> = ks
        .iter()
        .enumerate()
        .map(|(j, &k)| per_k_aggregate(k, &ok.iter().map(|e| e.maps[j].fractions).collect::<Vec<_>>()))
        .collect();
    let aggregates = Aggregates {
        percent_certified_mean: mean(ok.iter().map(|e| e.maps[primary].fractions.certified)),
        certified_gridpg_mean: None,
        radius: runtime(radius(cfg.smoothing.sigma, cfg.smoothing.tau))?,
        runtime_sec: started.elapsed().as_secs_f64(),
        images_ok: ok.len(),
        images_failed: entries.len() - ok.len(),
        per_k,
        ..Aggregates::default()
    };
    finish("certify", cfg, entries, aggregates)
}

fn finish<T: serde::Serialize>(command: &str, cfg: &RunConfig, entries: Vec<T>, aggregates: Aggregates) -> Result<(), Failure> {
    let (ok, failed) = (aggregates.images_ok, aggregates.images_failed);
    let report = Report::new(command, cfg.clone(), entries, aggregates);
    let path = cfg.outputs.report_path();
    runtime(report.write(&path))?;
    println!("{command}: {ok} ok, {failed} failed; report {}", path.display());
    if ok == 0 && failed > 0 {
        return Err(Failure::Runtime(anyhow!("every item failed")));
    }
    Ok(())
}

pub fn gridpg_cmd(cfg: &RunConfig) -> Result<(), Failure> {
    let Prepared { dataset, model } = prepare(cfg)?;
    usage(cfg.validate_grid(dataset.image_size))?;
    let model = model.expect("validated");
    let spec = cfg.grid.spec(dataset.image_size);
    let ks = cfg.smoothing.k_percent.clone();
    let primary = cfg.smoothing.primary_index();
    let image_dir = cfg.outputs.image_path();
    let started = Instant::now();

    let grids = runtime(build_grids(
        &dataset,
        &model,
        cfg.grid.count,
        cfg.grid.confidence_min,
        cfg.grid.seed,
        &spec,
    ))?;

    let mut entries = Vec::with_capacity(grids.len());
    let mut primary_maps: Vec<Option<Vec<CertifiedMap>>> = Vec::with_capacity(grids.len());
    for (g, grid) in grids.iter().enumerate() {
        let t0 = Instant::now();
        let mut entry = GridEntry {
            index: g,
            cell_labels: grid.cell_labels.clone(),
            source_indices: grid.source_indices.clone(),
            target_cell: grid.target_cell,
            target_class: grid.target_class,
            status: Status::Ok,
            error: None,
            gridpg: None,
            per_k: Vec::new(),
            runtime_sec: 0.0,
        };
        let outcome = (|| -> anyhow::Result<Vec<CertifiedMap>> {
            let attr = build_attributor(cfg, Some(&model), grid.target_class, g as u64, &grid.image, &spec)?;
            let clean = attr.attribute(&grid.image)?;
            entry.gridpg = Some(gridpg(&clean, &spec, grid.target_cell)?);
            let certs = certify_multi(attr.as_ref(), &grid.image, &cfg.smoothing.at(cfg.smoothing.primary_k), &ks)?;
            entry.per_k = certs
                .iter()
                .map(|c| {
                    Ok(GridKEntry {
                        k_percent: c.k_percent,
                        certified_gridpg: certified_gridpg(c, &spec, grid.target_cell)?,
                        fractions: percent_certified(c),
                    })
                })
                .collect::<pixelcert::Result<_>>()?;
            Ok(certs)
        })();
        match outcome {
            Ok(certs) => primary_maps.push(Some(certs)),
            Err(e) => {
                log::error!("grid {g}: {e:#}");
                entry.status = Status::Error;
                entry.error = Some(format!("{e:#}"));
                entry.gridpg = None;
                entry.per_k.clear();
                primary_maps.push(None);
            }
        }
        entry.runtime_sec = t0.elapsed().as_secs_f64();
        entries.push(entry);
    }

    let ok: Vec<usize> = (0..entries.len()).filter(|&g| entries[g].status == Status::Ok).collect();
    let cert_scores: Vec<f64> = ok.iter().map(|&g| entries[g].per_k[primary].certified_gridpg.score).collect();
    let clean_scores: Vec<f64> = ok.iter().map(|&g| entries[g].gridpg.expect("ok grid").score).collect();
    let per_k: Vec<KAggregate> = ks
        .iter()
        .enumerate()
        .map(|(j, &k)| {
            let mut agg = per_k_aggregate(k, &ok.iter().map(|&g| entries[g].per_k[j].fractions).collect::<Vec<_>>());
            agg.certified_gridpg_mean = mean(ok.iter().map(|&g| entries[g].per_k[j].certified_gridpg.score));
            agg
        })
        .collect();

    let aggatt = if cert_scores.is_empty() {
        None
    } else {
        let palette = Palette::default();
        let bins = runtime(aggatt_bins(&cert_scores, &cfg.grid.aggatt_edges))?;
        let mut out = Vec::with_capacity(bins.len());
        for (b, bin) in bins.into_iter().enumerate() {
            let exemplar_grid = bin.exemplar.map(|m| ok[m]);
            let image = match exemplar_grid {
                Some(g) => {
                    let certs = primary_maps[g].as_ref().expect("ok grid");
                    let strip = side_by_side(
                        &[
                            render_input(&grids[g].image).upscale(cfg.outputs.image_scale),
                            render_map(&certs[primary], &palette).upscale(cfg.outputs.image_scale),
                            runtime(render_overlay(certs, &palette))?.upscale(cfg.outputs.image_scale),
                        ],
                        &palette,
                    );
                    let name = format!("aggatt_{b}_{:.0}-{:.0}.png", bin.lower_pct, bin.upper_pct);
                    Some(runtime(write_png(&image_dir, &name, &strip))?)
                }
                None => None,
            };
            out.push(AggAttEntry { bin, exemplar_grid, image });
        }
        Some(out)
    };

    let aggregates = Aggregates {
        percent_certified_mean: mean(ok.iter().map(|&g| entries[g].per_k[primary].fractions.certified)),
        certified_gridpg_mean: mean(cert_scores.iter().copied()),
        radius: runtime(radius(cfg.smoothing.sigma, cfg.smoothing.tau))?,
        runtime_sec: started.elapsed().as_secs_f64(),
        images_ok: ok.len(),
        images_failed: entries.len() - ok.len(),
        per_k,
        gridpg_mean: mean(clean_scores.iter().copied()),
        certified_gridpg_quartiles: quartiles(&cert_scores),
        gridpg_quartiles: quartiles(&clean_scores),
        aggatt,
        ..Aggregates::default()
    };
    finish("gridpg", cfg, entries, aggregates)
}

pub fn faithfulness_cmd(cfg: &RunConfig) -> Result<(), Failure> {
    let Prepared { dataset, model } = prepare(cfg)?;
    usage(cfg.validate_faithfulness())?;
    let model = model.expect("validated");
    let schedule = cfg.faithfulness.k_schedule.clone();
    let spec = stub_spec(cfg, dataset.image_size);
    let started = Instant::now();

    let mut entries = Vec::with_capacity(cfg.dataset.count);
    for i in 0..cfg.dataset.count {
        let t0 = Instant::now();
        let dataset_index = EVAL_OFFSET + cfg.dataset.start + i as u64;
        let (x, label) = dataset.generate(dataset_index);
        let outcome = (|| -> anyhow::Result<_> {
            let attr = build_attributor(cfg, Some(&model), label, i as u64, &x, &spec)?;
            let certs = certify_multi(attr.as_ref(), &x, &cfg.smoothing.at(schedule[0]), &schedule)?;
            let curve = faithfulness_curve(&model, &x, label, &certs, &schedule, cfg.faithfulness.fill)?;
            Ok((curve, certs.iter().map(percent_certified).collect::<Vec<_>>()))
        })();
        let (status, error, curve, fractions) = match outcome {
            Ok((curve, fractions)) => (Status::Ok, None, Some(curve), fractions),
            Err(e) => {
                log::error!("image {i}: {e:#}");
                (Status::Error, Some(format!("{e:#}")), None, Vec::new())
            }
        };
        entries.push(FaithfulnessEntry {
            index: i,
            dataset_index,
            label,
            status,
            error,
            curve,
            fractions,
            runtime_sec: t0.elapsed().as_secs_f64(),
        });
    }

    let ok: Vec<&FaithfulnessEntry> = entries.iter().filter(|e| e.status == Status::Ok).collect();
    let curves: Vec<&pixelcert::metrics::FaithfulnessCurve> = ok.iter().filter_map(|e| e.curve.as_ref()).collect();
    let mean_curve = (!curves.is_empty()).then(|| {
        (0..schedule.len())
            .map(|s| mean(curves.iter().map(|c| c.confidences[s])).unwrap_or(0.0))
            .collect::<Vec<f64>>()
    });
    let per_k: Vec<KAggregate> = schedule
        .iter()
        .enumerate()
        .map(|(j, &k)| per_k_aggregate(k, &ok.iter().map(|e| e.fractions[j]).collect::<Vec<_>>()))
        .collect();
    let aggregates = Aggregates {
        percent_certified_mean: mean(ok.iter().map(|e| e.fractions[0].certified)),
        certified_gridpg_mean: None,
        radius: runtime(radius(cfg.smoothing.sigma, cfg.smoothing.tau))?,
        runtime_sec: started.elapsed().as_secs_f64(),
        images_ok: ok.len(),
        images_failed: entries.len() - ok.len(),
        per_k,
        baseline_confidence_mean: mean(curves.iter().map(|c| c.baseline_confidence)),
        mean_curve,
        ..Aggregates::default()
    };
    finish("faithfulness", cfg, entries, aggregates)
}

/// Re-renders the images of a certify report, or renders a JSON list of
/// certified maps as one panel strip and overlay.
pub fn render_cmd(input: &Path, out: &Path, scale: Option<usize>) -> Result<(), Failure> {
    let text = usage(std::fs::read_to_string(input).with_context(|| format!("reading {}", input.display())))?;
    let value: serde_json::Value = usage(serde_json::from_str(&text).with_context(|| format!("parsing {}", input.display())))?;
    let written = if value.is_array() {
        let certs: Vec<CertifiedMap> = usage(serde_json::from_value(value).context("expected a list of certified maps"))?;
        if certs.is_empty() {
            return Err(Failure::Usage(anyhow!("no certified maps in {}", input.display())));
        }
        runtime(write_image_outputs(out, "maps", None, &certs, scale.unwrap_or(4)))?
    } else {
        let report: Report<CertifyEntry> =
            usage(serde_json::from_value(value).context("expected a certify report or a list of certified maps"))?;
        if report.command != "certify" {
            return Err(Failure::Usage(anyhow!("render expects a certify report, got {}", report.command)));
        }
        let dataset = dataset_for(&report.config);
        let scale = scale.unwrap_or(report.config.outputs.image_scale);
        let mut written = Vec::new();
        for e in report.per_image.iter().filter(|e| e.status == Status::Ok) {
            let (x, _) = dataset.generate(e.dataset_index);
            let certs: Vec<CertifiedMap> = e.maps.iter().map(|m| m.map.clone()).collect();
            written.extend(runtime(write_image_outputs(out, &format!("image_{:04}", e.index), Some(&x), &certs, scale))?);
        }
        written
    };
    println!("render: wrote {} images to {}", written.len(), out.display());
    Ok(())
}

pub fn resolve_out(cfg: &mut RunConfig, out: Option<PathBuf>) {
    if let Some(dir) = out {
        cfg.outputs.dir = dir;
    }
}
