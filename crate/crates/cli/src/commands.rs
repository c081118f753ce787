//! One function per subcommand. Each reads its upstream artifacts from the
//! work directory, writes its own, and records a `run_meta.json`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crownscale_core::catalog::SpeciesIndex;
use crownscale_core::manifest::validate_manifest;
use crownscale_core::metrics::{compute_report, read_predictions, soft_vote_all, write_predictions};
use crownscale_core::synthetic::{generate_scene, SceneSummary};
use crownscale_core::tiler::{label_polygons, load_polygons, read_close_up_listing, tile_dataset, DatedRaster};
use crownscale_core::{
    assign_splits_trees, build_catalog_trees, expand_to_samples, labeled_trees, longtail_report, read_manifest,
    verify_no_leakage, write_manifest, AcquisitionDate, EvalMode, MetricsReport, PredictionRecord, SpeciesCatalog,
    Split, SplitAssignment, SplitSamples, TileSample, ViewKind,
};
use crownscale_nn::distill::{build_pairs, distill_train, DistillConfig, LabeledSets, TeacherCache};
use crownscale_nn::predict::{predict_dataset, test_samples};
use crownscale_nn::{create_model, run_crossval, train, BackboneRegistry, ModelBundle, TileStore, TrainHistory};
use serde::{Deserialize, Serialize};

use crate::chart::longtail_chart;
use crate::config::{Paths, RunConfig};
use crate::error::{CliError, Result};
use crate::meta::RunMeta;

pub const MANIFEST: &str = "manifest.jsonl";
pub const SPECIES_INDEX: &str = "species_index.csv";
pub const TILE_SUMMARY: &str = "tile_summary.json";
pub const SCENE: &str = "scene.json";
pub const ASSIGNMENT: &str = "assignment.csv";
pub const CATALOG: &str = "catalog.csv";
pub const CHECKPOINT: &str = "checkpoint";
pub const HISTORY: &str = "history.csv";
pub const CROSSVAL: &str = "crossval.json";
pub const TEACHER_CACHE: &str = "teacher_cache";

pub fn metrics_file(view: ViewKind, mode: EvalMode) -> String {
    format!("metrics_{view}_{mode}.json")
}

pub fn predictions_file(view: ViewKind) -> String {
    format!("predictions_{view}.jsonl")
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("artifact serializes");
    write_text(path, &(text + "\n"))
}

/// An artifact another command must have produced.
fn require(path: PathBuf, producer: &'static str) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(CliError::MissingArtifact { path, producer })
    }
}

/// A file named in the config; its absence is a config error.
fn input_file(paths: &Paths, field: &str, p: &Path) -> Result<PathBuf> {
    let path = paths.resolve(p);
    if path.exists() {
        Ok(path)
    } else {
        Err(CliError::config(field, format!("`{}` does not exist", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileReport {
    pub config_hash: String,
    pub polygons_processed: usize,
    pub samples: usize,
    pub crown_view_tiles: usize,
    pub close_up_tiles: usize,
    /// number of dates → number of trees.
    pub dates_per_tree: BTreeMap<usize, usize>,
    pub skipped: Vec<(String, String)>,
}

impl TileReport {
    pub fn display(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "polygons processed: {}", self.polygons_processed);
        let _ = writeln!(
            s,
            "tiles written: {} ({} crown view, {} close-up)",
            self.samples, self.crown_view_tiles, self.close_up_tiles
        );
        let _ = writeln!(s, "dates per tree:");
        for (dates, trees) in &self.dates_per_tree {
            let _ = writeln!(s, "  {dates:>3} dates: {trees} trees");
        }
        let _ = writeln!(s, "skipped geometries: {}", self.skipped.len());
        for (tree, reason) in &self.skipped {
            let _ = writeln!(s, "  {tree}: {reason}");
        }
        s
    }
}

/// Generates a synthetic scene under `<work_dir>/scene`.
pub fn cmd_synth(cfg: &RunConfig, paths: &Paths) -> Result<SceneSummary> {
    let dir = paths.scene();
    let summary = generate_scene(&cfg.synth, &dir)?;
    write_json(&dir.join(SCENE), &summary)?;
    RunMeta::new("synth", cfg, cfg.synth.seed)
        .detail("trees", summary.trees.len())
        .detail("dates", summary.dates.len())
        .write(&dir)?;
    println!(
        "scene: {} trees, {} species, {} dates in {}",
        summary.trees.len(),
        summary.species.len(),
        summary.dates.len(),
        dir.display()
    );
    Ok(summary)
}

struct TileInputs {
    dates: Vec<AcquisitionDate>,
    polygons: PathBuf,
    close_up_listing: Option<PathBuf>,
    close_up_dir: Option<PathBuf>,
}

fn tile_inputs(cfg: &RunConfig, paths: &Paths) -> Result<TileInputs> {
    let t = &cfg.tile;
    let scene: Option<SceneSummary> = match &t.scene {
        Some(p) => {
            let path = input_file(paths, "tile.scene", p)?;
            let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
            Some(serde_json::from_str(&text).map_err(|e| CliError::config("tile.scene", e))?)
        }
        None => None,
    };
    let polygons = match (&t.polygons, &scene) {
        (Some(p), _) => input_file(paths, "tile.polygons", p)?,
        (None, Some(s)) => s.polygons.clone(),
        (None, None) => return Err(CliError::config("tile.polygons", "required")),
    };
    let dates = if !t.rasters.is_empty() {
        t.rasters
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let path = input_file(paths, &format!("tile.rasters[{i}].path"), &r.path)?;
                Ok(AcquisitionDate {
                    date_id: r.date_id.clone(),
                    raster_uri: path.to_string_lossy().into_owned(),
                })
            })
            .collect::<Result<Vec<_>>>()?
    } else if let Some(s) = &scene {
        s.dates.clone()
    } else {
        return Err(CliError::config("tile.rasters", "at least one dated raster is required"));
    };
    let close_up_listing = match (&t.close_up_listing, &scene) {
        (Some(p), _) => Some(input_file(paths, "tile.close_up_listing", p)?),
        (None, Some(s)) => Some(s.close_up_listing.clone()),
        (None, None) => None,
    };
    let close_up_dir = match (&t.close_up_dir, &scene) {
        (Some(p), _) => Some(input_file(paths, "tile.close_up_dir", p)?),
        (None, Some(s)) if t.close_up_listing.is_none() => Some(s.close_up_dir.clone()),
        _ => close_up_listing
            .as_ref()
            .and_then(|l| l.parent().map(Path::to_path_buf)),
    };
    Ok(TileInputs {
        dates,
        polygons,
        close_up_listing,
        close_up_dir,
    })
}

/// Tiles every polygon on every date and ingests close-ups.
pub fn cmd_tile(cfg: &RunConfig, paths: &Paths) -> Result<TileReport> {
    let inputs = tile_inputs(cfg, paths)?;
    let features = load_polygons(&inputs.polygons, cfg.tile.crs.as_deref())?;
    let (polygons, index) = label_polygons(features)?;
    let rasters = inputs
        .dates
        .into_iter()
        .map(DatedRaster::open)
        .collect::<crownscale_core::Result<Vec<_>>>()?;
    let close_ups = match &inputs.close_up_listing {
        Some(p) => read_close_up_listing(p)?,
        None => Vec::new(),
    };
    let close_up_dir = inputs.close_up_dir.unwrap_or_else(|| PathBuf::from("."));

    let out = paths.tiles();
    create_dir(&out)?;
    let summary = tile_dataset(&polygons, &rasters, &close_ups, &close_up_dir, cfg.tile.tile_size, &out)?;
    write_manifest(&summary.samples, &out.join(MANIFEST))?;
    let mut counts = vec![0usize; index.names().len()];
    for p in &polygons {
        if let Some(l) = p.species_label {
            counts[l] += 1;
        }
    }
    index.write_csv(&out.join(SPECIES_INDEX), &counts)?;

    let count = |v| summary.samples.iter().filter(|s| s.view == v).count();
    let report = TileReport {
        config_hash: cfg.hash(),
        polygons_processed: summary.polygons_processed,
        samples: summary.samples.len(),
        crown_view_tiles: count(ViewKind::CrownView),
        close_up_tiles: count(ViewKind::CloseUp),
        dates_per_tree: summary.dates_per_tree.clone(),
        skipped: summary.skipped.clone(),
    };
    write_json(&out.join(TILE_SUMMARY), &report)?;
    RunMeta::new("tile", cfg, 0)
        .detail("samples", report.samples)
        .write(&out)?;
    print!("{}", report.display());
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub config_hash: String,
    pub trees: BTreeMap<Split, usize>,
    pub samples: BTreeMap<Split, usize>,
    pub unlabeled_samples: usize,
    pub species: usize,
}

/// Stratified tree-level holdout split and the final species catalog.
pub fn cmd_split(cfg: &RunConfig, paths: &Paths) -> Result<SplitReport> {
    let tiles = paths.tiles();
    let mut samples = read_manifest(&require(tiles.join(MANIFEST), "tile")?)?;
    let index = SpeciesIndex::read_csv(&require(tiles.join(SPECIES_INDEX), "tile")?)?;
    let trees = labeled_trees(&samples);
    let assignment = assign_splits_trees(&trees, cfg.split.ratios, cfg.split.seed)?;
    let (catalog, remap) = build_catalog_trees(&trees, &assignment, &index)?;
    for s in &mut samples {
        if let Some(old) = s.label() {
            let new = remap.get(old).copied().filter(|&n| n != usize::MAX).ok_or_else(|| {
                CliError::Validation(format!("tree `{}` has label {old} outside the species index", s.tree_id))
            })?;
            s.species_label = Some(new as i64);
        }
    }
    validate_manifest(&samples)?;
    let parts = expand_to_samples(&assignment, &samples)?;
    let leaks = verify_no_leakage(&assignment, &parts);
    if !leaks.is_clean() {
        return Err(CliError::Validation(format!("split leaks trees across splits: {leaks:?}")));
    }

    let out = paths.split();
    create_dir(&out)?;
    assignment.write(&out.join(ASSIGNMENT))?;
    catalog.write_csv(&out.join(CATALOG))?;
    write_manifest(&samples, &out.join(MANIFEST))?;
    let report = SplitReport {
        config_hash: cfg.hash(),
        trees: Split::ALL.iter().map(|&s| (s, assignment.count(s))).collect(),
        samples: Split::ALL.iter().map(|&s| (s, parts.split(s).len())).collect(),
        unlabeled_samples: parts.unlabeled.len(),
        species: catalog.len(),
    };
    write_json(&out.join("split_summary.json"), &report)?;
    RunMeta::new("split", cfg, cfg.split.seed).write(&out)?;
    println!("species: {}", report.species);
    for s in Split::ALL {
        println!("{:>5}: {} trees, {} samples", s.as_str(), report.trees[&s], report.samples[&s]);
    }
    println!("unlabeled samples: {}", report.unlabeled_samples);
    Ok(report)
}

/// Split artifacts as the downstream commands need them.
pub struct SplitData {
    pub samples: Vec<TileSample>,
    pub assignment: SplitAssignment,
    pub catalog: SpeciesCatalog,
    pub parts: SplitSamples,
}

pub fn load_split(paths: &Paths) -> Result<SplitData> {
    let dir = paths.split();
    let samples = read_manifest(&require(dir.join(MANIFEST), "split")?)?;
    let assignment = SplitAssignment::read(&require(dir.join(ASSIGNMENT), "split")?)?;
    let catalog = SpeciesCatalog::read_csv(&require(dir.join(CATALOG), "split")?)?;
    let parts = expand_to_samples(&assignment, &samples)?;
    Ok(SplitData {
        samples,
        assignment,
        catalog,
        parts,
    })
}

fn of_view(samples: &[TileSample], view: ViewKind) -> Vec<TileSample> {
    samples.iter().filter(|s| s.view == view).cloned().collect()
}

fn new_model(cfg: &RunConfig, paths: &Paths, n_classes: usize) -> Result<ModelBundle> {
    let registry = BackboneRegistry::default();
    let spec = cfg.model.backbone_spec(&registry)?;
    let weights = cfg.model.weights.as_ref().map(|p| paths.resolve(p));
    Ok(create_model(&registry, spec, n_classes, weights.as_deref(), cfg.model.init_seed)?)
}

fn history_summary(h: &TrainHistory) -> String {
    let best = h.best();
    format!(
        "best epoch {} of {} (val_loss {:.4}, val_top1 {:.4}){}",
        h.best_epoch,
        h.stopped_epoch,
        best.val_loss,
        best.val_top1,
        if h.stopped_early { ", stopped early" } else { "" }
    )
}

/// Fine-tunes the configured backbone on the train split of `model.view`,
/// after an optional k-fold cross-validation over train + val.
pub fn cmd_train(cfg: &RunConfig, paths: &Paths) -> Result<TrainHistory> {
    let data = load_split(paths)?;
    let view = cfg.model.view;
    let store = TileStore::new(paths.tiles());
    let out = paths.train(view);
    create_dir(&out)?;

    if let Some(k) = cfg.split.crossval_folds {
        let pool: Vec<TileSample> = of_view(&data.parts.train, view)
            .into_iter()
            .chain(of_view(&data.parts.val, view))
            .collect();
        let make = || new_model(cfg, paths, data.catalog.len()).map_err(|e| match e {
            CliError::Nn(e) => e,
            other => crownscale_nn::Error::Config(other.to_string()),
        });
        let (_, summary) = run_crossval(&make, &store, &pool, k, &cfg.train)?;
        write_json(&out.join(CROSSVAL), &summary)?;
        println!("{}", summary.display());
    }

    let model = new_model(cfg, paths, data.catalog.len())?;
    let train_set = of_view(&data.parts.train, view);
    let val_set = of_view(&data.parts.val, view);
    let (model, history) = train(model, &store, &train_set, &val_set, &cfg.train)?;
    model.save_checkpoint(&out.join(CHECKPOINT), Some(&data.catalog))?;
    history.write_csv(&out.join(HISTORY))?;
    RunMeta::new("train", cfg, cfg.train.seed)
        .detail("backbone", &cfg.model.backbone)
        .detail("view", view)
        .detail("best_epoch", history.best_epoch)
        .detail("stopped_epoch", history.stopped_epoch)
        .write(&out)?;
    println!("{}", history_summary(&history));
    Ok(history)
}

/// Cross-scale distillation from a frozen teacher checkpoint into a fresh
/// student built from `[model]`.
pub fn cmd_distill(cfg: &RunConfig, paths: &Paths) -> Result<TrainHistory> {
    let teacher_dir = match &cfg.distill.teacher_checkpoint {
        Some(p) => paths.resolve(p),
        None => paths.train(ViewKind::CloseUp).join(CHECKPOINT),
    };
    let teacher_dir = require(teacher_dir, "train")?;
    let data = load_split(paths)?;
    let (teacher, _) = ModelBundle::load_checkpoint(&teacher_dir)?;
    let student = new_model(cfg, paths, data.catalog.len())?;
    let store = TileStore::new(paths.tiles());
    let out = paths.distill();
    create_dir(&out)?;

    let dc = DistillConfig {
        loss_weight_distill: cfg.distill.loss_weight_distill,
        train: cfg.train.clone(),
        pairing: cfg.distill.pairing.clone(),
    };
    let pairs = build_pairs(&data.samples, &data.assignment, &dc.pairing)?;
    let cache_dir = out.join(TEACHER_CACHE);
    let checksum = teacher.store().checksum(None)?;
    let cache = match TeacherCache::load(&cache_dir) {
        Ok(c) if c.teacher_checksum == checksum && pairs.iter().all(|p| c.get(&p.teacher.image_path).is_some()) => c,
        _ => {
            let c = TeacherCache::compute(&teacher, &store, &pairs, cfg.train.batch_size)?;
            c.save(&cache_dir)?;
            c
        }
    };
    let labeled_train = of_view(&data.parts.train, ViewKind::CrownView);
    let labeled_val = of_view(&data.parts.val, ViewKind::CrownView);
    let labeled = LabeledSets {
        train: &labeled_train,
        val: &labeled_val,
    };
    let (student, history) = distill_train(student, &teacher, &cache, &store, &pairs, labeled, &dc)?;
    student.save_checkpoint(&out.join(CHECKPOINT), Some(&data.catalog))?;
    history.write_csv(&out.join(HISTORY))?;
    RunMeta::new("distill", cfg, cfg.train.seed)
        .detail("backbone", &cfg.model.backbone)
        .detail("view", ViewKind::CrownView)
        .detail("teacher", teacher.spec().backbone.name.clone())
        .detail("teacher_checksum", checksum)
        .detail("pairs", pairs.len())
        .write(&out)?;
    println!("{} cross-scale pairs; {}", pairs.len(), history_summary(&history));
    Ok(history)
}

/// Predicts the test split of each configured view and writes one metric
/// report per (view, mode).
pub fn cmd_evaluate(cfg: &RunConfig, paths: &Paths) -> Result<Vec<MetricsReport>> {
    let ckpt = match &cfg.evaluate.checkpoint {
        Some(p) => require(paths.resolve(p), "train")?,
        None => require(paths.train(cfg.model.view).join(CHECKPOINT), "train")?,
    };
    require(ckpt.join(crownscale_nn::model::SPEC_FILE), "train")?;
    let data = load_split(paths)?;
    let (model, ckpt_catalog) = ModelBundle::load_checkpoint(&ckpt)?;
    if ckpt_catalog.as_ref().is_some_and(|c| *c != data.catalog) {
        return Err(CliError::Validation(format!(
            "checkpoint `{}` was trained with a different species catalog",
            ckpt.display()
        )));
    }
    let store = TileStore::new(paths.tiles());
    let name = cfg.evaluate.name.clone().unwrap_or_else(|| cfg.model.view.to_string());
    let out = paths.eval(&name);
    create_dir(&out)?;
    let hash = cfg.hash();
    let mut reports = Vec::new();
    for &view in &cfg.evaluate.views {
        let test = test_samples(&data.samples, &data.assignment, view);
        if test.is_empty() {
            return Err(CliError::Validation(format!("the test split has no {view} samples")));
        }
        let records = predict_dataset(&model, &store, &test, cfg.evaluate.batch_size)?;
        write_predictions(&records, &out.join(predictions_file(view)))?;
        for &mode in &cfg.evaluate.modes {
            let mut report = compute_report(&records, &data.catalog, mode, view)?;
            report.config_hash = Some(hash.clone());
            report.write_json(&out.join(metrics_file(view, mode)))?;
            print!("{}", report.to_table());
            reports.push(report);
        }
    }
    data.catalog.write_csv(&out.join(CATALOG))?;
    RunMeta::new("evaluate", cfg, 0)
        .detail("name", &name)
        .detail("backbone", model.spec().backbone.name.clone())
        .detail("checkpoint", ckpt.display().to_string())
        .write(&out)?;
    Ok(reports)
}

/// One evaluation directory as seen by `report`.
struct EvalInput {
    label: String,
    dir: PathBuf,
    reports: Vec<MetricsReport>,
}

fn read_eval_dir(dir: &Path) -> Result<EvalInput> {
    let meta = RunMeta::read(&require(dir.to_path_buf(), "evaluate")?).map_err(|e| match e {
        CliError::Io { path, .. } => CliError::MissingArtifact {
            path,
            producer: "evaluate",
        },
        other => other,
    })?;
    let detail = |k: &str| meta.details.get(k).and_then(|v| v.as_str()).unwrap_or("?").to_string();
    let label = format!("{} ({})", detail("backbone"), detail("name"));
    let mut reports = Vec::new();
    for view in [ViewKind::CrownView, ViewKind::CloseUp] {
        for mode in EvalMode::ALL {
            let path = dir.join(metrics_file(view, mode));
            if path.exists() {
                reports.push(MetricsReport::read_json(&path)?);
            }
        }
    }
    if reports.is_empty() {
        return Err(CliError::MissingArtifact {
            path: dir.join("metrics_*.json"),
            producer: "evaluate",
        });
    }
    Ok(EvalInput {
        label,
        dir: dir.to_path_buf(),
        reports,
    })
}

fn metric_table(title: &str, rows: &[(&str, &MetricsReport)]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "## {title}\n");
    let _ = writeln!(s, "| model | mode | records | top-1 | top-3 | top-5 | macro F1 | micro F1 | weighted F1 |");
    let _ = writeln!(s, "|---|---|---:|---:|---:|---:|---:|---:|---:|");
    for (label, r) in rows {
        let _ = writeln!(
            s,
            "| {label} | {} | {} | {:.4} | {:.4} | {:.4} | {:.4} | {:.4} | {:.4} |",
            r.mode, r.n_records, r.top1, r.top3, r.top5, r.macro_f1, r.micro_f1, r.weighted_f1
        );
    }
    if rows.iter().any(|(_, r)| r.topk_clamped) {
        let _ = writeln!(s, "\nTop-k with k above the number of species is computed with k clamped to that number.");
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub config_hashes: Vec<String>,
    pub inputs: Vec<PathBuf>,
    pub tables: PathBuf,
    pub longtail: Option<PathBuf>,
}

/// Metric tables and the long-tail breakdown from stored evaluations.
/// Refuses inputs produced by different configs unless `force` is set.
pub fn cmd_report(cfg: &RunConfig, paths: &Paths, force: bool) -> Result<ReportSummary> {
    let dirs: Vec<PathBuf> = if cfg.report.inputs.is_empty() {
        let root = require(paths.eval_root(), "evaluate")?;
        let mut dirs: Vec<PathBuf> = std::fs::read_dir(&root)
            .map_err(|e| CliError::io(&root, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join(crate::meta::RUN_META).is_file())
            .collect();
        dirs.sort();
        if dirs.is_empty() {
            return Err(CliError::MissingArtifact {
                path: root.join("*").join(crate::meta::RUN_META),
                producer: "evaluate",
            });
        }
        dirs
    } else {
        cfg.report.inputs.iter().map(|p| paths.resolve(p)).collect()
    };
    let inputs = dirs.iter().map(|d| read_eval_dir(d)).collect::<Result<Vec<_>>>()?;
    let mut hashes: Vec<String> = inputs
        .iter()
        .flat_map(|i| i.reports.iter())
        .map(|r| r.config_hash.clone().unwrap_or_else(|| "none".into()))
        .collect();
    hashes.sort();
    hashes.dedup();
    if hashes.len() > 1 && !force {
        return Err(CliError::Validation(format!(
            "inputs come from {} different configs ({}); pass --force to combine them",
            hashes.len(),
            hashes.join(", ")
        )));
    }

    let out = paths.report();
    create_dir(&out)?;
    let mut doc = String::new();
    let _ = writeln!(doc, "# Evaluation report\n");
    let _ = writeln!(doc, "config hash: {}\n", hashes.join(", "));
    for (view, title) in [(ViewKind::CrownView, "Crown view"), (ViewKind::CloseUp, "Close-up")] {
        let rows: Vec<(&str, &MetricsReport)> = inputs
            .iter()
            .flat_map(|i| i.reports.iter().filter(|r| r.view == view).map(move |r| (i.label.as_str(), r)))
            .collect();
        if !rows.is_empty() {
            doc.push_str(&metric_table(title, &rows));
            doc.push('\n');
        }
    }

    let longtail = write_longtail(cfg, &inputs, &out, &mut doc)?;
    let tables = out.join("report.md");
    write_text(&tables, &doc)?;
    print!("{doc}");
    let summary = ReportSummary {
        config_hashes: hashes,
        inputs: dirs,
        tables,
        longtail,
    };
    write_json(&out.join("report_summary.json"), &summary)?;
    RunMeta::new("report", cfg, 0).detail("forced", force).write(&out)?;
    Ok(summary)
}

/// Long-tail breakdown from the first input that has predictions for each
/// view. Returns the chart path, or `None` when no predictions exist.
fn write_longtail(cfg: &RunConfig, inputs: &[EvalInput], out: &Path, doc: &mut String) -> Result<Option<PathBuf>> {
    let mut records: Vec<PredictionRecord> = Vec::new();
    let mut catalog: Option<SpeciesCatalog> = None;
    for view in [ViewKind::CrownView, ViewKind::CloseUp] {
        let Some(input) = inputs.iter().find(|i| i.dir.join(predictions_file(view)).exists()) else {
            continue;
        };
        let c = SpeciesCatalog::read_csv(&require(input.dir.join(CATALOG), "evaluate")?)?;
        match &catalog {
            Some(prev) if *prev != c => {
                return Err(CliError::Validation(
                    "long-tail inputs were evaluated against different species catalogs".into(),
                ))
            }
            _ => catalog = Some(c),
        }
        let mut view_records: Vec<PredictionRecord> = read_predictions(&input.dir.join(predictions_file(view)))?
            .into_iter()
            .filter(|r| r.view == view)
            .collect();
        if view == ViewKind::CrownView && cfg.report.crown_view_mode == EvalMode::SoftVoting {
            view_records = soft_vote_all(&view_records)?;
        }
        records.extend(view_records);
    }
    let Some(catalog) = catalog else {
        return Ok(None);
    };
    let lt = longtail_report(&records, &catalog)?;
    lt.write_table_csv(&out.join("longtail_table.csv"))?;
    lt.write_chart_csv(&out.join("longtail_chart.csv"))?;
    let chart = out.join("longtail.svg");
    longtail_chart(&lt, &chart)?;

    let fmt = |v: Option<f64>| v.map(|f| format!("{f:.3}")).unwrap_or_else(|| "-".into());
    let _ = writeln!(doc, "## Long tail\n");
    let _ = writeln!(doc, "| group | species | train trees | crown-view F1 | close-up F1 |");
    let _ = writeln!(doc, "|---|---|---:|---:|---:|");
    for (group, sel) in [("top 10", &lt.top10), ("bottom 10", &lt.bottom10)] {
        for &i in sel {
            let r = &lt.rows[i];
            let _ = writeln!(
                doc,
                "| {group} | {} | {} | {} | {} |",
                r.scientific_name,
                r.train_count,
                fmt(r.crown_view_f1),
                fmt(r.close_up_f1)
            );
        }
    }
    doc.push('\n');
    Ok(Some(chart))
}
