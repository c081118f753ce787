//! Inference over manifests and the evaluation entry point.

use crownscale_core::metrics::{compute_report, EvalMode, MetricsReport};
use crownscale_core::preprocess::AugmentConfig;
use crownscale_core::{PredictionRecord, Split, SplitAssignment, SpeciesCatalog, TileSample, ViewKind};

use crate::data::{batches, eval_batch, TileStore};
use crate::error::{Error, Result};
use crate::model::ModelBundle;

/// Eval preprocessing matching the model's input size and normalization.
pub fn eval_config(model: &ModelBundle) -> AugmentConfig {
    AugmentConfig {
        normalize_mean: model.spec().normalize_mean,
        normalize_std: model.spec().normalize_std,
        ..AugmentConfig::with_target_size(model.input_size() as u32)
    }
}

/// Row-wise softmax in double precision.
pub fn softmax_f64(logits: &[f32]) -> Vec<f64> {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v as f64));
    let exp: Vec<f64> = logits.iter().map(|&v| (v as f64 - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

/// One record per sample, in input order. Unlabeled samples produce
/// records without a true label.
pub fn predict_dataset(
    model: &ModelBundle,
    store: &TileStore,
    samples: &[TileSample],
    batch_size: usize,
) -> Result<Vec<PredictionRecord>> {
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be >= 1".into()));
    }
    let cfg = eval_config(model);
    let mut out = Vec::with_capacity(samples.len());
    for range in batches(samples.len(), batch_size) {
        let batch: Vec<&TileSample> = samples[range].iter().collect();
        let x = eval_batch(store, &batch, &cfg, model.device())?;
        let logits = model.forward(&x, None)?.logits.to_vec2::<f32>()?;
        for (s, row) in batch.iter().zip(logits) {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("non-finite logits for `{}` ({})", s.tree_id, s.date_id)));
            }
            out.push(PredictionRecord {
                tree_id: s.tree_id.clone(),
                date_id: s.date_id.clone(),
                view: s.view,
                probs: softmax_f64(&row),
                true_label: s.label(),
            });
        }
    }
    Ok(out)
}

/// Test-split samples of `view`.
pub fn test_samples(samples: &[TileSample], assignment: &SplitAssignment, view: ViewKind) -> Vec<TileSample> {
    samples
        .iter()
        .filter(|s| s.view == view && assignment.get(&s.tree_id) == Some(Split::Test))
        .cloned()
        .collect()
}

/// Predicts the test split of `view` and computes the metric report.
/// Returns the per-sample records alongside the report.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    model: &ModelBundle,
    store: &TileStore,
    samples: &[TileSample],
    assignment: &SplitAssignment,
    mode: EvalMode,
    view: ViewKind,
    catalog: &SpeciesCatalog,
    batch_size: usize,
) -> Result<(MetricsReport, Vec<PredictionRecord>)> {
    if !mode.strategy().supports(view) {
        return Err(Error::Config(format!("{mode} evaluation is not defined for the {view} view")));
    }
    if catalog.len() != model.n_classes() {
        return Err(Error::Consistency(format!(
            "catalog has {} species but the model has {} outputs",
            catalog.len(),
            model.n_classes()
        )));
    }
    let test = test_samples(samples, assignment, view);
    if test.is_empty() {
        return Err(Error::Config(format!("the test split has no {view} samples")));
    }
    let records = predict_dataset(model, store, &test, batch_size)?;
    let report = compute_report(&records, catalog, mode, view)?;
    Ok((report, records))
}
