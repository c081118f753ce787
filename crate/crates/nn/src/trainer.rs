//! Supervised fine-tuning with early stopping, and k-fold cross-validation.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use candle_core::Tensor;
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use crownscale_core::preprocess::AugmentConfig;
use crownscale_core::split::{expand_to_samples, kfold_assign_trees, labeled_trees};
use crownscale_core::{EarlyStopping, SplitMix64, StopDecision, TileSample};
use serde::{Deserialize, Serialize};

use crate::data::{batches, eval_batch, label_tensor, train_batch, TileStore};
use crate::error::{Error, Result};
use crate::layers::dropout_rng;
use crate::model::{ModelBundle, Precision};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    /// Defaults to the backbone's published learning rate.
    pub learning_rate: Option<f64>,
    /// Defaults to the backbone's published weight decay.
    pub weight_decay: Option<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            learning_rate: None,
            weight_decay: None,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn adamw(&self, model: &ModelBundle) -> ParamsAdamW {
        let b = &model.spec().backbone;
        ParamsAdamW {
            lr: self.learning_rate.unwrap_or(b.learning_rate),
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay.unwrap_or(b.weight_decay),
        }
    }
}

/// Which epoch's weights a finished run keeps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    #[default]
    ValLoss,
    ValTop1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub min_delta: f64,
    pub precision: Precision,
    pub seed: u64,
    pub optimizer: OptimizerConfig,
    pub selection: Selection,
    /// Input size and normalization are taken from the model.
    pub augment: AugmentConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            max_epochs: 100,
            patience: 5,
            min_delta: 0.001,
            precision: Precision::Fp32,
            seed: 0,
            optimizer: OptimizerConfig::default(),
            selection: Selection::ValLoss,
            augment: AugmentConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patience < 1 {
            return Err(Error::Config("patience must be >= 1".into()));
        }
        if !(self.min_delta >= 0.0) {
            return Err(Error::Config("min_delta must be >= 0".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.max_epochs < 1 {
            return Err(Error::Config("max_epochs must be >= 1".into()));
        }
        if let Some(lr) = self.optimizer.learning_rate {
            if !(lr > 0.0) {
                return Err(Error::Config("learning_rate must be > 0".into()));
            }
        }
        self.augment.validate()?;
        Ok(())
    }

    /// The augmentation settings with the model's input size and normalization.
    pub fn augment_for(&self, model: &ModelBundle) -> AugmentConfig {
        AugmentConfig {
            target_size: model.input_size() as u32,
            normalize_mean: model.spec().normalize_mean,
            normalize_std: model.spec().normalize_std,
            ..self.augment.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_top1: f64,
    pub val_loss: f64,
    pub val_top1: f64,
    /// Distillation runs only: the two training-loss components.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_distill: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_ce: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
    pub stopped_epoch: usize,
    pub stopped_early: bool,
    pub max_epochs: usize,
}

impl TrainHistory {
    pub fn best(&self) -> &EpochRecord {
        &self.epochs[self.best_epoch - 1]
    }

    /// `epoch,train_loss,val_loss,val_top1`, plus `loss_distill,loss_ce`
    /// when the run logged them.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let distill = self.epochs.iter().any(|e| e.loss_distill.is_some());
        let mut out = String::from("epoch,train_loss,val_loss,val_top1");
        if distill {
            out.push_str(",loss_distill,loss_ce");
        }
        out.push('\n');
        for e in &self.epochs {
            out.push_str(&format!("{},{},{},{}", e.epoch, e.train_loss, e.val_loss, e.val_top1));
            if distill {
                let f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
                out.push_str(&format!(",{},{}", f(e.loss_distill), f(e.loss_ce)));
            }
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Lowest-index argmax per row.
pub fn argmax_rows(logits: &Tensor) -> Result<Vec<usize>> {
    Ok(logits
        .to_vec2::<f32>()?
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (i, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect())
}

/// Mean cross-entropy and top-1 accuracy in eval mode.
pub fn evaluate_loss(
    model: &ModelBundle,
    store: &TileStore,
    samples: &[TileSample],
    aug: &AugmentConfig,
    batch_size: usize,
) -> Result<(f64, f64)> {
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    for range in batches(samples.len(), batch_size) {
        let batch: Vec<&TileSample> = samples[range].iter().collect();
        let x = eval_batch(store, &batch, aug, model.device())?;
        let y = label_tensor(&batch, model.n_classes(), model.device())?;
        let logits = model.forward(&x, None)?.logits.detach();
        let loss = candle_nn::loss::cross_entropy(&logits, &y)?.to_scalar::<f32>()? as f64;
        loss_sum += loss * batch.len() as f64;
        let labels = y.to_vec1::<u32>()?;
        correct += argmax_rows(&logits)?
            .iter()
            .zip(&labels)
            .filter(|(p, l)| **p == **l as usize)
            .count();
    }
    let n = samples.len() as f64;
    Ok((loss_sum / n, correct as f64 / n))
}

pub(crate) fn check_disjoint(train: &[TileSample], val: &[TileSample]) -> Result<()> {
    let train_trees: BTreeSet<&str> = train.iter().map(|s| s.tree_id.as_str()).collect();
    if let Some(s) = val.iter().find(|s| train_trees.contains(s.tree_id.as_str())) {
        return Err(Error::Consistency(format!(
            "tree `{}` appears in both the training and validation sets",
            s.tree_id
        )));
    }
    Ok(())
}

pub(crate) fn check_labeled(samples: &[TileSample], n_classes: usize, what: &str) -> Result<()> {
    for s in samples {
        match s.label() {
            Some(l) if l < n_classes => {}
            Some(l) => {
                return Err(Error::Consistency(format!(
                    "{what} sample of tree `{}` has label {l}, but the model has {n_classes} classes",
                    s.tree_id
                )))
            }
            None => {
                return Err(Error::Consistency(format!(
                    "{what} sample of tree `{}` ({}) has no label",
                    s.tree_id, s.date_id
                )))
            }
        }
    }
    Ok(())
}

/// Tracks the kept epoch according to the selection rule.
pub(crate) struct BestTracker {
    selection: Selection,
    best: Option<(f64, f64)>,
    pub epoch: usize,
    snapshot: Option<HashMap<String, Tensor>>,
}

impl BestTracker {
    pub(crate) fn new(selection: Selection) -> Self {
        BestTracker {
            selection,
            best: None,
            epoch: 0,
            snapshot: None,
        }
    }

    pub(crate) fn offer(&mut self, model: &ModelBundle, epoch: usize, val_loss: f64, val_top1: f64) -> Result<()> {
        let better = match (self.best, self.selection) {
            (None, _) => true,
            (Some((loss, _)), Selection::ValLoss) => val_loss < loss,
            (Some((loss, top1)), Selection::ValTop1) => val_top1 > top1 || (val_top1 == top1 && val_loss < loss),
        };
        if better {
            self.best = Some((val_loss, val_top1));
            self.epoch = epoch;
            self.snapshot = Some(model.store().snapshot()?);
        }
        Ok(())
    }

    pub(crate) fn restore(&self, model: &ModelBundle) -> Result<()> {
        if let Some(s) = &self.snapshot {
            model.store().restore(s)?;
        }
        Ok(())
    }
}

/// Fine-tunes `model` on labeled `train` samples with early stopping on the
/// validation loss and returns it with the kept epoch's weights.
pub fn train(
    mut model: ModelBundle,
    store: &TileStore,
    train: &[TileSample],
    val: &[TileSample],
    cfg: &TrainConfig,
) -> Result<(ModelBundle, TrainHistory)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    if val.is_empty() {
        return Err(Error::Config("validation set is empty; early stopping needs one".into()));
    }
    check_disjoint(train, val)?;
    check_labeled(train, model.n_classes(), "training")?;
    check_labeled(val, model.n_classes(), "validation")?;
    model.set_precision(cfg.precision);

    let aug = cfg.augment_for(&model);
    let eval_aug = aug.clone();
    let mut opt = AdamW::new(model.store().trainable_vars(), cfg.optimizer.adamw(&model))?;
    let mut stopper = EarlyStopping::new(cfg.patience, cfg.min_delta);
    let mut best = BestTracker::new(cfg.selection);
    let mut epochs = Vec::new();
    let mut stopped_early = false;

    for epoch in 1..=cfg.max_epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        SplitMix64::derive(cfg.seed, epoch as u64).shuffle(&mut order);
        let mut drop_rng = dropout_rng(SplitMix64::derive(cfg.seed ^ 0xD80F, epoch as u64).next_u64());
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for range in batches(order.len(), cfg.batch_size) {
            let positions = &order[range];
            let batch: Vec<&TileSample> = positions.iter().map(|&i| &train[i]).collect();
            let x = train_batch(store, &batch, positions, &aug, cfg.seed, epoch, model.device())?;
            let y = label_tensor(&batch, model.n_classes(), model.device())?;
            let logits = model.forward(&x, Some(&mut drop_rng))?.logits;
            let loss = candle_nn::loss::cross_entropy(&logits, &y)?;
            opt.backward_step(&loss)?;
            loss_sum += loss.to_scalar::<f32>()? as f64 * batch.len() as f64;
            let labels = y.to_vec1::<u32>()?;
            correct += argmax_rows(&logits)?.iter().zip(&labels).filter(|(p, l)| **p == **l as usize).count();
        }
        let (val_loss, val_top1) = evaluate_loss(&model, store, val, &eval_aug, cfg.batch_size)?;
        if !val_loss.is_finite() {
            return Err(Error::Numeric(format!("validation loss became {val_loss} at epoch {epoch}")));
        }
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            train_top1: correct as f64 / train.len() as f64,
            val_loss,
            val_top1,
            loss_distill: None,
            loss_ce: None,
        };
        log::info!(
            "epoch {epoch}: train_loss {:.4} val_loss {:.4} val_top1 {:.4}",
            record.train_loss,
            val_loss,
            val_top1
        );
        epochs.push(record);
        best.offer(&model, epoch, val_loss, val_top1)?;
        if stopper.observe(val_loss).1 == StopDecision::Stop {
            stopped_early = epoch < cfg.max_epochs;
            break;
        }
    }
    best.restore(&model)?;
    let stopped_epoch = epochs.len();
    Ok((
        model,
        TrainHistory {
            epochs,
            best_epoch: best.epoch,
            stopped_epoch,
            stopped_early,
            max_epochs: cfg.max_epochs,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValSummary {
    pub k: usize,
    pub epochs_trained: Vec<usize>,
    pub epochs_mean: f64,
    /// Sample standard deviation across folds.
    pub epochs_std: f64,
    pub best_val_loss: Vec<f64>,
    pub best_val_top1: Vec<f64>,
}

impl CrossValSummary {
    pub fn from_histories(histories: &[TrainHistory]) -> Self {
        let epochs: Vec<usize> = histories.iter().map(|h| h.stopped_epoch).collect();
        let n = epochs.len() as f64;
        let mean = epochs.iter().sum::<usize>() as f64 / n;
        let var = if epochs.len() > 1 {
            epochs.iter().map(|&e| (e as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        CrossValSummary {
            k: histories.len(),
            epochs_trained: epochs,
            epochs_mean: mean,
            epochs_std: var.sqrt(),
            best_val_loss: histories.iter().map(|h| h.best().val_loss).collect(),
            best_val_top1: histories.iter().map(|h| h.best().val_top1).collect(),
        }
    }

    pub fn display(&self) -> String {
        format!("epochs trained: {:.1} ± {:.1} over {} folds", self.epochs_mean, self.epochs_std, self.k)
    }
}

/// One independent run per stratified fold, each with a fresh model from
/// `make_model`. `samples` are the labeled samples to cross-validate over.
pub fn run_crossval(
    make_model: &dyn Fn() -> Result<ModelBundle>,
    store: &TileStore,
    samples: &[TileSample],
    k: usize,
    cfg: &TrainConfig,
) -> Result<(Vec<(ModelBundle, TrainHistory)>, CrossValSummary)> {
    let folds = kfold_assign_trees(&labeled_trees(samples), k, cfg.seed)?;
    let labeled: Vec<TileSample> = samples.iter().filter(|s| s.label().is_some()).cloned().collect();
    let mut runs = Vec::with_capacity(k);
    for (i, assignment) in folds.iter().enumerate() {
        let parts = expand_to_samples(assignment, &labeled)?;
        log::info!("fold {}/{k}: {} train, {} val samples", i + 1, parts.train.len(), parts.val.len());
        runs.push(train(make_model()?, store, &parts.train, &parts.val, cfg)?);
    }
    let histories: Vec<TrainHistory> = runs.iter().map(|(_, h)| h.clone()).collect();
    let summary = CrossValSummary::from_histories(&histories);
    Ok((runs, summary))
}
