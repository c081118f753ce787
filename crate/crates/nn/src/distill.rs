//! Cross-scale embedding distillation: a frozen teacher embeds close-ups,
//! and a student embedding crown-view tiles of the same trees is pulled
//! toward it with a cosine loss.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use candle_core::Tensor;
use candle_nn::{AdamW, Optimizer};
use crownscale_core::preprocess::AugmentConfig;
use crownscale_core::{EarlyStopping, Pool, SplitAssignment, SplitMix64, StopDecision, TileSample, ViewKind};
use serde::{Deserialize, Serialize};

use crate::data::{batches, eval_batch, label_tensor, train_batch, TileStore};
use crate::error::{Error, Result};
use crate::layers::dropout_rng;
use crate::predict::eval_config;
use crate::trainer::{
    argmax_rows, check_disjoint, check_labeled, evaluate_loss, train, BestTracker, EpochRecord, TrainConfig,
    TrainHistory,
};
use crate::model::ModelBundle;

pub const CACHE_BIN: &str = "teacher_embeddings.bin";
pub const CACHE_INDEX: &str = "teacher_embeddings.json";

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn check_batch(s: &[Vec<f64>], t: &[Vec<f64>]) -> Result<()> {
    if s.is_empty() {
        return Err(Error::Config("empty embedding batch".into()));
    }
    if s.len() != t.len() {
        return Err(Error::Shape(format!("batch sizes differ: {} vs {}", s.len(), t.len())));
    }
    for (i, (a, b)) in s.iter().zip(t).enumerate() {
        if a.len() != b.len() {
            return Err(Error::Shape(format!("row {i}: dims differ ({} vs {})", a.len(), b.len())));
        }
        if norm(a) == 0.0 || norm(b) == 0.0 {
            return Err(Error::Numeric(format!("row {i}: zero-norm embedding")));
        }
    }
    Ok(())
}

/// `mean_i (1 − cos(s_i, t_i))`, in [0, 2].
pub fn cosine_distillation_loss(student: &[Vec<f64>], teacher: &[Vec<f64>]) -> Result<f64> {
    check_batch(student, teacher)?;
    let sum: f64 = student
        .iter()
        .zip(teacher)
        .map(|(s, t)| {
            let dot: f64 = s.iter().zip(t).map(|(a, b)| a * b).sum();
            1.0 - dot / (norm(s) * norm(t))
        })
        .sum();
    Ok(sum / student.len() as f64)
}

/// Gradient of [`cosine_distillation_loss`] with respect to the student rows.
pub fn cosine_distillation_grad(student: &[Vec<f64>], teacher: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    check_batch(student, teacher)?;
    let b = student.len() as f64;
    Ok(student
        .iter()
        .zip(teacher)
        .map(|(s, t)| {
            let (ns, nt) = (norm(s), norm(t));
            let dot: f64 = s.iter().zip(t).map(|(a, b)| a * b).sum();
            s.iter()
                .zip(t)
                .map(|(si, ti)| -(ti / (ns * nt) - dot * si / (ns.powi(3) * nt)) / b)
                .collect()
        })
        .collect())
}

/// Differentiable form over `B×d` tensors. Gradients reach `student` only.
pub fn cosine_distillation_loss_tensor(student: &Tensor, teacher: &Tensor) -> Result<Tensor> {
    if student.rank() != 2 || student.dims() != teacher.dims() {
        return Err(Error::Shape(format!(
            "student {:?} and teacher {:?} embeddings must both be B×d",
            student.dims(),
            teacher.dims()
        )));
    }
    let teacher = teacher.detach();
    let sn = student.sqr()?.sum_keepdim(1)?.sqrt()?;
    let tn = teacher.sqr()?.sum_keepdim(1)?.sqrt()?;
    let min_norm = Tensor::cat(&[sn.flatten_all()?, tn.flatten_all()?], 0)?
        .min(0)?
        .to_dtype(candle_core::DType::F64)?
        .to_scalar::<f64>()?;
    if !(min_norm > 0.0) {
        return Err(Error::Numeric("zero-norm embedding in distillation batch".into()));
    }
    let cos = ((student * &teacher)?.sum_keepdim(1)? / (sn * tn)?)?;
    Ok(cos.affine(-1.0, 1.0)?.mean_all()?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossScalePair {
    pub tree_id: String,
    pub student: TileSample,
    pub teacher: TileSample,
    pub same_month: bool,
    /// Pool of the tree; `test` never occurs.
    pub pool: Pool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[derive(Default)]
pub struct PairingConfig {
    /// Per-tree cap on (crown view, close-up) combinations; none keeps all.
    pub max_pairs_per_tree: Option<usize>,
    /// Keep only pairs whose dates fall in the same `YYYY-MM`.
    pub same_month: bool,
    pub seed: u64,
}


fn month(date_id: &str) -> Option<&str> {
    let m = date_id.get(..7)?;
    let b = m.as_bytes();
    (b[..4].iter().all(u8::is_ascii_digit) && b[4] == b'-' && b[5..].iter().all(u8::is_ascii_digit)).then_some(m)
}

/// All (crown view, close-up) combinations per tree, excluding test trees.
/// Trees missing from `assignment` must be unlabeled and go to the unlabeled pool.
pub fn build_pairs(
    samples: &[TileSample],
    assignment: &SplitAssignment,
    cfg: &PairingConfig,
) -> Result<Vec<CrossScalePair>> {
    let mut by_tree: BTreeMap<&str, (Vec<&TileSample>, Vec<&TileSample>)> = BTreeMap::new();
    for s in samples {
        let entry = by_tree.entry(&s.tree_id).or_default();
        match s.view {
            ViewKind::CrownView => entry.0.push(s),
            ViewKind::CloseUp => entry.1.push(s),
        }
    }
    let mut pairs = Vec::new();
    for (i, (tree, (crowns, close_ups))) in by_tree.iter().enumerate() {
        if crowns.is_empty() || close_ups.is_empty() {
            continue;
        }
        let pool = match assignment.get(tree) {
            Some(split) => Pool::from(split),
            None if crowns.iter().chain(close_ups).all(|s| s.species_label.is_none()) => Pool::Unlabeled,
            None => {
                return Err(Error::Consistency(format!(
                    "labeled tree `{tree}` is missing from the split assignment"
                )))
            }
        };
        if pool == Pool::Test {
            continue;
        }
        let mut tree_pairs: Vec<CrossScalePair> = crowns
            .iter()
            .flat_map(|c| close_ups.iter().map(move |u| (c, u)))
            .filter_map(|(c, u)| {
                let same = matches!((month(&c.date_id), month(&u.date_id)), (Some(a), Some(b)) if a == b);
                (!cfg.same_month || same).then(|| CrossScalePair {
                    tree_id: tree.to_string(),
                    student: (*c).clone(),
                    teacher: (*u).clone(),
                    same_month: same,
                    pool,
                })
            })
            .collect();
        if let Some(cap) = cfg.max_pairs_per_tree {
            if tree_pairs.len() > cap {
                let mut idx: Vec<usize> = (0..tree_pairs.len()).collect();
                SplitMix64::derive(cfg.seed, i as u64).shuffle(&mut idx);
                let mut keep = idx[..cap].to_vec();
                keep.sort_unstable();
                tree_pairs = keep.into_iter().map(|k| tree_pairs[k].clone()).collect();
            }
        }
        pairs.extend(tree_pairs);
    }
    if pairs.is_empty() {
        return Err(Error::EmptyPairing(
            "no non-test tree has both a crown-view and a close-up sample".into(),
        ));
    }
    Ok(pairs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CacheIndexEntry {
    tree_id: String,
    image_path: String,
    offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CacheIndex {
    dim: usize,
    teacher_backbone: String,
    teacher_checksum: String,
    records: Vec<CacheIndexEntry>,
}

/// Teacher embeddings keyed by close-up image path.
#[derive(Debug, Clone, PartialEq)]
pub struct TeacherCache {
    pub dim: usize,
    pub teacher_backbone: String,
    pub teacher_checksum: String,
    entries: BTreeMap<String, (String, Vec<f32>)>,
}

impl TeacherCache {
    /// Embeds every distinct close-up in `pairs` with the teacher in eval mode.
    pub fn compute(
        teacher: &ModelBundle,
        store: &TileStore,
        pairs: &[CrossScalePair],
        batch_size: usize,
    ) -> Result<Self> {
        let mut unique: BTreeMap<&str, &TileSample> = BTreeMap::new();
        for p in pairs {
            unique.entry(&p.teacher.image_path).or_insert(&p.teacher);
        }
        let samples: Vec<&TileSample> = unique.values().copied().collect();
        let cfg = eval_config(teacher);
        let mut entries = BTreeMap::new();
        for range in batches(samples.len(), batch_size.max(1)) {
            let batch = &samples[range];
            let x = eval_batch(store, batch, &cfg, teacher.device())?;
            let emb = teacher.embed(&x, false)?.to_vec2::<f32>()?;
            for (s, e) in batch.iter().zip(emb) {
                entries.insert(s.image_path.clone(), (s.tree_id.clone(), e));
            }
        }
        Ok(TeacherCache {
            dim: teacher.embed_dim(),
            teacher_backbone: teacher.spec().backbone.name.clone(),
            teacher_checksum: teacher.store().checksum(None)?,
            entries,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, image_path: &str) -> Option<&[f32]> {
        self.entries.get(image_path).map(|(_, v)| v.as_slice())
    }

    fn batch(&self, pairs: &[&CrossScalePair], device: &candle_core::Device) -> Result<Tensor> {
        let mut flat = Vec::with_capacity(pairs.len() * self.dim);
        for p in pairs {
            let v = self.get(&p.teacher.image_path).ok_or_else(|| {
                Error::Consistency(format!("no cached teacher embedding for `{}`", p.teacher.image_path))
            })?;
            flat.extend_from_slice(v);
        }
        Ok(Tensor::from_vec(flat, (pairs.len(), self.dim), device)?)
    }

    /// Writes the record file and its JSON index into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let bin = dir.join(CACHE_BIN);
        let file = std::fs::File::create(&bin).map_err(|e| Error::io(&bin, e))?;
        let mut w = BufWriter::new(file);
        let mut records = Vec::with_capacity(self.entries.len());
        let mut offset = 0u64;
        for (path, (tree, v)) in &self.entries {
            records.push(CacheIndexEntry {
                tree_id: tree.clone(),
                image_path: path.clone(),
                offset,
            });
            let mut buf = Vec::new();
            for s in [tree, path] {
                buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
                buf.extend_from_slice(s.as_bytes());
            }
            for x in v {
                buf.extend_from_slice(&x.to_le_bytes());
            }
            w.write_all(&buf).map_err(|e| Error::io(&bin, e))?;
            offset += buf.len() as u64;
        }
        w.flush().map_err(|e| Error::io(&bin, e))?;
        let index = CacheIndex {
            dim: self.dim,
            teacher_backbone: self.teacher_backbone.clone(),
            teacher_checksum: self.teacher_checksum.clone(),
            records,
        };
        let idx = dir.join(CACHE_INDEX);
        let text = serde_json::to_string_pretty(&index).expect("index serializes");
        std::fs::write(&idx, text + "\n").map_err(|e| Error::io(&idx, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let idx = dir.join(CACHE_INDEX);
        if !idx.exists() {
            return Err(Error::MissingInput(idx));
        }
        let text = std::fs::read_to_string(&idx).map_err(|e| Error::io(&idx, e))?;
        let index: CacheIndex = serde_json::from_str(&text).map_err(|e| Error::Format {
            path: idx.clone(),
            message: e.to_string(),
        })?;
        let bin = dir.join(CACHE_BIN);
        let file = std::fs::File::open(&bin).map_err(|e| Error::io(&bin, e))?;
        let mut bytes = Vec::new();
        BufReader::new(file).read_to_end(&mut bytes).map_err(|e| Error::io(&bin, e))?;
        let bad = |m: String| Error::Format {
            path: bin.clone(),
            message: m,
        };
        let mut entries = BTreeMap::new();
        for r in &index.records {
            let mut pos = r.offset as usize;
            let mut take = |n: usize| -> Result<&[u8]> {
                let s = bytes.get(pos..pos + n).ok_or_else(|| bad(format!("truncated record for `{}`", r.image_path)))?;
                pos += n;
                Ok(s)
            };
            let mut strings = Vec::new();
            for _ in 0..2 {
                let len = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes")) as usize;
                strings.push(String::from_utf8(take(len)?.to_vec()).map_err(|e| bad(e.to_string()))?);
            }
            if strings[0] != r.tree_id || strings[1] != r.image_path {
                return Err(bad(format!("record at offset {} does not match the index", r.offset)));
            }
            let v: Vec<f32> = take(4 * index.dim)?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            entries.insert(r.image_path.clone(), (r.tree_id.clone(), v));
        }
        Ok(TeacherCache {
            dim: index.dim,
            teacher_backbone: index.teacher_backbone,
            teacher_checksum: index.teacher_checksum,
            entries,
        })
    }

    /// A cache from precomputed vectors, keyed by close-up image path.
    pub fn from_embeddings(
        teacher: &ModelBundle,
        embeddings: impl IntoIterator<Item = (TileSample, Vec<f32>)>,
    ) -> Result<Self> {
        let dim = teacher.embed_dim();
        let mut entries = BTreeMap::new();
        for (s, v) in embeddings {
            if v.len() != dim {
                return Err(Error::Shape(format!("embedding for `{}` has {} dims, expected {dim}", s.image_path, v.len())));
            }
            entries.insert(s.image_path, (s.tree_id, v));
        }
        Ok(TeacherCache {
            dim,
            teacher_backbone: teacher.spec().backbone.name.clone(),
            teacher_checksum: teacher.store().checksum(None)?,
            entries,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistillConfig {
    /// λ: weight of the cosine term; the cross-entropy term gets 1 − λ.
    pub loss_weight_distill: f64,
    pub train: TrainConfig,
    pub pairing: PairingConfig,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig {
            loss_weight_distill: 0.5,
            train: TrainConfig::default(),
            pairing: PairingConfig::default(),
        }
    }
}

impl DistillConfig {
    pub fn loss_weight_ce(&self) -> f64 {
        1.0 - self.loss_weight_distill
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.loss_weight_distill) {
            return Err(Error::Config("loss_weight_distill must lie in [0, 1]".into()));
        }
        self.train.validate()
    }
}

/// Labeled crown-view samples for the cross-entropy term.
#[derive(Debug, Clone, Copy)]
pub struct LabeledSets<'a> {
    pub train: &'a [TileSample],
    pub val: &'a [TileSample],
}

/// Mean eval-mode distillation loss over `pairs`.
pub fn distill_loss_eval(
    student: &ModelBundle,
    cache: &TeacherCache,
    store: &TileStore,
    pairs: &[CrossScalePair],
    aug: &AugmentConfig,
    batch_size: usize,
) -> Result<f64> {
    let mut sum = 0.0;
    for range in batches(pairs.len(), batch_size) {
        let batch: Vec<&CrossScalePair> = pairs[range].iter().collect();
        let students: Vec<&TileSample> = batch.iter().map(|p| &p.student).collect();
        let x = eval_batch(store, &students, aug, student.device())?;
        let s = student.project(&student.embed(&x, false)?)?.detach();
        let t = cache.batch(&batch, student.device())?;
        sum += cosine_distillation_loss_tensor(&s, &t)?.to_scalar::<f32>()? as f64 * batch.len() as f64;
    }
    Ok((sum / pairs.len() as f64).clamp(0.0, 2.0))
}

/// Trains `student` on `λ·cosine + (1 − λ)·cross-entropy` with early stopping
/// on the total validation loss. Training pairs come from train and unlabeled
/// trees, validation pairs from val trees. With λ = 0 this is [`train`].
#[allow(clippy::too_many_arguments)]
pub fn distill_train(
    mut student: ModelBundle,
    teacher: &ModelBundle,
    cache: &TeacherCache,
    store: &TileStore,
    pairs: &[CrossScalePair],
    labeled: LabeledSets<'_>,
    cfg: &DistillConfig,
) -> Result<(ModelBundle, TrainHistory)> {
    cfg.validate()?;
    let lambda = cfg.loss_weight_distill;
    if lambda == 0.0 {
        return train(student, store, labeled.train, labeled.val, &cfg.train);
    }
    let tc = &cfg.train;
    let checksum_before = teacher.store().checksum(None)?;
    if cache.teacher_checksum != checksum_before {
        return Err(Error::Consistency("teacher cache was computed with different teacher weights".into()));
    }
    let train_pairs: Vec<CrossScalePair> =
        pairs.iter().filter(|p| matches!(p.pool, Pool::Train | Pool::Unlabeled)).cloned().collect();
    let val_pairs: Vec<CrossScalePair> = pairs.iter().filter(|p| p.pool == Pool::Val).cloned().collect();
    if pairs.iter().any(|p| p.pool == Pool::Test) {
        return Err(Error::Consistency("distillation pairs include test trees".into()));
    }
    if train_pairs.is_empty() || val_pairs.is_empty() {
        return Err(Error::Config(
            "distillation needs pairs from both training and validation trees".into(),
        ));
    }
    if lambda < 1.0 && (labeled.train.is_empty() || labeled.val.is_empty()) {
        return Err(Error::Config("cross-entropy term needs labeled training and validation samples".into()));
    }
    for p in &train_pairs {
        if p.student.view != ViewKind::CrownView || p.teacher.view != ViewKind::CloseUp {
            return Err(Error::Consistency(format!("pair for `{}` has the wrong views", p.tree_id)));
        }
    }
    check_disjoint(labeled.train, labeled.val)?;
    check_labeled(labeled.train, student.n_classes(), "training")?;
    check_labeled(labeled.val, student.n_classes(), "validation")?;

    student.ensure_projection(cache.dim)?;
    student.set_precision(tc.precision);
    let aug = tc.augment_for(&student);
    let eval_aug = eval_config(&student);
    let mut opt = AdamW::new(student.store().trainable_vars(), tc.optimizer.adamw(&student))?;
    let mut stopper = EarlyStopping::new(tc.patience, tc.min_delta);
    let mut best = BestTracker::new(tc.selection);
    let mut epochs = Vec::new();
    let mut stopped_early = false;
    let use_ce = lambda < 1.0 && !labeled.train.is_empty();
    let bs = tc.batch_size;
    // Labeled samples draw augmentation from a disjoint range of streams.
    const LABELED_STREAM: usize = 1 << 40;

    for epoch in 1..=tc.max_epochs {
        let mut pair_order: Vec<usize> = (0..train_pairs.len()).collect();
        SplitMix64::derive(tc.seed, epoch as u64).shuffle(&mut pair_order);
        let mut lab_order: Vec<usize> = (0..labeled.train.len()).collect();
        SplitMix64::derive(tc.seed ^ 0x1AB, epoch as u64).shuffle(&mut lab_order);
        let steps = if use_ce {
            pair_order.len().div_ceil(bs).max(lab_order.len().div_ceil(bs))
        } else {
            pair_order.len().div_ceil(bs)
        };
        let mut drop_rng = dropout_rng(SplitMix64::derive(tc.seed ^ 0xD80F, epoch as u64).next_u64());
        let (mut sum_d, mut sum_ce, mut sum_total, mut correct, mut n_lab) = (0.0, 0.0, 0.0, 0usize, 0usize);
        for step in 0..steps {
            let pick = |order: &[usize], step: usize| -> Vec<usize> {
                let n = order.len();
                (step * bs..step * bs + bs.min(n)).map(|i| order[i % n]).collect()
            };
            let p_idx = pick(&pair_order, step);
            let p_batch: Vec<&CrossScalePair> = p_idx.iter().map(|&i| &train_pairs[i]).collect();
            let students: Vec<&TileSample> = p_batch.iter().map(|p| &p.student).collect();
            let x = train_batch(store, &students, &p_idx, &aug, tc.seed, epoch, student.device())?;
            let s = student.project(&student.embed(&x, true)?)?;
            let t = cache.batch(&p_batch, student.device())?;
            let l_d = cosine_distillation_loss_tensor(&s, &t)?;
            let mut total = l_d.affine(lambda, 0.0)?;
            let d_val = l_d.to_scalar::<f32>()? as f64;
            let mut ce_val = 0.0;
            if use_ce {
                let l_idx = pick(&lab_order, step);
                let l_batch: Vec<&TileSample> = l_idx.iter().map(|&i| &labeled.train[i]).collect();
                let positions: Vec<usize> = l_idx.iter().map(|i| i + LABELED_STREAM).collect();
                let x = train_batch(store, &l_batch, &positions, &aug, tc.seed, epoch, student.device())?;
                let y = label_tensor(&l_batch, student.n_classes(), student.device())?;
                let logits = student.forward(&x, Some(&mut drop_rng))?.logits;
                let l_ce = candle_nn::loss::cross_entropy(&logits, &y)?;
                ce_val = l_ce.to_scalar::<f32>()? as f64;
                total = (total + l_ce.affine(1.0 - lambda, 0.0)?)?;
                let labels = y.to_vec1::<u32>()?;
                correct += argmax_rows(&logits)?.iter().zip(&labels).filter(|(p, l)| **p == **l as usize).count();
                n_lab += labels.len();
            }
            opt.backward_step(&total)?;
            sum_d += d_val;
            sum_ce += ce_val;
            sum_total += total.to_scalar::<f32>()? as f64;
        }
        let steps_f = steps as f64;
        let val_d = distill_loss_eval(&student, cache, store, &val_pairs, &eval_aug, bs)?;
        let (val_ce, val_top1) = if labeled.val.is_empty() {
            (0.0, f64::NAN)
        } else {
            evaluate_loss(&student, store, labeled.val, &eval_aug, bs)?
        };
        let val_loss = lambda * val_d + (1.0 - lambda) * val_ce;
        if !val_loss.is_finite() {
            return Err(Error::Numeric(format!("validation loss became {val_loss} at epoch {epoch}")));
        }
        let record = EpochRecord {
            epoch,
            train_loss: sum_total / steps_f,
            train_top1: if n_lab > 0 { correct as f64 / n_lab as f64 } else { f64::NAN },
            val_loss,
            val_top1,
            loss_distill: Some((sum_d / steps_f).clamp(0.0, 2.0)),
            loss_ce: use_ce.then(|| sum_ce / steps_f),
        };
        log::info!(
            "epoch {epoch}: loss {:.4} (distill {:.4}) val_loss {:.4}",
            record.train_loss,
            sum_d / steps_f,
            val_loss
        );
        epochs.push(record);
        best.offer(&student, epoch, val_loss, val_top1)?;
        if stopper.observe(val_loss).1 == StopDecision::Stop {
            stopped_early = epoch < tc.max_epochs;
            break;
        }
    }
    best.restore(&student)?;
    if teacher.store().checksum(None)? != checksum_before {
        return Err(Error::Consistency("teacher parameters changed during distillation".into()));
    }
    let stopped_epoch = epochs.len();
    Ok((
        student,
        TrainHistory {
            epochs,
            best_epoch: best.epoch,
            stopped_epoch,
            stopped_early,
            max_epochs: tc.max_epochs,
        },
    ))
}

/// Mean cosine similarity of each row to its target row, for before/after
/// comparisons.
pub fn mean_cosine(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    Ok(1.0 - cosine_distillation_loss(a, b)?)
}

/// Embeddings of `samples` in eval mode, projected into the teacher space.
pub fn student_embeddings(
    student: &ModelBundle,
    store: &TileStore,
    samples: &[TileSample],
    batch_size: usize,
) -> Result<HashMap<String, Vec<f64>>> {
    let cfg = eval_config(student);
    let mut out = HashMap::new();
    for range in batches(samples.len(), batch_size.max(1)) {
        let batch: Vec<&TileSample> = samples[range].iter().collect();
        let x = eval_batch(store, &batch, &cfg, student.device())?;
        let e = student.project(&student.embed(&x, false)?)?.to_vec2::<f32>()?;
        for (s, row) in batch.iter().zip(e) {
            out.insert(s.image_path.clone(), row.into_iter().map(f64::from).collect());
        }
    }
    Ok(out)
}
