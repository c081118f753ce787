//! Classification metrics: top-k accuracy, the macro/micro/weighted F1
//! triple, temporal soft voting, and the per-species long-tail breakdown.
//!
//! Conventions:
//! - predictions are the argmax of `probs`, ties to the lowest class index;
//! - top-k ranks ties the same way, so a label is inside the top k iff fewer
//!   than k classes beat it (higher probability, or equal with lower index);
//! - macro-F1 averages over every catalog class, absent classes scoring 0;
//! - weighted-F1 weights each class by its support in the true labels.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::catalog::{csv_err, SpeciesCatalog};
use crate::error::{Error, Result};
use crate::types::{PredictionRecord, ViewKind};

/// Averages the probability vectors of one tree's records.
pub fn soft_vote(records: &[PredictionRecord]) -> Result<PredictionRecord> {
    let first = records
        .first()
        .ok_or_else(|| Error::Config("soft_vote needs at least one record".into()))?;
    let n = first.probs.len();
    let mut sum = vec![0.0f64; n];
    for r in records {
        if r.tree_id != first.tree_id {
            return Err(Error::Consistency(format!(
                "soft_vote mixes trees `{}` and `{}`",
                first.tree_id, r.tree_id
            )));
        }
        if r.view != first.view {
            return Err(Error::Consistency(format!("soft_vote mixes views for tree `{}`", r.tree_id)));
        }
        if r.true_label != first.true_label {
            return Err(Error::Consistency(format!(
                "tree `{}` carries conflicting labels {:?} and {:?}",
                r.tree_id, first.true_label, r.true_label
            )));
        }
        if r.probs.len() != n {
            return Err(Error::Consistency(format!("tree `{}` has probability vectors of different lengths", r.tree_id)));
        }
        for (s, p) in sum.iter_mut().zip(&r.probs) {
            *s += p;
        }
    }
    let count = records.len() as f64;
    Ok(PredictionRecord {
        tree_id: first.tree_id.clone(),
        date_id: PredictionRecord::AGGREGATE_DATE.into(),
        view: first.view,
        probs: sum.into_iter().map(|s| s / count).collect(),
        true_label: first.true_label,
    })
}

/// Soft-votes every tree; output is ordered by tree id.
pub fn soft_vote_all(records: &[PredictionRecord]) -> Result<Vec<PredictionRecord>> {
    let mut by_tree: BTreeMap<&str, Vec<PredictionRecord>> = BTreeMap::new();
    for r in records {
        by_tree.entry(&r.tree_id).or_default().push(r.clone());
    }
    by_tree.values().map(|group| soft_vote(group)).collect()
}

fn check_labeled(records: &[PredictionRecord]) -> Result<(usize, Vec<usize>)> {
    let first = records
        .first()
        .ok_or_else(|| Error::Config("metrics need at least one record".into()))?;
    let n = first.probs.len();
    if n == 0 {
        return Err(Error::Config("records have empty probability vectors".into()));
    }
    let mut labels = Vec::with_capacity(records.len());
    for r in records {
        if r.probs.len() != n {
            return Err(Error::Consistency(format!(
                "record for tree `{}` has {} classes, expected {n}",
                r.tree_id,
                r.probs.len()
            )));
        }
        let label = r
            .true_label
            .ok_or_else(|| Error::Consistency(format!("record for tree `{}` ({}) is unlabeled", r.tree_id, r.date_id)))?;
        if label >= n {
            return Err(Error::Consistency(format!("label {label} out of range for {n} classes")));
        }
        labels.push(label);
    }
    Ok((n, labels))
}

/// Number of classes ranked strictly ahead of `class` under the tie-break rule.
pub fn rank_of(probs: &[f64], class: usize) -> usize {
    let p = probs[class];
    probs
        .iter()
        .enumerate()
        .filter(|&(j, q)| *q > p || (*q == p && j < class))
        .count()
}

pub fn topk_accuracy(records: &[PredictionRecord], k: usize) -> Result<f64> {
    let (n, labels) = check_labeled(records)?;
    if k == 0 || k > n {
        return Err(Error::Config(format!("k = {k} must lie in 1..={n}")));
    }
    let hits = records
        .iter()
        .zip(&labels)
        .filter(|(r, &l)| rank_of(&r.probs, l) < k)
        .count();
    Ok(hits as f64 / records.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub support: usize,
    pub predicted: usize,
    pub true_positive: usize,
}

impl ClassStats {
    pub fn precision(&self) -> f64 {
        ratio(self.true_positive, self.predicted)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.true_positive, self.support)
    }

    /// `2·tp / (2·tp + fp + fn)`, which is 0 when the class never occurs.
    pub fn f1(&self) -> f64 {
        ratio(2 * self.true_positive, self.support + self.predicted)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Scores {
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub weighted_f1: f64,
    pub per_class: Vec<ClassStats>,
}

pub fn f1_scores(records: &[PredictionRecord]) -> Result<F1Scores> {
    let (n, labels) = check_labeled(records)?;
    let mut per_class = vec![
        ClassStats {
            support: 0,
            predicted: 0,
            true_positive: 0,
        };
        n
    ];
    for (r, &label) in records.iter().zip(&labels) {
        let pred = r.argmax();
        per_class[label].support += 1;
        per_class[pred].predicted += 1;
        if pred == label {
            per_class[label].true_positive += 1;
        }
    }
    let total = records.len() as f64;
    let macro_f1 = per_class.iter().map(ClassStats::f1).sum::<f64>() / n as f64;
    let correct: usize = per_class.iter().map(|c| c.true_positive).sum();
    let micro_f1 = correct as f64 / total;
    let weighted_f1 = per_class.iter().map(|c| c.support as f64 * c.f1()).sum::<f64>() / total;
    Ok(F1Scores {
        macro_f1,
        micro_f1,
        weighted_f1,
        per_class,
    })
}

/// How per-date predictions are turned into evaluated records.
pub trait Aggregation: Send + Sync {
    fn name(&self) -> &'static str;
    fn supports(&self, view: ViewKind) -> bool;
    fn aggregate(&self, records: &[PredictionRecord]) -> Result<Vec<PredictionRecord>>;
}

struct IndividualImage;

impl Aggregation for IndividualImage {
    fn name(&self) -> &'static str {
        "individual_image"
    }

    fn supports(&self, _view: ViewKind) -> bool {
        true
    }

    fn aggregate(&self, records: &[PredictionRecord]) -> Result<Vec<PredictionRecord>> {
        Ok(records.to_vec())
    }
}

struct SoftVoting;

impl Aggregation for SoftVoting {
    fn name(&self) -> &'static str {
        "soft_voting"
    }

    // Close-ups are single-date, so there is nothing to vote over.
    fn supports(&self, view: ViewKind) -> bool {
        view == ViewKind::CrownView
    }

    fn aggregate(&self, records: &[PredictionRecord]) -> Result<Vec<PredictionRecord>> {
        soft_vote_all(records)
    }
}

/// Registered aggregation strategies, looked up by name.
pub fn aggregation_registry() -> Vec<Box<dyn Aggregation>> {
    vec![Box::new(IndividualImage), Box::new(SoftVoting)]
}

pub fn aggregation(name: &str) -> Result<Box<dyn Aggregation>> {
    aggregation_registry()
        .into_iter()
        .find(|a| a.name() == name)
        .ok_or_else(|| Error::Config(format!("unknown evaluation mode `{name}`")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    IndividualImage,
    SoftVoting,
}

impl EvalMode {
    pub const ALL: [EvalMode; 2] = [EvalMode::IndividualImage, EvalMode::SoftVoting];

    pub fn as_str(self) -> &'static str {
        match self {
            EvalMode::IndividualImage => "individual_image",
            EvalMode::SoftVoting => "soft_voting",
        }
    }

    pub fn strategy(self) -> Box<dyn Aggregation> {
        aggregation(self.as_str()).expect("every mode is registered")
    }
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EvalMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown evaluation mode `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeciesMetrics {
    pub class_index: usize,
    pub scientific_name: String,
    pub train_count: usize,
    pub test_count: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    /// `None` when the species has no evaluated records.
    pub f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mode: EvalMode,
    pub view: ViewKind,
    pub n_records: usize,
    pub n_species: usize,
    pub top1: f64,
    pub top3: f64,
    pub top5: f64,
    /// True when n_species < 5 and top-3/top-5 were computed with k = n_species.
    pub topk_clamped: bool,
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub weighted_f1: f64,
    /// Macro-F1 counts catalog classes absent from the evaluated set as 0.
    pub macro_zero_filled: bool,
    pub per_species: Vec<SpeciesMetrics>,
    #[serde(default)]
    pub config_hash: Option<String>,
}

/// Aggregates `records` per `mode` and computes the full metric suite.
/// Only records of `view` are considered.
pub fn compute_report(
    records: &[PredictionRecord],
    catalog: &SpeciesCatalog,
    mode: EvalMode,
    view: ViewKind,
) -> Result<MetricsReport> {
    let strategy = mode.strategy();
    if !strategy.supports(view) {
        return Err(Error::Config(format!("{mode} evaluation is not defined for the {view} view")));
    }
    let selected: Vec<PredictionRecord> = records.iter().filter(|r| r.view == view).cloned().collect();
    if selected.is_empty() {
        return Err(Error::Config(format!("no {view} records to evaluate")));
    }
    for r in &selected {
        r.validate(catalog.len())?;
    }
    let evaluated = strategy.aggregate(&selected)?;
    let n = catalog.len();
    let top1 = topk_accuracy(&evaluated, 1)?;
    let top3 = topk_accuracy(&evaluated, 3.min(n))?;
    let top5 = topk_accuracy(&evaluated, 5.min(n))?;
    let f1 = f1_scores(&evaluated)?;
    if f1.micro_f1 != top1 {
        return Err(Error::Consistency(format!("micro-F1 {} differs from top-1 {}", f1.micro_f1, top1)));
    }
    let per_species = catalog
        .entries()
        .iter()
        .map(|e| {
            let stats = f1.per_class[e.class_index];
            let defined = stats.support > 0;
            SpeciesMetrics {
                class_index: e.class_index,
                scientific_name: e.scientific_name.clone(),
                train_count: e.train_count,
                test_count: stats.support,
                precision: defined.then(|| stats.precision()),
                recall: defined.then(|| stats.recall()),
                f1: defined.then(|| stats.f1()),
            }
        })
        .collect();
    Ok(MetricsReport {
        mode,
        view,
        n_records: evaluated.len(),
        n_species: n,
        top1,
        top3,
        top5,
        topk_clamped: n < 5,
        macro_f1: f1.macro_f1,
        micro_f1: f1.micro_f1,
        weighted_f1: f1.weighted_f1,
        macro_zero_filled: true,
        per_species,
        config_hash: None,
    })
}

impl MetricsReport {
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "view: {}  mode: {}  records: {}  species: {}", self.view, self.mode, self.n_records, self.n_species);
        let _ = writeln!(s, "{:>8} {:>8} {:>8} {:>8} {:>8} {:>8}", "top-1", "top-3", "top-5", "macro", "micro", "weighted");
        let _ = writeln!(
            s,
            "{:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
            self.top1, self.top3, self.top5, self.macro_f1, self.micro_f1, self.weighted_f1
        );
        if self.topk_clamped {
            let _ = writeln!(s, "(top-3/top-5 computed with k clamped to {})", self.n_species);
        }
        s
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("report serializes");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongTailRow {
    pub class_index: usize,
    pub scientific_name: String,
    pub train_count: usize,
    pub crown_view_test_count: usize,
    pub crown_view_f1: Option<f64>,
    pub close_up_test_count: usize,
    pub close_up_f1: Option<f64>,
}

impl LongTailRow {
    fn f1(&self, view: ViewKind) -> Option<f64> {
        match view {
            ViewKind::CrownView => self.crown_view_f1,
            ViewKind::CloseUp => self.close_up_f1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongTailReport {
    pub rows: Vec<LongTailRow>,
    /// Views that had records; the bottom selection requires non-zero F1 in each.
    pub views: Vec<ViewKind>,
    /// Class indices with the largest train counts, largest first.
    pub top10: Vec<usize>,
    /// Class indices with the smallest train counts among species that have
    /// at least one training sample and a defined, non-zero F1 in every
    /// evaluated view; smallest first.
    pub bottom10: Vec<usize>,
}

/// Per-species F1 for every view present in `records`, plus the top-10 and
/// bottom-10 selections by train count. Ties in train count fall back to
/// class index.
pub fn longtail_report(records: &[PredictionRecord], catalog: &SpeciesCatalog) -> Result<LongTailReport> {
    let mut rows: Vec<LongTailRow> = catalog
        .entries()
        .iter()
        .map(|e| LongTailRow {
            class_index: e.class_index,
            scientific_name: e.scientific_name.clone(),
            train_count: e.train_count,
            crown_view_test_count: 0,
            crown_view_f1: None,
            close_up_test_count: 0,
            close_up_f1: None,
        })
        .collect();
    let mut views = Vec::new();
    for view in [ViewKind::CrownView, ViewKind::CloseUp] {
        let subset: Vec<PredictionRecord> = records.iter().filter(|r| r.view == view).cloned().collect();
        if subset.is_empty() {
            continue;
        }
        views.push(view);
        let f1 = f1_scores(&subset)?;
        if f1.per_class.len() != rows.len() {
            return Err(Error::Consistency(format!(
                "records have {} classes but the catalog has {}",
                f1.per_class.len(),
                rows.len()
            )));
        }
        for (row, stats) in rows.iter_mut().zip(&f1.per_class) {
            let value = (stats.support > 0).then(|| stats.f1());
            match view {
                ViewKind::CrownView => {
                    row.crown_view_test_count = stats.support;
                    row.crown_view_f1 = value;
                }
                ViewKind::CloseUp => {
                    row.close_up_test_count = stats.support;
                    row.close_up_f1 = value;
                }
            }
        }
    }

    let mut by_train: Vec<&LongTailRow> = rows.iter().collect();
    by_train.sort_by(|a, b| b.train_count.cmp(&a.train_count).then(a.class_index.cmp(&b.class_index)));
    let top10 = by_train.iter().take(10).map(|r| r.class_index).collect();

    let mut eligible: Vec<&LongTailRow> = rows
        .iter()
        .filter(|r| r.train_count >= 1 && views.iter().all(|v| r.f1(*v).is_some_and(|f| f > 0.0)))
        .collect();
    eligible.sort_by(|a, b| a.train_count.cmp(&b.train_count).then(a.class_index.cmp(&b.class_index)));
    let bottom10 = eligible.iter().take(10).map(|r| r.class_index).collect();

    Ok(LongTailReport {
        rows,
        views,
        top10,
        bottom10,
    })
}

impl LongTailReport {
    /// Grouped-bar chart data: one row per selected species.
    pub fn write_chart_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        w.write_record(["group", "class_index", "scientific_name", "train_count", "crown_view_f1", "close_up_f1"])
            .map_err(|e| csv_err(path, e))?;
        let fmt = |v: Option<f64>| v.map(|f| format!("{f:.6}")).unwrap_or_default();
        for (group, selection) in [("top10", &self.top10), ("bottom10", &self.bottom10)] {
            for &idx in selection.iter() {
                let row = &self.rows[idx];
                w.write_record([
                    group.to_string(),
                    row.class_index.to_string(),
                    row.scientific_name.clone(),
                    row.train_count.to_string(),
                    fmt(row.crown_view_f1),
                    fmt(row.close_up_f1),
                ])
                .map_err(|e| csv_err(path, e))?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_table_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        for row in &self.rows {
            w.serialize(row).map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

pub fn write_predictions(records: &[PredictionRecord], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r).expect("record serializes");
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
