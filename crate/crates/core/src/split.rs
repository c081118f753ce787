//! Polygon-level train/val/test assignment.
//!
//! Assignment is stratified per species: each species' trees (sorted by
//! tree_id) are shuffled with [`SplitMix64`], the first `floor(r_val * n)`
//! go to val, the next `floor(r_test * n)` to test, and the remainder to
//! train. Species are visited in ascending class index and share one
//! generator stream. Every dated observation and every close-up of a tree
//! follows the tree.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::catalog::{SpeciesCatalog, SpeciesIndex};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::types::{CrownPolygon, TileSample};

/// Guards floor() against representation error, e.g. 0.15 * 20 = 2.9999...
const FLOOR_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

/// Train/val/test fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ratios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for Ratios {
    fn default() -> Self {
        Ratios {
            train: 0.70,
            val: 0.15,
            test: 0.15,
        }
    }
}

impl Ratios {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let r = Ratios { train, val, test };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::Config(format!("split ratios must be positive, got {parts:?}")));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split ratios sum to {sum}, not 1")));
        }
        Ok(())
    }

    /// (n_train, n_val, n_test) for a species with `n` trees.
    pub fn partition_sizes(&self, n: usize) -> (usize, usize, usize) {
        let n_val = (self.val * n as f64 + FLOOR_EPS).floor() as usize;
        let n_test = (self.test * n as f64 + FLOOR_EPS).floor() as usize;
        (n - n_val - n_test, n_val, n_test)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scheme {
    Holdout { ratios: Ratios },
    Kfold { k: usize, fold: usize },
}

/// tree_id → split, with the parameters that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitAssignment {
    pub splits: BTreeMap<String, Split>,
    pub seed: u64,
    pub scheme: Scheme,
}

#[derive(Serialize, Deserialize)]
struct Header {
    seed: u64,
    scheme: Scheme,
    stratification: String,
    rounding: String,
    prng: String,
}

impl SplitAssignment {
    pub fn get(&self, tree_id: &str) -> Option<Split> {
        self.splits.get(tree_id).copied()
    }

    pub fn trees_in(&self, split: Split) -> impl Iterator<Item = &str> {
        self.splits
            .iter()
            .filter(move |(_, s)| **s == split)
            .map(|(t, _)| t.as_str())
    }

    pub fn count(&self, split: Split) -> usize {
        self.splits.values().filter(|s| **s == split).count()
    }

    /// First line: JSON header. Then CSV `tree_id,split`.
    pub fn write(&self, path: &Path) -> Result<()> {
        let header = Header {
            seed: self.seed,
            scheme: self.scheme.clone(),
            stratification: "per_species".into(),
            rounding: "floor(val), floor(test), remainder to train; singletons to train".into(),
            prng: "splitmix64".into(),
        };
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(out, "{}", serde_json::to_string(&header).expect("header serializes")).map_err(io)?;
        writeln!(out, "tree_id,split").map_err(io)?;
        for (tree, split) in &self.splits {
            if tree.contains([',', '"', '\n']) {
                writeln!(out, "\"{}\",{split}", tree.replace('"', "\"\"")).map_err(io)?;
            } else {
                writeln!(out, "{tree},{split}").map_err(io)?;
            }
        }
        out.flush().map_err(io)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let parse_err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let header_line = lines
            .next()
            .ok_or_else(|| parse_err(1, "empty assignment file".into()))?
            .map_err(|e| Error::io(path, e))?;
        let header: Header =
            serde_json::from_str(&header_line).map_err(|e| parse_err(1, e.to_string()))?;
        let rest: String = lines
            .collect::<std::io::Result<Vec<_>>>()
            .map_err(|e| Error::io(path, e))?
            .join("\n");
        let mut reader = csv::Reader::from_reader(rest.as_bytes());
        let mut splits = BTreeMap::new();
        for (i, row) in reader.records().enumerate() {
            let row = row.map_err(|e| parse_err(i + 3, e.to_string()))?;
            let (tree, split) = (row.get(0).unwrap_or(""), row.get(1).unwrap_or(""));
            let split: Split = split.parse().map_err(|e: Error| parse_err(i + 3, e.to_string()))?;
            if splits.insert(tree.to_string(), split).is_some() {
                return Err(Error::validation(tree, "tree_id", "listed twice in assignment"));
            }
        }
        Ok(SplitAssignment {
            splits,
            seed: header.seed,
            scheme: header.scheme,
        })
    }
}

fn group_by_species<'a>(
    trees: impl IntoIterator<Item = (&'a str, Option<usize>)>,
) -> Result<BTreeMap<usize, Vec<&'a str>>> {
    let mut groups: BTreeMap<usize, Vec<&str>> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for (tree, label) in trees {
        let label = label.ok_or_else(|| Error::Config(format!("tree `{tree}` has no species label")))?;
        if !seen.insert(tree) {
            return Err(Error::validation(tree, "tree_id", "appears twice"));
        }
        groups.entry(label).or_default().push(tree);
    }
    for members in groups.values_mut() {
        members.sort_unstable();
    }
    Ok(groups)
}

/// Stratified holdout assignment.
pub fn assign_splits(
    labeled_polygons: &[CrownPolygon],
    ratios: Ratios,
    seed: u64,
) -> Result<SplitAssignment> {
    let trees: Vec<(&str, Option<usize>)> =
        labeled_polygons.iter().map(|p| (p.tree_id.as_str(), p.species_label)).collect();
    holdout(trees, ratios, seed)
}

/// [`assign_splits`] over bare `(tree_id, label)` pairs.
pub fn assign_splits_trees(trees: &[(String, usize)], ratios: Ratios, seed: u64) -> Result<SplitAssignment> {
    holdout(trees.iter().map(|(t, l)| (t.as_str(), Some(*l))).collect(), ratios, seed)
}

fn holdout(trees: Vec<(&str, Option<usize>)>, ratios: Ratios, seed: u64) -> Result<SplitAssignment> {
    ratios.validate()?;
    if trees.is_empty() {
        return Err(Error::EmptyAssignment("no labeled polygons".into()));
    }
    let groups = group_by_species(trees)?;
    let mut rng = SplitMix64::new(seed);
    let mut splits = BTreeMap::new();
    for mut members in groups.into_values() {
        rng.shuffle(&mut members);
        let (_, n_val, n_test) = ratios.partition_sizes(members.len());
        for (i, tree) in members.into_iter().enumerate() {
            let split = if i < n_val {
                Split::Val
            } else if i < n_val + n_test {
                Split::Test
            } else {
                Split::Train
            };
            splits.insert(tree.to_string(), split);
        }
    }
    Ok(SplitAssignment {
        splits,
        seed,
        scheme: Scheme::Holdout { ratios },
    })
}

/// Stratified k-fold assignment (train/val only).
///
/// Within each species the shuffled trees are dealt round-robin into folds,
/// continuing from where the previous species stopped so fold sizes stay
/// balanced. Single-tree species stay in train for every fold; species with
/// fewer trees than folds leave some folds without a val member. Both cases
/// are logged.
pub fn kfold_assign(
    labeled_polygons: &[CrownPolygon],
    k: usize,
    seed: u64,
) -> Result<Vec<SplitAssignment>> {
    let trees: Vec<(String, usize)> = labeled_polygons
        .iter()
        .map(|p| {
            p.species_label
                .map(|l| (p.tree_id.clone(), l))
                .ok_or_else(|| Error::Config(format!("tree `{}` has no species label", p.tree_id)))
        })
        .collect::<Result<_>>()?;
    kfold_assign_trees(&trees, k, seed)
}

/// Labeled trees of a manifest as `(tree_id, label)`, one entry per tree.
pub fn labeled_trees(samples: &[TileSample]) -> Vec<(String, usize)> {
    let mut trees: BTreeMap<&str, usize> = BTreeMap::new();
    for s in samples {
        if let Some(l) = s.label() {
            trees.insert(&s.tree_id, l);
        }
    }
    trees.into_iter().map(|(t, l)| (t.to_string(), l)).collect()
}

/// [`kfold_assign`] over bare `(tree_id, label)` pairs.
pub fn kfold_assign_trees(trees: &[(String, usize)], k: usize, seed: u64) -> Result<Vec<SplitAssignment>> {
    if k < 2 {
        return Err(Error::Config(format!("k-fold needs k >= 2, got {k}")));
    }
    if trees.is_empty() {
        return Err(Error::EmptyAssignment("no labeled polygons".into()));
    }
    let groups = group_by_species(trees.iter().map(|(t, l)| (t.as_str(), Some(*l))))?;
    let mut rng = SplitMix64::new(seed);
    let mut fold_of: BTreeMap<String, Option<usize>> = BTreeMap::new();
    let mut next = 0usize;
    for (label, mut members) in groups {
        rng.shuffle(&mut members);
        if members.len() == 1 {
            log::warn!("species {label} has one tree; it stays in train for every fold");
            fold_of.insert(members[0].to_string(), None);
            continue;
        }
        if members.len() < k {
            log::warn!(
                "species {label} has {} trees for {k} folds; some folds get no val member",
                members.len()
            );
        }
        for tree in members {
            fold_of.insert(tree.to_string(), Some(next % k));
            next += 1;
        }
    }
    Ok((0..k)
        .map(|fold| SplitAssignment {
            splits: fold_of
                .iter()
                .map(|(t, f)| (t.clone(), if *f == Some(fold) { Split::Val } else { Split::Train }))
                .collect(),
            seed,
            scheme: Scheme::Kfold { k, fold },
        })
        .collect())
}

/// Final species catalog from a holdout assignment, plus the map from the
/// provisional tiling index to the catalog's class indices.
pub fn build_catalog(
    polygons: &[CrownPolygon],
    assignment: &SplitAssignment,
    index: &SpeciesIndex,
) -> Result<(SpeciesCatalog, Vec<usize>)> {
    let trees: Vec<(String, usize)> = polygons
        .iter()
        .filter_map(|p| p.species_label.map(|l| (p.tree_id.clone(), l)))
        .collect();
    build_catalog_trees(&trees, assignment, index)
}

/// [`build_catalog`] over bare `(tree_id, provisional label)` pairs.
pub fn build_catalog_trees(
    trees: &[(String, usize)],
    assignment: &SplitAssignment,
    index: &SpeciesIndex,
) -> Result<(SpeciesCatalog, Vec<usize>)> {
    let mut counts: BTreeMap<usize, [usize; 3]> = BTreeMap::new();
    for (tree, label) in trees {
        let Some(split) = assignment.get(tree) else {
            continue;
        };
        let label = *label;
        let slot = match split {
            Split::Train => 0,
            Split::Val => 1,
            Split::Test => 2,
        };
        counts.entry(label).or_default()[slot] += 1;
    }
    let rows = counts
        .iter()
        .map(|(label, c)| {
            let name = index
                .name(*label)
                .ok_or_else(|| Error::Consistency(format!("label {label} missing from species index")))?;
            Ok((name.to_string(), c[0], c[1], c[2]))
        })
        .collect::<Result<Vec<_>>>()?;
    let catalog = SpeciesCatalog::from_counts(rows)?;
    let remap = (0..index.names().len())
        .map(|old| {
            index
                .name(old)
                .and_then(|n| catalog.index_of(n))
                .unwrap_or(usize::MAX)
        })
        .collect();
    Ok((catalog, remap))
}

/// Where a sample ended up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pool {
    Train,
    Val,
    Test,
    Unlabeled,
}

impl From<Split> for Pool {
    fn from(s: Split) -> Self {
        match s {
            Split::Train => Pool::Train,
            Split::Val => Pool::Val,
            Split::Test => Pool::Test,
        }
    }
}

/// Samples partitioned by split, plus unlabeled trees outside the assignment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SplitSamples {
    pub train: Vec<TileSample>,
    pub val: Vec<TileSample>,
    pub test: Vec<TileSample>,
    pub unlabeled: Vec<TileSample>,
}

impl SplitSamples {
    pub fn pool(&self, pool: Pool) -> &[TileSample] {
        match pool {
            Pool::Train => &self.train,
            Pool::Val => &self.val,
            Pool::Test => &self.test,
            Pool::Unlabeled => &self.unlabeled,
        }
    }

    pub fn pool_mut(&mut self, pool: Pool) -> &mut Vec<TileSample> {
        match pool {
            Pool::Train => &mut self.train,
            Pool::Val => &mut self.val,
            Pool::Test => &mut self.test,
            Pool::Unlabeled => &mut self.unlabeled,
        }
    }

    pub fn split(&self, split: Split) -> &[TileSample] {
        self.pool(split.into())
    }

    fn iter_pools(&self) -> impl Iterator<Item = (Pool, &TileSample)> {
        [Pool::Train, Pool::Val, Pool::Test, Pool::Unlabeled]
            .into_iter()
            .flat_map(move |p| self.pool(p).iter().map(move |s| (p, s)))
    }
}

/// Routes every sample to its tree's split. Close-ups and all dates follow
/// the tree; trees outside the assignment go to the unlabeled pool.
pub fn expand_to_samples(assignment: &SplitAssignment, samples: &[TileSample]) -> Result<SplitSamples> {
    let mut out = SplitSamples::default();
    for s in samples {
        let pool = match assignment.get(&s.tree_id) {
            Some(split) => split.into(),
            None if s.species_label.is_none() => Pool::Unlabeled,
            None => {
                return Err(Error::Consistency(format!(
                    "labeled tree `{}` is missing from the split assignment",
                    s.tree_id
                )))
            }
        };
        out.pool_mut(pool).push(s.clone());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakageViolation {
    pub tree_id: String,
    /// Pools the tree's samples were found in.
    pub pools: Vec<Pool>,
    /// Split the assignment gives the tree, if any.
    pub assigned: Option<Split>,
}

/// Trees whose samples span more than one pool or sit outside their
/// assigned split. Empty means leakage-free.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakageReport {
    pub violations: Vec<LeakageViolation>,
}

impl LeakageReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn verify_no_leakage(assignment: &SplitAssignment, samples: &SplitSamples) -> LeakageReport {
    let mut pools: BTreeMap<&str, BTreeSet<Pool>> = BTreeMap::new();
    for (pool, s) in samples.iter_pools() {
        pools.entry(&s.tree_id).or_default().insert(pool);
    }
    let violations = pools
        .into_iter()
        .filter_map(|(tree, found)| {
            let assigned = assignment.get(tree);
            let expected = assigned.map(Pool::from).unwrap_or(Pool::Unlabeled);
            let clean = found.len() == 1 && found.contains(&expected);
            (!clean).then(|| LeakageViolation {
                tree_id: tree.to_string(),
                pools: found.into_iter().collect(),
                assigned,
            })
        })
        .collect();
    LeakageReport { violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PolygonGeometry;
    use crate::types::{PixelWindow, SampleSource, SourceKind, ViewKind};

    fn poly(id: &str, label: usize) -> CrownPolygon {
        let g = PolygonGeometry::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![]).unwrap();
        CrownPolygon::new(id, g, "EPSG:32617", Some(label)).unwrap()
    }

    fn sample(tree: &str, date: &str, view: ViewKind, label: Option<i64>) -> TileSample {
        TileSample {
            tree_id: tree.into(),
            date_id: date.into(),
            view,
            image_path: format!("{tree}/{date}/{view}.png"),
            mask_fraction: 0.5,
            species_label: label,
            source: SampleSource {
                kind: SourceKind::Raster,
                uri: "x".into(),
                window: PixelWindow { col_off: 0, row_off: 0, width: 8, height: 8 },
                anchor: "centroid".into(),
            },
        }
    }

    #[test]
    fn ten_trees_give_8_1_1() {
        let polys: Vec<_> = (0..10).map(|i| poly(&format!("t{i}"), 0)).collect();
        let a = assign_splits(&polys, Ratios::default(), 3).unwrap();
        assert_eq!((a.count(Split::Train), a.count(Split::Val), a.count(Split::Test)), (8, 1, 1));
    }

    #[test]
    fn singleton_species_goes_to_train() {
        let mut polys: Vec<_> = (0..10).map(|i| poly(&format!("t{i}"), 0)).collect();
        polys.push(poly("lonely", 1));
        for seed in 0..20 {
            let a = assign_splits(&polys, Ratios::default(), seed).unwrap();
            assert_eq!(a.get("lonely"), Some(Split::Train));
        }
    }

    #[test]
    fn floor_guard_on_exact_multiples() {
        assert_eq!(Ratios::default().partition_sizes(20), (14, 3, 3));
        assert_eq!(Ratios::default().partition_sizes(7), (5, 1, 1));
        assert_eq!(Ratios::default().partition_sizes(6), (6, 0, 0));
    }

    #[test]
    fn empty_and_bad_ratios() {
        assert!(matches!(assign_splits(&[], Ratios::default(), 0), Err(Error::EmptyAssignment(_))));
        let p = vec![poly("a", 0)];
        let bad = Ratios { train: 0.7, val: 0.2, test: 0.2 };
        assert!(matches!(assign_splits(&p, bad, 0), Err(Error::Config(_))));
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let polys: Vec<_> = (0..50).map(|i| poly(&format!("t{i:02}"), i % 3)).collect();
        let a = assign_splits(&polys, Ratios::default(), 11).unwrap();
        let b = assign_splits(&polys, Ratios::default(), 11).unwrap();
        let c = assign_splits(&polys, Ratios::default(), 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.splits, c.splits);
        // Input order does not matter.
        let mut rev = polys.clone();
        rev.reverse();
        assert_eq!(assign_splits(&rev, Ratios::default(), 11).unwrap(), a);
    }

    #[test]
    fn temporal_series_and_close_ups_follow_tree() {
        let polys: Vec<_> = (0..10).map(|i| poly(&format!("t{i}"), 0)).collect();
        let a = assign_splits(&polys, Ratios::default(), 5).unwrap();
        let test_tree = a.trees_in(Split::Test).next().unwrap().to_string();
        let mut samples: Vec<_> = (1..=16)
            .map(|d| sample(&test_tree, &format!("2024-{d:02}"), ViewKind::CrownView, Some(0)))
            .collect();
        samples.push(sample(&test_tree, "2024-06-01", ViewKind::CloseUp, Some(0)));
        samples.push(sample(&test_tree, "2024-06-01#2", ViewKind::CloseUp, Some(0)));
        let out = expand_to_samples(&a, &samples).unwrap();
        assert_eq!(out.test.len(), 18);
        assert!(out.train.is_empty() && out.val.is_empty());
        assert!(verify_no_leakage(&a, &out).is_clean());
    }

    #[test]
    fn unlabeled_tree_goes_to_pool() {
        let a = assign_splits(&[poly("a", 0)], Ratios::default(), 0).unwrap();
        let out = expand_to_samples(&a, &[sample("u", "d", ViewKind::CloseUp, None)]).unwrap();
        assert_eq!(out.unlabeled.len(), 1);
        assert!(out.train.is_empty() && out.val.is_empty() && out.test.is_empty());
    }

    #[test]
    fn unknown_labeled_tree_is_consistency_error() {
        let a = assign_splits(&[poly("a", 0)], Ratios::default(), 0).unwrap();
        let err = expand_to_samples(&a, &[sample("ghost", "d", ViewKind::CrownView, Some(0))]).unwrap_err();
        assert!(matches!(err, Error::Consistency(_)));
    }

    #[test]
    fn planted_leak_is_named() {
        let polys: Vec<_> = (0..10).map(|i| poly(&format!("t{i}"), 0)).collect();
        let a = assign_splits(&polys, Ratios::default(), 5).unwrap();
        let samples: Vec<_> = polys
            .iter()
            .flat_map(|p| (1..=3).map(move |d| sample(&p.tree_id, &format!("d{d}"), ViewKind::CrownView, Some(0))))
            .collect();
        let mut out = expand_to_samples(&a, &samples).unwrap();
        let moved = out.train.pop().unwrap();
        let tree = moved.tree_id.clone();
        out.val.push(moved);
        let report = verify_no_leakage(&a, &out);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].tree_id, tree);
        assert_eq!(report.violations[0].pools, vec![Pool::Train, Pool::Val]);
    }

    #[test]
    fn empty_samples_empty_report() {
        let a = assign_splits(&[poly("a", 0)], Ratios::default(), 0).unwrap();
        assert!(verify_no_leakage(&a, &SplitSamples::default()).is_clean());
    }

    #[test]
    fn kfold_partition() {
        let polys: Vec<_> = (0..9).map(|i| poly(&format!("t{i}"), 0)).collect();
        let folds = kfold_assign(&polys, 3, 1).unwrap();
        assert_eq!(folds.len(), 3);
        let mut all_val = BTreeSet::new();
        for f in &folds {
            assert_eq!(f.count(Split::Val), 3);
            assert_eq!(f.count(Split::Train), 6);
            for t in f.trees_in(Split::Val) {
                assert!(all_val.insert(t.to_string()), "{t} in val twice");
            }
        }
        assert_eq!(all_val.len(), 9);
    }

    #[test]
    fn kfold_singleton_trains_everywhere() {
        let mut polys: Vec<_> = (0..6).map(|i| poly(&format!("t{i}"), 0)).collect();
        polys.push(poly("solo", 1));
        for f in kfold_assign(&polys, 3, 0).unwrap() {
            assert_eq!(f.get("solo"), Some(Split::Train));
        }
        assert!(kfold_assign(&polys, 1, 0).is_err());
    }

    #[test]
    fn assignment_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("assignment.csv");
        let mut polys: Vec<_> = (0..12).map(|i| poly(&format!("t{i}"), i % 2)).collect();
        polys.push(poly("odd,\"name\"", 0));
        let a = assign_splits(&polys, Ratios::default(), 77).unwrap();
        a.write(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.lines().next().unwrap().starts_with("{\"seed\":77"));
        assert_eq!(text.lines().nth(1).unwrap(), "tree_id,split");
        assert_eq!(SplitAssignment::read(&path).unwrap(), a);
    }
}
