use std::collections::BTreeSet;

use crownscale_core::split::{build_catalog, kfold_assign_trees, labeled_trees, Pool};
use crownscale_core::types::{PixelWindow, SourceKind};
use crownscale_core::{
    assign_splits, expand_to_samples, verify_no_leakage, CrownPolygon, PolygonGeometry, Ratios, SampleSource, Split,
    SplitMix64, TileSample, ViewKind,
};
use proptest::prelude::*;

fn polygon(id: &str, label: Option<usize>) -> CrownPolygon {
    let g = PolygonGeometry::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![]).unwrap();
    CrownPolygon::new(id, g, "EPSG:32617", label).unwrap()
}

fn tile(tree: &str, date: &str, view: ViewKind, label: Option<usize>) -> TileSample {
    TileSample {
        tree_id: tree.into(),
        date_id: date.into(),
        view,
        image_path: format!("{view}/{tree}/{date}.png"),
        mask_fraction: 0.5,
        species_label: label.map(|l| l as i64),
        source: SampleSource {
            kind: SourceKind::Raster,
            uri: "r.tif".into(),
            window: PixelWindow {
                col_off: 0,
                row_off: 0,
                width: 8,
                height: 8,
            },
            anchor: "centroid".into(),
        },
    }
}

/// Random trees, labels, dates (up to 16) and close-ups.
fn manifest(seed: u64) -> (Vec<CrownPolygon>, Vec<TileSample>) {
    let mut rng = SplitMix64::new(seed);
    let n_species = 1 + rng.below(6) as usize;
    let n_trees = 3 + rng.below(40) as usize;
    let mut polygons = Vec::new();
    let mut samples = Vec::new();
    for t in 0..n_trees {
        let id = format!("tree{t:03}");
        let label = (rng.below(5) != 0).then(|| rng.below(n_species as u64) as usize);
        polygons.push(polygon(&id, label));
        for d in 0..1 + rng.below(16) {
            samples.push(tile(&id, &format!("2024-{:02}", d + 1), ViewKind::CrownView, label));
        }
        for c in 0..rng.below(3) {
            samples.push(tile(&id, &format!("cu{c}"), ViewKind::CloseUp, label));
        }
    }
    (polygons, samples)
}

fn labeled(polygons: &[CrownPolygon]) -> Vec<CrownPolygon> {
    polygons.iter().filter(|p| p.species_label.is_some()).cloned().collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn expanded_manifests_never_leak(seed in any::<u64>()) {
        let (polygons, samples) = manifest(seed);
        let lab = labeled(&polygons);
        prop_assume!(!lab.is_empty());
        let a = assign_splits(&lab, Ratios::default(), seed).unwrap();
        let parts = expand_to_samples(&a, &samples).unwrap();
        prop_assert!(verify_no_leakage(&a, &parts).is_clean());
        let total = parts.train.len() + parts.val.len() + parts.test.len() + parts.unlabeled.len();
        prop_assert_eq!(total, samples.len());
        prop_assert_eq!(a, assign_splits(&lab, Ratios::default(), seed).unwrap());
    }

    #[test]
    fn a_single_moved_sample_is_caught(seed in any::<u64>(), pick in any::<u64>()) {
        let (polygons, samples) = manifest(seed);
        let lab = labeled(&polygons);
        prop_assume!(!lab.is_empty());
        let a = assign_splits(&lab, Ratios::default(), seed).unwrap();
        let mut parts = expand_to_samples(&a, &samples).unwrap();
        let pools = [Pool::Train, Pool::Val, Pool::Test, Pool::Unlabeled];
        let mut rng = SplitMix64::new(pick);
        let non_empty: Vec<Pool> = pools.iter().copied().filter(|p| !parts.pool(*p).is_empty()).collect();
        let from = non_empty[rng.below(non_empty.len() as u64) as usize];
        let others: Vec<Pool> = pools.iter().copied().filter(|p| *p != from).collect();
        let to = others[rng.below(3) as usize];
        let idx = rng.below(parts.pool(from).len() as u64) as usize;
        let moved = parts.pool_mut(from).remove(idx);
        let tree = moved.tree_id.clone();
        parts.pool_mut(to).push(moved);
        let report = verify_no_leakage(&a, &parts);
        let flagged: BTreeSet<&str> = report.violations.iter().map(|v| v.tree_id.as_str()).collect();
        prop_assert_eq!(flagged, BTreeSet::from([tree.as_str()]));
    }

    #[test]
    fn kfold_puts_each_tree_in_at_most_one_val_fold(seed in any::<u64>(), k in 2usize..5) {
        let (_, samples) = manifest(seed);
        let trees = labeled_trees(&samples);
        prop_assume!(!trees.is_empty());
        let folds = kfold_assign_trees(&trees, k, seed).unwrap();
        prop_assert_eq!(folds.len(), k);
        for (tree, _) in &trees {
            let vals = folds.iter().filter(|f| f.get(tree) == Some(Split::Val)).count();
            prop_assert!(vals <= 1);
            prop_assert!(folds.iter().all(|f| f.get(tree).is_some()));
        }
    }
}

#[test]
fn catalog_counts_follow_the_assignment() {
    let (polygons, _) = manifest(5);
    let lab = labeled(&polygons);
    let a = assign_splits(&lab, Ratios::default(), 5).unwrap();
    let names: Vec<String> = (0..6).map(|i| format!("Genus species{i}")).collect();
    let index = crownscale_core::catalog::SpeciesIndex::from_tree_labels(names.iter().map(String::as_str));
    let (catalog, remap) = build_catalog(&lab, &a, &index).unwrap();
    let train_total: usize = catalog.entries().iter().map(|e| e.train_count).sum();
    assert_eq!(train_total, a.count(Split::Train));
    assert!(catalog.entries().windows(2).all(|w| w[0].train_count >= w[1].train_count));
    assert_eq!(remap.len(), index.names().len());
}
