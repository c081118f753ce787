mod common;

use std::collections::BTreeMap;

use crownscale_core::metrics::EvalMode;
use crownscale_core::split::Scheme;
use crownscale_core::{Ratios, SpeciesCatalog, Split, SplitAssignment, ViewKind};
use crownscale_nn::{evaluate, predict_dataset, Error, TileStore};

use common::{labeled_set, sample, tiny_model, write_tile};

#[test]
fn one_normalized_record_per_sample() {
    let dir = tempfile::tempdir().unwrap();
    let samples = labeled_set(dir.path(), "t", 3, 2, 2, 1);
    let store = TileStore::new(dir.path());
    let model = tiny_model(3, 0);
    let records = predict_dataset(&model, &store, &samples, 5).unwrap();
    assert_eq!(records.len(), samples.len());
    for (r, s) in records.iter().zip(&samples) {
        assert_eq!((&r.tree_id, &r.date_id, r.view), (&s.tree_id, &s.date_id, s.view));
        assert!((r.probs.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
        assert_eq!(r.true_label, s.label());
    }
}

#[test]
fn repeated_and_unlabeled_samples() {
    let dir = tempfile::tempdir().unwrap();
    write_tile(dir.path(), "a.png", 0, 1);
    let s = sample("a", "2024-01-15", ViewKind::CrownView, "a.png", None);
    let store = TileStore::new(dir.path());
    let records = predict_dataset(&tiny_model(2, 0), &store, &[s.clone(), s], 4).unwrap();
    assert_eq!(records[0], records[1]);
    assert_eq!(records[0].true_label, None);
}

#[test]
fn evaluate_runs_both_modes_on_the_test_split() {
    let dir = tempfile::tempdir().unwrap();
    let samples = labeled_set(dir.path(), "t", 2, 2, 3, 1);
    let store = TileStore::new(dir.path());
    let assignment = SplitAssignment {
        splits: samples.iter().map(|s| (s.tree_id.clone(), Split::Test)).collect::<BTreeMap<_, _>>(),
        seed: 0,
        scheme: Scheme::Holdout { ratios: Ratios::default() },
    };
    let catalog = SpeciesCatalog::from_counts([("A a".to_string(), 3, 0, 2), ("B b".to_string(), 2, 0, 2)]).unwrap();
    let model = tiny_model(2, 0);
    let (ind, records) =
        evaluate(&model, &store, &samples, &assignment, EvalMode::IndividualImage, ViewKind::CrownView, &catalog, 4)
            .unwrap();
    assert_eq!(ind.n_records, 12);
    assert_eq!(records.len(), 12);
    assert_eq!(ind.micro_f1, ind.top1);
    let (sv, _) =
        evaluate(&model, &store, &samples, &assignment, EvalMode::SoftVoting, ViewKind::CrownView, &catalog, 4).unwrap();
    assert_eq!(sv.n_records, 4);

    let err = evaluate(&model, &store, &samples, &assignment, EvalMode::SoftVoting, ViewKind::CloseUp, &catalog, 4)
        .unwrap_err();
    assert!(matches!(err, Error::Config(_)));
    let err = evaluate(&model, &store, &samples, &assignment, EvalMode::IndividualImage, ViewKind::CloseUp, &catalog, 4)
        .unwrap_err();
    assert!(matches!(err, Error::Config(_)), "no close-up test samples");
}
