mod common;

use crownscale_core::preprocess::AugmentConfig;
use crownscale_core::{early_stop_check, StopDecision};
use crownscale_nn::trainer::{evaluate_loss, OptimizerConfig};
use crownscale_nn::{run_crossval, train, Error, ModelBundle, Selection, TileStore, TrainConfig};

use common::{labeled_set, tiny_model};

fn quick_config(max_epochs: usize) -> TrainConfig {
    TrainConfig {
        batch_size: 8,
        max_epochs,
        patience: max_epochs,
        seed: 3,
        augment: AugmentConfig {
            rotation_max_deg: 0.0,
            ..AugmentConfig::default()
        },
        ..TrainConfig::default()
    }
}

#[test]
fn config_validation() {
    let ok = TrainConfig::default();
    ok.validate().unwrap();
    assert_eq!((ok.batch_size, ok.max_epochs, ok.patience, ok.min_delta), (32, 100, 5, 0.001));
    for bad in [
        TrainConfig { patience: 0, ..ok.clone() },
        TrainConfig { min_delta: -1e-3, ..ok.clone() },
        TrainConfig { batch_size: 0, ..ok.clone() },
        TrainConfig { min_delta: f64::NAN, ..ok.clone() },
    ] {
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }
}

#[test]
fn initial_cross_entropy_is_near_log_n() {
    let dir = tempfile::tempdir().unwrap();
    for n in [2usize, 3, 4] {
        let samples = labeled_set(dir.path(), &format!("n{n}_"), n, 4, 1, 1);
        let store = TileStore::new(dir.path());
        let model = tiny_model(n, 17);
        let aug = AugmentConfig::with_target_size(32);
        let (loss, _) = evaluate_loss(&model, &store, &samples, &aug, 16).unwrap();
        let expected = (n as f64).ln();
        assert!((loss - expected).abs() <= 0.2 * expected, "n={n}: {loss} vs {expected}");
    }
}

#[test]
fn learns_a_separable_two_class_set_in_200_steps() {
    let dir = tempfile::tempdir().unwrap();
    let train_set = labeled_set(dir.path(), "t", 2, 8, 1, 1);
    let val_set = labeled_set(dir.path(), "v", 2, 2, 1, 2);
    let store = TileStore::new(dir.path());
    // 16 samples, batch 8: 2 steps per epoch.
    let (model, history) = train(tiny_model(2, 0), &store, &train_set, &val_set, &quick_config(100)).unwrap();
    assert_eq!(history.stopped_epoch, 100);
    let (_, acc) = evaluate_loss(&model, &store, &train_set, &AugmentConfig::with_target_size(32), 16).unwrap();
    assert_eq!(acc, 1.0);
}

#[test]
fn three_class_train_accuracy_reaches_090_within_50_epochs() {
    let dir = tempfile::tempdir().unwrap();
    let train_set = labeled_set(dir.path(), "t", 3, 6, 2, 5);
    let val_set = labeled_set(dir.path(), "v", 3, 2, 1, 6);
    let store = TileStore::new(dir.path());
    let cfg = TrainConfig { patience: 5, ..quick_config(50) };
    let (model, history) = train(tiny_model(3, 1), &store, &train_set, &val_set, &cfg).unwrap();
    assert!(history.best_epoch <= history.stopped_epoch && history.stopped_epoch <= 50);
    let (_, acc) = evaluate_loss(&model, &store, &train_set, &AugmentConfig::with_target_size(32), 16).unwrap();
    assert!(acc >= 0.9, "train accuracy {acc}");
}

#[test]
fn leakage_between_train_and_val_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let train_set = labeled_set(dir.path(), "t", 2, 2, 1, 1);
    let val_set = vec![train_set[0].clone()];
    let store = TileStore::new(dir.path());
    let err = train(tiny_model(2, 0), &store, &train_set, &val_set, &quick_config(1)).unwrap_err();
    assert!(matches!(err, Error::Consistency(_)), "{err}");
}

#[test]
fn empty_train_and_unlabeled_val_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let val_set = labeled_set(dir.path(), "v", 2, 1, 1, 1);
    let store = TileStore::new(dir.path());
    let err = train(tiny_model(2, 0), &store, &[], &val_set, &quick_config(1)).unwrap_err();
    assert!(matches!(err, Error::Config(_)));

    let train_set = labeled_set(dir.path(), "t", 2, 1, 1, 1);
    let mut unlabeled = val_set.clone();
    unlabeled[0].species_label = None;
    let err = train(tiny_model(2, 0), &store, &train_set, &unlabeled, &quick_config(1)).unwrap_err();
    assert!(matches!(err, Error::Consistency(_)));
}

#[test]
fn flat_validation_loss_stops_after_epoch_six() {
    let dir = tempfile::tempdir().unwrap();
    let train_set = labeled_set(dir.path(), "t", 2, 2, 1, 1);
    let val_set = labeled_set(dir.path(), "v", 2, 1, 1, 2);
    let store = TileStore::new(dir.path());
    let cfg = TrainConfig {
        patience: 5,
        min_delta: 0.001,
        optimizer: OptimizerConfig {
            learning_rate: Some(1e-12),
            weight_decay: Some(0.0),
            ..OptimizerConfig::default()
        },
        ..quick_config(100)
    };
    let (_, history) = train(tiny_model(2, 0), &store, &train_set, &val_set, &cfg).unwrap();
    assert_eq!(history.stopped_epoch, 6);
    assert!(history.stopped_early);
    assert_eq!(history.best_epoch, 1.max(history.best_epoch));
    let losses: Vec<f64> = history.epochs.iter().map(|e| e.val_loss).collect();
    assert_eq!(early_stop_check(&losses, 5, 0.001), StopDecision::Stop);
    assert_eq!(early_stop_check(&losses[..5], 5, 0.001), StopDecision::Continue);
}

#[test]
fn same_seed_gives_identical_histories() {
    let dir = tempfile::tempdir().unwrap();
    let train_set = labeled_set(dir.path(), "t", 2, 3, 2, 1);
    let val_set = labeled_set(dir.path(), "v", 2, 1, 1, 2);
    let store = TileStore::new(dir.path());
    let cfg = TrainConfig {
        augment: AugmentConfig::default(),
        ..quick_config(3)
    };
    let (_, a) = train(tiny_model(2, 4), &store, &train_set, &val_set, &cfg).unwrap();
    let (_, b) = train(tiny_model(2, 4), &store, &train_set, &val_set, &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn kept_checkpoint_reproduces_best_val_loss() {
    let dir = tempfile::tempdir().unwrap();
    let train_set = labeled_set(dir.path(), "t", 3, 3, 1, 1);
    let val_set = labeled_set(dir.path(), "v", 3, 1, 1, 2);
    let store = TileStore::new(dir.path());
    let (model, history) = train(tiny_model(3, 2), &store, &train_set, &val_set, &quick_config(6)).unwrap();
    let best = history.best();
    let min = history.epochs.iter().map(|e| e.val_loss).fold(f64::INFINITY, f64::min);
    assert_eq!(best.val_loss, min);

    let ckpt = dir.path().join("ckpt");
    model.save_checkpoint(&ckpt, None).unwrap();
    let (loaded, _) = ModelBundle::load_checkpoint(&ckpt).unwrap();
    let aug = AugmentConfig::with_target_size(32);
    let (loss, _) = evaluate_loss(&loaded, &store, &val_set, &aug, 8).unwrap();
    assert!((loss - best.val_loss).abs() <= 1e-5, "{loss} vs {}", best.val_loss);
}

#[test]
fn top1_selection_keeps_the_most_accurate_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let train_set = labeled_set(dir.path(), "t", 2, 3, 1, 1);
    let val_set = labeled_set(dir.path(), "v", 2, 2, 1, 2);
    let store = TileStore::new(dir.path());
    let cfg = TrainConfig {
        selection: Selection::ValTop1,
        ..quick_config(4)
    };
    let (_, history) = train(tiny_model(2, 2), &store, &train_set, &val_set, &cfg).unwrap();
    let max = history.epochs.iter().map(|e| e.val_top1).fold(0.0, f64::max);
    assert_eq!(history.best().val_top1, max);
}

#[test]
fn history_csv_columns() {
    let dir = tempfile::tempdir().unwrap();
    let train_set = labeled_set(dir.path(), "t", 2, 2, 1, 1);
    let val_set = labeled_set(dir.path(), "v", 2, 1, 1, 2);
    let store = TileStore::new(dir.path());
    let (_, history) = train(tiny_model(2, 0), &store, &train_set, &val_set, &quick_config(2)).unwrap();
    let path = dir.path().join("history.csv");
    history.write_csv(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "epoch,train_loss,val_loss,val_top1");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("1,"));
}

#[test]
fn crossval_runs_one_fresh_model_per_fold() {
    let dir = tempfile::tempdir().unwrap();
    let samples = labeled_set(dir.path(), "t", 3, 3, 2, 1);
    let store = TileStore::new(dir.path());
    let cfg = quick_config(2);
    let make = || Ok(tiny_model(3, 9));
    let (runs, summary) = run_crossval(&make, &store, &samples, 3, &cfg).unwrap();
    assert_eq!(runs.len(), 3);
    assert_eq!(summary.k, 3);
    assert_eq!(summary.epochs_trained, vec![2, 2, 2]);
    assert_eq!(summary.epochs_std, 0.0);
    assert!(summary.display().contains("±"));

    let (_, again) = run_crossval(&make, &store, &samples, 3, &cfg).unwrap();
    assert_eq!(summary, again);

    let err = run_crossval(&make, &store, &samples, 1, &cfg).unwrap_err();
    assert_eq!(err.kind(), crownscale_core::ErrorKind::Validation);
}
