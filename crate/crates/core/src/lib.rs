//! Core data model and pure pipeline stages for crown-view / close-up tree
//! species classification.
//!
//! The crate covers everything that does not need a neural network runtime:
//! manifests and catalogs, GeoTIFF windowed reads, crown-polygon masking,
//! leakage-free splitting, augmentation and normalization, and the metric
//! suite (top-k, F1 triple, soft voting, long-tail breakdown).

pub mod catalog;
pub mod early_stop;
pub mod error;
pub mod geometry;
pub mod manifest;
pub mod metrics;
pub mod preprocess;
pub mod raster;
pub mod rng;
pub mod split;
pub mod synthetic;
pub mod tiler;
pub mod types;

pub use catalog::{SpeciesCatalog, SpeciesEntry};
pub use early_stop::{early_stop_check, EarlyStopping, StopDecision};
pub use error::{Error, ErrorKind, Result};
pub use geometry::{Affine, PolygonGeometry};
pub use manifest::{read_manifest, write_manifest};
pub use metrics::{
    f1_scores, longtail_report, soft_vote, topk_accuracy, EvalMode, F1Scores, LongTailReport,
    MetricsReport,
};
pub use preprocess::{augment_train, preprocess_eval, AugmentConfig, NormalizedImage};
pub use rng::SplitMix64;
pub use split::{
    assign_splits, assign_splits_trees, build_catalog, build_catalog_trees, expand_to_samples,
    kfold_assign, labeled_trees, verify_no_leakage, LeakageReport, Pool,
    Ratios, Split, SplitAssignment, SplitSamples,
};
pub use tiler::{build_temporal_series, compute_window, rasterize_and_mask, RasterWindow};
pub use types::{
    AcquisitionDate, CrownPolygon, PredictionRecord, SampleSource, TileImage, TileSample,
    ViewKind,
};
