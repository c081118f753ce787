//! Encoders, training, distillation, and inference on top of `crownscale-core`.

pub mod backbone;
pub mod data;
pub mod distill;
pub mod error;
pub mod layers;
pub mod model;
pub mod param;
pub mod predict;
pub mod trainer;

pub use backbone::{Arch, BackboneFactory, BackboneRegistry, BackboneSpec, Encoder};
pub use data::TileStore;
pub use distill::{
    build_pairs, cosine_distillation_loss, cosine_distillation_loss_tensor, distill_train, CrossScalePair,
    DistillConfig, PairingConfig, TeacherCache,
};
pub use error::{Error, Result};
pub use model::{create_model, ForwardOutput, ModelBundle, ModelSpec, Precision};
pub use param::{Init, ParamStore};
pub use predict::{evaluate, predict_dataset};
pub use trainer::{run_crossval, train, CrossValSummary, Selection, TrainConfig, TrainHistory};
