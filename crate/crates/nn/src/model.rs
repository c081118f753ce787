//! Encoder + classification head, and the checkpoint directory format:
//! `weights.safetensors`, `spec.json`, and (when known) `catalog.csv`.

use std::path::Path;

use candle_core::{Device, Tensor};
use crownscale_core::preprocess::{IMAGENET_MEAN, IMAGENET_STD};
use crownscale_core::SpeciesCatalog;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backbone::{BackboneRegistry, BackboneSpec, Encoder};
use crate::error::{Error, Result};
use crate::layers::{dropout, half_round_trip, Linear};
use crate::param::{Init, ParamStore};

pub const HEAD_KIND: &str = "dropout_linear";
pub const WEIGHTS_FILE: &str = "weights.safetensors";
pub const SPEC_FILE: &str = "spec.json";
pub const CATALOG_FILE: &str = "catalog.csv";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    #[default]
    Fp32,
    /// fp32 master weights; inputs and embeddings are rounded through fp16.
    MixedFp16,
}

/// Everything needed to rebuild a model without the original run config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub backbone: BackboneSpec,
    pub n_classes: usize,
    pub head: String,
    /// Output width of the student-side projection used for distillation.
    pub projection_dim: Option<usize>,
    pub normalize_mean: [f32; 3],
    pub normalize_std: [f32; 3],
    pub init_seed: u64,
}

#[derive(Debug)]
pub struct ForwardOutput {
    pub logits: Tensor,
    pub embeddings: Tensor,
}

pub struct ModelBundle {
    spec: ModelSpec,
    store: ParamStore,
    encoder: Box<dyn Encoder>,
    head: Linear,
    projection: Option<Linear>,
    precision: Precision,
}

impl std::fmt::Debug for ModelBundle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelBundle").field("spec", &self.spec).finish_non_exhaustive()
    }
}

/// Builds a model with a fresh head. Backbones that need pretrained weights
/// load them from `weights` or the weights directory.
pub fn create_model(
    registry: &BackboneRegistry,
    spec: BackboneSpec,
    n_classes: usize,
    weights: Option<&Path>,
    seed: u64,
) -> Result<ModelBundle> {
    spec.validate(registry)?;
    let path = registry.resolve_weights(&spec.name, weights)?;
    let model = ModelBundle::untrained(spec, n_classes, seed)?;
    if let Some(path) = path {
        let prefixes = model.spec.backbone.arch.pretrained_prefixes();
        let n = model.store.load_safetensors(&path, Some(&prefixes))?;
        log::info!("loaded {n} pretrained tensors for `{}` from {}", model.spec.backbone.name, path.display());
    }
    Ok(model)
}

impl ModelBundle {
    /// Randomly initialized model; no weights are read.
    pub fn untrained(backbone: BackboneSpec, n_classes: usize, seed: u64) -> Result<Self> {
        Self::from_spec(ModelSpec {
            backbone,
            n_classes,
            head: HEAD_KIND.into(),
            projection_dim: None,
            normalize_mean: IMAGENET_MEAN,
            normalize_std: IMAGENET_STD,
            init_seed: seed,
        })
    }

    pub fn from_spec(spec: ModelSpec) -> Result<Self> {
        if spec.n_classes == 0 {
            return Err(Error::Config("model needs at least one class".into()));
        }
        if spec.head != HEAD_KIND {
            return Err(Error::Config(format!("unsupported head `{}`", spec.head)));
        }
        let mut store = ParamStore::new(Device::Cpu, &spec.backbone.frozen_components, spec.init_seed);
        let encoder = spec.backbone.arch.build(&mut store)?;
        let d = encoder.embed_dim();
        let head = Linear::with_init(&mut store, "head", d, spec.n_classes, true, Init::TruncNormal(0.01), "head")?;
        let mut model = ModelBundle {
            spec: spec.clone(),
            store,
            encoder,
            head,
            projection: None,
            precision: Precision::Fp32,
        };
        if let Some(p) = spec.projection_dim {
            model.projection = Some(Linear::new(&mut model.store, "projection", d, p, true, "projection")?);
        }
        Ok(model)
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn device(&self) -> &Device {
        self.store.device()
    }

    pub fn input_size(&self) -> usize {
        self.encoder.input_size()
    }

    pub fn embed_dim(&self) -> usize {
        self.encoder.embed_dim()
    }

    pub fn n_classes(&self) -> usize {
        self.spec.n_classes
    }

    pub fn encoder(&self) -> &dyn Encoder {
        self.encoder.as_ref()
    }

    pub fn set_precision(&mut self, precision: Precision) {
        self.precision = precision;
    }

    fn cast(&self, x: Tensor) -> Result<Tensor> {
        match self.precision {
            Precision::Fp32 => Ok(x),
            Precision::MixedFp16 => half_round_trip(&x),
        }
    }

    /// Pooled pre-head features.
    pub fn embed(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let x = self.cast(x.clone())?;
        self.cast(self.encoder.forward(&x, train)?)
    }

    /// Head on top of precomputed embeddings. Dropout is active only when
    /// `rng` is given.
    pub fn head(&self, embeddings: &Tensor, rng: Option<&mut ChaCha8Rng>) -> Result<Tensor> {
        let h = match rng {
            Some(rng) => dropout(embeddings, self.spec.backbone.classifier_dropout, rng)?,
            None => embeddings.clone(),
        };
        self.head.forward(&h)
    }

    /// Training mode iff `rng` is given (dropout, batch statistics).
    pub fn forward(&self, x: &Tensor, rng: Option<&mut ChaCha8Rng>) -> Result<ForwardOutput> {
        let train = rng.is_some();
        let embeddings = self.embed(x, train)?;
        let logits = self.head(&embeddings, rng)?;
        Ok(ForwardOutput { logits, embeddings })
    }

    /// Adds a trainable student-side projection to `dim` unless the
    /// embedding already has that width.
    pub fn ensure_projection(&mut self, dim: usize) -> Result<()> {
        if dim == self.embed_dim() {
            if self.projection.is_some() {
                return Err(Error::Config("projection present but dimensions already match".into()));
            }
            return Ok(());
        }
        match self.spec.projection_dim {
            Some(p) if p == dim => Ok(()),
            Some(p) => Err(Error::Config(format!("model already projects to {p}, not {dim}"))),
            None => {
                let d = self.embed_dim();
                self.projection = Some(Linear::new(&mut self.store, "projection", d, dim, true, "projection")?);
                self.spec.projection_dim = Some(dim);
                Ok(())
            }
        }
    }

    /// Embeddings mapped into the teacher's space (identity without a projection).
    pub fn project(&self, embeddings: &Tensor) -> Result<Tensor> {
        match &self.projection {
            Some(p) => p.forward(embeddings),
            None => Ok(embeddings.clone()),
        }
    }

    pub fn save_checkpoint(&self, dir: &Path, catalog: Option<&SpeciesCatalog>) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.store.save_safetensors(&dir.join(WEIGHTS_FILE))?;
        let spec_path = dir.join(SPEC_FILE);
        let text = serde_json::to_string_pretty(&self.spec).expect("spec serializes");
        std::fs::write(&spec_path, text + "\n").map_err(|e| Error::io(&spec_path, e))?;
        if let Some(c) = catalog {
            if c.len() != self.n_classes() {
                return Err(Error::Consistency(format!(
                    "catalog has {} species but the head has {} outputs",
                    c.len(),
                    self.n_classes()
                )));
            }
            c.write_csv(&dir.join(CATALOG_FILE))?;
        }
        Ok(())
    }

    pub fn load_checkpoint(dir: &Path) -> Result<(Self, Option<SpeciesCatalog>)> {
        let spec_path = dir.join(SPEC_FILE);
        let text = std::fs::read_to_string(&spec_path).map_err(|e| Error::io(&spec_path, e))?;
        let spec: ModelSpec = serde_json::from_str(&text).map_err(|e| Error::Format {
            path: spec_path.clone(),
            message: e.to_string(),
        })?;
        let model = ModelBundle::from_spec(spec)?;
        model.store.load_safetensors(&dir.join(WEIGHTS_FILE), None)?;
        let catalog_path = dir.join(CATALOG_FILE);
        let catalog = if catalog_path.exists() {
            Some(SpeciesCatalog::read_csv(&catalog_path)?)
        } else {
            None
        };
        Ok((model, catalog))
    }
}
