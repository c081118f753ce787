//! Backbone registry.
//!
//! Each backbone is a [`BackboneFactory`] registered by name. A factory owns
//! the published hyperparameters for its model and knows how to build the
//! encoder for an [`Arch`]. Named pretrained backbones need user-supplied
//! weights; `tiny_reference` trains from scratch.

mod cnn;
mod vit;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use candle_core::{Device, Tensor};
use serde::{Deserialize, Serialize};

pub use cnn::{ResNet, ResNetConfig, TinyConfig, TinyReference};
pub use vit::{Clip, TextConfig, TextTransformer, Vit, VitConfig};

use crate::error::{Error, Result};
use crate::param::ParamStore;

/// Parameter name prefix of the image encoder in weight files.
pub const ENCODER_PREFIX: &str = "encoder";
/// Parameter name prefix of a CLIP text tower in weight files.
pub const TEXT_PREFIX: &str = "text";
/// Environment variable naming a directory of `<backbone>.safetensors` files.
pub const WEIGHTS_DIR_ENV: &str = "CROWNSCALE_WEIGHTS_DIR";

/// Image → pooled pre-classifier embedding.
pub trait Encoder: Send + Sync {
    /// `x` is `B×3×S×S`; returns `B×embed_dim`.
    fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor>;
    fn embed_dim(&self) -> usize;
    fn input_size(&self) -> usize;
    /// Text embeddings, for encoders that carry a text tower.
    fn encode_text(&self, _tokens: &[Vec<u32>], _device: &Device) -> Result<Option<Tensor>> {
        Ok(None)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Arch {
    Tiny(TinyConfig),
    Resnet(ResNetConfig),
    Vit(VitConfig),
    Clip { vision: VitConfig, text: TextConfig },
}

impl Arch {
    pub fn input_size(&self) -> usize {
        match self {
            Arch::Tiny(c) => c.image_size,
            Arch::Resnet(c) => c.image_size,
            Arch::Vit(c) => c.image_size,
            Arch::Clip { vision, .. } => vision.image_size,
        }
    }

    pub fn embed_dim(&self) -> usize {
        match self {
            Arch::Tiny(c) => *c.channels.last().unwrap_or(&0),
            Arch::Resnet(c) => c.embed_dim(),
            Arch::Vit(c) => c.embed_dim(),
            Arch::Clip { vision, .. } => vision.embed_dim(),
        }
    }

    /// Weight-file prefixes a pretrained checkpoint must provide.
    pub fn pretrained_prefixes(&self) -> Vec<&'static str> {
        match self {
            Arch::Clip { .. } => vec!["encoder.", "text."],
            _ => vec!["encoder."],
        }
    }

    pub fn build(&self, store: &mut ParamStore) -> Result<Box<dyn Encoder>> {
        Ok(match self {
            Arch::Tiny(c) => Box::new(TinyReference::new(c, store, ENCODER_PREFIX, "encoder")?),
            Arch::Resnet(c) => Box::new(ResNet::new(c, store, ENCODER_PREFIX, "encoder")?),
            Arch::Vit(c) => Box::new(Vit::new(c, store, ENCODER_PREFIX, "encoder")?),
            Arch::Clip { vision, text } => Box::new(Clip {
                vision: Vit::new(vision, store, ENCODER_PREFIX, "encoder")?,
                text: TextTransformer::new(text, store, TEXT_PREFIX, "text_encoder")?,
            }),
        })
    }
}

/// A backbone's architecture and fine-tuning hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackboneSpec {
    pub name: String,
    pub input_size: usize,
    pub embedding_dim: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub classifier_dropout: f64,
    pub frozen_components: Vec<String>,
    pub arch: Arch,
}

impl BackboneSpec {
    /// Same hyperparameters with a different (usually smaller) architecture,
    /// for fixtures that cannot afford the full model.
    pub fn with_arch(mut self, arch: Arch) -> Self {
        self.input_size = arch.input_size();
        self.embedding_dim = arch.embed_dim();
        self.arch = arch;
        self
    }

    /// Checks internal consistency and, for registered backbones that need
    /// pretrained weights, that the hyperparameters are the published ones.
    pub fn validate(&self, registry: &BackboneRegistry) -> Result<()> {
        let factory = registry.get(&self.name)?;
        if self.input_size != self.arch.input_size() {
            return Err(Error::Config(format!(
                "input_size {} disagrees with the architecture ({})",
                self.input_size,
                self.arch.input_size()
            )));
        }
        if self.embedding_dim != self.arch.embed_dim() {
            return Err(Error::Config(format!(
                "embedding_dim {} disagrees with the architecture ({})",
                self.embedding_dim,
                self.arch.embed_dim()
            )));
        }
        if !(0.0..1.0).contains(&self.classifier_dropout) {
            return Err(Error::Config("classifier_dropout must lie in [0, 1)".into()));
        }
        if !(self.learning_rate > 0.0) || self.weight_decay < 0.0 {
            return Err(Error::Config("learning_rate must be > 0 and weight_decay >= 0".into()));
        }
        if factory.requires_weights() {
            let d = factory.default_spec();
            let same = self.learning_rate == d.learning_rate
                && self.weight_decay == d.weight_decay
                && self.classifier_dropout == d.classifier_dropout
                && self.frozen_components == d.frozen_components;
            if !same {
                return Err(Error::Config(format!(
                    "`{}` hyperparameters differ from its published regime (lr {}, wd {}, dropout {}, frozen {:?})",
                    self.name, d.learning_rate, d.weight_decay, d.classifier_dropout, d.frozen_components
                )));
            }
        }
        Ok(())
    }
}

pub trait BackboneFactory: Send + Sync {
    fn name(&self) -> &'static str;
    fn default_spec(&self) -> BackboneSpec;
    fn requires_weights(&self) -> bool;
}

struct TinyReferenceFactory;
struct ResNet50Factory;
struct DinoV3Factory;
struct BioClip2Factory;
struct PlantNetFactory;

fn spec(name: &str, lr: f64, wd: f64, dropout: f64, frozen: &[&str], arch: Arch) -> BackboneSpec {
    BackboneSpec {
        name: name.into(),
        input_size: arch.input_size(),
        embedding_dim: arch.embed_dim(),
        learning_rate: lr,
        weight_decay: wd,
        classifier_dropout: dropout,
        frozen_components: frozen.iter().map(|s| s.to_string()).collect(),
        arch,
    }
}

fn vit_b(image_size: usize, patch_size: usize) -> VitConfig {
    VitConfig {
        image_size,
        patch_size,
        dim: 768,
        depth: 12,
        heads: 12,
        mlp_ratio: 4.0,
        layer_scale: None,
        registers: 0,
        norm_pre: false,
        patch_bias: true,
        proj_dim: None,
        eps: 1e-6,
    }
}

impl BackboneFactory for TinyReferenceFactory {
    fn name(&self) -> &'static str {
        "tiny_reference"
    }

    fn default_spec(&self) -> BackboneSpec {
        spec(self.name(), 1e-3, 1e-4, 0.0, &[], Arch::Tiny(TinyConfig::default()))
    }

    fn requires_weights(&self) -> bool {
        false
    }
}

impl BackboneFactory for ResNet50Factory {
    fn name(&self) -> &'static str {
        "resnet50"
    }

    fn default_spec(&self) -> BackboneSpec {
        spec(self.name(), 1e-4, 1e-4, 0.0, &[], Arch::Resnet(ResNetConfig::default()))
    }

    fn requires_weights(&self) -> bool {
        true
    }
}

impl BackboneFactory for DinoV3Factory {
    fn name(&self) -> &'static str {
        "dinov3"
    }

    fn default_spec(&self) -> BackboneSpec {
        let arch = VitConfig {
            layer_scale: Some(1e-5),
            registers: 4,
            ..vit_b(512, 16)
        };
        spec(self.name(), 1e-4, 1e-4, 0.1, &[], Arch::Vit(arch))
    }

    fn requires_weights(&self) -> bool {
        true
    }
}

impl BackboneFactory for BioClip2Factory {
    fn name(&self) -> &'static str {
        "bioclip2"
    }

    fn default_spec(&self) -> BackboneSpec {
        let vision = VitConfig {
            norm_pre: true,
            patch_bias: false,
            proj_dim: Some(512),
            eps: 1e-5,
            ..vit_b(224, 16)
        };
        let arch = Arch::Clip {
            vision,
            text: TextConfig::default(),
        };
        spec(self.name(), 5e-5, 0.0, 0.0, &["text_encoder"], arch)
    }

    fn requires_weights(&self) -> bool {
        true
    }
}

impl BackboneFactory for PlantNetFactory {
    fn name(&self) -> &'static str {
        "plantnet"
    }

    fn default_spec(&self) -> BackboneSpec {
        let arch = VitConfig {
            layer_scale: Some(1e-5),
            ..vit_b(518, 14)
        };
        spec(self.name(), 6e-6, 1e-4, 0.1, &[], Arch::Vit(arch))
    }

    fn requires_weights(&self) -> bool {
        true
    }
}

pub struct BackboneRegistry {
    factories: BTreeMap<&'static str, Box<dyn BackboneFactory>>,
}

impl Default for BackboneRegistry {
    fn default() -> Self {
        let mut r = BackboneRegistry {
            factories: BTreeMap::new(),
        };
        r.register(Box::new(TinyReferenceFactory));
        r.register(Box::new(ResNet50Factory));
        r.register(Box::new(DinoV3Factory));
        r.register(Box::new(BioClip2Factory));
        r.register(Box::new(PlantNetFactory));
        r
    }
}

impl BackboneRegistry {
    pub fn register(&mut self, factory: Box<dyn BackboneFactory>) {
        self.factories.insert(factory.name(), factory);
    }

    pub fn get(&self, name: &str) -> Result<&dyn BackboneFactory> {
        self.factories.get(name).map(|f| f.as_ref()).ok_or_else(|| {
            Error::Config(format!(
                "unknown backbone `{name}`; known: {}",
                self.names().join(", ")
            ))
        })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.factories.keys().copied().collect()
    }

    pub fn spec(&self, name: &str) -> Result<BackboneSpec> {
        Ok(self.get(name)?.default_spec())
    }

    /// Where pretrained weights for `name` come from: the explicit path if
    /// given, else `$CROWNSCALE_WEIGHTS_DIR/<name>.safetensors`. Errors when
    /// the backbone needs weights and none exist.
    pub fn resolve_weights(&self, name: &str, explicit: Option<&Path>) -> Result<Option<PathBuf>> {
        let factory = self.get(name)?;
        let candidate = match explicit {
            Some(p) => Some(p.to_path_buf()),
            None => std::env::var_os(WEIGHTS_DIR_ENV).map(|d| PathBuf::from(d).join(format!("{name}.safetensors"))),
        };
        match candidate {
            Some(p) if p.is_file() => Ok(Some(p)),
            Some(p) if factory.requires_weights() || explicit.is_some() => Err(Error::MissingWeights {
                backbone: name.into(),
                hint: format!("`{}` does not exist", p.display()),
            }),
            None if factory.requires_weights() => Err(Error::MissingWeights {
                backbone: name.into(),
                hint: format!("set a weights path in the config or {WEIGHTS_DIR_ENV}"),
            }),
            _ => Ok(None),
        }
    }
}
