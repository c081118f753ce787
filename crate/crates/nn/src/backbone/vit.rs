//! Vision transformer (class-token pooling, learned position embeddings,
//! optional register tokens, layer scale, pre-norm and output projection)
//! and the CLIP-style causal text transformer.

use candle_core::{DType, Device, IndexOp, Tensor};
use serde::{Deserialize, Serialize};

use super::Encoder;
use crate::error::{Error, Result};
use crate::layers::{Block, Conv2d, LayerNorm, Linear};
use crate::param::{Init, ParamStore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VitConfig {
    pub image_size: usize,
    pub patch_size: usize,
    pub dim: usize,
    pub depth: usize,
    pub heads: usize,
    pub mlp_ratio: f64,
    /// Initial layer-scale value; `None` disables layer scale.
    pub layer_scale: Option<f64>,
    pub registers: usize,
    /// LayerNorm on the token sequence before the first block.
    pub norm_pre: bool,
    pub patch_bias: bool,
    /// Linear projection (no bias) of the pooled token.
    pub proj_dim: Option<usize>,
    pub eps: f64,
}

impl VitConfig {
    pub fn embed_dim(&self) -> usize {
        self.proj_dim.unwrap_or(self.dim)
    }

    pub fn grid(&self) -> usize {
        self.image_size / self.patch_size
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 || !self.image_size.is_multiple_of(self.patch_size) {
            return Err(Error::Config(format!(
                "image_size {} is not a multiple of patch_size {}",
                self.image_size, self.patch_size
            )));
        }
        if self.heads == 0 || !self.dim.is_multiple_of(self.heads) {
            return Err(Error::Config(format!("dim {} is not divisible by {} heads", self.dim, self.heads)));
        }
        Ok(())
    }
}

pub struct Vit {
    cfg: VitConfig,
    patch_embed: Conv2d,
    cls_token: Tensor,
    reg_token: Option<Tensor>,
    pos_embed: Tensor,
    norm_pre: Option<LayerNorm>,
    blocks: Vec<Block>,
    norm: LayerNorm,
    proj: Option<Linear>,
}

impl Vit {
    pub fn new(cfg: &VitConfig, store: &mut ParamStore, prefix: &str, component: &str) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.dim;
        let n = |s: &str| format!("{prefix}.{s}");
        let patch_embed = Conv2d::new(store, &n("patch_embed.proj"), 3, d, cfg.patch_size, cfg.patch_size, 0, cfg.patch_bias, component)?;
        let cls_token = store.weight(&n("cls_token"), &[1, 1, d], Init::TruncNormal(0.02), component)?;
        let reg_token = if cfg.registers > 0 {
            Some(store.weight(&n("reg_token"), &[1, cfg.registers, d], Init::TruncNormal(0.02), component)?)
        } else {
            None
        };
        let tokens = cfg.grid() * cfg.grid() + 1;
        let pos_embed = store.weight(&n("pos_embed"), &[1, tokens, d], Init::TruncNormal(0.02), component)?;
        let norm_pre = if cfg.norm_pre {
            Some(LayerNorm::new(store, &n("norm_pre"), d, cfg.eps, component)?)
        } else {
            None
        };
        let hidden = (d as f64 * cfg.mlp_ratio).round() as usize;
        let blocks = (0..cfg.depth)
            .map(|i| Block::new(store, &n(&format!("blocks.{i}")), d, cfg.heads, hidden, cfg.layer_scale, cfg.eps, component))
            .collect::<Result<_>>()?;
        let norm = LayerNorm::new(store, &n("norm"), d, cfg.eps, component)?;
        let proj = match cfg.proj_dim {
            Some(e) => Some(Linear::with_init(store, &n("proj"), d, e, false, Init::Normal((d as f64).powf(-0.5)), component)?),
            None => None,
        };
        Ok(Vit {
            cfg: cfg.clone(),
            patch_embed,
            cls_token,
            reg_token,
            pos_embed,
            norm_pre,
            blocks,
            norm,
            proj,
        })
    }
}

impl Encoder for Vit {
    fn forward(&self, x: &Tensor, _train: bool) -> Result<Tensor> {
        let (b, _, h, w) = x.dims4()?;
        if h != self.cfg.image_size || w != self.cfg.image_size {
            return Err(Error::Shape(format!(
                "expected {0}x{0} input, got {h}x{w}",
                self.cfg.image_size
            )));
        }
        let d = self.cfg.dim;
        let patches = self.patch_embed.forward(x)?.flatten_from(2)?.transpose(1, 2)?;
        let cls = self.cls_token.broadcast_as((b, 1, d))?;
        let mut tokens = Tensor::cat(&[&cls, &patches], 1)?.broadcast_add(&self.pos_embed)?;
        if let Some(reg) = &self.reg_token {
            let reg = reg.broadcast_as((b, self.cfg.registers, d))?;
            let rest = tokens.narrow(1, 1, tokens.dim(1)? - 1)?;
            tokens = Tensor::cat(&[&tokens.narrow(1, 0, 1)?, &reg, &rest], 1)?;
        }
        if let Some(norm) = &self.norm_pre {
            tokens = norm.forward(&tokens)?;
        }
        for block in &self.blocks {
            tokens = block.forward(&tokens, None)?;
        }
        let pooled = self.norm.forward(&tokens.i((.., 0))?)?;
        match &self.proj {
            Some(p) => p.forward(&pooled),
            None => Ok(pooled),
        }
    }

    fn embed_dim(&self) -> usize {
        self.cfg.embed_dim()
    }

    fn input_size(&self) -> usize {
        self.cfg.image_size
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextConfig {
    pub vocab_size: usize,
    pub context_length: usize,
    pub width: usize,
    pub heads: usize,
    pub layers: usize,
    pub embed_dim: usize,
}

impl Default for TextConfig {
    fn default() -> Self {
        TextConfig {
            vocab_size: 49408,
            context_length: 77,
            width: 512,
            heads: 8,
            layers: 12,
            embed_dim: 512,
        }
    }
}

/// Causal text transformer; the pooled feature is taken at the position of
/// the largest token id (the end-of-text token in CLIP vocabularies).
pub struct TextTransformer {
    cfg: TextConfig,
    token_embedding: Tensor,
    positional_embedding: Tensor,
    blocks: Vec<Block>,
    ln_final: LayerNorm,
    projection: Linear,
}

impl TextTransformer {
    pub fn new(cfg: &TextConfig, store: &mut ParamStore, prefix: &str, component: &str) -> Result<Self> {
        let w = cfg.width;
        let n = |s: &str| format!("{prefix}.{s}");
        let token_embedding = store.weight(&n("token_embedding.weight"), &[cfg.vocab_size, w], Init::Normal(0.02), component)?;
        let positional_embedding = store.weight(&n("positional_embedding"), &[cfg.context_length, w], Init::Normal(0.01), component)?;
        let blocks = (0..cfg.layers)
            .map(|i| Block::new(store, &n(&format!("blocks.{i}")), w, cfg.heads, 4 * w, None, 1e-5, component))
            .collect::<Result<_>>()?;
        let ln_final = LayerNorm::new(store, &n("ln_final"), w, 1e-5, component)?;
        let projection = Linear::with_init(store, &n("text_projection"), w, cfg.embed_dim, false, Init::Normal((w as f64).powf(-0.5)), component)?;
        Ok(TextTransformer {
            cfg: cfg.clone(),
            token_embedding,
            positional_embedding,
            blocks,
            ln_final,
            projection,
        })
    }

    /// Encodes token sequences of equal length (≤ context length).
    pub fn encode(&self, tokens: &[Vec<u32>], device: &Device) -> Result<Tensor> {
        let b = tokens.len();
        let l = tokens.first().map_or(0, Vec::len);
        if b == 0 || l == 0 || l > self.cfg.context_length || tokens.iter().any(|t| t.len() != l) {
            return Err(Error::Shape(format!(
                "token batch must be non-empty with equal lengths ≤ {}",
                self.cfg.context_length
            )));
        }
        if tokens.iter().flatten().any(|&t| t as usize >= self.cfg.vocab_size) {
            return Err(Error::Shape("token id outside the vocabulary".into()));
        }
        let flat: Vec<u32> = tokens.iter().flatten().copied().collect();
        let ids = Tensor::from_vec(flat, b * l, device)?;
        let mut x = self
            .token_embedding
            .index_select(&ids, 0)?
            .reshape((b, l, self.cfg.width))?
            .broadcast_add(&self.positional_embedding.narrow(0, 0, l)?)?;
        let mask: Vec<f32> = (0..l)
            .flat_map(|i| (0..l).map(move |j| if j > i { f32::NEG_INFINITY } else { 0.0 }))
            .collect();
        let mask = Tensor::from_vec(mask, (1, 1, l, l), device)?.to_dtype(DType::F32)?;
        for block in &self.blocks {
            x = block.forward(&x, Some(&mask))?;
        }
        let x = self.ln_final.forward(&x)?;
        let rows = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let eot = t.iter().enumerate().max_by_key(|(j, v)| (**v, std::cmp::Reverse(*j))).map_or(0, |(j, _)| j);
                x.i((i, eot))
            })
            .collect::<candle_core::Result<Vec<_>>>()?;
        self.projection.forward(&Tensor::stack(&rows, 0)?)
    }
}

/// CLIP image tower plus its text tower. Only the image tower feeds the
/// classifier; the text tower is carried along (and normally frozen).
pub struct Clip {
    pub vision: Vit,
    pub text: TextTransformer,
}

impl Encoder for Clip {
    fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        self.vision.forward(x, train)
    }

    fn embed_dim(&self) -> usize {
        self.vision.embed_dim()
    }

    fn input_size(&self) -> usize {
        self.vision.input_size()
    }

    fn encode_text(&self, tokens: &[Vec<u32>], device: &Device) -> Result<Option<Tensor>> {
        self.text.encode(tokens, device).map(Some)
    }
}
