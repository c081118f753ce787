//! Building blocks on top of candle tensors. Parameters are created through
//! [`ParamStore`] so that naming, freezing and seeded init stay in one place.

use candle_core::{DType, Tensor, Var, D};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::param::{Init, ParamStore};

#[derive(Debug, Clone)]
pub struct Linear {
    weight: Tensor,
    bias: Option<Tensor>,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, d_in: usize, d_out: usize, bias: bool, component: &str) -> Result<Self> {
        Self::with_init(store, name, d_in, d_out, bias, Init::FanIn(d_in), component)
    }

    pub fn with_init(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_out: usize,
        bias: bool,
        init: Init,
        component: &str,
    ) -> Result<Self> {
        let weight = store.weight(&format!("{name}.weight"), &[d_out, d_in], init, component)?;
        let bias = if bias {
            let b_init = match init {
                Init::FanIn(_) => Init::FanIn(d_in),
                _ => Init::Zeros,
            };
            Some(store.weight(&format!("{name}.bias"), &[d_out], b_init, component)?)
        } else {
            None
        };
        Ok(Linear { weight, bias })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.broadcast_matmul(&self.weight.t()?)?;
        Ok(match &self.bias {
            Some(b) => y.broadcast_add(b)?,
            None => y,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    weight: Tensor,
    bias: Option<Tensor>,
    stride: usize,
    padding: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
        component: &str,
    ) -> Result<Self> {
        let fan_in = c_in * kernel * kernel;
        let weight = store.weight(&format!("{name}.weight"), &[c_out, c_in, kernel, kernel], Init::FanIn(fan_in), component)?;
        let bias = if bias {
            Some(store.weight(&format!("{name}.bias"), &[c_out], Init::FanIn(fan_in), component)?)
        } else {
            None
        };
        Ok(Conv2d {
            weight,
            bias,
            stride,
            padding,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.conv2d(&self.weight, self.padding, self.stride, 1, 1)?;
        Ok(match &self.bias {
            Some(b) => y.broadcast_add(&b.reshape((1, (), 1, 1))?)?,
            None => y,
        })
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    weight: Tensor,
    bias: Tensor,
    eps: f64,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, eps: f64, component: &str) -> Result<Self> {
        Ok(LayerNorm {
            weight: store.weight(&format!("{name}.weight"), &[dim], Init::Ones, component)?,
            bias: store.weight(&format!("{name}.bias"), &[dim], Init::Zeros, component)?,
            eps,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(candle_nn::ops::layer_norm_slow(x, &self.weight, &self.bias, self.eps as f32)?)
    }
}

/// Batch norm with running statistics held as buffers.
#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    weight: Tensor,
    bias: Tensor,
    running_mean: Var,
    running_var: Var,
    momentum: f64,
    eps: f64,
}

impl BatchNorm2d {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize, component: &str) -> Result<Self> {
        Ok(BatchNorm2d {
            weight: store.weight(&format!("{name}.weight"), &[channels], Init::Ones, component)?,
            bias: store.weight(&format!("{name}.bias"), &[channels], Init::Zeros, component)?,
            running_mean: store.buffer(&format!("{name}.running_mean"), &[channels], Init::Zeros, component)?,
            running_var: store.buffer(&format!("{name}.running_var"), &[channels], Init::Ones, component)?,
            momentum: 0.1,
            eps: 1e-5,
        })
    }

    /// Training mode normalizes with batch statistics and updates the running
    /// estimates; eval mode uses the running estimates only.
    pub fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let (mean, var) = if train {
            let (b, _, h, w) = x.dims4()?;
            let n = (b * h * w) as f64;
            let mean = x.mean_keepdim((0, 2, 3))?;
            let centered = x.broadcast_sub(&mean)?;
            let var = centered.sqr()?.mean_keepdim((0, 2, 3))?;
            let m = self.momentum;
            let unbiased = if n > 1.0 { (var.detach() * (n / (n - 1.0)))? } else { var.detach() };
            let new_mean = ((self.running_mean.as_tensor() * (1.0 - m))? + (mean.detach().flatten_all()? * m)?)?;
            let new_var = ((self.running_var.as_tensor() * (1.0 - m))? + (unbiased.flatten_all()? * m)?)?;
            self.running_mean.set(&new_mean)?;
            self.running_var.set(&new_var)?;
            (mean, var)
        } else {
            (
                self.running_mean.as_detached_tensor().reshape((1, (), 1, 1))?,
                self.running_var.as_detached_tensor().reshape((1, (), 1, 1))?,
            )
        };
        let normed = x.broadcast_sub(&mean)?.broadcast_div(&(var + self.eps)?.sqrt()?)?;
        Ok(normed
            .broadcast_mul(&self.weight.reshape((1, (), 1, 1))?)?
            .broadcast_add(&self.bias.reshape((1, (), 1, 1))?)?)
    }
}

#[derive(Debug, Clone)]
pub struct Mlp {
    fc1: Linear,
    fc2: Linear,
}

impl Mlp {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, hidden: usize, component: &str) -> Result<Self> {
        Ok(Mlp {
            fc1: Linear::new(store, &format!("{name}.fc1"), dim, hidden, true, component)?,
            fc2: Linear::new(store, &format!("{name}.fc2"), hidden, dim, true, component)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.fc2.forward(&self.fc1.forward(x)?.gelu_erf()?)
    }
}

#[derive(Debug, Clone)]
pub struct Attention {
    qkv: Linear,
    proj: Linear,
    heads: usize,
}

impl Attention {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, heads: usize, component: &str) -> Result<Self> {
        Ok(Attention {
            qkv: Linear::new(store, &format!("{name}.qkv"), dim, 3 * dim, true, component)?,
            proj: Linear::new(store, &format!("{name}.proj"), dim, dim, true, component)?,
            heads,
        })
    }

    /// `mask` is added to the attention logits (shape broadcastable to B×H×N×N).
    pub fn forward(&self, x: &Tensor, mask: Option<&Tensor>) -> Result<Tensor> {
        let (b, n, d) = x.dims3()?;
        let hd = d / self.heads;
        let qkv = self
            .qkv
            .forward(x)?
            .reshape((b, n, 3, self.heads, hd))?
            .permute((2, 0, 3, 1, 4))?;
        let q = qkv.get(0)?.contiguous()?;
        let k = qkv.get(1)?.contiguous()?;
        let v = qkv.get(2)?.contiguous()?;
        let mut att = (q.matmul(&k.t()?.contiguous()?)? * (1.0 / (hd as f64).sqrt()))?;
        if let Some(m) = mask {
            att = att.broadcast_add(m)?;
        }
        let att = candle_nn::ops::softmax(&att, D::Minus1)?;
        let out = att.matmul(&v)?.transpose(1, 2)?.reshape((b, n, d))?;
        self.proj.forward(&out)
    }
}

/// Pre-norm transformer block with optional layer scale.
#[derive(Debug, Clone)]
pub struct Block {
    norm1: LayerNorm,
    attn: Attention,
    ls1: Option<Tensor>,
    norm2: LayerNorm,
    mlp: Mlp,
    ls2: Option<Tensor>,
}

impl Block {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        heads: usize,
        mlp_hidden: usize,
        layer_scale: Option<f64>,
        eps: f64,
        component: &str,
    ) -> Result<Self> {
        let ls = |store: &mut ParamStore, which: &str| -> Result<Option<Tensor>> {
            layer_scale
                .map(|v| store.weight(&format!("{name}.{which}.gamma"), &[dim], Init::Const(v as f32), component))
                .transpose()
        };
        let norm1 = LayerNorm::new(store, &format!("{name}.norm1"), dim, eps, component)?;
        let attn = Attention::new(store, &format!("{name}.attn"), dim, heads, component)?;
        let ls1 = ls(store, "ls1")?;
        let norm2 = LayerNorm::new(store, &format!("{name}.norm2"), dim, eps, component)?;
        let mlp = Mlp::new(store, &format!("{name}.mlp"), dim, mlp_hidden, component)?;
        let ls2 = ls(store, "ls2")?;
        Ok(Block {
            norm1,
            attn,
            ls1,
            norm2,
            mlp,
            ls2,
        })
    }

    pub fn forward(&self, x: &Tensor, mask: Option<&Tensor>) -> Result<Tensor> {
        let scale = |t: Tensor, g: &Option<Tensor>| -> Result<Tensor> {
            Ok(match g {
                Some(g) => t.broadcast_mul(g)?,
                None => t,
            })
        };
        let a = scale(self.attn.forward(&self.norm1.forward(x)?, mask)?, &self.ls1)?;
        let x = (x + a)?;
        let m = scale(self.mlp.forward(&self.norm2.forward(&x)?)?, &self.ls2)?;
        Ok((x + m)?)
    }
}

/// Inverted dropout driven by a seeded generator.
pub fn dropout(x: &Tensor, p: f64, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    if p <= 0.0 {
        return Ok(x.clone());
    }
    let keep = 1.0 - p;
    let n = x.elem_count();
    let mask: Vec<f32> = (0..n)
        .map(|_| if rng.random::<f64>() < keep { (1.0 / keep) as f32 } else { 0.0 })
        .collect();
    let mask = Tensor::from_vec(mask, x.shape(), x.device())?;
    Ok((x * mask)?)
}

pub fn dropout_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Rounds activations through half precision, mimicking fp16 compute while
/// master weights stay in fp32.
pub fn half_round_trip(x: &Tensor) -> Result<Tensor> {
    Ok(x.to_dtype(DType::F16)?.to_dtype(DType::F32)?)
}
