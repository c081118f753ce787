//! Convolutional encoders: the small reference network and bottleneck ResNets.

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use super::Encoder;
use crate::error::{Error, Result};
use crate::layers::{BatchNorm2d, Conv2d};
use crate::param::ParamStore;

fn check_input(x: &Tensor, size: usize) -> Result<()> {
    let (_, c, h, w) = x.dims4()?;
    if c != 3 || h != size || w != size {
        return Err(Error::Shape(format!("expected Bx3x{size}x{size} input, got {:?}", x.dims())));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TinyConfig {
    pub image_size: usize,
    /// Output channels of each conv block; the last one is the embedding size.
    pub channels: Vec<usize>,
}

impl Default for TinyConfig {
    fn default() -> Self {
        TinyConfig {
            image_size: 64,
            channels: vec![16, 32, 64, 64],
        }
    }
}

/// `[conv3x3 → ReLU → maxpool2] × n`, then global average pooling.
pub struct TinyReference {
    cfg: TinyConfig,
    convs: Vec<Conv2d>,
}

impl TinyReference {
    pub fn new(cfg: &TinyConfig, store: &mut ParamStore, prefix: &str, component: &str) -> Result<Self> {
        if cfg.channels.is_empty() || cfg.image_size >> cfg.channels.len() == 0 {
            return Err(Error::Config("tiny_reference needs at least one block and a large enough input".into()));
        }
        let mut c_in = 3;
        let mut convs = Vec::with_capacity(cfg.channels.len());
        for (i, &c) in cfg.channels.iter().enumerate() {
            convs.push(Conv2d::new(store, &format!("{prefix}.blocks.{i}.conv"), c_in, c, 3, 1, 1, true, component)?);
            c_in = c;
        }
        Ok(TinyReference { cfg: cfg.clone(), convs })
    }
}

impl Encoder for TinyReference {
    fn forward(&self, x: &Tensor, _train: bool) -> Result<Tensor> {
        check_input(x, self.cfg.image_size)?;
        let mut h = x.clone();
        for conv in &self.convs {
            h = conv.forward(&h)?.relu()?.max_pool2d(2)?;
        }
        Ok(h.mean((2, 3))?)
    }

    fn embed_dim(&self) -> usize {
        *self.cfg.channels.last().expect("validated non-empty")
    }

    fn input_size(&self) -> usize {
        self.cfg.image_size
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResNetConfig {
    pub image_size: usize,
    /// Bottleneck blocks per stage.
    pub layers: [usize; 4],
    /// Stem width; stage widths are width·{1,2,4,8} with 4× expansion.
    pub width: usize,
}

impl Default for ResNetConfig {
    fn default() -> Self {
        ResNetConfig {
            image_size: 224,
            layers: [3, 4, 6, 3],
            width: 64,
        }
    }
}

impl ResNetConfig {
    pub fn embed_dim(&self) -> usize {
        self.width * 8 * 4
    }
}

struct Bottleneck {
    conv1: Conv2d,
    bn1: BatchNorm2d,
    conv2: Conv2d,
    bn2: BatchNorm2d,
    conv3: Conv2d,
    bn3: BatchNorm2d,
    downsample: Option<(Conv2d, BatchNorm2d)>,
}

impl Bottleneck {
    fn new(store: &mut ParamStore, name: &str, c_in: usize, planes: usize, stride: usize, component: &str) -> Result<Self> {
        let out = planes * 4;
        let n = |s: &str| format!("{name}.{s}");
        let downsample = if stride != 1 || c_in != out {
            Some((
                Conv2d::new(store, &n("downsample.0"), c_in, out, 1, stride, 0, false, component)?,
                BatchNorm2d::new(store, &n("downsample.1"), out, component)?,
            ))
        } else {
            None
        };
        Ok(Bottleneck {
            conv1: Conv2d::new(store, &n("conv1"), c_in, planes, 1, 1, 0, false, component)?,
            bn1: BatchNorm2d::new(store, &n("bn1"), planes, component)?,
            conv2: Conv2d::new(store, &n("conv2"), planes, planes, 3, stride, 1, false, component)?,
            bn2: BatchNorm2d::new(store, &n("bn2"), planes, component)?,
            conv3: Conv2d::new(store, &n("conv3"), planes, out, 1, 1, 0, false, component)?,
            bn3: BatchNorm2d::new(store, &n("bn3"), out, component)?,
            downsample,
        })
    }

    fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let h = self.bn1.forward(&self.conv1.forward(x)?, train)?.relu()?;
        let h = self.bn2.forward(&self.conv2.forward(&h)?, train)?.relu()?;
        let h = self.bn3.forward(&self.conv3.forward(&h)?, train)?;
        let shortcut = match &self.downsample {
            Some((conv, bn)) => bn.forward(&conv.forward(x)?, train)?,
            None => x.clone(),
        };
        Ok((h + shortcut)?.relu()?)
    }
}

pub struct ResNet {
    cfg: ResNetConfig,
    conv1: Conv2d,
    bn1: BatchNorm2d,
    blocks: Vec<Bottleneck>,
}

impl ResNet {
    pub fn new(cfg: &ResNetConfig, store: &mut ParamStore, prefix: &str, component: &str) -> Result<Self> {
        let w = cfg.width;
        let conv1 = Conv2d::new(store, &format!("{prefix}.conv1"), 3, w, 7, 2, 3, false, component)?;
        let bn1 = BatchNorm2d::new(store, &format!("{prefix}.bn1"), w, component)?;
        let mut blocks = Vec::new();
        let mut c_in = w;
        for (stage, &count) in cfg.layers.iter().enumerate() {
            let planes = w << stage;
            for i in 0..count {
                let stride = if i == 0 && stage > 0 { 2 } else { 1 };
                let name = format!("{prefix}.layer{}.{i}", stage + 1);
                blocks.push(Bottleneck::new(store, &name, c_in, planes, stride, component)?);
                c_in = planes * 4;
            }
        }
        Ok(ResNet {
            cfg: cfg.clone(),
            conv1,
            bn1,
            blocks,
        })
    }
}

/// 3x3 stride-2 max pool with padding 1, built from strided gathers so that
/// it has a backward pass. Inputs are post-ReLU, so zero padding is
/// equivalent to -inf padding.
fn stem_pool(x: &Tensor) -> Result<Tensor> {
    let (_, _, h, w) = x.dims4()?;
    let x = x.pad_with_zeros(2, 1, 1)?.pad_with_zeros(3, 1, 1)?;
    let (oh, ow) = ((h - 1) / 2 + 1, (w - 1) / 2 + 1);
    let index = |n: usize, offset: usize| Tensor::from_vec((0..n).map(|i| (2 * i + offset) as u32).collect(), n, x.device());
    let mut taps = Vec::with_capacity(9);
    for dy in 0..3 {
        let rows = x.index_select(&index(oh, dy)?, 2)?;
        for dx in 0..3 {
            taps.push(rows.index_select(&index(ow, dx)?, 3)?);
        }
    }
    Ok(Tensor::stack(&taps, 0)?.max(0)?)
}

impl Encoder for ResNet {
    fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        check_input(x, self.cfg.image_size)?;
        let h = self.bn1.forward(&self.conv1.forward(x)?, train)?.relu()?;
        let mut h = stem_pool(&h)?;
        for block in &self.blocks {
            h = block.forward(&h, train)?;
        }
        Ok(h.mean((2, 3))?)
    }

    fn embed_dim(&self) -> usize {
        self.cfg.embed_dim()
    }

    fn input_size(&self) -> usize {
        self.cfg.image_size
    }
}

#[cfg(test)]
mod tests {
    use candle_core::Device;

    use super::*;

    #[test]
    fn stem_pool_matches_padded_max_pool() {
        let data: Vec<f32> = (0..2 * 3 * 9 * 7).map(|i| ((i * 37) % 11) as f32).collect();
        let x = Tensor::from_vec(data, (2, 3, 9, 7), &Device::Cpu).unwrap();
        let ours = stem_pool(&x).unwrap();
        let reference = x
            .pad_with_zeros(2, 1, 1)
            .unwrap()
            .pad_with_zeros(3, 1, 1)
            .unwrap()
            .max_pool2d_with_stride(3, 2)
            .unwrap();
        assert_eq!(ours.dims(), reference.dims());
        assert_eq!(ours.flatten_all().unwrap().to_vec1::<f32>().unwrap(), reference.flatten_all().unwrap().to_vec1::<f32>().unwrap());
    }
}
