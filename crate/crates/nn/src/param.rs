//! Named parameter storage with per-component freezing.
//!
//! Every tensor a model owns lives here under a dotted name (timm-style, e.g.
//! `encoder.blocks.0.attn.qkv.weight`) and belongs to a component such as
//! `encoder`, `head` or `text_encoder`. Parameters of frozen components are
//! handed to layers as detached tensors and never reach the optimizer.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use candle_core::{DType, Device, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    Ones,
    Const(f32),
    /// Uniform in ±1/sqrt(fan_in), the default for linear and conv layers.
    FanIn(usize),
    Normal(f64),
    /// Normal truncated to ±2 std.
    TruncNormal(f64),
}

#[derive(Debug, Clone)]
pub struct Param {
    pub var: Var,
    pub component: String,
    /// Trainable weights, as opposed to buffers such as running statistics.
    pub is_weight: bool,
    pub trainable: bool,
}

#[derive(Debug)]
pub struct ParamStore {
    device: Device,
    params: BTreeMap<String, Param>,
    frozen: BTreeSet<String>,
    rng: ChaCha8Rng,
}

fn sample(init: Init, n: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    match init {
        Init::Zeros => vec![0.0; n],
        Init::Ones => vec![1.0; n],
        Init::Const(v) => vec![v; n],
        Init::FanIn(fan_in) => {
            let b = 1.0 / (fan_in.max(1) as f64).sqrt();
            let d = Uniform::new_inclusive(-b, b).expect("finite bound");
            (0..n).map(|_| d.sample(rng) as f32).collect()
        }
        Init::Normal(std) => {
            let d = Normal::new(0.0, std).expect("finite std");
            (0..n).map(|_| d.sample(rng) as f32).collect()
        }
        Init::TruncNormal(std) => {
            let d = Normal::new(0.0, std).expect("finite std");
            (0..n)
                .map(|_| loop {
                    let v: f64 = d.sample(rng);
                    if v.abs() <= 2.0 * std {
                        break v as f32;
                    }
                })
                .collect()
        }
    }
}

impl ParamStore {
    pub fn new(device: Device, frozen_components: &[String], seed: u64) -> Self {
        ParamStore {
            device,
            params: BTreeMap::new(),
            frozen: frozen_components.iter().cloned().collect(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn is_frozen(&self, component: &str) -> bool {
        self.frozen.contains(component)
    }

    fn insert(&mut self, name: &str, shape: &[usize], init: Init, component: &str, is_weight: bool) -> Result<Tensor> {
        if self.params.contains_key(name) {
            return Err(Error::Config(format!("parameter `{name}` registered twice")));
        }
        let n: usize = shape.iter().product();
        let data = sample(init, n, &mut self.rng);
        let var = Var::from_tensor(&Tensor::from_vec(data, shape, &self.device)?)?;
        let trainable = is_weight && !self.frozen.contains(component);
        let tensor = if trainable {
            var.as_tensor().clone()
        } else {
            var.as_detached_tensor()
        };
        self.params.insert(
            name.to_string(),
            Param {
                var,
                component: component.to_string(),
                is_weight,
                trainable,
            },
        );
        Ok(tensor)
    }

    /// Registers a weight and returns the tensor layers should hold.
    pub fn weight(&mut self, name: &str, shape: &[usize], init: Init, component: &str) -> Result<Tensor> {
        self.insert(name, shape, init, component, true)
    }

    /// Registers a non-trainable buffer (e.g. batch-norm running stats).
    pub fn buffer(&mut self, name: &str, shape: &[usize], init: Init, component: &str) -> Result<Var> {
        self.insert(name, shape, init, component, false)?;
        Ok(self.params[name].var.clone())
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.params.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Param)> {
        self.params.iter()
    }

    pub fn trainable_vars(&self) -> Vec<Var> {
        self.params.values().filter(|p| p.trainable).map(|p| p.var.clone()).collect()
    }

    pub fn trainable_names(&self) -> Vec<&str> {
        self.params.iter().filter(|(_, p)| p.trainable).map(|(n, _)| n.as_str()).collect()
    }

    pub fn components(&self) -> BTreeSet<&str> {
        self.params.values().map(|p| p.component.as_str()).collect()
    }

    /// Element count over weights (buffers excluded), optionally for one component.
    pub fn count(&self, component: Option<&str>, trainable_only: bool) -> usize {
        self.params
            .values()
            .filter(|p| p.is_weight && (!trainable_only || p.trainable))
            .filter(|p| component.is_none_or(|c| p.component == c))
            .map(|p| p.var.elem_count())
            .sum()
    }

    /// SHA-256 over names, shapes and little-endian f32 values, optionally
    /// restricted to the given components.
    pub fn checksum(&self, components: Option<&[&str]>) -> Result<String> {
        let mut h = Sha256::new();
        for (name, p) in &self.params {
            if components.is_some_and(|cs| !cs.contains(&p.component.as_str())) {
                continue;
            }
            h.update(name.as_bytes());
            for d in p.var.dims() {
                h.update((*d as u64).to_le_bytes());
            }
            let values = p.var.as_tensor().flatten_all()?.to_dtype(DType::F32)?.to_vec1::<f32>()?;
            for v in values {
                h.update(v.to_le_bytes());
            }
        }
        Ok(hex::encode(h.finalize()))
    }

    /// Deep copy of every tensor, for restoring the best epoch later.
    pub fn snapshot(&self) -> Result<HashMap<String, Tensor>> {
        self.params
            .iter()
            .map(|(n, p)| Ok((n.clone(), p.var.as_tensor().copy()?)))
            .collect()
    }

    pub fn restore(&self, snapshot: &HashMap<String, Tensor>) -> Result<()> {
        for (name, p) in &self.params {
            let t = snapshot
                .get(name)
                .ok_or_else(|| Error::Consistency(format!("snapshot lacks `{name}`")))?;
            p.var.set(t)?;
        }
        Ok(())
    }

    /// Overwrites parameters from `tensors`. With `prefixes`, only parameters
    /// under one of those prefixes are required; others keep their values.
    pub fn load_tensors(&self, tensors: &HashMap<String, Tensor>, prefixes: Option<&[&str]>, origin: &Path) -> Result<usize> {
        let mut loaded = 0;
        for (name, p) in &self.params {
            let wanted = prefixes.is_none_or(|ps| ps.iter().any(|pre| name.starts_with(pre)));
            if !wanted {
                continue;
            }
            let t = tensors.get(name).ok_or_else(|| Error::Format {
                path: origin.to_path_buf(),
                message: format!("missing tensor `{name}`"),
            })?;
            if t.dims() != p.var.dims() {
                return Err(Error::Format {
                    path: origin.to_path_buf(),
                    message: format!("tensor `{name}` has shape {:?}, expected {:?}", t.dims(), p.var.dims()),
                });
            }
            p.var.set(&t.to_dtype(DType::F32)?.to_device(&self.device)?)?;
            loaded += 1;
        }
        Ok(loaded)
    }

    pub fn load_safetensors(&self, path: &Path, prefixes: Option<&[&str]>) -> Result<usize> {
        if !path.exists() {
            return Err(Error::MissingInput(path.to_path_buf()));
        }
        let tensors = candle_core::safetensors::load(path, &self.device)?;
        self.load_tensors(&tensors, prefixes, path)
    }

    pub fn save_safetensors(&self, path: &Path) -> Result<()> {
        let tensors: HashMap<String, Tensor> = self
            .params
            .iter()
            .map(|(n, p)| (n.clone(), p.var.as_tensor().clone()))
            .collect();
        candle_core::safetensors::save(&tensors, path)?;
        Ok(())
    }
}
