//! Turning manifest samples into input batches.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use candle_core::{Device, Tensor};
use crownscale_core::preprocess::{augment_train, ensure_rgb8, normalize, preprocess_eval, AugmentConfig};
use crownscale_core::{SplitMix64, TileSample};
use image::RgbImage;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Reads tile PNGs relative to a manifest directory, caching decoded images.
pub struct TileStore {
    root: PathBuf,
    cache: Mutex<HashMap<String, Arc<RgbImage>>>,
}

impl TileStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        TileStore {
            root: root.into(),
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn load(&self, sample: &TileSample) -> Result<Arc<RgbImage>> {
        if let Some(img) = self.cache.lock().expect("cache lock").get(&sample.image_path) {
            return Ok(img.clone());
        }
        let path = self.root.join(&sample.image_path);
        let img = image::open(&path).map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(&path, io),
            other => Error::Format {
                path: path.clone(),
                message: other.to_string(),
            },
        })?;
        let img = Arc::new(ensure_rgb8(img)?);
        self.cache
            .lock()
            .expect("cache lock")
            .insert(sample.image_path.clone(), img.clone());
        Ok(img)
    }
}

fn stack(images: Vec<Vec<f32>>, size: usize, device: &Device) -> Result<Tensor> {
    let b = images.len();
    let flat: Vec<f32> = images.into_iter().flatten().collect();
    Ok(Tensor::from_vec(flat, (b, 3, size, size), device)?)
}

/// Deterministic eval preprocessing for a batch.
pub fn eval_batch(store: &TileStore, samples: &[&TileSample], cfg: &AugmentConfig, device: &Device) -> Result<Tensor> {
    let images = samples
        .par_iter()
        .map(|s| Ok(preprocess_eval(&*store.load(s)?, cfg)?.data))
        .collect::<Result<Vec<_>>>()?;
    stack(images, cfg.target_size as usize, device)
}

/// Augmented batch. Sample `k` of the batch draws from its own stream keyed
/// by `(seed, epoch, positions[k])`, so results do not depend on threading.
pub fn train_batch(
    store: &TileStore,
    samples: &[&TileSample],
    positions: &[usize],
    cfg: &AugmentConfig,
    seed: u64,
    epoch: usize,
    device: &Device,
) -> Result<Tensor> {
    let epoch_seed = SplitMix64::derive(seed, epoch as u64).next_u64();
    let images = samples
        .par_iter()
        .zip(positions.par_iter())
        .map(|(s, &pos)| {
            let mut rng = SplitMix64::derive(epoch_seed, pos as u64);
            let img = augment_train(&*store.load(s)?, cfg, &mut rng)?;
            Ok(normalize(&img, cfg).data)
        })
        .collect::<Result<Vec<_>>>()?;
    stack(images, cfg.target_size as usize, device)
}

/// Integer labels as a `u32` tensor; errors on unlabeled or out-of-range samples.
pub fn label_tensor(samples: &[&TileSample], n_classes: usize, device: &Device) -> Result<Tensor> {
    let labels = samples
        .iter()
        .map(|s| match s.label() {
            Some(l) if l < n_classes => Ok(l as u32),
            Some(l) => Err(Error::Consistency(format!(
                "tree `{}` has label {l} but the model has {n_classes} classes",
                s.tree_id
            ))),
            None => Err(Error::Consistency(format!("sample `{}` ({}) is unlabeled", s.tree_id, s.date_id))),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Tensor::from_vec(labels, samples.len(), device)?)
}

/// Batches of indices in order.
pub fn batches(n: usize, batch_size: usize) -> impl Iterator<Item = std::ops::Range<usize>> {
    (0..n).step_by(batch_size.max(1)).map(move |s| s..(s + batch_size).min(n))
}
