//! Training augmentation and evaluation preprocessing.
//!
//! Training chain, in this order: random resized crop (bicubic) → random
//! rotation with black fill → random horizontal flip. No photometric
//! augmentation. Both paths finish with per-channel ImageNet normalization.

use image::{imageops, DynamicImage, Rgb, Rgb32FImage, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

pub const IMAGENET_MEAN: [f32; 3] = [0.485, 0.456, 0.406];
pub const IMAGENET_STD: [f32; 3] = [0.229, 0.224, 0.225];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    Bicubic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    /// Crop area as a fraction of the source image.
    pub crop_scale_range: [f64; 2],
    /// Crop aspect ratio (width / height) range.
    pub crop_ratio_range: [f64; 2],
    pub interpolation: Interpolation,
    pub rotation_max_deg: f64,
    pub hflip_prob: f64,
    pub target_size: u32,
    pub normalize_mean: [f32; 3],
    pub normalize_std: [f32; 3],
    /// Recorded for provenance; the only supported order.
    pub order: String,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            crop_scale_range: [0.7, 1.0],
            crop_ratio_range: [3.0 / 4.0, 4.0 / 3.0],
            interpolation: Interpolation::Bicubic,
            rotation_max_deg: 30.0,
            hflip_prob: 0.5,
            target_size: 224,
            normalize_mean: IMAGENET_MEAN,
            normalize_std: IMAGENET_STD,
            order: "crop,rotate,flip".into(),
        }
    }
}

impl AugmentConfig {
    pub fn with_target_size(target_size: u32) -> Self {
        AugmentConfig {
            target_size,
            ..Default::default()
        }
    }

    /// All randomness off: the training path becomes a plain resize.
    pub fn deterministic(target_size: u32) -> Self {
        AugmentConfig {
            crop_scale_range: [1.0, 1.0],
            rotation_max_deg: 0.0,
            hflip_prob: 0.0,
            target_size,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.crop_scale_range;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(Error::Config(format!("crop_scale_range {:?} must satisfy 0 < min <= max <= 1", self.crop_scale_range)));
        }
        let [rlo, rhi] = self.crop_ratio_range;
        if !(rlo > 0.0 && rlo <= rhi) {
            return Err(Error::Config(format!("crop_ratio_range {:?} is invalid", self.crop_ratio_range)));
        }
        if !(self.rotation_max_deg >= 0.0 && self.rotation_max_deg.is_finite()) {
            return Err(Error::Config("rotation_max_deg must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.hflip_prob) {
            return Err(Error::Config("hflip_prob must be in [0, 1]".into()));
        }
        if self.normalize_std.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Config("normalize_std components must be > 0".into()));
        }
        if self.target_size == 0 {
            return Err(Error::Config("target_size must be positive".into()));
        }
        if self.order != "crop,rotate,flip" {
            return Err(Error::Config(format!("unsupported augmentation order `{}`", self.order)));
        }
        Ok(())
    }
}

/// A normalized image in channel-major (CHW) layout.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedImage {
    pub size: u32,
    pub data: Vec<f32>,
}

impl NormalizedImage {
    pub fn channel(&self, c: usize) -> &[f32] {
        let n = (self.size * self.size) as usize;
        &self.data[c * n..(c + 1) * n]
    }
}

/// Rejects anything that is not 8-bit RGB.
pub fn ensure_rgb8(image: DynamicImage) -> Result<RgbImage> {
    match image {
        DynamicImage::ImageRgb8(img) => Ok(img),
        other => Err(Error::Format(format!("expected 8-bit RGB, got {:?}", other.color()))),
    }
}

fn to_float(image: &RgbImage) -> Rgb32FImage {
    Rgb32FImage::from_fn(image.width(), image.height(), |x, y| {
        let p = image.get_pixel(x, y).0;
        Rgb([p[0] as f32 / 255.0, p[1] as f32 / 255.0, p[2] as f32 / 255.0])
    })
}

fn resize(image: &Rgb32FImage, size: u32) -> Rgb32FImage {
    imageops::resize(image, size, size, imageops::FilterType::CatmullRom)
}

/// Deterministic bicubic resize to `size`, values in [0, 1].
pub fn resize_eval(image: &RgbImage, size: u32) -> Rgb32FImage {
    resize(&to_float(image), size)
}

pub fn normalize(image: &Rgb32FImage, config: &AugmentConfig) -> NormalizedImage {
    let (w, h) = image.dimensions();
    debug_assert_eq!(w, h);
    let n = (w * h) as usize;
    let mut data = vec![0.0f32; 3 * n];
    for (i, p) in image.pixels().enumerate() {
        for c in 0..3 {
            data[c * n + i] = (p.0[c] - config.normalize_mean[c]) / config.normalize_std[c];
        }
    }
    NormalizedImage { size: w, data }
}

pub fn denormalize(image: &NormalizedImage, config: &AugmentConfig) -> Rgb32FImage {
    let n = (image.size * image.size) as usize;
    Rgb32FImage::from_fn(image.size, image.size, |x, y| {
        let i = (y * image.size + x) as usize;
        Rgb(std::array::from_fn(|c| image.data[c * n + i] * config.normalize_std[c] + config.normalize_mean[c]))
    })
}

fn check_input(image: &RgbImage) -> Result<()> {
    if image.width() < 2 || image.height() < 2 {
        return Err(Error::Config(format!(
            "image is {}x{}; need at least 2x2",
            image.width(),
            image.height()
        )));
    }
    Ok(())
}

/// Eval path: bicubic resize, scale to [0, 1], normalize.
pub fn preprocess_eval(image: &RgbImage, config: &AugmentConfig) -> Result<NormalizedImage> {
    check_input(image)?;
    Ok(normalize(&resize_eval(image, config.target_size), config))
}

/// Crop box `(left, top, width, height)` of a random resized crop.
pub fn random_resized_crop_box(
    width: u32,
    height: u32,
    scale: [f64; 2],
    ratio: [f64; 2],
    rng: &mut SplitMix64,
) -> (u32, u32, u32, u32) {
    let (w_f, h_f) = (width as f64, height as f64);
    let area = w_f * h_f;
    let (log_lo, log_hi) = (ratio[0].ln(), ratio[1].ln());
    for _ in 0..10 {
        let target_area = area * rng.uniform(scale[0], scale[1]);
        let aspect = if log_lo == log_hi { ratio[0] } else { rng.uniform(log_lo, log_hi).exp() };
        let w = (target_area * aspect).sqrt().round() as i64;
        let h = (target_area / aspect).sqrt().round() as i64;
        if w > 0 && h > 0 && w <= width as i64 && h <= height as i64 {
            let top = rng.range_inclusive(0, height as i64 - h);
            let left = rng.range_inclusive(0, width as i64 - w);
            return (left as u32, top as u32, w as u32, h as u32);
        }
    }
    // Fallback: largest centered crop inside the ratio bounds.
    let in_ratio = w_f / h_f;
    let (w, h) = if in_ratio < ratio[0] {
        (width, (w_f / ratio[0]).round() as u32)
    } else if in_ratio > ratio[1] {
        ((h_f * ratio[1]).round() as u32, height)
    } else {
        (width, height)
    };
    ((width - w) / 2, (height - h) / 2, w, h)
}

/// Rotates counter-clockwise by `degrees` about the image center with
/// bilinear sampling; samples falling outside the source read as black.
pub fn rotate(image: &Rgb32FImage, degrees: f64) -> Rgb32FImage {
    let (w, h) = image.dimensions();
    let (cx, cy) = (w as f64 / 2.0, h as f64 / 2.0);
    let (sin, cos) = degrees.to_radians().sin_cos();
    let fetch = |x: i64, y: i64| -> [f32; 3] {
        if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
            [0.0; 3]
        } else {
            image.get_pixel(x as u32, y as u32).0
        }
    };
    Rgb32FImage::from_fn(w, h, |x, y| {
        let dx = x as f64 + 0.5 - cx;
        let dy = y as f64 + 0.5 - cy;
        // Inverse map; image rows grow downward, so CCW on screen flips the sine.
        let sx = cos * dx - sin * dy + cx - 0.5;
        let sy = sin * dx + cos * dy + cy - 0.5;
        let (x0, y0) = (sx.floor(), sy.floor());
        let (fx, fy) = ((sx - x0) as f32, (sy - y0) as f32);
        let (x0, y0) = (x0 as i64, y0 as i64);
        let p00 = fetch(x0, y0);
        let p10 = fetch(x0 + 1, y0);
        let p01 = fetch(x0, y0 + 1);
        let p11 = fetch(x0 + 1, y0 + 1);
        let mut out = [0.0f32; 3];
        for c in 0..3 {
            let top = p00[c] * (1.0 - fx) + p10[c] * fx;
            let bottom = p01[c] * (1.0 - fx) + p11[c] * fx;
            out[c] = top * (1.0 - fy) + bottom * fy;
        }
        Rgb(out)
    })
}

/// Training augmentation. Output is `target_size`² RGB floats in [0, 1],
/// not yet normalized.
pub fn augment_train(
    image: &RgbImage,
    config: &AugmentConfig,
    rng: &mut SplitMix64,
) -> Result<Rgb32FImage> {
    check_input(image)?;
    let (left, top, w, h) = random_resized_crop_box(
        image.width(),
        image.height(),
        config.crop_scale_range,
        config.crop_ratio_range,
        rng,
    );
    let crop = imageops::crop_imm(image, left, top, w, h).to_image();
    let mut out = resize(&to_float(&crop), config.target_size);
    if config.rotation_max_deg > 0.0 {
        let angle = rng.uniform(-config.rotation_max_deg, config.rotation_max_deg);
        out = rotate(&out, angle);
    }
    if rng.next_f64() < config.hflip_prob {
        imageops::flip_horizontal_in_place(&mut out);
    }
    Ok(out)
}
