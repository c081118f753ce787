#![allow(dead_code)]

use std::path::Path;

use crownscale_core::types::{PixelWindow, SourceKind};
use crownscale_core::{SampleSource, SplitMix64, TileSample, ViewKind};
use crownscale_nn::backbone::TinyConfig;
use crownscale_nn::{Arch, BackboneRegistry, BackboneSpec, ModelBundle};
use image::{Rgb, RgbImage};

pub const COLORS: [[u8; 3]; 4] = [[200, 40, 40], [40, 200, 40], [40, 40, 200], [200, 200, 40]];

pub fn tiny_spec() -> BackboneSpec {
    BackboneRegistry::default().spec("tiny_reference").unwrap()
}

/// A smaller tiny_reference for fast fixtures.
pub fn tiny_small(size: usize) -> BackboneSpec {
    tiny_spec().with_arch(Arch::Tiny(TinyConfig {
        image_size: size,
        channels: vec![8, 16, 16],
    }))
}

pub fn tiny_model(n_classes: usize, seed: u64) -> ModelBundle {
    ModelBundle::untrained(tiny_small(32), n_classes, seed).unwrap()
}

pub fn sample(tree: &str, date: &str, view: ViewKind, path: &str, label: Option<i64>) -> TileSample {
    TileSample {
        tree_id: tree.into(),
        date_id: date.into(),
        view,
        image_path: path.into(),
        mask_fraction: 1.0,
        species_label: label,
        source: SampleSource {
            kind: match view {
                ViewKind::CrownView => SourceKind::Raster,
                ViewKind::CloseUp => SourceKind::CloseUpFile,
            },
            uri: "synthetic".into(),
            window: PixelWindow {
                col_off: 0,
                row_off: 0,
                width: 40,
                height: 40,
            },
            anchor: "centroid".into(),
        },
    }
}

/// A noisy tile of the class color, with a dark circular border.
pub fn write_tile(root: &Path, rel: &str, class: usize, seed: u64) {
    let mut rng = SplitMix64::new(seed);
    let c = COLORS[class % COLORS.len()];
    let img = RgbImage::from_fn(40, 40, |x, y| {
        let (dx, dy) = (x as f64 - 19.5, y as f64 - 19.5);
        if dx * dx + dy * dy > 19.0 * 19.0 {
            return Rgb([0, 0, 0]);
        }
        let mut p = [0u8; 3];
        for k in 0..3 {
            let noise = rng.uniform(-30.0, 30.0);
            p[k] = (c[k] as f64 + noise).clamp(0.0, 255.0) as u8;
        }
        Rgb(p)
    });
    let path = root.join(rel);
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    img.save(&path).unwrap();
}

/// `trees_per_class` trees per class with `dates` crown-view tiles each.
/// Tree ids are `{prefix}{class}_{i}`.
pub fn labeled_set(
    root: &Path,
    prefix: &str,
    n_classes: usize,
    trees_per_class: usize,
    dates: usize,
    seed: u64,
) -> Vec<TileSample> {
    let mut out = Vec::new();
    for c in 0..n_classes {
        for t in 0..trees_per_class {
            let tree = format!("{prefix}{c}_{t}");
            for d in 0..dates {
                let rel = format!("crown_view/{tree}/{d}.png");
                write_tile(root, &rel, c, seed ^ ((c * 1000 + t * 10 + d) as u64));
                out.push(sample(&tree, &format!("2024-{:02}-15", d + 1), ViewKind::CrownView, &rel, Some(c as i64)));
            }
        }
    }
    out
}
