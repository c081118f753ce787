//! Seeded synthetic scenes: per-date orthomosaic GeoTIFFs, a GeoJSON crown
//! file, and close-up photos with a listing CSV. Each species gets its own
//! canopy color and texture so that small models can separate them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::geometry::{Affine, Point, PolygonGeometry};
use crate::raster::write_geotiff;
use crate::rng::SplitMix64;
use crate::types::AcquisitionDate;

const NAMES: [&str; 12] = [
    "Anacardium excelsum",
    "Ceiba pentandra",
    "Dipteryx oleifera",
    "Hura crepitans",
    "Tabebuia rosea",
    "Cavanillesia platanifolia",
    "Ficus insipida",
    "Jacaranda copaia",
    "Luehea seemannii",
    "Spondias mombin",
    "Terminalia amazonia",
    "Virola surinamensis",
];

const PALETTE: [[u8; 3]; 6] = [
    [46, 139, 52],
    [178, 170, 58],
    [34, 86, 120],
    [142, 64, 118],
    [204, 112, 44],
    [96, 200, 170],
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    pub n_species: usize,
    pub trees_per_species: usize,
    /// Extra trees without a species label.
    pub unlabeled_trees: usize,
    pub n_dates: usize,
    /// Crown tiles are cut at this size; grid cells are a bit larger.
    pub tile_size: u32,
    pub gsd: f64,
    pub epsg: u16,
    pub close_ups_per_tree: usize,
    pub close_up_width: u32,
    pub close_up_height: u32,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            n_species: 3,
            trees_per_species: 8,
            unlabeled_trees: 0,
            n_dates: 2,
            tile_size: 128,
            gsd: 0.04,
            epsg: 32617,
            close_ups_per_tree: 1,
            close_up_width: 96,
            close_up_height: 72,
            seed: 7,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_species == 0 || self.trees_per_species == 0 {
            return Err(Error::Config("scene needs at least one species and one tree per species".into()));
        }
        if self.n_dates == 0 || self.n_dates > 12 {
            return Err(Error::Config("n_dates must lie in 1..=12".into()));
        }
        if self.tile_size < 16 || !self.tile_size.is_multiple_of(2) {
            return Err(Error::Config("tile_size must be even and at least 16".into()));
        }
        if !(self.gsd > 0.0) {
            return Err(Error::Config("gsd must be positive".into()));
        }
        if self.close_up_width < 8 || self.close_up_height < 8 {
            return Err(Error::Config("close-up images must be at least 8x8".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSummary {
    pub dates: Vec<AcquisitionDate>,
    pub polygons: PathBuf,
    pub close_up_listing: PathBuf,
    pub close_up_dir: PathBuf,
    pub species: Vec<String>,
    /// tree_id → species name (None for unlabeled trees).
    pub trees: BTreeMap<String, Option<String>>,
}

pub fn species_name(i: usize) -> String {
    let base = NAMES[i % NAMES.len()];
    if i < NAMES.len() {
        base.to_string()
    } else {
        format!("{base} var{}", i / NAMES.len())
    }
}

struct Tree {
    id: String,
    species: Option<usize>,
    center_px: [f64; 2],
    ring_px: Vec<Point>,
}

fn crown_ring(center: [f64; 2], radius: f64, rng: &mut SplitMix64) -> Vec<Point> {
    let k = rng.range_inclusive(7, 11) as usize;
    let step = std::f64::consts::TAU / k as f64;
    (0..k)
        .map(|i| {
            let a = (i as f64 + rng.uniform(-0.3, 0.3)) * step;
            let r = radius * rng.uniform(0.75, 1.0);
            [center[0] + r * a.cos(), center[1] + r * a.sin()]
        })
        .collect()
}

fn clamp_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Canopy color at local offset `(dx, dy)` from the crown center.
fn canopy(species: Option<usize>, dx: f64, dy: f64, brightness: f64, rng: &mut SplitMix64) -> Rgb<u8> {
    let (base, texture) = match species {
        Some(s) => {
            let base = PALETTE[s % PALETTE.len()];
            let t = match s % 3 {
                0 => 28.0 * ((dy / 4.0).floor() as i64 % 2) as f64,
                1 => {
                    let (u, v) = (dx.rem_euclid(10.0) - 5.0, dy.rem_euclid(10.0) - 5.0);
                    if u * u + v * v < 9.0 { 35.0 } else { 0.0 }
                }
                _ => 30.0 * ((((dx / 6.0).floor() + (dy / 6.0).floor()) as i64).rem_euclid(2)) as f64,
            };
            (base, t)
        }
        None => ([80, 120, 70], 0.0),
    };
    let noise = rng.uniform(-12.0, 12.0);
    Rgb([
        clamp_u8(base[0] as f64 * brightness + texture + noise),
        clamp_u8(base[1] as f64 * brightness + texture + noise),
        clamp_u8(base[2] as f64 * brightness + texture + noise),
    ])
}

fn soil(rng: &mut SplitMix64) -> Rgb<u8> {
    let n = rng.uniform(-10.0, 10.0);
    Rgb([clamp_u8(120.0 + n), clamp_u8(96.0 + n), clamp_u8(70.0 + n)])
}

/// Writes a scene under `out_dir` and returns where everything went.
pub fn generate_scene(cfg: &SceneConfig, out_dir: &Path) -> Result<SceneSummary> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut rng = SplitMix64::derive(cfg.seed, 0);

    let n_trees = cfg.n_species * cfg.trees_per_species + cfg.unlabeled_trees;
    let cols = (n_trees as f64).sqrt().ceil() as usize;
    let rows = n_trees.div_ceil(cols);
    let cell = cfg.tile_size as f64 * 1.25;
    let width = (cols as f64 * cell).ceil() as u32;
    let height = (rows as f64 * cell).ceil() as u32;
    let radius = cfg.tile_size as f64 * 0.38;

    let mut species_of: Vec<Option<usize>> = (0..cfg.n_species)
        .flat_map(|s| std::iter::repeat_n(Some(s), cfg.trees_per_species))
        .chain(std::iter::repeat_n(None, cfg.unlabeled_trees))
        .collect();
    rng.shuffle(&mut species_of);
    let trees: Vec<Tree> = species_of
        .into_iter()
        .enumerate()
        .map(|(i, species)| {
            let (r, c) = (i / cols, i % cols);
            let center = [(c as f64 + 0.5) * cell, (r as f64 + 0.5) * cell];
            Tree {
                id: format!("tree{:03}", i + 1),
                species,
                center_px: center,
                ring_px: crown_ring(center, radius, &mut rng),
            }
        })
        .collect();

    let transform = Affine::north_up(500_000.0, 1_000_000.0, cfg.gsd);
    let to_world = |p: Point| transform.apply(p[0], p[1]);

    // Crown polygons in world coordinates.
    let mut features = Vec::with_capacity(trees.len());
    let mut tree_map = BTreeMap::new();
    for t in &trees {
        let ring: Vec<Point> = t.ring_px.iter().map(|&p| to_world(p)).collect();
        let mut closed = ring.clone();
        closed.push(ring[0]);
        let species = t.species.map(species_name);
        let mut props = json!({ "tree_id": t.id });
        if let Some(s) = &species {
            props["species"] = json!(s);
        }
        features.push(json!({
            "type": "Feature",
            "properties": props,
            "geometry": { "type": "Polygon", "coordinates": [closed] },
        }));
        tree_map.insert(t.id.clone(), species);
    }
    let geojson = json!({
        "type": "FeatureCollection",
        "crs": { "type": "name", "properties": { "name": format!("EPSG:{}", cfg.epsg) } },
        "features": features,
    });
    let polygons = out_dir.join("crowns.geojson");
    std::fs::write(&polygons, serde_json::to_string_pretty(&geojson).expect("json serializes"))
        .map_err(|e| Error::io(&polygons, e))?;

    let pixel_polys: Vec<PolygonGeometry> = trees
        .iter()
        .map(|t| PolygonGeometry::new(t.ring_px.clone(), vec![]))
        .collect::<Result<_>>()?;

    let mut dates = Vec::with_capacity(cfg.n_dates);
    for d in 0..cfg.n_dates {
        let mut drng = SplitMix64::derive(cfg.seed, 1 + d as u64);
        let brightness = 0.9 + 0.2 * drng.next_f64();
        let mut img = RgbImage::from_fn(width, height, |_, _| soil(&mut drng));
        for (t, poly) in trees.iter().zip(&pixel_polys) {
            let (lo, hi) = poly.bounds();
            let x0 = lo[0].floor().max(0.0) as u32;
            let y0 = lo[1].floor().max(0.0) as u32;
            let x1 = (hi[0].ceil() as u32).min(width);
            let y1 = (hi[1].ceil() as u32).min(height);
            for y in y0..y1 {
                for x in x0..x1 {
                    let p = [x as f64 + 0.5, y as f64 + 0.5];
                    if poly.contains(p) {
                        let c = canopy(t.species, p[0] - t.center_px[0], p[1] - t.center_px[1], brightness, &mut drng);
                        img.put_pixel(x, y, c);
                    }
                }
            }
        }
        let date_id = format!("2024-{:02}-15", d + 1);
        let path = out_dir.join(format!("ortho_{date_id}.tif"));
        write_geotiff(&path, &img, &transform, cfg.epsg)?;
        dates.push(AcquisitionDate {
            date_id,
            raster_uri: path.to_string_lossy().into_owned(),
        });
    }

    let close_up_dir = out_dir.join("close_ups");
    std::fs::create_dir_all(&close_up_dir).map_err(|e| Error::io(&close_up_dir, e))?;
    let listing = out_dir.join("close_ups.csv");
    let mut w = csv::Writer::from_path(&listing).map_err(|e| crate::catalog::csv_err(&listing, e))?;
    w.write_record(["tree_id", "date_id", "image_path"])
        .map_err(|e| crate::catalog::csv_err(&listing, e))?;
    for (i, t) in trees.iter().enumerate() {
        for k in 0..cfg.close_ups_per_tree {
            let mut crng = SplitMix64::derive(cfg.seed, 1000 + (i * 16 + k) as u64);
            let (w_px, h_px) = (cfg.close_up_width, cfg.close_up_height);
            let img = RgbImage::from_fn(w_px, h_px, |x, y| {
                // Close-ups show the same texture at a finer scale.
                canopy(t.species, x as f64 * 0.5, y as f64 * 0.5, 1.0, &mut crng)
            });
            let name = format!("{}_{k}.png", t.id);
            let path = close_up_dir.join(&name);
            img.save(&path).map_err(|e| Error::Image {
                path: path.clone(),
                source: e,
            })?;
            w.write_record([t.id.as_str(), "2024-06-01", name.as_str()])
                .map_err(|e| crate::catalog::csv_err(&listing, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(&listing, e))?;

    Ok(SceneSummary {
        dates,
        polygons,
        close_up_listing: listing,
        close_up_dir,
        species: (0..cfg.n_species).map(species_name).collect(),
        trees: tree_map,
    })
}
