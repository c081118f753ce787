//! Crown-centered tile extraction with polygon masking.
//!
//! A window of `tile_size` pixels is centered on the crown centroid, read from
//! each dated orthomosaic, and every pixel whose center falls outside the
//! crown (or inside one of its holes) is set to black.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use image::{imageops, RgbImage};
use rayon::prelude::*;
use serde::Deserialize;
use serde_json::Value;

use crate::catalog::{csv_err, SpeciesIndex};
use crate::error::{Error, Result};
use crate::geometry::{Affine, Point, PolygonGeometry};
use crate::raster::{normalize_crs, GeoRaster};
use crate::types::{
    AcquisitionDate, CrownPolygon, PixelWindow, SampleSource, SourceKind, TileImage, TileSample,
    ViewKind,
};

pub const DEFAULT_TILE_SIZE: u32 = 512;

/// A square read window plus the transform from window pixels to the CRS.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RasterWindow {
    pub col_off: i64,
    pub row_off: i64,
    pub width: u32,
    pub height: u32,
    pub transform: Affine,
}

impl RasterWindow {
    pub fn pixel_window(&self) -> PixelWindow {
        PixelWindow {
            col_off: self.col_off,
            row_off: self.row_off,
            width: self.width,
            height: self.height,
        }
    }
}

/// Centers a `tile_size` window on the polygon centroid.
///
/// The centroid is expressed in pixel-index coordinates (pixel centers at
/// integers) and rounded half away from zero, so that centroid pixel lands
/// at `(tile_size / 2, tile_size / 2)` in the window.
pub fn compute_window(
    polygon: &CrownPolygon,
    raster_transform: &Affine,
    raster_crs: Option<&str>,
    tile_size: u32,
) -> Result<RasterWindow> {
    if tile_size == 0 || !tile_size.is_multiple_of(2) {
        return Err(Error::Config(format!("tile_size must be even and positive, got {tile_size}")));
    }
    if let Some(crs) = raster_crs {
        if normalize_crs(crs) != normalize_crs(&polygon.crs_id) {
            return Err(Error::Config(format!(
                "tree `{}` is in {} but the raster is in {crs}",
                polygon.tree_id, polygon.crs_id
            )));
        }
    }
    let [cx, cy] = polygon.centroid();
    let [col, row] = raster_transform.inverse()?.apply(cx, cy);
    let half = (tile_size / 2) as i64;
    let col_off = (col - 0.5).round() as i64 - half;
    let row_off = (row - 0.5).round() as i64 - half;
    Ok(RasterWindow {
        col_off,
        row_off,
        width: tile_size,
        height: tile_size,
        transform: raster_transform.offset(col_off, row_off),
    })
}

/// The polygon in window pixel coordinates.
fn to_window_space(polygon: &PolygonGeometry, window: &RasterWindow) -> Result<PolygonGeometry> {
    let inv = window.transform.inverse()?;
    Ok(polygon.map_points(|[x, y]| inv.apply(x, y)))
}

/// Row-major inside/outside flags for every pixel center of the window.
pub fn inside_mask(polygon: &CrownPolygon, window: &RasterWindow) -> Result<Vec<bool>> {
    let px = to_window_space(&polygon.geometry, window)?;
    let (w, h) = (window.width as usize, window.height as usize);
    let mut mask = vec![false; w * h];
    for r in 0..h {
        let y = r as f64 + 0.5;
        let xs = px.crossings(y);
        if xs.is_empty() {
            continue;
        }
        let row = &mut mask[r * w..(r + 1) * w];
        for (c, cell) in row.iter_mut().enumerate() {
            let x = c as f64 + 0.5;
            // Number of crossings strictly right of x.
            let right = xs.len() - xs.partition_point(|&cross| cross <= x);
            *cell = right % 2 == 1;
        }
    }
    Ok(mask)
}

/// Blacks out every pixel whose center lies outside the crown.
///
/// Returns the masked image and the inside-pixel fraction of the window.
pub fn rasterize_and_mask(
    image: &RgbImage,
    polygon: &CrownPolygon,
    window: &RasterWindow,
) -> Result<(RgbImage, f64)> {
    if image.dimensions() != (window.width, window.height) {
        return Err(Error::Config(format!(
            "image is {:?} but window is {}x{}",
            image.dimensions(),
            window.width,
            window.height
        )));
    }
    let mask = inside_mask(polygon, window)?;
    let inside = mask.iter().filter(|&&m| m).count();
    if inside == 0 {
        return Err(Error::DegenerateGeometry(format!(
            "tree `{}` covers no pixel center of its window",
            polygon.tree_id
        )));
    }
    let mut out = image.clone();
    for (pixel, &keep) in out.pixels_mut().zip(&mask) {
        if !keep {
            pixel.0 = [0, 0, 0];
        }
    }
    let total = window.width as f64 * window.height as f64;
    Ok((out, inside as f64 / total))
}

/// An acquisition date with its opened orthomosaic.
#[derive(Debug, Clone)]
pub struct DatedRaster {
    pub date: AcquisitionDate,
    pub raster: GeoRaster,
}

impl DatedRaster {
    pub fn open(date: AcquisitionDate) -> Result<Self> {
        let raster = GeoRaster::open(&date.raster_uri)?;
        Ok(DatedRaster { date, raster })
    }
}

pub fn sanitize_component(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect()
}

pub fn crown_tile_path(tree_id: &str, date_id: &str, view: ViewKind) -> String {
    format!(
        "images/{}/{}_{}.png",
        sanitize_component(tree_id),
        sanitize_component(date_id),
        view
    )
}

/// One masked crown-view tile per date whose raster covers the crown.
///
/// Dates whose raster does not overlap any inside pixel are skipped with a
/// warning.
pub fn build_temporal_series(
    polygon: &CrownPolygon,
    dates: &[DatedRaster],
    tile_size: u32,
) -> Result<Vec<TileImage>> {
    let mut series = Vec::with_capacity(dates.len());
    for dated in dates {
        let raster = &dated.raster;
        let window = compute_window(polygon, raster.transform(), raster.crs(), tile_size)?;
        let mask = inside_mask(polygon, &window)?;
        let covered = mask.iter().enumerate().any(|(i, &m)| {
            let col = window.col_off + (i % tile_size as usize) as i64;
            let row = window.row_off + (i / tile_size as usize) as i64;
            m && (0..raster.width() as i64).contains(&col) && (0..raster.height() as i64).contains(&row)
        });
        if !covered {
            log::warn!(
                "tree `{}`: raster for {} does not cover the crown, skipping",
                polygon.tree_id,
                dated.date.date_id
            );
            continue;
        }
        let pixels = raster.read_window(&window.pixel_window())?;
        let (masked, mask_fraction) = rasterize_and_mask(&pixels, polygon, &window)?;
        series.push(TileImage {
            sample: TileSample {
                tree_id: polygon.tree_id.clone(),
                date_id: dated.date.date_id.clone(),
                view: ViewKind::CrownView,
                image_path: crown_tile_path(&polygon.tree_id, &dated.date.date_id, ViewKind::CrownView),
                mask_fraction,
                species_label: polygon.species_label.map(|l| l as i64),
                source: SampleSource {
                    kind: SourceKind::Raster,
                    uri: dated.date.raster_uri.clone(),
                    window: window.pixel_window(),
                    anchor: "centroid".into(),
                },
            },
            pixels: masked,
        });
    }
    if series.is_empty() {
        return Err(Error::EmptySeries(polygon.tree_id.clone()));
    }
    Ok(series)
}

/// A crown polygon as read from GeoJSON, before class indices exist.
#[derive(Debug, Clone, PartialEq)]
pub struct PolygonFeature {
    pub tree_id: String,
    pub geometry: PolygonGeometry,
    pub crs_id: String,
    pub species: Option<String>,
}

fn parse_ring(v: &Value) -> Option<Vec<Point>> {
    v.as_array()?
        .iter()
        .map(|p| {
            let p = p.as_array()?;
            Some([p.first()?.as_f64()?, p.get(1)?.as_f64()?])
        })
        .collect()
}

/// Reads a GeoJSON FeatureCollection of crown polygons.
///
/// Each feature needs a `Polygon` geometry and a `tree_id` property; the
/// optional `species` property carries the scientific name. The CRS comes
/// from the legacy `crs` member or, failing that, `crs_override`.
pub fn load_polygons(path: &Path, crs_override: Option<&str>) -> Result<Vec<PolygonFeature>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: Value = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    let bad = |msg: String| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: msg,
    };
    let file_crs = doc
        .pointer("/crs/properties/name")
        .and_then(Value::as_str)
        .map(normalize_crs);
    let crs = match (crs_override, file_crs) {
        (Some(o), _) => normalize_crs(o),
        (None, Some(f)) => f,
        (None, None) => {
            return Err(Error::Config(format!(
                "`{}` declares no CRS; set one in the tile config",
                path.display()
            )))
        }
    };
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| bad("expected a FeatureCollection".into()))?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(features.len());
    for (i, f) in features.iter().enumerate() {
        let props = f.get("properties").cloned().unwrap_or(Value::Null);
        let tree_id = match props.get("tree_id") {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            _ => return Err(bad(format!("feature {i} has no tree_id property"))),
        };
        if !seen.insert(tree_id.clone()) {
            return Err(Error::validation(tree_id, "tree_id", "appears twice in the polygon file"));
        }
        let species = match props.get("species") {
            Some(Value::String(s)) if !s.trim().is_empty() => Some(s.trim().to_string()),
            _ => None,
        };
        let geom = f.get("geometry").ok_or_else(|| bad(format!("feature {i} has no geometry")))?;
        if geom.get("type").and_then(Value::as_str) != Some("Polygon") {
            return Err(bad(format!("feature {i} (`{tree_id}`) is not a Polygon")));
        }
        let rings = geom
            .get("coordinates")
            .and_then(Value::as_array)
            .and_then(|rs| rs.iter().map(parse_ring).collect::<Option<Vec<_>>>())
            .ok_or_else(|| bad(format!("feature {i} has malformed coordinates")))?;
        let mut rings = rings.into_iter();
        let exterior = rings.next().ok_or_else(|| bad(format!("feature {i} has no rings")))?;
        let geometry = PolygonGeometry::new(exterior, rings.collect()).map_err(|e| {
            Error::validation(&tree_id, "geometry", e.to_string())
        })?;
        out.push(PolygonFeature {
            tree_id,
            geometry,
            crs_id: crs.clone(),
            species,
        });
    }
    Ok(out)
}

/// Assigns provisional class indices (see [`SpeciesIndex`]).
pub fn label_polygons(features: Vec<PolygonFeature>) -> Result<(Vec<CrownPolygon>, SpeciesIndex)> {
    let index = SpeciesIndex::from_tree_labels(features.iter().filter_map(|f| f.species.as_deref()));
    let polygons = features
        .into_iter()
        .map(|f| {
            let label = f.species.as_deref().and_then(|s| index.index_of(s));
            CrownPolygon::new(f.tree_id, f.geometry, f.crs_id, label)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((polygons, index))
}

/// A close-up photograph linked to a crown.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct CloseUpEntry {
    pub tree_id: String,
    pub date_id: String,
    pub image_path: String,
}

/// Reads the close-up listing CSV (`tree_id,date_id,image_path`).
///
/// Repeated `(tree_id, date_id)` pairs get `#2`, `#3`, ... suffixes on the
/// date so that manifest keys stay unique.
pub fn read_close_up_listing(path: &Path) -> Result<Vec<CloseUpEntry>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut entries: Vec<CloseUpEntry> = r
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| csv_err(path, e))?;
    let mut counts: BTreeMap<(String, String), usize> = BTreeMap::new();
    for e in &mut entries {
        let n = counts.entry((e.tree_id.clone(), e.date_id.clone())).or_default();
        *n += 1;
        if *n > 1 {
            e.date_id = format!("{}#{}", e.date_id, n);
        }
    }
    Ok(entries)
}

/// Loads a close-up photo, center-crops it square and resizes it to
/// `tile_size` with bicubic filtering.
pub fn ingest_close_up(
    entry: &CloseUpEntry,
    base_dir: &Path,
    tile_size: u32,
    species_label: Option<usize>,
) -> Result<TileImage> {
    let path = base_dir.join(&entry.image_path);
    let img = image::open(&path)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(&path, io),
            other => Error::Image {
                path: path.clone(),
                source: other,
            },
        })?
        .to_rgb8();
    let (w, h) = img.dimensions();
    let side = w.min(h);
    let (x0, y0) = ((w - side) / 2, (h - side) / 2);
    let crop = imageops::crop_imm(&img, x0, y0, side, side).to_image();
    let pixels = imageops::resize(&crop, tile_size, tile_size, imageops::FilterType::CatmullRom);
    Ok(TileImage {
        sample: TileSample {
            tree_id: entry.tree_id.clone(),
            date_id: entry.date_id.clone(),
            view: ViewKind::CloseUp,
            image_path: crown_tile_path(&entry.tree_id, &entry.date_id, ViewKind::CloseUp),
            mask_fraction: 1.0,
            species_label: species_label.map(|l| l as i64),
            source: SampleSource {
                kind: SourceKind::CloseUpFile,
                uri: entry.image_path.clone(),
                window: PixelWindow {
                    col_off: x0 as i64,
                    row_off: y0 as i64,
                    width: side,
                    height: side,
                },
                anchor: "center_crop".into(),
            },
        },
        pixels,
    })
}

/// Outcome of tiling a whole polygon set.
#[derive(Debug, Clone, Default)]
pub struct TilingSummary {
    pub samples: Vec<TileSample>,
    pub polygons_processed: usize,
    /// tree_id and reason for polygons that produced no tile.
    pub skipped: Vec<(String, String)>,
    /// number of dates → number of trees with that many crown-view tiles.
    pub dates_per_tree: BTreeMap<usize, usize>,
}

/// Tiles every polygon on every date, writes PNGs under `out_dir`, and
/// returns manifest records in polygon order then date order.
///
/// Work is spread over the current rayon pool; output order does not depend
/// on the number of threads.
pub fn tile_dataset(
    polygons: &[CrownPolygon],
    dates: &[DatedRaster],
    close_ups: &[CloseUpEntry],
    close_up_dir: &Path,
    tile_size: u32,
    out_dir: &Path,
) -> Result<TilingSummary> {
    let results: Vec<(usize, Result<Vec<TileImage>>)> = polygons
        .par_iter()
        .enumerate()
        .map(|(i, p)| (i, build_temporal_series(p, dates, tile_size)))
        .collect();
    let by_tree: std::collections::HashMap<&str, &CrownPolygon> =
        polygons.iter().map(|p| (p.tree_id.as_str(), p)).collect();
    let mut summary = TilingSummary::default();
    for (i, res) in results {
        let tree = &polygons[i].tree_id;
        summary.polygons_processed += 1;
        match res {
            Ok(series) => {
                *summary.dates_per_tree.entry(series.len()).or_default() += 1;
                for tile in series {
                    save_tile(&tile, out_dir)?;
                    summary.samples.push(tile.sample);
                }
            }
            Err(e @ (Error::EmptySeries(_) | Error::DegenerateGeometry(_))) => {
                log::warn!("skipping tree `{tree}`: {e}");
                summary.skipped.push((tree.clone(), e.to_string()));
            }
            Err(e) => return Err(e),
        }
    }
    let close: Vec<Result<TileImage>> = close_ups
        .par_iter()
        .map(|entry| {
            let polygon = by_tree.get(entry.tree_id.as_str()).ok_or_else(|| {
                Error::Consistency(format!("close-up `{}` names unknown tree `{}`", entry.image_path, entry.tree_id))
            })?;
            ingest_close_up(entry, close_up_dir, tile_size, polygon.species_label)
        })
        .collect();
    for tile in close {
        let tile = tile?;
        save_tile(&tile, out_dir)?;
        summary.samples.push(tile.sample);
    }
    Ok(summary)
}

fn save_tile(tile: &TileImage, out_dir: &Path) -> Result<()> {
    let path: PathBuf = out_dir.join(&tile.sample.image_path);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    tile.pixels.save(&path).map_err(|e| Error::Image { path, source: e })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::write_geotiff;

    // Power of two so pixel/CRS conversions are exact.
    const GSD: f64 = 0.0625;

    fn transform() -> Affine {
        Affine::north_up(1000.0, 2000.0, GSD)
    }

    /// Polygon whose centroid sits at the center of raster pixel (col, row).
    fn square_at_pixel(col: f64, row: f64, half_px: f64) -> CrownPolygon {
        let t = transform();
        let [cx, cy] = t.apply(col + 0.5, row + 0.5);
        let h = half_px * GSD;
        let g = PolygonGeometry::new(
            vec![[cx - h, cy - h], [cx + h, cy - h], [cx + h, cy + h], [cx - h, cy + h]],
            vec![],
        )
        .unwrap();
        CrownPolygon::new("t", g, "EPSG:32617", Some(0)).unwrap()
    }

    #[test]
    fn window_centered_on_centroid_pixel() {
        let p = square_at_pixel(1000.0, 1000.0, 20.0);
        let w = compute_window(&p, &transform(), Some("EPSG:32617"), 512).unwrap();
        assert_eq!((w.row_off, w.col_off), (744, 744));
        assert_eq!(w.row_off + 512, 1256);
    }

    #[test]
    fn window_near_origin_goes_negative() {
        let p = square_at_pixel(100.0, 100.0, 20.0);
        let w = compute_window(&p, &transform(), None, 512).unwrap();
        assert_eq!((w.row_off, w.row_off + 512), (-156, 356));
    }

    #[test]
    fn half_pixel_rounds_away_from_zero() {
        // Centroid at pixel-index coordinate 1000.5 in both axes.
        // Round-half-away gives 1001 (offset 745); round-half-even would give
        // 1000 (offset 744). The former is pinned.
        let p = square_at_pixel(1000.5, 1000.5, 20.0);
        let w = compute_window(&p, &transform(), None, 512).unwrap();
        assert_eq!((w.row_off, w.col_off), (745, 745));
        assert_eq!(1000.5f64.round_ties_even() as i64 - 256, 744);
    }

    #[test]
    fn crs_mismatch_is_config_error() {
        let p = square_at_pixel(10.0, 10.0, 4.0);
        let err = compute_window(&p, &transform(), Some("EPSG:4326"), 64).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn odd_tile_size_rejected() {
        let p = square_at_pixel(10.0, 10.0, 4.0);
        assert!(compute_window(&p, &transform(), None, 63).is_err());
    }

    #[test]
    fn full_cover_is_identity() {
        let p = square_at_pixel(100.0, 100.0, 100.0);
        let w = compute_window(&p, &transform(), None, 64).unwrap();
        let img = RgbImage::from_pixel(64, 64, image::Rgb([9, 8, 7]));
        let (masked, frac) = rasterize_and_mask(&img, &p, &w).unwrap();
        assert_eq!(frac, 1.0);
        assert_eq!(masked, img);
    }

    #[test]
    fn central_block_quarter_fraction() {
        // Window rows/cols [744, 1256); the central 256-pixel block spans
        // raster pixels [872, 1128), whose edges sit on pixel boundaries.
        let t = transform();
        let [x0, y0] = t.apply(872.0, 872.0);
        let [x1, y1] = t.apply(1128.0, 1128.0);
        let g = PolygonGeometry::new(vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]], vec![]).unwrap();
        let p = CrownPolygon::new("sq", g, "EPSG:32617", None).unwrap();
        let w = compute_window(&p, &t, None, 512).unwrap();
        assert_eq!((w.col_off, w.row_off), (744, 744));
        let img = RgbImage::from_pixel(512, 512, image::Rgb([200, 100, 50]));
        let (masked, frac) = rasterize_and_mask(&img, &p, &w).unwrap();
        assert_eq!(frac, 0.25);
        for (x, y, px) in masked.enumerate_pixels() {
            let inside = (128..384).contains(&x) && (128..384).contains(&y);
            assert_eq!(px.0 == [0, 0, 0], !inside, "pixel ({x},{y})");
        }
    }

    #[test]
    fn polygon_outside_window_is_degenerate() {
        let p = square_at_pixel(100.0, 100.0, 4.0);
        let far = square_at_pixel(5000.0, 5000.0, 4.0);
        let w = compute_window(&far, &transform(), None, 64).unwrap();
        let img = RgbImage::new(64, 64);
        assert!(matches!(rasterize_and_mask(&img, &p, &w), Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn holes_are_masked() {
        let t = transform();
        let [cx, cy] = t.apply(50.0, 50.0);
        let h = 20.0 * GSD;
        let hole_h = 5.0 * GSD;
        let g = PolygonGeometry::new(
            vec![[cx - h, cy - h], [cx + h, cy - h], [cx + h, cy + h], [cx - h, cy + h]],
            vec![vec![[cx - hole_h, cy - hole_h], [cx + hole_h, cy - hole_h], [cx + hole_h, cy + hole_h], [cx - hole_h, cy + hole_h]]],
        )
        .unwrap();
        let p = CrownPolygon::new("ring", g, "EPSG:32617", None).unwrap();
        let w = compute_window(&p, &t, None, 64).unwrap();
        let img = RgbImage::from_pixel(64, 64, image::Rgb([255, 255, 255]));
        let (masked, frac) = rasterize_and_mask(&img, &p, &w).unwrap();
        assert_eq!(frac, (40.0 * 40.0 - 10.0 * 10.0) / 4096.0);
        assert_eq!(masked.get_pixel(32, 32).0, [0, 0, 0]);
    }

    fn write_dates(dir: &Path, n: usize) -> Vec<DatedRaster> {
        (0..n)
            .map(|d| {
                let img = RgbImage::from_fn(400, 400, |x, y| image::Rgb([(x + d as u32) as u8, y as u8, 90]));
                let path = dir.join(format!("d{d}.tif"));
                write_geotiff(&path, &img, &transform(), 32617).unwrap();
                DatedRaster::open(AcquisitionDate {
                    date_id: format!("2024-{:02}-01", d + 1),
                    raster_uri: path.to_string_lossy().into_owned(),
                })
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn sixteen_dates_share_one_window() {
        let dir = tempfile::tempdir().unwrap();
        let dates = write_dates(dir.path(), 16);
        let p = square_at_pixel(200.0, 200.0, 30.0);
        let series = build_temporal_series(&p, &dates, 128).unwrap();
        assert_eq!(series.len(), 16);
        let w0 = series[0].sample.source.window;
        assert!(series.iter().all(|s| s.sample.source.window == w0));
        assert!(series.iter().all(|s| s.sample.species_label == Some(0) && s.sample.tree_id == "t"));
        // Pixels vary by date, geometry does not.
        assert_ne!(series[0].pixels, series[1].pixels);
    }

    #[test]
    fn single_date_series() {
        let dir = tempfile::tempdir().unwrap();
        let dates = write_dates(dir.path(), 1);
        let p = square_at_pixel(200.0, 200.0, 30.0);
        assert_eq!(build_temporal_series(&p, &dates, 128).unwrap().len(), 1);
    }

    #[test]
    fn polygon_outside_every_raster_is_empty_series() {
        let dir = tempfile::tempdir().unwrap();
        let dates = write_dates(dir.path(), 2);
        let p = square_at_pixel(5000.0, 5000.0, 30.0);
        assert!(matches!(build_temporal_series(&p, &dates, 128), Err(Error::EmptySeries(_))));
    }

    #[test]
    fn geojson_loading_and_labels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("crowns.geojson");
        let doc = serde_json::json!({
            "type": "FeatureCollection",
            "crs": {"type": "name", "properties": {"name": "urn:ogc:def:crs:EPSG::32617"}},
            "features": [
                {"type": "Feature", "properties": {"tree_id": "a", "species": "Dipteryx oleifera"},
                 "geometry": {"type": "Polygon", "coordinates": [[[0,0],[1,0],[1,1],[0,1],[0,0]]]}},
                {"type": "Feature", "properties": {"tree_id": 7, "species": null},
                 "geometry": {"type": "Polygon", "coordinates": [[[2,0],[3,0],[3,1],[2,0]]]}},
            ]
        });
        std::fs::write(&path, doc.to_string()).unwrap();
        let feats = load_polygons(&path, None).unwrap();
        assert_eq!(feats.len(), 2);
        assert_eq!(feats[1].tree_id, "7");
        assert_eq!(feats[0].crs_id, "EPSG:32617");
        let (polys, index) = label_polygons(feats).unwrap();
        assert_eq!(polys[0].species_label, Some(0));
        assert_eq!(polys[1].species_label, None);
        assert_eq!(index.names(), ["Dipteryx oleifera"]);
    }

    #[test]
    fn duplicate_close_up_dates_get_suffixes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        std::fs::write(&path, "tree_id,date_id,image_path\na,2024-05-01,x.png\na,2024-05-01,y.png\n").unwrap();
        let e = read_close_up_listing(&path).unwrap();
        assert_eq!(e[0].date_id, "2024-05-01");
        assert_eq!(e[1].date_id, "2024-05-01#2");
    }
}
