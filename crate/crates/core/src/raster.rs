//! GeoTIFF access: georeferencing tags and windowed 8-bit RGB reads.
//!
//! Only the chunks (strips or tiles) intersecting a window are decoded.
//! Pixels outside the raster are returned as black.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use image::RgbImage;
use tiff::decoder::{Decoder, DecodingResult, Limits};
use tiff::encoder::{colortype, TiffEncoder};
use tiff::tags::Tag;
use tiff::ColorType;

use crate::error::{Error, Result};
use crate::geometry::Affine;
use crate::types::PixelWindow;

const GEOKEY_GEOGRAPHIC_TYPE: u16 = 2048;
const GEOKEY_PROJECTED_CS_TYPE: u16 = 3072;
const GEOKEY_MODEL_TYPE: u16 = 1024;
const GEOKEY_RASTER_TYPE: u16 = 1025;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Layout {
    Strips { rows_per_strip: u32 },
    Tiles { tile_width: u32, tile_height: u32 },
}

/// An opened (header-only) georeferenced raster.
#[derive(Debug, Clone)]
pub struct GeoRaster {
    path: PathBuf,
    width: u32,
    height: u32,
    samples_per_pixel: usize,
    transform: Affine,
    crs: Option<String>,
    layout: Layout,
}

fn tiff_err(path: &Path) -> impl Fn(tiff::TiffError) -> Error + '_ {
    move |source| Error::Tiff {
        path: path.to_path_buf(),
        source,
    }
}

fn open_decoder(path: &Path) -> Result<Decoder<BufReader<File>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(Decoder::new(BufReader::new(file))
        .map_err(tiff_err(path))?
        .with_limits(Limits::unlimited()))
}

impl GeoRaster {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut dec = open_decoder(path)?;
        let (width, height) = dec.dimensions().map_err(tiff_err(path))?;
        let samples_per_pixel = match dec.colortype().map_err(tiff_err(path))? {
            ColorType::RGB(8) => 3,
            ColorType::RGBA(8) => 4,
            ColorType::Multiband {
                bit_depth: 8,
                num_samples,
            } if num_samples >= 3 => num_samples as usize,
            other => {
                return Err(Error::Format(format!(
                    "`{}` is {other:?}; need at least 3 bands of 8-bit samples",
                    path.display()
                )))
            }
        };
        let planar = dec
            .find_tag_unsigned::<u16>(Tag::PlanarConfiguration)
            .map_err(tiff_err(path))?
            .unwrap_or(1);
        if planar != 1 {
            return Err(Error::Format(format!(
                "`{}` uses planar band layout; only interleaved rasters are supported",
                path.display()
            )));
        }
        let layout = match dec.get_chunk_type() {
            tiff::decoder::ChunkType::Strip => Layout::Strips {
                rows_per_strip: dec.chunk_dimensions().1,
            },
            tiff::decoder::ChunkType::Tile => {
                let (tile_width, tile_height) = dec.chunk_dimensions();
                Layout::Tiles {
                    tile_width,
                    tile_height,
                }
            }
        };
        let transform = read_transform(&mut dec, path)?;
        let crs = read_crs(&mut dec, path)?;
        Ok(GeoRaster {
            path: path.to_path_buf(),
            width,
            height,
            samples_per_pixel,
            transform,
            crs,
            layout,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Pixel-corner to CRS transform.
    pub fn transform(&self) -> &Affine {
        &self.transform
    }

    /// `EPSG:<code>` when the GeoKey directory names one.
    pub fn crs(&self) -> Option<&str> {
        self.crs.as_deref()
    }

    /// Reads the first three bands of `window`, padding with black outside
    /// the raster.
    pub fn read_window(&self, window: &PixelWindow) -> Result<RgbImage> {
        let mut out = RgbImage::new(window.width, window.height);
        let col0 = window.col_off.max(0);
        let row0 = window.row_off.max(0);
        let col1 = (window.col_off + window.width as i64).min(self.width as i64);
        let row1 = (window.row_off + window.height as i64).min(self.height as i64);
        if col0 >= col1 || row0 >= row1 {
            return Ok(out);
        }
        let mut dec = open_decoder(&self.path)?;
        let spp = self.samples_per_pixel;
        let (chunk_w, chunk_h) = match self.layout {
            Layout::Strips { rows_per_strip } => (self.width, rows_per_strip),
            Layout::Tiles {
                tile_width,
                tile_height,
            } => (tile_width, tile_height),
        };
        let chunks_across = self.width.div_ceil(chunk_w);
        let cx0 = col0 as u32 / chunk_w;
        let cx1 = (col1 as u32 - 1) / chunk_w;
        let cy0 = row0 as u32 / chunk_h;
        let cy1 = (row1 as u32 - 1) / chunk_h;
        for cy in cy0..=cy1 {
            for cx in cx0..=cx1 {
                let index = cy * chunks_across + cx;
                let data = match dec.read_chunk(index).map_err(tiff_err(&self.path))? {
                    DecodingResult::U8(v) => v,
                    _ => return Err(Error::Format("expected 8-bit samples".into())),
                };
                let (data_w, data_h) = dec.chunk_data_dimensions(index);
                let base_col = (cx * chunk_w) as i64;
                let base_row = (cy * chunk_h) as i64;
                let r_start = row0.max(base_row);
                let r_end = row1.min(base_row + data_h as i64);
                let c_start = col0.max(base_col);
                let c_end = col1.min(base_col + data_w as i64);
                for row in r_start..r_end {
                    let src_row = (row - base_row) as usize * data_w as usize;
                    let dst_y = (row - window.row_off) as u32;
                    for col in c_start..c_end {
                        let s = (src_row + (col - base_col) as usize) * spp;
                        let dst_x = (col - window.col_off) as u32;
                        out.put_pixel(dst_x, dst_y, image::Rgb([data[s], data[s + 1], data[s + 2]]));
                    }
                }
            }
        }
        Ok(out)
    }
}

fn read_transform<R: std::io::Read + std::io::Seek>(dec: &mut Decoder<R>, path: &Path) -> Result<Affine> {
    if let Some(v) = dec.find_tag(Tag::ModelTransformationTag).map_err(tiff_err(path))? {
        let m = v.into_f64_vec().map_err(tiff_err(path))?;
        if m.len() < 16 {
            return Err(Error::Format("ModelTransformationTag needs 16 values".into()));
        }
        return Ok(Affine {
            origin_x: m[3],
            pixel_width: m[0],
            row_rotation: m[1],
            origin_y: m[7],
            col_rotation: m[4],
            pixel_height: m[5],
        });
    }
    let scale = dec
        .find_tag(Tag::ModelPixelScaleTag)
        .map_err(tiff_err(path))?
        .map(|v| v.into_f64_vec())
        .transpose()
        .map_err(tiff_err(path))?;
    let tie = dec
        .find_tag(Tag::ModelTiepointTag)
        .map_err(tiff_err(path))?
        .map(|v| v.into_f64_vec())
        .transpose()
        .map_err(tiff_err(path))?;
    match (scale, tie) {
        (Some(s), Some(t)) if s.len() >= 2 && t.len() >= 6 => {
            let (i, j, x, y) = (t[0], t[1], t[3], t[4]);
            Ok(Affine {
                origin_x: x - i * s[0],
                pixel_width: s[0],
                row_rotation: 0.0,
                origin_y: y + j * s[1],
                col_rotation: 0.0,
                pixel_height: -s[1],
            })
        }
        _ => Err(Error::Format(format!(
            "`{}` has no georeferencing tags",
            path.display()
        ))),
    }
}

fn read_crs<R: std::io::Read + std::io::Seek>(dec: &mut Decoder<R>, path: &Path) -> Result<Option<String>> {
    let Some(v) = dec.find_tag(Tag::GeoKeyDirectoryTag).map_err(tiff_err(path))? else {
        return Ok(None);
    };
    let keys = v.into_u16_vec().map_err(tiff_err(path))?;
    if keys.len() < 4 {
        return Ok(None);
    }
    let n = keys[3] as usize;
    let mut geographic = None;
    for entry in keys[4..].chunks_exact(4).take(n) {
        let (key, location, value) = (entry[0], entry[1], entry[3]);
        if location != 0 {
            continue;
        }
        match key {
            GEOKEY_PROJECTED_CS_TYPE => return Ok(Some(format!("EPSG:{value}"))),
            GEOKEY_GEOGRAPHIC_TYPE => geographic = Some(format!("EPSG:{value}")),
            _ => {}
        }
    }
    Ok(geographic)
}

/// Normalizes `urn:ogc:def:crs:EPSG::32617`, `epsg:32617` and `EPSG:32617`
/// to `EPSG:32617`. Other identifiers are returned unchanged.
pub fn normalize_crs(id: &str) -> String {
    let trimmed = id.trim();
    let upper = trimmed.to_ascii_uppercase();
    if let Some(pos) = upper.find("EPSG") {
        let code: String = upper[pos + 4..]
            .chars()
            .skip_while(|c| !c.is_ascii_digit())
            .take_while(|c| c.is_ascii_digit())
            .collect();
        if !code.is_empty() {
            return format!("EPSG:{code}");
        }
    }
    trimmed.to_string()
}

/// Writes an 8-bit RGB GeoTIFF (strip layout, projected CRS `EPSG:<epsg>`).
pub fn write_geotiff(path: &Path, image: &RgbImage, transform: &Affine, epsg: u16) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = TiffEncoder::new(std::io::BufWriter::new(file)).map_err(tiff_err(path))?;
    let mut img = enc
        .new_image::<colortype::RGB8>(image.width(), image.height())
        .map_err(tiff_err(path))?;
    img.rows_per_strip(64).map_err(tiff_err(path))?;
    let dir = img.encoder();
    if transform.row_rotation == 0.0 && transform.col_rotation == 0.0 {
        let scale = [transform.pixel_width, -transform.pixel_height, 0.0];
        let tie = [0.0, 0.0, 0.0, transform.origin_x, transform.origin_y, 0.0];
        dir.write_tag(Tag::ModelPixelScaleTag, &scale[..])
            .map_err(tiff_err(path))?;
        dir.write_tag(Tag::ModelTiepointTag, &tie[..])
            .map_err(tiff_err(path))?;
    } else {
        let t = transform;
        let m = [
            t.pixel_width, t.row_rotation, 0.0, t.origin_x,
            t.col_rotation, t.pixel_height, 0.0, t.origin_y,
            0.0, 0.0, 0.0, 0.0,
            0.0, 0.0, 0.0, 1.0,
        ];
        dir.write_tag(Tag::ModelTransformationTag, &m[..])
            .map_err(tiff_err(path))?;
    }
    let keys: [u16; 16] = [
        1, 1, 0, 3,
        GEOKEY_MODEL_TYPE, 0, 1, 1, // projected
        GEOKEY_RASTER_TYPE, 0, 1, 1, // pixel is area
        GEOKEY_PROJECTED_CS_TYPE, 0, 1, epsg,
    ];
    dir.write_tag(Tag::GeoKeyDirectoryTag, &keys[..])
        .map_err(tiff_err(path))?;
    img.write_data(image.as_raw()).map_err(tiff_err(path))
}
