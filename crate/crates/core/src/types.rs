use std::fmt;
use std::str::FromStr;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, PolygonGeometry};

/// Which camera geometry a sample comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewKind {
    CrownView,
    CloseUp,
}

impl ViewKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ViewKind::CrownView => "crown_view",
            ViewKind::CloseUp => "close_up",
        }
    }
}

impl fmt::Display for ViewKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ViewKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "crown_view" => Ok(ViewKind::CrownView),
            "close_up" => Ok(ViewKind::CloseUp),
            other => Err(Error::Config(format!("unknown view `{other}`"))),
        }
    }
}

/// A delineated tree crown in a projected CRS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrownPolygon {
    pub tree_id: String,
    pub geometry: PolygonGeometry,
    pub crs_id: String,
    pub species_label: Option<usize>,
}

impl CrownPolygon {
    pub fn new(
        tree_id: impl Into<String>,
        geometry: PolygonGeometry,
        crs_id: impl Into<String>,
        species_label: Option<usize>,
    ) -> Result<Self> {
        let tree_id = tree_id.into();
        if tree_id.is_empty() {
            return Err(Error::validation("", "tree_id", "must not be empty"));
        }
        Ok(CrownPolygon {
            tree_id,
            geometry,
            crs_id: crs_id.into(),
            species_label,
        })
    }

    pub fn centroid(&self) -> Point {
        self.geometry.centroid()
    }
}

/// One orthomosaic acquisition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcquisitionDate {
    pub date_id: String,
    pub raster_uri: String,
}

/// Pixel window in source-image coordinates; may extend past the raster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelWindow {
    pub col_off: i64,
    pub row_off: i64,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Raster,
    CloseUpFile,
}

/// Where a tile's pixels came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSource {
    pub kind: SourceKind,
    pub uri: String,
    pub window: PixelWindow,
    /// How the window was anchored on the crown (`centroid` for crown views,
    /// `center_crop` for close-ups).
    pub anchor: String,
}

/// Metadata for one tile: a tree on one date in one view.
///
/// This is exactly one manifest line. Pixels live in the PNG at `image_path`
/// (relative to the manifest's directory).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileSample {
    pub tree_id: String,
    pub date_id: String,
    pub view: ViewKind,
    pub image_path: String,
    pub mask_fraction: f64,
    /// Kept signed so that a negative label read from disk is reported as a
    /// validation error rather than a parse error.
    pub species_label: Option<i64>,
    pub source: SampleSource,
}

impl TileSample {
    pub fn validate(&self) -> Result<()> {
        let id = &self.tree_id;
        if id.is_empty() {
            return Err(Error::validation(id, "tree_id", "must not be empty"));
        }
        if self.date_id.is_empty() {
            return Err(Error::validation(id, "date_id", "must not be empty"));
        }
        if self.image_path.is_empty() {
            return Err(Error::validation(id, "image_path", "must not be empty"));
        }
        if !(0.0..=1.0).contains(&self.mask_fraction) {
            return Err(Error::validation(
                id,
                "mask_fraction",
                format!("{} is outside [0, 1]", self.mask_fraction),
            ));
        }
        if self.view == ViewKind::CrownView && self.mask_fraction <= 0.0 {
            return Err(Error::validation(
                id,
                "mask_fraction",
                "must be > 0 for crown_view samples",
            ));
        }
        if let Some(label) = self.species_label {
            if label < 0 {
                return Err(Error::validation(
                    id,
                    "species_label",
                    format!("{label} is not a class index"),
                ));
            }
        }
        Ok(())
    }

    pub fn label(&self) -> Option<usize> {
        self.species_label.map(|l| l as usize)
    }
}

/// A tile's metadata together with its pixels.
#[derive(Debug, Clone)]
pub struct TileImage {
    pub sample: TileSample,
    pub pixels: RgbImage,
}

/// Class-probability output for one sample (or one soft-voted tree).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub tree_id: String,
    pub date_id: String,
    pub view: ViewKind,
    pub probs: Vec<f64>,
    pub true_label: Option<usize>,
}

impl PredictionRecord {
    pub const AGGREGATE_DATE: &'static str = "aggregate";

    pub fn validate(&self, n_species: usize) -> Result<()> {
        if self.probs.len() != n_species {
            return Err(Error::validation(
                &self.tree_id,
                "probs",
                format!("has length {}, expected {n_species}", self.probs.len()),
            ));
        }
        if self.probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::validation(&self.tree_id, "probs", "has a negative or non-finite entry"));
        }
        let sum: f64 = self.probs.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::validation(
                &self.tree_id,
                "probs",
                format!("sums to {sum}, not 1"),
            ));
        }
        if let Some(label) = self.true_label {
            if label >= n_species {
                return Err(Error::validation(
                    &self.tree_id,
                    "true_label",
                    format!("{label} out of range for {n_species} species"),
                ));
            }
        }
        Ok(())
    }

    /// Highest-probability class; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.probs.iter().enumerate() {
            if *p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}
