//! Camera calibration file.
//!
//! ```toml
//! version = 1
//! image_width = 1920
//! image_height = 1080
//! road_mask = "road.pgm"          # relative to this file
//! elevation_m = 201.0
//! positional_accuracy_m = 0.54
//!
//! [anchor]
//! lat = 34.679183
//! lon = -82.847414
//!
//! # Ground-patch corners in order top-left, top-right, bottom-right,
//! # bottom-left: where each appears in the camera image (relative pixel)
//! # and its world position.
//! [[corners]]
//! pixel = [0.30, 0.35]
//! lat = 34.67954
//! lon = -82.84785
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::geometry::{
    homography_from_correspondences, GeoBounds, GeoPosition, GeometryError, Homography, PixelPoint,
};
use crate::messages::PsmDefaults;
use crate::perception::{PerceptionError, RoadMask};

pub const CALIBRATION_VERSION: u32 = 1;

/// Top-view target of the four corner correspondences.
pub const TOP_VIEW_CORNERS: [PixelPoint; 4] = [
    PixelPoint::new(0.0, 0.0),
    PixelPoint::new(1.0, 0.0),
    PixelPoint::new(1.0, 1.0),
    PixelPoint::new(0.0, 1.0),
];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid field `{field}`: {message}")]
    Field { field: String, message: String },
    #[error(transparent)]
    Mask(#[from] PerceptionError),
}

impl ConfigError {
    pub fn field(field: impl Into<String>, message: impl ToString) -> Self {
        ConfigError::Field { field: field.into(), message: message.to_string() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub fn to_geo(&self, field: &str) -> Result<GeoPosition, ConfigError> {
        GeoPosition::new(self.lat, self.lon).map_err(|e| ConfigError::field(field, e))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CornerSpec {
    pub pixel: [f64; 2],
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationFile {
    pub version: u32,
    pub image_width: u32,
    pub image_height: u32,
    pub road_mask: PathBuf,
    #[serde(default = "default_elevation")]
    pub elevation_m: f64,
    #[serde(default = "default_accuracy")]
    pub positional_accuracy_m: f64,
    pub anchor: LatLon,
    pub corners: Vec<CornerSpec>,
}

fn default_elevation() -> f64 {
    PsmDefaults::default().elevation_m
}

fn default_accuracy() -> f64 {
    PsmDefaults::default().positional_accuracy_m
}

/// Everything the pipeline needs to turn image anchors into positions.
#[derive(Debug, Clone)]
pub struct Calibration {
    /// Raw image -> top view.
    pub homography: Homography,
    pub bounds: GeoBounds,
    pub mask: RoadMask,
    pub psm_defaults: PsmDefaults,
    pub anchor: GeoPosition,
}

impl Calibration {
    pub fn from_corners(
        image_corners: [PixelPoint; 4],
        bounds: GeoBounds,
        mask: RoadMask,
        psm_defaults: PsmDefaults,
        anchor: GeoPosition,
    ) -> Result<Self, GeometryError> {
        let homography = homography_from_correspondences(&image_corners, &TOP_VIEW_CORNERS)?;
        Ok(Self { homography, bounds, mask, psm_defaults, anchor })
    }
}

pub fn parse_toml<T: for<'de> Deserialize<'de>>(text: &str, path: &Path) -> Result<T, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError::Parse { path: path.to_path_buf(), message: e.message().to_string() })
}

impl CalibrationFile {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        parse_toml(&text, path)
    }

    /// Validates the file and loads the mask, resolving a relative mask path
    /// against `base_dir`.
    pub fn resolve(&self, base_dir: &Path) -> Result<Calibration, ConfigError> {
        if self.version != CALIBRATION_VERSION {
            return Err(ConfigError::field("version", format!("unsupported version {}", self.version)));
        }
        if self.image_width == 0 {
            return Err(ConfigError::field("image_width", "must be positive"));
        }
        if self.image_height == 0 {
            return Err(ConfigError::field("image_height", "must be positive"));
        }
        if self.corners.len() != 4 {
            return Err(ConfigError::field("corners", format!("expected 4 corners, found {}", self.corners.len())));
        }
        let mut pixels = [PixelPoint::new(0.0, 0.0); 4];
        let mut geos = [GeoPosition { lat: 0.0, lon: 0.0 }; 4];
        for (i, c) in self.corners.iter().enumerate() {
            let p = PixelPoint::new(c.pixel[0], c.pixel[1]);
            if !p.in_unit_square() {
                return Err(ConfigError::field(format!("corners[{i}].pixel"), "must lie in [0, 1]"));
            }
            pixels[i] = p;
            geos[i] = GeoPosition::new(c.lat, c.lon).map_err(|e| ConfigError::field(format!("corners[{i}]"), e))?;
        }
        let bounds = GeoBounds::new(geos[0], geos[1], geos[2], geos[3]).map_err(|e| ConfigError::field("corners", e))?;
        if !(self.positional_accuracy_m >= 0.0) {
            return Err(ConfigError::field("positional_accuracy_m", "must be non-negative"));
        }
        let anchor = self.anchor.to_geo("anchor")?;
        let mask_path = if self.road_mask.is_absolute() { self.road_mask.clone() } else { base_dir.join(&self.road_mask) };
        let mask = RoadMask::load(&mask_path)?;
        let defaults = PsmDefaults { elevation_m: self.elevation_m, positional_accuracy_m: self.positional_accuracy_m };
        Calibration::from_corners(pixels, bounds, mask, defaults, anchor)
            .map_err(|e| ConfigError::field("corners.pixel", e))
    }
}

/// Loads and resolves a calibration file in one step.
pub fn load_calibration(path: &Path) -> Result<Calibration, ConfigError> {
    let file = CalibrationFile::load(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    file.resolve(base)
}
