//! Detector-output handling: box overlap, duplicate suppression and the
//! road-region mask.

use std::cmp::Ordering;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::geometry::PixelPoint;

#[derive(Debug, Error)]
pub enum PerceptionError {
    #[error("bounding box has zero area")]
    ZeroAreaBox,
    #[error("invalid detection: {0}")]
    InvalidDetection(String),
    #[error("cannot read road mask {path}: {source}")]
    MaskIo { path: PathBuf, source: io::Error },
    #[error("cannot decode road mask {path}: {reason}")]
    MaskFormat { path: PathBuf, reason: String },
    #[error("road mask must have nonzero dimensions and width*height bits")]
    MaskDimensions,
}

/// One detector box. The anchor is the bottom-center (foot point) in relative
/// image coordinates; the box spans `[px - w/2, px + w/2] x [py - h, py]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    /// 1 = pedestrian. Everything else is ignored when the flag is 0.
    pub class_flag: u8,
    pub confidence: f64,
    pub anchor: PixelPoint,
    pub box_h: f64,
    pub box_w: f64,
    pub frame_ts: u64,
}

impl Detection {
    pub fn pedestrian(anchor: PixelPoint, box_h: f64, box_w: f64, confidence: f64, frame_ts: u64) -> Self {
        Self { class_flag: 1, confidence, anchor, box_h, box_w, frame_ts }
    }

    pub fn is_pedestrian(&self) -> bool {
        self.class_flag == 1
    }

    /// `(x_min, y_min, x_max, y_max)`
    pub fn extent(&self) -> (f64, f64, f64, f64) {
        let half = self.box_w / 2.0;
        (self.anchor.px - half, self.anchor.py - self.box_h, self.anchor.px + half, self.anchor.py)
    }

    pub fn area(&self) -> f64 {
        self.box_h * self.box_w
    }

    pub fn validate(&self) -> Result<(), PerceptionError> {
        match self.class_flag {
            0 => return Ok(()),
            1 => {}
            other => return Err(PerceptionError::InvalidDetection(format!("class flag {other}"))),
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(PerceptionError::InvalidDetection(format!("confidence {}", self.confidence)));
        }
        if !self.anchor.in_unit_square() {
            return Err(PerceptionError::InvalidDetection(format!(
                "anchor ({}, {}) outside image",
                self.anchor.px, self.anchor.py
            )));
        }
        for (name, v) in [("height", self.box_h), ("width", self.box_w)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(PerceptionError::InvalidDetection(format!("box {name} {v}")));
            }
        }
        let (x0, y0, x1, y1) = self.extent();
        if x1.min(1.0) <= x0.max(0.0) || y1.min(1.0) <= y0.max(0.0) {
            return Err(PerceptionError::InvalidDetection("box does not overlap the image".into()));
        }
        Ok(())
    }
}

/// Intersection over union of two boxes.
pub fn iou(a: &Detection, b: &Detection) -> Result<f64, PerceptionError> {
    if a.area() <= 0.0 || b.area() <= 0.0 {
        return Err(PerceptionError::ZeroAreaBox);
    }
    let (ax0, ay0, ax1, ay1) = a.extent();
    let (bx0, by0, bx1, by1) = b.extent();
    let iw = (ax1.min(bx1) - ax0.max(bx0)).max(0.0);
    let ih = (ay1.min(by1) - ay0.max(by0)).max(0.0);
    let overlap = iw * ih;
    let union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - overlap;
    Ok((overlap / union).clamp(0.0, 1.0))
}

/// Suppression priority: higher confidence first, then smaller anchor x, then
/// smaller anchor y.
pub fn priority_order(a: &Detection, b: &Detection) -> Ordering {
    b.confidence
        .total_cmp(&a.confidence)
        .then(a.anchor.px.total_cmp(&b.anchor.px))
        .then(a.anchor.py.total_cmp(&b.anchor.py))
}

/// Greedy non-max suppression. Boxes with zero area never overlap anything
/// here; cull them beforehand with [`prefilter`].
pub fn nms(dets: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let mut sorted = dets.to_vec();
    sorted.sort_by(priority_order);
    let mut kept: Vec<Detection> = Vec::with_capacity(sorted.len());
    for det in sorted {
        let suppressed = kept
            .iter()
            .any(|k| iou(k, &det).map(|v| v > iou_threshold).unwrap_or(false));
        if !suppressed {
            kept.push(det);
        }
    }
    kept
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerceptionConfig {
    pub min_confidence: f64,
    pub iou_threshold: f64,
}

impl Default for PerceptionConfig {
    fn default() -> Self {
        Self { min_confidence: 0.25, iou_threshold: 0.5 }
    }
}

/// Keeps valid pedestrian boxes at or above the confidence cutoff.
pub fn prefilter(dets: &[Detection], cfg: &PerceptionConfig) -> Vec<Detection> {
    dets.iter()
        .filter(|d| d.is_pedestrian() && d.confidence >= cfg.min_confidence && d.validate().is_ok())
        .copied()
        .collect()
}

/// Binary road/crosswalk raster, row-major, `true` = road.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoadMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl RoadMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, PerceptionError> {
        if width == 0 || height == 0 || bits.len() != width * height {
            return Err(PerceptionError::MaskDimensions);
        }
        Ok(Self { width, height, bits })
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Result<Self, PerceptionError> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.width + col] = value;
    }

    /// Mask cell under a relative anchor, or `None` outside the image.
    pub fn cell_of(&self, p: PixelPoint) -> Option<(usize, usize)> {
        if !p.in_unit_square() {
            return None;
        }
        let col = ((p.px * self.width as f64).floor() as usize).min(self.width - 1);
        let row = ((p.py * self.height as f64).floor() as usize).min(self.height - 1);
        Some((row, col))
    }

    pub fn is_road(&self, p: PixelPoint) -> bool {
        self.cell_of(p).is_some_and(|(r, c)| self.get(r, c))
    }

    /// Reads a binary graymap; samples at or above half scale (128 of 255)
    /// are road.
    pub fn load(path: &Path) -> Result<Self, PerceptionError> {
        let bytes = fs::read(path).map_err(|source| PerceptionError::MaskIo { path: path.to_path_buf(), source })?;
        Self::from_pgm_bytes(&bytes).map_err(|reason| PerceptionError::MaskFormat { path: path.to_path_buf(), reason })
    }

    pub fn from_pgm_bytes(bytes: &[u8]) -> Result<Self, String> {
        if !bytes.starts_with(b"P5") {
            return Err("expected binary graymap (P5)".into());
        }
        let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Pnm)
            .map_err(|e| e.to_string())?
            .to_luma8();
        let (w, h) = img.dimensions();
        let bits = img.pixels().map(|p| p.0[0] >= 128).collect();
        Self::new(w as usize, h as usize, bits).map_err(|e| e.to_string())
    }

    /// Encodes as P5 with 0 = off-road and 255 = road.
    pub fn to_pgm_bytes(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.bits.iter().map(|&b| if b { 255u8 } else { 0 }));
        out
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        fs::write(path, self.to_pgm_bytes())
    }
}

/// Keeps detections whose anchor falls on a road cell, preserving order.
pub fn mask_filter(dets: &[Detection], mask: &RoadMask) -> Vec<Detection> {
    dets.iter().filter(|d| mask.is_road(d.anchor)).copied().collect()
}
