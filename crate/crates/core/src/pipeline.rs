//! One frame through the whole chain: detections -> suppression -> road mask
//! -> top view -> positions -> tracks -> PSMs -> collision alerts.

use thiserror::Error;

use crate::config::Calibration;
use crate::geometry::pixel_to_geo;
use crate::messages::{build_psm, Bsm, CodecError, Psm};
use crate::perception::{mask_filter, nms, prefilter, Detection, PerceptionConfig};
use crate::pscw::{evaluate, Evaluation};
use crate::tracking::{FrameObservation, PedestrianTrack, Tracker, TrackerConfig, TrackingError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Tracking(#[from] TrackingError),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

/// All detections sharing one capture timestamp.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Frame {
    pub ts: u64,
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FrameStats {
    pub detections: usize,
    pub after_nms: usize,
    pub on_road: usize,
    pub localized: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutput {
    pub ts: u64,
    pub tracks: Vec<PedestrianTrack>,
    pub psms: Vec<Psm>,
    pub evaluation: Evaluation,
    pub stats: FrameStats,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PipelineConfig {
    pub perception: PerceptionConfig,
    pub tracker: TrackerConfig,
}

#[derive(Debug)]
pub struct Pipeline {
    calib: Calibration,
    perception: PerceptionConfig,
    tracker: Tracker,
}

impl Pipeline {
    pub fn new(calib: Calibration, cfg: PipelineConfig) -> Self {
        Self { calib, perception: cfg.perception, tracker: Tracker::new(cfg.tracker) }
    }

    pub fn calibration(&self) -> &Calibration {
        &self.calib
    }

    pub fn tracker(&self) -> &Tracker {
        &self.tracker
    }

    /// Perception and localization only. Anchors that leave the calibrated
    /// ground patch are dropped.
    pub fn localize(&self, frame: &Frame) -> (Vec<FrameObservation>, FrameStats) {
        let candidates = prefilter(&frame.detections, &self.perception);
        let kept = nms(&candidates, self.perception.iou_threshold);
        let on_road = mask_filter(&kept, &self.calib.mask);
        let obs: Vec<FrameObservation> = on_road
            .iter()
            .filter_map(|d| {
                let top = self.calib.homography.apply(d.anchor).ok()?;
                let position = pixel_to_geo(&self.calib.bounds, top).ok()?;
                Some(FrameObservation { position, ts: frame.ts, confidence: d.confidence })
            })
            .collect();
        let stats = FrameStats {
            detections: frame.detections.len(),
            after_nms: kept.len(),
            on_road: on_road.len(),
            localized: obs.len(),
        };
        (obs, stats)
    }

    pub fn process(&mut self, frame: &Frame, bsms: &[Bsm]) -> Result<FrameOutput, PipelineError> {
        let (obs, stats) = self.localize(frame);
        let tracks = self.tracker.step(&obs, frame.ts)?;
        let psms = tracks
            .iter()
            .map(|t| build_psm(t, frame.ts, &self.calib.psm_defaults))
            .collect::<Result<Vec<_>, _>>()?;
        let evaluation = evaluate(&psms, bsms, self.calib.anchor, frame.ts);
        Ok(FrameOutput { ts: frame.ts, tracks, psms, evaluation, stats })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::TOP_VIEW_CORNERS;
    use crate::geometry::{geo_to_pixel, haversine_distance, offset_position, GeoBounds, GeoPosition, PixelPoint};
    use crate::messages::PsmDefaults;
    use crate::perception::RoadMask;

    fn calib(mask: RoadMask) -> Calibration {
        let anchor = GeoPosition::new(34.679183, -82.847414).unwrap();
        let bounds = GeoBounds::new(
            offset_position(anchor, -20.0, 20.0),
            offset_position(anchor, 20.0, 20.0),
            offset_position(anchor, 20.0, -20.0),
            offset_position(anchor, -20.0, -20.0),
        )
        .unwrap();
        let image = [
            PixelPoint::new(0.3, 0.35),
            PixelPoint::new(0.7, 0.35),
            PixelPoint::new(0.95, 0.95),
            PixelPoint::new(0.05, 0.95),
        ];
        Calibration::from_corners(image, bounds, mask, PsmDefaults::default(), anchor).unwrap()
    }

    fn detection_at(cal: &Calibration, pos: GeoPosition, ts: u64) -> Detection {
        let top = geo_to_pixel(&cal.bounds, pos);
        let raw = cal.homography.inverse().unwrap().apply(top).unwrap();
        Detection::pedestrian(raw, 0.08, 0.03, 0.9, ts)
    }

    #[test]
    fn top_view_corners_are_exact() {
        let cal = calib(RoadMask::filled(4, 4, true).unwrap());
        let inv = cal.homography.inverse().unwrap();
        for c in TOP_VIEW_CORNERS {
            let back = cal.homography.apply(inv.apply(c).unwrap()).unwrap();
            assert!((back.px - c.px).abs() < 1e-12 && (back.py - c.py).abs() < 1e-12);
        }
    }

    #[test]
    fn walker_is_localized_and_tracked() {
        let cal = calib(RoadMask::filled(16, 16, true).unwrap());
        let mut p = Pipeline::new(cal.clone(), PipelineConfig::default());
        let start = offset_position(cal.anchor, 3.0, -4.0);
        for k in 0..5u64 {
            let truth = offset_position(start, 0.0, 0.12 * k as f64);
            let frame = Frame { ts: 1_000 + 100 * k, detections: vec![detection_at(&cal, truth, 0)] };
            let out = p.process(&frame, &[]).unwrap();
            assert_eq!(out.psms.len(), 1);
            assert!(haversine_distance(out.tracks[0].position, truth) < 1e-6);
            assert!(haversine_distance(out.psms[0].position(), truth) < 0.02);
            if k > 0 {
                assert!((out.tracks[0].velocity_mps - 1.2).abs() < 1e-6);
                assert_eq!(out.psms[0].cardinal.abbrev(), "SN");
            }
        }
    }

    #[test]
    fn off_road_and_duplicates_are_dropped() {
        let mut mask = RoadMask::filled(4, 4, true).unwrap();
        for c in 0..4 {
            mask.set(0, c, false);
        }
        let cal = calib(mask);
        let p = Pipeline::new(cal.clone(), PipelineConfig::default());
        let on_road = detection_at(&cal, cal.anchor, 0);
        let dup = Detection { confidence: 0.6, ..on_road };
        let sky = Detection::pedestrian(PixelPoint::new(0.5, 0.1), 0.05, 0.02, 0.9, 0);
        let (obs, stats) = p.localize(&Frame { ts: 0, detections: vec![on_road, dup, sky] });
        assert_eq!(stats, FrameStats { detections: 3, after_nms: 2, on_road: 1, localized: 1 });
        assert_eq!(obs.len(), 1);
    }
}
