//! Frame-to-frame identity for localized pedestrians.
//!
//! Matching is greedy on ground distance, globally nearest pair first, with a
//! hard gate. Each matched track gets a fresh two-fix velocity and heading.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::{classify_heading, haversine_distance, heading, velocity, CardinalHeading, GeoPosition};

const MSG_COUNT_MODULUS: u8 = 128;
const STILL_EPS_M: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TrackingError {
    #[error("frame timestamp {ts} is not after the previous step at {previous}")]
    NonMonotonicTimestamp { ts: u64, previous: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PedestrianTrack {
    pub temp_id: u32,
    pub position: GeoPosition,
    pub last_ts: u64,
    pub velocity_mps: f64,
    /// East-axis angle, see [`crate::geometry::heading`].
    pub heading_rad: f64,
    pub cardinal: CardinalHeading,
    pub misses: u32,
    pub msg_count: u8,
}

/// One localized detection in one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameObservation {
    pub position: GeoPosition,
    pub ts: u64,
    pub confidence: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Association {
    /// `(track index, observation index)`
    pub matches: Vec<(usize, usize)>,
    pub unmatched_tracks: Vec<usize>,
    pub unmatched_obs: Vec<usize>,
}

/// Greedy nearest-first assignment within `gate_m`.
pub fn associate(tracks: &[PedestrianTrack], obs: &[FrameObservation], gate_m: f64) -> Association {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (ti, t) in tracks.iter().enumerate() {
        for (oi, o) in obs.iter().enumerate() {
            let d = haversine_distance(t.position, o.position);
            if d <= gate_m {
                pairs.push((d, ti, oi));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut track_used = vec![false; tracks.len()];
    let mut obs_used = vec![false; obs.len()];
    let mut out = Association::default();
    for (_, ti, oi) in pairs {
        if track_used[ti] || obs_used[oi] {
            continue;
        }
        track_used[ti] = true;
        obs_used[oi] = true;
        out.matches.push((ti, oi));
    }
    out.unmatched_tracks = (0..tracks.len()).filter(|&i| !track_used[i]).collect();
    out.unmatched_obs = (0..obs.len()).filter(|&i| !obs_used[i]).collect();
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerConfig {
    pub gate_m: f64,
    /// A track is retired once it has gone unmatched more than this many steps.
    pub max_misses: u32,
    /// Exponential smoothing weight on the newest speed sample; `None` keeps
    /// the raw two-frame quotient.
    pub velocity_smoothing: Option<f64>,
    pub default_cardinal: CardinalHeading,
    pub seed: u64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            gate_m: 1.0,
            max_misses: 5,
            velocity_smoothing: None,
            default_cardinal: CardinalHeading::NorthSouth,
            seed: 0,
        }
    }
}

#[derive(Debug)]
pub struct Tracker {
    cfg: TrackerConfig,
    tracks: Vec<PedestrianTrack>,
    last_ts: Option<u64>,
    used_ids: HashSet<u32>,
    rng: ChaCha8Rng,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
            tracks: Vec::new(),
            last_ts: None,
            used_ids: HashSet::new(),
        }
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    /// All live tracks, including ones coasting through misses.
    pub fn tracks(&self) -> &[PedestrianTrack] {
        &self.tracks
    }

    fn fresh_id(&mut self) -> u32 {
        loop {
            let id: u32 = self.rng.random();
            if self.used_ids.insert(id) {
                return id;
            }
        }
    }

    /// Advances one frame and returns the tracks observed in it (matched
    /// plus newly spawned), in ascending temp_id order.
    pub fn step(&mut self, frame: &[FrameObservation], ts: u64) -> Result<Vec<PedestrianTrack>, TrackingError> {
        if let Some(previous) = self.last_ts {
            if ts <= previous {
                return Err(TrackingError::NonMonotonicTimestamp { ts, previous });
            }
        }
        self.last_ts = Some(ts);

        let assoc = associate(&self.tracks, frame, self.cfg.gate_m);
        let mut emitted_ids = Vec::with_capacity(frame.len());

        for &(ti, oi) in &assoc.matches {
            let obs = frame[oi];
            let smoothing = self.cfg.velocity_smoothing;
            let track = &mut self.tracks[ti];
            let prev = track.position;
            let raw_speed = velocity(prev, obs.position, track.last_ts, ts).unwrap_or(0.0);
            track.velocity_mps = match smoothing {
                Some(alpha) => alpha * raw_speed + (1.0 - alpha) * track.velocity_mps,
                None => raw_speed,
            };
            if haversine_distance(prev, obs.position) >= STILL_EPS_M {
                track.heading_rad = heading(prev, obs.position);
            }
            track.cardinal = classify_heading(prev, obs.position, track.cardinal);
            track.position = obs.position;
            track.last_ts = ts;
            track.misses = 0;
            track.msg_count = (track.msg_count + 1) % MSG_COUNT_MODULUS;
            emitted_ids.push(track.temp_id);
        }

        for &ti in &assoc.unmatched_tracks {
            self.tracks[ti].misses += 1;
        }
        let max_misses = self.cfg.max_misses;
        self.tracks.retain(|t| t.misses <= max_misses);

        for &oi in &assoc.unmatched_obs {
            let temp_id = self.fresh_id();
            let cardinal = self.cfg.default_cardinal;
            self.tracks.push(PedestrianTrack {
                temp_id,
                position: frame[oi].position,
                last_ts: ts,
                velocity_mps: 0.0,
                heading_rad: cardinal.nominal_angle(),
                cardinal,
                misses: 0,
                msg_count: 0,
            });
            emitted_ids.push(temp_id);
        }

        let mut emitted: Vec<PedestrianTrack> =
            self.tracks.iter().filter(|t| emitted_ids.contains(&t.temp_id)).cloned().collect();
        emitted.sort_by_key(|t| t.temp_id);
        Ok(emitted)
    }
}
