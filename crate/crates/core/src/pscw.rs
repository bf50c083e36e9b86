//! Crosswalk collision warning: constant-velocity time-to-collision between
//! every pedestrian (PSM) and vehicle (BSM) pair, capped at 8 s.

use std::collections::HashMap;
use std::ops::{Add, Mul, Sub};

use thiserror::Error;

use crate::geometry::{haversine_distance, GeoPosition, EARTH_RADIUS_M};
use crate::messages::{quantize_lat, quantize_lon, Alert, Bsm, CodecError, Psm};

/// Longest time-to-collision that still raises an alert, seconds.
pub const MAX_TTC_S: f64 = 8.0;
/// Local projection is only trusted this far from the anchor.
pub const MAX_PROJECTION_RANGE_M: f64 = 2_000.0;
/// Squared relative speed below which the pair is treated as never closing.
const MIN_CLOSING_A: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PscwError {
    #[error("encounter radius must be positive, got {0}")]
    NonPositiveEpsilon(f64),
    #[error("position {distance_m:.1} m from the anchor is beyond the projection range")]
    OutOfProjectionRange { distance_m: f64 },
    #[error("deceleration must be positive, got {0}")]
    NonPositiveDeceleration(f64),
    #[error("speed must be non-negative, got {0}")]
    NegativeSpeed(f64),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

/// Position and velocity in a local east/north plane, meters and m/s.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KinematicState {
    pub pos_m: Vec2,
    pub vel_mps: Vec2,
}

impl KinematicState {
    pub fn new(pos_m: Vec2, vel_mps: Vec2) -> Self {
        Self { pos_m, vel_mps }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TtcResult {
    pub ttc_s: Option<f64>,
    pub closest_approach_m: f64,
}

/// Velocity vector from speed and a heading in degrees clockwise from north.
pub fn velocity_vector(speed_mps: f64, heading_deg: f64) -> Vec2 {
    let h = heading_deg.to_radians();
    Vec2::new(speed_mps * h.sin(), speed_mps * h.cos())
}

/// Equirectangular projection about `anchor`.
pub fn to_local(anchor: GeoPosition, p: GeoPosition, speed_mps: f64, heading_deg: f64) -> Result<KinematicState, PscwError> {
    let distance_m = haversine_distance(anchor, p);
    if distance_m > MAX_PROJECTION_RANGE_M {
        return Err(PscwError::OutOfProjectionRange { distance_m });
    }
    if speed_mps < 0.0 {
        return Err(PscwError::NegativeSpeed(speed_mps));
    }
    let east = EARTH_RADIUS_M * anchor.lat.to_radians().cos() * (p.lon - anchor.lon).to_radians();
    let north = EARTH_RADIUS_M * (p.lat - anchor.lat).to_radians();
    Ok(KinematicState::new(Vec2::new(east, north), velocity_vector(speed_mps, heading_deg)))
}

/// Inverse of the position part of [`to_local`].
pub fn from_local(anchor: GeoPosition, p: Vec2) -> GeoPosition {
    GeoPosition {
        lat: anchor.lat + (p.y / EARTH_RADIUS_M).to_degrees(),
        lon: anchor.lon + (p.x / (EARTH_RADIUS_M * anchor.lat.to_radians().cos())).to_degrees(),
    }
}

/// Earliest `t` in `[0, 8]` s with `|dp + dv t| = epsilon`, where `dp`/`dv`
/// are pedestrian minus vehicle. Already-overlapping pairs return 0.
pub fn ttc(ped: &KinematicState, veh: &KinematicState, epsilon_m: f64) -> Result<TtcResult, PscwError> {
    if !(epsilon_m > 0.0) {
        return Err(PscwError::NonPositiveEpsilon(epsilon_m));
    }
    let dp = ped.pos_m - veh.pos_m;
    let dv = ped.vel_mps - veh.vel_mps;
    let a = dv.dot(dv);
    let b = 2.0 * dp.dot(dv);
    let c = dp.dot(dp) - epsilon_m * epsilon_m;

    let t_closest = if a > 0.0 { (-b / (2.0 * a)).max(0.0) } else { 0.0 };
    let closest_approach_m = (dp + dv * t_closest).norm();

    let ttc_s = if dp.norm() <= epsilon_m {
        Some(0.0)
    } else if a < MIN_CLOSING_A {
        None
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            None
        } else {
            // c > 0 here, so both roots share a sign; the stable form avoids
            // cancellation in the smaller root.
            let q = -0.5 * (b + b.signum() * disc.sqrt());
            let (r1, r2) = (q / a, c / q);
            let first = r1.min(r2);
            (0.0..=MAX_TTC_S).contains(&first).then_some(first)
        }
    };
    Ok(TtcResult { ttc_s, closest_approach_m })
}

/// Distance to stop from `v0` at constant deceleration.
pub fn stopping_distance(v0_mps: f64, decel_mps2: f64) -> Result<f64, PscwError> {
    if !(decel_mps2 > 0.0) {
        return Err(PscwError::NonPositiveDeceleration(decel_mps2));
    }
    if v0_mps < 0.0 {
        return Err(PscwError::NegativeSpeed(v0_mps));
    }
    Ok(v0_mps * v0_mps / (2.0 * decel_mps2))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairError {
    pub pedestrian_temp_id: u32,
    pub vehicle_temp_id: u32,
    pub error: PscwError,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Evaluation {
    /// Sorted by ascending `ttc_ms`.
    pub alerts: Vec<Alert>,
    pub errors: Vec<PairError>,
}

fn evaluate_pair(psm: &Psm, bsm: &Bsm, anchor: GeoPosition, now_ms: u64) -> Result<Option<Alert>, PscwError> {
    let ped = to_local(anchor, psm.position(), psm.speed_mps(), psm.heading_deg())?;
    let veh = to_local(anchor, bsm.position(), bsm.speed_mps(), bsm.heading_deg())?;
    let epsilon = bsm.length_m() / 2.0;
    let Some(t) = ttc(&ped, &veh, epsilon)?.ttc_s else {
        return Ok(None);
    };
    let encounter = from_local(anchor, ped.pos_m + ped.vel_mps * t);
    Ok(Some(Alert {
        timestamp_ms: now_ms,
        pedestrian_temp_id: psm.temp_id,
        vehicle_temp_id: bsm.temp_id,
        ttc_ms: (t * 1000.0).round() as u16,
        collision_lat_e7: quantize_lat(encounter.lat)?,
        collision_lon_e7: quantize_lon(encounter.lon)?,
    }))
}

/// Runs every pedestrian/vehicle pair. A failing pair is reported in
/// `errors` and does not stop the others.
pub fn evaluate(psms: &[Psm], bsms: &[Bsm], anchor: GeoPosition, now_ms: u64) -> Evaluation {
    let mut out = Evaluation::default();
    for psm in psms {
        for bsm in bsms {
            match evaluate_pair(psm, bsm, anchor, now_ms) {
                Ok(Some(alert)) => out.alerts.push(alert),
                Ok(None) => {}
                Err(error) => out.errors.push(PairError {
                    pedestrian_temp_id: psm.temp_id,
                    vehicle_temp_id: bsm.temp_id,
                    error,
                }),
            }
        }
    }
    out.alerts.sort_by_key(|a| (a.ttc_ms, a.pedestrian_temp_id, a.vehicle_temp_id));
    out
}

/// Suppresses repeat alerts for the same pedestrian/vehicle pair within a
/// cooldown window, measured on alert timestamps.
#[derive(Debug, Clone, Default)]
pub struct AlertCooldown {
    cooldown_ms: u64,
    last_sent: HashMap<(u32, u32), u64>,
    suppressed: u64,
}

impl AlertCooldown {
    pub fn new(cooldown_ms: u64) -> Self {
        Self { cooldown_ms, ..Self::default() }
    }

    pub fn admit(&mut self, alert: &Alert) -> bool {
        let key = (alert.pedestrian_temp_id, alert.vehicle_temp_id);
        let ts = alert.timestamp_ms;
        let open = match self.last_sent.get(&key) {
            Some(&last) => ts.saturating_sub(last) >= self.cooldown_ms,
            None => true,
        };
        if open {
            self.last_sent.insert(key, ts);
        } else {
            self.suppressed += 1;
        }
        open
    }

    pub fn suppressed(&self) -> u64 {
        self.suppressed
    }
}
