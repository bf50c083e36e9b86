//! Evaluation: detection accuracy, location and velocity RMSE, a sampling
//! TTC oracle, and a synthetic crossing scenario driven through the full
//! pipeline.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{parse_toml, Calibration, ConfigError, LatLon};
use crate::geometry::{geo_to_pixel, haversine_distance, CardinalHeading, GeoBounds, GeoPosition, PixelPoint};
use crate::messages::{build_bsm, Alert, PsmDefaults, VehicleState, MSG_COUNT_MAX};
use crate::perception::{Detection, RoadMask};
use crate::pipeline::{Frame, Pipeline, PipelineConfig, PipelineError};
use crate::pscw::{from_local, stopping_distance, to_local, velocity_vector, AlertCooldown, KinematicState, PscwError, TtcResult, Vec2, MAX_TTC_S};
use crate::tracking::TrackerConfig;

pub const SCENARIO_VERSION: u32 = 1;
/// Oracle sampling step, seconds.
pub const ORACLE_STEP_S: f64 = 0.001;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no samples")]
    EmptySample,
    #[error("length mismatch: {truth} truth vs {estimate} estimate")]
    LengthMismatch { truth: usize, estimate: usize },
    #[error("row {row}: truth ({truth_ts}, {truth_id}) does not match estimate ({est_ts}, {est_id})")]
    Misaligned { row: usize, truth_ts: u64, truth_id: String, est_ts: u64, est_id: String },
    #[error("row {row}: timestamp {ts} for actor {actor_id} is not after {previous}")]
    NonMonotonic { row: usize, actor_id: String, ts: u64, previous: u64 },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Pscw(#[from] PscwError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// TP / (TP + FP).
pub fn detection_accuracy(tp: u64, fp: u64) -> Result<f64, EvalError> {
    if tp + fp == 0 {
        return Err(EvalError::EmptySample);
    }
    Ok(tp as f64 / (tp + fp) as f64)
}

fn check_lengths(truth: usize, estimate: usize) -> Result<(), EvalError> {
    if truth != estimate {
        return Err(EvalError::LengthMismatch { truth, estimate });
    }
    if truth == 0 {
        return Err(EvalError::EmptySample);
    }
    Ok(())
}

/// Root-mean-square ground distance between index-aligned positions, meters.
pub fn rmse_location(truth: &[GeoPosition], est: &[GeoPosition]) -> Result<f64, EvalError> {
    check_lengths(truth.len(), est.len())?;
    let sum: f64 = truth.iter().zip(est).map(|(g, p)| haversine_distance(*g, *p).powi(2)).sum();
    Ok((sum / truth.len() as f64).sqrt())
}

pub fn rmse_velocity(truth: &[f64], est: &[f64]) -> Result<f64, EvalError> {
    check_lengths(truth.len(), est.len())?;
    let sum: f64 = truth.iter().zip(est).map(|(g, v)| (g - v).powi(2)).sum();
    Ok((sum / truth.len() as f64).sqrt())
}

/// Brute-force time-to-collision: the first multiple of 1 ms in `[0, 8]` s
/// at which the pair is within `epsilon_m`.
pub fn ttc_oracle(ped: &KinematicState, veh: &KinematicState, epsilon_m: f64) -> Result<TtcResult, PscwError> {
    if !(epsilon_m > 0.0) {
        return Err(PscwError::NonPositiveEpsilon(epsilon_m));
    }
    let steps = (MAX_TTC_S / ORACLE_STEP_S).round() as u32;
    let mut closest = f64::INFINITY;
    let mut hit = None;
    for k in 0..=steps {
        let t = f64::from(k) * ORACLE_STEP_S;
        let dx = (ped.pos_m.x + ped.vel_mps.x * t) - (veh.pos_m.x + veh.vel_mps.x * t);
        let dy = (ped.pos_m.y + ped.vel_mps.y * t) - (veh.pos_m.y + veh.vel_mps.y * t);
        let d = dx.hypot(dy);
        closest = closest.min(d);
        if hit.is_none() && d <= epsilon_m {
            hit = Some(t);
        }
    }
    Ok(TtcResult { ttc_s: hit, closest_approach_m: closest })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    pub ts: u64,
    pub actor_id: String,
    pub lat: f64,
    pub lon: f64,
    pub velocity_mps: f64,
    pub cardinal: CardinalHeading,
}

impl GroundTruthRecord {
    pub fn position(&self) -> GeoPosition {
        GeoPosition { lat: self.lat, lon: self.lon }
    }
}

/// Reads `ts,actor_id,lat,lon,velocity_mps,cardinal` rows and checks that
/// timestamps increase per actor.
pub fn read_records(path: &Path) -> Result<Vec<GroundTruthRecord>, EvalError> {
    let csv_err = |source| EvalError::Csv { path: path.to_path_buf(), source };
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(csv_err)?;
    let mut out = Vec::new();
    for rec in reader.deserialize() {
        out.push(rec.map_err(csv_err)?);
    }
    check_monotonic(&out)?;
    Ok(out)
}

pub fn check_monotonic(records: &[GroundTruthRecord]) -> Result<(), EvalError> {
    let mut last: HashMap<&str, u64> = HashMap::new();
    for (i, r) in records.iter().enumerate() {
        if let Some(&previous) = last.get(r.actor_id.as_str()) {
            if r.ts <= previous {
                return Err(EvalError::NonMonotonic { row: i + 1, actor_id: r.actor_id.clone(), ts: r.ts, previous });
            }
        }
        last.insert(&r.actor_id, r.ts);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub group: String,
    pub samples: usize,
    pub rmse_location_m: f64,
    pub rmse_velocity_mps: f64,
}

/// RMSE of index-aligned truth and estimate rows, overall or split by the
/// truth's cardinal direction.
pub fn compare_records(
    truth: &[GroundTruthRecord],
    est: &[GroundTruthRecord],
    by_direction: bool,
) -> Result<Vec<MetricRow>, EvalError> {
    check_lengths(truth.len(), est.len())?;
    for (i, (g, p)) in truth.iter().zip(est).enumerate() {
        if g.ts != p.ts || g.actor_id != p.actor_id {
            return Err(EvalError::Misaligned {
                row: i + 1,
                truth_ts: g.ts,
                truth_id: g.actor_id.clone(),
                est_ts: p.ts,
                est_id: p.actor_id.clone(),
            });
        }
    }
    let row = |group: String, pairs: Vec<(&GroundTruthRecord, &GroundTruthRecord)>| -> Result<MetricRow, EvalError> {
        let gp: Vec<_> = pairs.iter().map(|(g, _)| g.position()).collect();
        let ep: Vec<_> = pairs.iter().map(|(_, p)| p.position()).collect();
        let gv: Vec<_> = pairs.iter().map(|(g, _)| g.velocity_mps).collect();
        let ev: Vec<_> = pairs.iter().map(|(_, p)| p.velocity_mps).collect();
        Ok(MetricRow {
            group,
            samples: pairs.len(),
            rmse_location_m: rmse_location(&gp, &ep)?,
            rmse_velocity_mps: rmse_velocity(&gv, &ev)?,
        })
    };
    let pairs: Vec<_> = truth.iter().zip(est).collect();
    if !by_direction {
        return Ok(vec![row("all".into(), pairs)?]);
    }
    CardinalHeading::ALL
        .iter()
        .map(|c| {
            let sub: Vec<_> = pairs.iter().copied().filter(|(g, _)| g.cardinal == *c).collect();
            if sub.is_empty() {
                Ok(MetricRow { group: c.abbrev().into(), samples: 0, rmse_location_m: f64::NAN, rmse_velocity_mps: f64::NAN })
            } else {
                row(c.abbrev().into(), sub)
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSpec {
    /// Image positions of the ground patch's top-left, top-right,
    /// bottom-right and bottom-left corners.
    #[serde(default = "default_corners")]
    pub corners: [[f64; 2]; 4],
    #[serde(default = "default_patch")]
    pub patch_width_m: f64,
    #[serde(default = "default_patch")]
    pub patch_height_m: f64,
}

fn default_corners() -> [[f64; 2]; 4] {
    [[0.30, 0.35], [0.70, 0.35], [0.95, 0.95], [0.05, 0.95]]
}

fn default_patch() -> f64 {
    80.0
}

impl Default for CameraSpec {
    fn default() -> Self {
        Self { corners: default_corners(), patch_width_m: default_patch(), patch_height_m: default_patch() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PedestrianSpec {
    pub east_m: f64,
    pub north_m: f64,
    pub speed_mps: f64,
    /// Degrees clockwise from north.
    pub heading_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleSpec {
    pub east_m: f64,
    pub north_m: f64,
    pub speed_mps: f64,
    pub heading_deg: f64,
    #[serde(default = "default_length")]
    pub length_m: f64,
    /// Braking applied from the first alert on. Absent or 0 means none.
    #[serde(default)]
    pub decel_mps2: f64,
}

fn default_length() -> f64 {
    crate::messages::DEFAULT_VEHICLE_LENGTH_M
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorSpec {
    pub lat: f64,
    pub lon: f64,
}

/// Scenario file, TOML. Positions are meters east/north of the anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    pub duration_s: f64,
    #[serde(default = "default_frame_period")]
    pub frame_period_ms: u64,
    #[serde(default = "default_start_ts")]
    pub start_ts_ms: u64,
    #[serde(default)]
    pub pixel_noise_sigma: f64,
    #[serde(default = "default_cooldown")]
    pub alert_cooldown_ms: u64,
    pub anchor: AnchorSpec,
    #[serde(default)]
    pub camera: CameraSpec,
    pub pedestrian: Option<PedestrianSpec>,
    pub vehicle: VehicleSpec,
}

fn default_frame_period() -> u64 {
    100
}

fn default_start_ts() -> u64 {
    1_543_609_955_382
}

fn default_cooldown() -> u64 {
    1_000
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let cfg: Self = parse_toml(&text, path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |field: &str, msg: &str| Err(ConfigError::field(field, msg));
        if self.version != SCENARIO_VERSION {
            return bad("version", "unsupported version");
        }
        if !(self.duration_s > 0.0) {
            return bad("duration_s", "must be positive");
        }
        if self.frame_period_ms == 0 {
            return bad("frame_period_ms", "must be positive");
        }
        if !(self.pixel_noise_sigma >= 0.0) {
            return bad("pixel_noise_sigma", "must be non-negative");
        }
        LatLon { lat: self.anchor.lat, lon: self.anchor.lon }.to_geo("anchor")?;
        if !(self.camera.patch_width_m > 0.0) {
            return bad("camera.patch_width_m", "must be positive");
        }
        if !(self.camera.patch_height_m > 0.0) {
            return bad("camera.patch_height_m", "must be positive");
        }
        if self.camera.corners.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return bad("camera.corners", "must lie in [0, 1]");
        }
        if let Some(p) = &self.pedestrian {
            if !(p.speed_mps >= 0.0) {
                return bad("pedestrian.speed_mps", "must be non-negative");
            }
        }
        let v = &self.vehicle;
        if !(v.speed_mps >= 0.0) {
            return bad("vehicle.speed_mps", "must be non-negative");
        }
        if !(v.length_m > 0.0) {
            return bad("vehicle.length_m", "must be positive");
        }
        if !(v.decel_mps2 >= 0.0) {
            return bad("vehicle.decel_mps2", "must be non-negative");
        }
        Ok(())
    }

    fn anchor(&self) -> GeoPosition {
        GeoPosition { lat: self.anchor.lat, lon: self.anchor.lon }
    }

    /// Calibration whose top view is the patch centered on the anchor, with
    /// the whole image marked as road.
    pub fn calibration(&self) -> Result<Calibration, ConfigError> {
        let anchor = self.anchor();
        let (hw, hh) = (self.camera.patch_width_m / 2.0, self.camera.patch_height_m / 2.0);
        let corner = |e: f64, n: f64| from_local(anchor, Vec2::new(e, n));
        let bounds = GeoBounds::new(corner(-hw, hh), corner(hw, hh), corner(hw, -hh), corner(-hw, -hh))
            .map_err(|e| ConfigError::field("camera", e))?;
        let c = self.camera.corners;
        let image = [0, 1, 2, 3].map(|i| PixelPoint::new(c[i][0], c[i][1]));
        let mask = RoadMask::filled(64, 64, true).expect("nonzero mask");
        Calibration::from_corners(image, bounds, mask, PsmDefaults::default(), anchor)
            .map_err(|e| ConfigError::field("camera.corners", e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstAlert {
    pub t_s: f64,
    pub ttc_s: f64,
    /// Vehicle position when the alert was raised (point B).
    pub vehicle_pos: Vec2,
    pub vehicle_speed_mps: f64,
    /// Predicted encounter point (point A).
    pub collision_point: Vec2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Braking {
    pub stop_distance_m: f64,
    /// Where the vehicle comes to rest (point C).
    pub stop_pos: Vec2,
    /// Distance from C to A along the vehicle's heading; positive means the
    /// vehicle stopped short.
    pub margin_m: f64,
}

impl Braking {
    pub fn halted_before_collision(&self) -> bool {
        self.margin_m > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalizationStats {
    pub samples: usize,
    pub max_error_m: f64,
    pub rmse_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub t_s: f64,
    pub actor: &'static str,
    pub pos: Vec2,
    pub geo: GeoPosition,
    pub speed_mps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioReport {
    pub frames: usize,
    pub psms: usize,
    /// Alerts that passed the cooldown, with their scenario time.
    pub alerts: Vec<(f64, Alert)>,
    pub first_alert: Option<FirstAlert>,
    pub braking: Option<Braking>,
    pub vehicle_final_speed_mps: f64,
    pub localization: Option<LocalizationStats>,
    pub trajectories: Vec<TrajectoryRow>,
}

struct VehicleSim {
    start: Vec2,
    dir: Vec2,
    v0: f64,
    decel: f64,
    brake_from: Option<(f64, f64)>,
}

impl VehicleSim {
    /// Distance travelled and speed at time `t`.
    fn at(&self, t: f64) -> (f64, f64) {
        match self.brake_from {
            None => (self.v0 * t, self.v0),
            Some((tb, sb)) => {
                let tau = t - tb;
                let t_stop = self.v0 / self.decel;
                if tau >= t_stop {
                    (sb + self.v0 * t_stop / 2.0, 0.0)
                } else {
                    (sb + self.v0 * tau - 0.5 * self.decel * tau * tau, self.v0 - self.decel * tau)
                }
            }
        }
    }

    fn pos(&self, s: f64) -> Vec2 {
        self.start + self.dir * s
    }
}

/// Runs the scenario through perception, tracking, message encoding and
/// collision evaluation. Deterministic for a given config.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioReport, EvalError> {
    cfg.validate()?;
    let anchor = cfg.anchor();
    let calib = cfg.calibration()?;
    let to_raw = calib.homography.inverse().map_err(|e| ConfigError::field("camera.corners", e))?;
    let bounds = calib.bounds;
    let mut pipeline = Pipeline::new(
        calib,
        PipelineConfig { tracker: TrackerConfig { seed: cfg.seed, ..TrackerConfig::default() }, ..PipelineConfig::default() },
    );
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x005e_ed0f_5ce7_a210);
    let vehicle_id: u32 = rng.random();
    let noise = Normal::new(0.0, cfg.pixel_noise_sigma).expect("validated sigma");
    let mut cooldown = AlertCooldown::new(cfg.alert_cooldown_ms);

    let v = cfg.vehicle;
    let mut sim = VehicleSim {
        start: Vec2::new(v.east_m, v.north_m),
        dir: velocity_vector(1.0, v.heading_deg),
        v0: v.speed_mps,
        decel: v.decel_mps2,
        brake_from: None,
    };

    let total_ms = (cfg.duration_s * 1000.0).round() as u64;
    let mut report = ScenarioReport {
        frames: 0,
        psms: 0,
        alerts: Vec::new(),
        first_alert: None,
        braking: None,
        vehicle_final_speed_mps: v.speed_mps,
        localization: None,
        trajectories: Vec::new(),
    };
    let mut loc_errors = Vec::new();
    let mut bsm_count: u8 = 0;

    let mut t_ms = 0;
    while t_ms <= total_ms {
        let t = t_ms as f64 / 1000.0;
        let ts = cfg.start_ts_ms + t_ms;

        let (s, speed) = sim.at(t);
        let vpos = sim.pos(s);
        let vgeo = from_local(anchor, vpos);
        report.trajectories.push(TrajectoryRow { t_s: t, actor: "vehicle", pos: vpos, geo: vgeo, speed_mps: speed });
        let bsm = build_bsm(
            &VehicleState { position: vgeo, speed_mps: speed, heading_deg: v.heading_deg, elevation_m: 201.0, length_m: v.length_m },
            ts,
            bsm_count,
            vehicle_id,
        )
        .map_err(PipelineError::from)?;
        bsm_count = if bsm_count >= MSG_COUNT_MAX { 0 } else { bsm_count + 1 };

        let mut detections = Vec::new();
        let mut ped_truth = None;
        if let Some(p) = cfg.pedestrian {
            let ppos = Vec2::new(p.east_m, p.north_m) + velocity_vector(p.speed_mps, p.heading_deg) * t;
            let pgeo = from_local(anchor, ppos);
            ped_truth = Some(pgeo);
            report.trajectories.push(TrajectoryRow { t_s: t, actor: "pedestrian", pos: ppos, geo: pgeo, speed_mps: p.speed_mps });
            let top = geo_to_pixel(&bounds, pgeo);
            if top.in_unit_square() {
                if let Ok(raw) = to_raw.apply(top) {
                    let jitter = |rng: &mut ChaCha8Rng| if cfg.pixel_noise_sigma > 0.0 { noise.sample(rng) } else { 0.0 };
                    let raw = PixelPoint::new(raw.px + jitter(&mut rng), raw.py + jitter(&mut rng));
                    let det = Detection::pedestrian(raw, 0.08, 0.03, 0.9, ts);
                    if det.validate().is_ok() {
                        detections.push(det);
                    }
                }
            }
        }

        let out = pipeline.process(&Frame { ts, detections }, &[bsm])?;
        report.frames += 1;
        report.psms += out.psms.len();
        for psm in &out.psms {
            let est = psm.position();
            report.trajectories.push(TrajectoryRow {
                t_s: t,
                actor: "pedestrian_psm",
                pos: to_local(anchor, est, 0.0, 0.0)?.pos_m,
                geo: est,
                speed_mps: psm.speed_mps(),
            });
            if let Some(truth) = ped_truth {
                loc_errors.push(haversine_distance(truth, est));
            }
        }

        for alert in out.evaluation.alerts {
            if !cooldown.admit(&alert) {
                continue;
            }
            report.alerts.push((t, alert));
            if report.first_alert.is_none() {
                let a = to_local(anchor, alert.collision_point(), 0.0, 0.0)?.pos_m;
                report.first_alert = Some(FirstAlert {
                    t_s: t,
                    ttc_s: alert.ttc_s(),
                    vehicle_pos: vpos,
                    vehicle_speed_mps: speed,
                    collision_point: a,
                });
                if v.decel_mps2 > 0.0 && sim.brake_from.is_none() {
                    sim.brake_from = Some((t, s));
                    let d = stopping_distance(sim.v0, v.decel_mps2)?;
                    let stop_pos = sim.pos(s + d);
                    report.braking = Some(Braking { stop_distance_m: d, stop_pos, margin_m: (a - stop_pos).dot(sim.dir) });
                }
            }
        }
        report.vehicle_final_speed_mps = speed;
        t_ms += cfg.frame_period_ms;
    }

    if !loc_errors.is_empty() {
        let n = loc_errors.len();
        report.localization = Some(LocalizationStats {
            samples: n,
            max_error_m: loc_errors.iter().copied().fold(0.0, f64::max),
            rmse_m: (loc_errors.iter().map(|e| e * e).sum::<f64>() / n as f64).sqrt(),
        });
    }
    Ok(report)
}

impl ScenarioReport {
    pub fn report_csv(&self) -> String {
        let mut rows: Vec<(&str, String)> = vec![
            ("frames", self.frames.to_string()),
            ("psms", self.psms.to_string()),
            ("alerts", self.alerts.len().to_string()),
        ];
        if let Some(f) = &self.first_alert {
            rows.extend([
                ("first_alert_t_s", format!("{:.3}", f.t_s)),
                ("first_alert_ttc_s", format!("{:.3}", f.ttc_s)),
                ("alert_vehicle_east_m", format!("{:.3}", f.vehicle_pos.x)),
                ("alert_vehicle_north_m", format!("{:.3}", f.vehicle_pos.y)),
                ("alert_vehicle_speed_mps", format!("{:.3}", f.vehicle_speed_mps)),
                ("collision_east_m", format!("{:.3}", f.collision_point.x)),
                ("collision_north_m", format!("{:.3}", f.collision_point.y)),
            ]);
        }
        if let Some(b) = &self.braking {
            rows.extend([
                ("stop_distance_m", format!("{:.3}", b.stop_distance_m)),
                ("stop_east_m", format!("{:.3}", b.stop_pos.x)),
                ("stop_north_m", format!("{:.3}", b.stop_pos.y)),
                ("stop_margin_m", format!("{:.3}", b.margin_m)),
                ("halted_before_collision", b.halted_before_collision().to_string()),
            ]);
        }
        rows.push(("vehicle_final_speed_mps", format!("{:.3}", self.vehicle_final_speed_mps)));
        if let Some(l) = &self.localization {
            rows.extend([
                ("localization_samples", l.samples.to_string()),
                ("localization_max_error_m", format!("{:.4}", l.max_error_m)),
                ("localization_rmse_m", format!("{:.4}", l.rmse_m)),
            ]);
        }
        let mut s = String::from("metric,value\n");
        for (k, v) in rows {
            let _ = writeln!(s, "{k},{v}");
        }
        s
    }

    pub fn trajectories_csv(&self) -> String {
        let mut s = String::from("t_s,actor,east_m,north_m,lat,lon,speed_mps\n");
        for r in &self.trajectories {
            let _ = writeln!(
                s,
                "{:.3},{},{:.3},{:.3},{:.7},{:.7},{:.3}",
                r.t_s, r.actor, r.pos.x, r.pos.y, r.geo.lat, r.geo.lon, r.speed_mps
            );
        }
        s
    }

    /// Writes `report.csv` and `trajectories.csv`.
    pub fn write_dir(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.csv"), self.report_csv())?;
        fs::write(dir.join("trajectories.csv"), self.trajectories_csv())
    }
}
