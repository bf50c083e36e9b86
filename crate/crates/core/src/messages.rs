//! Safety messages and their fixed-layout wire codec.
//!
//! Every frame is `[type:1][payload]`, big-endian, no padding. Payload sizes
//! are fixed per type, see `docs/wire-format.md` for the offset tables.
//!
//! | type  | message | frame bytes |
//! |-------|---------|-------------|
//! | 0x20  | PSM     | 33          |
//! | 0x14  | BSM     | 30          |
//! | 0x30  | Alert   | 27          |

use std::f64::consts::PI;

use thiserror::Error;

use crate::geometry::{CardinalHeading, GeoPosition};
use crate::tracking::PedestrianTrack;

pub const PSM_TYPE: u8 = 0x20;
pub const BSM_TYPE: u8 = 0x14;
pub const ALERT_TYPE: u8 = 0x30;

pub const PSM_FRAME_LEN: usize = 33;
pub const BSM_FRAME_LEN: usize = 30;
pub const ALERT_FRAME_LEN: usize = 27;

pub const LAT_LIMIT_E7: i32 = 900_000_000;
pub const LON_LIMIT_E7: i32 = 1_800_000_000;
pub const ELEV_MIN_DM: i16 = -4095;
pub const ELEV_MAX_DM: i16 = i16::MAX; // 3276.7 m
pub const HEADING_UNITS: u16 = 28_800;
pub const MSG_COUNT_MAX: u8 = 127;
pub const DSECOND_MAX: u16 = 60_999;
pub const MAX_ALERT_TTC_MS: u16 = 8_000;

/// Wire resolution of speed, m/s per unit.
pub const SPEED_RESOLUTION: f64 = 0.02;
/// Wire resolution of heading, degrees per unit.
pub const HEADING_RESOLUTION_DEG: f64 = 0.0125;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("unknown message type 0x{0:02x}")]
    UnknownMessageType(u8),
    #[error("frame length {actual} does not match {expected} for type 0x{msg_type:02x}")]
    TruncatedFrame { msg_type: u8, expected: usize, actual: usize },
    #[error("field {field} out of range: {value}")]
    FieldOutOfRange { field: &'static str, value: i64 },
    #[error("{field} value {value} cannot be quantized")]
    QuantizationOverflow { field: &'static str, value: String },
}

fn out_of_range(field: &'static str, value: impl Into<i64>) -> CodecError {
    CodecError::FieldOutOfRange { field, value: value.into() }
}

/// Personal device user type code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DeviceUserType {
    Unavailable = 0,
    Pedestrian = 1,
    Pedalcyclist = 2,
    PublicSafetyWorker = 3,
    Animal = 4,
}

impl DeviceUserType {
    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => Self::Unavailable,
            1 => Self::Pedestrian,
            2 => Self::Pedalcyclist,
            3 => Self::PublicSafetyWorker,
            4 => Self::Animal,
            _ => return None,
        })
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Unavailable => "unavailable",
            Self::Pedestrian => "VRU",
            Self::Pedalcyclist => "cyclist",
            Self::PublicSafetyWorker => "worker",
            Self::Animal => "animal",
        }
    }
}

/// Personal Safety Message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Psm {
    pub device_user_type: DeviceUserType,
    pub timestamp_ms: u64,
    /// Milliseconds within the minute, 0..=60999.
    pub dsecond: u16,
    pub msg_count: u8,
    pub temp_id: u32,
    pub lat_e7: i32,
    pub lon_e7: i32,
    pub elev_dm: i16,
    /// 0.01 m units.
    pub pos_accuracy_cm: u8,
    /// 0.02 m/s units.
    pub speed_u: u16,
    /// 0.0125 degree units clockwise from north.
    pub heading_u: u16,
    pub cardinal: CardinalHeading,
}

/// Basic Safety Message, reduced to what the crosswalk warning needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Bsm {
    pub timestamp_ms: u64,
    pub msg_count: u8,
    pub temp_id: u32,
    pub lat_e7: i32,
    pub lon_e7: i32,
    pub elev_dm: i16,
    pub speed_u: u16,
    pub heading_u: u16,
    /// Vehicle length, 0.1 m units.
    pub length_dm: u16,
}

/// Pedestrian collision warning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Alert {
    pub timestamp_ms: u64,
    pub pedestrian_temp_id: u32,
    pub vehicle_temp_id: u32,
    pub ttc_ms: u16,
    pub collision_lat_e7: i32,
    pub collision_lon_e7: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Message {
    Psm(Psm),
    Bsm(Bsm),
    Alert(Alert),
}

impl Message {
    pub fn msg_type(&self) -> u8 {
        match self {
            Message::Psm(_) => PSM_TYPE,
            Message::Bsm(_) => BSM_TYPE,
            Message::Alert(_) => ALERT_TYPE,
        }
    }

    pub fn timestamp_ms(&self) -> u64 {
        match self {
            Message::Psm(m) => m.timestamp_ms,
            Message::Bsm(m) => m.timestamp_ms,
            Message::Alert(m) => m.timestamp_ms,
        }
    }
}

impl From<Psm> for Message {
    fn from(m: Psm) -> Self {
        Message::Psm(m)
    }
}

impl From<Bsm> for Message {
    fn from(m: Bsm) -> Self {
        Message::Bsm(m)
    }
}

impl From<Alert> for Message {
    fn from(m: Alert) -> Self {
        Message::Alert(m)
    }
}

// ---------------------------------------------------------------------------
// quantization

pub fn dsecond_of(timestamp_ms: u64) -> u16 {
    (timestamp_ms % 60_000) as u16
}

pub fn quantize_lat(lat: f64) -> Result<i32, CodecError> {
    let v = (lat * 1e7).round();
    if !v.is_finite() || v.abs() > LAT_LIMIT_E7 as f64 {
        return Err(CodecError::QuantizationOverflow { field: "latitude", value: lat.to_string() });
    }
    Ok(v as i32)
}

pub fn quantize_lon(lon: f64) -> Result<i32, CodecError> {
    let v = (lon * 1e7).round();
    if !v.is_finite() || v.abs() > LON_LIMIT_E7 as f64 {
        return Err(CodecError::QuantizationOverflow { field: "longitude", value: lon.to_string() });
    }
    Ok(v as i32)
}

pub fn quantize_elevation(m: f64) -> i16 {
    (m * 10.0).round().clamp(ELEV_MIN_DM as f64, ELEV_MAX_DM as f64) as i16
}

pub fn quantize_accuracy(m: f64) -> u8 {
    (m * 100.0).round().clamp(0.0, u8::MAX as f64) as u8
}

pub fn quantize_speed(mps: f64) -> u16 {
    (mps / SPEED_RESOLUTION).round().clamp(0.0, u16::MAX as f64) as u16
}

/// Converts a wire heading in degrees clockwise from north to units.
pub fn quantize_heading_deg(deg_from_north: f64) -> u16 {
    let units = (deg_from_north.rem_euclid(360.0) / HEADING_RESOLUTION_DEG).round();
    (units as u32 % HEADING_UNITS as u32) as u16
}

/// East-axis heading angle (radians, counterclockwise) to wire units of
/// 0.0125 degrees clockwise from north.
pub fn heading_to_wire(heading_rad: f64) -> u16 {
    quantize_heading_deg(90.0 - heading_rad * 180.0 / PI)
}

pub fn lat_from_e7(v: i32) -> f64 {
    v as f64 / 1e7
}

pub fn speed_from_units(u: u16) -> f64 {
    u as f64 * SPEED_RESOLUTION
}

pub fn heading_deg_from_units(u: u16) -> f64 {
    u as f64 * HEADING_RESOLUTION_DEG
}

/// Constant PSM fields the camera cannot measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsmDefaults {
    pub elevation_m: f64,
    pub positional_accuracy_m: f64,
}

impl Default for PsmDefaults {
    fn default() -> Self {
        Self { elevation_m: 201.0, positional_accuracy_m: 0.54 }
    }
}

pub fn build_psm(track: &PedestrianTrack, now_ms: u64, defaults: &PsmDefaults) -> Result<Psm, CodecError> {
    Ok(Psm {
        device_user_type: DeviceUserType::Pedestrian,
        timestamp_ms: now_ms,
        dsecond: dsecond_of(now_ms),
        msg_count: track.msg_count % (MSG_COUNT_MAX + 1),
        temp_id: track.temp_id,
        lat_e7: quantize_lat(track.position.lat)?,
        lon_e7: quantize_lon(track.position.lon)?,
        elev_dm: quantize_elevation(defaults.elevation_m),
        pos_accuracy_cm: quantize_accuracy(defaults.positional_accuracy_m),
        speed_u: quantize_speed(track.velocity_mps),
        heading_u: heading_to_wire(track.heading_rad),
        cardinal: track.cardinal,
    })
}

/// Vehicle kinematics for BSM construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState {
    pub position: GeoPosition,
    pub speed_mps: f64,
    /// Degrees clockwise from north.
    pub heading_deg: f64,
    pub elevation_m: f64,
    pub length_m: f64,
}

/// Vehicle length assumed when none is known.
pub const DEFAULT_VEHICLE_LENGTH_M: f64 = 5.0;

pub fn build_bsm(state: &VehicleState, now_ms: u64, msg_count: u8, temp_id: u32) -> Result<Bsm, CodecError> {
    let length_m = if state.length_m > 0.0 { state.length_m } else { DEFAULT_VEHICLE_LENGTH_M };
    let length_dm = (length_m * 10.0).round().clamp(1.0, u16::MAX as f64) as u16;
    Ok(Bsm {
        timestamp_ms: now_ms,
        msg_count: msg_count % (MSG_COUNT_MAX + 1),
        temp_id,
        lat_e7: quantize_lat(state.position.lat)?,
        lon_e7: quantize_lon(state.position.lon)?,
        elev_dm: quantize_elevation(state.elevation_m),
        speed_u: quantize_speed(state.speed_mps),
        heading_u: quantize_heading_deg(state.heading_deg),
        length_dm,
    })
}

impl Psm {
    pub fn position(&self) -> GeoPosition {
        GeoPosition { lat: lat_from_e7(self.lat_e7), lon: lat_from_e7(self.lon_e7) }
    }

    pub fn speed_mps(&self) -> f64 {
        speed_from_units(self.speed_u)
    }

    pub fn heading_deg(&self) -> f64 {
        heading_deg_from_units(self.heading_u)
    }

    pub fn elevation_m(&self) -> f64 {
        self.elev_dm as f64 / 10.0
    }

    pub fn positional_accuracy_m(&self) -> f64 {
        self.pos_accuracy_cm as f64 / 100.0
    }

    pub fn validate(&self) -> Result<(), CodecError> {
        let leap = (60_000..=DSECOND_MAX).contains(&self.dsecond);
        if !(leap || self.dsecond == dsecond_of(self.timestamp_ms)) {
            return Err(out_of_range("dsecond", self.dsecond));
        }
        check_msg_count(self.msg_count)?;
        check_lat_lon(self.lat_e7, self.lon_e7)?;
        check_elev(self.elev_dm)?;
        check_heading(self.heading_u)
    }
}

impl Bsm {
    pub fn position(&self) -> GeoPosition {
        GeoPosition { lat: lat_from_e7(self.lat_e7), lon: lat_from_e7(self.lon_e7) }
    }

    pub fn speed_mps(&self) -> f64 {
        speed_from_units(self.speed_u)
    }

    pub fn heading_deg(&self) -> f64 {
        heading_deg_from_units(self.heading_u)
    }

    pub fn length_m(&self) -> f64 {
        self.length_dm as f64 / 10.0
    }

    pub fn validate(&self) -> Result<(), CodecError> {
        check_msg_count(self.msg_count)?;
        check_lat_lon(self.lat_e7, self.lon_e7)?;
        check_elev(self.elev_dm)?;
        check_heading(self.heading_u)?;
        if self.length_dm == 0 {
            return Err(out_of_range("length_dm", 0));
        }
        Ok(())
    }
}

impl Alert {
    pub fn ttc_s(&self) -> f64 {
        self.ttc_ms as f64 / 1000.0
    }

    pub fn collision_point(&self) -> GeoPosition {
        GeoPosition { lat: lat_from_e7(self.collision_lat_e7), lon: lat_from_e7(self.collision_lon_e7) }
    }

    pub fn validate(&self) -> Result<(), CodecError> {
        if self.ttc_ms > MAX_ALERT_TTC_MS {
            return Err(out_of_range("ttc_ms", self.ttc_ms));
        }
        check_lat_lon(self.collision_lat_e7, self.collision_lon_e7)
    }
}

fn check_msg_count(v: u8) -> Result<(), CodecError> {
    if v > MSG_COUNT_MAX {
        return Err(out_of_range("msg_count", v));
    }
    Ok(())
}

fn check_lat_lon(lat: i32, lon: i32) -> Result<(), CodecError> {
    if lat.unsigned_abs() > LAT_LIMIT_E7 as u32 {
        return Err(out_of_range("lat_e7", lat));
    }
    if lon.unsigned_abs() > LON_LIMIT_E7 as u32 {
        return Err(out_of_range("lon_e7", lon));
    }
    Ok(())
}

fn check_elev(v: i16) -> Result<(), CodecError> {
    if v < ELEV_MIN_DM {
        return Err(out_of_range("elev_dm", v));
    }
    Ok(())
}

fn check_heading(v: u16) -> Result<(), CodecError> {
    if v >= HEADING_UNITS {
        return Err(out_of_range("heading_u", v));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// codec

pub fn frame_len(msg_type: u8) -> Option<usize> {
    match msg_type {
        PSM_TYPE => Some(PSM_FRAME_LEN),
        BSM_TYPE => Some(BSM_FRAME_LEN),
        ALERT_TYPE => Some(ALERT_FRAME_LEN),
        _ => None,
    }
}

pub fn encode(msg: &Message) -> Result<Vec<u8>, CodecError> {
    let mut out = Vec::with_capacity(PSM_FRAME_LEN);
    out.push(msg.msg_type());
    match msg {
        Message::Psm(m) => {
            m.validate()?;
            out.push(m.device_user_type as u8);
            out.extend_from_slice(&m.timestamp_ms.to_be_bytes());
            out.extend_from_slice(&m.dsecond.to_be_bytes());
            out.push(m.msg_count);
            out.extend_from_slice(&m.temp_id.to_be_bytes());
            out.extend_from_slice(&m.lat_e7.to_be_bytes());
            out.extend_from_slice(&m.lon_e7.to_be_bytes());
            out.extend_from_slice(&m.elev_dm.to_be_bytes());
            out.push(m.pos_accuracy_cm);
            out.extend_from_slice(&m.speed_u.to_be_bytes());
            out.extend_from_slice(&m.heading_u.to_be_bytes());
            out.push(m.cardinal.code());
        }
        Message::Bsm(m) => {
            m.validate()?;
            out.extend_from_slice(&m.timestamp_ms.to_be_bytes());
            out.push(m.msg_count);
            out.extend_from_slice(&m.temp_id.to_be_bytes());
            out.extend_from_slice(&m.lat_e7.to_be_bytes());
            out.extend_from_slice(&m.lon_e7.to_be_bytes());
            out.extend_from_slice(&m.elev_dm.to_be_bytes());
            out.extend_from_slice(&m.speed_u.to_be_bytes());
            out.extend_from_slice(&m.heading_u.to_be_bytes());
            out.extend_from_slice(&m.length_dm.to_be_bytes());
        }
        Message::Alert(m) => {
            m.validate()?;
            out.extend_from_slice(&m.timestamp_ms.to_be_bytes());
            out.extend_from_slice(&m.pedestrian_temp_id.to_be_bytes());
            out.extend_from_slice(&m.vehicle_temp_id.to_be_bytes());
            out.extend_from_slice(&m.ttc_ms.to_be_bytes());
            out.extend_from_slice(&m.collision_lat_e7.to_be_bytes());
            out.extend_from_slice(&m.collision_lon_e7.to_be_bytes());
        }
    }
    debug_assert_eq!(Some(out.len()), frame_len(msg.msg_type()));
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self) -> [u8; N] {
        let (head, rest) = self.buf.split_at(N);
        self.buf = rest;
        head.try_into().expect("length checked before parsing")
    }

    fn u8(&mut self) -> u8 {
        self.take::<1>()[0]
    }
    fn u16(&mut self) -> u16 {
        u16::from_be_bytes(self.take())
    }
    fn i16(&mut self) -> i16 {
        i16::from_be_bytes(self.take())
    }
    fn u32(&mut self) -> u32 {
        u32::from_be_bytes(self.take())
    }
    fn i32(&mut self) -> i32 {
        i32::from_be_bytes(self.take())
    }
    fn u64(&mut self) -> u64 {
        u64::from_be_bytes(self.take())
    }
}

pub fn decode(bytes: &[u8]) -> Result<Message, CodecError> {
    let (&msg_type, payload) = bytes
        .split_first()
        .ok_or(CodecError::TruncatedFrame { msg_type: 0, expected: 1, actual: 0 })?;
    let expected = frame_len(msg_type).ok_or(CodecError::UnknownMessageType(msg_type))?;
    if bytes.len() != expected {
        return Err(CodecError::TruncatedFrame { msg_type, expected, actual: bytes.len() });
    }
    let mut r = Reader { buf: payload };
    let msg = match msg_type {
        PSM_TYPE => {
            let dut = r.u8();
            let device_user_type = DeviceUserType::from_code(dut).ok_or_else(|| out_of_range("device_user_type", dut))?;
            let timestamp_ms = r.u64();
            let dsecond = r.u16();
            let msg_count = r.u8();
            let temp_id = r.u32();
            let lat_e7 = r.i32();
            let lon_e7 = r.i32();
            let elev_dm = r.i16();
            let pos_accuracy_cm = r.u8();
            let speed_u = r.u16();
            let heading_u = r.u16();
            let code = r.u8();
            let cardinal = CardinalHeading::from_code(code).ok_or_else(|| out_of_range("cardinal", code))?;
            let m = Psm {
                device_user_type,
                timestamp_ms,
                dsecond,
                msg_count,
                temp_id,
                lat_e7,
                lon_e7,
                elev_dm,
                pos_accuracy_cm,
                speed_u,
                heading_u,
                cardinal,
            };
            m.validate()?;
            Message::Psm(m)
        }
        BSM_TYPE => {
            let m = Bsm {
                timestamp_ms: r.u64(),
                msg_count: r.u8(),
                temp_id: r.u32(),
                lat_e7: r.i32(),
                lon_e7: r.i32(),
                elev_dm: r.i16(),
                speed_u: r.u16(),
                heading_u: r.u16(),
                length_dm: r.u16(),
            };
            m.validate()?;
            Message::Bsm(m)
        }
        ALERT_TYPE => {
            let m = Alert {
                timestamp_ms: r.u64(),
                pedestrian_temp_id: r.u32(),
                vehicle_temp_id: r.u32(),
                ttc_ms: r.u16(),
                collision_lat_e7: r.i32(),
                collision_lon_e7: r.i32(),
            };
            m.validate()?;
            Message::Alert(m)
        }
        _ => unreachable!("frame_len accepted the type"),
    };
    Ok(msg)
}
