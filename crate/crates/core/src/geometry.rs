//! Coordinate math: image-plane homographies, top-view pixel to WGS-84
//! mapping, and the point-to-point kinematics (distance, speed, heading)
//! derived from two timestamped fixes.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean earth radius used by every spherical formula in the crate.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

const SINGULAR_EPS: f64 = 1e-12;
const MIN_RCOND: f64 = 1e-12;
const STILL_EPS_M: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate correspondence set (reciprocal condition number {rcond:.3e})")]
    DegenerateCorrespondence { rcond: f64 },
    #[error("singular homography (|det| = {det:.3e})")]
    SingularHomography { det: f64 },
    #[error("point maps to infinity (|z'| = {z:.3e})")]
    PointAtInfinity { z: f64 },
    #[error("zero time delta between fixes")]
    ZeroTimeDelta,
    #[error("latitude {lat} / longitude {lon} outside WGS-84 range")]
    InvalidPosition { lat: f64, lon: f64 },
    #[error("pixel ({px}, {py}) outside the unit square")]
    PixelOutOfRange { px: f64, py: f64 },
    #[error("geo bounds corners are degenerate: {0}")]
    DegenerateBounds(&'static str),
}

/// Relative image coordinate: `px` is the fraction of image width, `py` the
/// fraction of image height (growing downward).
///
/// Raw coordinates may leave the unit square after a projective transform;
/// [`PixelPoint::in_unit_square`] tells whether the point is in view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelPoint {
    pub px: f64,
    pub py: f64,
}

impl PixelPoint {
    pub const fn new(px: f64, py: f64) -> Self {
        Self { px, py }
    }

    pub fn in_unit_square(&self) -> bool {
        (0.0..=1.0).contains(&self.px) && (0.0..=1.0).contains(&self.py)
    }
}

/// WGS-84 latitude/longitude in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPosition {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPosition {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeometryError> {
        let pos = Self { lat, lon };
        if pos.is_valid() {
            Ok(pos)
        } else {
            Err(GeometryError::InvalidPosition { lat, lon })
        }
    }

    pub fn is_valid(&self) -> bool {
        (-90.0..=90.0).contains(&self.lat) && (-180.0..=180.0).contains(&self.lon)
    }
}

impl fmt::Display for GeoPosition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.7}, {:.7})", self.lat, self.lon)
    }
}

/// World coordinates of the top-view image corners: top-left, top-right,
/// bottom-right, bottom-left. The patch is assumed north-aligned, so the
/// vertical image axis runs along latitude (w1 -> w4) and the horizontal axis
/// along longitude (w1 -> w2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoBounds {
    pub w1: GeoPosition,
    pub w2: GeoPosition,
    pub w3: GeoPosition,
    pub w4: GeoPosition,
}

impl GeoBounds {
    pub fn new(
        w1: GeoPosition,
        w2: GeoPosition,
        w3: GeoPosition,
        w4: GeoPosition,
    ) -> Result<Self, GeometryError> {
        let corners = [w1, w2, w3, w4];
        for (i, a) in corners.iter().enumerate() {
            if !a.is_valid() {
                return Err(GeometryError::InvalidPosition { lat: a.lat, lon: a.lon });
            }
            for b in &corners[i + 1..] {
                if a == b {
                    return Err(GeometryError::DegenerateBounds("corners must be distinct"));
                }
            }
        }
        let bounds = Self { w1, w2, w3, w4 };
        if bounds.lat_span() == 0.0 {
            return Err(GeometryError::DegenerateBounds("zero latitude span"));
        }
        if bounds.lon_span() == 0.0 {
            return Err(GeometryError::DegenerateBounds("zero longitude span"));
        }
        Ok(bounds)
    }

    /// Latitude change from the top edge to the bottom edge.
    pub fn lat_span(&self) -> f64 {
        self.w4.lat - self.w1.lat
    }

    /// Longitude change from the left edge to the right edge.
    pub fn lon_span(&self) -> f64 {
        self.w2.lon - self.w1.lon
    }
}

/// 3x3 projective transform, row-major, normalized so `m[2][2] == 1` when
/// that entry is nonzero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    m: Matrix3<f64>,
}

impl Homography {
    pub fn identity() -> Self {
        Self { m: Matrix3::identity() }
    }

    pub fn from_rows(rows: [[f64; 3]; 3]) -> Result<Self, GeometryError> {
        let m = Matrix3::from_row_slice(&[
            rows[0][0], rows[0][1], rows[0][2], rows[1][0], rows[1][1], rows[1][2], rows[2][0],
            rows[2][1], rows[2][2],
        ]);
        Self::from_matrix(m)
    }

    fn from_matrix(mut m: Matrix3<f64>) -> Result<Self, GeometryError> {
        let scale = m[(2, 2)];
        if scale != 0.0 {
            m /= scale;
        }
        let det = m.determinant();
        if !det.is_finite() || det.abs() <= SINGULAR_EPS {
            return Err(GeometryError::SingularHomography { det });
        }
        Ok(Self { m })
    }

    pub fn rows(&self) -> [[f64; 3]; 3] {
        let m = &self.m;
        [
            [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
            [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
            [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
        ]
    }

    pub fn inverse(&self) -> Result<Self, GeometryError> {
        let inv = self
            .m
            .try_inverse()
            .ok_or(GeometryError::SingularHomography { det: self.m.determinant() })?;
        Self::from_matrix(inv)
    }

    /// Applies the transform to the augmented pixel `[px, py, 1]` and
    /// dehomogenizes the result.
    pub fn apply(&self, p: PixelPoint) -> Result<PixelPoint, GeometryError> {
        let v = self.m * Vector3::new(p.px, p.py, 1.0);
        let z = v[2];
        if z.abs() <= SINGULAR_EPS {
            return Err(GeometryError::PointAtInfinity { z });
        }
        Ok(PixelPoint::new(v[0] / z, v[1] / z))
    }
}

/// Solves the 4-point direct linear system for the homography taking each
/// `src[i]` to `dst[i]`.
pub fn homography_from_correspondences(
    src: &[PixelPoint; 4],
    dst: &[PixelPoint; 4],
) -> Result<Homography, GeometryError> {
    let mut a = SMatrix::<f64, 8, 8>::zeros();
    let mut b = SVector::<f64, 8>::zeros();
    for (i, (s, d)) in src.iter().zip(dst).enumerate() {
        let (x, y, u, v) = (s.px, s.py, d.px, d.py);
        let r = 2 * i;
        a.set_row(r, &SMatrix::<f64, 1, 8>::from_row_slice(&[x, y, 1.0, 0.0, 0.0, 0.0, -x * u, -y * u]));
        a.set_row(r + 1, &SMatrix::<f64, 1, 8>::from_row_slice(&[0.0, 0.0, 0.0, x, y, 1.0, -x * v, -y * v]));
        b[r] = u;
        b[r + 1] = v;
    }

    let sv = a.singular_values();
    let (max, min) = sv.iter().fold((0.0f64, f64::INFINITY), |(hi, lo), &s| (hi.max(s), lo.min(s)));
    let rcond = if max > 0.0 { min / max } else { 0.0 };
    if !rcond.is_finite() || rcond < MIN_RCOND {
        return Err(GeometryError::DegenerateCorrespondence { rcond });
    }

    let h = a
        .lu()
        .solve(&b)
        .ok_or(GeometryError::DegenerateCorrespondence { rcond })?;
    Homography::from_rows([[h[0], h[1], h[2]], [h[3], h[4], h[5]], [h[6], h[7], 1.0]])
}

pub fn apply_homography(h: &Homography, p: PixelPoint) -> Result<PixelPoint, GeometryError> {
    h.apply(p)
}

/// Linear map from a top-view pixel in the unit square to latitude/longitude.
pub fn pixel_to_geo(bounds: &GeoBounds, p: PixelPoint) -> Result<GeoPosition, GeometryError> {
    if !p.in_unit_square() {
        return Err(GeometryError::PixelOutOfRange { px: p.px, py: p.py });
    }
    // Relative pixel spans are 1, so the per-pixel rates are the corner spans.
    // Written as a two-sided lerp so both edges land exactly on the corners.
    let lat = bounds.w1.lat * (1.0 - p.py) + bounds.w4.lat * p.py;
    let lon = bounds.w1.lon * (1.0 - p.px) + bounds.w2.lon * p.px;
    Ok(GeoPosition { lat, lon })
}

/// Inverse of [`pixel_to_geo`]. The result may fall outside the unit square
/// when `pos` lies outside the calibrated patch.
pub fn geo_to_pixel(bounds: &GeoBounds, pos: GeoPosition) -> PixelPoint {
    PixelPoint::new(
        (pos.lon - bounds.w1.lon) / bounds.lon_span(),
        (pos.lat - bounds.w1.lat) / bounds.lat_span(),
    )
}

/// Great-circle distance in meters.
pub fn haversine_distance(l1: GeoPosition, l2: GeoPosition) -> f64 {
    let phi1 = l1.lat.to_radians();
    let phi2 = l2.lat.to_radians();
    let d_phi = phi2 - phi1;
    let d_gamma = (l2.lon - l1.lon).to_radians();
    let a = (d_phi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (d_gamma / 2.0).sin().powi(2);
    let a = a.clamp(0.0, 1.0);
    EARTH_RADIUS_M * 2.0 * a.sqrt().atan2((1.0 - a).sqrt())
}

/// Ground speed between two fixes, meters per second.
pub fn velocity(l1: GeoPosition, l2: GeoPosition, t1_ms: u64, t2_ms: u64) -> Result<f64, GeometryError> {
    if t1_ms == t2_ms {
        return Err(GeometryError::ZeroTimeDelta);
    }
    let dt_s = t1_ms.abs_diff(t2_ms) as f64 / 1000.0;
    Ok(haversine_distance(l1, l2) / dt_s)
}

/// `atan2(dlat, dlon)` in radians: angle from the east axis, counterclockwise.
/// No displacement yields 0.
pub fn heading(l1: GeoPosition, l2: GeoPosition) -> f64 {
    let d_phi = (l2.lat - l1.lat).to_radians();
    let d_gamma = (l2.lon - l1.lon).to_radians();
    d_phi.atan2(d_gamma)
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(theta: f64) -> f64 {
    let wrapped = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if wrapped <= -PI {
        wrapped + 2.0 * PI
    } else {
        wrapped
    }
}

/// Text heading carried alongside the numeric one. Variants name the travel
/// direction as from-to, e.g. `WestEast` is moving east.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CardinalHeading {
    #[serde(rename = "EW")]
    EastWest = 0,
    #[serde(rename = "WE")]
    WestEast = 1,
    #[serde(rename = "NS")]
    NorthSouth = 2,
    #[serde(rename = "SN")]
    SouthNorth = 3,
}

impl CardinalHeading {
    pub const ALL: [CardinalHeading; 4] = [
        CardinalHeading::EastWest,
        CardinalHeading::WestEast,
        CardinalHeading::NorthSouth,
        CardinalHeading::SouthNorth,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn abbrev(self) -> &'static str {
        match self {
            CardinalHeading::EastWest => "EW",
            CardinalHeading::WestEast => "WE",
            CardinalHeading::NorthSouth => "NS",
            CardinalHeading::SouthNorth => "SN",
        }
    }

    pub fn from_abbrev(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.abbrev().eq_ignore_ascii_case(s.trim()))
    }

    /// Nominal travel direction as an east-axis angle, matching [`heading`].
    pub fn nominal_angle(self) -> f64 {
        match self {
            CardinalHeading::EastWest => PI,
            CardinalHeading::WestEast => 0.0,
            CardinalHeading::NorthSouth => -PI / 2.0,
            CardinalHeading::SouthNorth => PI / 2.0,
        }
    }
}

impl fmt::Display for CardinalHeading {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.abbrev())
    }
}

/// Dominant-axis classification of a displacement in meters. Ties go to the
/// east-west axis; sub-micrometer moves keep `previous`.
pub fn classify_heading(l1: GeoPosition, l2: GeoPosition, previous: CardinalHeading) -> CardinalHeading {
    let d_north = EARTH_RADIUS_M * (l2.lat - l1.lat).to_radians();
    let d_east = EARTH_RADIUS_M * l1.lat.to_radians().cos() * (l2.lon - l1.lon).to_radians();
    if d_north.abs() < STILL_EPS_M && d_east.abs() < STILL_EPS_M {
        return previous;
    }
    if d_east.abs() >= d_north.abs() {
        if d_east > 0.0 {
            CardinalHeading::WestEast
        } else {
            CardinalHeading::EastWest
        }
    } else if d_north > 0.0 {
        CardinalHeading::SouthNorth
    } else {
        CardinalHeading::NorthSouth
    }
}

/// Distance, speed and heading for one pair of fixes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kinematics {
    pub distance_m: f64,
    pub velocity_mps: f64,
    pub heading_rad: f64,
}

impl Kinematics {
    pub fn between(l1: GeoPosition, l2: GeoPosition, t1_ms: u64, t2_ms: u64) -> Result<Self, GeometryError> {
        let velocity_mps = velocity(l1, l2, t1_ms, t2_ms)?;
        Ok(Self {
            distance_m: haversine_distance(l1, l2),
            velocity_mps,
            heading_rad: heading(l1, l2),
        })
    }
}

/// Moves `origin` by a local east/north offset in meters (equirectangular,
/// good to well under a millimeter over an intersection).
pub fn offset_position(origin: GeoPosition, east_m: f64, north_m: f64) -> GeoPosition {
    let lat = origin.lat + (north_m / EARTH_RADIUS_M).to_degrees();
    let lon = origin.lon + (east_m / (EARTH_RADIUS_M * origin.lat.to_radians().cos())).to_degrees();
    GeoPosition { lat, lon }
}
