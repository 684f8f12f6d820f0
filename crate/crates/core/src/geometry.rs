//! Body-frame geometry: vectors, the hydrophone array, the pinger and the
//! scenario description, plus the exact geometric relations (delay, bearing,
//! octant) that every other module is checked against.
//!
//! Frame convention: +x forward, +y left, +z up. Azimuth is measured
//! counterclockwise from +x in the horizontal plane, elevation from the
//! horizontal plane towards +z.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simulator::{ChannelModel, NoiseSpec};

/// Nominal speed of sound in a freshwater pool at about 20 °C, m/s.
pub const DEFAULT_SOUND_SPEED: f64 = 1480.0;

/// Two hydrophones closer than this are treated as coincident.
pub const MIN_HYDROPHONE_SEPARATION: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("undefined bearing: direction has zero length")]
    UndefinedBearing,
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
}

/// A point or direction in the robot body frame, meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, other: Vec3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(self, other: Vec3) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Component along a body axis (0 = x, 1 = y, 2 = z).
    pub fn axis(self, axis: usize) -> f64 {
        match axis {
            0 => self.x,
            1 => self.y,
            2 => self.z,
            _ => panic!("axis index {axis} out of range"),
        }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    /// Mean of a non-empty set of points.
    pub fn centroid(points: &[Vec3]) -> Vec3 {
        assert!(!points.is_empty(), "centroid of an empty point set");
        let sum = points.iter().fold(Vec3::ZERO, |acc, &p| acc + p);
        sum * (1.0 / points.len() as f64)
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, rhs: Vec3) {
        *self = *self + rhs;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, k: f64) -> Vec3 {
        Vec3::new(self.x * k, self.y * k, self.z * k)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Sign pattern of a direction: one bit per body axis, `true` = positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct OctantId {
    pub positive: [bool; 3],
}

impl OctantId {
    pub fn new(sx: bool, sy: bool, sz: bool) -> Self {
        Self { positive: [sx, sy, sz] }
    }

    /// +1.0 / -1.0 per axis.
    pub fn signs(self) -> [f64; 3] {
        self.positive.map(|p| if p { 1.0 } else { -1.0 })
    }

    pub fn flipped(self) -> Self {
        Self {
            positive: self.positive.map(|p| !p),
        }
    }
}

impl fmt::Display for OctantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in self.positive {
            f.write_str(if p { "+" } else { "-" })?;
        }
        Ok(())
    }
}

impl std::str::FromStr for OctantId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let chars: Vec<char> = s.chars().collect();
        if chars.len() != 3 {
            return Err(format!("octant must be 3 sign characters, got {s:?}"));
        }
        let mut positive = [false; 3];
        for (slot, c) in positive.iter_mut().zip(chars) {
            *slot = match c {
                '+' => true,
                '-' => false,
                other => return Err(format!("invalid octant sign {other:?}")),
            };
        }
        Ok(Self { positive })
    }
}

impl Serialize for OctantId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for OctantId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Eight hydrophones split into two quads.
///
/// The precise quad is compact (every pair within half a carrier wavelength)
/// and feeds the TDOA solver. The coarse quad is spread across the hull and is
/// only used for the octant guess. `labels` holds the recording channel of
/// each hydrophone: the first four entries belong to `precise`, the last four
/// to `coarse`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HydrophoneArray {
    pub precise: [Vec3; 4],
    pub coarse: [Vec3; 4],
    pub labels: [usize; 8],
}

impl Default for HydrophoneArray {
    /// Puckered square (0.015 m diagonals, ±1.5 mm out of plane) centred at
    /// (0.2, 0, -0.1), and a coarse quad with one axis-aligned pair per body
    /// axis.
    fn default() -> Self {
        let c = Vec3::new(0.2, 0.0, -0.1);
        let a = 0.0075;
        let h = 0.0015;
        Self {
            precise: [
                c + Vec3::new(a, 0.0, h),
                c + Vec3::new(-a, 0.0, h),
                c + Vec3::new(0.0, a, -h),
                c + Vec3::new(0.0, -a, -h),
            ],
            coarse: [
                Vec3::new(0.3, 0.2, 0.15),
                Vec3::new(0.3, 0.2, -0.15),
                Vec3::new(-0.3, 0.2, -0.15),
                Vec3::new(0.3, -0.2, 0.15),
            ],
            labels: [0, 1, 2, 3, 4, 5, 6, 7],
        }
    }
}

impl HydrophoneArray {
    pub fn precise_channels(&self) -> [usize; 4] {
        [self.labels[0], self.labels[1], self.labels[2], self.labels[3]]
    }

    pub fn coarse_channels(&self) -> [usize; 4] {
        [self.labels[4], self.labels[5], self.labels[6], self.labels[7]]
    }

    /// All eight positions indexed by recording channel.
    pub fn positions_by_channel(&self) -> [Vec3; 8] {
        let mut out = [Vec3::ZERO; 8];
        for (k, &label) in self.labels.iter().enumerate() {
            out[label % 8] = self.position_at(k);
        }
        out
    }

    /// Position of a hydrophone given its recording channel.
    pub fn position_of_channel(&self, channel: usize) -> Option<Vec3> {
        self.labels
            .iter()
            .position(|&l| l == channel)
            .map(|k| self.position_at(k))
    }

    fn position_at(&self, k: usize) -> Vec3 {
        if k < 4 {
            self.precise[k]
        } else {
            self.coarse[k - 4]
        }
    }

    pub fn precise_centroid(&self) -> Vec3 {
        Vec3::centroid(&self.precise)
    }

    pub fn coarse_centroid(&self) -> Vec3 {
        Vec3::centroid(&self.coarse)
    }

    /// Largest distance between two precise hydrophones.
    pub fn max_precise_spacing(&self) -> f64 {
        precise_pairs()
            .iter()
            .map(|&(i, j)| self.precise[i].distance(self.precise[j]))
            .fold(0.0, f64::max)
    }
}

/// The six unordered pairs of the precise quad, as indices into `precise`.
pub fn precise_pairs() -> [(usize, usize); 6] {
    [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub message: String,
    /// Offending hydrophone pair as recording channels, when the violation is
    /// about a pair.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pair: Option<(usize, usize)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub half_wavelength: f64,
    pub violations: Vec<Violation>,
}

/// Checks the array invariants and the half-wavelength spacing of the precise
/// quad for a carrier at `frequency`. Violations are returned as data.
pub fn validate_array(array: &HydrophoneArray, frequency: f64, sound_speed: f64) -> ValidationReport {
    let half_wavelength = sound_speed / (2.0 * frequency);
    let mut violations = Vec::new();

    let mut seen = [false; 8];
    for &label in &array.labels {
        if label >= 8 {
            violations.push(Violation {
                message: format!("channel label {label} outside 0..7"),
                pair: None,
                distance: None,
            });
        } else if seen[label] {
            violations.push(Violation {
                message: format!("channel label {label} used twice"),
                pair: None,
                distance: None,
            });
        } else {
            seen[label] = true;
        }
    }

    let all: Vec<(usize, Vec3)> = (0..8).map(|k| (array.labels[k], array.position_at(k))).collect();
    for (k, &(label, p)) in all.iter().enumerate() {
        if !p.is_finite() {
            violations.push(Violation {
                message: format!("hydrophone on channel {label} has a non-finite position"),
                pair: None,
                distance: None,
            });
        }
        for &(other_label, q) in &all[k + 1..] {
            let d = p.distance(q);
            if d <= MIN_HYDROPHONE_SEPARATION {
                violations.push(Violation {
                    message: format!("hydrophones {label} and {other_label} coincide"),
                    pair: Some((label, other_label)),
                    distance: Some(d),
                });
            }
        }
    }

    for (i, j) in precise_pairs() {
        let d = array.precise[i].distance(array.precise[j]);
        if d > half_wavelength {
            let (ci, cj) = (array.labels[i], array.labels[j]);
            violations.push(Violation {
                message: format!(
                    "precise pair ({ci}, {cj}) is {d:.6} m apart, more than half a wavelength ({half_wavelength:.6} m)"
                ),
                pair: Some((ci, cj)),
                distance: Some(d),
            });
        }
    }

    for (axis, name) in ["x", "y", "z"].iter().enumerate() {
        let has_neg = array.coarse.iter().any(|p| p.axis(axis) < 0.0);
        let has_pos = array.coarse.iter().any(|p| p.axis(axis) > 0.0);
        if !(has_neg && has_pos) {
            violations.push(Violation {
                message: format!("coarse quad does not span {name}-axis"),
                pair: None,
                distance: None,
            });
        }
    }

    ValidationReport {
        ok: violations.is_empty(),
        half_wavelength,
        violations,
    }
}

/// Straight-line travel time from `source` to `hydrophone`.
pub fn propagation_delay(source: Vec3, hydrophone: Vec3, sound_speed: f64) -> f64 {
    source.distance(hydrophone) / sound_speed
}

/// Azimuth in [0, 360) and elevation in [-90, 90], degrees.
pub fn true_azimuth_elevation(direction: Vec3) -> Result<(f64, f64), GeometryError> {
    if !(direction.norm() > 0.0) {
        return Err(GeometryError::UndefinedBearing);
    }
    let mut azimuth = direction.y.atan2(direction.x).to_degrees();
    if azimuth < 0.0 {
        azimuth += 360.0;
    }
    if azimuth >= 360.0 {
        azimuth -= 360.0;
    }
    let horizontal = direction.x.hypot(direction.y);
    let elevation = direction.z.atan2(horizontal).to_degrees();
    Ok((azimuth, elevation))
}

/// Componentwise sign pattern; an exact zero counts as positive.
pub fn octant_of(direction: Vec3) -> OctantId {
    OctantId::new(direction.x >= 0.0, direction.y >= 0.0, direction.z >= 0.0)
}

/// Smallest absolute difference between two azimuths, degrees in [0, 180].
pub fn azimuth_difference(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PingerSource {
    pub position: Vec3,
    #[serde(default = "PingerSource::default_frequency")]
    pub frequency: f64,
    #[serde(default = "PingerSource::default_ping_duration")]
    pub ping_duration: f64,
    #[serde(default = "PingerSource::default_repetition_interval")]
    pub repetition_interval: f64,
    /// Source strength at 1 m.
    #[serde(default = "PingerSource::default_amplitude")]
    pub amplitude: f64,
}

impl PingerSource {
    fn default_frequency() -> f64 {
        40_000.0
    }
    fn default_ping_duration() -> f64 {
        0.004
    }
    fn default_repetition_interval() -> f64 {
        2.0
    }
    fn default_amplitude() -> f64 {
        1.0
    }

    pub fn at(position: Vec3) -> Self {
        Self {
            position,
            frequency: Self::default_frequency(),
            ping_duration: Self::default_ping_duration(),
            repetition_interval: Self::default_repetition_interval(),
            amplitude: Self::default_amplitude(),
        }
    }

    pub fn check(&self) -> Result<(), GeometryError> {
        let bad = |m: &str| Err(GeometryError::InvalidScenario(m.to_string()));
        if !self.position.is_finite() {
            return bad("pinger position must be finite");
        }
        if !(self.frequency > 0.0) {
            return bad("pinger frequency must be positive");
        }
        if !(self.ping_duration > 0.0 && self.ping_duration < self.repetition_interval) {
            return bad("ping_duration must satisfy 0 < ping_duration < repetition_interval");
        }
        if !(self.amplitude > 0.0) {
            return bad("pinger amplitude must be positive");
        }
        Ok(())
    }
}

/// Everything needed to render a synthetic recording. This is the JSON
/// document the CLI consumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub array: HydrophoneArray,
    pub pinger: PingerSource,
    #[serde(default = "Scenario::default_sound_speed")]
    pub sound_speed: f64,
    #[serde(default = "Scenario::default_sample_rate")]
    pub sample_rate: f64,
    #[serde(default = "Scenario::default_record_duration")]
    pub record_duration: f64,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub front_end: ChannelModel,
    #[serde(default)]
    pub seed: u64,
}

impl Scenario {
    fn default_sound_speed() -> f64 {
        DEFAULT_SOUND_SPEED
    }
    fn default_sample_rate() -> f64 {
        500_000.0
    }
    fn default_record_duration() -> f64 {
        2.1
    }

    /// Default rig, calibrated noise, pinger at `position`.
    pub fn with_pinger(position: Vec3) -> Self {
        Self {
            array: HydrophoneArray::default(),
            pinger: PingerSource::at(position),
            sound_speed: DEFAULT_SOUND_SPEED,
            sample_rate: Self::default_sample_rate(),
            record_duration: Self::default_record_duration(),
            noise: NoiseSpec::default(),
            front_end: ChannelModel::default(),
            seed: 0,
        }
    }

    pub fn check(&self) -> Result<(), GeometryError> {
        let bad = |m: String| Err(GeometryError::InvalidScenario(m));
        self.pinger.check()?;
        if !(self.sound_speed > 0.0) {
            return bad("sound_speed must be positive".into());
        }
        if !(self.sample_rate > 2.0 * self.pinger.frequency) {
            return bad(format!(
                "sample_rate {} Hz is not above twice the carrier ({} Hz)",
                self.sample_rate, self.pinger.frequency
            ));
        }
        if !(self.record_duration >= self.pinger.repetition_interval) {
            return bad("record_duration must be at least one repetition_interval".into());
        }
        self.noise.check().or_else(bad)?;
        self.front_end.check(self.sample_rate).or_else(bad)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_quad(side: f64) -> [Vec3; 4] {
        let h = side / 2.0;
        [
            Vec3::new(h, h, 0.0),
            Vec3::new(-h, h, 0.0),
            Vec3::new(-h, -h, 0.0),
            Vec3::new(h, -h, 0.0),
        ]
    }

    fn tetrahedron(edge: f64) -> [Vec3; 4] {
        let a = edge / 2.0;
        let h = a / std::f64::consts::SQRT_2;
        [
            Vec3::new(a, 0.0, h),
            Vec3::new(-a, 0.0, h),
            Vec3::new(0.0, a, -h),
            Vec3::new(0.0, -a, -h),
        ]
    }

    #[test]
    fn default_array_is_valid_at_40khz() {
        let report = validate_array(&HydrophoneArray::default(), 40_000.0, 1480.0);
        assert!(report.ok, "{:?}", report.violations);
        assert!((report.half_wavelength - 0.0185).abs() < 1e-12);
    }

    #[test]
    fn quad_with_all_pairs_at_15mm_passes() {
        let array = HydrophoneArray {
            precise: tetrahedron(0.015),
            ..HydrophoneArray::default()
        };
        assert!(validate_array(&array, 40_000.0, 1480.0).ok);
    }

    #[test]
    fn square_of_side_15mm_fails_on_its_diagonals() {
        let array = HydrophoneArray {
            precise: square_quad(0.015),
            ..HydrophoneArray::default()
        };
        let report = validate_array(&array, 40_000.0, 1480.0);
        assert!(!report.ok);
        assert_eq!(report.violations.len(), 2);
        for v in &report.violations {
            assert!((v.distance.unwrap() - 0.015 * 2f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn wide_pair_is_reported() {
        let mut array = HydrophoneArray::default();
        let c = array.precise[0];
        array.precise[1] = c + Vec3::new(-0.025, 0.0, 0.0);
        let report = validate_array(&array, 40_000.0, 1480.0);
        assert!(!report.ok);
        let v = report
            .violations
            .iter()
            .find(|v| v.pair == Some((0, 1)))
            .expect("pair (0,1) listed");
        assert!((v.distance.unwrap() - 0.025).abs() < 1e-12);
    }

    #[test]
    fn coarse_quad_on_one_side_does_not_span_x() {
        let mut array = HydrophoneArray::default();
        for p in &mut array.coarse {
            p.x = p.x.abs() + 0.1;
        }
        let report = validate_array(&array, 40_000.0, 1480.0);
        assert!(report
            .violations
            .iter()
            .any(|v| v.message == "coarse quad does not span x-axis"));
    }

    #[test]
    fn duplicate_labels_and_coincident_hydrophones() {
        let mut array = HydrophoneArray::default();
        array.labels[7] = 0;
        array.coarse[1] = array.coarse[0];
        let report = validate_array(&array, 40_000.0, 1480.0);
        assert!(report.violations.iter().any(|v| v.message.contains("used twice")));
        assert!(report.violations.iter().any(|v| v.message.contains("coincide")));
    }

    #[test]
    fn propagation_delay_examples() {
        assert_eq!(propagation_delay(Vec3::new(1480.0, 0.0, 0.0), Vec3::ZERO, 1480.0), 1.0);
        let p = Vec3::new(0.3, -2.0, 1.0);
        assert_eq!(propagation_delay(p, p, 1480.0), 0.0);
        let d = propagation_delay(Vec3::new(3.0, 4.0, 0.0), Vec3::ZERO, 1480.0);
        assert!((d - 5.0 / 1480.0).abs() < 1e-18);
    }

    #[test]
    fn bearing_convention_anchors() {
        assert_eq!(true_azimuth_elevation(Vec3::new(1.0, 0.0, 0.0)).unwrap(), (0.0, 0.0));
        let (az, el) = true_azimuth_elevation(Vec3::new(0.0, 1.0, 0.0)).unwrap();
        assert!((az - 90.0).abs() < 1e-12 && el.abs() < 1e-12);
        let (az, el) = true_azimuth_elevation(Vec3::new(-1.0, 0.0, 1.0)).unwrap();
        assert!((az - 180.0).abs() < 1e-12 && (el - 45.0).abs() < 1e-12);
        let (az, _) = true_azimuth_elevation(Vec3::new(1.0, -1e-20, 0.0)).unwrap();
        assert!((0.0..360.0).contains(&az));
        assert_eq!(true_azimuth_elevation(Vec3::ZERO), Err(GeometryError::UndefinedBearing));
    }

    #[test]
    fn octant_examples() {
        assert_eq!(octant_of(Vec3::new(3.0, 2.0, 1.0)).to_string(), "+++");
        assert_eq!(octant_of(Vec3::new(-1.0, 5.0, -2.0)).to_string(), "-+-");
        assert_eq!(octant_of(Vec3::new(0.0, -1.0, 0.0)).to_string(), "+-+");
        assert_eq!("+-+".parse::<OctantId>().unwrap(), OctantId::new(true, false, true));
        assert!("++".parse::<OctantId>().is_err());
    }

    #[test]
    fn azimuth_difference_wraps() {
        assert!((azimuth_difference(359.0, 1.0) - 2.0).abs() < 1e-12);
        assert!((azimuth_difference(10.0, 190.0) - 180.0).abs() < 1e-12);
    }

    #[test]
    fn scenario_requires_pinger() {
        let err = serde_json::from_str::<Scenario>("{}").unwrap_err();
        assert!(err.to_string().contains("pinger"));
        let s: Scenario = serde_json::from_str(r#"{"pinger": {"position": {"x": 10, "y": 5, "z": -2}}}"#).unwrap();
        assert_eq!(s.array, HydrophoneArray::default());
        s.check().unwrap();
    }
}
