//! Domain types shared by every stage of the pipeline.
//!
//! Radial velocity sign convention: positive values mean the reflecting
//! point moves away from the sensor. Thresholds that act on radial velocity
//! (filter cascade, core-point gate) compare magnitudes.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Cluster label of one detection. `None` is noise.
pub type Label = Option<u32>;

/// One radar reflection point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub time: f64,
    pub sensor_id: u32,
    pub range: f64,
    /// Radians in the sensor frame.
    pub azimuth: f64,
    /// m/s, positive = receding.
    pub radial_velocity: f64,
    /// dB. Carried through, never used by any criterion.
    pub amplitude: f64,
    pub x: f64,
    pub y: f64,
    /// Ground-truth object id; `None` for background.
    pub gt_label: Option<u32>,
}

impl Detection {
    /// Builds a detection from sensor polar coordinates with `x`, `y` left
    /// in the sensor frame. Use [`crate::coords::sensor_to_ccs`] to move it
    /// into the car frame.
    pub fn from_polar(
        time: f64,
        sensor_id: u32,
        range: f64,
        azimuth: f64,
        radial_velocity: f64,
    ) -> Self {
        Detection {
            time,
            sensor_id,
            range,
            azimuth,
            radial_velocity,
            amplitude: 0.0,
            x: range * azimuth.cos(),
            y: range * azimuth.sin(),
            gt_label: None,
        }
    }

    pub fn speed_abs(&self) -> f64 {
        self.radial_velocity.abs()
    }

    pub fn dist_xy(&self, other: &Detection) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Ego vehicle pose sample in a fixed world frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoPose {
    pub time: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub yaw_rate: f64,
}

impl EgoPose {
    pub fn stationary(time: f64) -> Self {
        EgoPose {
            time,
            x: 0.0,
            y: 0.0,
            heading: 0.0,
            speed: 0.0,
            yaw_rate: 0.0,
        }
    }
}

/// Installation of one sensor relative to the car coordinate system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorMount {
    pub sensor_id: u32,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl SensorMount {
    pub fn identity(sensor_id: u32) -> Self {
        SensorMount {
            sensor_id,
            x: 0.0,
            y: 0.0,
            yaw: 0.0,
        }
    }
}

/// Looks up the mount for `sensor_id`, falling back to an identity mount.
pub fn mount_for(mounts: &[SensorMount], sensor_id: u32) -> SensorMount {
    mounts
        .iter()
        .find(|m| m.sensor_id == sensor_id)
        .copied()
        .unwrap_or_else(|| SensorMount::identity(sensor_id))
}

/// Per-detection clustering result for one time window.
///
/// `indices[i]` is the position of the i-th member in the originating log,
/// `labels[i]` its cluster id. Ids are dense: every id in `0..num_clusters()`
/// occurs at least once.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub window: (f64, f64),
    pub indices: Vec<usize>,
    pub labels: Vec<Label>,
}

impl ClusterAssignment {
    pub fn new(window: (f64, f64), indices: Vec<usize>, labels: Vec<Label>) -> Self {
        debug_assert_eq!(indices.len(), labels.len());
        ClusterAssignment {
            window,
            indices,
            labels,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_clusters(&self) -> usize {
        self.labels
            .iter()
            .flatten()
            .map(|&l| l as usize + 1)
            .max()
            .unwrap_or(0)
    }

    pub fn is_dense(&self) -> bool {
        let k = self.num_clusters();
        let mut seen = vec![false; k];
        for l in self.labels.iter().flatten() {
            seen[*l as usize] = true;
        }
        seen.into_iter().all(|s| s)
    }
}

/// Renumbers labels to `0..k` in order of first appearance. Noise stays noise.
pub fn densify(labels: &[Label]) -> Vec<Label> {
    let mut map: BTreeMap<u32, u32> = BTreeMap::new();
    labels
        .iter()
        .map(|l| {
            l.map(|id| {
                let next = map.len() as u32;
                *map.entry(id).or_insert(next)
            })
        })
        .collect()
}

/// Named real-valued parameter vector.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamSet(pub BTreeMap<String, f64>);

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.0.insert(name.to_string(), value);
        self
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.get(name).copied()
    }

    pub fn set(&mut self, name: &str, value: f64) {
        self.0.insert(name.to_string(), value);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &f64)> {
        self.0.iter()
    }
}

impl fmt::Display for ParamSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|(k, v)| format!("{k}={v:.4}")).collect();
        f.write_str(&parts.join(" "))
    }
}

/// Bounds of one search dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBound {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    #[serde(default)]
    pub integral: bool,
}

/// Box-bounded search space, dimension order fixed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamSpace {
    pub dims: Vec<ParamBound>,
}

impl ParamSpace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn real(mut self, name: &str, lower: f64, upper: f64) -> Self {
        self.dims.push(ParamBound {
            name: name.into(),
            lower,
            upper,
            integral: false,
        });
        self
    }

    pub fn integer(mut self, name: &str, lower: f64, upper: f64) -> Self {
        self.dims.push(ParamBound {
            name: name.into(),
            lower,
            upper,
            integral: true,
        });
        self
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    /// Maps a point of the unit cube to a parameter set. Integral
    /// dimensions are rounded to the nearest admissible integer.
    pub fn from_unit(&self, u: &[f64]) -> ParamSet {
        let mut p = ParamSet::new();
        for (d, &ui) in self.dims.iter().zip(u) {
            let v = d.lower + ui.clamp(0.0, 1.0) * (d.upper - d.lower);
            p.set(&d.name, if d.integral { round_in(v, d) } else { v });
        }
        p
    }

    pub fn to_unit(&self, p: &ParamSet) -> Vec<f64> {
        self.dims
            .iter()
            .map(|d| {
                let v = p.get(&d.name).unwrap_or(d.lower);
                if d.upper > d.lower {
                    (v - d.lower) / (d.upper - d.lower)
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn contains(&self, p: &ParamSet) -> bool {
        self.dims.iter().all(|d| match p.get(&d.name) {
            Some(v) => {
                v >= d.lower - 1e-12
                    && v <= d.upper + 1e-12
                    && (!d.integral || v.fract() == 0.0)
            }
            None => false,
        })
    }
}

fn round_in(v: f64, d: &ParamBound) -> f64 {
    let lo = d.lower.ceil();
    let hi = d.upper.floor();
    if lo > hi {
        // no integer inside the box; stay on the nearest bound
        return v.round().clamp(d.lower, d.upper);
    }
    v.round().clamp(lo, hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    NonFinite,
    NegativeRange,
    TimeRegression,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ViolationKind::NonFinite => "non-finite field",
            ViolationKind::NegativeRange => "negative range",
            ViolationKind::TimeRegression => "time regression",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub index: usize,
    pub kind: ViolationKind,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks a detection log for non-finite fields, negative ranges and time
/// regressions within a sensor.
pub fn validate_log(detections: &[Detection]) -> ValidationReport {
    let mut violations = Vec::new();
    let mut last_time: BTreeMap<u32, f64> = BTreeMap::new();
    for (index, d) in detections.iter().enumerate() {
        let fields = [
            ("time", d.time),
            ("range", d.range),
            ("azimuth", d.azimuth),
            ("radial_velocity", d.radial_velocity),
            ("amplitude", d.amplitude),
            ("x", d.x),
            ("y", d.y),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                violations.push(Violation {
                    index,
                    kind: ViolationKind::NonFinite,
                    detail: name.to_string(),
                });
            }
        }
        if d.range < 0.0 {
            violations.push(Violation {
                index,
                kind: ViolationKind::NegativeRange,
                detail: format!("range {}", d.range),
            });
        }
        if let Some(&prev) = last_time.get(&d.sensor_id) {
            if d.time < prev {
                violations.push(Violation {
                    index,
                    kind: ViolationKind::TimeRegression,
                    detail: format!("sensor {}: {} after {}", d.sensor_id, d.time, prev),
                });
            }
        }
        if d.time.is_finite() {
            last_time.insert(d.sensor_id, d.time);
        }
    }
    ValidationReport { violations }
}
