//! Sensor → car (CCS) → frame (FCS) coordinate transforms.
//!
//! The frame coordinate system is the car frame at a reference time; all
//! detections of a window are expressed in it by composing the ego pose at
//! the detection time with the inverse pose at the reference time. Radial
//! velocity is left untouched unless [`compensate_radial_velocity`] is
//! applied explicitly.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{mount_for, Detection, EgoPose, SensorMount};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    Ccs,
    #[default]
    Fcs,
}

impl std::str::FromStr for Frame {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ccs" => Ok(Frame::Ccs),
            "fcs" => Ok(Frame::Fcs),
            other => Err(Error::Config(format!("unknown frame '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameSpec {
    pub mode: Frame,
    /// Anchor pose time for FCS; ignored for CCS.
    pub reference_time: f64,
}

/// Wraps an angle to (-π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

pub fn sensor_to_ccs(d: &Detection, mount: &SensorMount) -> Result<Detection> {
    if d.sensor_id != mount.sensor_id {
        return Err(Error::SensorMismatch {
            detection: d.sensor_id,
            mount: mount.sensor_id,
        });
    }
    let bearing = d.azimuth + mount.yaw;
    Ok(Detection {
        x: mount.x + d.range * bearing.cos(),
        y: mount.y + d.range * bearing.sin(),
        ..*d
    })
}

fn check_span(poses: &[EgoPose], t: f64) -> Result<()> {
    let (start, end) = match (poses.first(), poses.last()) {
        (Some(a), Some(b)) => (a.time, b.time),
        _ => {
            return Err(Error::InvalidInput("empty ego-pose log".into()));
        }
    };
    if !(t >= start && t <= end) {
        return Err(Error::OutOfSpan {
            time: t,
            start,
            end,
        });
    }
    Ok(())
}

/// Linear position, shortest-arc heading interpolation.
pub fn interpolate_pose(poses: &[EgoPose], t: f64) -> Result<EgoPose> {
    check_span(poses, t)?;
    let i = poses.partition_point(|p| p.time < t);
    if poses[i].time == t {
        return Ok(poses[i]);
    }
    let (a, b) = (&poses[i - 1], &poses[i]);
    let s = (t - a.time) / (b.time - a.time);
    let lerp = |u: f64, v: f64| u + s * (v - u);
    Ok(EgoPose {
        time: t,
        x: lerp(a.x, b.x),
        y: lerp(a.y, b.y),
        heading: wrap_angle(a.heading + s * wrap_angle(b.heading - a.heading)),
        speed: lerp(a.speed, b.speed),
        yaw_rate: lerp(a.yaw_rate, b.yaw_rate),
    })
}

/// Rigid 2-D transform `p ↦ R(θ)p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rigid2 {
    pub cos: f64,
    pub sin: f64,
    pub tx: f64,
    pub ty: f64,
}

impl Rigid2 {
    pub fn from_pose(p: &EgoPose) -> Self {
        Rigid2 {
            cos: p.heading.cos(),
            sin: p.heading.sin(),
            tx: p.x,
            ty: p.y,
        }
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.cos * x - self.sin * y + self.tx,
            self.sin * x + self.cos * y + self.ty,
        )
    }

    pub fn inverse(&self) -> Self {
        Rigid2 {
            cos: self.cos,
            sin: -self.sin,
            tx: -(self.cos * self.tx + self.sin * self.ty),
            ty: -(-self.sin * self.tx + self.cos * self.ty),
        }
    }

    /// `self ∘ other`
    pub fn compose(&self, other: &Rigid2) -> Self {
        let (tx, ty) = self.apply(other.tx, other.ty);
        Rigid2 {
            cos: self.cos * other.cos - self.sin * other.sin,
            sin: self.sin * other.cos + self.cos * other.sin,
            tx,
            ty,
        }
    }
}

/// Car frame at `d.time` → car frame at `spec.reference_time`.
pub fn ccs_to_fcs(d: &Detection, poses: &[EgoPose], spec: &FrameSpec) -> Result<Detection> {
    if spec.mode == Frame::Ccs {
        return Ok(*d);
    }
    let at = interpolate_pose(poses, d.time)?;
    let reference = interpolate_pose(poses, spec.reference_time)?;
    let t = Rigid2::from_pose(&reference)
        .inverse()
        .compose(&Rigid2::from_pose(&at));
    let (x, y) = t.apply(d.x, d.y);
    Ok(Detection { x, y, ..*d })
}

/// Transforms a whole log into one frame. Pose lookups are done once per
/// distinct timestamp.
pub fn to_frame(dets: &[Detection], poses: &[EgoPose], spec: &FrameSpec) -> Result<Vec<Detection>> {
    if spec.mode == Frame::Ccs {
        return Ok(dets.to_vec());
    }
    let reference = Rigid2::from_pose(&interpolate_pose(poses, spec.reference_time)?).inverse();
    let mut cache: Option<(f64, Rigid2)> = None;
    dets.iter()
        .map(|d| {
            let t = match cache {
                Some((ct, t)) if ct == d.time => t,
                _ => {
                    let t = reference.compose(&Rigid2::from_pose(&interpolate_pose(poses, d.time)?));
                    cache = Some((d.time, t));
                    t
                }
            };
            let (x, y) = t.apply(d.x, d.y);
            Ok(Detection { x, y, ..*d })
        })
        .collect()
}

/// Ego velocity at the sensor, expressed in the car frame.
pub fn sensor_velocity(mount: &SensorMount, pose: &EgoPose) -> (f64, f64) {
    (pose.speed - pose.yaw_rate * mount.y, pose.yaw_rate * mount.x)
}

/// Adds back the ego motion component so that a static reflector reads
/// zero radial velocity. Only used when `compensate_doppler` is enabled.
pub fn compensate_radial_velocity(d: &Detection, mount: &SensorMount, pose: &EgoPose) -> Detection {
    let bearing = d.azimuth + mount.yaw;
    let (vx, vy) = sensor_velocity(mount, pose);
    Detection {
        radial_velocity: d.radial_velocity + vx * bearing.cos() + vy * bearing.sin(),
        ..*d
    }
}

pub fn compensate_log(
    dets: &[Detection],
    mounts: &[SensorMount],
    poses: &[EgoPose],
) -> Result<Vec<Detection>> {
    dets.iter()
        .map(|d| {
            let pose = interpolate_pose(poses, d.time)?;
            Ok(compensate_radial_velocity(d, &mount_for(mounts, d.sensor_id), &pose))
        })
        .collect()
}
