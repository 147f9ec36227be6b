//! Synthetic radar scenes with exact ground truth.
//!
//! Objects are rectangles following piecewise-linear tracks. Every sensor
//! cycle each visible object returns a Poisson number of reflections on its
//! sensor-facing boundary, with a mean that falls off with range. Clutter is
//! scattered uniformly over an annular sector in front of each sensor. All
//! randomness for one (cycle, sensor) pair comes from its own ChaCha stream,
//! so cycles can be generated in parallel and in any order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coords::{sensor_to_ccs, sensor_velocity, wrap_angle, Rigid2};
use crate::error::{Error, Result};
use crate::types::{Detection, EgoPose, SensorMount};

pub const AMPLITUDE: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorSpec {
    pub mount: SensorMount,
    /// Half opening angle, radians.
    pub fov: f64,
    pub max_range: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EgoMotion {
    Stationary,
    ConstantVelocity { speed: f64 },
    Turn { speed: f64, yaw_rate: f64 },
}

impl EgoMotion {
    pub fn pose_at(&self, t: f64) -> EgoPose {
        match *self {
            EgoMotion::Stationary => EgoPose::stationary(t),
            EgoMotion::ConstantVelocity { speed } => EgoPose {
                time: t,
                x: speed * t,
                y: 0.0,
                heading: 0.0,
                speed,
                yaw_rate: 0.0,
            },
            EgoMotion::Turn { speed, yaw_rate } => {
                let (x, y) = if yaw_rate.abs() < 1e-12 {
                    (speed * t, 0.0)
                } else {
                    let r = speed / yaw_rate;
                    (r * (yaw_rate * t).sin(), r * (1.0 - (yaw_rate * t).cos()))
                };
                EgoPose {
                    time: t,
                    x,
                    y,
                    heading: wrap_angle(yaw_rate * t),
                    speed,
                    yaw_rate,
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectClass {
    Car,
    Pedestrian,
    Truck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub id: u32,
    pub class: ObjectClass,
    pub length: f64,
    pub width: f64,
    /// World-frame track. A single waypoint is a static object present for
    /// the whole scene; otherwise the object leaves after the last one.
    pub waypoints: Vec<[f64; 2]>,
    /// One speed per segment, or a single speed for all segments.
    pub speeds: Vec<f64>,
    #[serde(default)]
    pub start_time: f64,
    /// Expected detections per cycle and sensor at 50 m.
    pub reflectivity: f64,
    /// Time intervals without any reflections.
    #[serde(default)]
    pub occlusions: Vec<[f64; 2]>,
    /// Probability that a sensor misses the object for a whole cycle.
    #[serde(default)]
    pub dropout: f64,
}

/// Kinematic state of an object at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub vx: f64,
    pub vy: f64,
}

impl ObjectSpec {
    fn segment_speed(&self, i: usize) -> f64 {
        if self.speeds.len() == 1 {
            self.speeds[0]
        } else {
            self.speeds[i]
        }
    }

    pub fn state_at(&self, t: f64) -> Option<ObjectState> {
        if t < self.start_time {
            return None;
        }
        if self.waypoints.len() == 1 {
            let [x, y] = self.waypoints[0];
            return Some(ObjectState {
                x,
                y,
                heading: 0.0,
                vx: 0.0,
                vy: 0.0,
            });
        }
        let mut tau = t - self.start_time;
        for i in 0..self.waypoints.len() - 1 {
            let [x0, y0] = self.waypoints[i];
            let [x1, y1] = self.waypoints[i + 1];
            let len = (x1 - x0).hypot(y1 - y0);
            let v = self.segment_speed(i);
            let dur = len / v;
            if tau <= dur {
                let (ux, uy) = ((x1 - x0) / len, (y1 - y0) / len);
                return Some(ObjectState {
                    x: x0 + ux * v * tau,
                    y: y0 + uy * v * tau,
                    heading: uy.atan2(ux),
                    vx: ux * v,
                    vy: uy * v,
                });
            }
            tau -= dur;
        }
        None
    }

    pub fn occluded_at(&self, t: f64) -> bool {
        self.occlusions.iter().any(|&[a, b]| t >= a && t < b)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(format!("object {}: {m}", self.id)));
        if !(self.length > 0.0 && self.width > 0.0) {
            return bad("extent must be positive");
        }
        if self.waypoints.is_empty() {
            return bad("needs at least one waypoint");
        }
        let segs = self.waypoints.len().saturating_sub(1);
        if segs > 0 && self.speeds.len() != 1 && self.speeds.len() != segs {
            return bad("speeds must have one entry or one per segment");
        }
        if segs > 0 && self.speeds.iter().any(|&v| !(v > 0.0)) {
            return bad("speeds must be positive");
        }
        if self
            .waypoints
            .windows(2)
            .any(|w| w[0][0] == w[1][0] && w[0][1] == w[1][1])
        {
            return bad("repeated waypoint");
        }
        if !(self.reflectivity >= 0.0) || !(0.0..=1.0).contains(&self.dropout) {
            return bad("reflectivity must be >= 0 and dropout in [0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClutterSpec {
    /// Detections per second per 100 m².
    pub density: f64,
    /// Spread of the radial velocity of static clutter (zero mean).
    pub sigma_vr: f64,
    /// Share of clutter whose radial velocity is uniform in
    /// `±spurious_vr` instead.
    pub spurious_fraction: f64,
    pub spurious_vr: f64,
    pub min_range: f64,
    pub max_range: f64,
}

impl Default for ClutterSpec {
    fn default() -> Self {
        ClutterSpec {
            density: 0.0,
            sigma_vr: 0.15,
            spurious_fraction: 0.0,
            spurious_vr: 0.0,
            min_range: 2.0,
            max_range: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    #[serde(default)]
    pub name: String,
    pub duration: f64,
    #[serde(default = "default_cycle")]
    pub cycle: f64,
    #[serde(default)]
    pub seed: u64,
    pub sensors: Vec<SensorSpec>,
    #[serde(default = "default_ego")]
    pub ego: EgoMotion,
    #[serde(default)]
    pub objects: Vec<ObjectSpec>,
    #[serde(default)]
    pub clutter: ClutterSpec,
    #[serde(default)]
    pub sigma_xy: f64,
    #[serde(default)]
    pub sigma_vr: f64,
    /// Hand-placed detections merged into the log verbatim.
    #[serde(default)]
    pub fixed_detections: Vec<Detection>,
}

fn default_cycle() -> f64 {
    0.05
}

fn default_ego() -> EgoMotion {
    EgoMotion::Stationary
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0 && self.cycle > 0.0) {
            return Err(Error::InvalidInput("duration and cycle must be positive".into()));
        }
        if self.sensors.is_empty() {
            return Err(Error::InvalidInput("scene needs at least one sensor".into()));
        }
        if !(self.sigma_xy >= 0.0 && self.sigma_vr >= 0.0 && self.clutter.sigma_vr >= 0.0) {
            return Err(Error::InvalidInput("noise levels must be >= 0".into()));
        }
        for o in &self.objects {
            o.validate()?;
        }
        Ok(())
    }

    pub fn mounts(&self) -> Vec<SensorMount> {
        self.sensors.iter().map(|s| s.mount).collect()
    }

    pub fn cycle_count(&self) -> usize {
        (self.duration / self.cycle).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub detections: Vec<Detection>,
    pub poses: Vec<EgoPose>,
    pub mounts: Vec<SensorMount>,
}

/// Counter-based substream for one (cycle, sensor) pair.
fn stream_rng(seed: u64, cycle: usize, sensor: usize, sensors: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((cycle * sensors + sensor) as u64);
    rng
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map_or(0, |p| p.sample(rng) as usize)
}

fn gaussian(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma).map_or(0.0, |n| n.sample(rng))
    } else {
        0.0
    }
}

/// Mean detection count of an object at range `r`.
pub fn expected_count(reflectivity: f64, r: f64) -> f64 {
    reflectivity * (50.0 / r).max(0.2)
}

/// Uniform point on the edges of the rectangle that face `(sx, sy)`.
fn facing_point(rng: &mut ChaCha8Rng, o: &ObjectSpec, st: &ObjectState, sx: f64, sy: f64) -> (f64, f64) {
    let (s, c) = st.heading.sin_cos();
    let (hl, hw) = (o.length / 2.0, o.width / 2.0);
    // local corners counter-clockwise; edge k runs from corner k to k+1
    let corners = [(hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)];
    let world = |(u, v): (f64, f64)| (st.x + c * u - s * v, st.y + s * u + c * v);
    let mut edges = Vec::with_capacity(2);
    for k in 0..4 {
        let a = world(corners[k]);
        let b = world(corners[(k + 1) % 4]);
        // outward normal of a counter-clockwise edge
        let (nx, ny) = (b.1 - a.1, a.0 - b.0);
        let (mx, my) = ((a.0 + b.0) / 2.0, (a.1 + b.1) / 2.0);
        if nx * (sx - mx) + ny * (sy - my) > 0.0 {
            edges.push((a, b, (b.0 - a.0).hypot(b.1 - a.1)));
        }
    }
    let total: f64 = edges.iter().map(|e| e.2).sum();
    let mut pick = rng.random::<f64>() * total;
    let u = rng.random::<f64>();
    for &(a, b, len) in &edges {
        if pick <= len {
            return (a.0 + u * (b.0 - a.0), a.1 + u * (b.1 - a.1));
        }
        pick -= len;
    }
    (st.x, st.y)
}

struct SensorState {
    mount: SensorMount,
    fov: f64,
    max_range: f64,
    x: f64,
    y: f64,
    boresight: f64,
    vx: f64,
    vy: f64,
}

impl SensorState {
    fn new(spec: &SensorSpec, pose: &EgoPose) -> Self {
        let ego = Rigid2::from_pose(pose);
        let (x, y) = ego.apply(spec.mount.x, spec.mount.y);
        let (lvx, lvy) = sensor_velocity(&spec.mount, pose);
        let (s, c) = pose.heading.sin_cos();
        SensorState {
            mount: spec.mount,
            fov: spec.fov,
            max_range: spec.max_range,
            x,
            y,
            boresight: pose.heading + spec.mount.yaw,
            vx: c * lvx - s * lvy,
            vy: s * lvx + c * lvy,
        }
    }

    /// Detection of world point `(px, py)` whose radial velocity is
    /// `v_r`, or `None` outside the field of view.
    fn observe(&self, t: f64, px: f64, py: f64, vr: f64) -> Option<Detection> {
        let (dx, dy) = (px - self.x, py - self.y);
        let range = dx.hypot(dy);
        let azimuth = wrap_angle(dy.atan2(dx) - self.boresight);
        if range > self.max_range || range <= 0.0 || azimuth.abs() > self.fov {
            return None;
        }
        let polar = Detection::from_polar(t, self.mount.sensor_id, range, azimuth, vr);
        sensor_to_ccs(&polar, &self.mount).ok().map(|d| Detection {
            amplitude: AMPLITUDE,
            ..d
        })
    }

    fn relative_radial(&self, px: f64, py: f64, vx: f64, vy: f64) -> f64 {
        let (dx, dy) = (px - self.x, py - self.y);
        let r = dx.hypot(dy);
        if r == 0.0 {
            return 0.0;
        }
        ((vx - self.vx) * dx + (vy - self.vy) * dy) / r
    }
}

fn cycle_detections(spec: &SceneSpec, k: usize) -> Vec<Detection> {
    let t = k as f64 * spec.cycle;
    let pose = spec.ego.pose_at(t);
    let mut out = Vec::new();
    for (si, sensor) in spec.sensors.iter().enumerate() {
        let mut rng = stream_rng(spec.seed, k, si, spec.sensors.len());
        let ss = SensorState::new(sensor, &pose);
        for o in &spec.objects {
            let Some(st) = o.state_at(t) else { continue };
            // draws happen unconditionally so that one object's visibility
            // does not shift the random stream of the next
            let dropped = rng.random::<f64>() < o.dropout;
            let r = (st.x - ss.x).hypot(st.y - ss.y);
            let n = poisson(&mut rng, expected_count(o.reflectivity, r));
            for _ in 0..n {
                let (px, py) = facing_point(&mut rng, o, &st, ss.x, ss.y);
                let vr = ss.relative_radial(px, py, st.vx, st.vy) + gaussian(&mut rng, spec.sigma_vr);
                let nx = px + gaussian(&mut rng, spec.sigma_xy);
                let ny = py + gaussian(&mut rng, spec.sigma_xy);
                if dropped || o.occluded_at(t) {
                    continue;
                }
                if let Some(d) = ss.observe(t, nx, ny, vr) {
                    out.push(Detection {
                        gt_label: Some(o.id),
                        ..d
                    });
                }
            }
        }
        let c = &spec.clutter;
        let r_hi = c.max_range.min(sensor.max_range);
        if c.density > 0.0 && r_hi > c.min_range {
            let area = sensor.fov * (r_hi * r_hi - c.min_range * c.min_range);
            let n = poisson(&mut rng, c.density / 100.0 * spec.cycle * area);
            for _ in 0..n {
                let r = (c.min_range.powi(2) + rng.random::<f64>() * (r_hi.powi(2) - c.min_range.powi(2))).sqrt();
                let az = (2.0 * rng.random::<f64>() - 1.0) * sensor.fov;
                let spurious = rng.random::<f64>() < c.spurious_fraction;
                let noise = if spurious {
                    (2.0 * rng.random::<f64>() - 1.0) * c.spurious_vr
                } else {
                    gaussian(&mut rng, c.sigma_vr)
                };
                let b = ss.boresight + az;
                let (px, py) = (ss.x + r * b.cos(), ss.y + r * b.sin());
                let vr = ss.relative_radial(px, py, 0.0, 0.0) + noise;
                if let Some(d) = ss.observe(t, px, py, vr) {
                    out.push(d);
                }
            }
        }
    }
    out
}

/// Generates the detection log (time-sorted, in the car frame) and the ego
/// pose log of a scene.
pub fn generate(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let cycles = spec.cycle_count();
    let per_cycle: Vec<Vec<Detection>> = (0..cycles)
        .into_par_iter()
        .map(|k| cycle_detections(spec, k))
        .collect();
    let mut detections: Vec<Detection> = per_cycle.into_iter().flatten().collect();
    detections.extend(spec.fixed_detections.iter().copied());
    detections.sort_by(|a, b| a.time.total_cmp(&b.time));
    let poses = (0..=cycles)
        .map(|k| spec.ego.pose_at(k as f64 * spec.cycle))
        .collect();
    Ok(Scene {
        detections,
        poses,
        mounts: spec.mounts(),
    })
}

/// Two front corner sensors looking 20° outward.
pub fn corner_sensors() -> Vec<SensorSpec> {
    let fov = 70f64.to_radians();
    vec![
        SensorSpec {
            mount: SensorMount {
                sensor_id: 0,
                x: 3.6,
                y: 0.75,
                yaw: 0.35,
            },
            fov,
            max_range: 150.0,
        },
        SensorSpec {
            mount: SensorMount {
                sensor_id: 1,
                x: 3.6,
                y: -0.75,
                yaw: -0.35,
            },
            fov,
            max_range: 150.0,
        },
    ]
}

fn pedestrian(id: u32, waypoints: Vec<[f64; 2]>, speed: f64, reflectivity: f64) -> ObjectSpec {
    ObjectSpec {
        id,
        class: ObjectClass::Pedestrian,
        length: 0.5,
        width: 0.6,
        waypoints,
        speeds: vec![speed],
        start_time: 0.0,
        reflectivity,
        occlusions: Vec::new(),
        dropout: 0.0,
    }
}

fn car(id: u32, waypoints: Vec<[f64; 2]>, speed: f64, reflectivity: f64) -> ObjectSpec {
    ObjectSpec {
        id,
        class: ObjectClass::Car,
        length: 4.5,
        width: 1.8,
        waypoints,
        speeds: vec![speed],
        start_time: 0.0,
        reflectivity,
        occlusions: Vec::new(),
        dropout: 0.0,
    }
}

fn base_scene(name: &str, duration: f64, seed: u64) -> SceneSpec {
    SceneSpec {
        name: name.to_string(),
        duration,
        cycle: 0.05,
        seed,
        sensors: corner_sensors(),
        ego: EgoMotion::Stationary,
        objects: Vec::new(),
        clutter: ClutterSpec {
            density: 1.0,
            ..Default::default()
        },
        sigma_xy: 0.1,
        sigma_vr: 0.1,
        fixed_detections: Vec::new(),
    }
}

pub const SUITE: [&str; 6] = [
    "crossing-pedestrian",
    "car-and-pedestrian",
    "cluttered-walker",
    "remote-car",
    "occluded-vehicle",
    "filter-probe",
];

/// Four-point pattern repeated every 0.3 s. Against a filter grid with
/// η₁ ∈ {0.05..0.35} and d_xy ∈ {0.8..2.0}, only (0.35, 0.8) strips the
/// slow pair of a pattern: the slow points (0.32 m/s) each have exactly one
/// neighbor within 0.8 m and two from 0.95 m on.
fn probe_detections(mount: &SensorMount, duration: f64) -> Vec<Detection> {
    let pattern = [
        (0.0, 0.0, 0.32),
        (0.7, 0.0, 1.0),
        (0.35, 0.883, 0.32),
        (0.35, 1.583, 1.0),
    ];
    let (ox, oy) = (12.0, 1.0);
    let mut out = Vec::new();
    let mut t = 0.0;
    while t < duration - 1e-9 {
        for &(dx, dy, vr) in &pattern {
            let (x, y) = (ox + dx, oy + dy);
            let (lx, ly) = (x - mount.x, y - mount.y);
            let azimuth = wrap_angle(ly.atan2(lx) - mount.yaw);
            out.push(Detection {
                time: t,
                sensor_id: mount.sensor_id,
                range: lx.hypot(ly),
                azimuth,
                radial_velocity: vr,
                amplitude: AMPLITUDE,
                x,
                y,
                gt_label: Some(0),
            });
        }
        t += 0.3;
    }
    out
}

/// Canned scene by name; `seed` selects the random realization.
pub fn suite_scene(name: &str, seed: u64) -> Result<SceneSpec> {
    let mut s = match name {
        "crossing-pedestrian" => {
            let mut s = base_scene(name, 6.0, seed);
            s.objects.push(pedestrian(0, vec![[14.0, -4.5], [14.0, 4.5]], 1.4, 1.2));
            s
        }
        "car-and-pedestrian" => {
            let mut s = base_scene(name, 5.0, seed);
            // the car overtakes the pedestrian about 2 m beside it
            s.objects.push(car(0, vec![[10.0, -20.0], [10.0, 20.0]], 8.0, 4.0));
            s.objects.push(pedestrian(1, vec![[7.5, -3.0], [7.5, 4.0]], 1.4, 1.2));
            s
        }
        "cluttered-walker" => {
            let mut s = base_scene(name, 5.0, seed);
            s.objects.push(pedestrian(0, vec![[8.0, 1.0], [13.0, 3.0]], 1.2, 1.2));
            s.clutter = ClutterSpec {
                density: 25.0,
                spurious_fraction: 0.3,
                spurious_vr: 1.0,
                max_range: 30.0,
                ..Default::default()
            };
            s
        }
        "remote-car" => {
            let mut s = base_scene(name, 5.0, seed);
            s.objects.push(car(0, vec![[100.0, -12.0], [121.0, 14.0]], 6.5, 4.0));
            s.objects.push(pedestrian(1, vec![[9.0, -2.0], [13.0, 2.0]], 1.3, 1.5));
            s.clutter.density = 3.0;
            s
        }
        "occluded-vehicle" => {
            let mut s = base_scene(name, 5.0, seed);
            // short blockages split a window's track; the long one splits the truth
            let mut c = car(0, vec![[12.0, 2.5], [80.0, 2.5]], 13.0, 4.0);
            c.occlusions = vec![[0.8, 0.95], [1.5, 1.65], [2.2, 3.2], [3.7, 3.85]];
            c.dropout = 0.1;
            s.objects.push(c);
            s.objects.push(pedestrian(1, vec![[8.0, -3.0], [12.0, -1.0]], 1.3, 1.2));
            s
        }
        "filter-probe" => {
            let mut s = base_scene(name, 6.0, seed);
            s.clutter = ClutterSpec {
                density: 2.0,
                min_range: 40.0,
                max_range: 80.0,
                ..Default::default()
            };
            s.fixed_detections = probe_detections(&s.sensors[0].mount, s.duration);
            s
        }
        _ => return Err(Error::InvalidInput(format!("unknown suite scene '{name}'"))),
    };
    s.seed = seed;
    Ok(s)
}

pub fn standard_suite(seed: u64) -> Vec<SceneSpec> {
    SUITE
        .iter()
        .map(|n| suite_scene(n, seed).expect("suite names are valid"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_sensor() -> Vec<SensorSpec> {
        vec![SensorSpec {
            mount: SensorMount::identity(0),
            fov: 80f64.to_radians(),
            max_range: 200.0,
        }]
    }

    fn quiet(objects: Vec<ObjectSpec>) -> SceneSpec {
        SceneSpec {
            name: "t".into(),
            duration: 2.0,
            cycle: 0.05,
            seed: 3,
            sensors: single_sensor(),
            ego: EgoMotion::Stationary,
            objects,
            clutter: ClutterSpec::default(),
            sigma_xy: 0.0,
            sigma_vr: 0.0,
            fixed_detections: Vec::new(),
        }
    }

    #[test]
    fn static_object_has_zero_doppler() {
        let mut o = car(4, vec![[20.0, 3.0]], 1.0, 3.0);
        o.speeds.clear();
        let scene = generate(&quiet(vec![o])).unwrap();
        assert!(!scene.detections.is_empty());
        assert!(scene.detections.iter().all(|d| d.radial_velocity == 0.0 && d.gt_label == Some(4)));
    }

    #[test]
    fn receding_object_on_axis() {
        // a thin object straight ahead moving away: v_r = speed exactly
        let mut o = car(0, vec![[20.0, 0.0], [40.0, 0.0]], 5.0, 3.0);
        o.width = 1e-6;
        let scene = generate(&quiet(vec![o])).unwrap();
        for d in &scene.detections {
            assert!((d.radial_velocity - 5.0).abs() < 1e-5, "{}", d.radial_velocity);
        }
    }

    #[test]
    fn deterministic() {
        let spec = suite_scene("car-and-pedestrian", 11).unwrap();
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let other = suite_scene("car-and-pedestrian", 12).unwrap();
        assert_ne!(generate(&spec).unwrap().detections, generate(&other).unwrap().detections);
    }

    #[test]
    fn detections_sorted_and_inside_pose_span() {
        for spec in standard_suite(1) {
            let s = generate(&spec).unwrap();
            assert!(s.detections.windows(2).all(|w| w[0].time <= w[1].time));
            let end = s.poses.last().unwrap().time;
            assert!(s.detections.iter().all(|d| d.time >= 0.0 && d.time <= end));
        }
    }

    #[test]
    fn points_lie_on_facing_boundary() {
        let o = car(0, vec![[20.0, 5.0], [30.0, 5.0]], 5.0, 5.0);
        let scene = generate(&quiet(vec![o.clone()])).unwrap();
        for d in &scene.detections {
            let st = o.state_at(d.time).unwrap();
            let (lx, ly) = (d.x - st.x, d.y - st.y);
            let on_edge = (lx.abs() - 2.25).abs() < 1e-9 || (ly.abs() - 0.9).abs() < 1e-9;
            assert!(on_edge && lx <= 2.25 + 1e-9 && ly.abs() <= 0.9 + 1e-9);
            // never the far side
            assert!(lx < 2.25 - 1e-9 || ly < 0.9 - 1e-9);
        }
    }

    #[test]
    fn occlusion_gap_is_empty() {
        let spec = suite_scene("occluded-vehicle", 5).unwrap();
        let s = generate(&spec).unwrap();
        let labeled: Vec<f64> = s.detections.iter().filter(|d| d.gt_label == Some(0)).map(|d| d.time).collect();
        assert!(labeled.iter().all(|&t| !(2.2..3.2).contains(&t)));
        let gap = labeled.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        assert!(gap >= 1.0 - 1e-9);
    }

    #[test]
    fn suite_shapes() {
        let b = generate(&suite_scene("car-and-pedestrian", 1).unwrap()).unwrap();
        let mut ids: Vec<u32> = b.detections.iter().filter_map(|d| d.gt_label).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids, vec![0, 1]);
        let d = generate(&suite_scene("remote-car", 1).unwrap()).unwrap();
        let max_r = d
            .detections
            .iter()
            .filter(|x| x.gt_label == Some(0))
            .map(|x| x.x.hypot(x.y))
            .fold(0.0, f64::max);
        assert!(max_r > 100.0);
    }

    #[test]
    fn clutter_is_unlabeled_and_near_zero_for_static_ego() {
        let mut spec = quiet(Vec::new());
        spec.clutter.density = 5.0;
        let s = generate(&spec).unwrap();
        assert!(s.detections.len() > 100);
        assert!(s.detections.iter().all(|d| d.gt_label.is_none()));
        let mean = s.detections.iter().map(|d| d.radial_velocity).sum::<f64>() / s.detections.len() as f64;
        assert!(mean.abs() < 0.05);
    }

    #[test]
    fn moving_ego_sees_static_clutter_approach() {
        let mut spec = quiet(Vec::new());
        spec.clutter.density = 5.0;
        spec.clutter.sigma_vr = 0.0;
        spec.ego = EgoMotion::ConstantVelocity { speed: 10.0 };
        let s = generate(&spec).unwrap();
        for d in &s.detections {
            assert!((d.radial_velocity + 10.0 * d.azimuth.cos()).abs() < 1e-9);
        }
    }

    #[test]
    fn probe_geometry() {
        let m = SensorMount::identity(0);
        let p = probe_detections(&m, 0.1);
        assert_eq!(p.len(), 4);
        let d = |a: usize, b: usize| p[a].dist_xy(&p[b]);
        assert!((d(0, 1) - 0.7).abs() < 1e-9 && (d(2, 3) - 0.7).abs() < 1e-9);
        assert!(d(0, 2) > 0.8 && d(0, 2) < 1.0 && d(1, 2) > 0.8 && d(1, 2) < 1.0);
        assert!(d(0, 3) > 2.0 * 0.8);
    }
}
