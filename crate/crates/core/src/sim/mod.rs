//! Reference flight profiles and the end-to-end experiment runner.
//!
//! The spiral eight is a Lissajous figure-eight with a sinusoidal altitude
//! component. It stands in for an optimized smooth trajectory; the pipeline
//! under test does not care how the reference was produced. The rectangular
//! eight runs two adjoined rectangles at constant speed with instantaneous
//! corner turns.

mod config;
mod run;

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::detect::{visible_corners, TimedPose};
use crate::error::{Error, Result};
use crate::geometry::{CameraIntrinsics, MarkerMap, Pose};

pub use config::{ExperimentConfig, IntrinsicsSource, MapSource, NoiseConfig, ResolvedConfig, CONFIG_DIR_ENV};
pub use run::{
    bench, profile_seed, run_experiment, run_profile, simulate, simulate_profile, write_profile_artifacts,
    BenchOutcome, ExperimentOutcome, ProfileRun, ARTIFACT_NAMES, SIMULATE_ARTIFACT_NAMES,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileKind {
    SpiralEight,
    RectangularEight,
}

/// Parameters of one reference flight. The vehicle always faces the wall.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryProfile {
    pub name: String,
    pub kind: ProfileKind,
    /// Center of the figure in the horizontal plane.
    pub center_x: f64,
    pub center_y: f64,
    pub amplitude_x: f64,
    pub amplitude_y: f64,
    pub base_altitude: f64,
    /// Spiral eight only; the rectangular eight flies at constant altitude.
    #[serde(default)]
    pub altitude_amplitude: f64,
    /// Lap period of the spiral eight, seconds.
    #[serde(default = "default_period")]
    pub period: f64,
    /// Period of the altitude oscillation, seconds.
    #[serde(default = "default_period")]
    pub altitude_period: f64,
    /// Rectangular eight only, m/s.
    #[serde(default)]
    pub speed: f64,
    pub duration: f64,
    #[serde(default = "default_frame_rate")]
    pub frame_rate: f64,
}

fn default_period() -> f64 {
    30.0
}

fn default_frame_rate() -> f64 {
    30.0
}

impl TrajectoryProfile {
    pub fn spiral_eight() -> Self {
        TrajectoryProfile {
            name: "spiral-eight".into(),
            kind: ProfileKind::SpiralEight,
            center_x: 2.03,
            center_y: -3.0,
            amplitude_x: 1.0,
            amplitude_y: 0.5,
            base_altitude: 1.0,
            altitude_amplitude: 0.2,
            period: 30.0,
            altitude_period: 15.0,
            speed: 0.0,
            duration: 30.0,
            frame_rate: 30.0,
        }
    }

    pub fn rectangular_eight() -> Self {
        TrajectoryProfile {
            name: "rectangular-eight".into(),
            kind: ProfileKind::RectangularEight,
            center_x: 2.03,
            center_y: -3.0,
            amplitude_x: 1.0,
            amplitude_y: 0.5,
            base_altitude: 1.0,
            altitude_amplitude: 0.0,
            period: 30.0,
            altitude_period: 30.0,
            speed: 0.3,
            duration: 30.0,
            frame_rate: 30.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(format!("profile `{}`: {m}", self.name)));
        if self.name.is_empty() || self.name.contains(['/', '\\']) || self.name.starts_with('.') {
            return bad("name must be a plain, non-empty file name".into());
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return bad(format!("duration must be positive, got {}", self.duration));
        }
        if !(self.frame_rate.is_finite() && self.frame_rate > 0.0) {
            return bad(format!("frame_rate must be positive, got {}", self.frame_rate));
        }
        for (n, v) in [
            ("amplitude_x", self.amplitude_x),
            ("amplitude_y", self.amplitude_y),
            ("altitude_amplitude", self.altitude_amplitude),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{n} must be >= 0, got {v}"));
            }
        }
        for (n, v) in [("center_x", self.center_x), ("center_y", self.center_y), ("base_altitude", self.base_altitude)]
        {
            if !v.is_finite() {
                return bad(format!("{n} must be finite"));
            }
        }
        match self.kind {
            ProfileKind::SpiralEight => {
                if !(self.period > 0.0 && self.altitude_period > 0.0) {
                    return bad("periods must be positive".into());
                }
            }
            ProfileKind::RectangularEight => {
                if !(self.speed.is_finite() && self.speed > 0.0) {
                    return bad(format!("speed must be positive, got {}", self.speed));
                }
                if self.amplitude_x <= 0.0 || self.amplitude_y <= 0.0 {
                    return bad("rectangle sides must be positive".into());
                }
            }
        }
        Ok(())
    }

    pub fn frame_count(&self) -> usize {
        (self.duration * self.frame_rate).round() as usize
    }

    /// Perimeter of one of the two rectangles (`amplitude_x` by
    /// `2·amplitude_y`).
    pub fn rectangle_perimeter(&self) -> f64 {
        2.0 * self.amplitude_x + 4.0 * self.amplitude_y
    }

    /// Corners of the rectangular eight in traversal order. The right
    /// rectangle runs counter-clockwise, the left one clockwise, and both
    /// share the middle edge, traversed downward (−y) each time.
    fn eight_waypoints(&self) -> [[f64; 2]; 8] {
        let (cx, cy, ax, ay) = (self.center_x, self.center_y, self.amplitude_x, self.amplitude_y);
        [
            [cx, cy - ay],
            [cx + ax, cy - ay],
            [cx + ax, cy + ay],
            [cx, cy + ay],
            [cx, cy - ay],
            [cx - ax, cy - ay],
            [cx - ax, cy + ay],
            [cx, cy + ay],
        ]
    }

    /// Position at time `t`.
    pub fn position(&self, t: f64) -> [f64; 3] {
        match self.kind {
            ProfileKind::SpiralEight => {
                let w = 2.0 * PI * t / self.period;
                [
                    self.center_x + self.amplitude_x * w.sin(),
                    self.center_y + self.amplitude_y * (2.0 * w).sin(),
                    self.base_altitude + self.altitude_amplitude * (2.0 * PI * t / self.altitude_period).sin(),
                ]
            }
            ProfileKind::RectangularEight => {
                let pts = self.eight_waypoints();
                let lap = 2.0 * self.rectangle_perimeter();
                let mut s = (self.speed * t).rem_euclid(lap);
                for i in 0..pts.len() {
                    let (a, b) = (pts[i], pts[(i + 1) % pts.len()]);
                    let len = (b[0] - a[0]).abs() + (b[1] - a[1]).abs();
                    if s <= len || i + 1 == pts.len() {
                        let f = if len > 0.0 { (s / len).min(1.0) } else { 0.0 };
                        return [a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1]), self.base_altitude];
                    }
                    s -= len;
                }
                unreachable!("waypoint loop returns on the last segment")
            }
        }
    }
}

/// Axis-aligned flight volume.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomSpec {
    pub extent_x: f64,
    pub extent_y: f64,
    pub extent_z: f64,
    /// Minimum corner in world coordinates.
    pub origin: [f64; 3],
}

impl Default for RoomSpec {
    /// 6.10 × 5.85 × 2.44 m, centered in x on the default marker row,
    /// spanning from the wall back to `y = −5.85` and from the floor up.
    fn default() -> Self {
        RoomSpec { extent_x: 6.10, extent_y: 5.85, extent_z: 2.44, origin: [-1.02, -5.85, 0.0] }
    }
}

impl RoomSpec {
    pub fn validate(&self) -> Result<()> {
        let ext = [self.extent_x, self.extent_y, self.extent_z];
        if !ext.iter().chain(&self.origin).all(|v| v.is_finite()) || ext.iter().any(|v| *v <= 0.0) {
            return Err(Error::InvalidParameter(format!("room extents must be positive and finite, got {ext:?}")));
        }
        Ok(())
    }

    /// Axis names of the bounds `p` violates, empty when inside.
    pub fn violations(&self, p: [f64; 3]) -> Vec<String> {
        let ext = [self.extent_x, self.extent_y, self.extent_z];
        let mut out = Vec::new();
        for (axis, name) in ["x", "y", "z"].iter().enumerate() {
            let (lo, hi) = (self.origin[axis], self.origin[axis] + ext[axis]);
            if !(lo..=hi).contains(&p[axis]) {
                out.push(format!("{name}={} outside [{lo}, {hi}]", p[axis]));
            }
        }
        out
    }
}

/// Samples `profile` at its frame rate, `t = k / frame_rate`.
pub fn generate_reference(profile: &TrajectoryProfile, room: &RoomSpec) -> Result<Vec<TimedPose>> {
    profile.validate()?;
    room.validate()?;
    let n = profile.frame_count();
    if n == 0 {
        return Err(Error::InvalidParameter(format!("profile `{}` yields no frames", profile.name)));
    }
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let t = k as f64 / profile.frame_rate;
        let p = profile.position(t);
        let v = room.violations(p);
        if !v.is_empty() {
            return Err(Error::OutOfRoom { index: k, t, detail: v.join(", ") });
        }
        out.push(TimedPose { t, pose: Pose::new(p[0], p[1], p[2], FRAC_PI_2) });
    }
    Ok(out)
}

/// Fraction of poses from which at least `min_markers` markers are fully
/// inside the image.
pub fn visible_fraction(path: &[TimedPose], map: &MarkerMap, k: &CameraIntrinsics, min_markers: usize) -> Result<f64> {
    if path.is_empty() {
        return Ok(0.0);
    }
    let mut good = 0usize;
    for tp in path {
        let mut seen = 0;
        for m in map.markers() {
            if visible_corners(k, &tp.pose, &m.corners)?.is_some() {
                seen += 1;
            }
        }
        if seen >= min_markers {
            good += 1;
        }
    }
    Ok(good as f64 / path.len() as f64)
}
