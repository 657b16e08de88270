//! Poses, pinhole intrinsics, marker maps and projection.
//!
//! World frame: right-handed, +Z up. The marker wall lies in the plane
//! `y = 0` and a camera at `y < 0` faces it when its yaw is `+π/2`.
//!
//! Camera frame: +Z forward along the yaw heading, +X right, +Y down. With
//! roll and pitch fixed at zero the world-to-camera rotation for yaw `θ` is
//!
//! ```text
//! [ sin θ  -cos θ   0 ]
//! [   0      0     -1 ]
//! [ cos θ   sin θ   0 ]
//! ```

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{Matrix3, Point2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point3 = nalgebra::Point3<f64>;
pub type Pixel = Point2<f64>;

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let mut t = theta % (2.0 * PI);
    if t <= -PI {
        t += 2.0 * PI;
    } else if t > PI {
        t -= 2.0 * PI;
    }
    t
}

/// 4-DOF vehicle state: position in meters and yaw about world +Z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub theta: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, z: f64, theta: f64) -> Self {
        Pose { x, y, z, theta: wrap_angle(theta) }
    }

    pub fn position(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite() && self.theta.is_finite()
    }

    /// World-to-camera rotation for this yaw (roll = pitch = 0).
    pub fn world_to_camera(&self) -> Matrix3<f64> {
        yaw_world_to_camera(self.theta)
    }

    /// Camera-frame coordinates of a world point.
    pub fn to_camera(&self, point: &Point3) -> Vector3<f64> {
        self.world_to_camera() * (point.coords - self.position())
    }

    /// Inverse of [`Pose::to_camera`].
    pub fn to_world(&self, camera_point: &Vector3<f64>) -> Point3 {
        Point3::from(self.world_to_camera().transpose() * camera_point + self.position())
    }
}

/// Fixed axis permutation from the body frame (x forward, y left, z up) to
/// the camera frame (x right, y down, z forward).
pub fn body_to_camera() -> Matrix3<f64> {
    Matrix3::new(0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0)
}

pub fn yaw_world_to_camera(theta: f64) -> Matrix3<f64> {
    let (s, c) = theta.sin_cos();
    Matrix3::new(s, -c, 0.0, 0.0, 0.0, -1.0, c, s, 0.0)
}

/// Pinhole intrinsics without distortion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Default for CameraIntrinsics {
    /// 856×480 image with a placeholder 537 px focal length.
    fn default() -> Self {
        CameraIntrinsics { fx: 537.0, fy: 537.0, cx: 428.0, cy: 240.0, width: 856, height: 480 }
    }
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let k = CameraIntrinsics { fx, fy, cx, cy, width, height };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.fx, self.fy, self.cx, self.cy].iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("intrinsics"));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if !(0.0..self.width as f64).contains(&self.cx) || !(0.0..self.height as f64).contains(&self.cy) {
            return Err(Error::InvalidParameter(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    /// Projects a camera-frame point. Fails for non-positive depth.
    pub fn project_camera(&self, p: &Vector3<f64>) -> Result<Pixel> {
        if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
            return Err(Error::NonFinite("camera-frame point"));
        }
        if p.z <= 0.0 {
            return Err(Error::BehindCamera { depth: p.z });
        }
        Ok(Pixel::new(self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }

    /// Camera-frame point at the given depth along the ray through `pixel`.
    pub fn back_project(&self, pixel: &Pixel, depth: f64) -> Vector3<f64> {
        Vector3::new((pixel.x - self.cx) / self.fx * depth, (pixel.y - self.cy) / self.fy * depth, depth)
    }

    /// Whether a pixel lies inside `[0, width) × [0, height)`.
    pub fn contains(&self, pixel: &Pixel) -> bool {
        pixel.x >= 0.0 && pixel.y >= 0.0 && pixel.x < self.width as f64 && pixel.y < self.height as f64
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let k: CameraIntrinsics = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        })?;
        k.validate()?;
        Ok(k)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("intrinsics serialize")
    }
}

/// Projects a world point through a camera at `camera_pose`.
pub fn project(intrinsics: &CameraIntrinsics, camera_pose: &Pose, point: &Point3) -> Result<Pixel> {
    if !camera_pose.is_finite() || !(point.x.is_finite() && point.y.is_finite() && point.z.is_finite()) {
        return Err(Error::NonFinite("projection input"));
    }
    intrinsics.project_camera(&camera_pose.to_camera(point))
}

/// A square planar marker. Corners are ordered TL, TR, BR, BL as seen by a
/// camera looking at its face.
#[derive(Debug, Clone, PartialEq)]
pub struct Marker {
    pub id: u32,
    pub corners: [Point3; 4],
}

impl Marker {
    pub fn center(&self) -> Point3 {
        let sum = self.corners.iter().fold(Vector3::zeros(), |acc, c| acc + c.coords);
        Point3::from(sum / 4.0)
    }

    /// Unit normal pointing out of the marker face, toward the camera side.
    pub fn normal(&self) -> Vector3<f64> {
        // TL→TR is "right", TL→BL is "down"; right × down points away from
        // the viewer, so flip it.
        let right = self.corners[1] - self.corners[0];
        let down = self.corners[3] - self.corners[0];
        -right.cross(&down).normalize()
    }

    pub fn side_lengths(&self) -> [f64; 4] {
        std::array::from_fn(|i| (self.corners[(i + 1) % 4] - self.corners[i]).norm())
    }

    /// Largest distance of any corner from the plane through the other three.
    pub fn planarity_error(&self) -> f64 {
        let c = &self.corners;
        let n = (c[1] - c[0]).cross(&(c[2] - c[0]));
        let norm = n.norm();
        if norm == 0.0 {
            return f64::INFINITY;
        }
        ((c[3] - c[0]).dot(&n) / norm).abs()
    }
}

/// Ordered, non-empty set of markers with unique ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MarkerMapFile", into = "MarkerMapFile")]
pub struct MarkerMap {
    frame: String,
    markers: Vec<Marker>,
}

pub const DEFAULT_FRAME: &str = "right-handed world frame, +z up, meters; marker wall in plane y=0 viewed from y<0";

impl MarkerMap {
    pub fn new(frame: impl Into<String>, markers: Vec<Marker>) -> Result<Self> {
        if markers.is_empty() {
            return Err(Error::InvalidParameter("marker map is empty".into()));
        }
        let mut ids: Vec<u32> = markers.iter().map(|m| m.id).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter(format!("duplicate marker id {}", w[0])));
        }
        for m in &markers {
            if !m.corners.iter().all(|c| c.iter().all(|v| v.is_finite())) {
                return Err(Error::NonFinite("marker corners"));
            }
        }
        Ok(MarkerMap { frame: frame.into(), markers })
    }

    pub fn frame(&self) -> &str {
        &self.frame
    }

    pub fn markers(&self) -> &[Marker] {
        &self.markers
    }

    pub fn get(&self, id: u32) -> Option<&Marker> {
        self.markers.iter().find(|m| m.id == id)
    }

    pub fn len(&self) -> usize {
        self.markers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.markers.is_empty()
    }

    /// Keeps only the markers whose id satisfies `keep`.
    pub fn filtered(&self, keep: impl Fn(u32) -> bool) -> Result<Self> {
        MarkerMap::new(self.frame.clone(), self.markers.iter().filter(|m| keep(m.id)).cloned().collect())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("marker map serialize")
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let file: MarkerMapFile = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_string(),
            line: e.line(),
            message: e.to_string(),
        })?;
        MarkerMap::try_from(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }
}

impl From<MarkerMap> for MarkerMapFile {
    fn from(map: MarkerMap) -> Self {
        MarkerMapFile {
            frame: map.frame,
            markers: map
                .markers
                .iter()
                .map(|m| MarkerEntry { id: m.id, corners: m.corners.map(|c| [c.x, c.y, c.z]) })
                .collect(),
        }
    }
}

impl TryFrom<MarkerMapFile> for MarkerMap {
    type Error = Error;

    fn try_from(file: MarkerMapFile) -> Result<Self> {
        let markers = file
            .markers
            .into_iter()
            .map(|e| Marker { id: e.id, corners: e.corners.map(|[x, y, z]| Point3::new(x, y, z)) })
            .collect();
        MarkerMap::new(file.frame, markers)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MarkerMapFile {
    frame: String,
    markers: Vec<MarkerEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MarkerEntry {
    id: u32,
    corners: [[f64; 3]; 4],
}

/// A row of `n` square markers on the wall `y = 0`.
///
/// Marker `i` (ids start at 1) is centered at `x = (i-1)·spacing`,
/// `z = center_height`.
pub fn wall_marker_map(n: usize, side: f64, spacing: f64, center_height: f64) -> Result<MarkerMap> {
    if n == 0 {
        return Err(Error::InvalidParameter("marker count must be at least 1".into()));
    }
    for (name, v) in [("side", side), ("spacing", spacing), ("center_height", center_height)] {
        if !v.is_finite() || v <= 0.0 {
            return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
        }
    }
    let h = side / 2.0;
    let markers = (0..n)
        .map(|i| {
            let cx = i as f64 * spacing;
            let cz = center_height;
            Marker {
                id: i as u32 + 1,
                corners: [
                    Point3::new(cx - h, 0.0, cz + h),
                    Point3::new(cx + h, 0.0, cz + h),
                    Point3::new(cx + h, 0.0, cz - h),
                    Point3::new(cx - h, 0.0, cz - h),
                ],
            }
        })
        .collect();
    MarkerMap::new(DEFAULT_FRAME, markers)
}

/// Parameters of the standard eight-marker wall.
pub const DEFAULT_MARKER_COUNT: usize = 8;
pub const DEFAULT_MARKER_SIDE: f64 = 0.2;
pub const DEFAULT_MARKER_SPACING: f64 = 0.58;
pub const DEFAULT_MARKER_HEIGHT: f64 = 0.724;

pub fn default_wall() -> MarkerMap {
    wall_marker_map(DEFAULT_MARKER_COUNT, DEFAULT_MARKER_SIDE, DEFAULT_MARKER_SPACING, DEFAULT_MARKER_HEIGHT)
        .expect("default wall parameters are valid")
}
