//! Marker detections: the record model, JSON Lines ingestion, confidence
//! thresholding, and a seeded synthetic generator that stands in for an
//! image-based detector.
//!
//! One detection per line:
//!
//! ```text
//! {"t": 0.0333, "frame": 1, "id": 3, "corners": [[u,v],[u,v],[u,v],[u,v]], "conf": 0.93}
//! ```
//!
//! Corners are ordered TL, TR, BR, BL. In image coordinates (y down) that
//! ordering has positive shoelace area; ingestion rejects the opposite
//! winding.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{project, CameraIntrinsics, MarkerMap, Pixel, Pose};

/// Confidence threshold applied before pose estimation unless configured.
pub const DEFAULT_MIN_CONFIDENCE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub t: f64,
    pub frame: u64,
    pub id: u32,
    pub corners: [Pixel; 4],
    pub confidence: f64,
}

impl Detection {
    /// Shoelace area in image coordinates; positive for TL, TR, BR, BL.
    pub fn signed_area(&self) -> f64 {
        let c = &self.corners;
        0.5 * (0..4)
            .map(|i| {
                let (a, b) = (c[i], c[(i + 1) % 4]);
                a.x * b.y - b.x * a.y
            })
            .sum::<f64>()
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(format!("confidence {} outside [0, 1]", self.confidence));
        }
        if !self.t.is_finite() {
            return Err("non-finite timestamp".into());
        }
        if !self.corners.iter().all(|c| c.x.is_finite() && c.y.is_finite()) {
            return Err("non-finite corner".into());
        }
        if self.signed_area() <= 0.0 {
            return Err("corner winding is not TL, TR, BR, BL".into());
        }
        Ok(())
    }
}

/// A camera pose with its timestamp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedPose {
    pub t: f64,
    pub pose: Pose,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ConfidenceModel {
    Fixed {
        value: f64,
    },
    /// `exp(-pixel_sigma / scale)`: noisier detectors report lower confidence.
    SigmaDecay {
        scale: f64,
    },
}

impl Default for ConfidenceModel {
    fn default() -> Self {
        ConfidenceModel::Fixed { value: 1.0 }
    }
}

impl ConfidenceModel {
    fn confidence(&self, pixel_sigma: f64) -> f64 {
        match *self {
            ConfidenceModel::Fixed { value } => value,
            ConfidenceModel::SigmaDecay { scale } => (-pixel_sigma / scale).exp(),
        }
    }
}

/// Corner noise and dropout model for synthetic detections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub pixel_sigma: f64,
    pub dropout_prob: f64,
    #[serde(default)]
    pub confidence: ConfidenceModel,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec { pixel_sigma: 0.0, dropout_prob: 0.0, confidence: ConfidenceModel::default(), seed: 0 }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.pixel_sigma.is_finite() && self.pixel_sigma >= 0.0) {
            return Err(Error::InvalidParameter(format!("pixel_sigma must be >= 0, got {}", self.pixel_sigma)));
        }
        if !(0.0..=1.0).contains(&self.dropout_prob) {
            return Err(Error::InvalidParameter(format!("dropout_prob must be in [0, 1], got {}", self.dropout_prob)));
        }
        let c = self.confidence.confidence(self.pixel_sigma);
        if !(0.0..=1.0).contains(&c) {
            return Err(Error::InvalidParameter(format!("confidence model yields {c}, outside [0, 1]")));
        }
        Ok(())
    }
}

/// Exact corner projections of a marker, or `None` if any corner is behind
/// the camera or outside the image.
pub fn visible_corners(
    intrinsics: &CameraIntrinsics,
    pose: &Pose,
    corners: &[crate::geometry::Point3; 4],
) -> Result<Option<[Pixel; 4]>> {
    let mut out = [Pixel::origin(); 4];
    for (o, c) in out.iter_mut().zip(corners) {
        match project(intrinsics, pose, c) {
            Ok(p) if intrinsics.contains(&p) => *o = p,
            Ok(_) | Err(Error::BehindCamera { .. }) => return Ok(None),
            Err(e) => return Err(e),
        }
    }
    Ok(Some(out))
}

/// Simulates a detector looking at `map` along `camera_path`.
///
/// Frame `k` of the output is `camera_path[k]`. Only markers with all four
/// corners in front of the camera and inside the image are reported. The
/// random stream is consumed in frame order, then map order, so a fixed
/// seed gives an identical stream.
pub fn synthesize_detections(
    map: &MarkerMap,
    intrinsics: &CameraIntrinsics,
    camera_path: &[TimedPose],
    noise: &NoiseSpec,
) -> Result<Vec<Detection>> {
    noise.validate()?;
    if let Some(w) = camera_path.windows(2).find(|w| w[1].t.partial_cmp(&w[0].t) != Some(std::cmp::Ordering::Greater)) {
        return Err(Error::InvalidParameter(format!(
            "camera path timestamps must increase strictly ({} then {})",
            w[0].t, w[1].t
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let gauss = Normal::new(0.0, noise.pixel_sigma).expect("validated sigma");
    let confidence = noise.confidence.confidence(noise.pixel_sigma);
    let mut out = Vec::new();
    for (frame, tp) in camera_path.iter().enumerate() {
        for marker in map.markers() {
            let Some(exact) = visible_corners(intrinsics, &tp.pose, &marker.corners)? else {
                continue;
            };
            if noise.dropout_prob > 0.0 && rng.random::<f64>() < noise.dropout_prob {
                continue;
            }
            let corners = exact.map(|p| {
                if noise.pixel_sigma > 0.0 {
                    Pixel::new(p.x + gauss.sample(&mut rng), p.y + gauss.sample(&mut rng))
                } else {
                    p
                }
            });
            out.push(Detection { t: tp.t, frame: frame as u64, id: marker.id, corners, confidence });
        }
    }
    Ok(out)
}

/// Detections with `confidence >= min_confidence`, in input order.
pub fn threshold(detections: &[Detection], min_confidence: f64) -> Vec<Detection> {
    detections.iter().filter(|d| d.confidence >= min_confidence).cloned().collect()
}

#[derive(Serialize, Deserialize)]
struct DetectionLine {
    t: f64,
    frame: u64,
    id: u32,
    corners: [[f64; 2]; 4],
    conf: f64,
}

impl From<&Detection> for DetectionLine {
    fn from(d: &Detection) -> Self {
        DetectionLine { t: d.t, frame: d.frame, id: d.id, corners: d.corners.map(|p| [p.x, p.y]), conf: d.confidence }
    }
}

/// Serializes detections as JSON Lines. Floats use the shortest
/// representation that parses back to the same bits.
pub fn detections_to_jsonl(detections: &[Detection]) -> String {
    let mut s = String::new();
    for d in detections {
        s.push_str(&serde_json::to_string(&DetectionLine::from(d)).expect("detection serialize"));
        s.push('\n');
    }
    s
}

pub fn parse_detections(text: &str, origin: &str) -> Result<Vec<Detection>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DetectionLine = serde_json::from_str(line).map_err(|e| {
            let message = e.to_string();
            if e.is_data() {
                Error::Schema { path: origin.into(), line: lineno, message }
            } else {
                Error::Parse { path: origin.into(), line: lineno, message }
            }
        })?;
        let d = Detection {
            t: rec.t,
            frame: rec.frame,
            id: rec.id,
            corners: rec.corners.map(|[u, v]| Pixel::new(u, v)),
            confidence: rec.conf,
        };
        d.validate().map_err(|message| Error::Schema { path: origin.into(), line: lineno, message })?;
        out.push(d);
    }
    Ok(out)
}

pub fn read_detections(path: impl AsRef<Path>) -> Result<Vec<Detection>> {
    let path = path.as_ref();
    parse_detections(&crate::io::read_to_string(path)?, &path.display().to_string())
}

pub fn write_detections(detections: &[Detection], path: impl AsRef<Path>) -> Result<()> {
    crate::io::write_atomic(path, detections_to_jsonl(detections).as_bytes())
}
