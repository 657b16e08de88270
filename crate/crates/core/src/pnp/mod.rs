//! Multi-marker pose estimation.
//!
//! Every corner of every detected marker contributes one correspondence.
//! Under isotropic Gaussian corner noise the joint likelihood of all
//! markers is maximized by minimizing
//!
//! ```text
//! Σ_ij w_ij ‖z_ij − π(R·l_ij + T)‖²
//! ```
//!
//! which [`solve_pose`] does in two steps: an EPnP linear estimate, then
//! damped Gauss-Newton on the cost itself. [`Mode::FourDof`] constrains the
//! rotation to yaw about world +Z (roll = pitch = 0); [`Mode::SixDof`]
//! refines a full rotation and reports yaw as its Z-Y-X heading.

mod epnp;
mod refine;
mod trajectory;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, Matrix3};
use serde::{Deserialize, Serialize};

pub use epnp::{align_rigid, is_planar, CameraTransform};
pub use trajectory::{
    estimate_trajectory, frames_from_detections, frames_uniform, EstimateOptions, FrameEstimate, FrameStamp, GapCause,
};

use crate::detect::Detection;
use crate::error::{Error, Result};
use crate::geometry::{body_to_camera, CameraIntrinsics, MarkerMap, Pixel, Point3, Pose};
use refine::{Model, RigidModel, YawModel};

/// One marker corner paired with its observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub world: Point3,
    pub image: Pixel,
    pub weight: f64,
}

/// How detections are weighted in the reprojection cost.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightPolicy {
    /// Every corner weighs 1.
    #[default]
    Uniform,
    /// Corner weight equals the detection confidence.
    Confidence,
    /// Explicit weight per marker id; unlisted markers weigh 1.
    PerMarker(BTreeMap<u32, f64>),
}

impl WeightPolicy {
    fn weight(&self, det: &Detection) -> f64 {
        match self {
            WeightPolicy::Uniform => 1.0,
            WeightPolicy::Confidence => det.confidence,
            WeightPolicy::PerMarker(m) => m.get(&det.id).copied().unwrap_or(1.0),
        }
    }
}

/// Four correspondences per detection, corners aligned TL↔TL … BL↔BL.
pub fn build_correspondences(
    detections: &[Detection],
    map: &MarkerMap,
    policy: &WeightPolicy,
) -> Result<Vec<Correspondence>> {
    let mut out = Vec::with_capacity(4 * detections.len());
    for det in detections {
        let marker = map.get(det.id).ok_or(Error::UnknownMarkerId(det.id))?;
        let weight = policy.weight(det);
        if !(weight.is_finite() && weight > 0.0) {
            return Err(Error::InvalidParameter(format!("marker {} has non-positive weight {weight}", det.id)));
        }
        for (world, image) in marker.corners.iter().zip(&det.corners) {
            out.push(Correspondence { world: *world, image: *image, weight });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Position and yaw; roll and pitch fixed at zero.
    #[default]
    FourDof,
    /// Full rigid transform.
    SixDof,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    pub step_tol: f64,
    /// Stop once the gradient norm of the pixel-squared cost falls below this.
    pub grad_tol: f64,
    pub max_iters: usize,
    pub initial_damping: f64,
    pub min_damping: f64,
    pub max_damping: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            step_tol: 1e-10,
            grad_tol: 1e-9,
            max_iters: 50,
            initial_damping: 1e-3,
            min_damping: 1e-12,
            max_damping: 1e12,
        }
    }
}

/// Smallest/largest singular value ratio of the weighted Jacobian below
/// which the configuration is rejected as degenerate.
pub const RANK_TOL: f64 = 1e-10;

/// Fewest correspondences accepted by either mode.
pub const MIN_POINTS: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct PoseEstimate {
    pub pose: Pose,
    /// World-from-body attitude; only set in [`Mode::SixDof`].
    pub attitude: Option<Matrix3<f64>>,
    pub reprojection_rms: f64,
    pub num_markers: usize,
    pub num_points: usize,
    pub converged: bool,
    pub iterations: usize,
}

/// Weighted squared reprojection error of a yaw-only pose.
pub fn reprojection_cost(corrs: &[Correspondence], k: &CameraIntrinsics, pose: &Pose) -> f64 {
    refine::cost(corrs, k, &YawModel(*pose).transform())
}

/// Gradient of [`reprojection_cost`] with respect to `(x, y, z, θ)`.
pub fn reprojection_gradient(corrs: &[Correspondence], k: &CameraIntrinsics, pose: &Pose) -> [f64; 4] {
    let (_, g) = refine::normal_equations(corrs, k, &YawModel(*pose));
    [-2.0 * g[0], -2.0 * g[1], -2.0 * g[2], -2.0 * g[3]]
}

fn rms(corrs: &[Correspondence], k: &CameraIntrinsics, tf: &CameraTransform) -> f64 {
    let sum: f64 = corrs
        .iter()
        .map(|c| {
            let p = tf.apply(&c.world.coords);
            let u = k.fx * p.x / p.z + k.cx - c.image.x;
            let v = k.fy * p.y / p.z + k.cy - c.image.y;
            u * u + v * v
        })
        .sum();
    (sum / corrs.len() as f64).sqrt()
}

fn yaw_from_transform(tf: &CameraTransform) -> (Pose, Matrix3<f64>) {
    let attitude = tf.rotation.transpose() * body_to_camera();
    let c = tf.camera_center();
    let yaw = attitude[(1, 0)].atan2(attitude[(0, 0)]);
    (Pose::new(c.x, c.y, c.z, yaw), attitude)
}

/// Closed-form yaw-only estimate. With roll = pitch = 0 the projection
/// equations are linear in `(cos θ, sin θ, a, b, z)` where
/// `a = −x·sin θ + y·cos θ` and `b = −x·cos θ − y·sin θ`.
fn linear_yaw(corrs: &[Correspondence], k: &CameraIntrinsics) -> Option<Pose> {
    let n = corrs.len();
    let mut a = DMatrix::<f64>::zeros(2 * n, 5);
    let mut b = nalgebra::DVector::<f64>::zeros(2 * n);
    for (i, c) in corrs.iter().enumerate() {
        let sw = c.weight.sqrt();
        let u = (c.image.x - k.cx) / k.fx;
        let v = (c.image.y - k.cy) / k.fy;
        let (px, py, pz) = (c.world.x, c.world.y, c.world.z);
        a.row_mut(2 * i).copy_from_slice(&[sw * (u * px + py), sw * (u * py - px), -sw, sw * u, 0.0]);
        a.row_mut(2 * i + 1).copy_from_slice(&[sw * v * px, sw * v * py, 0.0, sw * v, -sw]);
        b[2 * i + 1] = -sw * pz;
    }
    let sol = a.svd(true, true).solve(&b, 1e-12).ok()?;
    let (cs, sn, ta, tb, z) = (sol[0], sol[1], sol[2], sol[3], sol[4]);
    let scale = cs.hypot(sn);
    if !(scale.is_finite() && scale > 0.0) {
        return None;
    }
    let (cs, sn) = (cs / scale, sn / scale);
    // [a; b] = [[−s, c], [−c, −s]]·[x; y], an orthogonal matrix up to sign.
    let x = -sn * ta - cs * tb;
    let y = cs * ta - sn * tb;
    let pose = Pose::new(x, y, z, sn.atan2(cs));
    pose.is_finite().then_some(pose)
}

fn check_rank<M: Model<N>, const N: usize>(corrs: &[Correspondence], k: &CameraIntrinsics, model: &M) -> Result<()> {
    let sv = refine::weighted_jacobian(corrs, k, model).singular_values();
    let max = sv.max();
    let min = sv.min();
    if max.is_nan() || max <= 0.0 || min < RANK_TOL * max {
        return Err(Error::DegenerateConfiguration(format!(
            "singular value ratio {:.3e} below {RANK_TOL:e}",
            if max > 0.0 { min / max } else { 0.0 }
        )));
    }
    Ok(())
}

/// Minimizes the weighted reprojection error over the pose.
///
/// Returns [`Error::NoConvergence`] carrying the best iterate when the step
/// tolerance is not reached within `options.max_iters`.
pub fn solve_pose(
    corrs: &[Correspondence],
    k: &CameraIntrinsics,
    mode: Mode,
    options: &SolveOptions,
) -> Result<PoseEstimate> {
    if corrs.len() < MIN_POINTS {
        return Err(Error::InsufficientPoints { need: MIN_POINTS, got: corrs.len() });
    }
    for c in corrs {
        if !(c.weight.is_finite() && c.weight > 0.0) {
            return Err(Error::InvalidParameter(format!("correspondence weight {} is not positive", c.weight)));
        }
        if !(c.image.x.is_finite() && c.image.y.is_finite() && c.world.iter().all(|v| v.is_finite())) {
            return Err(Error::NonFinite("correspondence"));
        }
    }
    let num_markers = corrs.len() / 4;
    let linear = epnp::solve(corrs, k);
    if let Err(Error::DegenerateConfiguration(msg)) = &linear {
        return Err(Error::DegenerateConfiguration(msg.clone()));
    }

    let (pose, attitude, tf, converged, iterations) = match mode {
        Mode::FourDof => {
            let mut starts = Vec::new();
            if let Ok(tf) = &linear {
                starts.push(yaw_from_transform(tf).0);
            }
            if let Some(p) = linear_yaw(corrs, k) {
                starts.push(p);
            }
            let start = starts
                .into_iter()
                .map(|p| (reprojection_cost(corrs, k, &p), p))
                .filter(|(c, _)| c.is_finite())
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .map(|(_, p)| p);
            let start = match (start, linear) {
                (Some(p), _) => p,
                (None, Err(e)) => return Err(e),
                (None, Ok(_)) => {
                    return Err(Error::DegenerateConfiguration(
                        "no initial pose with points in front of the camera".into(),
                    ))
                }
            };
            check_rank(corrs, k, &YawModel(start))?;
            let out = refine::refine(corrs, k, YawModel(start), options);
            let p = out.model.0;
            (p, None, out.model.transform(), out.converged, out.iterations)
        }
        Mode::SixDof => {
            let start = linear?;
            check_rank(corrs, k, &RigidModel(start))?;
            let out = refine::refine(corrs, k, RigidModel(start), options);
            let (p, att) = yaw_from_transform(&out.model.0);
            (p, Some(att), out.model.0, out.converged, out.iterations)
        }
    };
    let estimate = PoseEstimate {
        pose,
        attitude,
        reprojection_rms: rms(corrs, k, &tf),
        num_markers,
        num_points: corrs.len(),
        converged,
        iterations,
    };
    if converged {
        Ok(estimate)
    } else {
        Err(Error::NoConvergence(Box::new(estimate)))
    }
}

/// Position error between two poses.
pub fn position_error(a: &Pose, b: &Pose) -> f64 {
    (a.position() - b.position()).norm()
}

/// Absolute wrapped yaw difference.
pub fn yaw_error(a: &Pose, b: &Pose) -> f64 {
    crate::geometry::wrap_angle(a.theta - b.theta).abs()
}
