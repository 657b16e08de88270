//! EPnP linear initialization.
//!
//! World points are expressed as barycentric combinations of control
//! points; the camera-frame control points lie in the (near) null space of
//! a `2n × 3k` system built from the image observations. For a planar point
//! set the scatter matrix has a vanishing third eigenvalue and only three
//! control points spanning the plane are used.

use nalgebra::{DMatrix, Matrix3, SymmetricEigen, Vector3};

use super::Correspondence;
use crate::error::{Error, Result};
use crate::geometry::CameraIntrinsics;

/// Third/first scatter eigenvalue ratio below which points count as planar.
pub const PLANAR_RATIO: f64 = 1e-6;
/// Second/first scatter eigenvalue ratio below which points count as collinear.
pub const COLLINEAR_RATIO: f64 = 1e-10;

/// Rigid transform taking world points into the camera frame.
#[derive(Debug, Clone, Copy)]
pub struct CameraTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl CameraTransform {
    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn camera_center(&self) -> Vector3<f64> {
        -self.rotation.transpose() * self.translation
    }
}

struct ControlFrame {
    points: Vec<Vector3<f64>>,
    /// Barycentric coordinates of each world point, `points.len()` per row.
    alphas: Vec<[f64; 4]>,
}

fn sorted_eigen(m: Matrix3<f64>) -> ([f64; 3], [Vector3<f64>; 3]) {
    let eig = SymmetricEigen::new(m);
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    (idx.map(|i| eig.eigenvalues[i].max(0.0)), idx.map(|i| eig.eigenvectors.column(i).into_owned()))
}

/// Whether the world points are coplanar to within [`PLANAR_RATIO`].
pub fn is_planar(points: &[Vector3<f64>]) -> bool {
    let (vals, _) = sorted_eigen(scatter(points).1);
    vals[0] > 0.0 && vals[2] / vals[0] < PLANAR_RATIO
}

fn scatter(points: &[Vector3<f64>]) -> (Vector3<f64>, Matrix3<f64>) {
    let n = points.len() as f64;
    let centroid = points.iter().sum::<Vector3<f64>>() / n;
    let s = points.iter().fold(Matrix3::zeros(), |acc, p| {
        let d = p - centroid;
        acc + d * d.transpose()
    });
    (centroid, s)
}

fn control_frame(points: &[Vector3<f64>]) -> Result<ControlFrame> {
    let (centroid, s) = scatter(points);
    let (vals, vecs) = sorted_eigen(s);
    if vals[0] <= 0.0 || vals[1] / vals[0] < COLLINEAR_RATIO {
        return Err(Error::DegenerateConfiguration("world points are collinear".into()));
    }
    let planar = vals[2] / vals[0] < PLANAR_RATIO;
    let axes = if planar { 2 } else { 3 };
    let n = points.len() as f64;
    let scales: Vec<f64> = (0..axes).map(|j| (vals[j] / n).sqrt()).collect();
    let mut ctrl = vec![centroid];
    for j in 0..axes {
        ctrl.push(centroid + vecs[j] * scales[j]);
    }
    let alphas = points
        .iter()
        .map(|p| {
            let d = p - centroid;
            let mut a = [0.0; 4];
            for j in 0..axes {
                a[j + 1] = d.dot(&vecs[j]) / scales[j];
            }
            a[0] = 1.0 - a[1..].iter().sum::<f64>();
            a
        })
        .collect();
    Ok(ControlFrame { points: ctrl, alphas })
}

/// Least-squares rigid alignment `camera ≈ R·world + t` (no scale).
pub fn align_rigid(world: &[Vector3<f64>], camera: &[Vector3<f64>]) -> CameraTransform {
    let n = world.len() as f64;
    let cw = world.iter().sum::<Vector3<f64>>() / n;
    let cc = camera.iter().sum::<Vector3<f64>>() / n;
    let h = world.iter().zip(camera).fold(Matrix3::zeros(), |acc, (w, c)| acc + (w - cw) * (c - cc).transpose());
    let svd = h.svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let fix = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d));
    let rotation = v * fix * u.transpose();
    CameraTransform { rotation, translation: cc - rotation * cw }
}

/// Weighted squared reprojection error of a camera transform.
fn transform_cost(corrs: &[Correspondence], k: &CameraIntrinsics, tf: &CameraTransform) -> f64 {
    corrs
        .iter()
        .map(|c| {
            let p = tf.apply(&c.world.coords);
            if p.z <= 0.0 {
                return f64::INFINITY;
            }
            let u = k.fx * p.x / p.z + k.cx - c.image.x;
            let v = k.fy * p.y / p.z + k.cy - c.image.y;
            c.weight * (u * u + v * v)
        })
        .sum()
}

/// EPnP estimate of the world-to-camera transform.
///
/// Tries the one- and two-dimensional kernel hypotheses and returns the one
/// with the lower reprojection error.
pub fn solve(corrs: &[Correspondence], k: &CameraIntrinsics) -> Result<CameraTransform> {
    let world: Vec<Vector3<f64>> = corrs.iter().map(|c| c.world.coords).collect();
    let frame = control_frame(&world)?;
    let nc = frame.points.len();
    let mut m = DMatrix::<f64>::zeros(2 * corrs.len(), 3 * nc);
    for (i, (c, a)) in corrs.iter().zip(&frame.alphas).enumerate() {
        let sw = c.weight.sqrt();
        for j in 0..nc {
            let aj = a[j] * sw;
            m[(2 * i, 3 * j)] = aj * k.fx;
            m[(2 * i, 3 * j + 2)] = aj * (k.cx - c.image.x);
            m[(2 * i + 1, 3 * j + 1)] = aj * k.fy;
            m[(2 * i + 1, 3 * j + 2)] = aj * (k.cy - c.image.y);
        }
    }
    let mtm = m.transpose() * &m;
    let eig = SymmetricEigen::new(mtm);
    let mut order: Vec<usize> = (0..3 * nc).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let kernel: Vec<Vec<Vector3<f64>>> = order[..2]
        .iter()
        .map(|&col| {
            let v = eig.eigenvectors.column(col);
            (0..nc).map(|j| Vector3::new(v[3 * j], v[3 * j + 1], v[3 * j + 2])).collect()
        })
        .collect();

    let pairs: Vec<(usize, usize)> = (0..nc).flat_map(|a| (a + 1..nc).map(move |b| (a, b))).collect();
    let world_dist2: Vec<f64> =
        pairs.iter().map(|&(a, b)| (frame.points[a] - frame.points[b]).norm_squared()).collect();

    let mut candidates = Vec::new();
    // One kernel vector: a single scale fixed by the control-point distances.
    {
        let v = &kernel[0];
        let (num, den) = pairs.iter().zip(&world_dist2).fold((0.0, 0.0), |(n, d), (&(a, b), &w2)| {
            let dc = (v[a] - v[b]).norm();
            (n + dc * w2.sqrt(), d + dc * dc)
        });
        if den > 0.0 {
            candidates.push(kernel[0].iter().map(|p| p * (num / den)).collect::<Vec<_>>());
        }
    }
    // Two kernel vectors: linearize the distance constraints in
    // (b1², b1·b2, b2²).
    {
        let (v1, v2) = (&kernel[0], &kernel[1]);
        let mut l = DMatrix::<f64>::zeros(pairs.len(), 3);
        let mut rho = nalgebra::DVector::<f64>::zeros(pairs.len());
        for (r, (&(a, b), &w2)) in pairs.iter().zip(&world_dist2).enumerate() {
            let d1 = v1[a] - v1[b];
            let d2 = v2[a] - v2[b];
            l[(r, 0)] = d1.dot(&d1);
            l[(r, 1)] = 2.0 * d1.dot(&d2);
            l[(r, 2)] = d2.dot(&d2);
            rho[r] = w2;
        }
        if let Ok(beta) = l.svd(true, true).solve(&rho, 1e-12) {
            if beta[0] > 0.0 {
                let b1 = beta[0].sqrt();
                let b2 = beta[1] / b1;
                candidates.push(v1.iter().zip(v2).map(|(p, q)| p * b1 + q * b2).collect());
            }
        }
    }

    let mut best: Option<(f64, CameraTransform)> = None;
    for ctrl_cam in candidates {
        let mut cam: Vec<Vector3<f64>> =
            frame.alphas.iter().map(|a| (0..nc).map(|j| ctrl_cam[j] * a[j]).sum()).collect();
        // The kernel is sign-ambiguous; points must sit in front of the camera.
        if cam.iter().map(|p| p.z).sum::<f64>() < 0.0 {
            cam.iter_mut().for_each(|p| *p = -*p);
        }
        let tf = align_rigid(&world, &cam);
        let cost = transform_cost(corrs, k, &tf);
        if cost.is_finite() && best.as_ref().is_none_or(|(c, _)| cost < *c) {
            best = Some((cost, tf));
        }
    }
    best.map(|(_, tf)| tf).ok_or_else(|| {
        Error::DegenerateConfiguration("EPnP found no pose with all points in front of the camera".into())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{default_wall, project, Pose};
    use crate::pnp::Correspondence;
    use nalgebra::Rotation3;

    fn corrs_for(pose: &Pose, k: &CameraIntrinsics, pts: &[crate::geometry::Point3]) -> Vec<Correspondence> {
        pts.iter().map(|w| Correspondence { world: *w, image: project(k, pose, w).unwrap(), weight: 1.0 }).collect()
    }

    #[test]
    fn planar_wall_exact() {
        let k = CameraIntrinsics::default();
        let pose = Pose::new(2.0, -3.0, 1.0, std::f64::consts::FRAC_PI_2 + 0.1);
        let pts: Vec<_> = default_wall().markers().iter().flat_map(|m| m.corners).collect();
        let corrs = corrs_for(&pose, &k, &pts);
        assert!(is_planar(&pts.iter().map(|p| p.coords).collect::<Vec<_>>()));
        let tf = solve(&corrs, &k).unwrap();
        assert!((tf.camera_center() - pose.position()).norm() < 1e-6);
        assert!((tf.rotation - pose.world_to_camera()).norm() < 1e-6);
    }

    #[test]
    fn non_planar_exact_with_tilt() {
        let k = CameraIntrinsics::default();
        let pts: Vec<_> = (0..20)
            .map(|i| {
                let f = i as f64;
                crate::geometry::Point3::new(
                    (f * 0.37).sin() * 1.5 + 2.0,
                    (f * 0.91).cos() * 0.8 + 1.0,
                    (f * 0.53).sin() + 1.0,
                )
            })
            .collect();
        let tilt = Rotation3::from_euler_angles(0.05, -0.08, 0.02);
        let base = Pose::new(2.0, -3.0, 1.0, 1.4);
        let rotation = tilt.matrix() * base.world_to_camera();
        let truth = CameraTransform { rotation, translation: -rotation * base.position() };
        let corrs: Vec<_> = pts
            .iter()
            .map(|w| Correspondence {
                world: *w,
                image: k.project_camera(&truth.apply(&w.coords)).unwrap(),
                weight: 1.0,
            })
            .collect();
        let tf = solve(&corrs, &k).unwrap();
        assert!((tf.rotation - truth.rotation).norm() < 1e-6);
        assert!((tf.translation - truth.translation).norm() < 1e-6);
    }

    #[test]
    fn collinear_points_are_degenerate() {
        let k = CameraIntrinsics::default();
        let pose = Pose::new(0.0, -3.0, 0.0, std::f64::consts::FRAC_PI_2);
        let pts: Vec<_> = (0..8).map(|i| crate::geometry::Point3::new(i as f64 * 0.1, 0.0, 0.0)).collect();
        let corrs = corrs_for(&pose, &k, &pts);
        assert!(matches!(solve(&corrs, &k), Err(Error::DegenerateConfiguration(_))));
    }

    #[test]
    fn rigid_alignment_recovers_transform() {
        let r = Rotation3::from_euler_angles(0.3, -0.2, 1.1).into_inner();
        let t = Vector3::new(0.5, -1.0, 4.0);
        let world: Vec<_> = (0..6).map(|i| Vector3::new(i as f64, (i * i) as f64 * 0.1, (i as f64).sin())).collect();
        let cam: Vec<_> = world.iter().map(|p| r * p + t).collect();
        let tf = align_rigid(&world, &cam);
        assert!((tf.rotation - r).norm() < 1e-10);
        assert!((tf.translation - t).norm() < 1e-10);
    }
}
