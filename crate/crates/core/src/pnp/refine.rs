//! Damped Gauss-Newton refinement of the weighted reprojection cost.

use nalgebra::{DMatrix, Matrix3, SMatrix, SVector, Vector3};

use super::epnp::CameraTransform;
use super::{Correspondence, SolveOptions};
use crate::geometry::{yaw_world_to_camera, CameraIntrinsics, Pose};

/// A pose parameterization the refiner can step in.
pub(crate) trait Model<const N: usize>: Copy {
    /// World-to-camera transform at this parameter value.
    fn transform(&self) -> CameraTransform;

    /// Jacobian of the camera-frame point w.r.t. the parameters.
    fn point_jacobian(&self, world: &Vector3<f64>, camera: &Vector3<f64>) -> SMatrix<f64, 3, N>;

    fn step(&self, delta: &SVector<f64, N>) -> Self;
}

/// Yaw-only pose: camera center plus heading.
#[derive(Debug, Clone, Copy)]
pub(crate) struct YawModel(pub Pose);

impl Model<4> for YawModel {
    fn transform(&self) -> CameraTransform {
        let r = yaw_world_to_camera(self.0.theta);
        CameraTransform { rotation: r, translation: -r * self.0.position() }
    }

    fn point_jacobian(&self, _world: &Vector3<f64>, camera: &Vector3<f64>) -> SMatrix<f64, 3, 4> {
        // p_c = R(θ)(p_w − C) with rows (s, −c, 0), (0, 0, −1), (c, s, 0).
        let (s, c) = self.0.theta.sin_cos();
        SMatrix::<f64, 3, 4>::new(
            -s, c, 0.0, camera.z, //
            0.0, 0.0, 1.0, 0.0, //
            -c, -s, 0.0, -camera.x,
        )
    }

    fn step(&self, d: &SVector<f64, 4>) -> Self {
        let p = self.0;
        YawModel(Pose::new(p.x + d[0], p.y + d[1], p.z + d[2], p.theta + d[3]))
    }
}

/// Full rigid transform, rotation perturbed on the left by `exp([ω]×)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct RigidModel(pub CameraTransform);

impl Model<6> for RigidModel {
    fn transform(&self) -> CameraTransform {
        self.0
    }

    fn point_jacobian(&self, _world: &Vector3<f64>, camera: &Vector3<f64>) -> SMatrix<f64, 3, 6> {
        let mut j = SMatrix::<f64, 3, 6>::zeros();
        j.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-camera.cross_matrix()));
        j.fixed_view_mut::<3, 3>(0, 3).copy_from(&Matrix3::identity());
        j
    }

    fn step(&self, d: &SVector<f64, 6>) -> Self {
        let omega = Vector3::new(d[0], d[1], d[2]);
        let dr = nalgebra::Rotation3::new(omega).into_inner();
        let rotation = dr * self.0.rotation;
        let translation = dr * self.0.translation + Vector3::new(d[3], d[4], d[5]);
        RigidModel(CameraTransform { rotation, translation })
    }
}

/// Weighted squared reprojection error; infinite if any point is not in
/// front of the camera.
pub(crate) fn cost(corrs: &[Correspondence], k: &CameraIntrinsics, tf: &CameraTransform) -> f64 {
    let mut total = 0.0;
    for c in corrs {
        let p = tf.apply(&c.world.coords);
        if p.z <= 0.0 {
            return f64::INFINITY;
        }
        let du = c.image.x - (k.fx * p.x / p.z + k.cx);
        let dv = c.image.y - (k.fy * p.y / p.z + k.cy);
        total += c.weight * (du * du + dv * dv);
    }
    total
}

/// Normal equations `(JᵀWJ, JᵀWr)` with `r = observed − projected`.
pub(crate) fn normal_equations<M: Model<N>, const N: usize>(
    corrs: &[Correspondence],
    k: &CameraIntrinsics,
    model: &M,
) -> (SMatrix<f64, N, N>, SVector<f64, N>) {
    let tf = model.transform();
    let mut h = SMatrix::<f64, N, N>::zeros();
    let mut g = SVector::<f64, N>::zeros();
    for c in corrs {
        let p = tf.apply(&c.world.coords);
        let iz = 1.0 / p.z;
        let j = projection_jacobian(k, &p) * model.point_jacobian(&c.world.coords, &p);
        let r = nalgebra::Vector2::new(c.image.x - (k.fx * p.x * iz + k.cx), c.image.y - (k.fy * p.y * iz + k.cy));
        h += j.transpose() * j * c.weight;
        g += j.transpose() * r * c.weight;
    }
    (h, g)
}

/// Stacked `2n × N` Jacobian of the projections, rows scaled by `√w`.
pub(crate) fn weighted_jacobian<M: Model<N>, const N: usize>(
    corrs: &[Correspondence],
    k: &CameraIntrinsics,
    model: &M,
) -> DMatrix<f64> {
    let tf = model.transform();
    let mut out = DMatrix::<f64>::zeros(2 * corrs.len(), N);
    for (i, c) in corrs.iter().enumerate() {
        let p = tf.apply(&c.world.coords);
        let j = projection_jacobian(k, &p) * model.point_jacobian(&c.world.coords, &p) * c.weight.sqrt();
        out.fixed_view_mut::<2, N>(2 * i, 0).copy_from(&j);
    }
    out
}

fn projection_jacobian(k: &CameraIntrinsics, p: &Vector3<f64>) -> SMatrix<f64, 2, 3> {
    let iz = 1.0 / p.z;
    SMatrix::<f64, 2, 3>::new(
        k.fx * iz,
        0.0,
        -k.fx * p.x * iz * iz, //
        0.0,
        k.fy * iz,
        -k.fy * p.y * iz * iz,
    )
}

pub(crate) struct Refined<M> {
    pub model: M,
    pub converged: bool,
    pub iterations: usize,
}

/// Gauss-Newton with Levenberg damping: `λ` starts at `options.initial_damping`,
/// grows ×10 when a step raises the cost and shrinks ÷10 when it lowers it.
/// Converged once the cost gradient is below `options.grad_tol`, or once a
/// step shorter than `options.step_tol` lowers neither the cost nor the
/// gradient.
pub(crate) fn refine<M: Model<N>, const N: usize>(
    corrs: &[Correspondence],
    k: &CameraIntrinsics,
    start: M,
    options: &SolveOptions,
) -> Refined<M> {
    let mut model = start;
    let mut current = cost(corrs, k, &model.transform());
    let mut lambda = options.initial_damping;
    let mut iterations = 0;
    let mut converged = false;
    let mut floor_grad = f64::INFINITY;
    while iterations < options.max_iters {
        iterations += 1;
        let (h, g) = normal_equations(corrs, k, &model);
        // The cost gradient is −2g.
        if 2.0 * g.norm() <= options.grad_tol {
            converged = true;
            break;
        }
        let mut accepted = false;
        // Inner loop raises the damping until a step stops increasing the cost.
        loop {
            let damped = h + SMatrix::<f64, N, N>::identity() * lambda;
            let Some(delta) = damped.cholesky().map(|ch| ch.solve(&g)) else {
                lambda *= 10.0;
                if lambda > options.max_damping {
                    break;
                }
                continue;
            };
            let trial = model.step(&delta);
            let trial_cost = cost(corrs, k, &trial.transform());
            let small = delta.norm() < options.step_tol;
            if trial_cost < current || (trial_cost == current && !small) {
                model = trial;
                current = trial_cost;
                lambda = (lambda / 10.0).max(options.min_damping);
                accepted = true;
                break;
            }
            if small {
                // The cost cannot resolve steps this short; keep going only
                // while the gradient reaches new lows.
                let trial_grad = normal_equations(corrs, k, &trial).1.norm();
                if trial_grad < g.norm().min(floor_grad) {
                    floor_grad = trial_grad;
                    model = trial;
                    current = trial_cost;
                    accepted = true;
                } else {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
            if lambda > options.max_damping {
                break;
            }
        }
        if converged || !accepted {
            break;
        }
    }
    Refined { model, converged, iterations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{default_wall, project};

    fn numeric_jacobian<M: Model<N>, const N: usize>(m: &M, w: &Vector3<f64>) -> SMatrix<f64, 3, N> {
        let h = 1e-6;
        let mut j = SMatrix::<f64, 3, N>::zeros();
        for i in 0..N {
            let mut d = SVector::<f64, N>::zeros();
            d[i] = h;
            let plus = m.step(&d).transform().apply(w);
            d[i] = -h;
            let minus = m.step(&d).transform().apply(w);
            j.set_column(i, &((plus - minus) / (2.0 * h)));
        }
        j
    }

    #[test]
    fn yaw_jacobian_matches_differences() {
        let m = YawModel(Pose::new(1.0, -2.5, 0.8, 1.3));
        let w = Vector3::new(0.4, 0.0, 0.7);
        let p = m.transform().apply(&w);
        let diff = m.point_jacobian(&w, &p) - numeric_jacobian(&m, &w);
        assert!(diff.norm() < 1e-8, "{diff}");
    }

    #[test]
    fn rigid_jacobian_matches_differences() {
        let base = Pose::new(1.0, -2.5, 0.8, 1.3);
        let r = base.world_to_camera();
        let m = RigidModel(CameraTransform { rotation: r, translation: -r * base.position() });
        let w = Vector3::new(0.4, 0.0, 0.7);
        let p = m.transform().apply(&w);
        let diff = m.point_jacobian(&w, &p) - numeric_jacobian(&m, &w);
        assert!(diff.norm() < 1e-8, "{diff}");
    }

    #[test]
    fn refinement_recovers_from_offset_start() {
        let k = CameraIntrinsics::default();
        let truth = Pose::new(2.0, -3.0, 1.0, std::f64::consts::FRAC_PI_2);
        let corrs: Vec<_> = default_wall()
            .markers()
            .iter()
            .flat_map(|m| m.corners)
            .map(|w| Correspondence { world: w, image: project(&k, &truth, &w).unwrap(), weight: 1.0 })
            .collect();
        let start = YawModel(Pose::new(2.1, -2.9, 0.95, 1.5));
        let out = refine(&corrs, &k, start, &SolveOptions::default());
        assert!(out.converged);
        assert!((out.model.0.position() - truth.position()).norm() < 1e-9);
        assert!((out.model.0.theta - truth.theta).abs() < 1e-9);
    }
}
