//! Robust pose estimation by minimizing reprojection error.
//!
//! Gauss-Newton on a left-multiplied se(3) increment with a Huber kernel
//! (applied as IRLS weights). Several gating rounds re-classify
//! correspondences as inliers/outliers between optimization passes.

use nalgebra::{Matrix2x6, Matrix3, Matrix6, Vector2, Vector3, Vector6};

use super::{hat, project, se3_exp, CameraIntrinsics, GeometryError, PoseSE3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseConfig {
    /// Huber threshold in pixels.
    pub huber_px: f64,
    /// Residuals above this many pixels are flagged as outliers after a round.
    pub outlier_px: f64,
    pub rounds: usize,
    pub iters: usize,
    pub min_inliers: usize,
    /// Increment norm below which a round stops early.
    pub convergence: f64,
    pub max_halvings: usize,
}

impl Default for PoseConfig {
    fn default() -> Self {
        Self {
            huber_px: 2.5,
            outlier_px: 5.0,
            rounds: 4,
            iters: 10,
            min_inliers: 12,
            convergence: 1e-8,
            max_halvings: 8,
        }
    }
}

/// Minimum number of correspondences accepted by [`estimate_pose`].
pub const MIN_CORRESPONDENCES: usize = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct PoseEstimate {
    pub pose: PoseSE3,
    pub inliers: Vec<bool>,
    pub n_inliers: usize,
    /// Robust cost after every accepted step, one list per round (the first
    /// entry of each list is the cost at the start of the round).
    pub cost_trace: Vec<Vec<f64>>,
}

/// Residual `project(R p + t) - obs`, or `None` if the point is not in front.
#[inline]
pub fn reprojection_residual(
    pose: &PoseSE3,
    point: &Vector3<f64>,
    obs: &Vector2<f64>,
    k: &CameraIntrinsics,
) -> Option<Vector2<f64>> {
    project(&pose.transform_point(point), k).ok().map(|uv| uv - obs)
}

/// Jacobian of the residual with respect to a left increment `exp(xi) * pose`,
/// `xi = [rho; phi]`.
pub fn reprojection_jacobian(
    pose: &PoseSE3,
    point: &Vector3<f64>,
    k: &CameraIntrinsics,
) -> Matrix2x6<f64> {
    let pc = pose.transform_point(point);
    let inv_z = 1.0 / pc.z;
    let inv_z2 = inv_z * inv_z;
    let d_proj = nalgebra::Matrix2x3::new(
        k.fx * inv_z,
        0.0,
        -k.fx * pc.x * inv_z2,
        0.0,
        k.fy * inv_z,
        -k.fy * pc.y * inv_z2,
    );
    let mut d_point = nalgebra::Matrix3x6::zeros();
    d_point.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
    d_point.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-hat(&pc)));
    d_proj * d_point
}

#[inline]
fn huber(sq: f64, delta: f64) -> f64 {
    if sq <= delta * delta {
        sq
    } else {
        2.0 * delta * sq.sqrt() - delta * delta
    }
}

/// Robust cost over the active correspondences; points behind the camera
/// contribute the saturated cost of a residual at the outlier gate.
fn robust_cost(
    pose: &PoseSE3,
    points: &[Vector3<f64>],
    observations: &[Vector2<f64>],
    active: &[bool],
    k: &CameraIntrinsics,
    config: &PoseConfig,
) -> f64 {
    let behind = huber(config.outlier_px * config.outlier_px * 4.0, config.huber_px);
    points
        .iter()
        .zip(observations)
        .zip(active)
        .filter(|(_, &a)| a)
        .map(|((p, o), _)| match reprojection_residual(pose, p, o, k) {
            Some(r) => huber(r.norm_squared(), config.huber_px),
            None => behind,
        })
        .sum()
}

/// Estimates the world-to-camera pose from 3D-2D correspondences, starting
/// from `initial`.
pub fn estimate_pose(
    points: &[Vector3<f64>],
    observations: &[Vector2<f64>],
    k: &CameraIntrinsics,
    initial: &PoseSE3,
    config: &PoseConfig,
) -> Result<PoseEstimate, GeometryError> {
    assert_eq!(points.len(), observations.len(), "one observation per point");
    if points.len() < MIN_CORRESPONDENCES {
        return Err(GeometryError::TooFewCorrespondences(points.len()));
    }
    let mut pose = *initial;
    let mut active = vec![true; points.len()];
    let mut cost_trace = Vec::with_capacity(config.rounds);
    let gate2 = config.outlier_px * config.outlier_px;

    for _round in 0..config.rounds.max(1) {
        let mut cost = robust_cost(&pose, points, observations, &active, k, config);
        let mut trace = vec![cost];
        for _ in 0..config.iters {
            let mut h = Matrix6::<f64>::zeros();
            let mut g = Vector6::<f64>::zeros();
            for ((p, o), _) in points.iter().zip(observations).zip(&active).filter(|(_, &a)| a) {
                let Some(r) = reprojection_residual(&pose, p, o, k) else {
                    continue;
                };
                let norm = r.norm();
                let w = if norm <= config.huber_px {
                    1.0
                } else {
                    config.huber_px / norm
                };
                let j = reprojection_jacobian(&pose, p, k);
                h += j.transpose() * j * w;
                g += j.transpose() * r * w;
            }
            let Some(chol) = h.cholesky() else {
                break;
            };
            let dx = -chol.solve(&g);
            if !dx.iter().all(|v| v.is_finite()) {
                break;
            }

            let mut step = dx;
            let mut accepted = None;
            for _ in 0..=config.max_halvings {
                let candidate = se3_exp(&step).compose(&pose);
                let c = robust_cost(&candidate, points, observations, &active, k, config);
                if c <= cost {
                    accepted = Some((candidate, c));
                    break;
                }
                step *= 0.5;
            }
            let Some((candidate, c)) = accepted else {
                break;
            };
            pose = candidate;
            cost = c;
            trace.push(cost);
            if step.norm() < config.convergence {
                break;
            }
        }
        cost_trace.push(trace);

        for (i, (p, o)) in points.iter().zip(observations).enumerate() {
            active[i] = matches!(reprojection_residual(&pose, p, o, k), Some(r) if r.norm_squared() <= gate2);
        }
    }

    let n_inliers = active.iter().filter(|&&a| a).count();
    if n_inliers < config.min_inliers {
        return Err(GeometryError::TrackingFailure {
            inliers: n_inliers,
            required: config.min_inliers,
        });
    }
    Ok(PoseEstimate {
        pose,
        inliers: active,
        n_inliers,
        cost_trace,
    })
}
