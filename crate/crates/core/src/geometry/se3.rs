//! Rigid transforms stored as a rotation matrix and a translation.
//!
//! Tangent vectors are ordered `[translation; rotation]`.

use nalgebra::{Matrix3, Vector3, Vector6};

/// Compositions after which the rotation is projected back onto SO(3).
const REORTHONORMALIZE_EVERY: u32 = 50;

/// A rigid transform `x -> R x + t`. Used world-to-camera for tracked poses
/// and camera-to-world for trajectory output.
#[derive(Debug, Clone, Copy)]
pub struct PoseSE3 {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    compositions: u32,
}

impl PartialEq for PoseSE3 {
    fn eq(&self, other: &Self) -> bool {
        self.rotation == other.rotation && self.translation == other.translation
    }
}

impl Default for PoseSE3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl PoseSE3 {
    pub fn identity() -> Self {
        Self::new(Matrix3::identity(), Vector3::zeros())
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
            compositions: 0,
        }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self::new(Matrix3::identity(), t)
    }

    #[inline]
    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
            compositions: self.compositions,
        }
    }

    /// `self * other`: apply `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        let mut out = Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
            compositions: self.compositions.max(other.compositions) + 1,
        };
        if out.compositions >= REORTHONORMALIZE_EVERY {
            out.rotation = orthonormalize(&out.rotation);
            out.compositions = 0;
        }
        out
    }

    /// Camera center for a world-to-camera pose.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    pub fn exp(xi: &Vector6<f64>) -> Self {
        se3_exp(xi)
    }

    pub fn log(&self) -> Vector6<f64> {
        se3_log(self)
    }

    /// Largest deviation of `RᵀR` from identity and of `det R` from 1.
    pub fn orthonormality_error(&self) -> f64 {
        let r = &self.rotation;
        let e = (r.transpose() * r - Matrix3::identity()).abs().max();
        e.max((r.determinant() - 1.0).abs())
    }

    /// Angle of the relative rotation between two poses.
    pub fn rotation_angle_to(&self, other: &Self) -> f64 {
        let rel = self.rotation.transpose() * other.rotation;
        so3_log(&rel).norm()
    }

    /// 3x4 row-major `[R | t]`.
    pub fn to_row_major_3x4(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)], t.x,
            r[(1, 0)], r[(1, 1)], r[(1, 2)], t.y,
            r[(2, 0)], r[(2, 1)], r[(2, 2)], t.z,
        ]
    }

    pub fn from_row_major_3x4(m: &[f64; 12]) -> Self {
        Self::new(
            Matrix3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]),
            Vector3::new(m[3], m[7], m[11]),
        )
    }
}

#[inline]
pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Closest rotation in the Frobenius sense (polar decomposition via SVD).
pub fn orthonormalize(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * v_t;
    }
    r
}

/// Rodrigues' formula.
pub fn so3_exp(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = phi.norm_squared();
    let k = hat(phi);
    let (a, b) = if theta2 < 1e-12 {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        let theta = theta2.sqrt();
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    Matrix3::identity() + k * a + k * k * b
}

pub fn so3_log(r: &Matrix3<f64>) -> Vector3<f64> {
    let vee = Vector3::new(
        r[(2, 1)] - r[(1, 2)],
        r[(0, 2)] - r[(2, 0)],
        r[(1, 0)] - r[(0, 1)],
    );
    let cos = (r.trace() - 1.0) / 2.0;
    let sin = vee.norm() / 2.0;
    let theta = sin.atan2(cos);
    if theta < 1e-6 {
        return vee * (0.5 + theta * theta / 12.0);
    }
    if std::f64::consts::PI - theta < 1e-3 {
        // Near pi the antisymmetric part vanishes; take the axis from the
        // symmetric part, (R + R^T)/2 = cos I + (1 - cos) n n^T.
        let nn = ((r + r.transpose()) * 0.5 - Matrix3::identity() * cos) / (1.0 - cos);
        let i = (0..3)
            .max_by(|&a, &b| nn[(a, a)].total_cmp(&nn[(b, b)]))
            .expect("three diagonal entries");
        let mut axis = nn.column(i).into_owned() / nn[(i, i)].sqrt();
        axis.normalize_mut();
        if axis.dot(&vee) < 0.0 {
            axis = -axis;
        }
        return axis * theta;
    }
    vee * (theta / (2.0 * sin))
}

/// Left Jacobian of SO(3), mapping the translation part of the tangent.
fn so3_left_jacobian(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = phi.norm_squared();
    let k = hat(phi);
    let (a, b) = if theta2 < 1e-12 {
        (0.5 - theta2 / 24.0, 1.0 / 6.0 - theta2 / 120.0)
    } else {
        let theta = theta2.sqrt();
        (
            (1.0 - theta.cos()) / theta2,
            (theta - theta.sin()) / (theta2 * theta),
        )
    };
    Matrix3::identity() + k * a + k * k * b
}

/// Exponential map of se(3), `xi = [rho; phi]`.
pub fn se3_exp(xi: &Vector6<f64>) -> PoseSE3 {
    let rho = xi.fixed_rows::<3>(0).into_owned();
    let phi = xi.fixed_rows::<3>(3).into_owned();
    PoseSE3::new(so3_exp(&phi), so3_left_jacobian(&phi) * rho)
}

pub fn se3_log(pose: &PoseSE3) -> Vector6<f64> {
    let phi = so3_log(&pose.rotation);
    let j = so3_left_jacobian(&phi);
    let rho = j
        .try_inverse()
        .expect("left Jacobian is invertible below 2*pi")
        * pose.translation;
    Vector6::new(rho.x, rho.y, rho.z, phi.x, phi.y, phi.z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn xi(v: [f64; 6]) -> Vector6<f64> {
        Vector6::from_row_slice(&v)
    }

    #[test]
    fn exp_zero_is_identity() {
        assert_eq!(se3_exp(&Vector6::zeros()), PoseSE3::identity());
    }

    #[test]
    fn quarter_turn_about_z() {
        let p = se3_exp(&xi([0.0, 0.0, 0.0, 0.0, 0.0, FRAC_PI_2]));
        let x = p.rotation * Vector3::x();
        assert!((x - Vector3::y()).norm() < 1e-12);
    }

    #[test]
    fn exp_of_negation_is_inverse() {
        let v = xi([0.3, -1.2, 0.5, 0.4, -0.2, 0.9]);
        let p = se3_exp(&v).compose(&se3_exp(&-v));
        assert!((p.rotation - Matrix3::identity()).abs().max() < 1e-9);
        assert!(p.translation.norm() < 1e-9);
    }

    #[test]
    fn log_exp_round_trip() {
        for v in [
            [0.0; 6],
            [1.0, 2.0, 3.0, 1e-9, 0.0, -1e-9],
            [0.1, -0.2, 0.3, 0.5, 0.5, -0.5],
            [-3.0, 0.0, 1.0, 0.0, 2.5, 0.0],
            [0.2, 0.1, 0.0, 0.0, 0.0, std::f64::consts::PI - 1e-4],
        ] {
            let v = xi(v);
            let back = se3_log(&se3_exp(&v));
            assert!((back - v).norm() < 1e-9, "{v:?} -> {back:?}");
        }
    }

    #[test]
    fn composition_is_associative() {
        let a = se3_exp(&xi([0.1, 0.2, 0.3, 0.4, 0.5, 0.6]));
        let b = se3_exp(&xi([-1.0, 0.0, 2.0, 0.0, -0.3, 0.1]));
        let c = se3_exp(&xi([0.5, 0.5, 0.5, 1.0, 0.0, 0.0]));
        let l = a.compose(&b).compose(&c);
        let r = a.compose(&b.compose(&c));
        assert!((l.rotation - r.rotation).abs().max() < 1e-12);
        assert!((l.translation - r.translation).norm() < 1e-12);
    }

    #[test]
    fn long_chains_stay_orthonormal() {
        let step = se3_exp(&xi([0.01, 0.0, 0.02, 0.013, -0.007, 0.021]));
        let mut p = PoseSE3::identity();
        for _ in 0..10_000 {
            p = p.compose(&step);
        }
        assert!(p.orthonormality_error() < 1e-9);
    }

    #[test]
    fn row_major_round_trip_and_center() {
        let p = se3_exp(&xi([1.0, -2.0, 0.5, 0.2, 0.1, -0.3]));
        assert_eq!(PoseSE3::from_row_major_3x4(&p.to_row_major_3x4()), p);
        let c = p.center();
        assert!(p.transform_point(&c).norm() < 1e-12);
    }

    #[test]
    fn orthonormalize_fixes_perturbation() {
        let r = so3_exp(&Vector3::new(0.3, 0.2, 0.1)) + Matrix3::repeat(1e-4);
        let fixed = orthonormalize(&r);
        assert!(PoseSE3::new(fixed, Vector3::zeros()).orthonormality_error() < 1e-12);
    }
}
