//! Minimal 3D rotation and pose algebra shared by all modules.
//!
//! Rotations are stored as unit quaternions in `(w, x, y, z)` order. Every
//! constructor and composition renormalizes and canonicalizes the sign to
//! `w >= 0`, so downstream covariance updates never see the same physical
//! rotation flip representation.

use nalgebra::{Matrix3, Vector3};

/// 3-vector of `f64`, units depend on context (m, m/s, rad, rad/s, m/s², N).
pub type Vec3 = Vector3<f64>;
/// 3×3 matrix of `f64`.
pub type Mat3 = Matrix3<f64>;

/// Rotation angle below which exp/log switch to their Taylor expansions.
pub const SMALL_ANGLE: f64 = 1e-8;

/// Unit quaternion rotation, canonicalized to `w >= 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl Rotation {
    /// The identity rotation.
    pub fn identity() -> Self {
        Rotation {
            w: 1.0,
            x: 0.0,
            y: 0.0,
            z: 0.0,
        }
    }

    /// Build from quaternion components in `(w, x, y, z)` order.
    ///
    /// The input is normalized; it does not need to be exactly unit length.
    /// Panics if the norm is close to zero (that is a caller bug, not a
    /// recoverable data condition).
    pub fn from_wxyz(w: f64, x: f64, y: f64, z: f64) -> Self {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        assert!(
            n > 1e-12 && n.is_finite(),
            "quaternion norm {n} not normalizable"
        );
        Rotation {
            w: w / n,
            x: x / n,
            y: y / n,
            z: z / n,
        }
        .canonicalized()
    }

    /// Like [`Rotation::from_wxyz`] but returns `None` for degenerate input.
    pub fn try_from_wxyz(w: f64, x: f64, y: f64, z: f64) -> Option<Self> {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if !n.is_finite() || n <= 1e-12 {
            return None;
        }
        Some(Self::from_wxyz(w, x, y, z))
    }

    /// Rotation about the world z axis.
    pub fn from_yaw(yaw: f64) -> Self {
        so3_exp(Vec3::new(0.0, 0.0, yaw))
    }

    /// Quaternion components `[w, x, y, z]`.
    pub fn wxyz(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    fn canonicalized(self) -> Self {
        // Keep w >= 0; break the w == 0 tie on the first nonzero vector
        // component so the double cover maps to a unique representative.
        let flip = self.w < 0.0
            || (self.w == 0.0
                && (self.x < 0.0
                    || (self.x == 0.0 && (self.y < 0.0 || (self.y == 0.0 && self.z < 0.0)))));
        if flip {
            Rotation {
                w: -self.w,
                x: -self.x,
                y: -self.y,
                z: -self.z,
            }
        } else {
            self
        }
    }

    /// Inverse (conjugate) rotation.
    pub fn inverse(&self) -> Self {
        Rotation {
            w: self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
        .canonicalized()
    }

    /// Rotate a vector.
    pub fn rotate(&self, v: Vec3) -> Vec3 {
        // v' = v + w * t + q_vec × t  with  t = 2 q_vec × v
        let qv = Vec3::new(self.x, self.y, self.z);
        let t = 2.0 * qv.cross(&v);
        v + self.w * t + qv.cross(&t)
    }

    /// Rotation matrix (body-to-world when the quaternion stores `^W q_WB`).
    pub fn to_matrix(&self) -> Mat3 {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        Mat3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        )
    }

    /// Rotation angle in `[0, π]`.
    pub fn angle(&self) -> f64 {
        let n = (self.x * self.x + self.y * self.y + self.z * self.z).sqrt();
        2.0 * n.atan2(self.w)
    }

    /// Angle of the relative rotation `self⁻¹ · other`, in `[0, π]`.
    pub fn angle_to(&self, other: &Rotation) -> f64 {
        (self.inverse() * *other).angle()
    }
}

impl Default for Rotation {
    fn default() -> Self {
        Rotation::identity()
    }
}

impl std::ops::Mul for Rotation {
    type Output = Rotation;

    fn mul(self, rhs: Rotation) -> Rotation {
        let (w1, x1, y1, z1) = (self.w, self.x, self.y, self.z);
        let (w2, x2, y2, z2) = (rhs.w, rhs.x, rhs.y, rhs.z);
        // Renormalize on every composition so long chains cannot drift.
        Rotation::from_wxyz(
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        )
    }
}

impl std::ops::Mul<Vec3> for Rotation {
    type Output = Vec3;

    fn mul(self, rhs: Vec3) -> Vec3 {
        self.rotate(rhs)
    }
}

/// SO(3) exponential map (Rodrigues) with a second-order Taylor fallback for
/// `‖phi‖ < SMALL_ANGLE` to avoid catastrophic cancellation.
pub fn so3_exp(phi: Vec3) -> Rotation {
    let theta_sq = phi.norm_squared();
    let (w, k) = if theta_sq < SMALL_ANGLE * SMALL_ANGLE {
        (1.0 - theta_sq / 8.0, 0.5 - theta_sq / 48.0)
    } else {
        let theta = theta_sq.sqrt();
        let half = 0.5 * theta;
        (half.cos(), half.sin() / theta)
    };
    Rotation::from_wxyz(w, k * phi.x, k * phi.y, k * phi.z)
}

/// SO(3) logarithm. Returns the rotation vector with angle in `[0, π]`;
/// the π boundary maps to a deterministic axis sign via canonicalization.
pub fn so3_log(r: Rotation) -> Vec3 {
    let [w, x, y, z] = r.wxyz();
    let v = Vec3::new(x, y, z);
    let n = v.norm();
    if n < SMALL_ANGLE {
        // w is ~1 here because the quaternion is canonical and unit.
        return v * (2.0 / w) * (1.0 - n * n / (3.0 * w * w));
    }
    let theta = 2.0 * n.atan2(w);
    v * (theta / n)
}

/// Skew-symmetric (cross-product) matrix: `skew(v) * u == v × u`.
pub fn skew(v: Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rigid transform: rotation followed by translation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub position: Vec3,
    pub rotation: Rotation,
}

impl Pose {
    pub fn identity() -> Self {
        Pose {
            position: Vec3::zeros(),
            rotation: Rotation::identity(),
        }
    }

    pub fn new(position: Vec3, rotation: Rotation) -> Self {
        Pose { position, rotation }
    }

    /// `self ∘ rhs`: apply `rhs` first, then `self`.
    pub fn compose(&self, rhs: &Pose) -> Pose {
        Pose {
            position: self.position + self.rotation.rotate(rhs.position),
            rotation: self.rotation * rhs.rotation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv_rot = self.rotation.inverse();
        Pose {
            position: -inv_rot.rotate(self.position),
            rotation: inv_rot,
        }
    }

    pub fn transform(&self, p: Vec3) -> Vec3 {
        self.position + self.rotation.rotate(p)
    }
}

impl Default for Pose {
    fn default() -> Self {
        Pose::identity()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn assert_vec_eq(a: Vec3, b: Vec3, tol: f64) {
        assert!((a - b).norm() < tol, "{a:?} != {b:?} (tol {tol})");
    }

    #[test]
    fn exp_zero_is_identity() {
        let r = so3_exp(Vec3::zeros());
        assert_eq!(r.wxyz(), [1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn exp_quarter_turn_about_z() {
        let r = so3_exp(Vec3::new(0.0, 0.0, FRAC_PI_2));
        let [w, x, y, z] = r.wxyz();
        let s = std::f64::consts::SQRT_2 / 2.0;
        assert_abs_diff_eq!(w, s, epsilon = 1e-12);
        assert_abs_diff_eq!(x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(y, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(z, s, epsilon = 1e-12);
        assert_vec_eq(r.rotate(Vec3::x()), Vec3::y(), 1e-12);
    }

    #[test]
    fn exp_matches_subdivided_composition() {
        // Brute-force oracle: exp(phi) must equal the 50-fold composition of
        // exp(phi / 50) since all pieces share the same axis.
        let phi = Vec3::new(0.3, -0.2, 0.1);
        let direct = so3_exp(phi);
        let mut composed = Rotation::identity();
        for _ in 0..50 {
            composed = composed * so3_exp(phi / 50.0);
        }
        assert!(direct.angle_to(&composed) < 1e-9);
    }

    #[test]
    fn log_identity_is_zero() {
        assert_vec_eq(so3_log(Rotation::identity()), Vec3::zeros(), 1e-15);
    }

    #[test]
    fn log_is_left_inverse_of_exp() {
        let cases = [
            Vec3::new(0.1, 0.0, 0.0),
            Vec3::new(-0.5, 0.4, 1.2),
            Vec3::new(0.0, 0.0, 3.0),
            Vec3::new(1e-10, -2e-10, 1e-10),
            Vec3::new(2.2, -1.0, 1.1),
        ];
        for phi in cases {
            assert_vec_eq(so3_log(so3_exp(phi)), phi, 1e-9);
        }
    }

    #[test]
    fn log_half_turn_about_z() {
        let r = so3_exp(Vec3::new(0.0, 0.0, PI));
        assert_vec_eq(so3_log(r), Vec3::new(0.0, 0.0, PI), 1e-9);
    }

    #[test]
    fn skew_reproduces_cross_product() {
        let v = Vec3::new(1.0, 0.0, 0.0);
        let u = Vec3::new(0.0, 1.0, 0.0);
        assert_vec_eq(skew(v) * u, Vec3::new(0.0, 0.0, 1.0), 1e-15);
        let v = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(skew(v).transpose(), -skew(v));
        let v = Vec3::new(0.4, -1.1, 2.2);
        assert_vec_eq(skew(v) * v, Vec3::zeros(), 1e-15);
    }

    #[test]
    fn rotation_matrix_is_special_orthogonal() {
        let r = so3_exp(Vec3::new(0.7, -1.3, 0.4)).to_matrix();
        let err = (r.transpose() * r - Mat3::identity()).norm();
        assert!(err < 1e-9);
        assert_abs_diff_eq!(r.determinant(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn rotate_agrees_with_matrix() {
        let r = so3_exp(Vec3::new(0.3, 0.9, -0.5));
        let v = Vec3::new(-0.2, 1.4, 0.8);
        assert_vec_eq(r.rotate(v), r.to_matrix() * v, 1e-12);
    }

    #[test]
    fn canonical_w_nonnegative() {
        let r = Rotation::from_wxyz(-0.5, 0.5, 0.5, 0.5);
        assert!(r.wxyz()[0] >= 0.0);
        // same physical rotation as the positive representative
        let p = Rotation::from_wxyz(0.5, -0.5, -0.5, -0.5);
        assert!(r.angle_to(&p) < 1e-12);
    }

    #[test]
    fn pose_compose_inverse_roundtrip() {
        let a = Pose::new(Vec3::new(1.0, -2.0, 0.5), so3_exp(Vec3::new(0.2, 0.1, -0.4)));
        let b = Pose::new(Vec3::new(0.3, 0.7, -1.1), so3_exp(Vec3::new(-0.6, 0.0, 0.9)));
        let ab = a.compose(&b);
        let back = a.inverse().compose(&ab);
        assert_vec_eq(back.position, b.position, 1e-12);
        assert!(back.rotation.angle_to(&b.rotation) < 1e-12);
    }

    #[test]
    fn composition_associative() {
        let a = so3_exp(Vec3::new(0.2, 0.0, 1.0));
        let b = so3_exp(Vec3::new(-0.4, 0.8, 0.0));
        let c = so3_exp(Vec3::new(0.0, -0.3, 0.5));
        let lhs = (a * b) * c;
        let rhs = a * (b * c);
        assert!(lhs.angle_to(&rhs) < 1e-9);
    }

    proptest::proptest! {
        #[test]
        fn exp_log_roundtrip(x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0, scale in 0.0f64..1.0) {
            let dir = Vec3::new(x, y, z);
            proptest::prop_assume!(dir.norm() > 1e-3);
            let phi = dir / dir.norm() * scale * (std::f64::consts::PI - 1e-6);
            let back = so3_log(so3_exp(phi));
            proptest::prop_assert!((back - phi).norm() < 1e-9);
        }

        #[test]
        fn rotation_preserves_norm(x in -2.0f64..2.0, y in -2.0f64..2.0, z in -2.0f64..2.0,
                                   vx in -5.0f64..5.0, vy in -5.0f64..5.0, vz in -5.0f64..5.0) {
            let r = so3_exp(Vec3::new(x, y, z));
            let v = Vec3::new(vx, vy, vz);
            proptest::prop_assert!((r.rotate(v).norm() - v.norm()).abs() < 1e-10);
        }
    }
}
