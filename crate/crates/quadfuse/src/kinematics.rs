//! Parametric 3-DOF-per-leg quadruped kinematics.
//!
//! Each leg is an abduction joint about the body x axis (HAA) followed by a
//! planar two-link chain (HFE, KFE) in the leg sagittal plane. Provides
//! forward kinematics, the analytic foot Jacobian, the leg-odometry base
//! velocity measurement, the kinematic ground-height measurement, and the
//! closed-form inverse kinematics the simulator uses to pin stance feet.

use crate::math::{skew, Mat3, Rotation, Vec3};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum KinematicsError {
    #[error("foot target at distance {dist:.4} m outside leg workspace [{min:.4}, {max:.4}]")]
    OutOfWorkspace { dist: f64, min: f64, max: f64 },
    #[error("foot Jacobian singular (|det| = {det:.3e})")]
    SingularJacobian { det: f64 },
}

/// Geometry of one leg: hip location in the base frame plus two link lengths.
#[derive(Clone, Copy, Debug)]
pub struct LegModel {
    /// Hip (HAA axis) position in the base frame, m.
    pub hip_offset: Vec3,
    /// Upper leg length, m.
    pub l1: f64,
    /// Lower leg length, m.
    pub l2: f64,
}

impl LegModel {
    pub fn max_reach(&self) -> f64 {
        self.l1 + self.l2
    }

    pub fn min_reach(&self) -> f64 {
        (self.l1 - self.l2).abs()
    }
}

/// Whole-robot model: four legs in FL, FR, HL, HR order plus mass and sensor
/// extrinsics (offsets of the IMU and the VIO sensor from the base origin).
#[derive(Clone, Debug)]
pub struct RobotModel {
    pub legs: [LegModel; 4],
    /// Total mass, kg.
    pub mass: f64,
    pub imu_offset: Vec3,
    pub imu_rotation: Rotation,
    pub vio_offset: Vec3,
    pub vio_rotation: Rotation,
}

impl RobotModel {
    /// Solo12-like default geometry: hips at (±0.196, ±0.105, 0) m, both
    /// links 0.16 m, 2.5 kg. These are configuration values, not constants.
    pub fn solo12_like() -> Self {
        let leg = |x: f64, y: f64| LegModel {
            hip_offset: Vec3::new(x, y, 0.0),
            l1: 0.16,
            l2: 0.16,
        };
        RobotModel {
            legs: [
                leg(0.196, 0.105),
                leg(0.196, -0.105),
                leg(-0.196, 0.105),
                leg(-0.196, -0.105),
            ],
            mass: 2.5,
            imu_offset: Vec3::zeros(),
            imu_rotation: Rotation::identity(),
            vio_offset: Vec3::zeros(),
            vio_rotation: Rotation::identity(),
        }
    }

    /// Static per-leg vertical load with all four feet on the ground, N.
    pub fn static_leg_load(&self, gravity_mag: f64) -> f64 {
        self.mass * gravity_mag / 4.0
    }
}

impl Default for RobotModel {
    fn default() -> Self {
        RobotModel::solo12_like()
    }
}

fn rot_x(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    Mat3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn rot_y(a: f64) -> Mat3 {
    let (s, c) = a.sin_cos();
    Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

/// Foot position in the base frame for joint angles `q = (HAA, HFE, KFE)`.
///
/// Chain: abduction about x at the hip, then the planar two-link; the leg
/// hangs straight down (`hip + (0, 0, -(l1+l2))`) at `q = 0`.
pub fn fk_foot(leg: &LegModel, q: Vec3) -> Vec3 {
    let upper = Vec3::new(0.0, 0.0, -leg.l1);
    let lower = rot_y(q.z) * Vec3::new(0.0, 0.0, -leg.l2);
    leg.hip_offset + rot_x(q.x) * (rot_y(q.y) * (upper + lower))
}

/// Analytic foot Jacobian `∂fk/∂q`, m/rad.
pub fn jac_foot(leg: &LegModel, q: Vec3) -> Mat3 {
    let foot = fk_foot(leg, q);
    let rx = rot_x(q.x);
    let axis_haa = Vec3::x();
    // HFE and KFE both rotate about the abducted y axis.
    let axis_pitch = rx * Vec3::y();
    let knee = leg.hip_offset + rx * (rot_y(q.y) * Vec3::new(0.0, 0.0, -leg.l1));
    let c1 = axis_haa.cross(&(foot - leg.hip_offset));
    let c2 = axis_pitch.cross(&(foot - leg.hip_offset));
    let c3 = axis_pitch.cross(&(foot - knee));
    Mat3::from_columns(&[c1, c2, c3])
}

/// Leg-odometry base velocity for a foot in stationary ground contact:
/// `^B v_WB = -J(q) q̇ - ω × fk(q)`, with `ω` the bias-corrected gyro rate.
pub fn base_velocity_from_leg(leg: &LegModel, q: Vec3, dq: Vec3, omega: Vec3) -> Vec3 {
    -(jac_foot(leg, q) * dq) - skew(omega) * fk_foot(leg, q)
}

/// Kinematic base height above ground: mean over legs of `-[fk(q_i)]_z`.
///
/// Only valid when every leg is in contact; returns `None` otherwise (that is
/// a no-measurement condition, not an error). Assumes a flat base, i.e. foot
/// positions are not rotated into the world frame; see
/// [`ground_height_rotated`] for the roll/pitch-compensated variant.
pub fn ground_height(robot: &RobotModel, q_all: &[Vec3; 4], in_contact: &[bool; 4]) -> Option<f64> {
    if !in_contact.iter().all(|&c| c) {
        return None;
    }
    let sum: f64 = robot
        .legs
        .iter()
        .zip(q_all.iter())
        .map(|(leg, &q)| -fk_foot(leg, q).z)
        .sum();
    Some(sum / 4.0)
}

/// Variant of [`ground_height`] that rotates foot positions by the estimated
/// base orientation before extracting the height. Off by default.
pub fn ground_height_rotated(
    robot: &RobotModel,
    q_all: &[Vec3; 4],
    in_contact: &[bool; 4],
    base_rotation: &Rotation,
) -> Option<f64> {
    if !in_contact.iter().all(|&c| c) {
        return None;
    }
    let sum: f64 = robot
        .legs
        .iter()
        .zip(q_all.iter())
        .map(|(leg, &q)| -base_rotation.rotate(fk_foot(leg, q)).z)
        .sum();
    Some(sum / 4.0)
}

/// Closed-form inverse kinematics: joint angles that place the foot at
/// `target` (base frame). Knee convention `q3 >= 0`.
pub fn ik_foot(leg: &LegModel, target: Vec3) -> Result<Vec3, KinematicsError> {
    let r = target - leg.hip_offset;
    let q1 = r.y.atan2(-r.z);
    // Rotate into the sagittal plane; the y component vanishes by choice of q1.
    let zp = -q1.sin() * r.y + q1.cos() * r.z;
    let d2 = r.x * r.x + zp * zp;
    let d = d2.sqrt();
    let max = leg.max_reach();
    let min = leg.min_reach();
    if d > max - 1e-4 || d < min + 1e-4 {
        return Err(KinematicsError::OutOfWorkspace { dist: d, min, max });
    }
    let cq3 = ((d2 - leg.l1 * leg.l1 - leg.l2 * leg.l2) / (2.0 * leg.l1 * leg.l2)).clamp(-1.0, 1.0);
    let q3 = cq3.acos();
    let u = Vec3::new(-leg.l2 * q3.sin(), 0.0, -leg.l1 - leg.l2 * cq3);
    let mut q2 = r.x.atan2(zp) - u.x.atan2(u.z);
    // wrap to (-pi, pi]
    while q2 > std::f64::consts::PI {
        q2 -= 2.0 * std::f64::consts::PI;
    }
    while q2 <= -std::f64::consts::PI {
        q2 += 2.0 * std::f64::consts::PI;
    }
    Ok(Vec3::new(q1, q2, q3))
}

/// Joint rates producing a desired foot velocity in the base frame: solves
/// `J(q) q̇ = v_foot`.
pub fn joint_rates_for_foot_velocity(
    leg: &LegModel,
    q: Vec3,
    v_foot: Vec3,
) -> Result<Vec3, KinematicsError> {
    let j = jac_foot(leg, q);
    let det = j.determinant();
    if det.abs() < 1e-8 {
        return Err(KinematicsError::SingularJacobian { det });
    }
    Ok(j.try_inverse().expect("checked determinant") * v_foot)
}
