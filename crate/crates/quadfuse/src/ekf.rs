//! Error-state extended Kalman filter for the base state.
//!
//! Nominal state: world position, orientation quaternion, body-frame
//! velocity, IMU accelerometer/gyroscope biases, and a scalar height bias
//! that absorbs the vertical drift of the VIO input. The covariance lives on
//! the 16-dimensional error state (δp, δθ, δv, δb_a, δb_ω, δb_δz) with the
//! rotation error as a body-frame (right) perturbation: `q ⊕ δθ = q·exp(δθ)`.
//!
//! Measurements are applied at arrival with no rollback; the capture/apply
//! timestamp mismatch of late measurements is absorbed in measurement noise.

use crate::math::{skew, so3_exp, so3_log, Mat3, Rotation, Vec3};
use crate::streams::{ImuSample, VioEstimate};
use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Error-state dimension.
pub const ERR_DIM: usize = 16;

const IDX_P: usize = 0;
const IDX_TH: usize = 3;
const IDX_V: usize = 6;
const IDX_BA: usize = 9;
const IDX_BW: usize = 12;
const IDX_BDZ: usize = 15;

pub type Covariance = SMatrix<f64, ERR_DIM, ERR_DIM>;

#[derive(Debug, Error, PartialEq)]
pub enum EkfError {
    #[error("propagation dt out of range (0, {max}]: got {got}")]
    DtOutOfRange { got: f64, max: f64 },
}

/// Nominal filter state.
#[derive(Clone, Copy, Debug)]
pub struct EkfState {
    /// Base position in the world frame, m.
    pub position: Vec3,
    /// Base orientation (body to world).
    pub rotation: Rotation,
    /// Base velocity in the body frame, m/s.
    pub vel_body: Vec3,
    /// Accelerometer bias, m/s².
    pub bias_accel: Vec3,
    /// Gyroscope bias, rad/s.
    pub bias_gyro: Vec3,
    /// Height bias between the VIO height and the kinematic ground height, m.
    pub height_bias: f64,
}

impl EkfState {
    pub fn at_rest(position: Vec3, rotation: Rotation) -> Self {
        EkfState {
            position,
            rotation,
            vel_body: Vec3::zeros(),
            bias_accel: Vec3::zeros(),
            bias_gyro: Vec3::zeros(),
            height_bias: 0.0,
        }
    }

    /// Velocity in the world frame.
    pub fn vel_world(&self) -> Vec3 {
        self.rotation.rotate(self.vel_body)
    }
}

/// Process and measurement noise parameters (continuous-time densities for
/// the process terms, standard deviations for the measurements) plus the
/// innovation gate thresholds.
///
/// Gate defaults are the χ² quantiles at 99.7% for the measurement dimensions
/// in use (1, 3, 6, 9).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Accelerometer white noise density, m/s²/√Hz.
    pub sigma_accel: f64,
    /// Gyroscope white noise density, rad/s/√Hz.
    pub sigma_gyro: f64,
    /// Accelerometer bias random walk, m/s²·√s⁻¹? (m/s³/√Hz).
    pub sigma_bias_accel_rw: f64,
    /// Gyroscope bias random walk.
    pub sigma_bias_gyro_rw: f64,
    /// Height-bias random walk, m/√s. The VIO height drift is time-varying,
    /// so the bias must be allowed to move.
    pub sigma_height_bias_rw: f64,
    /// Leg-odometry velocity measurement std, m/s (per axis).
    pub sigma_leg_vel: f64,
    /// VIO position measurement std, m.
    pub sigma_vio_pos: f64,
    /// VIO orientation measurement std per axis (roll, pitch, yaw), rad.
    pub sigma_vio_rot: [f64; 3],
    /// VIO velocity measurement std, m/s.
    pub sigma_vio_vel: f64,
    /// Ground-height bias measurement std, m.
    pub sigma_height: f64,
    /// Mocap position / rotation measurement stds.
    pub sigma_vicon_pos: f64,
    pub sigma_vicon_rot: f64,
    /// Mahalanobis gate χ² thresholds per measurement dimension.
    pub gate_chi2_1: f64,
    pub gate_chi2_3: f64,
    pub gate_chi2_6: f64,
    pub gate_chi2_9: f64,
    /// Freeze the IMU biases this many seconds after start (standing
    /// initialization phase); `None` keeps estimating them forever.
    pub bias_freeze_time: Option<f64>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            sigma_accel: 0.02,
            sigma_gyro: 0.002,
            sigma_bias_accel_rw: 2e-4,
            sigma_bias_gyro_rw: 2e-5,
            sigma_height_bias_rw: 1e-3,
            sigma_leg_vel: 0.03,
            sigma_vio_pos: 0.01,
            sigma_vio_rot: [0.01, 0.01, 0.01],
            sigma_vio_vel: 0.1,
            sigma_height: 0.01,
            sigma_vicon_pos: 0.001,
            sigma_vicon_rot: 0.002,
            gate_chi2_1: 8.807468393511947,
            gate_chi2_3: 13.931422665512084,
            gate_chi2_6: 19.8046523588496,
            gate_chi2_9: 24.974068452775708,
            bias_freeze_time: Some(2.0),
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("ekf.sigma_accel", self.sigma_accel),
            ("ekf.sigma_gyro", self.sigma_gyro),
            ("ekf.sigma_bias_accel_rw", self.sigma_bias_accel_rw),
            ("ekf.sigma_bias_gyro_rw", self.sigma_bias_gyro_rw),
            ("ekf.sigma_height_bias_rw", self.sigma_height_bias_rw),
            ("ekf.sigma_leg_vel", self.sigma_leg_vel),
            ("ekf.sigma_vio_pos", self.sigma_vio_pos),
            ("ekf.sigma_vio_vel", self.sigma_vio_vel),
            ("ekf.sigma_height", self.sigma_height),
            ("ekf.sigma_vicon_pos", self.sigma_vicon_pos),
            ("ekf.sigma_vicon_rot", self.sigma_vicon_rot),
            ("ekf.gate_chi2_1", self.gate_chi2_1),
            ("ekf.gate_chi2_3", self.gate_chi2_3),
            ("ekf.gate_chi2_6", self.gate_chi2_6),
            ("ekf.gate_chi2_9", self.gate_chi2_9),
        ];
        for (key, v) in positive {
            if !(v > 0.0) {
                return Err(format!("{key} must be > 0 (got {v})"));
            }
        }
        for (i, v) in self.sigma_vio_rot.iter().enumerate() {
            if !(*v > 0.0) {
                return Err(format!("ekf.sigma_vio_rot[{i}] must be > 0 (got {v})"));
            }
        }
        Ok(())
    }
}

/// Result of one measurement update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum UpdateOutcome {
    Applied {
        innovation_norm: f64,
    },
    /// Innovation failed the Mahalanobis gate; state untouched.
    Rejected {
        mahalanobis_sq: f64,
    },
}

impl UpdateOutcome {
    pub fn applied(&self) -> bool {
        matches!(self, UpdateOutcome::Applied { .. })
    }

    pub fn innovation_norm(&self) -> f64 {
        match self {
            UpdateOutcome::Applied { innovation_norm } => *innovation_norm,
            UpdateOutcome::Rejected { .. } => 0.0,
        }
    }
}

/// Running counters for logging and analysis.
#[derive(Clone, Copy, Debug, Default)]
pub struct EkfCounters {
    pub propagations: u64,
    pub updates_applied: u64,
    pub updates_rejected: u64,
}

/// The error-state EKF. Single-owner state machine: feed it the merged event
/// stream one measurement at a time; snapshots of `state` may be taken freely
/// between events.
#[derive(Clone, Debug)]
pub struct Ekf {
    pub state: EkfState,
    cov: Covariance,
    cfg: NoiseConfig,
    gravity: Vec3,
    biases_frozen: bool,
    /// Most recent propagation step, used to size per-sample sensor noise.
    last_dt: f64,
    pub counters: EkfCounters,
}

/// Initial error-state standard deviations squared (SI units squared):
/// position/orientation 1e-4, velocity 1e-2, biases 1e-2, height bias 1e-2.
fn initial_covariance() -> Covariance {
    let mut p = Covariance::zeros();
    for i in 0..3 {
        p[(IDX_P + i, IDX_P + i)] = 1e-4;
        p[(IDX_TH + i, IDX_TH + i)] = 1e-4;
        p[(IDX_V + i, IDX_V + i)] = 1e-2;
        p[(IDX_BA + i, IDX_BA + i)] = 1e-2;
        p[(IDX_BW + i, IDX_BW + i)] = 1e-2;
    }
    p[(IDX_BDZ, IDX_BDZ)] = 1e-2;
    p
}

fn set_block(m: &mut Covariance, row: usize, col: usize, b: Mat3) {
    for r in 0..3 {
        for c in 0..3 {
            m[(row + r, col + c)] = b[(r, c)];
        }
    }
}

macro_rules! impl_apply_update {
    ($name:ident, $m:expr, $gate:ident) => {
        fn $name(
            &mut self,
            innovation: SVector<f64, $m>,
            h: SMatrix<f64, $m, ERR_DIM>,
            r: SMatrix<f64, $m, $m>,
        ) -> UpdateOutcome {
            let s = h * self.cov * h.transpose() + r;
            let chol = nalgebra::linalg::Cholesky::new(s)
                .expect("innovation covariance must be positive definite");
            let m2 = innovation.dot(&chol.solve(&innovation));
            if m2 > self.cfg.$gate {
                self.counters.updates_rejected += 1;
                return UpdateOutcome::Rejected { mahalanobis_sq: m2 };
            }
            let k = self.cov * h.transpose() * chol.inverse();
            let delta = k * innovation;
            // Joseph form keeps the covariance symmetric PSD.
            let ikh = Covariance::identity() - k * h;
            self.cov = ikh * self.cov * ikh.transpose() + k * r * k.transpose();
            self.resymmetrize();
            self.inject(delta);
            self.counters.updates_applied += 1;
            UpdateOutcome::Applied {
                innovation_norm: innovation.norm(),
            }
        }
    };
}

impl Ekf {
    pub fn new(initial: EkfState, cfg: NoiseConfig, gravity: Vec3) -> Self {
        Ekf {
            state: initial,
            cov: initial_covariance(),
            cfg,
            gravity,
            biases_frozen: false,
            last_dt: 1e-3,
            counters: EkfCounters::default(),
        }
    }

    pub fn covariance(&self) -> &Covariance {
        &self.cov
    }

    pub fn config(&self) -> &NoiseConfig {
        &self.cfg
    }

    pub fn biases_frozen(&self) -> bool {
        self.biases_frozen
    }

    /// Stop estimating the IMU biases: collapse their uncertainty and stop
    /// injecting process noise for them. Used after the standing
    /// initialization window; the height bias stays active.
    pub fn freeze_imu_biases(&mut self) {
        self.biases_frozen = true;
        for i in IDX_BA..IDX_BW + 3 {
            for j in 0..ERR_DIM {
                self.cov[(i, j)] = 0.0;
                self.cov[(j, i)] = 0.0;
            }
            self.cov[(i, i)] = 1e-12;
        }
    }

    fn resymmetrize(&mut self) {
        self.cov = (self.cov + self.cov.transpose()) * 0.5;
    }

    fn inject(&mut self, delta: SVector<f64, ERR_DIM>) {
        let dp = Vec3::new(delta[IDX_P], delta[IDX_P + 1], delta[IDX_P + 2]);
        let dth = Vec3::new(delta[IDX_TH], delta[IDX_TH + 1], delta[IDX_TH + 2]);
        let dv = Vec3::new(delta[IDX_V], delta[IDX_V + 1], delta[IDX_V + 2]);
        self.state.position += dp;
        self.state.rotation = self.state.rotation * so3_exp(dth);
        self.state.vel_body += dv;
        if !self.biases_frozen {
            self.state.bias_accel += Vec3::new(delta[IDX_BA], delta[IDX_BA + 1], delta[IDX_BA + 2]);
            self.state.bias_gyro += Vec3::new(delta[IDX_BW], delta[IDX_BW + 1], delta[IDX_BW + 2]);
        }
        self.state.height_bias += delta[IDX_BDZ];
    }

    /// Strapdown propagation with one robot-IMU sample over `dt` seconds.
    ///
    /// Nominal update:
    /// ```text
    /// q ← q·exp((gyro − b_ω) dt)
    /// v_w ← R v_body + (R (accel − b_a) + g) dt
    /// p ← p + v_w dt
    /// v_body ← R_newᵀ v_w
    /// ```
    /// followed by the first-order error-state covariance propagation.
    pub fn propagate(&mut self, imu: &ImuSample, dt: f64) -> Result<(), EkfError> {
        const MAX_DT: f64 = 0.010;
        if !(dt > 0.0 && dt <= MAX_DT) {
            return Err(EkfError::DtOutOfRange { got: dt, max: MAX_DT });
        }
        let omega = imu.gyro - self.state.bias_gyro;
        let accel = imu.accel - self.state.bias_accel;
        let rot = self.state.rotation;
        let rot_mat = rot.to_matrix();
        let v_body_old = self.state.vel_body;

        let rot_new = rot * so3_exp(omega * dt);
        let v_world = rot_mat * v_body_old + (rot_mat * accel + self.gravity) * dt;
        self.state.position += v_world * dt;
        self.state.vel_body = rot_new.to_matrix().transpose() * v_world;
        self.state.rotation = rot_new;

        // error-state transition F = I + A dt
        let eye = Mat3::identity();
        let mut f = Covariance::identity();
        set_block(&mut f, IDX_P, IDX_TH, -(rot_mat * skew(v_body_old)) * dt);
        set_block(&mut f, IDX_P, IDX_V, rot_mat * dt);
        set_block(&mut f, IDX_TH, IDX_TH, eye - skew(omega) * dt);
        set_block(&mut f, IDX_TH, IDX_BW, -eye * dt);
        set_block(&mut f, IDX_V, IDX_TH, skew(rot_mat.transpose() * self.gravity) * dt);
        set_block(&mut f, IDX_V, IDX_V, eye - skew(omega) * dt);
        set_block(&mut f, IDX_V, IDX_BA, -eye * dt);
        set_block(&mut f, IDX_V, IDX_BW, -skew(v_body_old) * dt);

        // process noise (white IMU noise plus bias random walks)
        let sg2 = self.cfg.sigma_gyro * self.cfg.sigma_gyro * dt;
        let sa2 = self.cfg.sigma_accel * self.cfg.sigma_accel * dt;
        let mut q = Covariance::zeros();
        set_block(&mut q, IDX_TH, IDX_TH, eye * sg2);
        let sv = skew(v_body_old);
        set_block(&mut q, IDX_V, IDX_V, eye * sa2 + sv * sv.transpose() * sg2);
        // gyro noise enters both δθ and δv
        set_block(&mut q, IDX_TH, IDX_V, sv.transpose() * sg2);
        set_block(&mut q, IDX_V, IDX_TH, sv * sg2);
        if !self.biases_frozen {
            let sba2 = self.cfg.sigma_bias_accel_rw.powi(2) * dt;
            let sbw2 = self.cfg.sigma_bias_gyro_rw.powi(2) * dt;
            set_block(&mut q, IDX_BA, IDX_BA, eye * sba2);
            set_block(&mut q, IDX_BW, IDX_BW, eye * sbw2);
        }
        q[(IDX_BDZ, IDX_BDZ)] = self.cfg.sigma_height_bias_rw.powi(2) * dt;

        self.cov = f * self.cov * f.transpose() + q;
        self.resymmetrize();
        self.last_dt = dt;
        self.counters.propagations += 1;
        Ok(())
    }

    impl_apply_update!(apply_update_1, 1, gate_chi2_1);
    impl_apply_update!(apply_update_3, 3, gate_chi2_3);
    impl_apply_update!(apply_update_6, 6, gate_chi2_6);
    impl_apply_update!(apply_update_9, 9, gate_chi2_9);

    /// Leg-odometry velocity update for one eligible leg. The measurement is
    /// `−J q̇ − (ω_m − b̂_ω) × fk(q)`, which observes the body velocity and,
    /// through the cross product, the gyro bias error:
    ///
    /// ```text
    /// z = v_body + skew(fk) δb_ω + skew(fk) n_gyro + η
    /// ```
    ///
    /// `foot_pos_body` is `fk(q)`. The gyro sample's white noise propagates
    /// into the measurement the same way and lands in R; all legs measured in
    /// one step share that gyro sample, so the term is scaled by
    /// `shared_legs` instead of being counted once per leg.
    pub fn update_leg_velocity(
        &mut self,
        measured_vel_body: Vec3,
        foot_pos_body: Vec3,
        shared_legs: usize,
    ) -> UpdateOutcome {
        let innovation = measured_vel_body - self.state.vel_body;
        let fx = skew(foot_pos_body);
        let mut h = SMatrix::<f64, 3, ERR_DIM>::zeros();
        for r in 0..3 {
            h[(r, IDX_V + r)] = 1.0;
            for c in 0..3 {
                h[(r, IDX_BW + c)] = fx[(r, c)];
            }
        }
        let var = self.cfg.sigma_leg_vel * self.cfg.sigma_leg_vel;
        let omega_var = self.cfg.sigma_gyro * self.cfg.sigma_gyro / self.last_dt.max(1e-6);
        let r_gyro = fx * fx.transpose() * (omega_var * shared_legs.max(1) as f64);
        let mut r_full = SMatrix::<f64, 3, 3>::identity() * var;
        r_full += r_gyro;
        self.apply_update_3(
            SVector::from([innovation.x, innovation.y, innovation.z]),
            h,
            r_full,
        )
    }

    /// VIO pose and velocity update (9-dimensional).
    ///
    /// The VIO measures `p + (0, 0, b_δz)` for position, the full SO(3)
    /// orientation (residual via log of the relative rotation), and the
    /// world-frame velocity.
    pub fn update_vio(&mut self, vio: &VioEstimate) -> UpdateOutcome {
        let rot_mat = self.state.rotation.to_matrix();
        let predicted_pos =
            self.state.position + Vec3::new(0.0, 0.0, self.state.height_bias);
        let y_p = vio.position - predicted_pos;
        let y_th = so3_log(self.state.rotation.inverse() * vio.rotation);
        let y_v = vio.vel_world - rot_mat * self.state.vel_body;

        let mut h = SMatrix::<f64, 9, ERR_DIM>::zeros();
        for i in 0..3 {
            h[(i, IDX_P + i)] = 1.0; // position block
            h[(3 + i, IDX_TH + i)] = 1.0; // rotation block
        }
        h[(2, IDX_BDZ)] = 1.0; // z couples to the height bias
        let vel_th = -(rot_mat * skew(self.state.vel_body));
        for r in 0..3 {
            for c in 0..3 {
                h[(6 + r, IDX_TH + c)] = vel_th[(r, c)];
                h[(6 + r, IDX_V + c)] = rot_mat[(r, c)];
            }
        }

        let pv = self.cfg.sigma_vio_pos.powi(2);
        let vv = self.cfg.sigma_vio_vel.powi(2);
        let rv = self.cfg.sigma_vio_rot;
        let noise = SVector::<f64, 9>::from([
            pv,
            pv,
            pv,
            rv[0] * rv[0],
            rv[1] * rv[1],
            rv[2] * rv[2],
            vv,
            vv,
            vv,
        ]);
        let y = SVector::<f64, 9>::from([
            y_p.x, y_p.y, y_p.z, y_th.x, y_th.y, y_th.z, y_v.x, y_v.y, y_v.z,
        ]);
        self.apply_update_9(y, h, SMatrix::from_diagonal(&noise))
    }

    /// Scalar update of the height bias from the kinematic ground-height
    /// measurement: `Δz = [p_VIO]_z − z_kin` observes `b_δz` directly.
    pub fn update_height_bias(&mut self, delta_z: f64) -> UpdateOutcome {
        let innovation = delta_z - self.state.height_bias;
        let mut h = SMatrix::<f64, 1, ERR_DIM>::zeros();
        h[(0, IDX_BDZ)] = 1.0;
        self.apply_update_1(
            SVector::from([innovation]),
            h,
            SMatrix::from_diagonal(&SVector::from([self.cfg.sigma_height * self.cfg.sigma_height])),
        )
    }

    /// Mocap pose update: like the VIO update but without the height-bias
    /// coupling and without a velocity residual.
    pub fn update_vicon(&mut self, position: Vec3, rotation: Rotation) -> UpdateOutcome {
        let y_p = position - self.state.position;
        let y_th = so3_log(self.state.rotation.inverse() * rotation);
        let mut h = SMatrix::<f64, 6, ERR_DIM>::zeros();
        for i in 0..3 {
            h[(i, IDX_P + i)] = 1.0;
            h[(3 + i, IDX_TH + i)] = 1.0;
        }
        let pv = self.cfg.sigma_vicon_pos.powi(2);
        let rv = self.cfg.sigma_vicon_rot.powi(2);
        self.apply_update_6(
            SVector::from([y_p.x, y_p.y, y_p.z, y_th.x, y_th.y, y_th.z]),
            h,
            SMatrix::from_diagonal(&SVector::from([pv, pv, pv, rv, rv, rv])),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::streams::{ImuSource, Timestamp, VioKind};

    const GRAVITY: Vec3 = Vec3::new(0.0, 0.0, -9.81);
    const TEST_FOOT: Vec3 = Vec3::new(0.196, 0.105, -0.24);

    fn imu(accel: Vec3, gyro: Vec3) -> ImuSample {
        ImuSample {
            t: Timestamp::ZERO,
            accel,
            gyro,
            source: ImuSource::RobotImu,
        }
    }

    fn rest_filter() -> Ekf {
        Ekf::new(
            EkfState::at_rest(Vec3::new(0.0, 0.0, 0.25), Rotation::identity()),
            NoiseConfig::default(),
            GRAVITY,
        )
    }

    fn min_eig_ok(cov: &Covariance) -> bool {
        // PSD within tolerance <=> cholesky of (P + eps I) succeeds
        let shifted = cov + Covariance::identity() * 1e-10;
        nalgebra::linalg::Cholesky::new(shifted).is_some()
    }

    #[test]
    fn propagate_rejects_bad_dt() {
        let mut f = rest_filter();
        let s = imu(-GRAVITY, Vec3::zeros());
        assert!(f.propagate(&s, 0.0).is_err());
        assert!(f.propagate(&s, 0.02).is_err());
        assert!(f.propagate(&s, 0.001).is_ok());
    }

    #[test]
    fn stationary_equilibrium_keeps_state_grows_cov() {
        let mut f = rest_filter();
        f.state.bias_accel = Vec3::new(0.05, -0.02, 0.01);
        f.state.bias_gyro = Vec3::new(0.001, 0.002, -0.001);
        let accel = f.state.rotation.inverse().rotate(-GRAVITY) + f.state.bias_accel;
        let gyro = f.state.bias_gyro;
        let p0 = f.state.position;
        let trace0 = f.covariance().trace();
        for _ in 0..1000 {
            f.propagate(&imu(accel, gyro), 1e-3).unwrap();
        }
        assert!((f.state.position - p0).norm() < 1e-9);
        assert!(f.state.vel_body.norm() < 1e-9);
        assert!(f.covariance().trace() > trace0);
        assert!(min_eig_ok(f.covariance()));
    }

    #[test]
    fn free_fall_ballistic() {
        let mut f = rest_filter();
        let z0 = f.state.position.z;
        for _ in 0..400 {
            f.propagate(&imu(Vec3::zeros(), Vec3::zeros()), 1e-3).unwrap();
        }
        let dz = f.state.position.z - z0;
        // discrete integrator vs closed form -g t^2 / 2 = -0.78480
        assert!((dz - (-0.785)).abs() < 3e-3, "dz = {dz}");
    }

    #[test]
    fn covariance_trace_strictly_increases_without_updates() {
        let mut f = rest_filter();
        let accel = -GRAVITY;
        let mut prev = f.covariance().trace();
        for _ in 0..100 {
            f.propagate(&imu(accel, Vec3::zeros()), 1e-3).unwrap();
            let tr = f.covariance().trace();
            assert!(tr > prev);
            prev = tr;
        }
    }

    #[test]
    fn zero_innovation_leg_update_contracts() {
        let mut f = rest_filter();
        let diag_before: Vec<f64> = (0..ERR_DIM).map(|i| f.covariance()[(i, i)]).collect();
        let state_before = f.state;
        let out = f.update_leg_velocity(f.state.vel_body, TEST_FOOT, 4);
        assert!(out.applied());
        assert!((f.state.position - state_before.position).norm() < 1e-15);
        assert!(f.state.rotation.angle_to(&state_before.rotation) < 1e-15);
        assert!((f.state.vel_body - state_before.vel_body).norm() < 1e-15);
        for i in 0..ERR_DIM {
            assert!(f.covariance()[(i, i)] <= diag_before[i] + 1e-15);
        }
        assert!(min_eig_ok(f.covariance()));
    }

    #[test]
    fn leg_update_rejects_10_sigma() {
        let mut f = rest_filter();
        // run a few zero-innovation updates to shrink S toward R
        for _ in 0..50 {
            f.update_leg_velocity(f.state.vel_body, TEST_FOOT, 4);
        }
        let sigma = f.config().sigma_leg_vel;
        let out = f.update_leg_velocity(f.state.vel_body + Vec3::new(10.0 * sigma, 0.0, 0.0), TEST_FOOT, 4);
        assert!(matches!(out, UpdateOutcome::Rejected { .. }));
        assert!(f.counters.updates_rejected >= 1);
    }

    fn vio_from_state(state: &EkfState) -> VioEstimate {
        VioEstimate {
            t_capture: Timestamp::ZERO,
            t_available: Timestamp::ZERO,
            position: state.position + Vec3::new(0.0, 0.0, state.height_bias),
            rotation: state.rotation,
            vel_world: state.vel_world(),
            kind: VioKind::Predicted,
        }
    }

    #[test]
    fn zero_innovation_vio_update_keeps_state() {
        let mut f = rest_filter();
        f.state.vel_body = Vec3::new(0.3, -0.1, 0.05);
        f.state.rotation = so3_exp(Vec3::new(0.05, -0.02, 0.8));
        let vio = vio_from_state(&f.state);
        let before = f.state;
        let diag_before: Vec<f64> = (0..ERR_DIM).map(|i| f.covariance()[(i, i)]).collect();
        let out = f.update_vio(&vio);
        assert!(out.applied());
        assert!((f.state.position - before.position).norm() < 1e-12);
        assert!((f.state.vel_body - before.vel_body).norm() < 1e-12);
        assert!(f.state.rotation.angle_to(&before.rotation) < 1e-12);
        for i in 0..ERR_DIM {
            assert!(f.covariance()[(i, i)] <= diag_before[i] + 1e-15);
        }
    }

    #[test]
    fn vio_z_offset_flows_into_height_bias() {
        // With ground-height updates active, a constant VIO z offset must be
        // absorbed by b_dz while the position stays put. Scalar-observer
        // style check over a short standing window.
        let mut f = rest_filter();
        let offset = 0.03;
        let hover = -GRAVITY;
        for k in 0..2000 {
            f.propagate(&imu(hover, Vec3::zeros()), 1e-3).unwrap();
            let mut vio = vio_from_state(&f.state);
            vio.position.z = 0.25 + offset; // drifted VIO height
            vio.position.x = 0.0;
            vio.position.y = 0.0;
            f.update_vio(&vio);
            // ground-height measurement: vio z minus true kinematic height
            f.update_height_bias(0.25 + offset - 0.25);
            if k == 999 {
                // converged within ~1 s
                assert!((f.state.height_bias - offset).abs() < 0.006);
            }
        }
        assert!((f.state.height_bias - offset).abs() < 0.003);
        assert!((f.state.position.z - 0.25).abs() < 0.01);
    }

    #[test]
    fn height_bias_scalar_convergence_monotone() {
        let mut f = rest_filter();
        let target = 0.05;
        let mut prev = f.state.height_bias;
        for _ in 0..200 {
            f.update_height_bias(target);
            assert!(f.state.height_bias >= prev - 1e-12);
            assert!(f.state.height_bias <= target + 1e-9);
            prev = f.state.height_bias;
        }
        assert!((f.state.height_bias - target).abs() < 1e-3);
    }

    #[test]
    fn height_bias_identity_when_equal() {
        let mut f = rest_filter();
        f.state.height_bias = 0.04;
        let before = f.state.height_bias;
        f.update_height_bias(0.04);
        assert!((f.state.height_bias - before).abs() < 1e-15);
    }

    #[test]
    fn yaw_residual_wraps_across_pi() {
        let cfg = NoiseConfig {
            sigma_vio_rot: [0.1, 0.1, 0.1],
            ..NoiseConfig::default()
        };
        let mut f = Ekf::new(
            EkfState::at_rest(Vec3::new(0.0, 0.0, 0.25), Rotation::identity()),
            cfg,
            GRAVITY,
        );
        f.state.rotation = so3_exp(Vec3::new(0.0, 0.0, 3.1));
        let vio = VioEstimate {
            rotation: so3_exp(Vec3::new(0.0, 0.0, -3.1)),
            ..vio_from_state(&f.state)
        };
        // relative yaw is "wrap" small (2*pi - 6.2 = 0.083 rad), not -6.2
        let y = so3_log(f.state.rotation.inverse() * vio.rotation);
        assert!(y.norm() < 0.1, "wrapped residual should be small: {y:?}");
        let out = f.update_vio(&vio);
        assert!(out.applied(), "wrapped 0.083 rad residual passes the gate");
    }

    #[test]
    fn vicon_update_converges_to_truth() {
        // offset within the gate given the initial position variance 1e-4
        let mut f = rest_filter();
        f.state.position += Vec3::new(0.01, -0.008, 0.005);
        let truth_pos = Vec3::new(0.0, 0.0, 0.25);
        let truth_rot = Rotation::identity();
        for _ in 0..200 {
            f.update_vicon(truth_pos, truth_rot);
        }
        assert!((f.state.position - truth_pos).norm() < 1e-3);
        assert!(f.state.rotation.angle_to(&truth_rot) < 1e-3);
    }

    #[test]
    fn vicon_identity_case() {
        let mut f = rest_filter();
        let before = f.state;
        let out = f.update_vicon(before.position, before.rotation);
        assert!(out.applied());
        assert!((f.state.position - before.position).norm() < 1e-15);
    }

    #[test]
    fn frozen_biases_stay_put() {
        let mut f = rest_filter();
        f.freeze_imu_biases();
        let ba = f.state.bias_accel;
        for _ in 0..100 {
            f.propagate(&imu(-GRAVITY + Vec3::new(0.2, 0.0, 0.0), Vec3::zeros()), 1e-3)
                .unwrap();
            f.update_leg_velocity(Vec3::zeros(), TEST_FOOT, 4);
        }
        assert_eq!(f.state.bias_accel, ba);
        assert!(f.covariance()[(IDX_BA, IDX_BA)] < 1e-10);
    }

    #[test]
    fn covariance_stays_symmetric_psd_under_mixed_load() {
        let mut f = rest_filter();
        let hover = -GRAVITY;
        for k in 0..2000 {
            f.propagate(&imu(hover, Vec3::new(0.001, 0.0, -0.002)), 1e-3).unwrap();
            if k % 7 == 0 {
                f.update_leg_velocity(f.state.vel_body + Vec3::new(0.01, -0.02, 0.005), TEST_FOOT, 4);
            }
            if k % 13 == 0 {
                let mut vio = vio_from_state(&f.state);
                vio.position += Vec3::new(0.005, 0.0, -0.01);
                f.update_vio(&vio);
            }
            if k % 31 == 0 {
                f.update_height_bias(f.state.height_bias + 0.004);
            }
            let asym = (f.covariance() - f.covariance().transpose()).abs().max();
            assert!(asym < 1e-12);
            assert!(min_eig_ok(f.covariance()));
        }
    }
}
