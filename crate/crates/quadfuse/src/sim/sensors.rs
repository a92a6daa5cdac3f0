//! Sensor synthesis from ground truth: robot IMU, joints, VIO, mocap.
//!
//! The VIO oracle replaces a real visual pipeline: optimized frame estimates
//! are the true pose composed with a drift process (random walk in x/y/z and
//! yaw, bounded roll/pitch error) and arrive after a latency draw; the
//! 200 Hz predicted stream is produced by running the real prediction layer
//! over a synthesized VIO-sensor IMU, exactly as a live system would.

use super::gait::{GaitKind, TruthPoint, GRAVITY_MAG};
use super::SimError;
use crate::kinematics::{fk_foot, ik_foot, jac_foot, RobotModel};
use crate::math::{so3_exp, Rotation, Vec3};
use crate::preint::VioPredictor;
use crate::streams::{
    upsample_hold, ImuSample, ImuSource, JointSample, PoseSample, Timestamp, VioEstimate, VioKind,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Sampling rates of the synthesized streams. Sensor periods must land on
/// the 1 kHz truth grid; the camera frame period is rounded to whole ms.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct Rates {
    pub imu_hz: f64,
    pub joints_hz: f64,
    pub vicon_hz: f64,
    pub vio_frame_hz: f64,
    pub vio_gyro_hz: f64,
    pub vio_accel_hz: f64,
}

impl Default for Rates {
    fn default() -> Self {
        Rates {
            imu_hz: 1000.0,
            joints_hz: 1000.0,
            vicon_hz: 1000.0,
            vio_frame_hz: 30.0,
            vio_gyro_hz: 200.0,
            vio_accel_hz: 62.5,
        }
    }
}

fn grid_step_ms(rate_hz: f64) -> Result<i64, SimError> {
    if rate_hz <= 0.0 || rate_hz > 1000.0 {
        return Err(SimError::InvalidRate(format!(
            "rate {rate_hz} Hz outside (0, 1000]"
        )));
    }
    let step = 1000.0 / rate_hz;
    if (step - step.round()).abs() > 1e-9 {
        return Err(SimError::InvalidRate(format!(
            "rate {rate_hz} Hz does not divide the 1 kHz grid"
        )));
    }
    Ok(step.round() as i64)
}

impl Rates {
    pub fn validate(&self) -> Result<(), SimError> {
        grid_step_ms(self.imu_hz)?;
        grid_step_ms(self.joints_hz)?;
        grid_step_ms(self.vicon_hz)?;
        grid_step_ms(self.vio_gyro_hz)?;
        grid_step_ms(self.vio_accel_hz)?;
        if self.vio_frame_hz <= 0.0 || self.vio_frame_hz > 500.0 {
            return Err(SimError::InvalidRate(format!(
                "vio frame rate {} Hz outside (0, 500]",
                self.vio_frame_hz
            )));
        }
        Ok(())
    }

    /// Camera frame period snapped to whole milliseconds.
    pub fn frame_period_ms(&self) -> i64 {
        (1000.0 / self.vio_frame_hz).round().max(1.0) as i64
    }
}

/// White-noise / bias parameters for one IMU.
#[derive(Clone, Copy, Debug)]
pub struct ImuNoiseParams {
    /// White noise densities, (m/s² or rad/s)/√Hz.
    pub accel_noise: f64,
    pub gyro_noise: f64,
    /// Std of the constant turn-on bias.
    pub accel_bias_init: f64,
    pub gyro_bias_init: f64,
    /// Bias random-walk densities.
    pub accel_bias_walk: f64,
    pub gyro_bias_walk: f64,
}

/// All sensor noise, drift, and latency knobs.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorNoiseSpec {
    // robot IMU
    pub robot_accel_noise: f64,
    pub robot_gyro_noise: f64,
    pub robot_accel_bias_init: f64,
    pub robot_gyro_bias_init: f64,
    pub robot_accel_bias_walk: f64,
    pub robot_gyro_bias_walk: f64,
    // VIO sensor IMU
    pub vio_accel_noise: f64,
    pub vio_gyro_noise: f64,
    pub vio_accel_bias_init: f64,
    pub vio_gyro_bias_init: f64,
    // encoders and torque sensing
    pub encoder_angle_noise: f64,
    pub encoder_rate_noise: f64,
    pub torque_noise: f64,
    // VIO frame estimates: white noise, drift walks, latency
    pub vio_pos_white: f64,
    pub vio_vel_white: f64,
    /// Horizontal position drift density, m/√s.
    pub vio_xy_walk: f64,
    /// Vertical drift density while the robot moves (trot/jump), m/√s.
    pub vio_z_walk_active: f64,
    /// Vertical drift density while standing, m/√s.
    pub vio_z_walk_idle: f64,
    /// Constant initial offset of the VIO height, m.
    pub vio_z_offset: f64,
    /// Yaw drift density, rad/√s.
    pub vio_yaw_walk: f64,
    /// Stationary std of the bounded roll/pitch error, rad.
    pub vio_rp_sigma: f64,
    /// Correlation time of the roll/pitch error, s.
    pub vio_rp_tau: f64,
    /// Optimization latency draw (clipped at zero), s.
    pub vio_latency_mean: f64,
    pub vio_latency_std: f64,
    /// Probability that a frame is dropped entirely.
    pub vio_dropout: f64,
    // mocap
    pub vicon_pos_noise: f64,
    pub vicon_rot_noise: f64,
}

impl Default for SensorNoiseSpec {
    fn default() -> Self {
        SensorNoiseSpec {
            robot_accel_noise: 0.02,
            robot_gyro_noise: 0.002,
            robot_accel_bias_init: 0.03,
            robot_gyro_bias_init: 0.002,
            robot_accel_bias_walk: 1e-4,
            robot_gyro_bias_walk: 1e-5,
            vio_accel_noise: 0.05,
            vio_gyro_noise: 0.005,
            vio_accel_bias_init: 0.02,
            vio_gyro_bias_init: 0.001,
            encoder_angle_noise: 2e-4,
            encoder_rate_noise: 2e-3,
            torque_noise: 0.05,
            vio_pos_white: 0.002,
            vio_vel_white: 0.02,
            vio_xy_walk: 0.005,
            vio_z_walk_active: 0.01,
            vio_z_walk_idle: 0.001,
            vio_z_offset: 0.0,
            vio_yaw_walk: 0.0015,
            vio_rp_sigma: 0.002,
            vio_rp_tau: 1.0,
            vio_latency_mean: 0.0058,
            vio_latency_std: 0.0031,
            vio_dropout: 0.0,
            vicon_pos_noise: 0.0,
            vicon_rot_noise: 0.0,
        }
    }
}

impl SensorNoiseSpec {
    /// All noise, drift, latency, and offsets set to zero.
    pub fn noiseless() -> Self {
        SensorNoiseSpec {
            robot_accel_noise: 0.0,
            robot_gyro_noise: 0.0,
            robot_accel_bias_init: 0.0,
            robot_gyro_bias_init: 0.0,
            robot_accel_bias_walk: 0.0,
            robot_gyro_bias_walk: 0.0,
            vio_accel_noise: 0.0,
            vio_gyro_noise: 0.0,
            vio_accel_bias_init: 0.0,
            vio_gyro_bias_init: 0.0,
            encoder_angle_noise: 0.0,
            encoder_rate_noise: 0.0,
            torque_noise: 0.0,
            vio_pos_white: 0.0,
            vio_vel_white: 0.0,
            vio_xy_walk: 0.0,
            vio_z_walk_active: 0.0,
            vio_z_walk_idle: 0.0,
            vio_z_offset: 0.0,
            vio_yaw_walk: 0.0,
            vio_rp_sigma: 0.0,
            vio_rp_tau: 1.0,
            vio_latency_mean: 0.0,
            vio_latency_std: 0.0,
            vio_dropout: 0.0,
            vicon_pos_noise: 0.0,
            vicon_rot_noise: 0.0,
        }
    }

    pub fn robot_imu_params(&self) -> ImuNoiseParams {
        ImuNoiseParams {
            accel_noise: self.robot_accel_noise,
            gyro_noise: self.robot_gyro_noise,
            accel_bias_init: self.robot_accel_bias_init,
            gyro_bias_init: self.robot_gyro_bias_init,
            accel_bias_walk: self.robot_accel_bias_walk,
            gyro_bias_walk: self.robot_gyro_bias_walk,
        }
    }

    pub fn vio_imu_params(&self) -> ImuNoiseParams {
        ImuNoiseParams {
            accel_noise: self.vio_accel_noise,
            gyro_noise: self.vio_gyro_noise,
            accel_bias_init: self.vio_accel_bias_init,
            gyro_bias_init: self.vio_gyro_bias_init,
            accel_bias_walk: 0.0,
            gyro_bias_walk: 0.0,
        }
    }
}

struct GaussSampler {
    rng: ChaCha8Rng,
    normal: Normal<f64>,
}

impl GaussSampler {
    fn new(seed: u64) -> Self {
        GaussSampler {
            rng: ChaCha8Rng::seed_from_u64(seed),
            normal: Normal::new(0.0, 1.0).expect("unit normal"),
        }
    }

    fn scalar(&mut self, sigma: f64) -> f64 {
        if sigma == 0.0 {
            // keep the stream position moving so toggling one noise term does
            // not reshuffle every other draw
            let _ = self.normal.sample(&mut self.rng);
            return 0.0;
        }
        sigma * self.normal.sample(&mut self.rng)
    }

    fn vec3(&mut self, sigma: f64) -> Vec3 {
        Vec3::new(self.scalar(sigma), self.scalar(sigma), self.scalar(sigma))
    }

    fn uniform(&mut self) -> f64 {
        self.rng.gen_range(0.0..1.0)
    }
}

/// Specific-force accelerometer plus gyroscope at `rate_hz`, sampled at the
/// sensor location (`offset` from the base origin; rigid-body transport).
pub fn synthesize_imu(
    truth: &[TruthPoint],
    params: &ImuNoiseParams,
    offset: Vec3,
    rate_hz: f64,
    seed: u64,
    source: ImuSource,
) -> Vec<ImuSample> {
    let step = grid_step_ms(rate_hz).expect("validated rate") as usize;
    let dt = step as f64 * 1e-3;
    let sqrt_rate = (1.0 / dt).sqrt();
    let mut g = GaussSampler::new(seed);
    let mut bias_a = g.vec3(params.accel_bias_init);
    let mut bias_g = g.vec3(params.gyro_bias_init);
    let gravity = Vec3::new(0.0, 0.0, -GRAVITY_MAG);

    let mut out = Vec::with_capacity(truth.len() / step + 1);
    for point in truth.iter().step_by(step) {
        let rot_t = point.rotation.inverse();
        // rigid-body transport to the sensor point
        let w = point.omega_body;
        let a_point = point.acc_world
            + point.rotation.rotate(point.alpha_body.cross(&offset) + w.cross(&w.cross(&offset)));
        let accel =
            rot_t.rotate(a_point - gravity) + bias_a + g.vec3(params.accel_noise * sqrt_rate);
        let gyro = point.omega_body + bias_g + g.vec3(params.gyro_noise * sqrt_rate);
        bias_a += g.vec3(params.accel_bias_walk * dt.sqrt());
        bias_g += g.vec3(params.gyro_bias_walk * dt.sqrt());
        out.push(ImuSample {
            t: point.t,
            accel,
            gyro,
            source,
        });
    }
    out
}

/// Joint encoders, rates, and torques via leg IK against the true foot paths.
///
/// Stance-leg rates satisfy the pinned-foot relation exactly, so the
/// leg-odometry measurement model holds on noiseless data. Torques realize
/// the per-leg vertical force share from the gait generator.
pub fn synthesize_joints(
    truth: &[TruthPoint],
    robot: &RobotModel,
    spec: &SensorNoiseSpec,
    rate_hz: f64,
    seed: u64,
) -> Result<Vec<JointSample>, SimError> {
    let step = grid_step_ms(rate_hz)? as usize;
    let mut g = GaussSampler::new(seed);
    let mut out = Vec::with_capacity(truth.len() / step + 1);
    for point in truth.iter().step_by(step) {
        let rot_t = point.rotation.inverse();
        let mut q = [Vec3::zeros(); 4];
        let mut dq = [Vec3::zeros(); 4];
        let mut tau = [Vec3::zeros(); 4];
        for leg in 0..4 {
            let model = &robot.legs[leg];
            let foot_b = rot_t.rotate(point.foot_world[leg] - point.position);
            let q_true = ik_foot(model, foot_b)?;
            // d/dt of the base-frame foot position
            let v_fb = rot_t.rotate(point.foot_vel_world[leg] - point.vel_world)
                - point.omega_body.cross(&foot_b);
            let jac = jac_foot(model, q_true);
            let dq_true = jac
                .try_inverse()
                .ok_or(crate::kinematics::KinematicsError::SingularJacobian { det: 0.0 })?
                * v_fb;
            let force = Vec3::new(0.0, 0.0, point.foot_force_z[leg]);
            let tau_true = jac.transpose() * force;
            q[leg] = q_true + g.vec3(spec.encoder_angle_noise);
            dq[leg] = dq_true + g.vec3(spec.encoder_rate_noise);
            tau[leg] = tau_true + g.vec3(spec.torque_noise);
            debug_assert!((fk_foot(model, q_true) - foot_b).norm() < 1e-9);
        }
        out.push(JointSample {
            t: point.t,
            q,
            dq,
            tau,
        });
    }
    Ok(out)
}

/// Frame estimates with drift + latency, and the 200 Hz predicted stream
/// anchored to them through the real prediction layer. Output is ordered by
/// availability time.
pub fn synthesize_vio(
    truth: &[TruthPoint],
    spec: &SensorNoiseSpec,
    rates: &Rates,
    seed: u64,
) -> Vec<VioEstimate> {
    let frame_step = rates.frame_period_ms() as usize;
    let mut g = GaussSampler::new(seed ^ 0x51);

    // drift state, stepped at frame cadence
    let frame_dt = frame_step as f64 * 1e-3;
    let sqrt_dt = frame_dt.sqrt();
    let mut walk = Vec3::new(0.0, 0.0, spec.vio_z_offset);
    let mut yaw = 0.0f64;
    let mut rp = Vec3::zeros(); // roll/pitch bounded error, z unused
    let rho = (-frame_dt / spec.vio_rp_tau.max(1e-6)).exp();
    let rp_kick = spec.vio_rp_sigma * (1.0 - rho * rho).sqrt();

    let mut frames: Vec<VioEstimate> = Vec::new();
    for point in truth.iter().step_by(frame_step) {
        let z_walk = match point.gait {
            GaitKind::Stand => spec.vio_z_walk_idle,
            _ => spec.vio_z_walk_active,
        };
        walk.x += g.scalar(spec.vio_xy_walk * sqrt_dt);
        walk.y += g.scalar(spec.vio_xy_walk * sqrt_dt);
        walk.z += g.scalar(z_walk * sqrt_dt);
        yaw += g.scalar(spec.vio_yaw_walk * sqrt_dt);
        rp.x = rho * rp.x + g.scalar(rp_kick);
        rp.y = rho * rp.y + g.scalar(rp_kick);

        let dropped = spec.vio_dropout > 0.0 && g.uniform() < spec.vio_dropout;
        if dropped {
            continue;
        }
        let latency = (spec.vio_latency_mean + g.scalar(spec.vio_latency_std)).max(0.0);
        let position = point.position + walk + g.vec3(spec.vio_pos_white);
        let rotation =
            Rotation::from_yaw(yaw) * point.rotation * so3_exp(Vec3::new(rp.x, rp.y, 0.0));
        frames.push(VioEstimate {
            t_capture: point.t,
            t_available: point.t + (latency * 1e9).round() as i64,
            position,
            rotation,
            vel_world: point.vel_world + g.vec3(spec.vio_vel_white),
            kind: VioKind::Frame,
        });
    }

    // VIO-sensor IMU: gyro at its own rate, accelerometer slower and
    // upsampled to the gyro grid by zero-order hold
    let vio_imu_seed = seed ^ 0x52;
    let gyro_stream = synthesize_imu(
        truth,
        &spec.vio_imu_params(),
        Vec3::zeros(),
        rates.vio_gyro_hz,
        vio_imu_seed,
        ImuSource::VioImu,
    );
    let accel_slow: Vec<(Timestamp, Vec3)> = synthesize_imu(
        truth,
        &spec.vio_imu_params(),
        Vec3::zeros(),
        rates.vio_accel_hz,
        vio_imu_seed ^ 0x53,
        ImuSource::VioImu,
    )
    .into_iter()
    .map(|s| (s.t, s.accel))
    .collect();
    let accel_held = upsample_hold(&accel_slow, rates.vio_gyro_hz);
    let vio_imu: Vec<ImuSample> = gyro_stream
        .iter()
        .zip(accel_held.iter())
        .map(|(gy, ac)| {
            debug_assert_eq!(gy.t, ac.0);
            ImuSample {
                t: gy.t,
                accel: ac.1,
                gyro: gy.gyro,
                source: ImuSource::VioImu,
            }
        })
        .collect();

    // run the prediction layer in availability order, as a live system would
    let mut predictor = VioPredictor::new(Vec3::new(0.0, 0.0, -GRAVITY_MAG));
    let mut events: Vec<(Timestamp, bool, usize)> = Vec::new(); // (avail, is_frame, idx)
    for (i, s) in vio_imu.iter().enumerate() {
        events.push((s.t, false, i));
    }
    for (i, f) in frames.iter().enumerate() {
        events.push((f.t_available, true, i));
    }
    events.sort_by_key(|e| (e.0, e.1));

    let mut out: Vec<VioEstimate> = Vec::with_capacity(frames.len() + vio_imu.len());
    for (_, is_frame, idx) in events {
        if is_frame {
            predictor.on_frame(&frames[idx]);
            out.push(frames[idx]);
        } else if let Some(pred) = predictor.on_imu(vio_imu[idx]) {
            out.push(pred);
        }
    }
    out.sort_by_key(|e| (e.t_available, e.t_capture));
    out
}

/// Mocap poses at `rate_hz` with optional small noise.
pub fn synthesize_vicon(
    truth: &[TruthPoint],
    spec: &SensorNoiseSpec,
    rate_hz: f64,
    seed: u64,
) -> Vec<PoseSample> {
    let step = grid_step_ms(rate_hz).expect("validated rate") as usize;
    let mut g = GaussSampler::new(seed);
    truth
        .iter()
        .step_by(step)
        .map(|point| PoseSample {
            t: point.t,
            position: point.position + g.vec3(spec.vicon_pos_noise),
            rotation: point.rotation * so3_exp(g.vec3(spec.vicon_rot_noise)),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contact::foot_force;
    use crate::kinematics::base_velocity_from_leg;
    use crate::sim::gait::{generate_truth, GaitSpec, SimParams};

    fn robot() -> RobotModel {
        RobotModel::solo12_like()
    }

    fn stand_truth(seconds: f64) -> Vec<TruthPoint> {
        generate_truth(&[GaitSpec::stand(seconds)], &robot(), &SimParams::default()).unwrap()
    }

    #[test]
    fn stationary_imu_reads_minus_gravity() {
        let truth = stand_truth(1.0);
        let imu = synthesize_imu(
            &truth,
            &SensorNoiseSpec::noiseless().robot_imu_params(),
            Vec3::zeros(),
            1000.0,
            1,
            ImuSource::RobotImu,
        );
        for s in &imu {
            assert!((s.accel - Vec3::new(0.0, 0.0, GRAVITY_MAG)).norm() < 1e-12);
            assert!(s.gyro.norm() < 1e-12);
        }
    }

    #[test]
    fn flight_accel_is_zero() {
        let truth = generate_truth(
            &[GaitSpec::stand(0.5), GaitSpec::jump(1.2, 0.0, 0.4, 0.12)],
            &robot(),
            &SimParams::default(),
        )
        .unwrap();
        let imu = synthesize_imu(
            &truth,
            &SensorNoiseSpec::noiseless().robot_imu_params(),
            Vec3::zeros(),
            1000.0,
            1,
            ImuSource::RobotImu,
        );
        let mut checked = 0;
        for (p, s) in truth.iter().zip(&imu) {
            if p.contacts == [false; 4] {
                assert!(s.accel.norm() < 1e-9, "free fall measures zero");
                checked += 1;
            }
        }
        assert!(checked > 50);
    }

    #[test]
    fn double_integration_recovers_truth() {
        // trot, noiseless: trapezoid re-integration of the IMU must track the
        // analytic trajectory to within 1e-4 m over 5 s
        let truth = generate_truth(
            &[GaitSpec::trot(5.0, 0.25, 0.5, 0.02)],
            &robot(),
            &SimParams::default(),
        )
        .unwrap();
        let imu = synthesize_imu(
            &truth,
            &SensorNoiseSpec::noiseless().robot_imu_params(),
            Vec3::zeros(),
            1000.0,
            1,
            ImuSource::RobotImu,
        );
        let g = Vec3::new(0.0, 0.0, -GRAVITY_MAG);
        let mut p = truth[0].position;
        let mut v = truth[0].vel_world;
        let dt = 1e-3;
        for pair in imu.windows(2) {
            // identity attitude: world accel is the mean of specific forces
            let a = (pair[0].accel + pair[1].accel) * 0.5 + g;
            p += v * dt + a * (0.5 * dt * dt);
            v += a * dt;
        }
        let err = (p - truth.last().unwrap().position).norm();
        assert!(err < 1e-4, "drift {err}");
    }

    #[test]
    fn standing_torques_give_quarter_weight_force() {
        let truth = stand_truth(0.5);
        let joints =
            synthesize_joints(&truth, &robot(), &SensorNoiseSpec::noiseless(), 1000.0, 1).unwrap();
        let expect = 2.5 * GRAVITY_MAG / 4.0;
        for s in joints.iter().take(100) {
            for leg in 0..4 {
                let f = foot_force(&robot().legs[leg], s.q[leg], s.tau[leg]).unwrap();
                assert!((f.norm() - expect).abs() < 1e-9, "force {}", f.norm());
            }
        }
    }

    #[test]
    fn leg_odometry_exact_on_noiseless_trot() {
        let truth = generate_truth(
            &[GaitSpec::trot(2.0, 0.3, 0.5, 0.02)],
            &robot(),
            &SimParams::default(),
        )
        .unwrap();
        let joints =
            synthesize_joints(&truth, &robot(), &SensorNoiseSpec::noiseless(), 1000.0, 1).unwrap();
        let mut checked = 0;
        for (p, s) in truth.iter().zip(&joints) {
            let v_body = p.rotation.inverse().rotate(p.vel_world);
            for leg in 0..4 {
                if p.contacts[leg] && p.foot_vel_world[leg].norm() < 1e-12 {
                    let meas =
                        base_velocity_from_leg(&robot().legs[leg], s.q[leg], s.dq[leg], p.omega_body);
                    assert!(
                        (meas - v_body).norm() < 1e-9,
                        "leg {leg} err {}",
                        (meas - v_body).norm()
                    );
                    checked += 1;
                }
            }
        }
        assert!(checked > 1000);
    }

    #[test]
    fn vio_noiseless_zero_latency_frames_equal_truth() {
        let truth = stand_truth(1.0);
        let vio = synthesize_vio(&truth, &SensorNoiseSpec::noiseless(), &Rates::default(), 3);
        let frames: Vec<_> = vio.iter().filter(|v| v.kind == VioKind::Frame).collect();
        assert!(frames.len() >= 29);
        for f in frames {
            assert_eq!(f.t_available, f.t_capture);
            let truth_at = &truth[(f.t_capture.as_nanos() / 1_000_000) as usize];
            assert!((f.position - truth_at.position).norm() < 1e-12);
            assert!((f.vel_world - truth_at.vel_world).norm() < 1e-12);
        }
    }

    #[test]
    fn vio_latency_positive_and_order_by_availability() {
        let truth = stand_truth(2.0);
        let vio = synthesize_vio(&truth, &SensorNoiseSpec::default(), &Rates::default(), 9);
        for w in vio.windows(2) {
            assert!(w[0].t_available <= w[1].t_available);
        }
        for v in &vio {
            assert!(v.t_available >= v.t_capture);
            if v.kind == VioKind::Frame {
                // latency draws are clipped at zero
                assert!(v.t_available.0 - v.t_capture.0 >= 0);
            }
        }
        let predicted = vio.iter().filter(|v| v.kind == VioKind::Predicted).count();
        assert!(predicted > 300, "200 Hz predictions expected, got {predicted}");
    }

    #[test]
    fn vio_prediction_tracks_truth_when_noiseless() {
        let truth = generate_truth(
            &[GaitSpec::trot(2.0, 0.3, 0.5, 0.02)],
            &robot(),
            &SimParams::default(),
        )
        .unwrap();
        let vio = synthesize_vio(&truth, &SensorNoiseSpec::noiseless(), &Rates::default(), 3);
        // first-order integration at 200 Hz leaves sub-mm error over the
        // <= 40 ms horizons between frames
        for v in vio.iter().filter(|v| v.kind == VioKind::Predicted) {
            let idx = (v.t_capture.as_nanos() / 1_000_000) as usize;
            let err = (v.position - truth[idx].position).norm();
            assert!(err < 1e-3, "prediction err {err} at {idx}");
        }
    }

    #[test]
    fn dropout_removes_frames() {
        let truth = stand_truth(2.0);
        let spec = SensorNoiseSpec {
            vio_dropout: 0.5,
            ..SensorNoiseSpec::noiseless()
        };
        let vio = synthesize_vio(&truth, &spec, &Rates::default(), 11);
        let frames = vio.iter().filter(|v| v.kind == VioKind::Frame).count();
        assert!(frames > 5 && frames < 55, "dropout should thin frames: {frames}");
    }

    #[test]
    fn streams_are_seed_deterministic() {
        let truth = stand_truth(1.0);
        let spec = SensorNoiseSpec::default();
        let a = synthesize_imu(
            &truth,
            &spec.robot_imu_params(),
            Vec3::zeros(),
            1000.0,
            7,
            ImuSource::RobotImu,
        );
        let b = synthesize_imu(
            &truth,
            &spec.robot_imu_params(),
            Vec3::zeros(),
            1000.0,
            7,
            ImuSource::RobotImu,
        );
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.accel, y.accel);
            assert_eq!(x.gyro, y.gyro);
        }
        let c = synthesize_imu(
            &truth,
            &spec.robot_imu_params(),
            Vec3::zeros(),
            1000.0,
            8,
            ImuSource::RobotImu,
        );
        assert!(c.iter().zip(&a).any(|(x, y)| x.accel != y.accel));
    }
}
