//! Deterministic quadruped gait simulation and multi-rate sensor synthesis.
//!
//! The gait generator produces a C¹ base trajectory plus per-leg foot paths,
//! contact schedule, and vertical force shares on a 1 kHz grid. The sensor
//! synthesizers turn that ground truth into robot-IMU, joint, VIO, and mocap
//! streams with configurable noise, drift, and latency. Same seed, same
//! bytes: generation is pure given (scenario, seed).

pub mod gait;
pub mod sensors;

pub use gait::{generate_truth, GaitKind, GaitSpec, SimParams, TruthPoint, GRAVITY_MAG};
pub use sensors::{
    synthesize_imu, synthesize_joints, synthesize_vicon, synthesize_vio, ImuNoiseParams, Rates,
    SensorNoiseSpec,
};

use crate::kinematics::RobotModel;
use crate::math::Vec3;
use crate::streams::{ImuSample, JointSample, PoseSample, TruthSample, VioEstimate};
use thiserror::Error;

/// World-frame gravity vector (z axis points upwards).
pub fn gravity() -> Vec3 {
    Vec3::new(0.0, 0.0, -GRAVITY_MAG)
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("gait segment {index}: {msg}")]
    InvalidGait { index: usize, msg: String },
    #[error("leg {leg} out of workspace at t = {t:.3} s (reach {dist:.4} m, limits [{min:.4}, {max:.4}])")]
    Workspace {
        leg: usize,
        t: f64,
        dist: f64,
        min: f64,
        max: f64,
    },
    #[error("invalid rate: {0}")]
    InvalidRate(String),
    #[error(transparent)]
    Kinematics(#[from] crate::kinematics::KinematicsError),
}

/// Everything one simulated run produces.
pub struct SimOutput {
    pub truth_points: Vec<TruthPoint>,
    pub truth: Vec<TruthSample>,
    pub imu: Vec<ImuSample>,
    pub joints: Vec<JointSample>,
    pub vio: Vec<VioEstimate>,
    pub vicon: Vec<PoseSample>,
}

/// Run the full synthesis pipeline for one seed.
pub fn simulate(
    gaits: &[GaitSpec],
    robot: &RobotModel,
    params: &SimParams,
    noise: &SensorNoiseSpec,
    rates: &Rates,
    seed: u64,
) -> Result<SimOutput, SimError> {
    rates.validate()?;
    let truth_points = generate_truth(gaits, robot, params)?;
    let truth: Vec<TruthSample> = truth_points
        .iter()
        .map(|p| TruthSample {
            t: p.t,
            position: p.position,
            rotation: p.rotation,
            vel_world: p.vel_world,
        })
        .collect();
    let imu = synthesize_imu(
        &truth_points,
        &noise.robot_imu_params(),
        robot.imu_offset,
        rates.imu_hz,
        seed ^ 0x1001,
        crate::streams::ImuSource::RobotImu,
    );
    let joints = synthesize_joints(&truth_points, robot, noise, rates.joints_hz, seed ^ 0x2002)?;
    let vio = synthesize_vio(&truth_points, noise, rates, seed ^ 0x3003);
    let vicon = synthesize_vicon(&truth_points, noise, rates.vicon_hz, seed ^ 0x4004);
    Ok(SimOutput {
        truth_points,
        truth,
        imu,
        joints,
        vio,
        vicon,
    })
}
