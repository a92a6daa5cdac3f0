//! Base state estimation for torque-controlled quadrupeds.
//!
//! An error-state EKF fuses a high-rate robot IMU, leg-odometry velocities
//! gated by torque-based contact detection, and latency-compensated
//! visual-inertial pose/velocity estimates, while tracking the vertical
//! drift of the visual input against a kinematic ground-height measurement.
//! The crate also ships a deterministic gait/sensor simulator and a
//! relative-pose-error evaluation harness so estimator variants can be
//! compared end to end without hardware.
//!
//! Start with the runnable examples (`cargo run --example full_pipeline`) or
//! the `quadfuse` binary (`simulate`, `estimate`, `evaluate`, `sweep`).

pub mod config;
pub mod contact;
pub mod ekf;
pub mod eval;
pub mod io;
pub mod kinematics;
pub mod math;
pub mod pipeline;
pub mod preint;
pub mod sim;
pub mod streams;

pub use config::RunConfig;
pub use pipeline::Variant;
