//! IMU preintegration and the low-latency VIO prediction layer.
//!
//! Between two anchor states the IMU stream is accumulated into a relative
//! motion delta (ΔR, Δv, Δp) with biases frozen at the anchor. The predictor
//! extends the running delta on every IMU sample to emit pose/velocity
//! predictions at IMU rate, and rebuilds the delta from a sample buffer
//! whenever a new optimized frame estimate (which arrives late) replaces the
//! anchor.

use crate::math::{so3_exp, Rotation, Vec3};
use crate::streams::{ImuSample, Timestamp, VioEstimate, VioKind};
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PreintError {
    #[error("integration step dt must be positive (got {0})")]
    NonPositiveDt(f64),
}

/// Accumulated gravity-free relative motion since the anchor.
#[derive(Clone, Copy, Debug)]
pub struct PreintegratedDelta {
    pub d_rot: Rotation,
    pub d_vel: Vec3,
    pub d_pos: Vec3,
    /// Accumulated integration time, s.
    pub duration: f64,
    /// Left-Riemann accumulation of `∫ τ dτ` over the same steps as `d_pos`.
    /// Composing gravity through this moment (instead of the continuous
    /// `Δt²/2`) keeps the prediction exact for motions the delta itself
    /// represents exactly, e.g. hovering.
    pub time_moment: f64,
    /// Accelerometer bias frozen at the anchor.
    pub bias_accel: Vec3,
    /// Gyroscope bias frozen at the anchor.
    pub bias_gyro: Vec3,
}

impl PreintegratedDelta {
    /// Zero-duration delta: identity rotation, zero velocity and position.
    pub fn identity(bias_accel: Vec3, bias_gyro: Vec3) -> Self {
        PreintegratedDelta {
            d_rot: Rotation::identity(),
            d_vel: Vec3::zeros(),
            d_pos: Vec3::zeros(),
            duration: 0.0,
            time_moment: 0.0,
            bias_accel,
            bias_gyro,
        }
    }

    /// One integration step with the bias-corrected sample at the interval
    /// end. The position integrates the pre-update velocity (left Riemann):
    ///
    /// ```text
    /// ΔR' = ΔR · exp(ω dt)
    /// Δv' = Δv + ΔR a dt
    /// Δp' = Δp + Δv dt
    /// ```
    pub fn step(&self, sample: &ImuSample, dt: f64) -> Result<Self, PreintError> {
        if dt <= 0.0 {
            return Err(PreintError::NonPositiveDt(dt));
        }
        let omega = sample.gyro - self.bias_gyro;
        let accel = sample.accel - self.bias_accel;
        Ok(PreintegratedDelta {
            d_pos: self.d_pos + self.d_vel * dt,
            d_vel: self.d_vel + self.d_rot.rotate(accel) * dt,
            d_rot: self.d_rot * so3_exp(omega * dt),
            duration: self.duration + dt,
            time_moment: self.time_moment + self.duration * dt,
            bias_accel: self.bias_accel,
            bias_gyro: self.bias_gyro,
        })
    }
}

/// State the delta is integrated from.
#[derive(Clone, Copy, Debug)]
pub struct AnchorState {
    pub t: Timestamp,
    pub position: Vec3,
    pub rotation: Rotation,
    pub vel_world: Vec3,
    pub bias_accel: Vec3,
    pub bias_gyro: Vec3,
}

/// Compose an anchor state with a gravity-free delta under gravity `g`:
///
/// ```text
/// R = R_a ΔR
/// v = v_a + g Δt + R_a Δv
/// p = p_a + v_a Δt + g M + R_a Δp
/// ```
///
/// where `M` is the delta's [`PreintegratedDelta::time_moment`], the
/// discrete counterpart of `½ Δt²`. Using the same Riemann rule for the
/// gravity double integral as for `Δp` makes the composition consistent:
/// a hovering body predicts exactly zero motion.
pub fn predict_from_anchor(
    anchor: &AnchorState,
    delta: &PreintegratedDelta,
    gravity: Vec3,
) -> (Vec3, Rotation, Vec3) {
    let dt = delta.duration;
    let rotation = anchor.rotation * delta.d_rot;
    let vel = anchor.vel_world + gravity * dt + anchor.rotation.rotate(delta.d_vel);
    let pos = anchor.position
        + anchor.vel_world * dt
        + gravity * delta.time_moment
        + anchor.rotation.rotate(delta.d_pos);
    (pos, rotation, vel)
}

/// Stateful predictor that anchors on optimized frame estimates and emits
/// predictions at the IMU rate of the VIO sensor.
///
/// Single-owner: callers must serialize `on_imu` / `on_frame`.
pub struct VioPredictor {
    gravity: Vec3,
    bias_accel: Vec3,
    bias_gyro: Vec3,
    buffer_horizon: f64,
    anchor: Option<AnchorState>,
    delta: PreintegratedDelta,
    last_integrated: Timestamp,
    buffer: VecDeque<ImuSample>,
    dropped_frames: u64,
}

impl VioPredictor {
    /// `gravity` is the world-frame gravity vector (z up: `(0, 0, -9.81)`).
    /// Biases are frozen per anchor; the buffer keeps 1 s of IMU history for
    /// re-integration, frames older than that are dropped as anomalies.
    pub fn new(gravity: Vec3) -> Self {
        VioPredictor {
            gravity,
            bias_accel: Vec3::zeros(),
            bias_gyro: Vec3::zeros(),
            buffer_horizon: 1.0,
            anchor: None,
            delta: PreintegratedDelta::identity(Vec3::zeros(), Vec3::zeros()),
            last_integrated: Timestamp::ZERO,
            buffer: VecDeque::new(),
            dropped_frames: 0,
        }
    }

    pub fn with_biases(mut self, bias_accel: Vec3, bias_gyro: Vec3) -> Self {
        self.bias_accel = bias_accel;
        self.bias_gyro = bias_gyro;
        self
    }

    pub fn anchor(&self) -> Option<&AnchorState> {
        self.anchor.as_ref()
    }

    /// Frames discarded because they were older than the buffer horizon.
    pub fn dropped_frames(&self) -> u64 {
        self.dropped_frames
    }

    /// Feed one IMU sample (VIO-sensor IMU). Returns a predicted estimate at
    /// the sample time once an anchor exists; `None` during warm-up.
    pub fn on_imu(&mut self, sample: ImuSample) -> Option<VioEstimate> {
        self.buffer.push_back(sample);
        let horizon_ns = (self.buffer_horizon * 1e9) as i64;
        while let Some(front) = self.buffer.front() {
            if sample.t.0 - front.t.0 > horizon_ns {
                self.buffer.pop_front();
            } else {
                break;
            }
        }

        self.anchor.as_ref()?;
        let dt = sample.t.seconds_since(self.last_integrated);
        if dt > 0.0 {
            self.delta = self
                .delta
                .step(&sample, dt)
                .expect("dt checked positive");
            self.last_integrated = sample.t;
        }
        let anchor = self.anchor.as_ref().expect("checked above");
        let (position, rotation, vel_world) = predict_from_anchor(anchor, &self.delta, self.gravity);
        Some(VioEstimate {
            t_capture: sample.t,
            t_available: sample.t,
            position,
            rotation,
            vel_world,
            kind: VioKind::Predicted,
        })
    }

    /// Re-anchor on an optimized frame estimate and reintegrate the buffered
    /// IMU samples captured after it. Returns `false` (and keeps the old
    /// anchor) when the frame predates the buffer horizon.
    pub fn on_frame(&mut self, frame: &VioEstimate) -> bool {
        debug_assert_eq!(frame.kind, VioKind::Frame);
        if let Some(front) = self.buffer.front() {
            if frame.t_capture < front.t && self.anchor.is_some() {
                self.dropped_frames += 1;
                return false;
            }
        }
        self.anchor = Some(AnchorState {
            t: frame.t_capture,
            position: frame.position,
            rotation: frame.rotation,
            vel_world: frame.vel_world,
            bias_accel: self.bias_accel,
            bias_gyro: self.bias_gyro,
        });
        self.delta = PreintegratedDelta::identity(self.bias_accel, self.bias_gyro);
        let mut prev = frame.t_capture;
        for sample in self.buffer.iter() {
            if sample.t <= frame.t_capture {
                continue;
            }
            let dt = sample.t.seconds_since(prev);
            self.delta = self.delta.step(sample, dt).expect("buffer is ordered");
            prev = sample.t;
        }
        self.last_integrated = prev;
        true
    }
}
