//! Ground-truth gait generation: standing, trotting, jumping, and switching.
//!
//! Base orientation stays flat (identity) and the yaw is constant; vertical
//! motion and horizontal drift are closed-form per phase so positions,
//! velocities, and accelerations are all analytic. Stance feet are pinned to
//! the ground by construction (the leg-velocity measurement model is exact on
//! noiseless data); swing and flight feet follow smooth splines.

use super::SimError;
use crate::kinematics::RobotModel;
use crate::math::{Rotation, Vec3};
use crate::streams::Timestamp;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const GRAVITY_MAG: f64 = 9.81;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GaitKind {
    Stand,
    Trot,
    Jump,
}

/// One gait segment of a scenario.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct GaitSpec {
    pub kind: GaitKind,
    /// Segment duration, s. Trot and jump segments must hold a whole number
    /// of cycles so segments join with continuous velocity.
    pub duration: f64,
    /// Commanded horizontal velocity, m/s.
    pub vx: f64,
    pub vy: f64,
    /// Gait cycle period, s (trot and jump).
    pub period: f64,
    /// Vertical oscillation amplitude for trot, m (base bobs twice per cycle).
    pub amplitude: f64,
    /// Peak-to-trough base height change for jump, m.
    pub jump_height: f64,
    /// Fraction of the cycle spent airborne. `None` solves it from
    /// `jump_height`; when set, the realized height follows from it instead.
    pub flight_fraction: Option<f64>,
}

impl Default for GaitSpec {
    fn default() -> Self {
        GaitSpec {
            kind: GaitKind::Stand,
            duration: 5.0,
            vx: 0.0,
            vy: 0.0,
            period: 0.5,
            amplitude: 0.02,
            jump_height: 0.12,
            flight_fraction: None,
        }
    }
}

impl GaitSpec {
    pub fn stand(duration: f64) -> Self {
        GaitSpec {
            kind: GaitKind::Stand,
            duration,
            ..Default::default()
        }
    }

    pub fn trot(duration: f64, vx: f64, period: f64, amplitude: f64) -> Self {
        GaitSpec {
            kind: GaitKind::Trot,
            duration,
            vx,
            period,
            amplitude,
            ..Default::default()
        }
    }

    pub fn jump(duration: f64, vx: f64, period: f64, jump_height: f64) -> Self {
        GaitSpec {
            kind: GaitKind::Jump,
            duration,
            vx,
            period,
            jump_height,
            ..Default::default()
        }
    }
}

/// Simulator geometry and disturbance knobs that are part of the scenario
/// (physical effects, as opposed to sensor noise).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SimParams {
    /// Nominal base height above ground, m.
    pub stance_height: f64,
    /// Trot swing foot apex above ground, m.
    pub swing_height: f64,
    /// Extra foot lift relative to the ballistic base rise in flight, m.
    pub tuck_extra: f64,
    /// Foot slip speed during the first `slip_duration` of each stance, m/s
    /// (opposite the commanded direction). 0 disables slip.
    pub slip_vel: f64,
    pub slip_duration: f64,
    /// Inject takeoff force/velocity spikes that fool the contact classifier
    /// during early flight.
    pub spike_enabled: bool,
    /// Apparent force norm during the spike window, N.
    pub spike_force: f64,
    /// Upward foot velocity during the spike window, m/s.
    pub spike_beta: f64,
    /// Spike window length from flight start, s.
    pub spike_duration: f64,
    /// Landing force ringing amplitude (relative); 0 disables. Values above 1
    /// make the force bottom out at zero, which chatters the contact trigger.
    pub ring_amplitude: f64,
    /// Ringing frequency, Hz.
    pub ring_freq: f64,
    /// Ringing decay time constant, s.
    pub ring_tau: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            stance_height: 0.24,
            swing_height: 0.04,
            tuck_extra: 0.03,
            slip_vel: 0.0,
            slip_duration: 0.02,
            spike_enabled: false,
            spike_force: 8.0,
            spike_beta: 0.10,
            spike_duration: 0.010,
            ring_amplitude: 0.0,
            ring_freq: 100.0,
            ring_tau: 0.02,
        }
    }
}

/// One 1 kHz sample of the full simulated state.
#[derive(Clone, Copy, Debug)]
pub struct TruthPoint {
    pub t: Timestamp,
    pub position: Vec3,
    pub rotation: Rotation,
    pub vel_world: Vec3,
    pub acc_world: Vec3,
    pub omega_body: Vec3,
    pub alpha_body: Vec3,
    pub gait: GaitKind,
    /// Intended support state per leg (FL, FR, HL, HR).
    pub contacts: [bool; 4],
    pub foot_world: [Vec3; 4],
    pub foot_vel_world: [Vec3; 4],
    /// Vertical contact force share per leg (spike force during flight spike
    /// windows), N.
    pub foot_force_z: [f64; 4],
}

/// Jump cycle vertical profile.
///
/// Stance acceleration follows `z̈ = −g + C sin²(πφ/τ)` so the total leg
/// force is a smooth bell that is exactly zero at touchdown and takeoff.
/// A segment is: half-stance launch, then `cycles × (flight + stance)` with
/// the last stance replaced by a half-stance landing; the total is exactly
/// `cycles × period` and starts/ends at rest at the nominal height.
#[derive(Clone, Copy, Debug)]
struct JumpProfile {
    period: f64,
    t_stance: f64,
    t_flight: f64,
    v_takeoff: f64,
    /// Push constant C, m/s².
    push: f64,
    /// Takeoff/touchdown base height above the nominal stance height.
    z_takeoff_off: f64,
    cycles: usize,
}

fn jump_amplitude(period: f64, flight_fraction: f64) -> f64 {
    let tf = flight_fraction * period;
    let ts = period - tf;
    let v_to = GRAVITY_MAG * tf / 2.0;
    let k1 = 1.0 / 16.0 - 1.0 / (4.0 * PI * PI);
    let crouch = v_to * ts * (0.5 - 4.0 * k1) + GRAVITY_MAG * ts * ts * (0.125 - 2.0 * k1);
    let rise = GRAVITY_MAG * tf * tf / 8.0;
    rise + crouch
}

impl JumpProfile {
    fn solve(spec: &GaitSpec, index: usize) -> Result<JumpProfile, SimError> {
        let t = spec.period;
        if t <= 0.0 {
            return Err(SimError::InvalidGait {
                index,
                msg: "jump needs period > 0".into(),
            });
        }
        let fraction = match spec.flight_fraction {
            Some(f) => {
                if !(0.02..=0.95).contains(&f) {
                    return Err(SimError::InvalidGait {
                        index,
                        msg: format!("flight_fraction {f} outside [0.02, 0.95]"),
                    });
                }
                f
            }
            None => {
                let (lo_a, hi_a) = (jump_amplitude(t, 0.02), jump_amplitude(t, 0.95));
                if spec.jump_height < lo_a || spec.jump_height > hi_a {
                    return Err(SimError::InvalidGait {
                        index,
                        msg: format!(
                            "jump_height {} unreachable for period {t} s (range [{lo_a:.3}, {hi_a:.3}] m)",
                            spec.jump_height
                        ),
                    });
                }
                // A(f) is monotone increasing; bisect
                let (mut lo, mut hi) = (0.02f64, 0.95f64);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if jump_amplitude(t, mid) < spec.jump_height {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            }
        };
        let t_flight = fraction * t;
        let t_stance = t - t_flight;
        let v_takeoff = GRAVITY_MAG * t_flight / 2.0;
        let push = (4.0 * v_takeoff + 2.0 * GRAVITY_MAG * t_stance) / t_stance;
        let cycles = (spec.duration / t).round() as usize;
        if cycles == 0 || (cycles as f64 * t - spec.duration).abs() > 1e-6 {
            return Err(SimError::InvalidGait {
                index,
                msg: format!(
                    "duration {} must be a whole number of jump periods ({t} s)",
                    spec.duration
                ),
            });
        }
        Ok(JumpProfile {
            period: t,
            t_stance,
            t_flight,
            v_takeoff,
            push,
            z_takeoff_off: v_takeoff * t_stance / 4.0,
            cycles,
        })
    }

    fn peak_flight_rise(&self) -> f64 {
        GRAVITY_MAG * self.t_flight * self.t_flight / 8.0
    }
}

/// z, dz, ddz of the sin²-force stance profile at phase time `phi`.
fn stance_z(z0: f64, v0: f64, c: f64, tau: f64, phi: f64) -> (f64, f64, f64) {
    let g = GRAVITY_MAG;
    let arg = PI * phi / tau;
    let ddz = -g + c * arg.sin().powi(2);
    let dz = v0 - g * phi + c * (phi / 2.0 - tau * (2.0 * arg).sin() / (4.0 * PI));
    let z = z0 + v0 * phi - g * phi * phi / 2.0
        + c * (phi * phi / 4.0 + tau * tau * ((2.0 * arg).cos() - 1.0) / (8.0 * PI * PI));
    (z, dz, ddz)
}

#[derive(Clone, Copy)]
enum JumpPhase {
    /// Half-stance launch from rest.
    Launch { phi: f64 },
    Flight {
        phi: f64,
        /// Segment-local start/end times of this flight window.
        start: f64,
        end: f64,
        /// Duration of the stance that follows (full, or the landing half).
        next_stance: f64,
    },
    /// Full stance between flights, or the final landing half-stance.
    Stance { phi: f64, tau: f64, start: f64 },
}

fn jump_phase(p: &JumpProfile, tau_local: f64) -> JumpPhase {
    let half = p.t_stance / 2.0;
    if tau_local < half {
        return JumpPhase::Launch { phi: tau_local };
    }
    let rel = tau_local - half;
    let cycle = ((rel / p.period) + 1e-12).floor() as usize;
    let cycle = cycle.min(p.cycles - 1);
    let in_cycle = rel - cycle as f64 * p.period;
    if in_cycle < p.t_flight {
        let next_stance = if cycle + 1 == p.cycles { half } else { p.t_stance };
        JumpPhase::Flight {
            phi: in_cycle,
            start: half + cycle as f64 * p.period,
            end: half + cycle as f64 * p.period + p.t_flight,
            next_stance,
        }
    } else {
        let tau = if cycle + 1 == p.cycles { half } else { p.t_stance };
        JumpPhase::Stance {
            phi: in_cycle - p.t_flight,
            tau,
            start: half + cycle as f64 * p.period + p.t_flight,
        }
    }
}

enum SegmentMotion {
    Stand,
    Trot { period: f64, amplitude: f64 },
    Jump(JumpProfile),
}

/// Horizontal motion of one segment: cruise at the commanded velocity with
/// smooth ramps from/to the boundary velocities. For jumps the ramp windows
/// coincide with the launch and landing half-stances so flights stay
/// ballistic (zero horizontal acceleration while airborne).
#[derive(Clone, Copy, Debug)]
struct XyProfile {
    vb_in: Vec3,
    v_cmd: Vec3,
    vb_out: Vec3,
    tr_in: f64,
    tr_out: f64,
    dur: f64,
}

impl XyProfile {
    fn constant(v: Vec3, dur: f64) -> Self {
        XyProfile {
            vb_in: v,
            v_cmd: v,
            vb_out: v,
            tr_in: 0.0,
            tr_out: 0.0,
            dur,
        }
    }

    /// (position offset from segment start, velocity, acceleration) at `tau`.
    fn eval(&self, tau: f64) -> (Vec3, Vec3, Vec3) {
        // integral of smooth5
        fn w_int(s: f64) -> f64 {
            s * s * s * s * (2.5 - 3.0 * s + s * s)
        }
        let d_in = self.v_cmd - self.vb_in;
        let d_out = self.vb_out - self.v_cmd;
        let out_start = self.dur - self.tr_out;
        let off_in_end = if self.tr_in > 0.0 {
            self.vb_in * self.tr_in + d_in * (self.tr_in * 0.5)
        } else {
            Vec3::zeros()
        };
        if self.tr_in > 0.0 && tau < self.tr_in {
            let s = tau / self.tr_in;
            let (w, dw) = smooth5(s);
            return (
                self.vb_in * tau + d_in * (self.tr_in * w_int(s)),
                self.vb_in + d_in * w,
                d_in * (dw / self.tr_in),
            );
        }
        if tau < out_start || self.tr_out == 0.0 {
            return (
                off_in_end + self.v_cmd * (tau - self.tr_in),
                self.v_cmd,
                Vec3::zeros(),
            );
        }
        let off_cruise_end = off_in_end + self.v_cmd * (out_start - self.tr_in);
        let s = ((tau - out_start) / self.tr_out).min(1.0);
        let (w, dw) = smooth5(s);
        (
            off_cruise_end + self.v_cmd * (tau - out_start) + d_out * (self.tr_out * w_int(s)),
            self.v_cmd + d_out * w,
            d_out * (dw / self.tr_out),
        )
    }

    fn end_offset(&self) -> Vec3 {
        self.eval(self.dur).0
    }
}

struct Segment {
    kind: GaitKind,
    start_ms: i64,
    end_ms: i64,
    /// Base position at segment start.
    p0: Vec3,
    /// Commanded horizontal velocity (cruise).
    vel: Vec3,
    xy: XyProfile,
    motion: SegmentMotion,
}

/// Smoothstep with zero velocity and acceleration at both ends; returns
/// (value, d/ds).
fn smooth5(s: f64) -> (f64, f64) {
    let v = s * s * s * (10.0 - 15.0 * s + 6.0 * s * s);
    let d = 30.0 * s * s * (1.0 - 2.0 * s + s * s);
    (v, d)
}

#[derive(Clone, Copy)]
struct SwingPlan {
    start_pos: Vec3,
    target: Vec3,
    t_start: f64,
    t_end: f64,
    apex: f64,
    /// Absolute end of the sticky takeoff window (== t_start when disabled).
    sticky_until: f64,
}

#[derive(Clone, Copy)]
struct FootState {
    pinned: bool,
    anchor: Vec3,
    /// Position at the previous evaluated step (swing start on liftoff).
    last_pos: Vec3,
    swing: Option<SwingPlan>,
}

struct LegStep {
    pos: Vec3,
    vel: Vec3,
}

fn eval_pinned(anchor: Vec3, stance_start: f64, t: f64, slip: Option<Vec3>, slip_dur: f64) -> LegStep {
    match slip {
        Some(slip_vel_vec) => {
            let phi = (t - stance_start).max(0.0);
            if phi < slip_dur {
                LegStep {
                    pos: anchor + slip_vel_vec * phi,
                    vel: slip_vel_vec,
                }
            } else {
                LegStep {
                    pos: anchor + slip_vel_vec * slip_dur,
                    vel: Vec3::zeros(),
                }
            }
        }
        None => LegStep {
            pos: anchor,
            vel: Vec3::zeros(),
        },
    }
}

fn eval_swing(plan: &SwingPlan, t: f64, spike_beta: f64) -> LegStep {
    if t < plan.sticky_until {
        // sticky takeoff: the foot barely moves, rising at spike_beta
        let dt = t - plan.t_start;
        return LegStep {
            pos: plan.start_pos + Vec3::new(0.0, 0.0, spike_beta * dt),
            vel: Vec3::new(0.0, 0.0, spike_beta),
        };
    }
    let z_lift = spike_beta * (plan.sticky_until - plan.t_start);
    let from = plan.start_pos + Vec3::new(0.0, 0.0, z_lift);
    let span = plan.t_end - plan.sticky_until;
    let s = ((t - plan.sticky_until) / span).clamp(0.0, 1.0);
    let (w, dw) = smooth5(s);
    let xy = from.xy().lerp(&plan.target.xy(), w);
    let dxy = (plan.target.xy() - from.xy()) * (dw / span);
    // vertical: blend away the sticky lift and add the swing bump
    let z = from.z * (1.0 - w) + plan.apex * (PI * s).sin().powi(2);
    let dz = -from.z * dw / span + plan.apex * PI * (2.0 * PI * s).sin() / span;
    LegStep {
        pos: Vec3::new(xy.x, xy.y, z),
        vel: Vec3::new(dxy.x, dxy.y, dz),
    }
}

struct Desired {
    contact: bool,
    /// Start time of the current stance (for the slip window).
    stance_start: f64,
    // swing window and landing target, valid when !contact
    swing_start: f64,
    swing_end: f64,
    target: Vec3,
    apex: f64,
    sticky: f64,
    in_spike: bool,
}

/// Generate the ground-truth state sequence at 1 kHz.
///
/// Segments must tile whole cycles; feet carry over between segments, so the
/// whole sequence is C¹ in the base states. Fails fast when a foot target
/// leaves the leg workspace.
pub fn generate_truth(
    gaits: &[GaitSpec],
    robot: &RobotModel,
    params: &SimParams,
) -> Result<Vec<TruthPoint>, SimError> {
    if gaits.is_empty() {
        return Err(SimError::InvalidGait {
            index: 0,
            msg: "empty gait sequence".into(),
        });
    }
    let mut segments: Vec<Segment> = Vec::with_capacity(gaits.len());
    let mut t_ms = 0i64;
    let mut p = Vec3::new(0.0, 0.0, params.stance_height);
    let cmd_vel = |spec: &GaitSpec| {
        if spec.kind == GaitKind::Stand {
            Vec3::zeros()
        } else {
            Vec3::new(spec.vx, spec.vy, 0.0)
        }
    };
    for (index, spec) in gaits.iter().enumerate() {
        let dur_ms = (spec.duration * 1000.0).round() as i64;
        if dur_ms <= 0 || ((dur_ms as f64) - spec.duration * 1000.0).abs() > 1e-3 {
            return Err(SimError::InvalidGait {
                index,
                msg: format!("duration {} must be a positive whole number of ms", spec.duration),
            });
        }
        let motion = match spec.kind {
            GaitKind::Stand => SegmentMotion::Stand,
            GaitKind::Trot => {
                if spec.period <= 0.0 || spec.amplitude < 0.0 {
                    return Err(SimError::InvalidGait {
                        index,
                        msg: "trot needs period > 0 and amplitude >= 0".into(),
                    });
                }
                let cycles = spec.duration / spec.period;
                if (cycles - cycles.round()).abs() > 1e-6 || cycles.round() < 1.0 {
                    return Err(SimError::InvalidGait {
                        index,
                        msg: format!(
                            "trot duration {} must hold whole cycles of period {}",
                            spec.duration, spec.period
                        ),
                    });
                }
                SegmentMotion::Trot {
                    period: spec.period,
                    amplitude: spec.amplitude,
                }
            }
            GaitKind::Jump => SegmentMotion::Jump(JumpProfile::solve(spec, index)?),
        };
        let vel = cmd_vel(spec);
        // boundary velocities: ramp from rest when the previous segment
        // stands (or at run start); ramp out to the next segment's cruise
        // velocity, or to rest before a stand
        let vb_in = match index.checked_sub(1).map(|i| &gaits[i]) {
            Some(prev) if prev.kind != GaitKind::Stand => vel,
            _ => Vec3::zeros(),
        };
        let vb_out = match gaits.get(index + 1) {
            Some(next) if next.kind != GaitKind::Stand => cmd_vel(next),
            Some(_) => Vec3::zeros(),
            None => vel,
        };
        let dur = dur_ms as f64 * 1e-3;
        let xy = match (&motion, spec.kind) {
            (_, GaitKind::Stand) => XyProfile::constant(Vec3::zeros(), dur),
            (SegmentMotion::Jump(p), _) => XyProfile {
                vb_in,
                v_cmd: vel,
                vb_out,
                // ramps confined to the launch and landing half-stances
                tr_in: if (vb_in - vel).norm() > 1e-12 {
                    p.t_stance / 2.0
                } else {
                    0.0
                },
                tr_out: if (vb_out - vel).norm() > 1e-12 {
                    p.t_stance / 2.0
                } else {
                    0.0
                },
                dur,
            },
            (_, GaitKind::Trot) => XyProfile {
                vb_in,
                v_cmd: vel,
                vb_out,
                tr_in: if (vb_in - vel).norm() > 1e-12 {
                    spec.period.min(dur / 2.0)
                } else {
                    0.0
                },
                tr_out: if (vb_out - vel).norm() > 1e-12 {
                    spec.period.min(dur / 2.0)
                } else {
                    0.0
                },
                dur,
            },
            _ => XyProfile::constant(vel, dur),
        };
        segments.push(Segment {
            kind: spec.kind,
            start_ms: t_ms,
            end_ms: t_ms + dur_ms,
            p0: p,
            vel,
            xy,
            motion,
        });
        p += xy.end_offset();
        p.z = params.stance_height;
        t_ms += dur_ms;
    }
    let total_ms = t_ms;

    // feet start pinned under the hips
    let mut feet: [FootState; 4] = std::array::from_fn(|leg| {
        let hip = robot.legs[leg].hip_offset;
        let anchor = Vec3::new(segments[0].p0.x + hip.x, segments[0].p0.y + hip.y, 0.0);
        FootState {
            pinned: true,
            anchor,
            last_pos: anchor,
            swing: None,
        }
    });

    let mut out = Vec::with_capacity(total_ms as usize);
    let mut seg_idx = 0usize;
    for k in 0..total_ms {
        while k >= segments[seg_idx].end_ms {
            seg_idx += 1;
        }
        let seg = &segments[seg_idx];
        let t = k as f64 * 1e-3;
        let tau = (k - seg.start_ms) as f64 * 1e-3;
        let t0 = seg.start_ms as f64 * 1e-3;

        let (z, dz, ddz) = match &seg.motion {
            SegmentMotion::Stand => (params.stance_height, 0.0, 0.0),
            SegmentMotion::Trot { period, amplitude } => {
                let w = 4.0 * PI / period;
                let z = params.stance_height + amplitude * 0.5 * (1.0 - (w * tau).cos());
                let dz = amplitude * 0.5 * w * (w * tau).sin();
                let ddz = amplitude * 0.5 * w * w * (w * tau).cos();
                (z, dz, ddz)
            }
            SegmentMotion::Jump(p) => {
                let z_to = params.stance_height + p.z_takeoff_off;
                match jump_phase(p, tau) {
                    JumpPhase::Launch { phi } => {
                        stance_z(params.stance_height, 0.0, p.push, p.t_stance / 2.0, phi)
                    }
                    JumpPhase::Flight { phi, .. } => {
                        let z = z_to + p.v_takeoff * phi - GRAVITY_MAG * phi * phi / 2.0;
                        (z, p.v_takeoff - GRAVITY_MAG * phi, -GRAVITY_MAG)
                    }
                    JumpPhase::Stance { phi, tau: ts, .. } => {
                        stance_z(z_to, -p.v_takeoff, p.push, ts, phi)
                    }
                }
            }
        };
        let (xy_off, xy_vel, xy_acc) = seg.xy.eval(tau);
        let position = Vec3::new(seg.p0.x + xy_off.x, seg.p0.y + xy_off.y, z);
        let vel_world = Vec3::new(xy_vel.x, xy_vel.y, dz);
        let acc_world = Vec3::new(xy_acc.x, xy_acc.y, ddz);

        let hip_xy_at = |leg: usize, abs_t: f64| -> Vec3 {
            let hip = robot.legs[leg].hip_offset;
            let off = seg.xy.eval(abs_t - t0).0;
            Vec3::new(seg.p0.x + off.x + hip.x, seg.p0.y + off.y + hip.y, 0.0)
        };
        // instantaneous base velocity at a future instant of this segment,
        // used for symmetric foot placement
        let vel_at = |abs_t: f64| seg.xy.eval(abs_t - t0).1;
        let pinned_desire = |stance_start: f64| Desired {
            contact: true,
            stance_start,
            swing_start: 0.0,
            swing_end: 0.0,
            target: Vec3::zeros(),
            apex: 0.0,
            sticky: 0.0,
            in_spike: false,
        };
        let desired_for = |leg: usize| -> Desired {
            match &seg.motion {
                SegmentMotion::Stand => pinned_desire(t0),
                SegmentMotion::Trot { period, .. } => {
                    let half = period / 2.0;
                    let h_idx = ((tau / half) + 1e-9).floor() as i64;
                    let pair_a_stance = h_idx % 2 == 0;
                    let in_pair_a = leg == 0 || leg == 3;
                    let boundary = t0 + h_idx as f64 * half;
                    if in_pair_a == pair_a_stance {
                        pinned_desire(boundary)
                    } else {
                        let swing_end = boundary + half;
                        Desired {
                            contact: false,
                            stance_start: 0.0,
                            swing_start: boundary,
                            swing_end,
                            target: hip_xy_at(leg, swing_end) + vel_at(swing_end) * (period / 4.0),
                            apex: params.swing_height,
                            sticky: boundary,
                            in_spike: false,
                        }
                    }
                }
                SegmentMotion::Jump(p) => match jump_phase(p, tau) {
                    JumpPhase::Launch { .. } => pinned_desire(t0),
                    JumpPhase::Stance { start, .. } => pinned_desire(t0 + start),
                    JumpPhase::Flight {
                        phi,
                        start,
                        end,
                        next_stance,
                    } => {
                        let swing_start = t0 + start;
                        let swing_end = t0 + end;
                        let spike_len = params.spike_duration.min(p.t_flight * 0.5);
                        Desired {
                            contact: false,
                            stance_start: 0.0,
                            swing_start,
                            swing_end,
                            target: hip_xy_at(leg, swing_end)
                                + vel_at(swing_end) * (next_stance / 2.0),
                            apex: p.z_takeoff_off + p.peak_flight_rise() + params.tuck_extra,
                            sticky: if params.spike_enabled {
                                swing_start + spike_len
                            } else {
                                swing_start
                            },
                            in_spike: params.spike_enabled && phi < spike_len,
                        }
                    }
                },
            }
        };

        let slip_vec = if params.slip_vel > 0.0 && seg.kind != GaitKind::Stand && seg.vel.norm() > 1e-9
        {
            Some(-seg.vel.normalize() * params.slip_vel)
        } else {
            None
        };

        let mut contacts = [false; 4];
        let mut foot_world = [Vec3::zeros(); 4];
        let mut foot_vel_world = [Vec3::zeros(); 4];
        let mut foot_force_z = [0.0f64; 4];
        let mut n_contact = 0usize;
        let mut spike_legs = [false; 4];

        for leg in 0..4 {
            let want = desired_for(leg);
            let foot = &mut feet[leg];
            if want.contact && !foot.pinned {
                // touchdown: pin at the swing target
                foot.anchor = foot.swing.map(|s| s.target).unwrap_or(foot.anchor);
                foot.pinned = true;
                foot.swing = None;
            } else if !want.contact && foot.pinned {
                // liftoff at the exact phase boundary from wherever the foot
                // actually sat (including any slip offset)
                foot.swing = Some(SwingPlan {
                    start_pos: foot.last_pos,
                    target: want.target,
                    t_start: want.swing_start,
                    t_end: want.swing_end,
                    apex: want.apex,
                    sticky_until: want.sticky,
                });
                foot.pinned = false;
            }

            let step = if foot.pinned {
                n_contact += 1;
                contacts[leg] = true;
                eval_pinned(foot.anchor, want.stance_start, t, slip_vec, params.slip_duration)
            } else {
                if want.in_spike {
                    spike_legs[leg] = true;
                }
                let plan = foot.swing.as_ref().expect("swing plan set at liftoff");
                eval_swing(plan, t, params.spike_beta)
            };
            foot.last_pos = step.pos;
            foot_world[leg] = step.pos;
            foot_vel_world[leg] = step.vel;

            let rel = step.pos - (position + robot.legs[leg].hip_offset);
            let dist = rel.norm();
            let (min, max) = (robot.legs[leg].min_reach(), robot.legs[leg].max_reach());
            if dist > max - 1e-3 || dist < min + 1e-3 {
                return Err(SimError::Workspace {
                    leg,
                    t,
                    dist,
                    min,
                    max,
                });
            }
        }

        if n_contact > 0 {
            let total = (robot.mass * (GRAVITY_MAG + ddz)).max(0.0);
            let mut share = total / n_contact as f64;
            if params.ring_amplitude > 0.0 {
                if let SegmentMotion::Jump(p) = &seg.motion {
                    // landing ringing on stances that follow a flight
                    if let JumpPhase::Stance { phi, .. } = jump_phase(p, tau) {
                        let factor = 1.0
                            - params.ring_amplitude
                                * (-phi / params.ring_tau).exp()
                                * (2.0 * PI * params.ring_freq * phi).cos();
                        share *= factor.max(0.0);
                    }
                }
            }
            for leg in 0..4 {
                if contacts[leg] {
                    foot_force_z[leg] = share;
                }
            }
        }
        for leg in 0..4 {
            if spike_legs[leg] {
                foot_force_z[leg] = params.spike_force;
            }
        }

        out.push(TruthPoint {
            t: Timestamp::from_millis(k),
            position,
            rotation: Rotation::identity(),
            vel_world,
            acc_world,
            omega_body: Vec3::zeros(),
            alpha_body: Vec3::zeros(),
            gait: seg.kind,
            contacts,
            foot_world,
            foot_vel_world,
            foot_force_z,
        });
    }
    Ok(out)
}
