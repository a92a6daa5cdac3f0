//! Torque-based endeffector force estimation and contact classification.
//!
//! Forces at the feet are recovered from joint torques through the transposed
//! foot Jacobian. A per-leg Schmitt trigger turns the force norm into a
//! contact decision with hysteresis, and consecutive-step counters gate which
//! legs feed velocity updates and when the ground-height measurement fires.

use crate::kinematics::{jac_foot, KinematicsError, LegModel};
use crate::math::Vec3;
use serde::{Deserialize, Serialize};

/// Endeffector force from joint torques: `F = (Jᵀ)⁻¹ τ` for one leg.
///
/// Near a straight knee the Jacobian is singular; the caller should treat the
/// leg as non-contact for that step instead of extrapolating.
pub fn foot_force(leg: &LegModel, q: Vec3, tau: Vec3) -> Result<Vec3, KinematicsError> {
    let jt = jac_foot(leg, q).transpose();
    let det = jt.determinant();
    if det.abs() < 1e-8 {
        return Err(KinematicsError::SingularJacobian { det });
    }
    Ok(jt.try_inverse().expect("checked determinant") * tau)
}

/// Contact classifier thresholds and gating counts.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ContactConfig {
    /// Force norm above which a foot enters contact, N.
    pub f_hi: f64,
    /// Force norm below which a foot leaves contact, N.
    pub f_lo: f64,
    /// Consecutive in-contact steps before a leg feeds velocity updates.
    pub n_contact: u32,
    /// Consecutive all-four-contact steps before height measurements fire.
    pub n_standing: u32,
}

impl ContactConfig {
    /// Thresholds scaled to the static per-leg load `m g / 4`, with the
    /// experiment gating counts `n_contact = 1`, `n_standing = 3`.
    pub fn default_for_mass(mass: f64) -> Self {
        let per_leg = mass * 9.81 / 4.0;
        ContactConfig {
            f_hi: 0.6 * per_leg,
            f_lo: 0.25 * per_leg,
            n_contact: 1,
            n_standing: 3,
        }
    }

    /// Conservative preset that trades accuracy for robustness to spurious
    /// in-flight force spikes: `n_contact = n_standing = 20`.
    pub fn conservative_for_mass(mass: f64) -> Self {
        ContactConfig {
            n_contact: 20,
            n_standing: 20,
            ..Self::default_for_mass(mass)
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.f_hi > self.f_lo && self.f_lo > 0.0) {
            return Err(format!(
                "contact thresholds must satisfy f_hi > f_lo > 0 (got f_hi={}, f_lo={})",
                self.f_hi, self.f_lo
            ));
        }
        if self.n_contact == 0 || self.n_standing == 0 {
            return Err("contact.n_contact and contact.n_standing must be >= 1".into());
        }
        Ok(())
    }
}

impl Default for ContactConfig {
    fn default() -> Self {
        ContactConfig::default_for_mass(2.5)
    }
}

/// Result of one gating step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GatedContacts {
    /// Legs eligible for the leg-odometry velocity update this step.
    pub velocity_eligible: [bool; 4],
    /// Raw Schmitt states this step.
    pub in_contact: [bool; 4],
    /// All four legs in contact long enough for a height measurement.
    pub height_ready: bool,
}

/// Per-leg Schmitt trigger with consecutive-step counters.
///
/// Per step: call [`ContactTracker::schmitt_update`] once for each leg, then
/// [`ContactTracker::gated_contacts`] exactly once to advance the counters.
/// Single-owner state machine; clone it for what-if evaluation.
#[derive(Clone, Debug)]
pub struct ContactTracker {
    cfg: ContactConfig,
    state: [bool; 4],
    consecutive: [u32; 4],
    all_standing: u32,
}

impl ContactTracker {
    pub fn new(cfg: ContactConfig) -> Self {
        ContactTracker {
            cfg,
            state: [false; 4],
            consecutive: [0; 4],
            all_standing: 0,
        }
    }

    pub fn config(&self) -> &ContactConfig {
        &self.cfg
    }

    /// Hysteresis update for one leg: off→on above `f_hi`, on→off below
    /// `f_lo`, hold otherwise. Returns the new contact state.
    pub fn schmitt_update(&mut self, leg: usize, force_norm: f64) -> bool {
        debug_assert!(force_norm >= 0.0);
        let s = &mut self.state[leg];
        if *s {
            if force_norm < self.cfg.f_lo {
                *s = false;
            }
        } else if force_norm > self.cfg.f_hi {
            *s = true;
        }
        *s
    }

    /// Advance the consecutive-step counters and report the gated sets.
    /// Call once per step after updating all four legs.
    pub fn gated_contacts(&mut self) -> GatedContacts {
        for leg in 0..4 {
            if self.state[leg] {
                self.consecutive[leg] = self.consecutive[leg].saturating_add(1);
            } else {
                self.consecutive[leg] = 0;
            }
        }
        if self.state.iter().all(|&s| s) {
            self.all_standing = self.all_standing.saturating_add(1);
        } else {
            self.all_standing = 0;
        }
        let mut eligible = [false; 4];
        for leg in 0..4 {
            eligible[leg] = self.consecutive[leg] >= self.cfg.n_contact;
        }
        GatedContacts {
            velocity_eligible: eligible,
            in_contact: self.state,
            height_ready: self.all_standing >= self.cfg.n_standing,
        }
    }

    pub fn reset(&mut self) {
        self.state = [false; 4];
        self.consecutive = [0; 4];
        self.all_standing = 0;
    }
}
