//! Scenario/run configuration: TOML schema, validation, sweep overrides.

use crate::contact::ContactConfig;
use crate::ekf::NoiseConfig;
use crate::kinematics::{LegModel, RobotModel};
use crate::math::{Rotation, Vec3};
use crate::pipeline::{EstimateConfig, Variant};
use crate::sim::{GaitSpec, Rates, SensorNoiseSpec, SimParams};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Toml(String),
    #[error("invalid config values:\n{}", problems.join("\n"))]
    Invalid { problems: Vec<String> },
    #[error("unsupported sweep key {key:?}; supported: {supported}")]
    UnknownKey { key: String, supported: String },
    #[error("cannot parse override {key}={value}: {msg}")]
    BadOverride {
        key: String,
        value: String,
        msg: String,
    },
}

/// Robot geometry section.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotConfig {
    pub mass: f64,
    pub l1: f64,
    pub l2: f64,
    /// Hip offsets in FL, FR, HL, HR order, m.
    pub hip_offsets: [[f64; 3]; 4],
    pub imu_offset: [f64; 3],
    pub vio_offset: [f64; 3],
}

impl Default for RobotConfig {
    fn default() -> Self {
        RobotConfig {
            mass: 2.5,
            l1: 0.16,
            l2: 0.16,
            hip_offsets: [
                [0.196, 0.105, 0.0],
                [0.196, -0.105, 0.0],
                [-0.196, 0.105, 0.0],
                [-0.196, -0.105, 0.0],
            ],
            imu_offset: [0.0; 3],
            vio_offset: [0.0; 3],
        }
    }
}

impl RobotConfig {
    pub fn to_model(&self) -> RobotModel {
        let leg = |i: usize| LegModel {
            hip_offset: Vec3::new(
                self.hip_offsets[i][0],
                self.hip_offsets[i][1],
                self.hip_offsets[i][2],
            ),
            l1: self.l1,
            l2: self.l2,
        };
        RobotModel {
            legs: [leg(0), leg(1), leg(2), leg(3)],
            mass: self.mass,
            imu_offset: Vec3::new(self.imu_offset[0], self.imu_offset[1], self.imu_offset[2]),
            imu_rotation: Rotation::identity(),
            vio_offset: Vec3::new(self.vio_offset[0], self.vio_offset[1], self.vio_offset[2]),
            vio_rotation: Rotation::identity(),
        }
    }
}

/// Execution section: seeds, variants, estimator odds and ends.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seeds: Vec<u64>,
    /// Variant names; defaults to all six.
    pub variants: Vec<String>,
    /// Maximum VIO staleness accepted for height measurements, s.
    pub vio_freshness: f64,
    /// Rotate foot positions by estimated attitude in the height measurement.
    pub rotate_ground_height: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seeds: vec![1, 2, 3, 4, 5],
            variants: Variant::ALL.iter().map(|v| v.name().to_string()).collect(),
            vio_freshness: 0.05,
            rotate_ground_height: false,
        }
    }
}

/// Full scenario configuration (one TOML file).
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub robot: RobotConfig,
    pub sim: SimParams,
    pub sensors: SensorNoiseSpec,
    pub ekf: NoiseConfig,
    pub contact: ContactConfig,
    pub rates: Rates,
    pub gait: Vec<GaitSpec>,
    pub run: RunSection,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<RunConfig, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Toml(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML rendering, hex-encoded.
    pub fn sha256(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.to_toml_string().as_bytes());
        let digest = hasher.finalize();
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn total_duration(&self) -> f64 {
        self.gait.iter().map(|g| g.duration).sum()
    }

    /// Collect every invalid value with its config key.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut problems = Vec::new();
        if !(self.robot.mass > 0.0) {
            problems.push(format!("robot.mass must be > 0 (got {})", self.robot.mass));
        }
        if !(self.robot.l1 > 0.0 && self.robot.l2 > 0.0) {
            problems.push("robot.l1 and robot.l2 must be > 0".into());
        }
        if let Err(e) = self.contact.validate() {
            problems.push(e);
        }
        if let Err(e) = self.ekf.validate() {
            problems.push(e);
        }
        if let Err(e) = self.rates.validate() {
            problems.push(format!("rates: {e}"));
        }
        if self.gait.is_empty() {
            problems.push("gait: at least one segment required".into());
        }
        for (i, g) in self.gait.iter().enumerate() {
            if !(g.duration > 0.0) {
                problems.push(format!("gait[{i}].duration must be > 0"));
            }
            if !(g.period > 0.0) {
                problems.push(format!("gait[{i}].period must be > 0"));
            }
            if g.amplitude < 0.0 || g.jump_height < 0.0 {
                problems.push(format!("gait[{i}]: amplitude and jump_height must be >= 0"));
            }
        }
        let negatives = [
            ("sensors.robot_accel_noise", self.sensors.robot_accel_noise),
            ("sensors.robot_gyro_noise", self.sensors.robot_gyro_noise),
            ("sensors.encoder_angle_noise", self.sensors.encoder_angle_noise),
            ("sensors.torque_noise", self.sensors.torque_noise),
            ("sensors.vio_xy_walk", self.sensors.vio_xy_walk),
            ("sensors.vio_z_walk_active", self.sensors.vio_z_walk_active),
            ("sensors.vio_z_walk_idle", self.sensors.vio_z_walk_idle),
            ("sensors.vio_yaw_walk", self.sensors.vio_yaw_walk),
            ("sensors.vio_latency_mean", self.sensors.vio_latency_mean),
            ("sensors.vio_latency_std", self.sensors.vio_latency_std),
            ("sim.stance_height", self.sim.stance_height),
            ("sim.swing_height", self.sim.swing_height),
        ];
        for (key, v) in negatives {
            if v < 0.0 {
                problems.push(format!("{key} must be >= 0 (got {v})"));
            }
        }
        if !(0.0..=1.0).contains(&self.sensors.vio_dropout) {
            problems.push(format!(
                "sensors.vio_dropout must be in [0, 1] (got {})",
                self.sensors.vio_dropout
            ));
        }
        if self.run.seeds.is_empty() {
            problems.push("run.seeds must not be empty".into());
        }
        for name in &self.run.variants {
            if Variant::parse(name).is_err() {
                problems.push(format!("run.variants: unknown variant {name:?}"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid { problems })
        }
    }

    pub fn variants(&self) -> Vec<Variant> {
        self.run
            .variants
            .iter()
            .map(|n| Variant::parse(n).expect("validated"))
            .collect()
    }

    pub fn estimate_config(&self) -> EstimateConfig {
        EstimateConfig {
            robot: self.robot.to_model(),
            contact: self.contact,
            noise: self.ekf,
            vio_freshness: self.run.vio_freshness,
            rotate_ground_height: self.run.rotate_ground_height,
            gravity: Vec3::new(0.0, 0.0, -crate::sim::GRAVITY_MAG),
        }
    }
}

const SWEEP_KEYS: &[&str] = &[
    "contact.n",
    "contact.n_contact",
    "contact.n_standing",
    "contact.f_hi",
    "contact.f_lo",
    "ekf.sigma_leg_vel",
    "ekf.sigma_vio_pos",
    "ekf.sigma_vio_vel",
    "ekf.sigma_height",
    "ekf.sigma_height_bias_rw",
    "sensors.vio_xy_walk",
    "sensors.vio_z_walk_active",
    "sensors.vio_z_offset",
    "sensors.vio_latency_mean",
    "sensors.vio_dropout",
    "sensors.slip? (use sim.slip_vel)",
    "sim.slip_vel",
    "sim.spike_enabled",
    "sim.ring_amplitude",
];

/// Apply one `key=value` sweep override. `contact.n` sets both gating counts
/// at once (the ablation axis).
pub fn apply_override(cfg: &mut RunConfig, key: &str, value: &str) -> Result<(), ConfigError> {
    fn f64_of(key: &str, value: &str) -> Result<f64, ConfigError> {
        value.parse::<f64>().map_err(|e| ConfigError::BadOverride {
            key: key.into(),
            value: value.into(),
            msg: e.to_string(),
        })
    }
    fn u32_of(key: &str, value: &str) -> Result<u32, ConfigError> {
        value.parse::<u32>().map_err(|e| ConfigError::BadOverride {
            key: key.into(),
            value: value.into(),
            msg: e.to_string(),
        })
    }
    fn bool_of(key: &str, value: &str) -> Result<bool, ConfigError> {
        value.parse::<bool>().map_err(|e| ConfigError::BadOverride {
            key: key.into(),
            value: value.into(),
            msg: e.to_string(),
        })
    }
    match key {
        "contact.n" => {
            let n = u32_of(key, value)?;
            cfg.contact.n_contact = n;
            cfg.contact.n_standing = n;
        }
        "contact.n_contact" => cfg.contact.n_contact = u32_of(key, value)?,
        "contact.n_standing" => cfg.contact.n_standing = u32_of(key, value)?,
        "contact.f_hi" => cfg.contact.f_hi = f64_of(key, value)?,
        "contact.f_lo" => cfg.contact.f_lo = f64_of(key, value)?,
        "ekf.sigma_leg_vel" => cfg.ekf.sigma_leg_vel = f64_of(key, value)?,
        "ekf.sigma_vio_pos" => cfg.ekf.sigma_vio_pos = f64_of(key, value)?,
        "ekf.sigma_vio_vel" => cfg.ekf.sigma_vio_vel = f64_of(key, value)?,
        "ekf.sigma_height" => cfg.ekf.sigma_height = f64_of(key, value)?,
        "ekf.sigma_height_bias_rw" => cfg.ekf.sigma_height_bias_rw = f64_of(key, value)?,
        "sensors.vio_xy_walk" => cfg.sensors.vio_xy_walk = f64_of(key, value)?,
        "sensors.vio_z_walk_active" => cfg.sensors.vio_z_walk_active = f64_of(key, value)?,
        "sensors.vio_z_offset" => cfg.sensors.vio_z_offset = f64_of(key, value)?,
        "sensors.vio_latency_mean" => cfg.sensors.vio_latency_mean = f64_of(key, value)?,
        "sensors.vio_dropout" => cfg.sensors.vio_dropout = f64_of(key, value)?,
        "sim.slip_vel" => cfg.sim.slip_vel = f64_of(key, value)?,
        "sim.spike_enabled" => cfg.sim.spike_enabled = bool_of(key, value)?,
        "sim.ring_amplitude" => cfg.sim.ring_amplitude = f64_of(key, value)?,
        _ => {
            return Err(ConfigError::UnknownKey {
                key: key.into(),
                supported: SWEEP_KEYS.join(", "),
            })
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        let mut cfg = RunConfig::default();
        cfg.gait.push(GaitSpec::stand(5.0));
        cfg.validate().unwrap();
    }

    #[test]
    fn toml_roundtrip_and_stable_hash() {
        let mut cfg = RunConfig::default();
        cfg.gait.push(GaitSpec::trot(10.0, 0.25, 0.5, 0.02));
        let text = cfg.to_toml_string();
        let back = RunConfig::from_toml_str(&text).unwrap();
        assert_eq!(cfg.sha256(), back.sha256());
        assert_eq!(back.gait.len(), 1);
        assert_eq!(back.gait[0].vx, 0.25);
    }

    #[test]
    fn invalid_values_are_listed_by_key() {
        let mut cfg = RunConfig::default();
        cfg.gait.push(GaitSpec::stand(5.0));
        cfg.robot.mass = -1.0;
        cfg.contact.f_lo = 100.0;
        cfg.run.variants = vec!["bogus".into()];
        let err = cfg.validate().unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("robot.mass"));
        assert!(msg.contains("f_hi"));
        assert!(msg.contains("bogus"));
    }

    #[test]
    fn unknown_toml_key_rejected() {
        let text = "[robot]\nmasss = 2.5\n";
        assert!(RunConfig::from_toml_str(text).is_err());
    }

    #[test]
    fn overrides_apply() {
        let mut cfg = RunConfig::default();
        apply_override(&mut cfg, "contact.n", "20").unwrap();
        assert_eq!(cfg.contact.n_contact, 20);
        assert_eq!(cfg.contact.n_standing, 20);
        apply_override(&mut cfg, "sim.spike_enabled", "true").unwrap();
        assert!(cfg.sim.spike_enabled);
        assert!(apply_override(&mut cfg, "nope.key", "1").is_err());
        assert!(apply_override(&mut cfg, "contact.n", "abc").is_err());
    }
}
