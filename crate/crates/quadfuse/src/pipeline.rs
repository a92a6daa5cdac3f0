//! Estimator variants and the event loop that drives them over recorded
//! streams.
//!
//! A variant selects which measurements reach the filter:
//! `ekf_leg` = IMU + leg velocities; `ekf_vicon` adds mocap poses;
//! `ekf_vio+` adds the 200 Hz predicted VIO stream and ground-height
//! measurements; `ekf_vio` uses the 30 Hz frame estimates instead;
//! `vio+`/`vio` pass the respective VIO stream through, upsampled to the
//! filter rate by latest-available hold. Measurements are applied at their
//! availability time with no rollback.

use crate::contact::{foot_force, ContactConfig, ContactTracker};
use crate::ekf::{Ekf, EkfState, NoiseConfig, UpdateOutcome};
use crate::eval::Trajectory;
use crate::io::{self, DiagnosticsRow};
use crate::kinematics::{base_velocity_from_leg, ground_height, ground_height_rotated, RobotModel};
use crate::math::Vec3;
use crate::sim::SimOutput;
use crate::streams::{
    merge_by_availability, Event, ImuSample, ImuSource, JointSample, PoseSample, Timestamp,
    TruthSample, VioEstimate, VioKind,
};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("variant {variant} requires the {stream} stream, which is missing or empty")]
    MissingStream {
        variant: &'static str,
        stream: &'static str,
    },
    #[error("unknown variant {0:?} (expected one of ekf_leg, ekf_vicon, ekf_vio+, ekf_vio, vio+, vio)")]
    UnknownVariant(String),
    #[error(transparent)]
    Io(#[from] io::IoError),
    #[error(transparent)]
    Ekf(#[from] crate::ekf::EkfError),
}

/// Estimator variants in the fixed comparison-table column order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    EkfLeg,
    EkfVicon,
    EkfVioPlus,
    EkfVio,
    VioPlus,
    Vio,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::EkfLeg,
        Variant::EkfVicon,
        Variant::EkfVioPlus,
        Variant::EkfVio,
        Variant::VioPlus,
        Variant::Vio,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::EkfLeg => "ekf_leg",
            Variant::EkfVicon => "ekf_vicon",
            Variant::EkfVioPlus => "ekf_vio+",
            Variant::EkfVio => "ekf_vio",
            Variant::VioPlus => "vio+",
            Variant::Vio => "vio",
        }
    }

    pub fn parse(s: &str) -> Result<Variant, PipelineError> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| PipelineError::UnknownVariant(s.to_string()))
    }

    fn uses_ekf(self) -> bool {
        !matches!(self, Variant::Vio | Variant::VioPlus)
    }

    /// Which VIO estimates this variant consumes.
    fn vio_filter(self) -> Option<VioKind> {
        match self {
            Variant::EkfVioPlus | Variant::VioPlus => Some(VioKind::Predicted),
            Variant::EkfVio | Variant::Vio => Some(VioKind::Frame),
            Variant::EkfLeg | Variant::EkfVicon => None,
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// The recorded (or freshly simulated) streams of one run.
pub struct RunStreams {
    pub imu: Vec<ImuSample>,
    pub joints: Vec<JointSample>,
    pub vio: Vec<VioEstimate>,
    pub vicon: Vec<PoseSample>,
    pub truth: Vec<TruthSample>,
}

impl RunStreams {
    pub fn from_sim(out: &SimOutput) -> Self {
        RunStreams {
            imu: out.imu.clone(),
            joints: out.joints.clone(),
            vio: out.vio.clone(),
            vicon: out.vicon.clone(),
            truth: out.truth.clone(),
        }
    }

    /// Load the documented CSV schemas from a run directory.
    pub fn load(dir: &Path) -> Result<Self, PipelineError> {
        Ok(RunStreams {
            imu: io::read_imu_csv(&dir.join("imu.csv"), ImuSource::RobotImu)?,
            joints: io::read_joints_csv(&dir.join("joints.csv"))?,
            vio: io::read_vio_csv(&dir.join("vio.csv"))?,
            vicon: io::read_vicon_csv(&dir.join("vicon.csv"))?,
            truth: io::read_truth_csv(&dir.join("truth.csv"))?,
        })
    }
}

/// Write the five stream CSVs of a simulated run.
pub fn write_run_dir(dir: &Path, out: &SimOutput) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir).map_err(io::IoError::from)?;
    io::write_imu_csv(&dir.join("imu.csv"), &out.imu)?;
    io::write_joints_csv(&dir.join("joints.csv"), &out.joints)?;
    io::write_vio_csv(&dir.join("vio.csv"), &out.vio)?;
    io::write_vicon_csv(&dir.join("vicon.csv"), &out.vicon)?;
    io::write_truth_csv(&dir.join("truth.csv"), &out.truth)?;
    Ok(())
}

/// Everything the estimator loop needs besides the streams.
#[derive(Clone, Debug)]
pub struct EstimateConfig {
    pub robot: RobotModel,
    pub contact: ContactConfig,
    pub noise: NoiseConfig,
    /// Maximum age of the latest VIO estimate for a height measurement, s.
    pub vio_freshness: f64,
    /// Rotate foot positions by the estimated attitude in the ground-height
    /// measurement (off = flat-base model).
    pub rotate_ground_height: bool,
    pub gravity: Vec3,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        EstimateConfig {
            robot: RobotModel::default(),
            contact: ContactConfig::default(),
            noise: NoiseConfig::default(),
            vio_freshness: 0.05,
            rotate_ground_height: false,
            gravity: Vec3::new(0.0, 0.0, -crate::sim::GRAVITY_MAG),
        }
    }
}

#[derive(Debug)]
pub struct EstimateOutput {
    pub trajectory: Vec<TruthSample>,
    pub diagnostics: Vec<DiagnosticsRow>,
}

impl EstimateOutput {
    pub fn trajectory(&self) -> Trajectory {
        Trajectory::new(self.trajectory.clone())
    }
}

/// Run one estimator variant over the streams.
pub fn run_variant(
    streams: &RunStreams,
    cfg: &EstimateConfig,
    variant: Variant,
) -> Result<EstimateOutput, PipelineError> {
    run_variant_observed(streams, cfg, variant, |_| {})
}

/// Like [`run_variant`], invoking `on_step` with a read-only filter snapshot
/// at every emitted output row (EKF variants only).
pub fn run_variant_observed(
    streams: &RunStreams,
    cfg: &EstimateConfig,
    variant: Variant,
    on_step: impl FnMut(&Ekf),
) -> Result<EstimateOutput, PipelineError> {
    if streams.truth.is_empty() {
        return Err(PipelineError::MissingStream {
            variant: variant.name(),
            stream: "truth",
        });
    }
    if variant.uses_ekf() {
        run_ekf_variant(streams, cfg, variant, on_step)
    } else {
        run_passthrough(streams, variant)
    }
}

fn run_passthrough(streams: &RunStreams, variant: Variant) -> Result<EstimateOutput, PipelineError> {
    let kind = variant.vio_filter().expect("passthrough variants filter vio");
    let selected: Vec<&VioEstimate> = streams.vio.iter().filter(|v| v.kind == kind).collect();
    if selected.is_empty() {
        return Err(PipelineError::MissingStream {
            variant: variant.name(),
            stream: "vio",
        });
    }
    let init = &streams.truth[0];
    let mut idx = 0usize;
    let mut held: Option<&VioEstimate> = None;
    let mut trajectory = Vec::with_capacity(streams.truth.len());
    for row in &streams.truth {
        while idx < selected.len() && selected[idx].t_available <= row.t {
            held = Some(selected[idx]);
            idx += 1;
        }
        let sample = match held {
            Some(v) => TruthSample {
                t: row.t,
                position: v.position,
                rotation: v.rotation,
                vel_world: v.vel_world,
            },
            None => TruthSample { t: row.t, ..*init },
        };
        trajectory.push(sample);
    }
    Ok(EstimateOutput {
        trajectory,
        diagnostics: Vec::new(),
    })
}

fn run_ekf_variant(
    streams: &RunStreams,
    cfg: &EstimateConfig,
    variant: Variant,
    mut on_step: impl FnMut(&Ekf),
) -> Result<EstimateOutput, PipelineError> {
    if streams.imu.is_empty() {
        return Err(PipelineError::MissingStream {
            variant: variant.name(),
            stream: "imu",
        });
    }
    if streams.joints.is_empty() {
        return Err(PipelineError::MissingStream {
            variant: variant.name(),
            stream: "joints",
        });
    }
    let vio: Vec<VioEstimate> = match variant.vio_filter() {
        Some(kind) => {
            let v: Vec<VioEstimate> = streams.vio.iter().filter(|e| e.kind == kind).copied().collect();
            if v.is_empty() {
                return Err(PipelineError::MissingStream {
                    variant: variant.name(),
                    stream: "vio",
                });
            }
            v
        }
        None => Vec::new(),
    };
    let vicon: &[PoseSample] = if variant == Variant::EkfVicon {
        if streams.vicon.is_empty() {
            return Err(PipelineError::MissingStream {
                variant: variant.name(),
                stream: "vicon",
            });
        }
        &streams.vicon
    } else {
        &[]
    };

    let events = merge_by_availability(&streams.imu, &streams.joints, &vio, vicon);

    let init_row = &streams.truth[0];
    let init = EkfState::at_rest(init_row.position, init_row.rotation);
    let mut ekf = Ekf::new(init, cfg.noise, cfg.gravity);
    let mut tracker = ContactTracker::new(cfg.contact);

    let start_t = streams.imu[0].t;
    let freeze_at = cfg.noise.bias_freeze_time;
    let mut last_imu_t: Option<Timestamp> = None;
    let mut last_gyro = Vec3::zeros();
    let mut last_vio: Option<(Timestamp, f64)> = None;

    let mut trajectory = Vec::with_capacity(streams.imu.len());
    let mut diagnostics = Vec::with_capacity(streams.imu.len());
    let mut pending: Option<Timestamp> = None;
    let mut diag = DiagnosticsRow::default();

    macro_rules! flush_row {
        ($t:expr) => {{
            let t: Timestamp = $t;
            trajectory.push(TruthSample {
                t,
                position: ekf.state.position,
                rotation: ekf.state.rotation,
                vel_world: ekf.state.vel_world(),
            });
            diag.t = t;
            diag.gate_rejections = ekf.counters.updates_rejected;
            diag.height_bias = ekf.state.height_bias;
            diagnostics.push(diag);
            diag = DiagnosticsRow::default();
            on_step(&ekf);
        }};
    }

    for event in &events {
        if let Some(pt) = pending {
            if event.available_at() > pt {
                flush_row!(pt);
                pending = None;
            }
        }
        match event {
            Event::Imu(s) => {
                if let Some(freeze) = freeze_at {
                    if !ekf.biases_frozen() && s.t.seconds_since(start_t) >= freeze {
                        ekf.freeze_imu_biases();
                    }
                }
                if let Some(prev) = last_imu_t {
                    let dt = s.t.seconds_since(prev);
                    if dt > 0.0 {
                        ekf.propagate(s, dt)?;
                    }
                }
                last_imu_t = Some(s.t);
                last_gyro = s.gyro;
                pending = Some(s.t);
            }
            Event::Joints(s) => {
                let omega = last_gyro - ekf.state.bias_gyro;
                for leg in 0..4 {
                    // singular force inversion counts as non-contact this step
                    let force_norm = foot_force(&cfg.robot.legs[leg], s.q[leg], s.tau[leg])
                        .map(|f| f.norm())
                        .unwrap_or(0.0);
                    tracker.schmitt_update(leg, force_norm);
                }
                let gated = tracker.gated_contacts();
                diag.contacts = gated.in_contact;
                let eligible_count = gated.velocity_eligible.iter().filter(|&&e| e).count();
                for leg in 0..4 {
                    if !gated.velocity_eligible[leg] {
                        continue;
                    }
                    let meas =
                        base_velocity_from_leg(&cfg.robot.legs[leg], s.q[leg], s.dq[leg], omega);
                    let foot = crate::kinematics::fk_foot(&cfg.robot.legs[leg], s.q[leg]);
                    if let UpdateOutcome::Applied { innovation_norm } =
                        ekf.update_leg_velocity(meas, foot, eligible_count)
                    {
                        diag.leg_vel_innovation = innovation_norm;
                    }
                }
                if gated.height_ready {
                    if let Some((vio_t, vio_z)) = last_vio {
                        // the paper computes the bias against the latest VIO
                        // height; skip when it is stale
                        if s.t.seconds_since(vio_t) <= cfg.vio_freshness {
                            let kin = if cfg.rotate_ground_height {
                                ground_height_rotated(
                                    &cfg.robot,
                                    &s.q,
                                    &gated.in_contact,
                                    &ekf.state.rotation,
                                )
                            } else {
                                ground_height(&cfg.robot, &s.q, &gated.in_contact)
                            };
                            if let Some(h) = kin {
                                diag.height_attempted = true;
                                let out = ekf.update_height_bias(vio_z - h);
                                if let UpdateOutcome::Applied { innovation_norm } = out {
                                    diag.height_accepted = true;
                                    diag.height_innovation = innovation_norm;
                                }
                            }
                        }
                    }
                }
            }
            Event::Vio(v) => {
                if let UpdateOutcome::Applied { innovation_norm } = ekf.update_vio(v) {
                    diag.vio_innovation = innovation_norm;
                }
                last_vio = Some((v.t_available, v.position.z));
            }
            Event::Vicon(p) => {
                if let UpdateOutcome::Applied { innovation_norm } =
                    ekf.update_vicon(p.position, p.rotation)
                {
                    diag.vio_innovation = innovation_norm;
                }
            }
        }
    }
    if let Some(pt) = pending {
        flush_row!(pt);
    }
    let _ = diag;

    Ok(EstimateOutput {
        trajectory,
        diagnostics,
    })
}

/// Write the estimate and diagnostics CSVs for one variant into `dir`.
pub fn write_estimate(
    dir: &Path,
    variant: Variant,
    output: &EstimateOutput,
) -> Result<(), PipelineError> {
    io::write_truth_csv(&dir.join(format!("est_{}.csv", variant.name())), &output.trajectory)?;
    io::write_diagnostics_csv(
        &dir.join(format!("diag_{}.csv", variant.name())),
        &output.diagnostics,
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{self, GaitSpec, Rates, SensorNoiseSpec, SimParams};

    fn sim_stand(seconds: f64, noise: SensorNoiseSpec) -> SimOutput {
        sim::simulate(
            &[GaitSpec::stand(seconds)],
            &RobotModel::default(),
            &SimParams::default(),
            &noise,
            &Rates::default(),
            1,
        )
        .unwrap()
    }

    #[test]
    fn variant_names_roundtrip() {
        for v in Variant::ALL {
            assert_eq!(Variant::parse(v.name()).unwrap(), v);
        }
        assert!(Variant::parse("nope").is_err());
    }

    #[test]
    fn passthrough_of_truth_equal_vio_equals_truth() {
        // standing + noiseless + zero latency: the held estimate matches truth
        let out = sim_stand(2.0, SensorNoiseSpec::noiseless());
        let streams = RunStreams::from_sim(&out);
        let est = run_variant(&streams, &EstimateConfig::default(), Variant::Vio).unwrap();
        assert_eq!(est.trajectory.len(), streams.truth.len());
        for (e, t) in est.trajectory.iter().zip(&streams.truth) {
            assert!((e.position - t.position).norm() < 1e-12);
        }
    }

    #[test]
    fn ekf_vio_plus_tracks_standing() {
        let out = sim_stand(4.0, SensorNoiseSpec::noiseless());
        let streams = RunStreams::from_sim(&out);
        let est = run_variant(&streams, &EstimateConfig::default(), Variant::EkfVioPlus).unwrap();
        let last = est.trajectory.last().unwrap();
        let truth = streams.truth.last().unwrap();
        assert!(
            (last.position - truth.position).norm() < 1e-3,
            "err {}",
            (last.position - truth.position).norm()
        );
        // output cadence equals the robot IMU rate
        assert_eq!(est.trajectory.len(), streams.imu.len());
    }

    #[test]
    fn missing_stream_is_descriptive() {
        let out = sim_stand(1.0, SensorNoiseSpec::noiseless());
        let mut streams = RunStreams::from_sim(&out);
        streams.vio.clear();
        let err = run_variant(&streams, &EstimateConfig::default(), Variant::EkfVioPlus).unwrap_err();
        assert!(err.to_string().contains("vio"));
    }

    #[test]
    fn height_updates_fire_while_standing() {
        let out = sim_stand(3.0, SensorNoiseSpec::noiseless());
        let streams = RunStreams::from_sim(&out);
        let est = run_variant(&streams, &EstimateConfig::default(), Variant::EkfVioPlus).unwrap();
        let attempted = est.diagnostics.iter().filter(|d| d.height_attempted).count();
        assert!(attempted > 1000, "standing should measure height: {attempted}");
    }

    #[test]
    fn ekf_leg_needs_no_vio() {
        let out = sim_stand(1.0, SensorNoiseSpec::noiseless());
        let mut streams = RunStreams::from_sim(&out);
        streams.vio.clear();
        streams.vicon.clear();
        let est = run_variant(&streams, &EstimateConfig::default(), Variant::EkfLeg).unwrap();
        assert_eq!(est.trajectory.len(), streams.imu.len());
    }
}
