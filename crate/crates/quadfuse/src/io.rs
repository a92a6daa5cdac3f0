//! CSV log schemas and the run-directory manifest.
//!
//! One file per stream, header row required:
//! - `imu.csv`: `t_ns,ax,ay,az,gx,gy,gz`
//! - `joints.csv`: `t_ns`, then 12× q, 12× dq, 12× tau
//!   (leg order FL,FR,HL,HR; joint order HAA,HFE,KFE)
//! - `vio.csv`: `t_capture_ns,t_available_ns,px,py,pz,qw,qx,qy,qz,vx,vy,vz,kind`
//! - `truth.csv` (also estimates): `t_ns,px,py,pz,qw,qx,qy,qz,vx,vy,vz`
//! - `vicon.csv`: `t_ns,px,py,pz,qw,qx,qy,qz`
//!
//! Floats are written with Rust's shortest round-trip formatting, so files
//! are byte-stable across runs and parse back bit-exactly.

use crate::math::{Rotation, Vec3};
use crate::streams::{
    ImuSample, ImuSource, JointSample, Leg, PoseSample, Timestamp, TruthSample, VioEstimate,
    VioKind,
};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{file}:{line}: {msg}")]
    Parse {
        file: String,
        line: usize,
        msg: String,
    },
}

type Result<T> = std::result::Result<T, IoError>;

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> IoError {
    IoError::Parse {
        file: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

struct RowReader {
    path: std::path::PathBuf,
    lines: std::io::Lines<BufReader<File>>,
    line_no: usize,
}

impl RowReader {
    fn open(path: &Path, expected_first_field: &str) -> Result<Self> {
        let file = File::open(path)?;
        let mut lines = BufReader::new(file).lines();
        let header = lines
            .next()
            .ok_or_else(|| parse_err(path, 1, "empty file, header row required"))??;
        if header.split(',').next() != Some(expected_first_field) {
            return Err(parse_err(
                path,
                1,
                format!("unexpected header {header:?}, want first column {expected_first_field:?}"),
            ));
        }
        Ok(RowReader {
            path: path.to_path_buf(),
            lines,
            line_no: 1,
        })
    }

    fn next_fields(&mut self, want: usize) -> Result<Option<Vec<String>>> {
        loop {
            let Some(line) = self.lines.next() else {
                return Ok(None);
            };
            self.line_no += 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<String> = line.split(',').map(|s| s.trim().to_string()).collect();
            if fields.len() != want {
                return Err(parse_err(
                    &self.path,
                    self.line_no,
                    format!("expected {want} fields, got {}", fields.len()),
                ));
            }
            return Ok(Some(fields));
        }
    }

    fn f64(&self, fields: &[String], idx: usize) -> Result<f64> {
        fields[idx].parse::<f64>().map_err(|e| {
            parse_err(
                &self.path,
                self.line_no,
                format!("field {idx} ({:?}): {e}", fields[idx]),
            )
        })
    }

    fn i64(&self, fields: &[String], idx: usize) -> Result<i64> {
        fields[idx].parse::<i64>().map_err(|e| {
            parse_err(
                &self.path,
                self.line_no,
                format!("field {idx} ({:?}): {e}", fields[idx]),
            )
        })
    }

    fn rotation(&self, fields: &[String], idx: usize) -> Result<Rotation> {
        let w = self.f64(fields, idx)?;
        let x = self.f64(fields, idx + 1)?;
        let y = self.f64(fields, idx + 2)?;
        let z = self.f64(fields, idx + 3)?;
        Rotation::try_from_wxyz(w, x, y, z)
            .ok_or_else(|| parse_err(&self.path, self.line_no, "degenerate quaternion"))
    }

    fn vec3(&self, fields: &[String], idx: usize) -> Result<Vec3> {
        Ok(Vec3::new(
            self.f64(fields, idx)?,
            self.f64(fields, idx + 1)?,
            self.f64(fields, idx + 2)?,
        ))
    }
}

fn push_vec3(row: &mut String, v: Vec3) {
    let _ = write!(row, ",{},{},{}", v.x, v.y, v.z);
}

fn push_rot(row: &mut String, r: Rotation) {
    let [w, x, y, z] = r.wxyz();
    let _ = write!(row, ",{w},{x},{y},{z}");
}

pub fn write_imu_csv(path: &Path, samples: &[ImuSample]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "t_ns,ax,ay,az,gx,gy,gz")?;
    for s in samples {
        let mut row = format!("{}", s.t.0);
        push_vec3(&mut row, s.accel);
        push_vec3(&mut row, s.gyro);
        writeln!(w, "{row}")?;
    }
    Ok(())
}

pub fn read_imu_csv(path: &Path, source: ImuSource) -> Result<Vec<ImuSample>> {
    let mut r = RowReader::open(path, "t_ns")?;
    let mut out = Vec::new();
    while let Some(f) = r.next_fields(7)? {
        out.push(ImuSample {
            t: Timestamp(r.i64(&f, 0)?),
            accel: r.vec3(&f, 1)?,
            gyro: r.vec3(&f, 4)?,
            source,
        });
    }
    Ok(out)
}

pub fn write_joints_csv(path: &Path, samples: &[JointSample]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let mut header = String::from("t_ns");
    for group in ["q", "dq", "tau"] {
        for leg in Leg::ALL {
            for joint in ["haa", "hfe", "kfe"] {
                let _ = write!(header, ",{group}_{}_{joint}", leg.label());
            }
        }
    }
    writeln!(w, "{header}")?;
    for s in samples {
        let mut row = format!("{}", s.t.0);
        for group in [&s.q, &s.dq, &s.tau] {
            for leg in 0..4 {
                push_vec3(&mut row, group[leg]);
            }
        }
        writeln!(w, "{row}")?;
    }
    Ok(())
}

pub fn read_joints_csv(path: &Path) -> Result<Vec<JointSample>> {
    let mut r = RowReader::open(path, "t_ns")?;
    let mut out = Vec::new();
    while let Some(f) = r.next_fields(37)? {
        let t = Timestamp(r.i64(&f, 0)?);
        let mut q = [Vec3::zeros(); 4];
        let mut dq = [Vec3::zeros(); 4];
        let mut tau = [Vec3::zeros(); 4];
        for leg in 0..4 {
            q[leg] = r.vec3(&f, 1 + 3 * leg)?;
            dq[leg] = r.vec3(&f, 13 + 3 * leg)?;
            tau[leg] = r.vec3(&f, 25 + 3 * leg)?;
        }
        out.push(JointSample { t, q, dq, tau });
    }
    Ok(out)
}

pub fn write_vio_csv(path: &Path, samples: &[VioEstimate]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(
        w,
        "t_capture_ns,t_available_ns,px,py,pz,qw,qx,qy,qz,vx,vy,vz,kind"
    )?;
    for s in samples {
        let mut row = format!("{},{}", s.t_capture.0, s.t_available.0);
        push_vec3(&mut row, s.position);
        push_rot(&mut row, s.rotation);
        push_vec3(&mut row, s.vel_world);
        writeln!(w, "{row},{}", s.kind.as_str())?;
    }
    Ok(())
}

pub fn read_vio_csv(path: &Path) -> Result<Vec<VioEstimate>> {
    let mut r = RowReader::open(path, "t_capture_ns")?;
    let mut out = Vec::new();
    while let Some(f) = r.next_fields(13)? {
        let t_capture = Timestamp(r.i64(&f, 0)?);
        let t_available = Timestamp(r.i64(&f, 1)?);
        if t_available < t_capture {
            return Err(parse_err(path, 0, "t_available < t_capture"));
        }
        let kind = VioKind::parse(&f[12])
            .ok_or_else(|| parse_err(path, 0, format!("unknown vio kind {:?}", f[12])))?;
        out.push(VioEstimate {
            t_capture,
            t_available,
            position: r.vec3(&f, 2)?,
            rotation: r.rotation(&f, 5)?,
            vel_world: r.vec3(&f, 9)?,
            kind,
        });
    }
    Ok(out)
}

pub fn write_truth_csv(path: &Path, samples: &[TruthSample]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "t_ns,px,py,pz,qw,qx,qy,qz,vx,vy,vz")?;
    for s in samples {
        let mut row = format!("{}", s.t.0);
        push_vec3(&mut row, s.position);
        push_rot(&mut row, s.rotation);
        push_vec3(&mut row, s.vel_world);
        writeln!(w, "{row}")?;
    }
    Ok(())
}

pub fn read_truth_csv(path: &Path) -> Result<Vec<TruthSample>> {
    let mut r = RowReader::open(path, "t_ns")?;
    let mut out = Vec::new();
    while let Some(f) = r.next_fields(11)? {
        out.push(TruthSample {
            t: Timestamp(r.i64(&f, 0)?),
            position: r.vec3(&f, 1)?,
            rotation: r.rotation(&f, 4)?,
            vel_world: r.vec3(&f, 8)?,
        });
    }
    Ok(out)
}

pub fn write_vicon_csv(path: &Path, samples: &[PoseSample]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "t_ns,px,py,pz,qw,qx,qy,qz")?;
    for s in samples {
        let mut row = format!("{}", s.t.0);
        push_vec3(&mut row, s.position);
        push_rot(&mut row, s.rotation);
        writeln!(w, "{row}")?;
    }
    Ok(())
}

pub fn read_vicon_csv(path: &Path) -> Result<Vec<PoseSample>> {
    let mut r = RowReader::open(path, "t_ns")?;
    let mut out = Vec::new();
    while let Some(f) = r.next_fields(8)? {
        out.push(PoseSample {
            t: Timestamp(r.i64(&f, 0)?),
            position: r.vec3(&f, 1)?,
            rotation: r.rotation(&f, 4)?,
        });
    }
    Ok(out)
}

/// Per-filter-step diagnostics row.
#[derive(Clone, Copy, Debug, Default)]
pub struct DiagnosticsRow {
    pub t: Timestamp,
    /// Norm of the last accepted leg-velocity innovation this step, m/s.
    pub leg_vel_innovation: f64,
    /// Norm of the last accepted VIO innovation this step.
    pub vio_innovation: f64,
    /// Last accepted height-bias innovation this step, m.
    pub height_innovation: f64,
    /// Cumulative gate rejections.
    pub gate_rejections: u64,
    pub contacts: [bool; 4],
    /// A ground-height measurement was attempted this step (pre-gate).
    pub height_attempted: bool,
    pub height_accepted: bool,
    pub height_bias: f64,
}

pub fn write_diagnostics_csv(path: &Path, rows: &[DiagnosticsRow]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(
        w,
        "t_ns,legvel_innov,vio_innov,dz_innov,gate_rejections,c_fl,c_fr,c_hl,c_hr,height_attempted,height_accepted,b_dz"
    )?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.t.0,
            r.leg_vel_innovation,
            r.vio_innovation,
            r.height_innovation,
            r.gate_rejections,
            r.contacts[0] as u8,
            r.contacts[1] as u8,
            r.contacts[2] as u8,
            r.contacts[3] as u8,
            r.height_attempted as u8,
            r.height_accepted as u8,
            r.height_bias
        )?;
    }
    Ok(())
}

pub fn read_diagnostics_csv(path: &Path) -> Result<Vec<DiagnosticsRow>> {
    let mut r = RowReader::open(path, "t_ns")?;
    let mut out = Vec::new();
    while let Some(f) = r.next_fields(12)? {
        out.push(DiagnosticsRow {
            t: Timestamp(r.i64(&f, 0)?),
            leg_vel_innovation: r.f64(&f, 1)?,
            vio_innovation: r.f64(&f, 2)?,
            height_innovation: r.f64(&f, 3)?,
            gate_rejections: r.i64(&f, 4)? as u64,
            contacts: [
                r.i64(&f, 5)? != 0,
                r.i64(&f, 6)? != 0,
                r.i64(&f, 7)? != 0,
                r.i64(&f, 8)? != 0,
            ],
            height_attempted: r.i64(&f, 9)? != 0,
            height_accepted: r.i64(&f, 10)? != 0,
            height_bias: r.f64(&f, 11)?,
        });
    }
    Ok(out)
}

/// Run-directory manifest: enough to reproduce the run byte-for-byte.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub scenario: String,
    pub seed: u64,
    pub config_sha256: String,
    pub duration_s: f64,
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    writeln!(w, "{json}")?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, 0, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::so3_exp;
    use tempfile::tempdir;

    #[test]
    fn imu_roundtrip_bit_exact() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("imu.csv");
        let samples: Vec<ImuSample> = (0..50)
            .map(|k| ImuSample {
                t: Timestamp::from_millis(k),
                accel: Vec3::new(0.1 * k as f64, -9.81, 1.0 / (k + 1) as f64),
                gyro: Vec3::new(1e-7 * k as f64, 0.3, -0.25),
                source: ImuSource::RobotImu,
            })
            .collect();
        write_imu_csv(&path, &samples).unwrap();
        let back = read_imu_csv(&path, ImuSource::RobotImu).unwrap();
        assert_eq!(back.len(), samples.len());
        for (a, b) in back.iter().zip(&samples) {
            assert_eq!(a.t, b.t);
            assert_eq!(a.accel, b.accel);
            assert_eq!(a.gyro, b.gyro);
        }
    }

    #[test]
    fn vio_roundtrip_preserves_kind_and_rotation() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("vio.csv");
        let samples = vec![
            VioEstimate {
                t_capture: Timestamp::from_millis(33),
                t_available: Timestamp::from_nanos(38_712_345),
                position: Vec3::new(0.1, 0.2, 0.25),
                rotation: so3_exp(Vec3::new(0.01, -0.02, 0.5)),
                vel_world: Vec3::new(0.3, 0.0, -0.1),
                kind: VioKind::Frame,
            },
            VioEstimate {
                t_capture: Timestamp::from_millis(35),
                t_available: Timestamp::from_millis(35),
                position: Vec3::new(0.11, 0.21, 0.251),
                rotation: so3_exp(Vec3::new(0.0, 0.0, 0.51)),
                vel_world: Vec3::new(0.31, 0.01, -0.11),
                kind: VioKind::Predicted,
            },
        ];
        write_vio_csv(&path, &samples).unwrap();
        let back = read_vio_csv(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].kind, VioKind::Frame);
        assert_eq!(back[1].kind, VioKind::Predicted);
        assert_eq!(back[0].rotation.wxyz(), samples[0].rotation.wxyz());
        assert_eq!(back[0].t_available.0, 38_712_345);
    }

    #[test]
    fn joints_roundtrip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("joints.csv");
        let mut s = JointSample {
            t: Timestamp::from_millis(7),
            q: [Vec3::zeros(); 4],
            dq: [Vec3::zeros(); 4],
            tau: [Vec3::zeros(); 4],
        };
        for leg in 0..4 {
            s.q[leg] = Vec3::new(leg as f64 * 0.1, -0.5, 1.2);
            s.dq[leg] = Vec3::new(0.0, leg as f64, 0.25);
            s.tau[leg] = Vec3::new(0.3, 0.0, -(leg as f64) * 0.01);
        }
        write_joints_csv(&path, &[s]).unwrap();
        let back = read_joints_csv(&path).unwrap();
        assert_eq!(back.len(), 1);
        for leg in 0..4 {
            assert_eq!(back[0].q[leg], s.q[leg]);
            assert_eq!(back[0].dq[leg], s.dq[leg]);
            assert_eq!(back[0].tau[leg], s.tau[leg]);
        }
    }

    #[test]
    fn header_mismatch_is_descriptive_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "wrong,header\n1,2\n").unwrap();
        let err = read_truth_csv(&path).unwrap_err();
        assert!(err.to_string().contains("header"));
    }

    #[test]
    fn manifest_roundtrip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("manifest.json");
        let m = Manifest {
            scenario: "jump.toml".into(),
            seed: 42,
            config_sha256: "abc".into(),
            duration_s: 120.0,
        };
        write_manifest(&path, &m).unwrap();
        let back = read_manifest(&path).unwrap();
        assert_eq!(back.seed, 42);
        assert_eq!(back.scenario, "jump.toml");
    }
}
