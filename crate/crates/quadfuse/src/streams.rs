//! Timestamped measurement types and multi-rate asynchronous stream handling.
//!
//! All timestamps are integer nanoseconds since run start so that multi-rate
//! grid arithmetic stays exact. Streams are immutable ordered sequences; the
//! merger establishes a global order by availability time with a documented
//! tie-break (robot IMU, then joints, then VIO, then mocap).

use crate::math::{Rotation, Vec3};
use serde::{Deserialize, Serialize};

/// Nanoseconds since run start.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct Timestamp(pub i64);

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp(0);

    pub fn from_nanos(ns: i64) -> Self {
        Timestamp(ns)
    }

    pub fn from_millis(ms: i64) -> Self {
        Timestamp(ms * 1_000_000)
    }

    pub fn from_secs_f64(s: f64) -> Self {
        Timestamp((s * 1e9).round() as i64)
    }

    pub fn as_nanos(self) -> i64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 * 1e-9
    }

    /// Seconds elapsed since `earlier` (negative if `earlier` is later).
    pub fn seconds_since(self, earlier: Timestamp) -> f64 {
        (self.0 - earlier.0) as f64 * 1e-9
    }
}

impl std::ops::Add<i64> for Timestamp {
    type Output = Timestamp;
    fn add(self, ns: i64) -> Timestamp {
        Timestamp(self.0 + ns)
    }
}

/// Which physical IMU produced a sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ImuSource {
    /// High-rate IMU mounted on the robot base (1 kHz).
    RobotImu,
    /// IMU inside the visual-inertial sensor (gyro 200 Hz, accel upsampled).
    VioImu,
}

#[derive(Clone, Copy, Debug)]
pub struct ImuSample {
    pub t: Timestamp,
    /// Specific force in the sensor frame, m/s².
    pub accel: Vec3,
    /// Angular rate in the sensor frame, rad/s.
    pub gyro: Vec3,
    pub source: ImuSource,
}

/// Leg indices in the fixed FL, FR, HL, HR order used everywhere.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Leg {
    Fl = 0,
    Fr = 1,
    Hl = 2,
    Hr = 3,
}

impl Leg {
    pub const ALL: [Leg; 4] = [Leg::Fl, Leg::Fr, Leg::Hl, Leg::Hr];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Leg::Fl => "fl",
            Leg::Fr => "fr",
            Leg::Hl => "hl",
            Leg::Hr => "hr",
        }
    }
}

/// Joint-level measurements for all four legs at one instant.
///
/// Per leg: joint angles, joint rates, joint torques in HAA, HFE, KFE order.
#[derive(Clone, Copy, Debug)]
pub struct JointSample {
    pub t: Timestamp,
    pub q: [Vec3; 4],
    pub dq: [Vec3; 4],
    pub tau: [Vec3; 4],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VioKind {
    /// Optimized estimate tied to a camera frame; arrives with latency.
    Frame,
    /// IMU-propagated prediction emitted at the VIO sensor IMU rate.
    Predicted,
}

impl VioKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VioKind::Frame => "frame",
            VioKind::Predicted => "predicted",
        }
    }

    pub fn parse(s: &str) -> Option<VioKind> {
        match s {
            "frame" => Some(VioKind::Frame),
            "predicted" => Some(VioKind::Predicted),
            _ => None,
        }
    }
}

/// Base pose/velocity estimate coming out of the VIO stack.
///
/// `t_capture` is the sensor time of validity; `t_available >= t_capture`
/// models the optimization and transport latency seen by the consumer.
#[derive(Clone, Copy, Debug)]
pub struct VioEstimate {
    pub t_capture: Timestamp,
    pub t_available: Timestamp,
    pub position: Vec3,
    pub rotation: Rotation,
    pub vel_world: Vec3,
    pub kind: VioKind,
}

/// Pose-only measurement (motion capture).
#[derive(Clone, Copy, Debug)]
pub struct PoseSample {
    pub t: Timestamp,
    pub position: Vec3,
    pub rotation: Rotation,
}

/// Pose + world-frame velocity row, used for ground truth and estimates.
#[derive(Clone, Copy, Debug)]
pub struct TruthSample {
    pub t: Timestamp,
    pub position: Vec3,
    pub rotation: Rotation,
    pub vel_world: Vec3,
}

/// Anything that carries an availability stamp and can be re-stamped onto a
/// new grid by a zero-order hold.
pub trait Stamped {
    fn stamp(&self) -> Timestamp;
    fn restamped(&self, t: Timestamp) -> Self;
}

impl Stamped for (Timestamp, Vec3) {
    fn stamp(&self) -> Timestamp {
        self.0
    }
    fn restamped(&self, t: Timestamp) -> Self {
        (t, self.1)
    }
}

impl Stamped for ImuSample {
    fn stamp(&self) -> Timestamp {
        self.t
    }
    fn restamped(&self, t: Timestamp) -> Self {
        ImuSample { t, ..*self }
    }
}

impl Stamped for VioEstimate {
    // Availability governs what a live consumer could have used.
    fn stamp(&self) -> Timestamp {
        self.t_available
    }
    fn restamped(&self, t: Timestamp) -> Self {
        VioEstimate {
            t_capture: t,
            t_available: t,
            ..*self
        }
    }
}

impl Stamped for TruthSample {
    fn stamp(&self) -> Timestamp {
        self.t
    }
    fn restamped(&self, t: Timestamp) -> Self {
        TruthSample { t, ..*self }
    }
}

/// Zero-order-hold resampling onto a uniform grid at `target_rate_hz`.
///
/// The output grid starts at the first input stamp and covers the input span
/// plus one (inferred) input period, so each input sample owns a full hold
/// interval. Each output carries the latest input with stamp <= grid time.
/// Empty input gives empty output; values are never invented.
pub fn upsample_hold<T: Stamped + Clone>(samples: &[T], target_rate_hz: f64) -> Vec<T> {
    assert!(target_rate_hz > 0.0, "target rate must be positive");
    if samples.is_empty() {
        return Vec::new();
    }
    let period = (1e9 / target_rate_hz).round() as i64;
    assert!(period >= 1, "target rate too high for ns grid");
    if samples.len() == 1 {
        return vec![samples[0].clone()];
    }
    let t0 = samples[0].stamp().0;
    let t_last = samples[samples.len() - 1].stamp().0;
    debug_assert!(t_last >= t0, "input must be sorted by stamp");
    let spacing = ((t_last - t0) as f64 / (samples.len() - 1) as f64).round() as i64;
    let end = t_last + spacing.max(1);

    let mut out = Vec::with_capacity(((end - t0) / period + 1) as usize);
    let mut idx = 0usize;
    let mut t = t0;
    while t < end {
        while idx + 1 < samples.len() && samples[idx + 1].stamp().0 <= t {
            idx += 1;
        }
        out.push(samples[idx].restamped(Timestamp(t)));
        t += period;
    }
    out
}

/// One entry of the merged estimator input sequence.
#[derive(Clone, Debug)]
pub enum Event {
    Imu(ImuSample),
    Joints(JointSample),
    Vio(VioEstimate),
    Vicon(PoseSample),
}

impl Event {
    /// Time at which a live consumer could first see this event.
    pub fn available_at(&self) -> Timestamp {
        match self {
            Event::Imu(s) => s.t,
            Event::Joints(s) => s.t,
            Event::Vio(s) => s.t_available,
            Event::Vicon(s) => s.t,
        }
    }

    fn priority(&self) -> u8 {
        match self {
            Event::Imu(_) => 0,
            Event::Joints(_) => 1,
            Event::Vio(_) => 2,
            Event::Vicon(_) => 3,
        }
    }
}

/// Merge sensor streams into one sequence ordered by availability time.
///
/// Ties are broken by stream priority (robot IMU, joints, VIO, mocap) and are
/// stable within each stream, so repeated runs produce identical sequences.
pub fn merge_by_availability(
    imu: &[ImuSample],
    joints: &[JointSample],
    vio: &[VioEstimate],
    vicon: &[PoseSample],
) -> Vec<Event> {
    let mut events: Vec<Event> = Vec::with_capacity(imu.len() + joints.len() + vio.len() + vicon.len());
    events.extend(imu.iter().map(|s| Event::Imu(*s)));
    events.extend(joints.iter().map(|s| Event::Joints(*s)));
    events.extend(vio.iter().map(|s| Event::Vio(*s)));
    events.extend(vicon.iter().map(|s| Event::Vicon(*s)));
    // Stable sort preserves per-stream ordering for equal keys.
    events.sort_by_key(|e| (e.available_at(), e.priority()));
    events
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(t_ms: i64, x: f64) -> (Timestamp, Vec3) {
        (Timestamp::from_millis(t_ms), Vec3::new(x, 0.0, 0.0))
    }

    #[test]
    fn upsample_holds_values_on_grid() {
        let input = vec![v(0, 1.0), v(16, 2.0)];
        let out = upsample_hold(&input, 200.0);
        let stamps: Vec<i64> = out.iter().map(|s| s.0.as_nanos() / 1_000_000).collect();
        assert_eq!(stamps, vec![0, 5, 10, 15, 20, 25, 30]);
        for s in &out {
            let expect = if s.0 < Timestamp::from_millis(16) { 1.0 } else { 2.0 };
            assert_eq!(s.1.x, expect);
        }
    }

    #[test]
    fn upsample_ratio_62_5_to_200() {
        // 62.5 Hz -> 200 Hz must produce 3.2x the samples (within one).
        let n = 125;
        let input: Vec<_> = (0..n).map(|k| v(16 * k as i64, k as f64)).collect();
        let out = upsample_hold(&input, 200.0);
        let expected = (3.2 * n as f64).round() as i64;
        assert!(
            (out.len() as i64 - expected).abs() <= 1,
            "got {} want ~{}",
            out.len(),
            expected
        );
    }

    #[test]
    fn upsample_constant_stream_stays_constant() {
        let input: Vec<_> = (0..10).map(|k| v(10 * k as i64, 7.0)).collect();
        let out = upsample_hold(&input, 500.0);
        assert!(out.iter().all(|s| s.1.x == 7.0));
    }

    #[test]
    fn upsample_empty_and_single() {
        let empty: Vec<(Timestamp, Vec3)> = vec![];
        assert!(upsample_hold(&empty, 100.0).is_empty());
        let single = vec![v(3, 9.0)];
        let out = upsample_hold(&single, 100.0);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].1.x, 9.0);
    }

    fn imu_at(ms: i64) -> ImuSample {
        ImuSample {
            t: Timestamp::from_millis(ms),
            accel: Vec3::zeros(),
            gyro: Vec3::zeros(),
            source: ImuSource::RobotImu,
        }
    }

    fn vio_at(ms: i64) -> VioEstimate {
        VioEstimate {
            t_capture: Timestamp::from_millis(ms),
            t_available: Timestamp::from_millis(ms),
            position: Vec3::zeros(),
            rotation: Rotation::identity(),
            vel_world: Vec3::zeros(),
            kind: VioKind::Predicted,
        }
    }

    #[test]
    fn merge_counts_and_order() {
        // Enumerate-and-sort oracle: IMU at 1 kHz and VIO at 200 Hz over 10 ms
        // is 10 + 2 = 12 events in availability order.
        let imu: Vec<_> = (0..10).map(imu_at).collect();
        let vio: Vec<_> = [0, 5].into_iter().map(vio_at).collect();
        let merged = merge_by_availability(&imu, &[], &vio, &[]);
        assert_eq!(merged.len(), 12);
        let mut expected: Vec<(i64, u8)> = imu.iter().map(|s| (s.t.0, 0u8)).collect();
        expected.extend(vio.iter().map(|s| (s.t_available.0, 2u8)));
        expected.sort();
        let got: Vec<(i64, u8)> = merged
            .iter()
            .map(|e| {
                (
                    e.available_at().0,
                    match e {
                        Event::Imu(_) => 0,
                        Event::Vio(_) => 2,
                        _ => 9,
                    },
                )
            })
            .collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn merge_single_stream_is_identity() {
        let imu: Vec<_> = (0..5).map(imu_at).collect();
        let merged = merge_by_availability(&imu, &[], &[], &[]);
        assert_eq!(merged.len(), 5);
        for (e, s) in merged.iter().zip(&imu) {
            match e {
                Event::Imu(m) => assert_eq!(m.t, s.t),
                _ => panic!("wrong stream"),
            }
        }
    }

    #[test]
    fn merge_equal_stamps_imu_first() {
        let imu = vec![imu_at(5)];
        let vio = vec![vio_at(5)];
        let merged = merge_by_availability(&imu, &[], &vio, &[]);
        assert!(matches!(merged[0], Event::Imu(_)));
        assert!(matches!(merged[1], Event::Vio(_)));
    }

    proptest::proptest! {
        #[test]
        fn merge_is_sorted_permutation(imu_ms in proptest::collection::vec(0i64..1000, 0..40),
                                       vio_ms in proptest::collection::vec(0i64..1000, 0..40)) {
            let mut imu_ms = imu_ms; imu_ms.sort();
            let mut vio_ms = vio_ms; vio_ms.sort();
            let imu: Vec<_> = imu_ms.iter().map(|&m| imu_at(m)).collect();
            let vio: Vec<_> = vio_ms.iter().map(|&m| vio_at(m)).collect();
            let merged = merge_by_availability(&imu, &[], &vio, &[]);
            proptest::prop_assert_eq!(merged.len(), imu.len() + vio.len());
            for w in merged.windows(2) {
                proptest::prop_assert!(w[0].available_at() <= w[1].available_at());
            }
        }
    }
}
