// temporary probe: ekf_leg on plain standing, step by step
use quadfuse::config::RunConfig;
use quadfuse::contact::{foot_force, ContactTracker};
use quadfuse::ekf::{Ekf, EkfState};
use quadfuse::kinematics::base_velocity_from_leg;
use quadfuse::math::Vec3;
use quadfuse::sim::{self, GaitSpec};

fn main() {
    let mut cfg = RunConfig::default();
    cfg.gait = vec![GaitSpec::stand(3.0)];
    let robot = cfg.robot.to_model();
    let out = sim::simulate(&cfg.gait, &robot, &cfg.sim, &cfg.sensors, &cfg.rates, 1).unwrap();

    let init = EkfState::at_rest(out.truth[0].position, out.truth[0].rotation);
    let mut ekf = Ekf::new(init, cfg.ekf, Vec3::new(0.0, 0.0, -9.81));
    let mut tracker = ContactTracker::new(cfg.contact);
    let mut last_gyro = Vec3::zeros();

    for k in 0..1500usize {
        let imu = &out.imu[k];
        if k > 0 {
            ekf.propagate(imu, 1e-3).unwrap();
        }
        last_gyro = imu.gyro;
        let joints = &out.joints[k];
        let omega = last_gyro - ekf.state.bias_gyro;
        for leg in 0..4 {
            let f = foot_force(&robot.legs[leg], joints.q[leg], joints.tau[leg])
                .map(|f| f.norm())
                .unwrap_or(0.0);
            tracker.schmitt_update(leg, f);
            if k < 3 {
                println!("k={k} leg{leg} force={f:.2}");
            }
        }
        let gated = tracker.gated_contacts();
        for leg in 0..4 {
            if gated.velocity_eligible[leg] {
                let meas =
                    base_velocity_from_leg(&robot.legs[leg], joints.q[leg], joints.dq[leg], omega);
                let innov = (meas - ekf.state.vel_body).norm();
                let foot = quadfuse::kinematics::fk_foot(&robot.legs[leg], joints.q[leg]);
                let n = gated.velocity_eligible.iter().filter(|&&e| e).count();
                let out2 = ekf.update_leg_velocity(meas, foot, n);
                if k < 5 || (k % 200 == 0 && leg == 0) {
                    println!(
                        "k={k} leg{leg} meas={:?} innov={innov:.4} applied={} ",
                        meas.as_slice(),
                        out2.applied()
                    );
                }
            }
        }
        if k % 200 == 0 {
            let c = ekf.covariance();
            println!(
                "k={k} p_err={:.4?} v={:.4?} ba={:.3?} bw={:.4?} Pv={:.2e} Pth={:.2e} rej={}",
                (ekf.state.position - out.truth[k].position).as_slice(),
                ekf.state.vel_body.as_slice(),
                ekf.state.bias_accel.as_slice(),
                ekf.state.bias_gyro.as_slice(),
                c[(6, 6)],
                c[(3, 3)],
                ekf.counters.updates_rejected
            );
        }
    }
}
