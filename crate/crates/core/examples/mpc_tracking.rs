//! Base MPC following an S-shaped path under unicycle kinematics.

use mobman::control::{BasePath, Mpc, MpcConfig};
use mobman::kinematics::BasePose;
use nalgebra::Vector2;

fn main() -> mobman::Result<()> {
    let path = BasePath::new((0..=60).map(|i| {
        let x = 0.05 * i as f64;
        Vector2::new(x, 0.3 * (1.5 * x).sin())
    }).collect())?;
    let cfg = MpcConfig::default();
    let mut mpc = Mpc::new(cfg);
    let mut pose = BasePose::new(0.0, 0.1, 0.0);
    for k in 0..1500 {
        let cmd = mpc.step(&path, &pose, cfg.v_max);
        pose = BasePose::new(
            pose.x + cmd.v * pose.yaw().cos() * cfg.dt,
            pose.y + cmd.v * pose.yaw().sin() * cfg.dt,
            pose.yaw() + cmd.omega * cfg.dt,
        );
        if k % 100 == 0 {
            let err = (pose.y - 0.3 * (1.5 * pose.x).sin()).abs();
            println!("t {:5.2} x {:.3} y {:+.3} yaw {:+.3} lateral error {:.4}", k as f64 * cfg.dt, pose.x, pose.y, pose.yaw(), err);
        }
        if pose.x > 2.95 {
            break;
        }
    }
    Ok(())
}
