//! Hold the end-effector still while the base swings, with and without feedforward.

use mobman::control::{F3bGains, HoldController, IhcConfig};
use mobman::kinematics::{ArmModel, BasePose, JointConfig};
use mobman::sim::{simulate, RobotState, SimLimits, SimOptions, Terrain, World};

fn main() -> mobman::Result<()> {
    let arm = ArmModel::desk_default();
    let q = JointConfig::new([0.0, 0.6, 1.2, 0.0, 0.6, 0.0]);
    for feedforward in [true, false] {
        let mut world = World::new(arm.clone(), Terrain::flat(), SimLimits::default(), 7)?;
        let mut init = RobotState::new(BasePose::default(), q);
        init.lift = world.lift_at(&init.base);
        let cfg = IhcConfig {
            gains: F3bGains { feedforward, ..F3bGains::default() },
            ..IhcConfig::default()
        };
        let mut ctrl = HoldController::new(arm.clone(), init.ee(&arm), 0.2, 10.0, cfg)?;
        let opts = SimOptions { max_duration: 15.0, ..SimOptions::default() };
        let m = simulate(&mut world, &mut ctrl, init, &opts)?.metrics()?;
        println!("feedforward={feedforward:<5} p_max {:.4} m  v_mean {:.4} m/s", m.p_max, m.v_mean);
    }
    Ok(())
}
