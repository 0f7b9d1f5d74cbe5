//! Drive over bumps with seeded track-slip noise and report the disturbance.

use mobman::control::{BaseCommand, ControlCommand, ControlInput, Controller};
use mobman::kinematics::{ArmModel, BasePose, JointConfig};
use mobman::sim::{simulate, Bump, RobotState, SimLimits, SimOptions, Terrain, World};

struct Cruise;

impl Controller for Cruise {
    fn command(&mut self, _: &ControlInput) -> ControlCommand {
        ControlCommand {
            base: BaseCommand { v: 0.3, omega: 0.05 },
            ..ControlCommand::default()
        }
    }
}

fn main() -> mobman::Result<()> {
    let terrain = Terrain {
        bumps: vec![Bump { center: [1.0, 0.05], height: 0.06, width: 0.25 }],
        noise: [0.003, 0.01, 0.01],
        ..Terrain::default()
    };
    let arm = ArmModel::desk_default();
    let mut world = World::new(arm.clone(), terrain, SimLimits::default(), 11)?;
    let start = RobotState::new(BasePose::default(), JointConfig::new([0.0, 0.6, 1.2, 0.0, 0.6, 0.0]));
    let log = simulate(&mut world, &mut Cruise, start, &SimOptions { max_duration: 8.0, ..SimOptions::default() })?;
    let peak = |f: fn(&RobotState) -> f64| log.samples.iter().map(|s| f(&s.state).abs()).fold(0.0, f64::max);
    println!("{} samples, clamp events {}", log.samples.len(), log.clamp_events);
    println!("peak |z| {:.4} m, |roll| {:.4} rad, |pitch| {:.4} rad", peak(|s| s.lift.z), peak(|s| s.lift.roll), peak(|s| s.lift.pitch));
    let m = log.metrics()?;
    println!("ee sigma_la {:.3}, kappa_max {:.2}", m.sigma_la, m.kappa_max);
    Ok(())
}
