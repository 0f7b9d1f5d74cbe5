//! Elbow-branch selection around an obstacle hanging over the arm.

use mobman::avoidance::{check_waypoint, run_avoidance, AvoidanceConfig};
use mobman::esdf::{build_esdf, VoxelGrid};
use mobman::kinematics::*;
use nalgebra::Vector3;

fn main() -> mobman::Result<()> {
    let arm = ArmModel::desk_default();
    let base = BasePose::default();
    let ee = EePose::from_parts(0.45, 0.0, 0.45, 0.0, 1.3, 0.0);
    let sols = ik_enumerate(&arm, &base, &ee);
    let up = sols.iter().find(|s| !s.shoulder_back() && !s.elbow_down()).expect("elbow-up solution");
    let elbow = arm.chain(&up.q).elbow;

    let mut grid = VoxelGrid::new(Vector3::new(-0.6, -0.8, -0.2), 0.05, [32, 32, 32])?;
    grid.add_sphere(elbow + Vector3::new(0.0, 0.0, 0.12), 0.08);
    let esdf = build_esdf(&grid, 5.0)?;
    let cfg = AvoidanceConfig::default();

    let state = PathState::new(ee, base);
    let check = check_waypoint(&state, &arm, &esdf, &cfg, false);
    println!("{} IK solutions, safe branches {:?}", sols.len(), check.safe.iter().map(|s| s.branch).collect::<Vec<_>>());

    let out = run_avoidance(&[state], &[up.q], &arm, &esdf, &cfg)?;
    println!("status {:?}", out.statuses[0]);
    println!("elbow up before: {}, after: {}", elbow_up(&arm, &up.q), elbow_up(&arm, &out.configs[0]));
    Ok(())
}
