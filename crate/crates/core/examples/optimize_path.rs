//! Optimize a noisy 30-waypoint path with a fixed grasp window.

use mobman::costs::CostConfig;
use mobman::kinematics::*;
use mobman::optimizer::{Problem, SolverOptions};

fn main() -> mobman::Result<()> {
    let arm = ArmModel::desk_default();
    let states: Vec<PathState> = (0..30)
        .map(|i| {
            let x = 0.05 * i as f64;
            let wiggle = 0.03 * (1.7 * i as f64).sin();
            PathState::new(EePose::from_parts(x + 0.55, wiggle, 0.6, 0.0, 1.0, 0.0), BasePose::new(x, -wiggle, 0.0))
        })
        .collect();
    let mut problem = Problem::standard(arm.clone(), &states, CostConfig::default())?;
    let grasp = EePose::from_parts(1.2, 0.1, 0.5, 0.0, 1.2, 0.0);
    problem.fix_ee_window(&grasp, 12, 15)?;
    let (out, report) = problem.solve(&SolverOptions::default())?;
    println!(
        "cost {:.4} -> {:.4} in {} iterations ({:?})",
        report.initial_cost, report.final_cost, report.iterations, report.convergence
    );
    for (name, c) in &report.per_term {
        println!("  {name:<14} {c:.5}");
    }
    println!("max workspace excess {:.2e} m", report.max_workspace_excess);
    println!("waypoint 13 ee {:.3?}", out[13].ee.position);
    Ok(())
}
