//! Run a scenario file through the full pipeline and summarize it.
//!
//! `cargo run --example run_scenario -- scenarios/platform_grasp.toml`

use mobman::pipeline::run;
use mobman::scenario::Scenario;
use std::path::PathBuf;

fn main() -> mobman::Result<()> {
    let path: PathBuf = std::env::args().nth(1).unwrap_or_else(|| "scenarios/platform_grasp.toml".into()).into();
    let scn = Scenario::load(&path)?;
    let out = run(&scn, path.parent().unwrap_or(std::path::Path::new(".")))?;
    if let Some(plan) = &out.plan {
        println!("avoidance rounds: {:?}", plan.avoidance);
        for s in &plan.solves {
            println!("solve {:.4} -> {:.4} ({:?})", s.initial_cost, s.final_cost, s.convergence);
        }
    }
    if let Some(d) = &out.densified {
        println!("interpolation refined segments {:?}", d.interpolation.refined_segments);
    }
    println!("{} samples, {} IK failures", out.log.samples.len(), out.log.ik_failures);
    if let Some(task) = &out.metrics.task {
        println!("task success={} ({})", task.success, task.reason);
    }
    if let Some(c) = &out.clearance {
        println!("collision free: {} (min margin {:.4} m)", c.collision_free(), c.min_margin);
    }
    Ok(())
}
