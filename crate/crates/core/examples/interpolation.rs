//! Smooth an elbow branch swap with null-space interpolation.

use mobman::interpolation::*;
use mobman::kinematics::*;

fn main() -> mobman::Result<()> {
    let arm = ArmModel::desk_default();
    let params = InterpolationParams {
        jacobian_threshold: 0.02,
        ..InterpolationParams::default()
    };
    let mut states = Vec::new();
    let mut configs = Vec::new();
    for k in 0..6 {
        let base = BasePose::new(0.05 + 0.06 * k as f64, 0.0, 0.0);
        let ee = EePose::from_parts(0.8 + 0.01 * k as f64, 0.0, 0.5, 0.0, 0.3, 0.0);
        let s = ik_enumerate(&arm, &base, &ee)
            .into_iter()
            .find(|s| !s.shoulder_back() && s.elbow_down() == (k >= 3))
            .expect("branch exists");
        states.push(PathState::new(ee, base));
        configs.push(s.q);
    }
    let out = run_interpolation(&states, &configs, &arm, &params)?;
    println!(
        "jumps {} -> {}, waypoints {} -> {}, refined segments {:?}",
        count_jumps(&configs, &arm, params.jacobian_threshold),
        count_jumps(&out.configs, &arm, params.jacobian_threshold),
        states.len(),
        out.states.len(),
        out.refined_segments
    );
    println!("recovered base: max height {:.4} m, max tilt {:.4} rad", out.max_base_height, out.max_base_tilt);
    Ok(())
}
