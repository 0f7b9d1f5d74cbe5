//! Forward kinematics, all analytic IK branches, and manipulability at one pose.

use mobman::kinematics::*;

fn main() -> mobman::Result<()> {
    let arm = ArmModel::desk_default();
    let base = BasePose::new(0.2, -0.1, 0.3);
    let q = JointConfig::new([0.3, 0.6, 1.1, 0.2, 0.8, -0.4]);
    let ee = arm.forward_kinematics(&base, &q)?;
    println!("ee = {:.4?} rpy = {:.4?}", ee.position, ee.rpy());

    for s in ik_enumerate(&arm, &base, &ee) {
        let err = arm.forward_kinematics(&base, &s.q)?.position - ee.position;
        println!(
            "branch {} shoulder_back={} elbow_down={} wrist_flipped={} |err|={:.1e} q={:.3?}",
            s.branch,
            s.shoulder_back(),
            s.elbow_down(),
            s.wrist_flipped(),
            err.norm(),
            s.q.0.as_slice()
        );
    }

    let exact = manipulability_exact(&arm, &q)?;
    let approx = manipulability_simplified(&arm, &ee, &base);
    println!("manipulability exact {exact:.5}, geometric estimate {:.5} (L = {:.3}, D = {:.3})", approx.value, approx.horizontal, approx.distance);
    Ok(())
}
