//! Evaluate every cost term on a three-waypoint window.

use mobman::costs::*;
use mobman::kinematics::*;

fn main() -> mobman::Result<()> {
    let arm = ArmModel::desk_default();
    let config = CostConfig::default();
    let penalties = PenaltyState::zeros(3);
    let ctx = CostContext {
        arm: &arm,
        esdf: None,
        config: &config,
        penalties: &penalties,
    };
    let xs: Vec<StateVector> = (0..3)
        .map(|i| {
            let x = 0.1 * i as f64;
            PathState::new(EePose::from_parts(x + 0.55, 0.02 * i as f64, 0.6, 0.0, 1.0, 0.0), BasePose::new(x, 0.0, 0.0)).to_vector()
        })
        .collect();
    for kind in [TermKind::Manip, TermKind::EeAccel, TermKind::EeCurv, TermKind::BaseHeading, TermKind::Workspace] {
        let term = CostTerm::new(kind, 1, 1.0);
        let r = residual(&term, &xs, &ctx)?;
        let (first, j) = jacobian_of(&term, &xs, &ctx)?;
        println!("{:<13} residual {:.4?} jacobian {}x{} from waypoint {first}", kind.name(), r.as_slice(), j.nrows(), j.ncols());
    }
    Ok(())
}
