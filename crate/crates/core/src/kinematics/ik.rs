//! Inverse kinematics: branch enumeration and local damped least squares.
//!
//! Enumeration seeds one configuration per branch (shoulder front/back ×
//! elbow up/down × wrist flip) from the wrist-centre decoupling of the chain,
//! refines every seed with damped least squares, folds the result into the
//! joint limits and removes duplicates.

use super::arm::{flange_to_ee, ArmModel, Jacobian, DOF};
use super::pose::{wrap_angle, BasePose, EePose, JointConfig};
use crate::error::{Error, Result};
use nalgebra::{Isometry3, Matrix6, Rotation3, SVector, Vector3, Vector6};
use std::f64::consts::{PI, TAU};

pub const POSITION_TOL: f64 = 1e-6;
pub const ORIENTATION_TOL: f64 = 1e-6;
/// Two solutions closer than this (max joint difference) are the same branch.
pub const DEDUP_TOL: f64 = 1e-4;

const REFINE_ITERS: usize = 50;

/// One IK solution with its canonical branch index
/// `4 * shoulder_back + 2 * elbow_down + wrist_flipped`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IkSolution {
    pub branch: u8,
    pub q: JointConfig,
}

impl IkSolution {
    pub fn shoulder_back(&self) -> bool {
        self.branch & 4 != 0
    }

    pub fn elbow_down(&self) -> bool {
        self.branch & 2 != 0
    }

    pub fn wrist_flipped(&self) -> bool {
        self.branch & 1 != 0
    }
}

/// Elbow above the shoulder–wrist chord. Uses the sign of `q3` relative to the
/// direction of horizontal reach in the arm plane.
pub fn elbow_up(arm: &ArmModel, q: &JointConfig) -> bool {
    let reach = arm.upper_arm * q[1].sin() + arm.forearm * (q[1] + q[2]).sin();
    q[2] * reach > 0.0
}

/// Branch index of a configuration, consistent with [`ik_enumerate`].
pub fn branch_of(arm: &ArmModel, q: &JointConfig) -> u8 {
    let reach = arm.upper_arm * q[1].sin() + arm.forearm * (q[1] + q[2]).sin();
    let back = u8::from(reach < 0.0);
    let down = u8::from(!elbow_up(arm, q));
    let flip = u8::from(q[4] < 0.0);
    4 * back + 2 * down + flip
}

/// Pose error `[dp; dtheta]` of `current` towards `target`, both in one frame.
fn pose_error(target: &Isometry3<f64>, current: &Isometry3<f64>) -> Vector6<f64> {
    let dp = target.translation.vector - current.translation.vector;
    let dr = (target.rotation * current.rotation.inverse()).scaled_axis();
    Vector6::new(dp.x, dp.y, dp.z, dr.x, dr.y, dr.z)
}

fn dls_step(j: &Jacobian, err: &Vector6<f64>, damping: f64) -> Vector6<f64> {
    let jjt = j * j.transpose() + Matrix6::identity() * (damping * damping);
    match jjt.cholesky() {
        Some(c) => j.transpose() * c.solve(err),
        None => Vector6::zeros(),
    }
}

fn converged(err: &Vector6<f64>) -> bool {
    err.fixed_rows::<3>(0).norm() < POSITION_TOL * 1e-3 && err.fixed_rows::<3>(3).norm() < ORIENTATION_TOL * 1e-3
}

/// Wrist-centre analytic seeds for a target expressed in the base frame.
fn branch_seeds(arm: &ArmModel, target: &Isometry3<f64>) -> Vec<(u8, SVector<f64, 6>)> {
    let r_ee = target.rotation.to_rotation_matrix();
    let r6 = r_ee * flange_to_ee().inverse();
    let wrist = target.translation.vector - r6 * Vector3::new(0.0, 0.0, arm.tool_length);
    let w = wrist - arm.mount().translation.vector;
    let (l2, l3) = (arm.upper_arm, arm.forearm);

    let horizontal = w.xy().norm();
    let pan = if horizontal > 1e-12 { w.y.atan2(w.x) } else { 0.0 };

    let mut seeds = Vec::with_capacity(8);
    for shoulder in 0..2u8 {
        let (q1, r) = if shoulder == 0 {
            (pan, horizontal)
        } else {
            (pan + PI, -horizontal)
        };
        let z = w.z;
        let c3 = (r * r + z * z - l2 * l2 - l3 * l3) / (2.0 * l2 * l3);
        if c3.abs() > 1.0 + 1e-9 {
            continue;
        }
        let c3 = c3.clamp(-1.0, 1.0);
        let s3_mag = (1.0 - c3 * c3).max(0.0).sqrt();
        for elbow in 0..2u8 {
            // elbow up iff q3 shares the sign of the horizontal reach
            let reach_sign = if r >= 0.0 { 1.0 } else { -1.0 };
            let s3 = if elbow == 0 { reach_sign * s3_mag } else { -reach_sign * s3_mag };
            let q3 = s3.atan2(c3);
            let q2 = r.atan2(z) - (l3 * q3.sin()).atan2(l2 + l3 * q3.cos());
            let rb = Rotation3::from_axis_angle(&Vector3::z_axis(), q1)
                * Rotation3::from_axis_angle(&Vector3::y_axis(), q2 + q3);
            let m = rb.inverse() * r6;
            let m = m.matrix();
            let sb = (m[(0, 2)] * m[(0, 2)] + m[(1, 2)] * m[(1, 2)]).sqrt();
            let (a, b, c) = if sb > 1e-9 {
                (m[(1, 2)].atan2(m[(0, 2)]), sb.atan2(m[(2, 2)]), m[(2, 1)].atan2(-m[(2, 0)]))
            } else {
                let b = if m[(2, 2)] > 0.0 { 0.0 } else { PI };
                (0.0, b, m[(1, 0)].atan2(m[(1, 1)]))
            };
            for wrist_flip in 0..2u8 {
                let (q4, q5, q6) = if wrist_flip == 0 {
                    (a, b, c)
                } else {
                    (a + PI, -b, c + PI)
                };
                let branch = 4 * shoulder + 2 * elbow + wrist_flip;
                seeds.push((branch, SVector::<f64, 6>::from([q1, q2, q3, q4, q5, q6])));
            }
        }
    }
    seeds
}

/// Folds each joint into its limit interval by multiples of `2 pi`, preferring
/// the representative in `(-pi, pi]`.
fn fold_into_limits(arm: &ArmModel, q: &SVector<f64, 6>) -> Option<JointConfig> {
    let mut out = JointConfig::zeros();
    for j in 0..DOF {
        let lim = arm.limits[j];
        let w = wrap_angle(q[j]);
        let candidates = [w, w - TAU, w + TAU, w - 2.0 * TAU, w + 2.0 * TAU];
        out[j] = *candidates.iter().find(|c| lim.contains(**c))?;
    }
    Some(out)
}

fn refine(arm: &ArmModel, target: &Isometry3<f64>, seed: SVector<f64, 6>) -> Option<SVector<f64, 6>> {
    let mut q = JointConfig(seed);
    for _ in 0..REFINE_ITERS {
        let err = pose_error(target, &arm.ee_in_base(&q));
        if converged(&err) {
            break;
        }
        let j = arm.jacobian_unchecked(&q);
        q.0 += dls_step(&j, &err, 1e-9);
    }
    let err = pose_error(target, &arm.ee_in_base(&q));
    (err.fixed_rows::<3>(0).norm() < POSITION_TOL && err.fixed_rows::<3>(3).norm() < ORIENTATION_TOL)
        .then_some(q.0)
}

/// All distinct limit-respecting configurations reaching `target` from `base`.
/// Unreachable targets give an empty set. Sorted by branch index.
pub fn ik_enumerate(arm: &ArmModel, base: &BasePose, target: &EePose) -> Vec<IkSolution> {
    let local = base.to_isometry().inverse() * target.to_isometry();
    let shoulder = arm.mount().translation.vector;
    if (local.translation.vector - shoulder).norm() > arm.reach() + 1e-9 {
        return Vec::new();
    }
    let mut out: Vec<IkSolution> = Vec::with_capacity(8);
    for (branch, seed) in branch_seeds(arm, &local) {
        let Some(refined) = refine(arm, &local, seed) else {
            continue;
        };
        let Some(q) = fold_into_limits(arm, &refined) else {
            continue;
        };
        if out.iter().any(|s| s.q.max_abs_diff(&q) < DEDUP_TOL) {
            continue;
        }
        out.push(IkSolution { branch, q });
    }
    out
}

/// Outcome of a local damped-least-squares solve.
#[derive(Clone, Copy, Debug)]
pub struct LocalIk {
    pub q: JointConfig,
    pub iterations: usize,
    pub converged: bool,
}

/// Damped least squares from `seed` towards a target given in the base frame.
/// The result is clamped to joint limits after every step.
pub fn ik_local_in_base(
    arm: &ArmModel,
    target: &Isometry3<f64>,
    seed: &JointConfig,
    max_iterations: usize,
    damping: f64,
) -> LocalIk {
    let mut q = arm.clamp_to_limits(seed);
    for it in 0..max_iterations {
        let err = pose_error(target, &arm.ee_in_base(&q));
        if err.fixed_rows::<3>(0).norm() < 1e-9 && err.fixed_rows::<3>(3).norm() < 1e-9 {
            return LocalIk {
                q,
                iterations: it,
                converged: true,
            };
        }
        let j = arm.jacobian_unchecked(&q);
        q.0 += dls_step(&j, &err, damping);
        q = arm.clamp_to_limits(&q);
    }
    let err = pose_error(target, &arm.ee_in_base(&q));
    LocalIk {
        q,
        iterations: max_iterations,
        converged: err.fixed_rows::<3>(0).norm() < POSITION_TOL && err.fixed_rows::<3>(3).norm() < ORIENTATION_TOL,
    }
}

/// Local solve for a global target with the base given as a full spatial pose.
pub fn ik_local(
    arm: &ArmModel,
    base: &Isometry3<f64>,
    target: &EePose,
    seed: &JointConfig,
    max_iterations: usize,
) -> Result<LocalIk> {
    let local = base.inverse() * target.to_isometry();
    let sol = ik_local_in_base(arm, &local, seed, max_iterations, 1e-3);
    if sol.converged {
        Ok(sol)
    } else {
        Err(Error::Contract(format!(
            "local IK did not converge within {max_iterations} iterations"
        )))
    }
}
