//! Smoothing of abrupt arm reconfigurations between consecutive waypoints.
//!
//! A segment is refined when the Frobenius norms of the two end-effector
//! Jacobians differ by more than a threshold. The end-effector is then
//! interpolated on SE(3) while joint increments are projected into the null
//! space of the base z/roll/pitch rows of the fixed-end-effector base
//! Jacobian, and the base pose is recovered from the chain.

use crate::error::{Error, Result};
use crate::kinematics::arm::base_jacobian_from;
use crate::kinematics::{ArmModel, BasePose, EePose, JointConfig, PathState};
use nalgebra::{Isometry3, Matrix3x6, Matrix6, SVector, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

pub type JointStep = SVector<f64, 6>;

/// Smallest singular value of the sub-Jacobian below which the
/// pseudoinverse fallback is used.
pub const RANK_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IncrementMode {
    /// `(q_{i+1} - q_i) / n` at every step.
    #[default]
    Uniform,
    /// The remaining gap spread over the remaining steps.
    Remaining,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterpolationParams {
    /// Jacobian Frobenius-norm jump threshold.
    pub jacobian_threshold: f64,
    /// Number of interpolation steps `n`.
    pub insertions: usize,
    pub increment: IncrementMode,
}

impl Default for InterpolationParams {
    fn default() -> Self {
        Self {
            jacobian_threshold: 3.0,
            insertions: 7,
            increment: IncrementMode::Uniform,
        }
    }
}

impl InterpolationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.jacobian_threshold > 0.0) {
            return Err(Error::validation("interpolation.jacobian_threshold", "must be > 0"));
        }
        if self.insertions == 0 {
            return Err(Error::validation("interpolation.insertions", "must be >= 1"));
        }
        Ok(())
    }
}

/// Frobenius norm of the end-effector Jacobian in the base frame.
pub fn jacobian_frobenius(arm: &ArmModel, q: &JointConfig) -> f64 {
    arm.jacobian_unchecked(q).norm()
}

pub fn jump_magnitude(arm: &ArmModel, a: &JointConfig, b: &JointConfig) -> f64 {
    (jacobian_frobenius(arm, a) - jacobian_frobenius(arm, b)).abs()
}

pub fn config_jump_detected(arm: &ArmModel, a: &JointConfig, b: &JointConfig, threshold: f64) -> bool {
    jump_magnitude(arm, a, b) > threshold
}

/// Sub-Jacobian of base `[z, roll, pitch]` rates and its null-space projector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectionContext {
    pub sub_jacobian: Matrix3x6<f64>,
    pub projector: Matrix6<f64>,
    /// Set when the pseudoinverse fallback was used.
    pub rank_deficient: bool,
}

/// The fixed-end-effector base Jacobian rows do not depend on the base's planar
/// pose, so the identity base is used.
pub fn projection_context(arm: &ArmModel, q: &JointConfig) -> Result<ProjectionContext> {
    let j = arm.jacobian_unchecked(q);
    let jb = base_jacobian_from(&j, &arm.ee_in_base(q), &BasePose::default());
    let sj: Matrix3x6<f64> = jb.fixed_rows::<3>(2).into_owned();
    let svd = sj.svd(true, true);
    let smin = svd.singular_values.min();
    let (projector, rank_deficient) = if smin > RANK_TOL {
        let gram = sj * sj.transpose();
        let inv = gram.try_inverse().ok_or(Error::DegenerateProjection { index: 0 })?;
        (Matrix6::identity() - sj.transpose() * inv * sj, false)
    } else {
        let pinv = svd
            .pseudo_inverse(RANK_TOL)
            .map_err(|_| Error::DegenerateProjection { index: 0 })?;
        (Matrix6::identity() - pinv * sj, true)
    };
    if !projector.iter().all(|v| v.is_finite()) {
        return Err(Error::DegenerateProjection { index: 0 });
    }
    Ok(ProjectionContext {
        sub_jacobian: sj,
        projector,
        rank_deficient,
    })
}

pub fn nullspace_project(arm: &ArmModel, q: &JointConfig, dq: &JointStep) -> Result<JointStep> {
    Ok(projection_context(arm, q)?.projector * dq)
}

/// Base pose that puts the end-effector at `ee` for configuration `q`,
/// before projection to the plane.
pub fn recovered_base(arm: &ArmModel, ee: &EePose, q: &JointConfig) -> Isometry3<f64> {
    ee.to_isometry() * arm.ee_in_base(q).inverse()
}

/// End-effector pose at fraction `f` from `a` to `b`: position lerp and
/// shortest-arc rotation.
pub fn interpolate_pose(a: &EePose, b: &EePose, f: f64) -> EePose {
    let qa = UnitQuaternion::from_rotation_matrix(&a.rotation());
    let qb = UnitQuaternion::from_rotation_matrix(&b.rotation());
    let r = qa.try_slerp(&qb, f, 1e-12).unwrap_or(qa);
    let (roll, pitch, yaw) = r.euler_angles();
    EePose::new(a.position.lerp(&b.position, f), Vector3::new(roll, pitch, yaw))
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SegmentOutput {
    pub states: Vec<PathState>,
    pub configs: Vec<JointConfig>,
    /// Largest `|z|`, `|roll|`, `|pitch|` of the recovered spatial base pose.
    pub max_base_height: f64,
    pub max_base_tilt: f64,
}

/// `n + 1` waypoints at fractions `a / n`, `a = 0..=n`, of the segment.
pub fn interpolate_segment(
    from: (&PathState, &JointConfig),
    to: (&PathState, &JointConfig),
    arm: &ArmModel,
    params: &InterpolationParams,
) -> Result<SegmentOutput> {
    let n = params.insertions;
    let (x0, q0) = from;
    let (x1, q1) = to;
    let uniform = (q1.0 - q0.0) / n as f64;
    let mut out = SegmentOutput::default();
    let mut q = *q0;
    for a in 0..=n {
        let ee = interpolate_pose(&x0.ee, &x1.ee, a as f64 / n as f64);
        if a > 0 {
            let dq = match params.increment {
                IncrementMode::Uniform => uniform,
                IncrementMode::Remaining => (q1.0 - q.0) / (n - a + 1) as f64,
            };
            q.0 += projection_context(arm, &q)?.projector * dq;
        }
        let spatial = recovered_base(arm, &ee, &q);
        let (roll, pitch, _) = spatial.rotation.euler_angles();
        out.max_base_height = out.max_base_height.max(spatial.translation.vector.z.abs());
        out.max_base_tilt = out.max_base_tilt.max(roll.abs()).max(pitch.abs());
        out.states.push(PathState::new(ee, BasePose::from_isometry(&spatial)));
        out.configs.push(q);
    }
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct InterpolationOutput {
    pub states: Vec<PathState>,
    pub configs: Vec<JointConfig>,
    /// Input segment indices `i` (between `i` and `i + 1`) that were refined.
    pub refined_segments: Vec<usize>,
    pub max_base_height: f64,
    pub max_base_tilt: f64,
}

/// Number of consecutive pairs whose Jacobian norms jump.
pub fn count_jumps(configs: &[JointConfig], arm: &ArmModel, threshold: f64) -> usize {
    configs
        .windows(2)
        .filter(|w| config_jump_detected(arm, &w[0], &w[1], threshold))
        .count()
}

pub fn run_interpolation(
    states: &[PathState],
    configs: &[JointConfig],
    arm: &ArmModel,
    params: &InterpolationParams,
) -> Result<InterpolationOutput> {
    if states.len() != configs.len() {
        return Err(Error::LengthMismatch {
            states: states.len(),
            configs: configs.len(),
        });
    }
    params.validate()?;
    let mut out = InterpolationOutput::default();
    for i in 0..states.len() {
        out.states.push(states[i]);
        out.configs.push(configs[i]);
        if i + 1 == states.len() || !config_jump_detected(arm, &configs[i], &configs[i + 1], params.jacobian_threshold) {
            continue;
        }
        let seg = interpolate_segment((&states[i], &configs[i]), (&states[i + 1], &configs[i + 1]), arm, params)
            .map_err(|e| match e {
                Error::DegenerateProjection { .. } => Error::DegenerateProjection { index: i },
                other => other,
            })?;
        out.max_base_height = out.max_base_height.max(seg.max_base_height);
        out.max_base_tilt = out.max_base_tilt.max(seg.max_base_tilt);
        out.states.extend(seg.states);
        out.configs.extend(seg.configs);
        out.refined_segments.push(i);
    }
    Ok(out)
}
