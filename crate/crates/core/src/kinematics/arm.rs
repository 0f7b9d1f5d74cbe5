//! Parametric six-axis anthropomorphic arm with a spherical wrist.
//!
//! Joint layout, all expressed in the base frame after the mount offset:
//!
//! | joint | axis (local) | role           |
//! |-------|--------------|----------------|
//! | q1    | z            | shoulder pan   |
//! | q2    | y            | shoulder lift, measured from vertical |
//! | q3    | y            | elbow          |
//! | q4    | z            | forearm roll   |
//! | q5    | y            | wrist pitch    |
//! | q6    | z            | wrist roll     |
//!
//! The upper arm and forearm extend along local `+z`. With all joints at zero
//! the arm points straight up. The end-effector frame is the flange frame
//! rotated so its `x` axis is the approach direction (the last joint axis);
//! a tool offset along that axis is optional.

use super::pose::{BasePose, EePose, JointConfig};
use crate::error::{Error, Result};
use nalgebra::{
    Isometry3, Matrix3, Matrix6, Rotation3, Translation3, UnitQuaternion, Vector2, Vector3,
};
use std::f64::consts::{FRAC_PI_2, PI, TAU};

pub const DOF: usize = 6;

/// 6×6 Jacobian, rows `[vx vy vz wx wy wz]` (or `[x y z roll pitch yaw]` rates).
pub type Jacobian = Matrix6<f64>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JointLimit {
    pub lower: f64,
    pub upper: f64,
}

impl JointLimit {
    pub fn new(lower: f64, upper: f64) -> Self {
        Self { lower, upper }
    }

    pub fn contains(&self, q: f64) -> bool {
        q >= self.lower && q <= self.upper
    }
}

impl Default for JointLimit {
    fn default() -> Self {
        Self::new(-PI, PI)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArmModel {
    /// Upper-arm length `l2`, meters.
    pub upper_arm: f64,
    /// Forearm length `l3` (elbow to wrist centre), meters.
    pub forearm: f64,
    /// Shoulder height above the ground plane of the base, `h_b`.
    pub base_height: f64,
    /// Horizontal offset of the shoulder from the base origin.
    pub mount_offset: Vector2<f64>,
    /// Wrist centre to end-effector distance along the approach axis.
    pub tool_length: f64,
    pub limits: [JointLimit; DOF],
}

/// Joint origins, axes and key points of one configuration, in the base frame.
#[derive(Clone, Debug)]
pub struct ChainFrames {
    pub shoulder: Vector3<f64>,
    pub elbow: Vector3<f64>,
    pub wrist: Vector3<f64>,
    pub ee: Isometry3<f64>,
    pub origins: [Vector3<f64>; DOF],
    pub axes: [Vector3<f64>; DOF],
}

/// Fixed rotation from the flange frame to the end-effector frame.
pub(crate) fn flange_to_ee() -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Vector3::y_axis(), -FRAC_PI_2)
}

fn rot_z(a: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Vector3::z_axis(), a)
}

fn rot_y(a: f64) -> Rotation3<f64> {
    Rotation3::from_axis_angle(&Vector3::y_axis(), a)
}

impl ArmModel {
    /// Arm with default `[-pi, pi]` limits, no mount offset and no tool.
    pub fn new(upper_arm: f64, forearm: f64, base_height: f64) -> Result<Self> {
        let arm = Self {
            upper_arm,
            forearm,
            base_height,
            mount_offset: Vector2::zeros(),
            tool_length: 0.0,
            limits: [JointLimit::default(); DOF],
        };
        arm.validate()?;
        Ok(arm)
    }

    /// Desk-scale arm with UR5e-like link lengths and limits.
    pub fn desk_default() -> Self {
        Self::new(0.425, 0.392, 0.45)
            .and_then(|a| a.with_limits(Self::industrial_limits()))
            .expect("default arm is valid")
    }

    /// `[-2pi, 2pi]` on every joint except the elbow, which keeps `[-pi, pi]`.
    pub fn industrial_limits() -> [JointLimit; DOF] {
        let mut l = [JointLimit::new(-TAU, TAU); DOF];
        l[2] = JointLimit::new(-PI, PI);
        l
    }

    pub fn with_limits(mut self, limits: [JointLimit; DOF]) -> Result<Self> {
        self.limits = limits;
        self.validate()?;
        Ok(self)
    }

    pub fn with_tool_length(mut self, tool_length: f64) -> Self {
        self.tool_length = tool_length;
        self
    }

    pub fn with_mount_offset(mut self, offset: Vector2<f64>) -> Self {
        self.mount_offset = offset;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.upper_arm > 0.0 && self.upper_arm.is_finite()) {
            return Err(Error::InvalidArm(format!("upper arm length {} must be > 0", self.upper_arm)));
        }
        if !(self.forearm > 0.0 && self.forearm.is_finite()) {
            return Err(Error::InvalidArm(format!("forearm length {} must be > 0", self.forearm)));
        }
        if !self.base_height.is_finite() || !self.tool_length.is_finite() {
            return Err(Error::InvalidArm("non-finite height or tool length".into()));
        }
        for (j, lim) in self.limits.iter().enumerate() {
            if !(lim.lower <= lim.upper) {
                return Err(Error::InvalidArm(format!(
                    "joint {} limit interval [{}, {}] is empty",
                    j + 1,
                    lim.lower,
                    lim.upper
                )));
            }
        }
        Ok(())
    }

    /// Maximum shoulder-to-end-effector distance.
    pub fn reach(&self) -> f64 {
        self.upper_arm + self.forearm + self.tool_length
    }

    pub fn within_limits(&self, q: &JointConfig) -> bool {
        self.limits.iter().zip(q.0.iter()).all(|(l, v)| l.contains(*v))
    }

    pub fn check_limits(&self, q: &JointConfig) -> Result<()> {
        for (j, (lim, v)) in self.limits.iter().zip(q.0.iter()).enumerate() {
            if !lim.contains(*v) {
                return Err(Error::JointLimit {
                    joint: j + 1,
                    value: *v,
                    lower: lim.lower,
                    upper: lim.upper,
                });
            }
        }
        Ok(())
    }

    /// Clamps each joint into its limit interval.
    pub fn clamp_to_limits(&self, q: &JointConfig) -> JointConfig {
        let mut out = *q;
        for (j, lim) in self.limits.iter().enumerate() {
            out[j] = out[j].clamp(lim.lower, lim.upper);
        }
        out
    }

    /// Base → shoulder transform.
    pub fn mount(&self) -> Isometry3<f64> {
        Isometry3::translation(self.mount_offset.x, self.mount_offset.y, self.base_height)
    }

    /// Serial chain evaluation in the base frame. Does not check limits.
    pub fn chain(&self, q: &JointConfig) -> ChainFrames {
        let shoulder = self.mount().translation.vector;
        let r1 = rot_z(q[0]);
        let ra = r1 * rot_y(q[1]);
        let elbow = shoulder + ra * Vector3::new(0.0, 0.0, self.upper_arm);
        let rb = ra * rot_y(q[2]);
        let wrist = elbow + rb * Vector3::new(0.0, 0.0, self.forearm);
        let r4 = rb * rot_z(q[3]);
        let r5 = r4 * rot_y(q[4]);
        let r6 = r5 * rot_z(q[5]);
        let ee_pos = wrist + r6 * Vector3::new(0.0, 0.0, self.tool_length);
        let ee_rot = r6 * flange_to_ee();
        ChainFrames {
            shoulder,
            elbow,
            wrist,
            ee: Isometry3::from_parts(
                Translation3::from(ee_pos),
                UnitQuaternion::from_rotation_matrix(&ee_rot),
            ),
            origins: [shoulder, shoulder, elbow, wrist, wrist, wrist],
            axes: [
                Vector3::z(),
                r1 * Vector3::y(),
                ra * Vector3::y(),
                rb * Vector3::z(),
                r4 * Vector3::y(),
                r5 * Vector3::z(),
            ],
        }
    }

    /// Base → end-effector transform.
    pub fn ee_in_base(&self, q: &JointConfig) -> Isometry3<f64> {
        self.chain(q).ee
    }

    /// End-effector pose in the global frame for a base on SE(2).
    pub fn forward_kinematics(&self, base: &BasePose, q: &JointConfig) -> Result<EePose> {
        self.check_limits(q)?;
        Ok(EePose::from_isometry(&(base.to_isometry() * self.ee_in_base(q))))
    }

    /// Geometric Jacobian of the end-effector twist (linear; angular) in the base frame.
    pub fn jacobian_ee_in_base(&self, q: &JointConfig) -> Result<Jacobian> {
        self.check_limits(q)?;
        Ok(self.jacobian_unchecked(q))
    }

    pub(crate) fn jacobian_unchecked(&self, q: &JointConfig) -> Jacobian {
        let frames = self.chain(q);
        let p = frames.ee.translation.vector;
        let mut j = Jacobian::zeros();
        for c in 0..DOF {
            let z = frames.axes[c];
            let lin = z.cross(&(p - frames.origins[c]));
            j.fixed_view_mut::<3, 1>(0, c).copy_from(&lin);
            j.fixed_view_mut::<3, 1>(3, c).copy_from(&z);
        }
        j
    }

    /// Jacobian of the base pose coordinates `[x y z roll pitch yaw]` with respect
    /// to the joints, under the constraint that the end-effector's global pose
    /// stays fixed.
    ///
    /// With `T_gb = T_ge * T_be(q)^-1` and `T_ge` constant, the base moves with
    /// angular velocity `-R_gb * w` and origin velocity `-R_gb * (v + p x w)`
    /// where `(v, w)` is the end-effector twist in the base frame and `p` the
    /// end-effector position in the base frame.
    pub fn jacobian_base_wrt_global_fixed_ee(
        &self,
        base: &BasePose,
        q: &JointConfig,
    ) -> Result<Jacobian> {
        let j = self.jacobian_ee_in_base(q)?;
        let sv = j.singular_values();
        if sv.min() < 1e-9 {
            return Err(Error::Singular(format!(
                "end-effector Jacobian rank-deficient (smallest singular value {:.3e})",
                sv.min()
            )));
        }
        Ok(base_jacobian_from(&j, &self.ee_in_base(q), base))
    }
}

/// Fixed-end-effector base Jacobian from an end-effector Jacobian.
pub(crate) fn base_jacobian_from(j: &Jacobian, ee_in_base: &Isometry3<f64>, base: &BasePose) -> Jacobian {
    let r_gb = base.to_isometry().rotation.to_rotation_matrix();
    let p = ee_in_base.translation.vector;
    let lin = j.fixed_view::<3, 6>(0, 0);
    let ang = j.fixed_view::<3, 6>(3, 0);
    let base_lin = -(r_gb.matrix() * (lin + p.cross_matrix() * ang));
    let omega_global = -(r_gb.matrix() * ang);
    // roll/pitch/yaw rates from the global angular velocity; the lifted base
    // has zero roll and pitch
    let rates = euler_rate_inverse(0.0, 0.0, base.yaw()) * omega_global;
    let mut out = Jacobian::zeros();
    out.fixed_view_mut::<3, 6>(0, 0).copy_from(&base_lin);
    out.fixed_view_mut::<3, 6>(3, 0).copy_from(&rates);
    out
}

/// Inverse of the map from ZYX Euler rates to global angular velocity.
pub(crate) fn euler_rate_inverse(_roll: f64, pitch: f64, yaw: f64) -> Matrix3<f64> {
    let (sy, cy) = yaw.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    // w = E * [roll_dot, pitch_dot, yaw_dot]
    let e = Matrix3::new(cy * cp, -sy, 0.0, sy * cp, cy, 0.0, -sp, 0.0, 1.0);
    e.try_inverse().unwrap_or_else(Matrix3::zeros)
}
