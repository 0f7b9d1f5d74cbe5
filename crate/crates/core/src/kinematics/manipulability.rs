//! Positional manipulability: the exact Jacobian measure and the closed-form
//! and sine approximations driven only by end-effector/base geometry.

use super::arm::ArmModel;
use super::pose::{BasePose, EePose, JointConfig};
use crate::error::Result;
use nalgebra::Matrix3;
use std::f64::consts::PI;

/// Margin kept from the annulus boundary when clamping `D`.
pub const ANNULUS_MARGIN: f64 = 1e-6;

/// `sqrt(det(Jp Jp^T))` of the positional 3×6 Jacobian block.
///
/// Evaluated with the Cauchy–Binet expansion over all 3-column minors, which
/// stays non-negative and resolves exact singularities to (numerically) zero.
pub fn manipulability_exact(arm: &ArmModel, q: &JointConfig) -> Result<f64> {
    let j = arm.jacobian_ee_in_base(q)?;
    let jp = j.fixed_view::<3, 6>(0, 0);
    let mut sum = 0.0;
    for a in 0..6 {
        for b in (a + 1)..6 {
            for c in (b + 1)..6 {
                let m = Matrix3::from_columns(&[
                    jp.column(a).into_owned(),
                    jp.column(b).into_owned(),
                    jp.column(c).into_owned(),
                ]);
                let d = m.determinant();
                sum += d * d;
            }
        }
    }
    Ok(sum.sqrt())
}

/// Result of the geometry-only manipulability estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimplifiedManipulability {
    pub value: f64,
    /// Horizontal end-effector/base distance.
    pub horizontal: f64,
    /// Workspace distance after clamping into the reachable annulus.
    pub distance: f64,
    /// Set when `distance` had to be clamped.
    pub clamped: bool,
}

/// Clamps `d` into `(|l2 - l3|, l2 + l3)` with a small margin.
fn clamp_to_annulus(arm: &ArmModel, d: f64) -> (f64, bool) {
    let lo = (arm.upper_arm - arm.forearm).abs() + ANNULUS_MARGIN;
    let hi = arm.upper_arm + arm.forearm - ANNULUS_MARGIN;
    if d < lo {
        (lo, true)
    } else if d > hi {
        (hi, true)
    } else {
        (d, false)
    }
}

/// Sine approximation `l2 l3 L |sin(pi D / (2 l3))|` from the end-effector and
/// base poses, with `D` measured from the shoulder height `h_b`.
pub fn manipulability_simplified(arm: &ArmModel, ee: &EePose, base: &BasePose) -> SimplifiedManipulability {
    let horizontal = (ee.position.xy() - base.xy()).norm();
    let dz = ee.position.z - arm.base_height;
    let raw = (horizontal * horizontal + dz * dz).sqrt();
    let (distance, clamped) = clamp_to_annulus(arm, raw);
    let value = sine_form(arm.upper_arm, arm.forearm, horizontal, distance);
    SimplifiedManipulability {
        value,
        horizontal,
        distance,
        clamped,
    }
}

/// `l2 l3 L |sin(pi D / (2 l3))|`.
pub fn sine_form(l2: f64, l3: f64, horizontal: f64, distance: f64) -> f64 {
    l2 * l3 * horizontal * (PI * distance / (2.0 * l3)).sin().abs()
}

/// Law-of-cosines form `l2 l3 L sqrt(1 - cos^2 q3)` with
/// `cos q3 = (D^2 - l2^2 - l3^2) / (2 l2 l3)`.
pub fn closed_form(l2: f64, l3: f64, horizontal: f64, distance: f64) -> f64 {
    let c = (distance * distance - l2 * l2 - l3 * l3) / (2.0 * l2 * l3);
    l2 * l3 * horizontal * (1.0 - c * c).max(0.0).sqrt()
}
