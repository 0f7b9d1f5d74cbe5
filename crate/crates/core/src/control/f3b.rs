//! Arm-side feedforward/feedback control.
//!
//! Base motion moves the end-effector as seen from the ground. The induced
//! end-effector twist is mapped through the inverse arm Jacobian and
//! cancelled, and a PD law with a filtered derivative regulates the remaining
//! joint error.

use crate::kinematics::{ArmModel, JointConfig};
use nalgebra::{Matrix6, Vector3, Vector6};
use serde::{Deserialize, Serialize};

/// Damping used when the arm Jacobian is near singular.
pub const FF_DAMPING: f64 = 1e-3;
const SINGULAR_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeMode {
    /// `n0` is the coefficient of the filtered derivative of the error.
    #[default]
    Filtered,
    /// `n0` scales a derivative feedforward of the compensation rates; the
    /// error derivative is used unfiltered.
    Feedforward,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct F3bGains {
    pub kp: f64,
    pub kd: f64,
    pub n0: f64,
    pub feedforward: bool,
    pub derivative: DerivativeMode,
    /// Per-joint rate limit, rad/s.
    pub joint_rate_limit: f64,
}

impl Default for F3bGains {
    fn default() -> Self {
        Self {
            kp: 3.0,
            kd: 0.1,
            n0: -0.3,
            feedforward: true,
            derivative: DerivativeMode::Filtered,
            joint_rate_limit: 2.0,
        }
    }
}

/// Twist of the end-effector caused by the base twist `(v, w)`, all in the
/// base frame, with the end-effector at `p`.
pub fn induced_ee_velocity(v: &Vector3<f64>, w: &Vector3<f64>, p: &Vector3<f64>) -> Vector6<f64> {
    let lin = v + w.cross(p);
    Vector6::new(lin.x, lin.y, lin.z, w.x, w.y, w.z)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Feedforward {
    /// Joint rates reproducing the induced twist, `J^-1 v`.
    pub rates: Vector6<f64>,
    /// Set when the damped fallback was used.
    pub damped: bool,
}

pub fn feedforward_term(arm: &ArmModel, q: &JointConfig, induced: &Vector6<f64>) -> Feedforward {
    let j = arm.jacobian_unchecked(q);
    let smin = j.singular_values().min();
    if smin > SINGULAR_TOL {
        if let Some(lu) = j.lu().solve(induced) {
            return Feedforward { rates: lu, damped: false };
        }
    }
    let jjt = j * j.transpose() + Matrix6::identity() * (FF_DAMPING * FF_DAMPING);
    let rates = jjt.cholesky().map_or(Vector6::zeros(), |c| j.transpose() * c.solve(induced));
    Feedforward { rates, damped: true }
}

/// Controller memory: previous error, filtered derivative and previous
/// compensation rates.
#[derive(Clone, Debug, PartialEq)]
pub struct F3bState {
    pub gains: F3bGains,
    prev_error: Option<Vector6<f64>>,
    filtered: Vector6<f64>,
    prev_ff: Option<Vector6<f64>>,
}

impl F3bState {
    pub fn new(gains: F3bGains) -> Self {
        Self {
            gains,
            prev_error: None,
            filtered: Vector6::zeros(),
            prev_ff: None,
        }
    }

    pub fn reset(&mut self) {
        *self = Self::new(self.gains);
    }

    /// Joint-rate command for error `q_des - q_cur` with compensation rates
    /// `ff_rates` (the output of [`feedforward_term`]).
    pub fn step(&mut self, q_des: &JointConfig, q_cur: &JointConfig, ff_rates: &Vector6<f64>, dt: f64) -> Vector6<f64> {
        let g = self.gains;
        let e = q_des.0 - q_cur.0;
        let prev = self.prev_error.unwrap_or(e);
        let raw = (e - prev) / dt;
        let d = match g.derivative {
            DerivativeMode::Filtered => {
                self.filtered = self.filtered * (-g.n0) + raw * (1.0 + g.n0);
                self.filtered
            }
            DerivativeMode::Feedforward => raw,
        };
        self.prev_error = Some(e);
        let u_fb = e * g.kp + d * g.kd;
        let u_ff = if g.feedforward {
            match g.derivative {
                DerivativeMode::Filtered => -ff_rates,
                DerivativeMode::Feedforward => {
                    let prev_ff = self.prev_ff.unwrap_or(*ff_rates);
                    -(ff_rates + (ff_rates - prev_ff) * (g.n0 / dt))
                }
            }
        } else {
            Vector6::zeros()
        };
        self.prev_ff = Some(*ff_rates);
        (u_fb + u_ff).map(|v| v.clamp(-g.joint_rate_limit, g.joint_rate_limit))
    }
}
