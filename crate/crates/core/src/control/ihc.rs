//! Isolated holistic control: the base tracks its planned path with the MPC
//! while the arm holds the planned end-effector path with F3B.

use super::f3b::{feedforward_term, induced_ee_velocity, F3bGains, F3bState};
use super::mpc::{BaseCommand, BasePath, Mpc, MpcConfig};
use crate::error::{Error, Result};
use crate::interpolation::interpolate_pose;
use crate::kinematics::ik::ik_local_in_base;
use crate::kinematics::{ArmModel, EePose, JointConfig, PathState};
use nalgebra::{Isometry3, Vector3, Vector6};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ControlCommand {
    pub joint_rates: Vector6<f64>,
    pub base: BaseCommand,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IhcConfig {
    pub gains: F3bGains,
    pub mpc: MpcConfig,
    /// Arm loop rate, Hz.
    pub arm_rate: f64,
    /// Base loop rate, Hz.
    pub base_rate: f64,
    pub ik_iterations: usize,
    pub ik_damping: f64,
    /// Gain pulling the base back onto the planned schedule, 1/s.
    pub schedule_gain: f64,
}

impl Default for IhcConfig {
    fn default() -> Self {
        Self {
            gains: F3bGains::default(),
            mpc: MpcConfig::default(),
            arm_rate: 100.0,
            base_rate: 20.0,
            ik_iterations: 100,
            ik_damping: 1e-2,
            schedule_gain: 1.0,
        }
    }
}

impl IhcConfig {
    pub fn validate(&self) -> Result<()> {
        self.mpc.validate()?;
        if !(self.arm_rate > 0.0 && self.base_rate > 0.0 && self.base_rate <= self.arm_rate) {
            return Err(Error::validation("control.base_rate", "rates must satisfy 0 < base_rate <= arm_rate"));
        }
        Ok(())
    }

    pub fn arm_dt(&self) -> f64 {
        1.0 / self.arm_rate
    }

    /// Arm ticks per base update.
    pub fn base_period(&self) -> usize {
        ((self.arm_rate / self.base_rate).round() as usize).max(1)
    }
}

/// What the controllers see of the robot at one tick.
#[derive(Clone, Copy, Debug)]
pub struct ControlInput {
    pub t: f64,
    /// Spatial base pose including terrain lift.
    pub base: Isometry3<f64>,
    pub q: JointConfig,
    /// Base twist over the previous tick, base frame.
    pub base_linear: Vector3<f64>,
    pub base_angular: Vector3<f64>,
}

/// Shared arm-side loop: local IK towards the global target, then F3B.
#[derive(Clone, Debug)]
struct ArmLoop {
    f3b: F3bState,
    q_des: Option<JointConfig>,
    ik_failures: usize,
    ff_damped: usize,
}

impl ArmLoop {
    fn new(gains: F3bGains) -> Self {
        Self {
            f3b: F3bState::new(gains),
            q_des: None,
            ik_failures: 0,
            ff_damped: 0,
        }
    }

    fn command(&mut self, arm: &ArmModel, cfg: &IhcConfig, input: &ControlInput, target: &EePose, seed: &JointConfig) -> Vector6<f64> {
        let local = input.base.inverse() * target.to_isometry();
        let sol = ik_local_in_base(arm, &local, seed, cfg.ik_iterations, cfg.ik_damping);
        let q_des = if sol.converged {
            sol.q
        } else {
            self.ik_failures += 1;
            self.q_des.unwrap_or(sol.q)
        };
        self.q_des = Some(q_des);
        let p = arm.ee_in_base(&input.q).translation.vector;
        let induced = induced_ee_velocity(&input.base_linear, &input.base_angular, &p);
        let ff = feedforward_term(arm, &input.q, &induced);
        if ff.damped {
            self.ff_damped += 1;
        }
        self.f3b.step(&q_des, &input.q, &ff.rates, cfg.arm_dt())
    }
}

/// Path-following controller over a planned coordinated path.
#[derive(Clone, Debug)]
pub struct IhcController {
    pub config: IhcConfig,
    arm: ArmModel,
    states: Vec<PathState>,
    configs: Vec<JointConfig>,
    timestep: f64,
    path: BasePath,
    mpc: Mpc,
    arm_loop: ArmLoop,
    tick: usize,
    progress: f64,
    base_cmd: BaseCommand,
}

impl IhcController {
    pub fn new(arm: ArmModel, states: Vec<PathState>, configs: Vec<JointConfig>, timestep: f64, config: IhcConfig) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::Contract("controller needs a non-empty path".into()));
        }
        if states.len() != configs.len() {
            return Err(Error::LengthMismatch {
                states: states.len(),
                configs: configs.len(),
            });
        }
        config.validate()?;
        let path = BasePath::from_poses(&states.iter().map(|s| s.base).collect::<Vec<_>>())?;
        Ok(Self {
            mpc: Mpc::new(config.mpc),
            arm_loop: ArmLoop::new(config.gains),
            config,
            arm,
            states,
            configs,
            timestep,
            path,
            tick: 0,
            progress: 0.0,
            base_cmd: BaseCommand::default(),
        })
    }

    /// Fractional waypoint index of the current reference.
    pub fn progress(&self) -> f64 {
        self.progress
    }

    pub fn finished(&self) -> bool {
        self.progress >= (self.states.len() - 1) as f64
    }

    pub fn ik_failures(&self) -> usize {
        self.arm_loop.ik_failures
    }

    pub fn damped_feedforward_ticks(&self) -> usize {
        self.arm_loop.ff_damped
    }

    pub fn last_q_des(&self) -> Option<JointConfig> {
        self.arm_loop.q_des
    }

    /// Reference end-effector pose and seed configuration at `progress`.
    pub fn reference(&self, progress: f64) -> (EePose, JointConfig) {
        let last = self.states.len() - 1;
        let p = progress.clamp(0.0, last as f64);
        let i = (p.floor() as usize).min(last);
        let j = (i + 1).min(last);
        let f = p - i as f64;
        let ee = interpolate_pose(&self.states[i].ee, &self.states[j].ee, f);
        let (qi, qj) = (&self.configs[i], &self.configs[j]);
        let seed = if qi.max_abs_diff(qj) < 0.5 {
            JointConfig(qi.0.lerp(&qj.0, f))
        } else if f < 0.5 {
            *qi
        } else {
            *qj
        };
        (ee, seed)
    }

    pub fn step(&mut self, input: &ControlInput) -> ControlCommand {
        let last = (self.states.len() - 1) as f64;
        let t = input.base.translation.vector;
        let here = nalgebra::Vector2::new(t.x, t.y);
        let (s_proj, idx_proj) = self.path.project(&here);
        let by_time = input.t / self.timestep;
        self.progress = by_time.min(idx_proj + 1.0).max(self.progress).min(last);

        if self.tick % self.config.base_period() == 0 {
            let i = (by_time.floor() as usize).min(self.states.len() - 1);
            let j = (i + 1).min(self.states.len() - 1);
            let seg = self.path.arc_length_at(j) - self.path.arc_length_at(i);
            let f = (by_time - i as f64).clamp(0.0, 1.0);
            let s_time = self.path.arc_length_at(i) + f * seg;
            let v_ref = seg / self.timestep + self.config.schedule_gain * (s_time - s_proj);
            let yaw = {
                let x = input.base.rotation * Vector3::x();
                x.y.atan2(x.x)
            };
            let pose = crate::kinematics::BasePose::new(t.x, t.y, yaw);
            self.base_cmd = self.mpc.step(&self.path, &pose, v_ref);
        }
        self.tick += 1;

        let (target, seed) = self.reference(self.progress);
        let joint_rates = self.arm_loop.command(&self.arm, &self.config, input, &target, &seed);
        ControlCommand {
            joint_rates,
            base: self.base_cmd,
        }
    }
}

/// Holds a fixed global end-effector pose while the base follows an
/// open-loop yaw oscillation `amplitude * sin(2 pi t / period)`.
#[derive(Clone, Debug)]
pub struct HoldController {
    pub config: IhcConfig,
    arm: ArmModel,
    target: EePose,
    amplitude: f64,
    period: f64,
    arm_loop: ArmLoop,
}

impl HoldController {
    pub fn new(arm: ArmModel, target: EePose, amplitude: f64, period: f64, config: IhcConfig) -> Result<Self> {
        config.validate()?;
        if !(period > 0.0) {
            return Err(Error::validation("swing.period", "must be > 0"));
        }
        Ok(Self {
            arm_loop: ArmLoop::new(config.gains),
            config,
            arm,
            target,
            amplitude,
            period,
        })
    }

    pub fn ik_failures(&self) -> usize {
        self.arm_loop.ik_failures
    }

    pub fn step(&mut self, input: &ControlInput) -> ControlCommand {
        let omega = self.amplitude * (std::f64::consts::TAU * input.t / self.period).sin();
        let seed = self.arm_loop.q_des.unwrap_or(input.q);
        let joint_rates = self.arm_loop.command(&self.arm, &self.config, input, &self.target.clone(), &seed);
        ControlCommand {
            joint_rates,
            base: BaseCommand { v: 0.0, omega },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::BasePose;

    #[test]
    fn fixpoint_gives_zero_command() {
        let arm = ArmModel::desk_default();
        let q = JointConfig::new([0.2, 0.5, 1.2, 0.3, 0.7, -0.2]);
        let base = BasePose::new(0.5, 0.2, 0.3);
        let s = PathState::new(arm.forward_kinematics(&base, &q).unwrap(), base);
        let mut c = IhcController::new(arm, vec![s; 5], vec![q; 5], 0.2, IhcConfig::default()).unwrap();
        let input = ControlInput {
            t: 0.0,
            base: base.to_isometry(),
            q,
            base_linear: Vector3::zeros(),
            base_angular: Vector3::zeros(),
        };
        for k in 0..10 {
            let cmd = c.step(&ControlInput { t: k as f64 * 0.01, ..input });
            assert!(cmd.joint_rates.norm() < 1e-6, "{cmd:?}");
            assert!(cmd.base.v.abs() < 1e-6 && cmd.base.omega.abs() < 1e-6, "{cmd:?}");
        }
    }

    #[test]
    fn displaced_base_moves_ee_back() {
        let arm = ArmModel::desk_default();
        let q = JointConfig::new([0.0, 0.6, 1.2, 0.0, 0.6, 0.0]);
        let base = BasePose::default();
        let ee = arm.forward_kinematics(&base, &q).unwrap();
        let mut c = HoldController::new(arm.clone(), ee, 0.0, 10.0, IhcConfig::default()).unwrap();
        // base pushed forward by 2 cm: the arm must pull the end-effector back along -x
        let shifted = Isometry3::translation(0.02, 0.0, 0.0);
        let cmd = c.step(&ControlInput {
            t: 0.0,
            base: shifted,
            q,
            base_linear: Vector3::zeros(),
            base_angular: Vector3::zeros(),
        });
        let v = arm.jacobian_unchecked(&q) * cmd.joint_rates;
        assert!(v.x < 0.0, "{v:?}");
    }
}
