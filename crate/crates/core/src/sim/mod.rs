//! Deterministic kinematic simulation of the tracked base and arm.

pub mod metrics;
pub mod task;
pub mod terrain;

pub use metrics::{compute_metrics, RunMetrics};
pub use task::{evaluate_task, HoldTolerance, PoseHold, TaskOutcome, TaskSample, TaskSpec};
pub use terrain::{Bump, Lift, Terrain};

use crate::control::{BaseCommand, ControlCommand, ControlInput, Controller};
use crate::error::{Error, Result};
use crate::kinematics::{wrap_angle, ArmModel, BasePose, EePose, JointConfig};
use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Actuator limits applied by the plant regardless of what is commanded.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimLimits {
    pub v_max: f64,
    pub omega_max: f64,
    pub joint_rate_limit: f64,
}

impl Default for SimLimits {
    fn default() -> Self {
        Self {
            v_max: 0.5,
            omega_max: 1.0,
            joint_rate_limit: 2.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RobotState {
    pub t: f64,
    pub base: BasePose,
    pub lift: Lift,
    pub q: JointConfig,
    pub base_twist: BaseCommand,
    pub joint_rates: Vector6<f64>,
}

impl RobotState {
    pub fn new(base: BasePose, q: JointConfig) -> Self {
        Self {
            base,
            q,
            ..Self::default()
        }
    }

    /// Spatial base pose including the lift.
    pub fn base_isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(
            Translation3::new(self.base.x, self.base.y, self.lift.z),
            UnitQuaternion::from_euler_angles(self.lift.roll, self.lift.pitch, self.base.yaw()),
        )
    }

    pub fn ee(&self, arm: &ArmModel) -> EePose {
        EePose::from_isometry(&(self.base_isometry() * arm.ee_in_base(&self.q)))
    }
}

/// Body-frame twist taking `prev` to `cur` over `dt`.
pub fn body_twist(prev: &Isometry3<f64>, cur: &Isometry3<f64>, dt: f64) -> (Vector3<f64>, Vector3<f64>) {
    let d = prev.inverse() * cur;
    (d.translation.vector / dt, d.rotation.scaled_axis() / dt)
}

#[derive(Clone, Debug)]
pub struct World {
    pub arm: ArmModel,
    pub terrain: Terrain,
    pub limits: SimLimits,
    rng: ChaCha8Rng,
    noise: [f64; 3],
    clamp_events: usize,
}

impl World {
    pub fn new(arm: ArmModel, terrain: Terrain, limits: SimLimits, seed: u64) -> Result<Self> {
        arm.validate()?;
        terrain.validate()?;
        Ok(Self {
            arm,
            terrain,
            limits,
            rng: ChaCha8Rng::seed_from_u64(seed),
            noise: [0.0; 3],
            clamp_events: 0,
        })
    }

    /// Steps where the raw disturbance had to be clamped to the terrain bounds.
    pub fn clamp_events(&self) -> usize {
        self.clamp_events
    }

    /// Lift at `base` with the current noise, clamped to the bounds.
    pub fn lift_at(&mut self, base: &BasePose) -> Lift {
        let raw = self.terrain.lift(base).as_array();
        let mut sum = [0.0; 3];
        for k in 0..3 {
            sum[k] = raw[k] + self.noise[k];
        }
        let (lift, clamped) = self.terrain.clamp(Lift::from_array(sum));
        if clamped {
            self.clamp_events += 1;
        }
        assert!(self.terrain.within_bounds(&lift), "lift escaped terrain bounds");
        lift
    }

    fn advance_noise(&mut self, dt: f64) {
        let alpha = (-std::f64::consts::TAU * self.terrain.noise_cutoff * dt).exp();
        // input spread chosen so the stationary std equals the configured value
        let gain = 3f64.sqrt() * ((1.0 + alpha) / (1.0 - alpha)).sqrt();
        for k in 0..3 {
            let u: f64 = self.rng.gen_range(-1.0..=1.0);
            self.noise[k] = alpha * self.noise[k] + (1.0 - alpha) * gain * self.terrain.noise[k] * u;
        }
    }

    pub fn step(&mut self, s: &RobotState, cmd: &ControlCommand, dt: f64) -> Result<RobotState> {
        if !(dt > 0.0) {
            return Err(Error::validation("dt", "must be > 0"));
        }
        let l = self.limits;
        let v = cmd.base.v.clamp(-l.v_max, l.v_max);
        let omega = cmd.base.omega.clamp(-l.omega_max, l.omega_max);
        let yaw = s.base.yaw();
        let base = BasePose::new(s.base.x + v * yaw.cos() * dt, s.base.y + v * yaw.sin() * dt, wrap_angle(yaw + omega * dt));
        self.advance_noise(dt);
        let lift = self.lift_at(&base);
        let rates = cmd.joint_rates.map(|r| r.clamp(-l.joint_rate_limit, l.joint_rate_limit));
        let q = self.arm.clamp_to_limits(&JointConfig(s.q.0 + rates * dt));
        Ok(RobotState {
            t: s.t + dt,
            base,
            lift,
            q,
            base_twist: BaseCommand { v, omega },
            joint_rates: (q.0 - s.q.0) / dt,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimOptions {
    pub dt: f64,
    pub max_duration: f64,
    /// Time simulated after the controller reports completion.
    pub settle: f64,
    /// Ticks between base twist measurements; the twist is averaged over
    /// that period and held in between.
    pub twist_period: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            dt: 0.01,
            max_duration: 120.0,
            settle: 1.0,
            twist_period: 5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogSample {
    pub state: RobotState,
    pub ee: EePose,
    pub progress: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SimLog {
    pub dt: f64,
    pub samples: Vec<LogSample>,
    pub clamp_events: usize,
    pub ik_failures: usize,
}

pub const CSV_HEADER: &str = "t,base_x,base_y,base_yaw,base_z,base_roll,base_pitch,q1,q2,q3,q4,q5,q6,ee_x,ee_y,ee_z,ee_R,ee_P,ee_Y";

impl SimLog {
    pub fn ee_poses(&self) -> Vec<EePose> {
        self.samples.iter().map(|s| s.ee).collect()
    }

    pub fn task_samples(&self) -> Vec<TaskSample> {
        self.samples
            .iter()
            .map(|s| TaskSample {
                t: s.state.t,
                progress: s.progress,
                ee: s.ee,
            })
            .collect()
    }

    pub fn metrics(&self) -> Result<RunMetrics> {
        compute_metrics(&self.ee_poses(), self.dt)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for s in &self.samples {
            let st = &s.state;
            let mut row = vec![st.t, st.base.x, st.base.y, st.base.yaw(), st.lift.z, st.lift.roll, st.lift.pitch];
            row.extend(st.q.0.iter());
            row.extend(s.ee.to_vector().iter());
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// Runs `controller` from `initial` until it finishes and settles or the
/// time budget runs out. The initial lift is taken from the terrain.
pub fn simulate(world: &mut World, controller: &mut dyn Controller, initial: RobotState, opts: &SimOptions) -> Result<SimLog> {
    if !(opts.dt > 0.0 && opts.max_duration > 0.0) {
        return Err(Error::validation("sim.dt", "dt and max_duration must be > 0"));
    }
    if opts.twist_period == 0 {
        return Err(Error::validation("sim.twist_period", "must be >= 1"));
    }
    let mut state = initial;
    state.lift = world.lift_at(&state.base);
    let mut log = SimLog {
        dt: opts.dt,
        ..SimLog::default()
    };
    let mut prev = state.base_isometry();
    let mut twist = (Vector3::zeros(), Vector3::zeros());
    let mut finished_at: Option<f64> = None;
    let steps = (opts.max_duration / opts.dt).round() as usize;
    for k in 0..=steps {
        let iso = state.base_isometry();
        if k > 0 && k % opts.twist_period == 0 {
            twist = body_twist(&prev, &iso, opts.dt * opts.twist_period as f64);
            prev = iso;
        }
        let (lin, ang) = twist;
        let input = ControlInput {
            t: state.t,
            base: iso,
            q: state.q,
            base_linear: lin,
            base_angular: ang,
        };
        let cmd = controller.command(&input);
        log.samples.push(LogSample {
            state,
            ee: state.ee(&world.arm),
            progress: controller.progress(),
        });
        if controller.finished() {
            let t0 = *finished_at.get_or_insert(state.t);
            if state.t - t0 >= opts.settle - 1e-9 {
                break;
            }
        }
        if k == steps {
            break;
        }
        state = world.step(&state, &cmd, opts.dt)?;
    }
    log.clamp_events = world.clamp_events();
    log.ik_failures = controller.ik_failures();
    Ok(log)
}
