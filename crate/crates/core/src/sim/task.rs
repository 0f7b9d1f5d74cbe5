//! Simulated task success checks. Tolerances are artifact definitions.

use crate::error::{Error, Result};
use crate::kinematics::EePose;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HoldTolerance {
    pub position: f64,
    pub orientation: f64,
    /// Required contiguous dwell, s.
    pub dwell: f64,
}

impl Default for HoldTolerance {
    fn default() -> Self {
        Self {
            position: 0.02,
            orientation: 0.05,
            dwell: 0.3,
        }
    }
}

/// A pose to be held while progress lies in `window` (inclusive waypoint indices).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseHold {
    /// `[x, y, z, roll, pitch, yaw]`.
    pub pose: [f64; 6],
    pub window: [usize; 2],
    #[serde(default)]
    pub tolerance: HoldTolerance,
}

impl PoseHold {
    pub fn ee(&self) -> EePose {
        let p = self.pose;
        EePose::from_parts(p[0], p[1], p[2], p[3], p[4], p[5])
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskSpec {
    Grasp {
        target: PoseHold,
    },
    Inspection {
        viewpoints: Vec<PoseHold>,
    },
    Transport {
        /// Largest allowed angle from the reference orientation, rad.
        max_orientation_deviation: f64,
        /// Defaults to the first logged orientation.
        #[serde(default)]
        reference_rpy: Option<[f64; 3]>,
    },
    /// Fixed end-effector pose under periodic base yaw.
    Swing {
        #[serde(default = "default_swing_amplitude")]
        amplitude: f64,
        #[serde(default = "default_swing_period")]
        period: f64,
        #[serde(default = "default_swing_duration")]
        duration: f64,
    },
    #[default]
    None,
}

fn default_swing_amplitude() -> f64 {
    0.2
}
fn default_swing_period() -> f64 {
    10.0
}
fn default_swing_duration() -> f64 {
    15.0
}

impl TaskSpec {
    pub fn name(&self) -> &'static str {
        match self {
            TaskSpec::Grasp { .. } => "grasp",
            TaskSpec::Inspection { .. } => "inspection",
            TaskSpec::Transport { .. } => "transport",
            TaskSpec::Swing { .. } => "swing",
            TaskSpec::None => "none",
        }
    }

    /// Fixed-pose windows the planner must honour.
    pub fn holds(&self) -> Vec<&PoseHold> {
        match self {
            TaskSpec::Grasp { target } => vec![target],
            TaskSpec::Inspection { viewpoints } => viewpoints.iter().collect(),
            _ => Vec::new(),
        }
    }

    pub fn holds_mut(&mut self) -> Vec<&mut PoseHold> {
        match self {
            TaskSpec::Grasp { target } => vec![target],
            TaskSpec::Inspection { viewpoints } => viewpoints.iter_mut().collect(),
            _ => Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for h in self.holds() {
            if h.window[0] > h.window[1] {
                return Err(Error::validation("task.window", "start must not exceed end"));
            }
            let t = h.tolerance;
            if !(t.position > 0.0 && t.orientation > 0.0 && t.dwell >= 0.0) {
                return Err(Error::validation("task.tolerance", "tolerances must be positive"));
            }
        }
        match self {
            TaskSpec::Transport { max_orientation_deviation, .. } if !(*max_orientation_deviation > 0.0) => {
                Err(Error::validation("task.max_orientation_deviation", "must be > 0"))
            }
            TaskSpec::Swing { period, duration, amplitude } if !(*period > 0.0 && *duration > 0.0 && amplitude.is_finite()) => {
                Err(Error::validation("task.period", "swing period and duration must be > 0"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskOutcome {
    pub success: bool,
    pub reason: String,
}

impl TaskOutcome {
    fn pass(reason: impl Into<String>) -> Self {
        Self { success: true, reason: reason.into() }
    }
    fn fail(reason: impl Into<String>) -> Self {
        Self { success: false, reason: reason.into() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TaskSample {
    pub t: f64,
    /// Fractional waypoint index of the reference at this sample.
    pub progress: f64,
    pub ee: EePose,
}

/// Longest contiguous in-tolerance dwell inside the window, or `None` if the
/// pose is never reached there.
pub fn longest_dwell(hold: &PoseHold, samples: &[TaskSample]) -> Option<f64> {
    let target = hold.ee();
    let tol = hold.tolerance;
    let (lo, hi) = (hold.window[0] as f64, hold.window[1] as f64);
    let mut best: Option<f64> = None;
    let mut start: Option<f64> = None;
    for s in samples {
        let ok = s.progress >= lo
            && s.progress <= hi
            && (s.ee.position - target.position).norm() <= tol.position
            && s.ee.angular_distance(&target) <= tol.orientation;
        if ok {
            let t0 = *start.get_or_insert(s.t);
            best = Some(best.unwrap_or(0.0).max(s.t - t0));
        } else {
            start = None;
        }
    }
    best
}

fn check_hold(hold: &PoseHold, samples: &[TaskSample], label: &str) -> TaskOutcome {
    match longest_dwell(hold, samples) {
        None => TaskOutcome::fail(format!("{label}pose never reached")),
        Some(d) if d + 1e-9 < hold.tolerance.dwell => {
            TaskOutcome::fail(format!("{label}dwell {d:.3} s shorter than {:.3} s", hold.tolerance.dwell))
        }
        Some(d) => TaskOutcome::pass(format!("{label}held for {d:.3} s")),
    }
}

pub fn evaluate_task(spec: &TaskSpec, samples: &[TaskSample]) -> TaskOutcome {
    match spec {
        TaskSpec::Grasp { target } => check_hold(target, samples, ""),
        TaskSpec::Inspection { viewpoints } => {
            for (i, v) in viewpoints.iter().enumerate() {
                let o = check_hold(v, samples, &format!("viewpoint {i}: "));
                if !o.success {
                    return o;
                }
            }
            TaskOutcome::pass(format!("{} viewpoints held", viewpoints.len()))
        }
        TaskSpec::Transport {
            max_orientation_deviation,
            reference_rpy,
        } => {
            let Some(first) = samples.first() else {
                return TaskOutcome::fail("empty trajectory");
            };
            let reference = match reference_rpy {
                Some(r) => EePose::from_parts(0.0, 0.0, 0.0, r[0], r[1], r[2]),
                None => first.ee,
            };
            let worst = samples.iter().map(|s| s.ee.angular_distance(&reference)).fold(0.0, f64::max);
            if worst <= *max_orientation_deviation {
                TaskOutcome::pass(format!("max orientation deviation {worst:.4} rad"))
            } else {
                TaskOutcome::fail(format!("orientation deviation {worst:.4} rad exceeds {max_orientation_deviation:.4}"))
            }
        }
        TaskSpec::Swing { .. } | TaskSpec::None => TaskOutcome::pass("no success criterion"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hold() -> PoseHold {
        PoseHold {
            pose: [0.5, 0.0, 0.4, 0.0, 1.0, 0.0],
            window: [10, 14],
            tolerance: HoldTolerance::default(),
        }
    }

    fn trace(inside: usize) -> Vec<TaskSample> {
        let far = EePose::from_parts(0.9, 0.0, 0.4, 0.0, 1.0, 0.0);
        (0..100)
            .map(|i| TaskSample {
                t: i as f64 * 0.01,
                progress: 12.0,
                ee: if (20..20 + inside).contains(&i) { hold().ee() } else { far },
            })
            .collect()
    }

    #[test]
    fn dwell_boundaries() {
        let spec = TaskSpec::Grasp { target: hold() };
        // n contiguous samples at 100 Hz span (n - 1) * 10 ms
        assert!(!evaluate_task(&spec, &trace(30)).success);
        assert!(evaluate_task(&spec, &trace(32)).success);
        let miss = evaluate_task(&spec, &trace(0));
        assert_eq!(miss.reason, "pose never reached");
    }

    #[test]
    fn outside_window_does_not_count() {
        let mut s = trace(60);
        for x in &mut s {
            x.progress = 3.0;
        }
        assert!(!evaluate_task(&TaskSpec::Grasp { target: hold() }, &s).success);
    }

    #[test]
    fn task_kind_parsing() {
        let t: TaskSpec = toml::from_str("kind = \"transport\"\nmax_orientation_deviation = 0.1").unwrap();
        assert_eq!(t.name(), "transport");
        assert!(toml::from_str::<TaskSpec>("kind = \"juggle\"").is_err());
        assert!(toml::from_str::<TaskSpec>("kind = \"transport\"\nmax_orientation_deviation = 0.1\nbogus = 1").is_err());
    }
}
