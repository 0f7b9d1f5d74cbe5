//! Whole-body clearance checking over all IK branches of every waypoint.
//!
//! The body is reduced to points sampled along the shoulder→elbow→end-effector
//! centerline plus a single probe for the chassis. A waypoint whose branches
//! are all blocked is handed to the optimizer; one with some blocked branches
//! switches to the safe branch whose elbow best follows the field gradient.

use crate::error::{Error, Result};
use crate::esdf::EsdfGrid;
use crate::kinematics::{branch_of, ik::ik_local_in_base, ik_enumerate, ArmModel, BasePose, IkSolution, JointConfig, PathState};
use nalgebra::{Isometry3, Vector3};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClearanceThresholds {
    pub ee: f64,
    pub base: f64,
    pub arm: f64,
}

impl Default for ClearanceThresholds {
    fn default() -> Self {
        Self {
            ee: 0.05,
            base: 0.2,
            arm: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AvoidanceConfig {
    pub thresholds: ClearanceThresholds,
    pub samples_per_segment: usize,
    /// Height of the chassis probe point.
    pub chassis_height: f64,
    /// Stop at the first waypoint needing optimization.
    pub strict: bool,
    /// Inclusive waypoint windows where the end-effector clearance is not checked.
    pub ee_exempt: Vec<(usize, usize)>,
}

impl Default for AvoidanceConfig {
    fn default() -> Self {
        Self {
            thresholds: ClearanceThresholds::default(),
            samples_per_segment: 6,
            chassis_height: 0.2,
            strict: false,
            ee_exempt: Vec::new(),
        }
    }
}

impl AvoidanceConfig {
    pub fn validate(&self) -> Result<()> {
        let t = &self.thresholds;
        for (name, v) in [("ee", t.ee), ("base", t.base), ("arm", t.arm)] {
            if !(v > 0.0) {
                return Err(Error::validation(format!("avoidance.thresholds.{name}"), "must be > 0"));
            }
        }
        if self.samples_per_segment == 0 {
            return Err(Error::validation("avoidance.samples_per_segment", "must be >= 1"));
        }
        Ok(())
    }

    pub fn ee_exempt_at(&self, i: usize) -> bool {
        self.ee_exempt.iter().any(|(s, t)| (*s..=*t).contains(&i))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WaypointStatus {
    AllSafe,
    Reconfigured(JointConfig),
    NeedsOptimization,
    /// Not reached because a strict scan stopped earlier.
    NotChecked,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AvoidanceOutcome {
    pub statuses: Vec<WaypointStatus>,
    pub configs: Vec<JointConfig>,
}

impl AvoidanceOutcome {
    pub fn needs_optimization(&self) -> Vec<usize> {
        self.indices(|s| matches!(s, WaypointStatus::NeedsOptimization))
    }

    pub fn reconfigured(&self) -> Vec<usize> {
        self.indices(|s| matches!(s, WaypointStatus::Reconfigured(_)))
    }

    fn indices(&self, f: impl Fn(&WaypointStatus) -> bool) -> Vec<usize> {
        self.statuses
            .iter()
            .enumerate()
            .filter(|(_, s)| f(s))
            .map(|(i, _)| i)
            .collect()
    }
}

/// `2m + 1` points in the global frame: uniform on shoulder→elbow and
/// elbow→end-effector, shared elbow included once.
pub fn sample_centerline(arm: &ArmModel, base: &BasePose, q: &JointConfig, m: usize) -> Vec<Vector3<f64>> {
    sample_centerline_at(arm, &base.to_isometry(), q, m)
}

/// As [`sample_centerline`] for a spatial base pose.
pub fn sample_centerline_at(arm: &ArmModel, iso: &Isometry3<f64>, q: &JointConfig, m: usize) -> Vec<Vector3<f64>> {
    let m = m.max(1);
    let frames = arm.chain(q);
    let shoulder = iso * nalgebra::Point3::from(frames.shoulder);
    let elbow = iso * nalgebra::Point3::from(frames.elbow);
    let ee = iso * nalgebra::Point3::from(frames.ee.translation.vector);
    let mut out = Vec::with_capacity(2 * m + 1);
    for k in 0..=m {
        let f = k as f64 / m as f64;
        out.push(shoulder.coords.lerp(&elbow.coords, f));
    }
    for k in 1..=m {
        let f = k as f64 / m as f64;
        out.push(elbow.coords.lerp(&ee.coords, f));
    }
    out
}

fn clear(esdf: &EsdfGrid, p: &Vector3<f64>, threshold: f64) -> bool {
    let s = esdf.sdf_dist(p);
    !s.out_of_bounds && s.value > threshold
}

/// Clearance conjunction for one configuration. The last centerline sample is
/// the end-effector and is judged against the end-effector threshold (or not
/// at all when `ee_exempt`); every other sample against the arm threshold.
pub fn configuration_is_safe(
    arm: &ArmModel,
    base: &BasePose,
    q: &JointConfig,
    esdf: &EsdfGrid,
    config: &AvoidanceConfig,
    ee_exempt: bool,
) -> bool {
    let t = &config.thresholds;
    let probe = Vector3::new(base.x, base.y, config.chassis_height);
    if !clear(esdf, &probe, t.base) {
        return false;
    }
    let samples = sample_centerline(arm, base, q, config.samples_per_segment);
    let (ee, body) = samples.split_last().expect("centerline has samples");
    if !ee_exempt && !clear(esdf, ee, t.ee) {
        return false;
    }
    body.iter().all(|p| clear(esdf, p, t.arm))
}

#[derive(Clone, Debug, PartialEq)]
pub struct WaypointCheck {
    pub safe: Vec<IkSolution>,
    pub total: usize,
}

pub fn check_waypoint(
    state: &PathState,
    arm: &ArmModel,
    esdf: &EsdfGrid,
    config: &AvoidanceConfig,
    ee_exempt: bool,
) -> WaypointCheck {
    let all = ik_enumerate(arm, &state.base, &state.ee);
    let total = all.len();
    let safe = all
        .into_iter()
        .filter(|s| configuration_is_safe(arm, &state.base, &s.q, esdf, config, ee_exempt))
        .collect();
    WaypointCheck { safe, total }
}

/// Angle between the elbow direction (from the shoulder–end-effector midpoint)
/// and the field gradient at that midpoint.
pub fn elbow_gradient_angle(arm: &ArmModel, base: &BasePose, q: &JointConfig, esdf: &EsdfGrid) -> f64 {
    let frames = arm.chain(q);
    let iso = base.to_isometry();
    let shoulder = iso.transform_point(&frames.shoulder.into()).coords;
    let elbow = iso.transform_point(&frames.elbow.into()).coords;
    let ee = iso.transform_point(&frames.ee.translation.vector.into()).coords;
    let mid = (shoulder + ee) / 2.0;
    let n_k = elbow - mid;
    let n_o = esdf.sdf_grad(&mid).value;
    if n_k.norm() < 1e-12 || n_o.norm() < 1e-12 {
        return std::f64::consts::FRAC_PI_2;
    }
    n_k.angle(&n_o)
}

/// Safe configuration with the smallest elbow/gradient angle; ties within
/// `1e-12` go to the lowest branch index.
pub fn select_best_config(safe: &[IkSolution], arm: &ArmModel, base: &BasePose, esdf: &EsdfGrid) -> Result<IkSolution> {
    let mut sorted: Vec<&IkSolution> = safe.iter().collect();
    sorted.sort_by_key(|s| s.branch);
    let mut best: Option<(f64, &IkSolution)> = None;
    for s in sorted {
        let a = elbow_gradient_angle(arm, base, &s.q, esdf);
        match best {
            Some((b, _)) if a >= b - 1e-12 => {}
            _ => best = Some((a, s)),
        }
    }
    best.map(|(_, s)| *s)
        .ok_or_else(|| Error::Contract("best configuration requested from an empty safe set".into()))
}

/// Scans every waypoint. All-safe waypoints keep their configuration;
/// partially blocked ones switch to the best safe branch; fully blocked ones
/// are marked for optimization. A waypoint whose configuration is already the
/// best safe one is reported all-safe, so a second pass reconfigures nothing.
pub fn run_avoidance(
    states: &[PathState],
    configs: &[JointConfig],
    arm: &ArmModel,
    esdf: &EsdfGrid,
    config: &AvoidanceConfig,
) -> Result<AvoidanceOutcome> {
    if states.len() != configs.len() {
        return Err(Error::LengthMismatch {
            states: states.len(),
            configs: configs.len(),
        });
    }
    let mut out = AvoidanceOutcome {
        statuses: vec![WaypointStatus::NotChecked; states.len()],
        configs: configs.to_vec(),
    };
    for (i, state) in states.iter().enumerate() {
        let check = check_waypoint(state, arm, esdf, config, config.ee_exempt_at(i));
        if check.safe.is_empty() {
            out.statuses[i] = WaypointStatus::NeedsOptimization;
            if config.strict {
                break;
            }
            continue;
        }
        if check.safe.len() == check.total {
            out.statuses[i] = WaypointStatus::AllSafe;
            continue;
        }
        let best = select_best_config(&check.safe, arm, &state.base, esdf)?;
        if best.q.max_abs_diff(&configs[i]) < crate::kinematics::ik::DEDUP_TOL {
            out.statuses[i] = WaypointStatus::AllSafe;
        } else {
            out.statuses[i] = WaypointStatus::Reconfigured(best.q);
            out.configs[i] = best.q;
        }
    }
    Ok(out)
}

/// Re-solves joint configurations after the states moved, keeping each
/// waypoint on the branch of its previous configuration when possible and
/// otherwise taking the nearest solution. Unreachable waypoints fall back to
/// a local damped solve and are listed in the second return value.
pub fn resync_configs(states: &[PathState], previous: &[JointConfig], arm: &ArmModel) -> Result<(Vec<JointConfig>, Vec<usize>)> {
    if states.len() != previous.len() {
        return Err(Error::LengthMismatch {
            states: states.len(),
            configs: previous.len(),
        });
    }
    let mut out = Vec::with_capacity(states.len());
    let mut unresolved = Vec::new();
    for (i, (s, prev)) in states.iter().zip(previous).enumerate() {
        let sols = ik_enumerate(arm, &s.base, &s.ee);
        let branch = branch_of(arm, prev);
        let nearest = |it: &mut dyn Iterator<Item = &IkSolution>| {
            it.min_by(|a, b| a.q.max_abs_diff(prev).total_cmp(&b.q.max_abs_diff(prev)))
                .map(|s| s.q)
        };
        let pick = nearest(&mut sols.iter().filter(|x| x.branch == branch)).or_else(|| nearest(&mut sols.iter()));
        match pick {
            Some(q) => out.push(q),
            None => {
                let target: Isometry3<f64> = s.base.to_isometry().inverse() * s.ee.to_isometry();
                out.push(ik_local_in_base(arm, &target, prev, 200, 1e-2).q);
                unresolved.push(i);
            }
        }
    }
    Ok((out, unresolved))
}
