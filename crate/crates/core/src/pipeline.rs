//! End-to-end orchestration: initial path, avoidance, optimization,
//! interpolation, re-check and closed-loop simulation.

use crate::avoidance::{resync_configs, run_avoidance, sample_centerline_at, AvoidanceConfig, AvoidanceOutcome, WaypointStatus};
use crate::control::{F3bGains, HoldController, IhcController};
use crate::costs::obstacle_terms;
use crate::error::{Error, Result};
use crate::esdf::EsdfGrid;
use crate::interpolation::{run_interpolation, InterpolationOutput};
use crate::kinematics::{elbow_up, ik_enumerate, ArmModel, BasePose, JointConfig, PathState};
use crate::optimizer::{Problem, SolveReport};
use crate::scenario::{JointMode, Scenario};
use crate::sim::{evaluate_task, simulate, RobotState, RunMetrics, SimLog, SimOptions, TaskSpec, World};
use nalgebra::{Vector2, Vector3};
use serde::Serialize;
use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

/// Overrides applied on top of a scenario file.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RunFlags {
    pub seed: Option<u64>,
    pub strict_alg1: bool,
    pub raw_displacement: bool,
}

impl RunFlags {
    pub fn apply(&self, scn: &mut Scenario) {
        if let Some(seed) = self.seed {
            scn.seed = seed;
        }
        if self.strict_alg1 {
            scn.avoidance.strict = true;
        }
        if self.raw_displacement {
            scn.costs.displacement = crate::costs::Displacement::Raw;
        }
    }
}

fn mode_branch_config(arm: &ArmModel, base: &BasePose, ee: &crate::kinematics::EePose, want_up: bool, near: Option<&JointConfig>) -> Option<JointConfig> {
    let sols = ik_enumerate(arm, base, ee);
    let mut cands: Vec<_> = sols.iter().filter(|s| !s.shoulder_back() && elbow_up(arm, &s.q) == want_up).collect();
    if cands.is_empty() {
        cands = sols.iter().collect();
    }
    match near {
        Some(q0) => cands.into_iter().min_by(|a, b| a.q.max_abs_diff(q0).total_cmp(&b.q.max_abs_diff(q0))).map(|s| s.q),
        None => cands.first().map(|s| s.q),
    }
}

/// Straight-line base waypoints carrying a constant arm configuration, with
/// the fixed-pose windows overwritten by their desired poses.
pub fn initial_path(scn: &Scenario, arm: &ArmModel) -> Result<(Vec<PathState>, Vec<JointConfig>)> {
    let pts = scn.path.resample();
    let n = pts.len();
    let yaw_at = |i: usize| {
        let (a, b) = if i + 1 < n { (pts[i], pts[i + 1]) } else { (pts[i.saturating_sub(1)], pts[i]) };
        let d: Vector2<f64> = b - a;
        if d.norm() < 1e-12 {
            0.0
        } else {
            d.y.atan2(d.x)
        }
    };
    let bases: Vec<BasePose> = (0..n).map(|i| BasePose::new(pts[i].x, pts[i].y, yaw_at(i))).collect();
    let want_up = scn.path.joint_mode != JointMode::ElbowDown;
    let mut configs = match scn.path.joint_mode {
        JointMode::Explicit => {
            if scn.path.explicit.len() != n {
                return Err(Error::validation(
                    "path.explicit",
                    format!("{} configurations given for {n} waypoints", scn.path.explicit.len()),
                ));
            }
            scn.path.explicit.iter().map(|q| JointConfig::new(*q)).collect()
        }
        _ => {
            let q = mode_branch_config(arm, &BasePose::default(), &scn.path.ee_in_base(), want_up, None)
                .ok_or_else(|| Error::validation("path.ee_in_base", "pose is out of reach"))?;
            vec![q; n]
        }
    };
    let mut states = Vec::with_capacity(n);
    for (b, q) in bases.iter().zip(&configs) {
        states.push(PathState::new(arm.forward_kinematics(b, q)?, *b));
    }
    for hold in scn.task.holds() {
        let [s, t] = hold.window;
        if t >= n {
            return Err(Error::validation("task.window", format!("window end {t} beyond {n} waypoints")));
        }
        for i in s..=t {
            states[i].ee = hold.ee();
            if let Some(q) = mode_branch_config(arm, &states[i].base, &hold.ee(), want_up, Some(&configs[i])) {
                configs[i] = q;
            }
        }
    }
    Ok((states, configs))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct AvoidanceSummary {
    pub checked: usize,
    pub all_safe: usize,
    pub reconfigured: usize,
    pub needs_optimization: usize,
}

impl AvoidanceSummary {
    pub fn of(o: &AvoidanceOutcome) -> Self {
        let mut s = Self::default();
        for st in &o.statuses {
            match st {
                WaypointStatus::AllSafe => s.all_safe += 1,
                WaypointStatus::Reconfigured(_) => s.reconfigured += 1,
                WaypointStatus::NeedsOptimization => s.needs_optimization += 1,
                WaypointStatus::NotChecked => continue,
            }
            s.checked += 1;
        }
        s
    }
}

#[derive(Clone, Debug)]
pub struct PlanOutput {
    pub initial_states: Vec<PathState>,
    pub initial_configs: Vec<JointConfig>,
    /// Avoidance before the first solve, then after each round.
    pub avoidance: Vec<AvoidanceSummary>,
    pub obstacle_waypoints: Vec<usize>,
    pub solves: Vec<SolveReport>,
    pub states: Vec<PathState>,
    pub configs: Vec<JointConfig>,
    /// Waypoints where no IK solution was found after the last solve.
    pub unresolved: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct DensifiedPlan {
    pub interpolation: InterpolationOutput,
    pub recheck: Option<AvoidanceSummary>,
    /// Task with windows moved to the densified indices.
    pub task: TaskSpec,
}

pub fn avoidance_config(scn: &Scenario) -> AvoidanceConfig {
    let mut cfg = scn.avoidance.clone();
    cfg.chassis_height = scn.costs.chassis_height;
    cfg.ee_exempt.extend(scn.task.holds().iter().map(|h| (h.window[0], h.window[1])));
    cfg
}

/// FK init, avoidance and the optimize/resync/avoid rounds.
pub fn plan(scn: &Scenario, arm: &ArmModel, esdf: Option<Arc<EsdfGrid>>) -> Result<PlanOutput> {
    let (states0, configs0) = initial_path(scn, arm).map_err(|e| e.in_stage("fk_init"))?;
    let avoid_cfg = avoidance_config(scn);
    let avoid = |states: &[PathState], configs: &[JointConfig]| -> Result<Option<AvoidanceOutcome>> {
        match &esdf {
            Some(g) => run_avoidance(states, configs, arm, g, &avoid_cfg).map(Some).map_err(|e| e.in_stage("avoidance")),
            None => Ok(None),
        }
    };
    let mut out = PlanOutput {
        initial_states: states0.clone(),
        initial_configs: configs0.clone(),
        avoidance: Vec::new(),
        obstacle_waypoints: Vec::new(),
        solves: Vec::new(),
        states: states0,
        configs: configs0,
        unresolved: Vec::new(),
    };
    let mut marked = BTreeSet::new();
    if let Some(o) = avoid(&out.states, &out.configs)? {
        out.avoidance.push(AvoidanceSummary::of(&o));
        marked.extend(o.needs_optimization());
        out.configs = o.configs;
    }
    for _ in 0..scn.pipeline.rounds {
        let n = out.states.len();
        let mut problem = Problem::standard(arm.clone(), &out.states, scn.costs).map_err(|e| e.in_stage("optimize"))?;
        if let Some(g) = &esdf {
            problem = problem.with_esdf(g.clone());
            for &i in &marked {
                problem.add_terms(obstacle_terms(i, n, &scn.costs.weights)).map_err(|e| e.in_stage("optimize"))?;
            }
        }
        for h in scn.task.holds() {
            problem.fix_ee_window(&h.ee(), h.window[0], h.window[1]).map_err(|e| e.in_stage("optimize"))?;
        }
        let (states, report) = problem.solve(&scn.solver).map_err(|e| e.in_stage("optimize"))?;
        out.solves.push(report);
        let (configs, unresolved) = resync_configs(&states, &out.configs, arm).map_err(|e| e.in_stage("optimize"))?;
        out.states = states;
        out.configs = configs;
        out.unresolved = unresolved;
        let Some(o) = avoid(&out.states, &out.configs)? else {
            break;
        };
        out.avoidance.push(AvoidanceSummary::of(&o));
        let fresh: Vec<usize> = o.needs_optimization().into_iter().filter(|i| !marked.contains(i)).collect();
        let remaining = o.needs_optimization().len();
        out.configs = o.configs;
        if remaining == 0 || fresh.is_empty() && out.solves.len() > 1 {
            break;
        }
        marked.extend(fresh);
    }
    out.obstacle_waypoints = marked.into_iter().collect();
    Ok(out)
}

/// Interpolates abrupt reconfigurations and re-runs the avoidance check.
pub fn densify(scn: &Scenario, arm: &ArmModel, esdf: Option<&EsdfGrid>, plan: &PlanOutput) -> Result<DensifiedPlan> {
    let interp = run_interpolation(&plan.states, &plan.configs, arm, &scn.interpolation).map_err(|e| e.in_stage("interpolate"))?;
    let inserted = scn.interpolation.insertions + 1;
    let remap = |i: usize| i + inserted * interp.refined_segments.iter().filter(|&&j| j < i).count();
    let mut task = scn.task.clone();
    for h in task.holds_mut() {
        h.window = [remap(h.window[0]), remap(h.window[1])];
    }
    let recheck = match esdf {
        Some(g) => {
            let mut cfg = scn.avoidance.clone();
            cfg.chassis_height = scn.costs.chassis_height;
            cfg.ee_exempt = task.holds().iter().map(|h| (h.window[0], h.window[1])).collect();
            let o = run_avoidance(&interp.states, &interp.configs, arm, g, &cfg).map_err(|e| e.in_stage("recheck"))?;
            Some(AvoidanceSummary::of(&o))
        }
        None => None,
    };
    Ok(DensifiedPlan {
        interpolation: interp,
        recheck,
        task,
    })
}

/// Per-sample clearance of the simulated robot against any distance function.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClearanceReport {
    pub samples: usize,
    pub violations: usize,
    /// Smallest distance minus threshold over all probes.
    pub min_margin: f64,
    pub first_violation_t: Option<f64>,
}

impl ClearanceReport {
    pub fn collision_free(&self) -> bool {
        self.violations == 0
    }
}

/// `distance` returns `None` outside the mapped volume, which counts as a
/// violation. End-effector probes are skipped while progress is inside an
/// exempt window.
pub fn clearance_check(
    log: &SimLog,
    arm: &ArmModel,
    cfg: &AvoidanceConfig,
    exempt: &[(usize, usize)],
    distance: impl Fn(&Vector3<f64>) -> Option<f64>,
) -> ClearanceReport {
    let t = cfg.thresholds;
    let mut rep = ClearanceReport {
        samples: log.samples.len(),
        violations: 0,
        min_margin: f64::INFINITY,
        first_violation_t: None,
    };
    for s in &log.samples {
        let st = &s.state;
        let iso = st.base_isometry();
        let mut probes = vec![(Vector3::new(st.base.x, st.base.y, cfg.chassis_height), t.base)];
        let line = sample_centerline_at(arm, &iso, &st.q, cfg.samples_per_segment);
        let (ee, body) = line.split_last().expect("centerline has samples");
        probes.extend(body.iter().map(|p| (*p, t.arm)));
        let exempt_here = exempt.iter().any(|&(a, b)| s.progress >= a as f64 && s.progress <= b as f64);
        if !exempt_here {
            probes.push((*ee, t.ee));
        }
        let mut bad = false;
        for (p, thr) in probes {
            match distance(&p) {
                Some(d) => {
                    rep.min_margin = rep.min_margin.min(d - thr);
                    bad |= d <= thr;
                }
                None => bad = true,
            }
        }
        if bad {
            rep.violations += 1;
            rep.first_violation_t.get_or_insert(st.t);
        }
    }
    rep
}

pub fn esdf_distance(esdf: &EsdfGrid) -> impl Fn(&Vector3<f64>) -> Option<f64> + '_ {
    |p| {
        let s = esdf.sdf_dist(p);
        (!s.out_of_bounds).then_some(s.value)
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub plan: Option<PlanOutput>,
    pub densified: Option<DensifiedPlan>,
    pub log: SimLog,
    pub metrics: RunMetrics,
    pub clearance: Option<ClearanceReport>,
}

fn sim_options(scn: &Scenario, duration: Option<f64>) -> SimOptions {
    let mut o = scn.sim;
    if let Some(d) = duration {
        o.max_duration = d;
    }
    o
}

/// Initial joint configuration for a swing run: `ee_in_base` solved on the
/// scenario's elbow branch.
pub fn swing_start(scn: &Scenario, arm: &ArmModel) -> Result<(BasePose, JointConfig)> {
    let p = scn.path.waypoints[0];
    let base = BasePose::new(p[0], p[1], 0.0);
    let want_up = scn.path.joint_mode != JointMode::ElbowDown;
    let q = match scn.path.joint_mode {
        JointMode::Explicit => JointConfig::new(scn.path.explicit[0]),
        _ => mode_branch_config(arm, &BasePose::default(), &scn.path.ee_in_base(), want_up, None)
            .ok_or_else(|| Error::validation("path.ee_in_base", "pose is out of reach"))?,
    };
    Ok((base, q))
}

/// Holds the initial end-effector pose while the base swings in yaw.
pub fn run_swing(scn: &Scenario, arm: &ArmModel, gains: F3bGains) -> Result<SimLog> {
    let TaskSpec::Swing { amplitude, period, duration } = scn.task else {
        return Err(Error::validation("task.kind", "swing runs need a swing task"));
    };
    let (base, q) = swing_start(scn, arm)?;
    let mut world = World::new(arm.clone(), scn.terrain.clone(), scn.limits, scn.seed)?;
    let mut init = RobotState::new(base, q);
    init.lift = world.lift_at(&base);
    let mut cfg = scn.control;
    cfg.gains = gains;
    let mut ctrl = HoldController::new(arm.clone(), init.ee(arm), amplitude, period, cfg)?;
    simulate(&mut world, &mut ctrl, init, &sim_options(scn, Some(duration))).map_err(|e| e.in_stage("simulate"))
}

fn finish_metrics(log: &SimLog, task: &TaskSpec) -> Result<RunMetrics> {
    let mut m = log.metrics().map_err(|e| e.in_stage("metrics"))?;
    m.task = Some(evaluate_task(task, &log.task_samples()));
    Ok(m)
}

pub fn load_esdf(scn: &Scenario, base_dir: &Path) -> Result<Option<Arc<EsdfGrid>>> {
    match &scn.scene {
        Some(s) => Ok(Some(Arc::new(s.esdf(base_dir).map_err(|e| e.in_stage("scene"))?))),
        None => Ok(None),
    }
}

/// Closed-loop run of a densified plan under IHC, with task evaluation and
/// the clearance post-check.
pub fn simulate_plan(
    scn: &Scenario,
    arm: &ArmModel,
    esdf: Option<&EsdfGrid>,
    dense: &DensifiedPlan,
) -> Result<(SimLog, RunMetrics, Option<ClearanceReport>)> {
    let interp = &dense.interpolation;
    let mut ctrl = IhcController::new(arm.clone(), interp.states.clone(), interp.configs.clone(), scn.costs.timestep, scn.control)
        .map_err(|e| e.in_stage("simulate"))?;
    let mut world = World::new(arm.clone(), scn.terrain.clone(), scn.limits, scn.seed).map_err(|e| e.in_stage("simulate"))?;
    let init = RobotState::new(interp.states[0].base, interp.configs[0]);
    let log = simulate(&mut world, &mut ctrl, init, &sim_options(scn, None)).map_err(|e| e.in_stage("simulate"))?;
    let metrics = finish_metrics(&log, &dense.task)?;
    let clearance = esdf.map(|g| {
        let cfg = avoidance_config(scn);
        let exempt: Vec<(usize, usize)> = dense.task.holds().iter().map(|h| (h.window[0], h.window[1])).collect();
        clearance_check(&log, arm, &cfg, &exempt, esdf_distance(g))
    });
    Ok((log, metrics, clearance))
}

/// Swing run with the scenario's own gains.
pub fn simulate_swing(scn: &Scenario, arm: &ArmModel) -> Result<(SimLog, RunMetrics)> {
    let log = run_swing(scn, arm, scn.control.gains)?;
    let metrics = finish_metrics(&log, &scn.task)?;
    Ok((log, metrics))
}

/// Full pipeline; relative scene files resolve against `base_dir`.
pub fn run(scn: &Scenario, base_dir: &Path) -> Result<RunOutput> {
    let arm = scn.arm.build().map_err(|e| e.in_stage("setup"))?;
    if matches!(scn.task, TaskSpec::Swing { .. }) {
        let (log, metrics) = simulate_swing(scn, &arm)?;
        return Ok(RunOutput {
            plan: None,
            densified: None,
            log,
            metrics,
            clearance: None,
        });
    }
    let esdf = load_esdf(scn, base_dir)?;
    let planned = plan(scn, &arm, esdf.clone())?;
    let dense = densify(scn, &arm, esdf.as_deref(), &planned)?;
    let (log, metrics, clearance) = simulate_plan(scn, &arm, esdf.as_deref(), &dense)?;
    Ok(RunOutput {
        plan: Some(planned),
        densified: Some(dense),
        log,
        metrics,
        clearance,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AblationCell {
    pub feedforward: bool,
    pub kp: f64,
}

impl AblationCell {
    pub fn label(&self) -> String {
        format!("{}-P{}", if self.feedforward { "F3B" } else { "FB" }, self.kp)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationRow {
    pub cell: AblationCell,
    pub p_max: f64,
    pub v_mean: f64,
    pub v_max: f64,
    pub a_mean: f64,
    pub a_max: f64,
    /// `p_max` over the feedback-only row with the same gain, when present.
    pub p_max_ratio: Option<f64>,
}

/// The four cells {F3B, FB} x {P1, P3}.
pub fn default_cells() -> Vec<AblationCell> {
    let mut out = Vec::new();
    for feedforward in [true, false] {
        for kp in [3.0, 1.0] {
            out.push(AblationCell { feedforward, kp });
        }
    }
    out
}

pub fn ablation(scn: &Scenario, cells: &[AblationCell]) -> Result<Vec<AblationRow>> {
    let arm = scn.arm.build()?;
    let mut rows = Vec::with_capacity(cells.len());
    for cell in cells {
        let gains = F3bGains {
            kp: cell.kp,
            feedforward: cell.feedforward,
            ..scn.control.gains
        };
        let m = run_swing(scn, &arm, gains)?.metrics().map_err(|e| e.in_stage("metrics"))?;
        rows.push(AblationRow {
            cell: *cell,
            p_max: m.p_max,
            v_mean: m.v_mean,
            v_max: m.v_max,
            a_mean: m.a_mean,
            a_max: m.a_max,
            p_max_ratio: None,
        });
    }
    for i in 0..rows.len() {
        let base = rows.iter().find(|r| !r.cell.feedforward && r.cell.kp == rows[i].cell.kp).map(|r| r.p_max);
        rows[i].p_max_ratio = base.filter(|b| *b > 0.0).map(|b| rows[i].p_max / b);
    }
    Ok(rows)
}

pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mut s = String::from("cell,p_max,v_mean,v_max,a_mean,a_max,p_max_vs_fb\n");
    for r in rows {
        let ratio = r.p_max_ratio.map_or(String::from("-"), |v| format!("{v:.4}"));
        s.push_str(&format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{}\n",
            r.cell.label(),
            r.p_max,
            r.v_mean,
            r.v_max,
            r.a_mean,
            r.a_max,
            ratio
        ));
    }
    s
}
