//! Run directories: manifest, CSV logs, metrics report and plots.

use crate::error::{Error, Result};
use crate::kinematics::{JointConfig, PathState};
use crate::optimizer::SolveReport;
use crate::pipeline::{self, ablation, ablation_table, default_cells, AvoidanceSummary, ClearanceReport, RunFlags};
use crate::scenario::Scenario;
use crate::sim::{RunMetrics, SimLog, TaskSpec};
use crate::svg::{line_plot, project3, Series};
use serde::Serialize;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

pub const FAILED_MARKER: &str = "FAILED";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verb {
    /// Stop after optimization.
    Plan,
    Run,
    Ablate,
}

#[derive(Serialize)]
struct Manifest<'a> {
    version: &'static str,
    verb: &'static str,
    seed: u64,
    scenario_file: String,
    strict_alg1: bool,
    raw_displacement: bool,
    scenario: &'a Scenario,
}

fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(dir.join(name), contents)?;
    Ok(())
}

fn to_toml<T: Serialize>(v: &T) -> Result<String> {
    toml::to_string(v).map_err(|e| Error::Contract(format!("serialization: {e}")))
}

pub fn planned_path_csv(states: &[PathState], configs: &[JointConfig], timestep: f64) -> String {
    let mut s = String::from("index,t,ee_x,ee_y,ee_z,ee_R,ee_P,ee_Y,base_x,base_y,base_yaw,q1,q2,q3,q4,q5,q6\n");
    for (i, (st, q)) in states.iter().zip(configs).enumerate() {
        let mut row = vec![i as f64 * timestep];
        row.extend(st.to_vector().iter());
        row.extend(q.0.iter());
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "{i},{}", cells.join(","));
    }
    s
}

#[derive(Serialize)]
struct MachineBlock<'a> {
    metrics: &'a RunMetrics,
    #[serde(skip_serializing_if = "Option::is_none")]
    clearance: Option<&'a ClearanceReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    avoidance: Vec<AvoidanceSummary>,
    samples: usize,
    ik_failures: usize,
    terrain_clamp_events: usize,
}

pub fn metrics_report(log: &SimLog, m: &RunMetrics, clearance: Option<&ClearanceReport>, avoidance: &[AvoidanceSummary]) -> Result<String> {
    let mut s = String::new();
    for (k, v) in [
        ("sigma_la", m.sigma_la),
        ("sigma_aa", m.sigma_aa),
        ("kappa_max", m.kappa_max),
        ("p_max", m.p_max),
        ("v_mean", m.v_mean),
        ("v_max", m.v_max),
        ("a_mean", m.a_mean),
        ("a_max", m.a_max),
    ] {
        let _ = writeln!(s, "{k} = {v:.6}");
    }
    if let Some(t) = &m.task {
        let _ = writeln!(s, "success = {}", t.success);
        let _ = writeln!(s, "reason = {}", t.reason);
    }
    if let Some(c) = clearance {
        let _ = writeln!(s, "collision_free = {}", c.collision_free());
        let _ = writeln!(s, "min_clearance_margin = {:.6}", c.min_margin);
    }
    let _ = writeln!(s, "ik_failures = {}", log.ik_failures);
    s.push_str("\n# machine-readable\n");
    s.push_str(&to_toml(&MachineBlock {
        metrics: m,
        clearance,
        avoidance: avoidance.to_vec(),
        samples: log.samples.len(),
        ik_failures: log.ik_failures,
        terrain_clamp_events: log.clamp_events,
    })?);
    Ok(s)
}

#[derive(Serialize)]
struct SolveReports<'a> {
    solve: &'a [SolveReport],
    obstacle_waypoints: &'a [usize],
    unresolved_waypoints: &'a [usize],
    avoidance: &'a [AvoidanceSummary],
}

fn plot_paths(dir: &Path, planned: &[PathState], log: Option<&SimLog>) -> Result<()> {
    let mut base = vec![Series {
        label: "planned base",
        color: "#1f77b4",
        points: planned.iter().map(|s| (s.base.x, s.base.y)).collect(),
    }];
    let mut ee = vec![Series {
        label: "planned end-effector",
        color: "#1f77b4",
        points: planned.iter().map(|s| project3(&s.ee.position)).collect(),
    }];
    if let Some(log) = log {
        base.push(Series {
            label: "executed base",
            color: "#d62728",
            points: log.samples.iter().map(|s| (s.state.base.x, s.state.base.y)).collect(),
        });
        ee.push(Series {
            label: "executed end-effector",
            color: "#d62728",
            points: log.samples.iter().map(|s| project3(&s.ee.position)).collect(),
        });
    }
    write(dir, "base_path.svg", line_plot("Base path (top view)", "x [m]", "y [m]", &base, true))?;
    write(dir, "ee_path.svg", line_plot("End-effector path (oblique view)", "", "", &ee, true))?;
    Ok(())
}

fn plot_series(dir: &Path, log: &SimLog) -> Result<()> {
    let n = log.samples.len();
    let mut speed = Vec::with_capacity(n);
    for i in 1..n.saturating_sub(1) {
        let (a, b) = (&log.samples[i - 1], &log.samples[i + 1]);
        speed.push((log.samples[i].state.t, (b.ee.position - a.ee.position).norm() / (2.0 * log.dt)));
    }
    let first = log.samples.first().map(|s| s.ee.position);
    let drift: Vec<(f64, f64)> = log
        .samples
        .iter()
        .map(|s| (s.state.t, first.map_or(0.0, |p| (s.ee.position - p).norm())))
        .collect();
    let series = [
        Series { label: "ee speed [m/s]", color: "#2ca02c", points: speed },
        Series { label: "ee distance from start [m]", color: "#9467bd", points: drift },
    ];
    write(dir, "metrics.svg", line_plot("End-effector time series", "t [s]", "", &series, false))
}

fn run_stages(verb: Verb, scn: &Scenario, base_dir: &Path, dir: &Path) -> Result<()> {
    let arm = scn.arm.build().map_err(|e| e.in_stage("setup"))?;
    if verb == Verb::Ablate {
        let rows = ablation(scn, &default_cells())?;
        return write(dir, "ablation.csv", ablation_table(&rows));
    }
    if matches!(scn.task, TaskSpec::Swing { .. }) {
        if verb == Verb::Plan {
            return Err(Error::validation("task.kind", "swing scenarios have nothing to plan"));
        }
        let (log, metrics) = pipeline::simulate_swing(scn, &arm)?;
        let mut csv = Vec::new();
        log.write_csv(&mut csv)?;
        write(dir, "trajectory.csv", csv)?;
        write(dir, "metrics.txt", metrics_report(&log, &metrics, None, &[])?)?;
        return plot_series(dir, &log);
    }
    let esdf = pipeline::load_esdf(scn, base_dir)?;
    let planned = pipeline::plan(scn, &arm, esdf.clone())?;
    write(
        dir,
        "solve_report.toml",
        to_toml(&SolveReports {
            solve: &planned.solves,
            obstacle_waypoints: &planned.obstacle_waypoints,
            unresolved_waypoints: &planned.unresolved,
            avoidance: &planned.avoidance,
        })?,
    )?;
    if verb == Verb::Plan {
        write(dir, "planned_path.csv", planned_path_csv(&planned.states, &planned.configs, scn.costs.timestep))?;
        return plot_paths(dir, &planned.states, None);
    }
    let dense = pipeline::densify(scn, &arm, esdf.as_deref(), &planned)?;
    let interp = &dense.interpolation;
    write(dir, "planned_path.csv", planned_path_csv(&interp.states, &interp.configs, scn.costs.timestep))?;
    let (log, metrics, clearance) = pipeline::simulate_plan(scn, &arm, esdf.as_deref(), &dense)?;
    let mut csv = Vec::new();
    log.write_csv(&mut csv)?;
    write(dir, "trajectory.csv", csv)?;
    let mut avoidance = planned.avoidance.clone();
    avoidance.extend(dense.recheck.clone());
    write(dir, "metrics.txt", metrics_report(&log, &metrics, clearance.as_ref(), &avoidance)?)?;
    plot_paths(dir, &interp.states, Some(&log))?;
    plot_series(dir, &log)
}

/// Loads the scenario, applies `flags`, and runs `verb` into `out`. On failure
/// the partial outputs stay and a `FAILED` file holds the error.
pub fn execute(verb: Verb, scenario_path: &Path, out: &Path, flags: &RunFlags) -> Result<PathBuf> {
    let mut scn = Scenario::load(scenario_path)?;
    flags.apply(&mut scn);
    scn.validate()?;
    fs::create_dir_all(out)?;
    let failed = out.join(FAILED_MARKER);
    if failed.exists() {
        fs::remove_file(&failed)?;
    }
    let verb_name = match verb {
        Verb::Plan => "plan",
        Verb::Run => "run",
        Verb::Ablate => "ablate",
    };
    write(
        out,
        "manifest.toml",
        to_toml(&Manifest {
            version: env!("CARGO_PKG_VERSION"),
            verb: verb_name,
            seed: scn.seed,
            scenario_file: scenario_path.display().to_string(),
            strict_alg1: flags.strict_alg1,
            raw_displacement: flags.raw_displacement,
            scenario: &scn,
        })?,
    )?;
    let base_dir = scenario_path.parent().unwrap_or(Path::new("."));
    match run_stages(verb, &scn, base_dir, out) {
        Ok(()) => Ok(out.to_path_buf()),
        Err(e) => {
            fs::write(&failed, format!("{e}\n"))?;
            Err(e)
        }
    }
}
