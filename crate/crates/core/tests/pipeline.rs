use mobman::output::{execute, Verb, FAILED_MARKER};
use mobman::pipeline::{self, ablation, AblationCell, RunFlags};
use mobman::scenario::Scenario;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn scenario(name: &str) -> PathBuf {
    scenarios_dir().join(format!("{name}.toml"))
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mobman"))
}

#[test]
fn benign_straight_line_run() {
    let path = scenario("straight_line");
    let scn = Scenario::load(&path).unwrap();
    let out = pipeline::run(&scn, path.parent().unwrap()).unwrap();
    let plan = out.plan.unwrap();
    let curv = plan.solves.last().unwrap().per_term.get("ee_curv").copied().unwrap_or(0.0);
    assert!(curv < 1e-6, "curvature cost {curv}");
    assert!(plan.unresolved.is_empty());
    assert!(out.metrics.kappa_max.is_finite());
    assert_eq!(out.log.ik_failures, 0);
}

#[test]
fn run_writes_artifacts_and_is_byte_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let path = scenario("straight_line");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    execute(Verb::Run, &path, &a, &RunFlags::default()).unwrap();
    execute(Verb::Run, &path, &b, &RunFlags::default()).unwrap();
    for f in ["manifest.toml", "trajectory.csv", "planned_path.csv", "metrics.txt", "solve_report.toml", "base_path.svg", "ee_path.svg", "metrics.svg"] {
        assert!(a.join(f).is_file(), "missing {f}");
    }
    assert!(!a.join(FAILED_MARKER).exists());
    assert_eq!(fs::read(a.join("trajectory.csv")).unwrap(), fs::read(b.join("trajectory.csv")).unwrap());
    let manifest = fs::read_to_string(a.join("manifest.toml")).unwrap();
    assert!(manifest.contains("seed = 3"));
    assert!(manifest.contains(env!("CARGO_PKG_VERSION")));
    assert!(manifest.contains("straight_line.toml"));
}

#[test]
fn seed_flag_overrides_the_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let flags = RunFlags {
        seed: Some(99),
        ..RunFlags::default()
    };
    execute(Verb::Plan, &scenario("straight_line"), tmp.path(), &flags).unwrap();
    assert!(fs::read_to_string(tmp.path().join("manifest.toml")).unwrap().contains("seed = 99"));
    assert!(tmp.path().join("planned_path.csv").is_file());
    assert!(!tmp.path().join("trajectory.csv").exists());
}

#[test]
fn failing_stage_leaves_marker_and_nonzero_exit() {
    let tmp = tempfile::tempdir().unwrap();
    // a swing scenario has nothing to plan
    let status = bin()
        .args(["plan", "--scenario"])
        .arg(scenario("swing_ablation"))
        .arg("--out")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert!(!status.status.success());
    assert!(tmp.path().join(FAILED_MARKER).is_file());
    assert!(tmp.path().join("manifest.toml").is_file());

    let ok = bin().args(["validate", "--scenario"]).arg(scenario("straight_line")).output().unwrap();
    assert!(ok.status.success());
}

#[test]
fn validate_names_bad_fields() {
    let tmp = tempfile::tempdir().unwrap();
    let neg = tmp.path().join("neg.toml");
    fs::write(&neg, "[path]\nwaypoints = [[0.0, 0.0], [1.0, 0.0]]\nstep_size = -0.1\n").unwrap();
    let out = bin().args(["validate", "--scenario"]).arg(&neg).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("step_size"));

    let unknown = tmp.path().join("unknown.toml");
    fs::write(&unknown, "seed = 1\n\n[path]\nwaypoints = [[0.0, 0.0], [1.0, 0.0]]\nwarp_drive = true\n").unwrap();
    let err = Scenario::load(&unknown).unwrap_err().to_string();
    assert!(err.contains("warp_drive"), "{err}");
    assert!(err.contains("line 5"), "{err}");
}

#[test]
fn shipped_scenarios_round_trip() {
    let mut n = 0;
    for entry in fs::read_dir(scenarios_dir()).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "toml") {
            let s = Scenario::load(&p).unwrap();
            let again = Scenario::from_toml(&s.to_toml().unwrap()).unwrap();
            assert_eq!(s, again, "{}", p.display());
            n += 1;
        }
    }
    assert!(n >= 6);
}

#[test]
fn ablation_rows_and_identical_cells() {
    let scn = Scenario::load(&scenario("swing_ablation")).unwrap();
    let cell = AblationCell { feedforward: true, kp: 3.0 };
    let rows = ablation(&scn, &[cell, cell]).unwrap();
    assert_eq!(rows[0].p_max, rows[1].p_max);
    assert_eq!(rows[0].a_max, rows[1].a_max);

    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["ablate", "--scenario"])
        .arg(scenario("swing_ablation"))
        .arg("--out")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    let table = fs::read_to_string(tmp.path().join("ablation.csv")).unwrap();
    let lines: Vec<_> = table.lines().collect();
    assert_eq!(lines[0], "cell,p_max,v_mean,v_max,a_mean,a_max,p_max_vs_fb");
    assert_eq!(lines.len(), 5);
    for label in ["F3B-P3", "F3B-P1", "FB-P3", "FB-P1"] {
        assert!(lines.iter().any(|l| l.starts_with(&format!("{label},"))), "{label}");
    }
}

#[test]
fn esdf_build_writes_a_loadable_field() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("scene.esdf");
    let st = bin()
        .args(["esdf-build", "--scenario"])
        .arg(scenario("platform_grasp"))
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    let grid = mobman::esdf::EsdfGrid::parse(&fs::read_to_string(&out).unwrap()).unwrap();
    assert!(grid.dims.iter().all(|d| *d > 0));
}
