use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use znd::io::{read_reports, read_table, Snapshot};
use znd_core::gas_dynamics::hugoniot_curve;
use znd_core::reaction_scheme::react_state;
use znd_core::{GasParams, GasState};

fn znd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_znd")).args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, json).unwrap();
    p
}

fn run_check(cmd: &str, config: &Path, out: &Path) -> Output {
    znd(&[cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap(), "--quiet"])
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_config_names_the_path() {
    let o = znd(&["run", "--config", "/definitely/not/here.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/definitely/not/here.json"));
}

#[test]
fn invalid_configs_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    for (k, json) in [
        r#"{"spec": 1, "initial": {"preset": "bump"}, "unknown": 1}"#,
        r#"{"spec": 2, "initial": {"preset": "bump"}}"#,
        r#"{"spec": 1, "initial": {"preset": "bump"}"#,
    ]
    .iter()
    .enumerate()
    {
        let c = write_config(dir.path(), &format!("bad{k}.json"), json);
        assert_eq!(run_check("run", &c, &out).status.code(), Some(2), "{json}");
    }
    assert_eq!(znd(&["run"]).status.code(), Some(2));
    assert_eq!(znd(&["bogus"]).status.code(), Some(2));
}

#[test]
fn converge_needs_four_epsilons() {
    let dir = tempfile::tempdir().unwrap();
    let c = write_config(
        dir.path(),
        "c.json",
        r#"{"spec": 1, "initial": {"preset": "sod_reactive"}, "experiment": {"epsilons": [0.02], "horizon": 0.5}}"#,
    );
    let o = run_check("converge", &c, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("four"));
}

#[test]
fn sod_run_writes_snapshots_and_one_row_per_sample() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let c = write_config(
        dir.path(),
        "run.json",
        r#"{"spec": 1, "scheme": {"epsilon": 0.02}, "initial": {"preset": "sod_reactive"},
            "experiment": {"horizon": 0.5}, "output": {"sample_times": [0.1, 0.3, 0.5]}}"#,
    );
    let o = run_check("run", &c, &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = read_reports(std::fs::File::open(out.join("run.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.values[8] == 0.0));
    for (k, t) in [0.1, 0.3, 0.5].iter().enumerate() {
        let snap = Snapshot::read(&out.join(format!("snapshot_{k:03}.json"))).unwrap();
        let sol = snap.to_solution().unwrap();
        assert!(!sol.fronts.is_empty());
        assert_eq!(sol.time, *t);
        assert_eq!(Snapshot::of(&sol), snap);
    }
}

#[test]
fn constant_data_only_react() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let c = write_config(
        dir.path(),
        "run.json",
        r#"{"spec": 1, "scheme": {"epsilon": 0.05}, "initial": {"breaks": [], "states": [[1, 0, 2.5, 0.006]]},
            "experiment": {"horizon": 1}}"#,
    );
    assert_eq!(run_check("run", &c, &out).status.code(), Some(0));
    let sol = Snapshot::read(&out.join("snapshot_000.json")).unwrap().to_solution().unwrap();
    assert!(sol.fronts.is_empty());
    let mut s = GasState::new(1.0, 0.0, 2.5, 0.006);
    for _ in 0..20 {
        s = react_state(&s, 0.05, &GasParams::default()).unwrap();
    }
    assert_eq!(sol.left_background, s);
    assert_eq!(sol.right_background, s);
    assert!(!out.join("snapshot_001.json").exists());
}

#[test]
fn identical_stability_run_has_zero_phi() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let c = write_config(
        dir.path(),
        "s.json",
        r#"{"spec": 1, "initial": {"preset": "bump"}, "experiment": {"epsilons": [0.05], "horizon": 0.5}}"#,
    );
    let o = run_check("stability", &c, &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = read_reports(std::fs::File::open(out.join("stability_0.csv")).unwrap()).unwrap();
    assert!(rows.len() > 2);
    assert!(rows.iter().all(|r| r.values[8] == 0.0));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("stability.summary.json")).unwrap()).unwrap();
    assert_eq!(summary["pass"], true);
}

#[test]
fn commute_on_the_calibration_data() {
    let g = GasParams::default();
    let a = GasState::from_pressure(0.985, 0.0, 1.02, 0.008, &g).to_array();
    let b = GasState::from_pressure(0.985, 0.0, 1.02, 0.0, &g).to_array();
    let json = format!(
        r#"{{"spec": 1, "scheme": {{"epsilon": 0.005}},
            "initial": {{"breaks": [-0.5, 0, 0.5], "states": [[1, 0, 2.5, 0], [1, 0, 2.5, 0.008], {a:?}, {b:?}]}}}}"#
    );
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let c = write_config(dir.path(), "c.json", &json);
    let o = run_check("commute", &c, &out);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("commute.summary.json")).unwrap()).unwrap();
    let slope = summary["slopes"]["t"].as_f64().unwrap();
    assert!((1.7..=2.3).contains(&slope), "{slope}");
    let (header, rows) = read_table(std::fs::File::open(out.join("commute.csv")).unwrap()).unwrap();
    assert_eq!(header, ["t", "commutator_L1"]);
    assert_eq!(rows.len(), 4);
}

#[test]
fn failed_assertion_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let c = write_config(
        dir.path(),
        "c.json",
        r#"{"spec": 1, "initial": {"preset": "sod_reactive"},
            "experiment": {"epsilons": [0.08, 0.04, 0.02, 0.01], "horizon": 0.5, "tolerances": {"ratio_max": 0.01}}}"#,
    );
    let o = run_check("converge", &c, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn local_checks_run_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let c = write_config(
        dir.path(),
        "r.json",
        r#"{"spec": 1, "initial": {"preset": "sod_reactive"}, "experiment": {"local": {"kind": "riemann"}}}"#,
    );
    let out = dir.path().join("r");
    assert_eq!(run_check("localchar", &c, &out).status.code(), Some(0));
    let (_, rows) = read_table(std::fs::File::open(out.join("localchar.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 5);
    let c = write_config(
        dir.path(),
        "t.json",
        r#"{"spec": 1, "initial": {"preset": "sod_reactive"},
            "experiment": {"local": {"kind": "transport", "s": 0, "thetas": [0.04, 0.02], "scales": [1, 0.5]}}}"#,
    );
    let o = run_check("localchar", &c, &dir.path().join("t"));
    assert_eq!(o.status.code(), Some(2), "transport without an interval");
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let c = write_config(
        dir.path(),
        "c.json",
        r#"{"spec": 1, "initial": {"preset": "bump"},
            "experiment": {"epsilons": [0.05], "horizon": 0.3,
                           "perturbation": {"kind": "random_y", "magnitude": 0.001}},
            "output": {"sample_times": [0.1, 0.3]}}"#,
    );
    let dirs: Vec<PathBuf> = (0..2).map(|k| dir.path().join(format!("o{k}"))).collect();
    for d in &dirs {
        assert_eq!(run_check("run", &c, d).status.code(), Some(0));
        let cfg = c.to_str().unwrap();
        let o =
            znd(&["stability", "--config", cfg, "--out", d.to_str().unwrap(), "--seed", "5", "--jobs", "2", "--quiet"]);
        assert!(o.status.code() == Some(0) || o.status.code() == Some(1));
    }
    let mut names: Vec<_> = std::fs::read_dir(&dirs[0]).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 6);
    for n in names {
        let a = std::fs::read(dirs[0].join(&n)).unwrap();
        let b = std::fs::read(dirs[1].join(&n)).unwrap();
        assert_eq!(a, b, "{n:?}");
    }
}

#[test]
fn inspect_prints_a_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let g = GasParams::default();
    let r = hugoniot_curve(3, -0.01, &GasState::new(1.0, 0.0, 2.5, 0.0), &g).unwrap().to_array();
    let c = write_config(
        dir.path(),
        "c.json",
        &format!(
            r#"{{"spec": 1, "initial": {{"breaks": [0], "states": [[1, 0, 2.5, 0], {r:?}]}}, "experiment": {{"horizon": 0.1}}}}"#
        ),
    );
    assert_eq!(run_check("run", &c, &out).status.code(), Some(0));
    let o = znd(&["inspect", out.join("snapshot_000.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("\"fronts\"") && text.contains("3: 1"), "{text}");
    let bad = write_config(dir.path(), "bad.json", "{}");
    assert_eq!(znd(&["inspect", bad.to_str().unwrap()]).status.code(), Some(2));
}
