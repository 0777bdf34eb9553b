use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn ftrack(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ftrack")).args(args).output().unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ftrack-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn riemann_prints_waves() {
    let out = ftrack(&["riemann", "--left", "0,1", "--right", "0.5,1"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("rarefaction"), "{text}");
}

#[test]
fn interact_json() {
    let out = ftrack(&["interact", "--sigma1", "1", "--rho-minus", "0.01", "--epsilon", "1e-6", "--json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v.is_object());
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(ftrack(&["scenario", "no-such-scenario"]).status.code(), Some(1));
    assert_eq!(ftrack(&["riemann", "--left", "0", "--right", "0,1"]).status.code(), Some(1));
}

#[test]
fn unknown_parameter_is_rejected() {
    let dir = scratch("unknown");
    std::fs::create_dir_all(&dir).unwrap();
    let params = dir.join("p.toml");
    std::fs::write(&params, "no_such_key = 1\n").unwrap();
    let out = ftrack(&["scenario", "example3-periodic", "--params", params.to_str().unwrap(), "--out", dir.join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn vacuum_exits_3() {
    assert_eq!(ftrack(&["riemann", "--left", "-2,0.5", "--right", "2,0.5"]).status.code(), Some(3));
}

#[test]
fn infeasible_schedule_exits_5() {
    let dir = scratch("blowup");
    std::fs::create_dir_all(&dir).unwrap();
    let params = dir.join("p.toml");
    std::fs::write(&params, "horizon_factor = 1e-3\n").unwrap();
    let out = ftrack(&["scenario", "blowup", "--params", params.to_str().unwrap(), "--out", dir.join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(5), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn exponent_check_reports_no_common_point() {
    let dir = scratch("exponent");
    let out = ftrack(&["scenario", "exponent-check", "--out", dir.to_str().unwrap(), "--no-timestamp"]);
    assert!(out.status.success());
    assert_eq!(manifest(&dir)["report"]["all_true"], 0);
}

#[test]
fn periodic_outputs_and_round_trip() {
    let first = scratch("periodic-a");
    let out = ftrack(&["scenario", "example3-periodic", "--out", first.to_str().unwrap(), "--no-timestamp"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["manifest.json", "tv.csv", "snapshots.json", "diagram.svg"] {
        assert!(first.join(f).exists(), "{f}");
    }
    let residual = manifest(&first)["report"]["max_residual"].as_f64().unwrap();
    assert!(residual < 1e-9, "{residual}");

    // A manifest is accepted as a parameter file and reproduces the run; only
    // the recorded reproduction command, which names its own directory, differs.
    let second = scratch("periodic-b");
    let m = first.join("manifest.json");
    let out = ftrack(&["scenario", "example3-periodic", "--params", m.to_str().unwrap(), "--out", second.to_str().unwrap(), "--no-timestamp"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (mut a, mut b) = (manifest(&first), manifest(&second));
    a.as_object_mut().unwrap().remove("command");
    b.as_object_mut().unwrap().remove("command");
    assert_eq!(a, b);
    for f in ["tv.csv", "snapshots.json", "diagram.svg"] {
        assert!(std::fs::read(first.join(f)).unwrap() == std::fs::read(second.join(f)).unwrap(), "{f} differs");
    }
}
