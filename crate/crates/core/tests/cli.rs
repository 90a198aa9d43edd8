use std::path::Path;
use std::process::{Command, Output};

use minding_lab::io::FieldFile;

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_minding-lab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn report(out: &Path, command: &str) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(out.join(format!("report_{command}.json"))).unwrap()).unwrap()
}

#[test]
fn help_and_usage() {
    let o = Command::new(env!("CARGO_BIN_EXE_minding-lab")).arg("--help").output().unwrap();
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    for cmd in ["synthesize", "metric", "flatten", "liouville-check", "solve", "develop", "verify-minding", "export-plots"] {
        assert!(text.contains(cmd), "{cmd}");
    }
    let o = Command::new(env!("CARGO_BIN_EXE_minding-lab")).arg("frobnicate").output().unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn synthesized_surface_feeds_metric() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["synthesize", "--n", "48"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let surface = dir.path().join("surface.json");
    let file = FieldFile::read(&surface).unwrap();
    assert_eq!(file.channels.len(), 7);
    let o = run(&["metric", "--surface-file", surface.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 0);
    let metric = FieldFile::read(&dir.path().join("metric.json")).unwrap();
    let e = metric.channel("E").unwrap();
    assert!(e.map(|v| v - 1.0).max_abs_interior() < 1e-2);
    let k = metric.channel("K").unwrap();
    assert!(k.map(|v| v + 1.0).max_abs_interior() < 1e-2);
}

#[test]
fn theta_file_round_trip_and_incompatible_angle() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(&["synthesize", "--n", "33"], dir.path())), 0);
    let theta = dir.path().join("surface.json");
    let o = run(&["synthesize", "--theta-file", theta.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 0);
    let o = run(&["synthesize", "--source", "right_angle", "--n", "17"], dir.path());
    assert_eq!(code(&o), 3);
    assert_eq!(report(dir.path(), "synthesize")["failed_stage"], "sine_gordon");
}

#[test]
fn solve_then_develop_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["solve", "--source", "poincare_disk_patch", "--n", "40"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(report(dir.path(), "solve")["details"]["log"].as_array().unwrap().len() >= 2);
    let u = dir.path().join("u.json");
    let o = run(&["develop", "--u-file", u.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let phi = FieldFile::read(&dir.path().join("phi.json")).unwrap();
    assert!(phi.channel("abs phi").unwrap().max() < 1.0);
}

#[test]
fn flat_factor_is_not_developable() {
    let dir = tempfile::tempdir().unwrap();
    let g = minding_lab::Grid2D::from_extent(0.0, 1.0, 0.0, 1.0, 21, 21).unwrap();
    let u = dir.path().join("u0.json");
    FieldFile::scalar("u", &minding_lab::ScalarField::constant(g, 0.0)).write(&u).unwrap();
    let o = run(&["develop", "--u-file", u.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 3);
    let o = run(&["liouville-check", "--u-file", u.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 3);
}

#[test]
fn malformed_input_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"nx\": 3}").unwrap();
    assert_eq!(code(&run(&["develop", "--u-file", bad.to_str().unwrap()], dir.path())), 2);
    let missing = dir.path().join("nope.json");
    assert_eq!(code(&run(&["metric", "--surface-file", missing.to_str().unwrap()], dir.path())), 2);
    assert_eq!(code(&run(&["solve", "--tol-scale", "-1"], dir.path())), 2);
}

#[test]
fn config_file_and_seeded_tests() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"source": "half_plane_pseudosphere", "n": 40, "seed": 11}"#).unwrap();
    let o = run(&["liouville-check", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 0);
    let r = report(dir.path(), "liouville_check");
    assert_eq!(r["n"], 40);
    assert_eq!(r["details"]["weak_test_count"], 75);
    let first = std::fs::read(dir.path().join("report_liouville_check.json")).unwrap();
    run(&["liouville-check", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(first, std::fs::read(dir.path().join("report_liouville_check.json")).unwrap());
}

#[test]
fn tolerance_scale_can_turn_a_pass_into_a_failure() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(&["flatten", "--n", "128"], dir.path())), 0);
    assert_eq!(code(&run(&["flatten", "--n", "128", "--tol-scale", "0.01"], dir.path())), 3);
}

#[test]
fn export_plots_requires_force_to_overwrite() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(&["export-plots"], dir.path())), 2);
    assert_eq!(code(&run(&["verify-minding", "--source", "half_plane_pseudosphere", "--n", "40"], dir.path())), 0);
    assert_eq!(code(&run(&["export-plots"], dir.path())), 0);
    let csv = std::fs::read_to_string(dir.path().join("plots/residuals.csv")).unwrap();
    assert!(csv.starts_with("x,y,liouville,pullback"));
    assert_eq!(csv.lines().count(), 40 * 40 + 1);
    assert_eq!(code(&run(&["export-plots"], dir.path())), 2);
    assert_eq!(code(&run(&["export-plots", "--force"], dir.path())), 0);
}

#[test]
fn solver_failure_or_success_is_explicit() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["solve", "--n", "33", "--boundary-shift", "10"], dir.path());
    assert!([0, 4].contains(&code(&o)));
}
