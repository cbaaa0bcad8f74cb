//! Exit-code contract and report shape of the scenario runner.

use std::fs;
use std::path::PathBuf;

use folgauge::gauge::{EquivariantGaugeField, LinkOrbits};
use folgauge::io::save_field;
use folgauge::presentation::preset_p0;
use folgauge::su2::Quat;
use folgauge_cli::run_scenario;

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("folgauge-cli-test-{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn write_scenario(name: &str, body: serde_json::Value) -> PathBuf {
    let path = tmp(name);
    fs::write(&path, serde_json::to_string_pretty(&body).unwrap()).unwrap();
    path
}

#[test]
fn identity_check_succeeds_with_report() {
    let s = write_scenario(
        "ok.json",
        serde_json::json!({
            "presentation": {"preset": "p0", "n": 4},
            "task": "identity-check",
            "seed": 5,
            "field": {"kind": "abelian", "m1": 1, "m2": -1}
        }),
    );
    let out = tmp("ok_out");
    let outcome = run_scenario(&s, Some(&out), 1, None);
    assert_eq!(outcome.exit_code, 0);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(outcome.report_path).unwrap()).unwrap();
    assert_eq!(report["seed"], 5);
    assert_eq!(report["threads"], 1);
    assert!(report["results"]["identity_residual"].as_f64().unwrap() <= 1e-10);
    assert!(report["presentation_hash"].as_str().unwrap().len() == 16);
    assert!(out.join("run_meta.json").exists());
}

#[test]
fn invalid_side_is_bad_input() {
    let s = write_scenario(
        "badn.json",
        serde_json::json!({
            "presentation": {"preset": "p0", "n": 5},
            "task": "validate"
        }),
    );
    let outcome = run_scenario(&s, Some(&tmp("badn_out")), 1, None);
    assert_eq!(outcome.exit_code, 4);
}

#[test]
fn unknown_task_is_bad_input() {
    let s = write_scenario(
        "badtask.json",
        serde_json::json!({
            "presentation": {"preset": "p0", "n": 4},
            "task": "frobnicate"
        }),
    );
    let outcome = run_scenario(&s, Some(&tmp("badtask_out")), 1, None);
    assert_eq!(outcome.exit_code, 4);
}

#[test]
fn failing_validation_exits_two() {
    // a p4-style rotation over an anisotropic metric fails the metric check
    let pres = serde_json::json!({
        "charts": [{"id": 0, "extent": [4,4,4,4], "metric": [1.0, 2.0, 1.0, 1.0]}],
        "generators": [{
            "source_chart": 0,
            "target_chart": 0,
            "matrix": [[0,-1,0,0],[1,0,0,0],[0,0,1,0],[0,0,0,1]],
            "translation": [0,0,0,0],
            "bundle_lifts": folgauge::io::encode_f64s(
                &std::iter::repeat([1.0f64, 0.0, 0.0, 0.0]).take(256).flatten().collect::<Vec<_>>()
            )
        }],
        "theta": folgauge::io::encode_f64s(&vec![1.0; 256]),
        "kappa": folgauge::io::encode_f64s(&vec![0.0; 1024]),
    });
    let pres_path = tmp("aniso.json");
    fs::write(&pres_path, serde_json::to_string(&pres).unwrap()).unwrap();
    let s = write_scenario(
        "validate_fail.json",
        serde_json::json!({
            "presentation": {"file": pres_path},
            "task": "validate"
        }),
    );
    let outcome = run_scenario(&s, Some(&tmp("validate_out")), 1, None);
    assert_eq!(outcome.exit_code, 2);
}

#[test]
fn branch_cut_exits_three() {
    let p = preset_p0(4).unwrap();
    let orbits = LinkOrbits::build(&p);
    let mut field = EquivariantGaugeField::identity(&orbits);
    field.reps[0] = Quat::new(-1.0, 0.0, 0.0, 0.0);
    let field_path = tmp("cut_field.json");
    save_field(&p, &orbits, &field, &field_path).unwrap();
    let s = write_scenario(
        "cut.json",
        serde_json::json!({
            "presentation": {"preset": "p0", "n": 4},
            "task": "identity-check",
            "field": {"kind": "file", "path": field_path}
        }),
    );
    let outcome = run_scenario(&s, Some(&tmp("cut_out")), 1, None);
    assert_eq!(outcome.exit_code, 3);
}

#[test]
fn seed_override_lands_in_report() {
    let s = write_scenario(
        "seeded.json",
        serde_json::json!({
            "presentation": {"preset": "p2", "n": 4},
            "task": "identity-check",
            "seed": 1,
            "field": {"kind": "random", "roughness": 0.05}
        }),
    );
    let out = tmp("seeded_out");
    let outcome = run_scenario(&s, Some(&out), 2, Some(123));
    assert_eq!(outcome.exit_code, 0);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(outcome.report_path).unwrap()).unwrap();
    assert_eq!(report["seed"], 123);
    assert_eq!(report["threads"], 2);
}

#[test]
fn bundled_scenarios_run_clean() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    for name in [
        "p0_identity_check.json",
        "p2_flow_abelian.json",
        "p2_bubble_synthetic.json",
    ] {
        let out = tmp(&format!("bundled_{name}"));
        let outcome = run_scenario(&dir.join(name), Some(&out), 1, None);
        assert_eq!(outcome.exit_code, 0, "{name}");
    }
}
