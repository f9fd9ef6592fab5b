use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_nehari");

fn super_config(lambda: f64, seed: u64) -> String {
    format!(
        r#"{{
            "grid": {{"L": 1.0, "n": 16}},
            "params": {{"p": 2.0, "q": 1.5, "r": 5.0, "a": 1.0, "b": 1.0, "lambda": {lambda}}},
            "weights": {{"f": {{"constant": 1.0}}, "g": {{"constant": 1.0}}}},
            "options": {{"seed": {seed}, "n_starts": 2}}
        }}"#
    )
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

#[test]
fn constants_deterministic_under_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &super_config(0.02, 5));
    let out1 = dir.path().join("a");
    let out2 = dir.path().join("b");
    for out in [&out1, &out2] {
        let res = run(&["constants", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    }
    let a = std::fs::read_to_string(out1.join("constants.json")).unwrap();
    let b = std::fs::read_to_string(out2.join("constants.json")).unwrap();
    assert_eq!(a, b);
    assert!(a.contains("lambda_0_a"));
    assert!(a.contains("\"applicable_theorem\": \"2.1\""));
}

#[test]
fn constants_rejects_nonpositive_f() {
    let dir = tempfile::tempdir().unwrap();
    let text = super_config(0.02, 5).replace(r#""f": {"constant": 1.0}"#, r#""f": {"constant": -1.0}"#);
    let cfg = write_config(dir.path(), &text);
    let res = run(&["constants", "--config", cfg.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn fiber_reports_two_roots_for_super_regime() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &super_config(0.02, 5));
    let out = dir.path().join("f");
    let res = run(&["fiber", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(res.status.success());
    let csv = std::fs::read_to_string(out.join("fiber.csv")).unwrap();
    assert!(csv.starts_with("t,h_a,I,I1,I2\n"));
    assert!(csv.contains("# roots,2"));
    assert!(csv.contains("PLUS"));
    assert!(csv.contains("MINUS"));
}

#[test]
fn fiber_rejects_zero_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &super_config(0.02, 5));
    let mut field_csv = String::from("x,value\n");
    for i in 1..=16 {
        field_csv.push_str(&format!("{},0.0\n", i as f64 / 17.0));
    }
    let field = dir.path().join("zero.csv");
    std::fs::write(&field, field_csv).unwrap();
    let res = run(&["fiber", "--config", cfg.to_str().unwrap(), "--field", field.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("nonzero field"));
}

#[test]
fn solve_super_writes_two_solutions_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &super_config(0.02, 3));
    let out = dir.path().join("s");
    let res = run(&["solve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    for name in ["run.json", "solution_1.json", "solution_1.csv", "solution_2.json", "solution_2.csv"] {
        assert!(out.join(name).exists(), "missing {name}");
    }
    let run_doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(run_doc["solutions"], 2);
    let rep: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("solution_1.json")).unwrap()).unwrap();
    assert!(rep["checks"].as_array().unwrap().iter().all(|c| c["pass"].as_bool().unwrap()));
}

#[test]
fn solve_gate_refusal_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    // far above every λ threshold for this setup
    let cfg = write_config(dir.path(), &super_config(1.0e4, 3));
    let res = run(&["solve", "--config", cfg.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("gate refused"));
}

#[test]
fn solve_rerun_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &super_config(0.02, 9));
    let out1 = dir.path().join("r1");
    let out2 = dir.path().join("r2");
    for out in [&out1, &out2] {
        let res = run(&["solve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(res.status.success());
    }
    for name in ["run.json", "solution_1.json", "solution_2.json", "solution_1.csv"] {
        assert_eq!(
            std::fs::read(out1.join(name)).unwrap(),
            std::fs::read(out2.join(name)).unwrap(),
            "{name} differs between reruns"
        );
    }
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &super_config(0.02, 5));
    let res_a = run(&["constants", "--config", cfg.to_str().unwrap(), "--seed", "42"]);
    let res_b = run(&["constants", "--config", cfg.to_str().unwrap(), "--seed", "43"]);
    assert!(res_a.status.success() && res_b.status.success());
    assert_ne!(res_a.stdout, res_b.stdout);
}

#[test]
fn sweep_empty_values_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &super_config(0.02, 5));
    let out = dir.path().join("sw");
    let res = run(&[
        "sweep", "--config", cfg.to_str().unwrap(), "--axis", "lambda", "--values",
        "--out", out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
    assert!(csv.starts_with("axis,value,regime"));
}

#[test]
fn sweep_records_per_row_failures() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &super_config(0.02, 5));
    let out = dir.path().join("sw");
    // n = 3.5 is not an integer: that row fails, the others still compute
    let res = run(&[
        "sweep", "--config", cfg.to_str().unwrap(), "--axis", "n", "--values", "8,3.5",
        "--out", out.to_str().unwrap(),
    ]);
    assert!(res.status.success());
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].contains("SUPER"));
    assert!(rows[1].contains("positive integer"));
}

#[test]
fn unknown_config_key_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let text = super_config(0.02, 5).replace("\"grid\"", "\"grd\"");
    let cfg = write_config(dir.path(), &text);
    let res = run(&["constants", "--config", cfg.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
}
