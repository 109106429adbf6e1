use std::process::{Command, Output};

use qdoe_core::fisher::DesignMeasure;
use serde_json::Value;

fn qdoe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qdoe")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn matrix(v: &Value) -> Vec<Vec<f64>> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|r| r.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect())
        .collect()
}

fn csv_rows(out: &Output) -> Vec<Vec<String>> {
    String::from_utf8(out.stdout.clone())
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

#[test]
fn sld_matrices() {
    let out = qdoe(&["sld", "--model", "bloch3", "--theta", "0,0,0"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(matrix(&v["sld_fisher"]["entries"]), vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
    assert_eq!(v["sld_operators"].as_array().unwrap().len(), 3);

    let v = json(&qdoe(&["sld", "--theta", "0,0,0.8"]));
    let inv = matrix(&v["sld_fisher_inverse"]);
    for (i, want) in [1.0, 1.0, 0.36].iter().enumerate() {
        assert!(close(inv[i][i], *want, 1e-11));
    }

    let v = json(&qdoe(&["sld", "--model", "phase_amplitude", "--theta", "0,0.5"]));
    let j = matrix(&v["sld_fisher"]["entries"]);
    assert!(close(j[0][0], 0.25, 1e-11) && close(j[1][1], 4.0 / 3.0, 1e-11) && j[0][1].abs() < 1e-12);
}

#[test]
fn domain_errors_are_machine_readable() {
    let out = qdoe(&["sld", "--theta", "0,0,1"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out)["error"], "OutOfDomain");
    let out = qdoe(&["sld", "--theta", "0,0"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out)["error"], "WrongDimension");
    let out = qdoe(&["optimal", "--model", "bloch_sub:1,2", "--theta", "0.1,0.2", "--criterion", "compound:0.5,A,D"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out)["error"], "UnsupportedCriterion");
}

#[test]
fn closed_form_optima() {
    let v = json(&qdoe(&["optimal", "--theta", "0,0,0.8", "--criterion", "A"]));
    assert!(close(v["value"].as_f64().unwrap(), 6.76, 1e-11));
    let v = json(&qdoe(&["optimal", "--theta", "0,0,0.8", "--criterion", "E"]));
    assert!(close(v["value"].as_f64().unwrap(), 2.36, 1e-11));
    let v = json(&qdoe(&["optimal", "--model", "phase_amplitude", "--theta", "0,0.5", "--criterion", "c:1,0"]));
    assert!(close(v["value"].as_f64().unwrap(), 4.0, 1e-11));
    assert_eq!(v["feasible"], true);
    let v = json(&qdoe(&["optimal", "--model", "bloch_sub:2", "--theta", "0.6", "--criterion", "A"]));
    assert!(close(v["value"].as_f64().unwrap(), 0.64, 1e-11));
}

#[test]
fn numerical_optimization() {
    let out = qdoe(&["optimize", "--theta", "0.3,0.2,0.1", "--criterion", "D", "--candidates", "sld-grid:2000"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["converged"], true);
    let free = v["value"].as_f64().unwrap();
    assert!(close(free, 23.22, 1e-4));

    let v = json(&qdoe(&["optimize", "--theta", "0.3,0.2,0.1", "--criterion", "D", "--candidates", "pauli"]));
    assert!(v["value"].as_f64().unwrap() >= free);

    let out = qdoe(&["optimize", "--theta", "0.3,0.2,0.1", "--criterion", "D", "--max-iters", "1"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(json(&out)["converged"], false);

    let v = json(&qdoe(&["optimize", "--theta", "0,0,0.8", "--criterion", "E", "--candidates", "pauli", "--resolution", "0.005"]));
    assert_eq!(v["method"], "simplex-grid");
    let e = v["value"].as_f64().unwrap();
    assert!((2.36 - 1e-9..2.36 * 1.01).contains(&e));
}

#[test]
fn efficiency_table() {
    let out = qdoe(&["efficiency", "--theta", "0,0,0.8", "--designs", "e_A,e_D,e_E,e_ST", "--criteria", "A,D,E"]);
    assert_eq!(out.status.code(), Some(0));
    let rows = csv_rows(&out);
    assert_eq!(rows.len(), 12);
    let a_rows: Vec<&Vec<String>> = rows.iter().filter(|r| r[1] == "A" && r[0] != "e_A").collect();
    assert_eq!(a_rows.len(), 3);
    assert!(a_rows.iter().all(|r| r[2] == a_rows[0][2] && r[3] == a_rows[0][3]));
    let st_d = rows.iter().find(|r| r[0] == "e_ST" && r[1] == "D").unwrap();
    assert_eq!(st_d[3], "1");
}

#[test]
fn singular_design_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("z_only.json");
    let z = serde_json::json!({
        "weights": [1.0],
        "povms": [{"elements": [
            {"dim": 2, "re": [[1.0, 0.0], [0.0, 0.0]], "im": [[0.0, 0.0], [0.0, 0.0]]},
            {"dim": 2, "re": [[0.0, 0.0], [0.0, 1.0]], "im": [[0.0, 0.0], [0.0, 0.0]]}
        ]}]
    });
    std::fs::write(&path, z.to_string()).unwrap();
    let spec = format!("z={}", path.display());
    let rows = csv_rows(&qdoe(&["efficiency", "--theta", "0,0,0", "--designs", &spec, "--criteria", "A,D"]));
    for r in rows {
        assert_eq!(r[0], "z");
        assert_eq!(r[2], "inf");
        assert_eq!(r[3], "0");
    }
    let out = qdoe(&["certify", "--theta", "0,0,0", "--design", path.to_str().unwrap(), "--criterion", "D"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out)["error"], "SingularInformation");
}

#[test]
fn certificates() {
    let out = qdoe(&["certify", "--theta", "0,0,0.8", "--design", "e_ST", "--criterion", "D"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(json(&out)["gap"].as_f64().unwrap().abs() < 1e-9);
    let out = qdoe(&["certify", "--theta", "0.3,-0.2,0.4", "--design", "e_D", "--criterion", "D"]);
    assert_eq!(out.status.code(), Some(0));
    let out = qdoe(&["certify", "--theta", "0.3,-0.2,0.4", "--design", "e_ST", "--criterion", "D"]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(json(&out)["certified"], false);
}

#[test]
fn curves() {
    let out = qdoe(&["curves", "--direction", "0.19635,0.78540", "--criterion", "D", "--grid", "200"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    assert_eq!(text.lines().next(), Some("r2,eta_A,eta_D,eta_E,eta_ST"));
    let rows = csv_rows(&out);
    assert_eq!(rows.len(), 200);
    assert!(rows.iter().all(|r| r[2] == "1"));

    let rows = csv_rows(&qdoe(&["curves", "--direction", "0.7854,0.7854", "--criterion", "A", "--grid", "200"]));
    for r in &rows {
        assert_eq!(r[1], "1");
        let x: Vec<f64> = r[2..].iter().map(|c| c.parse().unwrap()).collect();
        assert!(close(x[0], x[1], 1e-10) && close(x[1], x[2], 1e-10));
    }
    let last: f64 = rows.last().unwrap()[2].parse().unwrap();
    assert!((last - 2.0 / 3.0).abs() < 1e-3);
}

#[test]
fn output_is_deterministic_and_designs_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("opt.json");
    let args = ["optimize", "--theta", "0.1,0.4,-0.2", "--criterion", "A", "--candidates", "random:60:9"];
    let first = qdoe(&args);
    assert_eq!(first.stdout, qdoe(&args).stdout);
    let mut with_file = args.to_vec();
    with_file.extend(["--output", path.to_str().unwrap()]);
    assert_eq!(qdoe(&with_file).status.code(), Some(0));
    assert_eq!(std::fs::read(&path).unwrap(), first.stdout);

    let v = json(&first);
    let design: DesignMeasure = serde_json::from_value(v["design"].clone()).unwrap();
    let again: DesignMeasure = serde_json::from_str(&serde_json::to_string(&design).unwrap()).unwrap();
    assert_eq!(design, again);

    let dpath = dir.path().join("design.json");
    std::fs::write(&dpath, v["design"].to_string()).unwrap();
    let spec = format!("fw={}", dpath.display());
    let rows = csv_rows(&qdoe(&["efficiency", "--theta", "0.1,0.4,-0.2", "--designs", &spec, "--criteria", "A", "--candidates", "random:60:9"]));
    let want: f64 = v["value"].as_f64().unwrap();
    assert!(close(rows[0][2].parse().unwrap(), want, 1e-11));
}

#[test]
fn thread_cap_is_honoured() {
    let out = Command::new(env!("CARGO_BIN_EXE_qdoe"))
        .args(["optimize", "--theta", "0.2,0.2,0.2", "--criterion", "D"])
        .env("QDOE_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
}
