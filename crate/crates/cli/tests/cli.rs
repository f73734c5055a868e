use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_riesz-eq")).args(args).output().expect("spawn riesz-eq")
}

fn ok_json(args: &[&str]) -> Value {
    let out = bin(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn out_arg(p: &Path) -> String {
    p.display().to_string()
}

#[test]
fn critical_values() {
    let v = ok_json(&["critical", "ball", "--d", "3", "--s", "2", "--height", "1"]);
    assert!((v["gamma_minus"].as_f64().unwrap() + 8.612).abs() < 5e-3);
    assert!((v["gamma_plus"].as_f64().unwrap() - 1.302).abs() < 5e-3);
    let v = ok_json(&["critical", "segment", "--kernel", "log", "--height", "1"]);
    assert!((v["gamma_minus"].as_f64().unwrap() + 3.414214).abs() < 1e-6);
    assert!((v["gamma_plus"].as_f64().unwrap() - 2.414214).abs() < 1e-6);
    let v = ok_json(&["critical", "coulomb", "--d", "2", "--height", "1"]);
    assert_eq!(v["gamma_tilde"].as_f64().unwrap(), -2.0);
}

#[test]
fn bad_config_exits_two_with_json() {
    for args in [
        vec!["critical", "ball", "--d", "3", "--s", "1"],
        vec!["solve", "ball", "--d", "3", "--s", "2"],
        vec!["solve", "segment", "--kernel", "log", "--gamma", "1", "--height", "0"],
        vec!["solve", "nowhere", "--gamma", "1"],
    ] {
        let out = bin(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        let err: Value = serde_json::from_slice(&out.stderr).unwrap();
        assert_eq!(err["exit_code"], 2);
        assert_eq!(err["error"], "config");
    }
}

#[test]
fn solve_ball_writes_density_and_result() {
    let dir = tempfile::tempdir().unwrap();
    let v = ok_json(&[
        "solve",
        "ball",
        "--d",
        "3",
        "--s",
        "2",
        "--gamma",
        "-15",
        "--height",
        "1",
        "--out",
        &out_arg(dir.path()),
    ]);
    assert_eq!(v["regime"], "attractive_shrunk");
    let r = v["constants"]["r_gamma"].as_f64().unwrap();
    assert!(r > 0.7 && r < 0.9);
    assert!(dir.path().join("density.csv").exists());
    let saved: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("result.json")).unwrap()).unwrap();
    assert_eq!(saved, v);
}

#[test]
fn solve_log_two_cut() {
    let dir = tempfile::tempdir().unwrap();
    let v = ok_json(&[
        "solve",
        "segment",
        "--kernel",
        "log",
        "--gamma",
        "5",
        "--height",
        "1",
        "--out",
        &out_arg(dir.path()),
    ]);
    assert!((v["constants"]["r_tilde"].as_f64().unwrap() - 0.62361).abs() < 1e-5);
    assert_eq!(v["equilibrium"]["endpoints"].as_array().unwrap().len(), 4);
}

#[test]
fn iterate_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let v = ok_json(&[
        "solve",
        "segment",
        "--s",
        "0.5",
        "--gamma",
        "12",
        "--height",
        "1",
        "--iterate",
        "--out",
        &out_arg(dir.path()),
    ]);
    let r = v["constants"]["r_star"].as_f64().unwrap();
    assert!(r > 0.2 && r < 0.5);
    let trace = fs::read_to_string(dir.path().join("trace.jsonl")).unwrap();
    let lines: Vec<Value> = trace.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), v["trace"]["steps"].as_u64().unwrap() as usize);
    for (k, l) in lines.iter().enumerate() {
        assert_eq!(l["k"].as_u64().unwrap() as usize, k);
        for key in ["r_k", "c_k", "mass", "residual"] {
            assert!(l[key].is_number());
        }
    }
}

#[test]
fn verify_round_trip_and_perturbations() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let good = d.join("good");
    ok_json(&["solve", "segment", "--kernel", "log", "--gamma", "5", "--out", &out_arg(&good)]);
    let file = good.join("density.csv");
    let v = ok_json(&["verify", "--input", &out_arg(&file), "segment", "--kernel", "log", "--gamma", "5"]);
    assert_eq!(v["pass"], true);

    let scaled: String = fs::read_to_string(&file)
        .unwrap()
        .lines()
        .map(|l| match l.split_once(',') {
            Some((x, y)) if !l.starts_with('#') && !l.starts_with("x,") => {
                format!("{x},{:.17e}\n", 1.01 * y.parse::<f64>().unwrap())
            }
            _ => format!("{l}\n"),
        })
        .collect();
    let bad = d.join("scaled.csv");
    fs::write(&bad, scaled).unwrap();
    let out = bin(&["verify", "--input", &out_arg(&bad), "segment", "--kernel", "log", "--gamma", "5"]);
    assert_eq!(out.status.code(), Some(1));
    let rep: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((rep["mass"].as_f64().unwrap() - 1.01).abs() < 1e-9);

    let arcsine = d.join("arcsine");
    ok_json(&["solve", "segment", "--kernel", "log", "--gamma", "0", "--out", &out_arg(&arcsine)]);
    let out = bin(&[
        "verify",
        "--input",
        &out_arg(&arcsine.join("density.csv")),
        "segment",
        "--kernel",
        "log",
        "--gamma",
        "5",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let rep: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(rep["frostman"]["sup_residual_on_support"].as_f64().unwrap() > 0.1);
}

#[test]
fn coulomb_surface_layer_survives_verify() {
    let dir = tempfile::tempdir().unwrap();
    for (d, g) in [("2", "-5"), ("2", "-1"), ("3", "3")] {
        let o = dir.path().join(format!("c{d}{g}"));
        ok_json(&["solve", "coulomb", "--d", d, "--gamma", g, "--out", &out_arg(&o)]);
        let v = ok_json(&["verify", "--input", &out_arg(&o.join("density.csv")), "coulomb", "--d", d, "--gamma", g]);
        assert_eq!(v["pass"], true, "d={d} γ={g}");
    }
}

#[test]
fn deterministic_output() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for o in [&a, &b] {
        ok_json(&["solve", "segment", "--s", "0.5", "--gamma", "12", "--out", &out_arg(o)]);
    }
    for f in ["result.json", "density.csv", "trace.jsonl"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn sweep_ball_family() {
    let dir = tempfile::tempdir().unwrap();
    let o = dir.path();
    let v = ok_json(&[
        "sweep",
        "ball",
        "--d",
        "3",
        "--s",
        "2",
        "--gammas",
        "-20,-15,gamma_minus,0",
        "--jobs",
        "2",
        "--out",
        &out_arg(o),
    ]);
    assert_eq!(v["count"], 4);
    let index = fs::read_to_string(o.join("index.csv")).unwrap();
    let rows: Vec<&str> = index.lines().collect();
    assert_eq!(rows[0], "gamma,regime,status,endpoints,f_q,file");
    let radii: Vec<f64> = rows[1..].iter().map(|r| r.split(',').nth(3).unwrap().parse().unwrap()).collect();
    assert!(radii[0] < radii[1] && radii[1] < radii[2]);
    assert!((radii[2] - 1.0).abs() < 1e-12 && radii[3] == 1.0);
    for r in &rows[1..] {
        let cols: Vec<&str> = r.split(',').collect();
        assert_eq!(cols[2], "ok");
        let g = cols[0];
        let v =
            ok_json(&["verify", "--input", &out_arg(&o.join(cols[5])), "ball", "--d", "3", "--s", "2", "--gamma", g]);
        assert_eq!(v["pass"], true, "γ={g}");
    }
}

#[test]
fn sweep_log_phase_transition() {
    let dir = tempfile::tempdir().unwrap();
    ok_json(&["sweep", "segment", "--kernel", "log", "--gammas", "0,gamma_plus,5", "--out", &out_arg(dir.path())]);
    let index = fs::read_to_string(dir.path().join("index.csv")).unwrap();
    let regimes: Vec<&str> = index.lines().skip(1).map(|r| r.split(',').nth(1).unwrap()).collect();
    assert_eq!(regimes, vec!["rep_one_cut", "rep_one_cut", "rep_two_cut"]);
}

#[test]
fn empty_sweep_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let v = ok_json(&["sweep", "segment", "--kernel", "log", "--out", &out_arg(dir.path())]);
    assert_eq!(v["count"], 0);
    assert_eq!(fs::read_to_string(dir.path().join("index.csv")).unwrap(), "gamma,regime,status,endpoints,f_q,file\n");
}

#[test]
fn sweep_reports_failures() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin(&[
        "sweep",
        "segment",
        "--s",
        "0.5",
        "--gammas",
        "1,12",
        "--iterate",
        "--max-iter",
        "1",
        "--out",
        &out_arg(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let index = fs::read_to_string(dir.path().join("index.csv")).unwrap();
    let rows: Vec<&str> = index.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].contains(",ok,"));
    assert!(rows[1].contains("failed"));
}

#[test]
fn discrete_points_file() {
    let dir = tempfile::tempdir().unwrap();
    let v = ok_json(&[
        "discrete",
        "segment",
        "--kernel",
        "log",
        "--gamma",
        "5",
        "--n",
        "64",
        "--seed",
        "3",
        "--out",
        &out_arg(dir.path()),
    ]);
    assert_eq!(v["n"], 64);
    assert_eq!(v["converged"], true);
    let csv = fs::read_to_string(dir.path().join("points.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "index,x");
    assert_eq!(csv.lines().count(), 65);
}
