use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn znav(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_znav")).args(args).output().expect("binary runs")
}

fn znav_with(cfg: &Path, args: &[&str]) -> Output {
    let mut all = vec![args[0], "--config", cfg.to_str().unwrap()];
    all.extend_from_slice(&args[1..]);
    znav(&all)
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "bad json ({e}): {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn temp_config(dir: &tempfile::TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn extremal_on_flat_torus_moves_at_speed_two_thirds() {
    let out = znav_with(&config("flat_torus_constant.ini"), &["extremal", "--tmax", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let last = &v["final_sample"];
    assert!((last["q_unwrapped"]["x"].as_f64().unwrap() - 2.0).abs() < 1e-9);
    assert!(last["q_unwrapped"]["y"].as_f64().unwrap().abs() < 1e-9);
    assert!(String::from_utf8_lossy(&out.stderr).contains("hamiltonian drift"));
}

#[test]
fn extremal_csv_has_trajectory_columns() {
    let out = znav_with(&config("flat_torus_constant.ini"), &["extremal", "--tmax", "1", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("t,x,y,theta,p1,p2,h_residual\n"));
    assert!(text.lines().count() > 2);
}

#[test]
fn sphere_great_circle_closes() {
    let out = znav_with(&config("sphere.ini"), &["extremal"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let q = &v["final_sample"]["q_unwrapped"];
    let err = (q["x"].as_f64().unwrap() - 0.5).hypot(q["y"].as_f64().unwrap());
    assert!(err < 1e-6, "{err}");
}

#[test]
fn drift_too_strong_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg =
        temp_config(&dir, "bad.ini", "[surface]\nname = flat_torus\n[drift]\nkind = form\ncomp1 = 1.2\ncomp2 = 0\n");
    let out = znav_with(&cfg, &["extremal"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
}

#[test]
fn negative_grid_exits_2() {
    let out = znav_with(&config("sphere.ini"), &["verify", "--grid", "-4,16,16"]);
    assert_eq!(out.status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let cfg = temp_config(&dir, "grid.ini", "[surface]\nname = sphere\n[quadrature]\ngrid = -4,16,16\n");
    assert_eq!(znav_with(&cfg, &["verify"]).status.code(), Some(2));
}

#[test]
fn missing_config_exits_2() {
    assert_eq!(znav(&["verify"]).status.code(), Some(2));
    assert_eq!(znav(&["verify", "--config", "/nonexistent/znav.ini"]).status.code(), Some(2));
}

#[test]
fn verify_passes_on_flat_torus() {
    let out = znav_with(&config("flat_torus_constant.ini"), &["verify"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["passed"], Value::Bool(true));
    assert!(v["checks"].as_array().unwrap().iter().all(|c| c["status"] != "fail"));
}

#[test]
fn verify_passes_on_sphere_and_reports_pi() {
    let out = znav_with(&config("sphere.ini"), &["verify"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert!((v["conjugate_time"].as_f64().unwrap() - PI).abs() < 1e-6);
    let names: Vec<&str> = v["checks"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    for n in ["homogeneity", "implicit_equation", "duality", "curvature_oracle", "wronskian", "gauss_bonnet_identity"] {
        assert!(names.contains(&n), "missing {n}");
    }
}

#[test]
fn verify_failure_names_the_check_and_exits_3() {
    // a 16-point grid cannot resolve the frequency-60 drift
    let dir = tempfile::tempdir().unwrap();
    let cfg = temp_config(
        &dir,
        "wavy.ini",
        "[surface]\nname = flat_torus\n[drift]\nkind = form\ncomp1 = 0\ncomp2 = 0.01*sin(60*x)\n[solver]\nt_max = 1\n[quadrature]\ngrid = 16,16,16\n",
    );
    let out = znav_with(&cfg, &["verify"]);
    assert_eq!(out.status.code(), Some(3));
    let v = json(&out);
    assert_eq!(v["passed"], Value::Bool(false));
    let first = v["checks"].as_array().unwrap().iter().find(|c| c["status"] == "fail").unwrap();
    assert_eq!(first["name"], "gauss_bonnet_decomposition");
    assert!(String::from_utf8_lossy(&out.stderr).contains("gauss_bonnet_decomposition"));
}

#[test]
fn curvature_of_round_sphere_is_one() {
    let out = znav_with(&config("sphere.ini"), &["curvature", "--grid", "6,6,6", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut rows = text.lines();
    let header: Vec<&str> = rows.next().unwrap().split(',').collect();
    let k = header.iter().position(|&h| h == "kappa").unwrap();
    let mut n = 0;
    for r in rows {
        let kappa: f64 = r.split(',').nth(k).unwrap().parse().unwrap();
        assert!((kappa - 1.0).abs() < 1e-6, "{kappa}");
        n += 1;
    }
    assert_eq!(n, 216);
    let summary: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!((summary["mean"].as_f64().unwrap() - 1.0).abs() < 1e-6);
}

#[test]
fn gauss_bonnet_on_magnetic_torus() {
    let out = znav_with(&config("magnetic_torus.ini"), &["gauss-bonnet"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!(v["identity_residual"].as_f64().unwrap() < 1e-4);
    assert_eq!(v["inequality_holds"], Value::Bool(true));
    assert!((v["omega_term"].as_f64().unwrap() - PI * 0.09).abs() < 1e-6);
}

#[test]
fn gauss_bonnet_needs_a_compact_chart() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = temp_config(&dir, "disk.ini", "[surface]\nname = hyperbolic_disk\n");
    assert_eq!(znav_with(&cfg, &["gauss-bonnet"]).status.code(), Some(2));
}

#[test]
fn dualize_preserves_drift_norm() {
    let out = znav_with(&config("flat_zermelo.ini"), &["dualize"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    for s in v["samples"].as_array().unwrap() {
        assert!((s["dual_drift_norm"].as_f64().unwrap() - 0.5).abs() < 1e-10);
    }
    assert_eq!(v["duality"]["samples"].as_u64(), Some(1000));
    assert_eq!(v["duality"]["passed"], Value::Bool(true));
    assert_eq!(v["direction"], "from_zermelo");
}

#[test]
fn dualized_config_round_trips_through_verify() {
    let dir = tempfile::tempdir().unwrap();
    let emitted = dir.path().join("dual.ini");
    let out = znav_with(&config("flat_zermelo.ini"), &["dualize", "--emit-config", emitted.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let out = znav_with(&emitted, &["verify"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["problem"], "cozermelo");
    let duality = v["checks"].as_array().unwrap().iter().find(|c| c["name"] == "duality").unwrap();
    assert_eq!(duality["status"], "pass");
    assert!(duality["measured"].as_f64().unwrap() < 1e-9);
}

#[test]
fn output_is_deterministic() {
    let cfg = config("magnetic_torus.ini");
    let a = znav_with(&cfg, &["verify", "--seed", "11", "--grid", "16,16,16"]);
    let b = znav_with(&cfg, &["verify", "--seed", "11", "--grid", "16,16,16", "--threads", "2"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn leaving_the_chart_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = temp_config(&dir, "disk.ini", "[surface]\nname = hyperbolic_disk\n[problem]\nstart_x = 0\ntheta = 0\n");
    let out = znav_with(&cfg, &["extremal", "--tmax", "50"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("left the chart"));
}

#[test]
fn conjugate_report_and_sweep() {
    let out = znav_with(&config("sphere.ini"), &["conjugate", "--theta", "-1"]);
    assert_eq!(out.status.code(), Some(0));
    assert!((json(&out)["first_conjugate_time"].as_f64().unwrap() - PI).abs() < 1e-6);

    let out = znav_with(&config("sphere.ini"), &["conjugate", "--sweep", "theta:8"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("theta,t_conjugate,t_reached"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 8);
    for r in &rows {
        if !r[1].is_empty() {
            assert!((r[1].parse::<f64>().unwrap() - PI).abs() < 1e-6);
        }
    }
    // theta = 0 heads for the point at infinity before reaching the antipode
    assert!(rows[0][1].is_empty());
    assert!(rows[1..].iter().all(|r| !r[1].is_empty()));
}

#[test]
fn flat_torus_has_no_conjugate_point() {
    let out = znav_with(&config("flat_torus_constant.ini"), &["conjugate", "--tmax", "50"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!(v["first_conjugate_time"].is_null());
}

#[test]
fn output_file_keeps_stdout_clean() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gb.json");
    let out = znav_with(&config("flat_torus_constant.ini"), &["gauss-bonnet", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert!(v["lhs_cozermelo"].as_f64().unwrap().abs() < 1e-8);
}
