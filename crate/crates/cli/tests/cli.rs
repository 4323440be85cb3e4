use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn austen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_austen")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = austen(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Prediction file with propensity fixed at `g` for every row.
fn constant_g_predictions(dir: &Path, g: f64) -> PathBuf {
    let mut text = String::from("y,t,g,q0,q1\n");
    for i in 0..40 {
        let t = i % 3 == 0;
        let y = (i % 7) as f64 * 0.4 + if t { 1.0 } else { 0.0 };
        text.push_str(&format!("{y},{},{g},{},{}\n", u8::from(t), 0.2 * (i % 5) as f64, 1.1 + 0.1 * (i % 4) as f64));
    }
    let p = dir.join("predictions.csv");
    fs::write(&p, text).unwrap();
    p
}

fn stdout_map(out: &Output) -> Vec<(String, f64)> {
    String::from_utf8(out.stdout.clone())
        .unwrap()
        .lines()
        .map(|l| {
            let (k, v) = l.split_once('\t').unwrap();
            (k.to_string(), v.parse().unwrap())
        })
        .collect()
}

#[test]
fn bad_inputs_exit_with_status_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.csv");
    assert_eq!(austen(&["plot", s(&missing), "--out", s(dir.path())]).status.code(), Some(2));
    assert_eq!(austen(&["plot", "--nonsense"]).status.code(), Some(2));
    let p = dir.path().join("bad.csv");
    fs::write(&p, "y,t,g,q0\n1,1,0.5,0\n").unwrap();
    let out = austen(&["bias", s(&p), "--alpha", "0.3", "--r2", "0.1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.csv"));
}

#[test]
fn degenerate_data_exits_with_status_3() {
    let dir = tempfile::tempdir().unwrap();
    // perfect outcome predictions leave no residual variance
    let p = dir.path().join("perfect.csv");
    fs::write(&p, "y,t,g,q0,q1\n1,1,0.5,0,1\n0,0,0.5,0,1\n2,1,0.4,1,2\n").unwrap();
    let out = austen(&["bias", s(&p), "--alpha", "0.3", "--r2", "0.1"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn zero_target_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = constant_g_predictions(dir.path(), 0.4);
    let out = austen(&["plot", s(&p), "--target-bias", "0", "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn plot_without_leave_outs_has_curve_only() {
    let dir = tempfile::tempdir().unwrap();
    let p = constant_g_predictions(dir.path(), 0.4);
    let out_dir = dir.path().join("o");
    let out = ok(&["plot", s(&p), "--target-bias", "0.5", "--out", s(&out_dir)]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("target bias = 0.5"));
    let plot: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("plot.json")).unwrap()).unwrap();
    assert_eq!(plot["dots"].as_array().unwrap().len(), 0);
    assert!(plot["band"].is_null());
    assert!(!out_dir.join("band.json").exists());
    roxmltree::Document::parse(&fs::read_to_string(out_dir.join("plot.svg")).unwrap()).unwrap();
}

#[test]
fn att_and_ate_curves_coincide_for_constant_propensity() {
    let dir = tempfile::tempdir().unwrap();
    let p = constant_g_predictions(dir.path(), 0.35);
    let curve = |est: &str| {
        let out_dir = dir.path().join(est);
        ok(&["plot", s(&p), "--target-bias", "0.8", "--estimand", est, "--alpha-grid", "0.05,0.95,19", "--out", s(&out_dir)]);
        let plot: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("plot.json")).unwrap()).unwrap();
        plot["curve"]["points"].clone()
    };
    assert_eq!(curve("ate"), curve("att"));
}

#[test]
fn bias_forms_agree() {
    let dir = tempfile::tempdir().unwrap();
    let p = constant_g_predictions(dir.path(), 0.4);
    let zero = stdout_map(&ok(&["bias", s(&p), "--alpha", "0.3", "--r2", "0"]));
    assert_eq!(zero[0], ("bias".to_string(), 0.0));
    let by_r2 = stdout_map(&ok(&["bias", s(&p), "--alpha", "0.3", "--r2", "0.2"]));
    let delta = by_r2[1].1.to_string();
    let by_delta = stdout_map(&ok(&["bias", s(&p), "--alpha", "0.3", "--delta", &delta]));
    assert!((by_r2[0].1 - by_delta[0].1).abs() < 1e-12 * by_r2[0].1.abs());
    assert!((by_delta[2].1 - 0.2).abs() < 1e-12);
}

#[test]
fn pipeline_is_deterministic() {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut sim: serde_json::Value = serde_json::from_str(&fs::read_to_string(root.join("sim.json")).unwrap()).unwrap();
    sim["n"] = 600.into();
    let sim_path = d.join("sim.json");
    fs::write(&sim_path, sim.to_string()).unwrap();
    ok(&["simulate", "--config", s(&sim_path), "--out", s(&d.join("sim"))]);
    let dataset = d.join("sim/dataset.csv");
    let groups = root.join("groups.json");
    for run in ["a", "b"] {
        let fit = d.join(format!("fit_{run}"));
        ok(&["fit", s(&dataset), "--groups", s(&groups), "--out", s(&fit)]);
        ok(&[
            "plot",
            s(&fit.join("predictions.csv")),
            s(&fit.join("leave_out_x1.csv")),
            "--leave-out",
            &format!("second={}", s(&fit.join("leave_out_x2.csv"))),
            "--bootstrap",
            "20",
            "--seed",
            "5",
            "--out",
            s(&d.join(format!("plot_{run}"))),
        ]);
    }
    for file in ["fit_{}/predictions.csv", "fit_{}/leave_out_x3.csv", "plot_{}/plot.json", "plot_{}/plot.svg", "plot_{}/band.json"] {
        let a = fs::read(d.join(file.replace("{}", "a"))).unwrap();
        let b = fs::read(d.join(file.replace("{}", "b"))).unwrap();
        assert!(a == b, "{file} differs between runs");
    }
    let plot: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("plot_a/plot.json")).unwrap()).unwrap();
    let names: Vec<&str> = plot["dots"].as_array().unwrap().iter().map(|d| d["group"].as_str().unwrap()).collect();
    assert_eq!(names, ["x1", "second"]);
}

#[test]
fn calibrate_writes_table_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let p = constant_g_predictions(dir.path(), 0.4);
    let lo = dir.path().join("leave_out_z.csv");
    let body: String = fs::read_to_string(&p)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            format!("{},{},0.5,{}\n", f[0], f[1], f[3])
        })
        .collect();
    fs::write(&lo, format!("y,t,g_wo,q_wo\n{body}")).unwrap();
    let out = ok(&["calibrate", s(&p), s(&lo), "--out", s(dir.path())]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("z\t"));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("calibration.json")).unwrap()).unwrap();
    assert_eq!(json[0]["group"], "z");
}
