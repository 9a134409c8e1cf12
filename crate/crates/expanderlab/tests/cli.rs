//! End-to-end runs of the expanderlab binary: exit codes, artifact
//! schemas, determinism of seeded outputs.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_expanderlab"));
    // A stray output override would redirect artifact paths mid-test.
    c.env_remove("EXPANDERLAB_OUT");
    c
}

fn run(args: &[&str]) -> (i32, String, String) {
    let Output { status, stdout, stderr } = bin().args(args).output().expect("binary runs");
    (
        status.code().expect("exit code"),
        String::from_utf8_lossy(&stdout).into_owned(),
        String::from_utf8_lossy(&stderr).into_owned(),
    )
}

fn workdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("expanderlab_cli_{tag}_{}", std::process::id()));
    if dir.exists() {
        fs::remove_dir_all(&dir).unwrap();
    }
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn parse(text: &str) -> Value {
    serde_json::from_str(text).expect("valid JSON")
}

#[test]
fn usage_errors_exit_2() {
    for args in [
        &[][..],
        &["solve"][..],
        &["solve", "--r0", "-1"][..],
        &["solve", "--r0", "1.0", "--delta", "3.0"][..],
        &["solve", "--delta", "-0.5"][..],
        &["degree", "--delta-grid", "garbage"][..],
        &["degree", "--delta-grid", "1:2"][..],
        &["audit", "--suite", "nonsense"][..],
        &["plot", "--svg", "x.svg"][..],
        &["spectrum", "--in", "/definitely/missing.json"][..],
        &["torus", "--n", "1"][..],
        &["--null-tol", "0", "torus"][..],
    ] {
        let (code, _, err) = run(args);
        assert_eq!(code, 2, "args {args:?} gave wrong code; stderr: {err}");
    }
}

#[test]
fn solve_by_neck_writes_a_certified_profile() {
    let dir = workdir("solve_neck");
    let out = dir.join("p.json").display().to_string();
    let (code, stdout, _) = run(&["solve", "--r0", "1.0", "--n", "2", "--out", &out]);
    assert_eq!(code, 0);
    let cert = parse(&stdout);
    assert_eq!(cert["kind"], "expander_profile");
    assert!(cert["residual_sup"].as_f64().unwrap() < 1e-8);
    assert!(cert["delta"].as_f64().unwrap() > 0.0);
    let profile = parse(&fs::read_to_string(&out).unwrap());
    assert_eq!(profile["n"], 2);
    assert!(profile["step"].as_f64().unwrap() > 0.0);
    let samples = profile["samples"].as_array().unwrap();
    assert!(samples.len() > 1000);
    for key in ["s", "r", "z", "theta"] {
        assert!(samples[0].get(key).is_some(), "sample lacks {key}");
    }
}

#[test]
fn solve_below_the_fold_reports_no_solutions_at_exit_4() {
    let (code, stdout, stderr) = run(&["solve", "--delta", "0.1", "--n", "2"]);
    assert_eq!(code, 4, "stderr: {stderr}");
    let doc = parse(&stdout);
    assert_eq!(doc["count"], 0);
    assert_eq!(doc["solutions"].as_array().unwrap().len(), 0);
    assert!(doc["delta_star"].as_f64().unwrap() > 0.1);
    assert!(stderr.contains("no solutions"));
}

#[test]
fn branch_profiles_feed_the_spectrum_labels() {
    let dir = workdir("branches");
    let stem = dir.join("sol.json").display().to_string();
    let (code, stdout, stderr) = run(&["solve", "--delta", "3.414", "--n", "2", "--out", &stem]);
    assert_eq!(code, 0, "stderr: {stderr}");
    let doc = parse(&stdout);
    assert_eq!(doc["count"], 2);
    let sols = doc["solutions"].as_array().unwrap();
    assert_eq!(sols[0]["branch"], "small");
    assert_eq!(sols[1]["branch"], "large");
    for s in sols {
        assert!(s["residual_sup"].as_f64().unwrap() < 1e-8);
        assert!((s["delta"].as_f64().unwrap() - 3.414).abs() < 1e-6);
    }

    let small = dir.join("sol_small.json");
    let large = dir.join("sol_large.json");
    assert!(small.exists() && large.exists());

    let (code, stdout, stderr) =
        run(&["spectrum", "--in", &small.display().to_string()]);
    assert_eq!(code, 0, "stderr: {stderr}");
    let spec = parse(&stdout);
    assert_eq!(spec["branch"], "small");
    assert!(spec["index"].as_u64().unwrap() >= 1, "small neck should be unstable");
    let modes = spec["modes"].as_array().unwrap();
    assert!(!modes.is_empty());
    for key in ["m", "mults", "eigs"] {
        assert!(modes[0].get(key).is_some(), "mode lacks {key}");
    }

    let (code, stdout, _) = run(&["spectrum", "--in", &large.display().to_string()]);
    assert_eq!(code, 0);
    let spec = parse(&stdout);
    assert_eq!(spec["branch"], "large");
    assert_eq!(spec["index"], 0, "large neck should be stable");
    assert_eq!(spec["nullity"], 0);
}

#[test]
fn degree_sweep_emits_csv_and_a_verdict() {
    let dir = workdir("degree");
    let out = dir.join("deg.csv").display().to_string();
    let (code, stdout, stderr) =
        run(&["degree", "--delta-grid", "1.1:3.414:2", "--out", &out]);
    assert_eq!(code, 0, "stderr: {stderr}");
    assert!(stdout.contains("verdict: PASS"));
    let csv = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "delta,n_solutions,indices,degree,flags");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].contains(",0,,0,"), "below the fold: no solutions, degree 0");
    assert!(lines[2].contains(",2,1;0,0,"), "above: two solutions of index 1 and 0");
}

#[test]
fn torus_json_extends_the_profile_schema() {
    let dir = workdir("torus");
    let out = dir.join("torus.json").display().to_string();
    let (code, _, stderr) = run(&["torus", "--n", "2", "--out", &out]);
    assert_eq!(code, 0, "stderr: {stderr}");
    let doc = parse(&fs::read_to_string(&out).unwrap());
    for key in ["n", "step", "samples", "Rminus", "Rplus", "delta0"] {
        assert!(doc.get(key).is_some(), "torus JSON lacks {key}");
    }
    let rminus = doc["Rminus"].as_f64().unwrap();
    let rplus = doc["Rplus"].as_f64().unwrap();
    assert!(rminus < 2.0 && 2.0 < rplus, "sphere bracket fails: {rminus} vs {rplus}");
    assert!(doc["delta0"].as_f64().unwrap() > 0.0);
}

#[test]
fn poincare_audit_passes_and_reruns_byte_identical() {
    let dir = workdir("audit");
    let out1 = dir.join("a1.json").display().to_string();
    let out2 = dir.join("a2.json").display().to_string();
    let (code, _, stderr) =
        run(&["audit", "--suite", "poincare", "--samples", "100", "--seed", "7", "--out", &out1]);
    assert_eq!(code, 0, "stderr: {stderr}");
    assert!(stderr.contains("PASS"));
    let (code, _, _) =
        run(&["audit", "--suite", "poincare", "--samples", "100", "--seed", "7", "--out", &out2]);
    assert_eq!(code, 0);
    assert_eq!(
        fs::read(&out1).unwrap(),
        fs::read(&out2).unwrap(),
        "fixed seed must reproduce the report byte for byte"
    );
    let doc = parse(&fs::read_to_string(&out1).unwrap());
    assert_eq!(doc["pass"], true);
    let lines = doc["lines"].as_array().unwrap();
    assert_eq!(lines.len(), 3);
    for line in lines {
        for key in ["id", "constant", "max_ratio", "samples", "seed"] {
            assert!(line.get(key).is_some(), "audit line lacks {key}");
        }
        assert!(line["max_ratio"].as_f64().unwrap() > 0.0, "audit must not be vacuous");
        assert!(
            line["max_ratio"].as_f64().unwrap()
                <= line["constant"].as_f64().unwrap() * 1.01
        );
    }
}

#[test]
fn zero_sample_audit_passes_trivially_with_a_warning() {
    let (code, stdout, stderr) =
        run(&["audit", "--suite", "variation", "--samples", "0", "--seed", "3"]);
    assert_eq!(code, 0, "stderr: {stderr}");
    assert!(stderr.contains("warning") && stderr.contains("zero samples"));
    let doc = parse(&stdout);
    assert_eq!(doc["pass"], true);
    assert!(!doc["warnings"].as_array().unwrap().is_empty());
    for line in doc["lines"].as_array().unwrap() {
        assert_eq!(line["samples"], 0);
    }
}

#[test]
fn env_var_redirects_relative_outputs() {
    let dir = workdir("envout");
    let status = bin()
        .args(["torus", "--out", "t.json"])
        .env("EXPANDERLAB_OUT", &dir)
        .output()
        .unwrap();
    assert!(status.status.success());
    assert!(dir.join("t.json").exists());
}

#[test]
fn plots_render_profiles_and_the_slope_map() {
    let dir = workdir("plot");
    let profile = dir.join("p.json").display().to_string();
    let (code, _, _) = run(&["solve", "--r0", "0.9", "--n", "2", "--out", &profile]);
    assert_eq!(code, 0);
    let svg1 = dir.join("profiles.svg").display().to_string();
    let (code, _, stderr) = run(&["plot", "--in", &profile, "--svg", &svg1]);
    assert_eq!(code, 0, "stderr: {stderr}");
    let text = fs::read_to_string(&svg1).unwrap();
    assert!(text.starts_with("<svg") && text.contains("<polyline"));

    let svg2 = dir.join("slope.svg").display().to_string();
    let csv = dir.join("sweep.csv").display().to_string();
    let (code, _, stderr) = run(&[
        "plot",
        "--slope-grid",
        "0.5:1.5:5",
        "--svg",
        &svg2,
        "--csv",
        &csv,
    ]);
    assert_eq!(code, 0, "stderr: {stderr}");
    let sweep = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = sweep.lines().collect();
    assert_eq!(lines[0], "r0,delta,fit_error,residual_sup,s_max");
    assert_eq!(lines.len(), 6);
    assert!(fs::read_to_string(&svg2).unwrap().contains("delta(r0)"));
}

#[test]
fn config_file_sets_the_run_and_flags_override_it() {
    let dir = workdir("config");
    let conf = dir.join("run.conf");
    fs::write(&conf, "n = 2\nseed = 5\nout_dir = .\n").unwrap();
    let out = dir.join("f.json").display().to_string();
    let (code, _, stderr) = run(&[
        "--config",
        &conf.display().to_string(),
        "audit",
        "--suite",
        "forms",
        "--samples",
        "2",
        "--out",
        &out,
    ]);
    assert_eq!(code, 0, "stderr: {stderr}");
    let doc = parse(&fs::read_to_string(&out).unwrap());
    assert_eq!(doc["seed"], 5);

    // The flag wins over the file.
    let out2 = dir.join("g.json").display().to_string();
    let (code, _, _) = run(&[
        "--config",
        &conf.display().to_string(),
        "--seed",
        "11",
        "audit",
        "--suite",
        "forms",
        "--samples",
        "2",
        "--out",
        &out2,
    ]);
    assert_eq!(code, 0);
    let doc = parse(&fs::read_to_string(&out2).unwrap());
    assert_eq!(doc["seed"], 11);
}
