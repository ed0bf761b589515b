use std::fs;
use std::path::Path;
use std::process::Command;

use kramers_core::experiment::{count_extrema, ExperimentReport};

fn kramers(dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_kramers"))
        .args(args)
        .env("KRAMERS_LOG", "warn")
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("exp.toml");
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn landscape_only_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "j = 2.0\neps = 0.05\n");
    let out = kramers(dir.path(), &["landscape", "--config", &cfg, "--out", "a"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("a/report.json")).unwrap();
    let report = ExperimentReport::from_json(&text).unwrap();
    let land = report.landscape.as_ref().unwrap().ok().unwrap();
    let s = land.values.summary.values;
    assert!(s.m_star > 0.9 && s.barrier > 0.0 && s.curvature_zero < 0.0);
    assert!(report.predict.is_none() && report.simulate.is_none() && report.verify_cramer.is_none());
    let ys: Vec<f64> = land.values.curve.values.iter().map(|p| p.1).collect();
    assert_eq!(count_extrema(&ys), (2, 1));
    assert!(dir.path().join("a/landscape.svg").exists());
    assert!(dir.path().join("a/timing.json").exists());
    assert!(!text.contains("seconds") && !text.contains("elapsed"));
}

#[test]
fn reports_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "j = 2.0\neps = 0.5\nn = [2]\ntransitions = 40\ndt = 1e-3\ndt_check = false\ndeterministic_init = false\n",
    );
    for out_dir in ["r1", "r2"] {
        let out = kramers(dir.path(), &["simulate", "--config", &cfg, "--out", out_dir, "--seed", "7"]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = fs::read_to_string(dir.path().join("r1/report.json")).unwrap();
    let b = fs::read_to_string(dir.path().join("r2/report.json")).unwrap();
    assert_eq!(a, b);
    let samples = fs::read_to_string(dir.path().join("r1/transitions_n2.csv")).unwrap();
    assert!(samples.starts_with("seed,steps,hitting_time,crossed\n"));
    assert_eq!(samples.lines().count(), 41);
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "eps = 0.1\nbogus_key = 1\n");
    assert_eq!(kramers(dir.path(), &["all", "--config", &cfg]).status.code(), Some(2));
    let cfg = write_config(dir.path(), "eps = 0.1\n");
    assert_eq!(kramers(dir.path(), &["all", "--config", &cfg, "--stages", "landscape,warp"]).status.code(), Some(2));
    assert_eq!(kramers(dir.path(), &["all"]).status.code(), Some(2));
}

#[test]
fn stage_failure_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "potential = \"z^4/4 + 2*z^2\"\nregime = \"high_temperature\"\nj = 1.0\nstages = [\"landscape\", \"verify-laplace\"]\nlaplace_eps = [0.1]\nlaplace_k = [0]\n",
    );
    let out = kramers(dir.path(), &["all", "--config", &cfg, "--out", "o"]);
    assert_eq!(out.status.code(), Some(3));
    let report = ExperimentReport::from_json(&fs::read_to_string(dir.path().join("o/report.json")).unwrap()).unwrap();
    assert!(report.landscape.unwrap().failed());
    assert!(!report.verify_laplace.unwrap().failed());
}

#[test]
fn report_subcommand_rerenders() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "j = 2.0\neps = 0.1\nn = [4, 16]\n");
    assert_eq!(kramers(dir.path(), &["predict", "--config", &cfg, "--out", "p"]).status.code(), Some(0));
    fs::remove_file(dir.path().join("p/predictions.csv")).unwrap();
    assert_eq!(kramers(dir.path(), &["report", "--config", &cfg, "--out", "p"]).status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("p/predictions.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn full_pipeline_at_desk_scale() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "j = 2.0\neps = 0.4\nn = [4]\ntransitions = 200\nseed = 3\nstages = [\"simulate\"]\n",
    );
    let out = kramers(dir.path(), &["all", "--config", &cfg, "--out", "f", "--threads", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = ExperimentReport::from_json(&fs::read_to_string(dir.path().join("f/report.json")).unwrap()).unwrap();
    let sims = report.simulate.unwrap();
    let sim = &sims.ok().unwrap()[0];
    assert!(sim.predicted_time > 0.0 && sim.estimate.values.mean > 0.0);
    assert!(sim.within_factor_3, "ratio {}", sim.ratio);
    assert!(sim.dt_check.is_some() && sim.deterministic.is_some());
    let mc = fs::read_to_string(dir.path().join("f/monte_carlo.csv")).unwrap();
    assert_eq!(mc.lines().count(), 2);
}
