//! End-to-end runs through the experiment layer: golden files, determinism,
//! config echo and the CSV contracts.

use std::fs;
use std::path::{Path, PathBuf};

use boostreg::data::{load_csv, normalize_minmax, StreamKind, StreamSpec};
use boostreg::experiment::{
    cmd_gen, cmd_regret, cmd_run, cmd_sweep, run_regret, run_trials, write_run_outputs, Algorithm,
    ConfigOverrides, ExperimentConfig, SweepParam,
};
use boostreg::{Error, ErrorKind};

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data")
}

fn small(algorithm: Algorithm, stream: StreamKind) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::preset(algorithm, stream);
    cfg.length = 400;
    cfg.trials = 2;
    cfg.trace_every = 25;
    cfg
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn bundled_csv_run_matches_golden_files() {
    let golden = data_dir().join("golden");
    let file = ConfigOverrides::from_file(&golden.join("config.toml")).unwrap();
    let flags = ConfigOverrides {
        path: Some(data_dir().join("synthetic_1000.csv")),
        ..Default::default()
    };
    let cfg = ExperimentConfig::resolve(&[&file, &flags]).unwrap();
    let out = tempfile::tempdir().unwrap();
    cmd_run(&cfg, out.path()).unwrap();
    for name in ["report.csv", "ase.csv", "lambda_trace.csv"] {
        assert_eq!(
            read(&out.path().join(name)),
            read(&golden.join(name)),
            "{name}"
        );
    }
}

#[test]
fn bundled_csv_normalizes_onto_endpoints() {
    let raw = load_csv(&data_dir().join("synthetic_1000.csv"), true, None).unwrap();
    assert_eq!(raw.len(), 1000);
    let norm = normalize_minmax(&raw).unwrap();
    let r = norm[0].x.len();
    assert_eq!(r, 5);
    for j in 0..r - 1 {
        let col: Vec<f64> = norm.iter().map(|s| s.x[j]).collect();
        assert!(col.contains(&-1.0) && col.contains(&1.0), "column {j}");
        assert!(col.iter().all(|v| (-1.0..=1.0).contains(v)));
    }
    assert!(norm.iter().all(|s| s.x[r - 1] == 1.0));
    assert!(norm.iter().any(|s| s.d == -1.0) && norm.iter().any(|s| s.d == 1.0));
}

#[test]
fn repeated_runs_are_byte_identical() {
    for algorithm in [Algorithm::BsgdRu, Algorithm::BnmOza, Algorithm::BsgdDr] {
        let cfg = small(algorithm, StreamKind::Stationary);
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        cmd_run(&cfg, a.path()).unwrap();
        cmd_run(&cfg, b.path()).unwrap();
        for name in ["config.toml", "ase.csv", "report.csv", "lambda_trace.csv"] {
            assert_eq!(
                read(&a.path().join(name)),
                read(&b.path().join(name)),
                "{algorithm} {name}"
            );
        }
    }
}

#[test]
fn worker_count_does_not_change_results() {
    let mut cfg = small(Algorithm::BsgdRu, StreamKind::Stationary);
    cfg.trials = 5;
    cfg.workers = 1;
    let one = run_trials(&cfg).unwrap();
    cfg.workers = 3;
    let three = run_trials(&cfg).unwrap();
    assert_eq!(one.ase_mean, three.ase_mean);
    for (x, y) in one.reports.iter().zip(&three.reports) {
        assert_eq!(x.final_coefficients, y.final_coefficients);
    }
}

#[test]
fn echoed_config_reruns_bit_exactly() {
    let mut cfg = small(Algorithm::BnmRu, StreamKind::Duffing);
    cfg.known_sigma2 = Some(0.3);
    cfg.seed = 4242;
    let first = tempfile::tempdir().unwrap();
    cmd_run(&cfg, first.path()).unwrap();
    let echo = ConfigOverrides::from_file(&first.path().join("config.toml")).unwrap();
    let again = ExperimentConfig::resolve(&[&echo]).unwrap();
    assert_eq!(again, cfg);
    let second = tempfile::tempdir().unwrap();
    cmd_run(&again, second.path()).unwrap();
    for name in ["config.toml", "ase.csv", "report.csv", "lambda_trace.csv"] {
        assert_eq!(
            read(&first.path().join(name)),
            read(&second.path().join(name))
        );
    }
}

#[test]
fn final_mse_is_last_ase_over_t_per_trial() {
    let mut cfg = small(Algorithm::BsgdOza, StreamKind::Stationary);
    cfg.trials = 4;
    cfg.keep_trial_curves = true;
    let s = run_trials(&cfg).unwrap();
    for r in &s.reports {
        let from_curve = r.ase_curve.last().unwrap() / r.t_len as f64;
        assert!((r.final_mse - from_curve).abs() <= 1e-12 * from_curve);
    }
    let out = tempfile::tempdir().unwrap();
    write_run_outputs(&s, out.path()).unwrap();
    let ase = read(&out.path().join("ase.csv"));
    assert!(ase.starts_with("t,ase,mse_running\n"));
    assert_eq!(ase.lines().count(), cfg.length + 1);
    let report = read(&out.path().join("report.csv"));
    assert!(report.starts_with("trial,final_mse,updates_total,wall_time_s\n"));
    assert_eq!(report.lines().count(), 5);
    let trials = read(&out.path().join("ase_trials.csv"));
    assert_eq!(trials.lines().count(), 4 * cfg.length + 1);
    assert!(read(&out.path().join("lambda_trace.csv")).starts_with("t,k,lambda\n"));
}

#[test]
fn single_learner_labels_match_m1_boosting() {
    for (single, boosted) in [
        (Algorithm::Sgd, Algorithm::BsgdWu),
        (Algorithm::Nm, Algorithm::BnmWu),
    ] {
        let a = small(single, StreamKind::Stationary);
        let mut b = small(boosted, StreamKind::Stationary);
        b.m = 1;
        let (ra, rb) = (run_trials(&a).unwrap(), run_trials(&b).unwrap());
        assert_eq!(ra.mse_mean, rb.mse_mean);
        assert_eq!(ra.ase_mean, rb.ase_mean);
    }
}

#[test]
fn gen_duffing_writes_documented_rows() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    assert_eq!(cmd_gen(&StreamSpec::duffing(5), &a).unwrap(), 5);
    cmd_gen(&StreamSpec::duffing(5), &b).unwrap();
    let text = read(&a);
    assert_eq!(text.lines().count(), 5);
    assert!(text.starts_with("0.9279,0.1727,1,0.284194172"), "{text}");
    assert_eq!(text, read(&b));

    let bad = dir.path().join("missing/dir/out.csv");
    let err = cmd_gen(&StreamSpec::duffing(5), &bad).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Io);
    assert!(err.to_string().contains("missing/dir/out.csv"), "{err}");
}

#[test]
fn sweep_records_failures_and_continues() {
    let mut cfg = small(Algorithm::BsgdRu, StreamKind::Duffing);
    cfg.trials = 2;
    let out = tempfile::tempdir().unwrap();
    let points = cmd_sweep(&cfg, SweepParam::M, &[2.0, 2.5, 4.0], out.path()).unwrap();
    assert_eq!(points.len(), 3);
    assert!(points[0].mse_mean.is_finite() && points[2].mse_mean.is_finite());
    assert!(points[1].mse_mean.is_nan() && points[1].error.is_some());
    let text = read(&out.path().join("sweep.csv"));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "value,mse_mean,mse_std");
    assert_eq!(lines[2], "2.5,nan,nan");
    assert!(out.path().join("config.toml").exists());
    assert!(matches!(
        cmd_sweep(&cfg, SweepParam::C, &[], out.path()),
        Err(Error::Config(_))
    ));
}

#[test]
fn regret_on_noiseless_stream_stays_flat() {
    let mut cfg = ExperimentConfig::preset(Algorithm::Nm, StreamKind::Stationary);
    cfg.noise_var = 0.0;
    cfg.beta = 1.0;
    cfg.trials = 3;
    let rows = run_regret(&cfg, &[100, 1000]).unwrap();
    // The online learner pays for its first few predictions from w = 0 and
    // then predicts the noiseless target almost exactly.
    assert!(rows[0].regret > 0.0);
    assert!((rows[1].regret - rows[0].regret).abs() < 1e-3, "{rows:?}");
}

#[test]
fn regret_single_point_grid_and_file() {
    let mut cfg = ExperimentConfig::preset(Algorithm::Nm, StreamKind::Stationary);
    cfg.beta = 1.0;
    cfg.trials = 2;
    let out = tempfile::tempdir().unwrap();
    let rows = cmd_regret(&cfg, &[300], out.path()).unwrap();
    assert_eq!(rows.len(), 1);
    let text = read(&out.path().join("regret.csv"));
    assert_eq!(text.lines().count(), 2);
    assert!(text.starts_with("T,regret,regret_over_lnT\n300,"));
    assert!(run_regret(&cfg, &[500, 100]).is_err());
    assert!(run_regret(&cfg, &[]).is_err());
}

#[test]
fn csv_stream_length_caps_rows_before_normalizing() {
    let mut cfg = ExperimentConfig::preset(Algorithm::BnmWu, StreamKind::Csv);
    cfg.path = Some(data_dir().join("synthetic_1000.csv"));
    cfg.has_header = true;
    cfg.length = 200;
    let stream = cfg.stream_spec(0).generate().unwrap();
    assert_eq!(stream.len(), 200);
    assert!(stream.iter().any(|s| s.d == 1.0) && stream.iter().any(|s| s.d == -1.0));
    let s = run_trials(&cfg).unwrap();
    assert_eq!(s.reports.len(), 1);
    assert!(s.mse_mean.is_finite());
}
