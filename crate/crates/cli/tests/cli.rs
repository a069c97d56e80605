use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use implicit_bed_cli::{
    export_plot_data, random_baseline, run_experiment, EstimatorKind, ExperimentConfig, Manifest, Method, ModelKind,
};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_implicit-bed"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn small_death(outdir: &Path) -> ExperimentConfig {
    ExperimentConfig {
        model: ModelKind::Death,
        method: Method::Grid,
        estimator: EstimatorKind::Lfire,
        grid_step: Some(0.5),
        prior_samples: 100,
        lfire_samples: 100,
        replicates: 3,
        posterior_samples: 500,
        density_grid_points: 64,
        seed: 5,
        outdir: outdir.to_path_buf(),
        ..ExperimentConfig::default()
    }
}

fn write_config(dir: &Path, cfg: &ExperimentConfig) -> PathBuf {
    let path = dir.join("config_in.json");
    fs::write(&path, serde_json::to_vec_pretty(cfg).unwrap()).unwrap();
    path
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    for entry in fs::read_dir(dir).unwrap() {
        let entry = entry.unwrap();
        if entry.file_type().unwrap().is_file() {
            files.insert(entry.file_name().to_string_lossy().into_owned(), fs::read(entry.path()).unwrap());
        }
    }
    files
}

#[test]
fn invalid_configuration_exits_with_two_and_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = run(&["design", "--model", "sir", "--estimator", "analytic", "--dims", "2", "--outdir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("analytic"), "{err}");
    assert!(err.contains("grid search"), "{err}");
    assert!(!out.exists());
}

#[test]
fn unknown_config_field_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.json");
    fs::write(&path, r#"{"model": "death", "replicate": 3}"#).unwrap();
    let o = run(&["design", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn runtime_failure_exits_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["export", "--outdir", tmp.path().join("missing").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn identical_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let cfg = write_config(tmp.path(), &small_death(&out));
    let args = ["design", "--config", cfg.to_str().unwrap()];
    let first = run(&args);
    assert_eq!(first.status.code(), Some(0), "{}", String::from_utf8_lossy(&first.stderr));
    let a = snapshot(&out);
    let second = run(&args);
    assert_eq!(second.status.code(), Some(0));
    let b = snapshot(&out);
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    for (name, bytes) in &a {
        assert!(bytes == &b[name], "{name} differs between runs");
    }
    for name in [
        "config.json",
        "utility_curve.csv",
        "posterior_samples_0.csv",
        "density_grid.csv",
        "summary.json",
        "manifest.json",
    ] {
        assert!(a.contains_key(name), "{name} missing");
    }
}

#[test]
fn flags_override_the_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let cfg = write_config(tmp.path(), &small_death(&out));
    let o = run(&["design", "--config", cfg.to_str().unwrap(), "--replicates", "1", "--seed", "9"]);
    assert_eq!(o.status.code(), Some(0));
    let written: ExperimentConfig = serde_json::from_slice(&fs::read(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(written.replicates, 1);
    assert_eq!(written.seed, 9);
    assert!(!out.join("posterior_samples_1.csv").exists());
}

#[test]
fn manifest_verifies_and_detects_tampering() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let report = run_experiment(&small_death(&out)).unwrap();
    let manifest = Manifest::load(&out).unwrap();
    assert_eq!(manifest, report.manifest);
    assert!(manifest.verify(&out).is_empty());

    fs::write(out.join("utility_curve.csv"), b"tampered").unwrap();
    fs::remove_file(out.join("posterior_samples_2.csv")).unwrap();
    let diff = manifest.verify(&out);
    assert!(diff.iter().any(|d| d.contains("hash mismatch") && d.contains("utility_curve.csv")), "{diff:?}");
    assert!(diff.iter().any(|d| d.contains("missing") && d.contains("posterior_samples_2.csv")), "{diff:?}");
    let o = run(&["export", "--outdir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("hash mismatch"));
}

#[test]
fn zero_replicates_skip_the_posterior() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let cfg = ExperimentConfig { replicates: 0, ..small_death(&out) };
    let report = run_experiment(&cfg).unwrap();
    assert!(report.summary.posterior.is_none());
    let files = snapshot(&out);
    assert!(!files.keys().any(|k| k.starts_with("posterior_samples") || k == "density_grid.csv"));
    assert!(files.contains_key("utility_curve.csv"));
}

fn parse_rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn export_writes_normalised_curves_convergence_and_bands() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let cfg = ExperimentConfig { method: Method::Bo, budget: 8, grid_step: None, ..small_death(&out) };
    run_experiment(&cfg).unwrap();
    let o = run(&["export", "--outdir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let plots = out.join("plots");
    assert!(Manifest::load(&plots).unwrap().verify(&plots).is_empty());

    let (h, rows) = parse_rows(&plots.join("utility_curve_normalised.csv"));
    let n = h.iter().position(|c| c == "normalised").unwrap();
    let values: Vec<f64> = rows.iter().map(|r| r[n].parse().unwrap()).collect();
    assert_eq!(values.iter().copied().fold(f64::INFINITY, f64::min), 0.0);
    assert_eq!(values.iter().copied().fold(f64::NEG_INFINITY, f64::max), 1.0);

    let (h, rows) = parse_rows(&plots.join("convergence.csv"));
    let c = h.iter().position(|c| c == "cumulative_best").unwrap();
    let best: Vec<f64> = rows.iter().map(|r| r[c].parse().unwrap()).collect();
    assert!(best.windows(2).all(|w| w[0] <= w[1]));

    let (h, rows) = parse_rows(&plots.join("density_bands.csv"));
    assert_eq!(h, ["source", "parameter", "value", "mean", "mean_minus_sd", "mean_plus_sd"]);
    for r in &rows {
        let v: Vec<f64> = r[3..].iter().map(|x| x.parse().unwrap()).collect();
        assert!(v[1] <= v[0] && v[0] <= v[2]);
    }
}

#[test]
fn floats_carry_seventeen_significant_digits() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    run_experiment(&ExperimentConfig { replicates: 1, ..small_death(&out) }).unwrap();
    let (h, rows) = parse_rows(&out.join("utility_curve.csv"));
    let v = h.iter().position(|c| c == "value").unwrap();
    for r in &rows {
        let mantissa = r[v].trim_start_matches('-').split('e').next().unwrap().replace('.', "");
        assert_eq!(mantissa.len(), 17, "{}", r[v]);
    }
}

#[test]
fn random_designs_scatter_the_posterior_medians() {
    let tmp = tempfile::tempdir().unwrap();
    let base = ExperimentConfig {
        estimator: EstimatorKind::Analytic,
        grid_step: Some(0.1),
        prior_samples: 1000,
        replicates: 20,
        posterior_samples: 2000,
        density_grid_points: 128,
        seed: 3,
        ..ExperimentConfig::default()
    };
    let baseline = random_baseline(&ExperimentConfig { outdir: tmp.path().join("baseline"), ..base.clone() }).unwrap();
    assert_eq!(baseline.replicates.len(), 20);
    let baseline_files = snapshot(&tmp.path().join("baseline"));
    assert_eq!(baseline_files.keys().filter(|k| k.starts_with("baseline_density_")).count(), 20);

    let optimal = run_experiment(&ExperimentConfig { outdir: tmp.path().join("optimal"), ..base }).unwrap();
    let medians: Vec<f64> = optimal.summary.replicates.iter().map(|r| r.summary[0].median).collect();
    let mean = medians.iter().sum::<f64>() / medians.len() as f64;
    let sd = (medians.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (medians.len() - 1) as f64).sqrt();
    assert!(baseline.sd_of_medians[0] > sd, "baseline {} vs optimal {sd}", baseline.sd_of_medians[0]);
}

#[test]
fn equidistant_comparison_needs_two_times() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["compare-eq", "--dims", "1", "--outdir", tmp.path().join("eq").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn export_of_a_baseline_run_has_no_curve() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("baseline");
    let cfg = ExperimentConfig { replicates: 2, estimator: EstimatorKind::Analytic, outdir: out.clone(), ..small_death(&out) };
    random_baseline(&cfg).unwrap();
    let m = export_plot_data(&out).unwrap();
    assert!(m.files.is_empty());
}
