//! The four user-facing experiments and the files they write.

use std::path::Path;

use serde::{Deserialize, Serialize};

use implicit_bed::bayesopt::BoTrace;
use implicit_bed::posterior::{DensityBand, Summary};
use implicit_bed::rng::tags;
use implicit_bed::utility::{estimate_mi, estimate_mi_with_models};
use implicit_bed::{DesignPoint, RngSeed};

use crate::config::{EstimatorKind, ExperimentConfig, Method, ModelKind};
use crate::error::{CliError, CliResult};
use crate::output::{fmt_f64, read_csv, Artifacts, Manifest};
use crate::pipeline::{
    build_objective, density_grids, parameter_names, posterior_replicate, random_design, run_posterior, select_design,
    CurvePoint, DesignSelection, PosteriorReport, ReplicateFailure, ReplicateOutcome, WeightSource,
};

fn tau_header(dim: usize) -> Vec<String> {
    (1..=dim).map(|k| format!("tau_{k}")).collect()
}

fn curve_rows(curve: &[CurvePoint]) -> Vec<Vec<String>> {
    curve
        .iter()
        .filter_map(|p| {
            let v = p.value?;
            let mut row: Vec<String> = p.design.times().iter().map(|t| fmt_f64(*t)).collect();
            row.push(fmt_f64(v));
            row.push(fmt_f64(p.std_error.unwrap_or(f64::NAN)));
            row.push(p.clip_count.map_or_else(String::new, |c| c.to_string()));
            Some(row)
        })
        .collect()
}

fn add_curve(a: &mut Artifacts, dim: usize, curve: &[CurvePoint]) -> CliResult<()> {
    let mut header = tau_header(dim);
    header.extend(["value", "std_error", "clip_count"].map(String::from));
    a.add_csv("utility_curve.csv", &header, &curve_rows(curve))
}

fn add_trace(a: &mut Artifacts, dim: usize, trace: &BoTrace) -> CliResult<()> {
    let mut header = vec!["iteration".to_string()];
    header.extend(tau_header(dim));
    header.extend(["utility", "std_error", "cumulative_best"].map(String::from));
    let rows: Vec<Vec<String>> = trace
        .points
        .iter()
        .map(|p| {
            let mut row = vec![p.iteration.to_string()];
            row.extend(p.design.times().iter().map(|t| fmt_f64(*t)));
            row.extend([fmt_f64(p.value), fmt_f64(p.std_error), fmt_f64(p.cumulative_best)]);
            row
        })
        .collect();
    a.add_csv("bo_trace.csv", &header, &rows)
}

fn add_samples(a: &mut Artifacts, name: &str, model: ModelKind, o: &ReplicateOutcome) -> CliResult<()> {
    let mut header = vec!["bank_index".to_string()];
    header.extend(parameter_names(model).into_iter().map(String::from));
    let rows: Vec<Vec<String>> = o
        .samples
        .indices
        .iter()
        .zip(&o.samples.draws)
        .map(|(i, d)| {
            let mut row = vec![i.to_string()];
            row.extend(d.iter().map(|v| fmt_f64(*v)));
            row
        })
        .collect();
    a.add_csv(name, &header, &rows)
}

fn band_rows(source: &str, parameter: &str, band: &DensityBand) -> Vec<Vec<String>> {
    band.grid
        .iter()
        .zip(band.mean.iter().zip(&band.sd))
        .map(|(x, (m, s))| vec![source.to_string(), parameter.to_string(), fmt_f64(*x), fmt_f64(*m), fmt_f64(*s)])
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub index: usize,
    pub design: DesignPoint,
    pub observation: Vec<f64>,
    pub ess: f64,
    pub summary: Vec<Summary>,
    pub exact: Option<Summary>,
}

impl From<&ReplicateOutcome> for ReplicateRecord {
    fn from(o: &ReplicateOutcome) -> Self {
        Self {
            index: o.index,
            design: o.design.clone(),
            observation: o.observation.clone(),
            ess: o.ess,
            summary: o.summary.clone(),
            exact: o.exact.as_ref().map(|e| e.summary),
        }
    }
}

/// Contents of `summary.json` for a design run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub model: ModelKind,
    pub method: Method,
    pub estimator: EstimatorKind,
    pub design: DesignPoint,
    pub utility: f64,
    pub std_error: f64,
    pub evaluations: usize,
    pub evaluation_failures: Vec<String>,
    pub cumulative_best: Option<Vec<f64>>,
    pub bank_fingerprint: String,
    pub posterior: Option<PosteriorReport>,
    pub replicates: Vec<ReplicateRecord>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub summary: RunSummary,
    pub selection: DesignSelection,
    pub manifest: Manifest,
}

/// Design selection and posterior replicates, without touching the disk.
pub fn run_experiment_artifacts(cfg: &ExperimentConfig) -> CliResult<(RunReport, Artifacts)> {
    cfg.validate()?;
    let objective = build_objective(cfg)?;
    let selection = select_design(cfg, &objective)?;
    let mut a = Artifacts::default();
    a.add_json("config.json", cfg)?;
    add_curve(&mut a, cfg.dims, &selection.curve)?;
    if let Some(trace) = &selection.trace {
        add_trace(&mut a, cfg.dims, trace)?;
    }

    let mut posterior = None;
    let mut replicates = Vec::new();
    if cfg.replicates > 0 {
        let source = WeightSource::at(cfg, &objective, &selection.design, selection.evaluation_seed)?;
        let run = run_posterior(cfg, &objective, &source, &selection.design)?;
        for o in &run.replicates {
            add_samples(&mut a, &format!("posterior_samples_{}.csv", o.index), cfg.model, o)?;
        }
        let source_name = match cfg.estimator {
            EstimatorKind::Lfire => "lfire",
            EstimatorKind::Analytic => "exact",
        };
        let names = parameter_names(cfg.model);
        let mut rows = Vec::new();
        for (band, name) in run.bands.iter().zip(&names) {
            rows.extend(band_rows(source_name, name, band));
        }
        if let (Some(band), EstimatorKind::Lfire) = (&run.exact_band, cfg.estimator) {
            rows.extend(band_rows("exact", names[0], band));
        }
        let header = ["source", "parameter", "value", "mean", "sd"].map(String::from);
        a.add_csv("density_grid.csv", &header, &rows)?;
        replicates = run.replicates.iter().map(ReplicateRecord::from).collect();
        posterior = Some(run.report);
    }

    let failures = match (&selection.trace, selection.method) {
        (Some(t), _) => t.failures.iter().map(|f| format!("evaluation {}: {}", f.iteration, f.error)).collect(),
        _ => selection
            .curve
            .iter()
            .filter_map(|p| p.error.as_ref().map(|e| format!("{:?}: {e}", p.design.times())))
            .collect(),
    };
    let summary = RunSummary {
        model: cfg.model,
        method: cfg.method,
        estimator: cfg.estimator,
        design: selection.design.clone(),
        utility: selection.value,
        std_error: selection.std_error,
        evaluations: selection.curve.iter().filter(|p| p.value.is_some()).count(),
        evaluation_failures: failures,
        cumulative_best: selection.trace.as_ref().map(|t| t.cumulative_best()),
        bank_fingerprint: objective.bank_fingerprint(),
        posterior,
        replicates,
    };
    a.add_json("summary.json", &summary)?;
    let manifest = a.manifest();
    Ok((RunReport { summary, selection, manifest }, a))
}

/// Runs the configured experiment and writes its files into `cfg.outdir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> CliResult<RunReport> {
    let (mut report, a) = run_experiment_artifacts(cfg)?;
    report.manifest = a.write_all(&cfg.outdir)?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineRecord {
    pub index: usize,
    pub design: DesignPoint,
    pub utility: f64,
    pub ess: f64,
    pub summary: Vec<Summary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub replicates: Vec<BaselineRecord>,
    pub failures: Vec<ReplicateFailure>,
    /// Standard deviation of the posterior medians across replicates, per parameter.
    pub sd_of_medians: Vec<f64>,
    pub manifest: Manifest,
}

/// One uniformly random design per replicate, each with its own observation and posterior.
pub fn random_baseline(cfg: &ExperimentConfig) -> CliResult<BaselineReport> {
    let cfg = &ExperimentConfig { method: Method::Random, ..cfg.clone() };
    cfg.validate()?;
    let objective = build_objective(cfg)?;
    let space = cfg.space();
    let names = parameter_names(cfg.model);
    let grids = density_grids(cfg);
    let mut a = Artifacts::default();
    a.add_json("config.json", cfg)?;
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for r in 0..cfg.replicates {
        let design = random_design(&space, &mut RngSeed(cfg.seed).stream(&[tags::BASELINE, 1, r as u64]))?;
        let seed = objective.evaluation_seed(r as u64);
        let outcome = (|| -> CliResult<(f64, ReplicateOutcome)> {
            let (utility, source) = match cfg.estimator {
                EstimatorKind::Lfire => {
                    let (e, models) = estimate_mi_with_models(&objective, &design, seed)?;
                    (e.value, WeightSource::Ratios(models))
                }
                EstimatorKind::Analytic => {
                    let e = implicit_bed::utility::evaluate(&objective, &design, cfg.estimator_choice(), seed)?;
                    (e.value, WeightSource::Exact)
                }
            };
            let o = posterior_replicate(cfg, &objective, &source, &design, r, RngSeed(cfg.seed))?;
            Ok((utility, o))
        })();
        match outcome {
            Ok((utility, o)) => {
                let mut rows = Vec::new();
                for (j, name) in names.iter().enumerate() {
                    for (x, d) in grids[j].iter().zip(&o.densities[j]) {
                        rows.push(vec![name.to_string(), fmt_f64(*x), fmt_f64(*d)]);
                    }
                }
                let header = ["parameter", "value", "density"].map(String::from);
                a.add_csv(&format!("baseline_density_{r}.csv"), &header, &rows)?;
                add_samples(&mut a, &format!("posterior_samples_{r}.csv"), cfg.model, &o)?;
                records.push(BaselineRecord { index: r, design, utility, ess: o.ess, summary: o.summary });
            }
            Err(e) => failures.push(ReplicateFailure { index: r, error: e.to_string() }),
        }
    }
    let sd_of_medians = (0..names.len())
        .map(|j| {
            let m: Vec<f64> = records.iter().map(|r| r.summary[j].median).collect();
            if m.len() < 2 {
                return 0.0;
            }
            let mean = m.iter().sum::<f64>() / m.len() as f64;
            (m.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m.len() - 1) as f64).sqrt()
        })
        .collect();
    let mut report = BaselineReport { replicates: records, failures, sd_of_medians, manifest: Manifest::default() };
    a.add_json("summary.json", &report)?;
    report.manifest = a.write_all(&cfg.outdir)?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquidistantComparison {
    pub equidistant: DesignPoint,
    pub equidistant_utility: f64,
    pub equidistant_std_error: f64,
    pub optimised: DesignPoint,
    pub optimised_utility: f64,
    pub optimised_std_error: f64,
    /// `U(d*) - U(d_eq)`.
    pub difference: f64,
    pub cumulative_best: Vec<f64>,
}

/// BO for the incumbent, then both designs evaluated on the same stream.
pub fn equidistant_comparison(cfg: &ExperimentConfig) -> CliResult<(EquidistantComparison, Manifest)> {
    let cfg = ExperimentConfig { method: Method::Bo, estimator: EstimatorKind::Lfire, ..cfg.clone() };
    let mut problems = match cfg.validate() {
        Ok(()) => Vec::new(),
        Err(CliError::Validation(v)) => v,
        Err(e) => return Err(e),
    };
    if cfg.dims < 2 {
        problems.push(format!("the equidistant comparison needs dims >= 2, got {}", cfg.dims));
    }
    if !problems.is_empty() {
        return Err(CliError::Validation(problems));
    }
    let objective = build_objective(&cfg)?;
    let selection = select_design(&cfg, &objective)?;
    let trace = selection.trace.as_ref().expect("BO selection has a trace");
    let d_eq = cfg.space().equidistant();
    let seed = objective.evaluation_seed(cfg.budget as u64);
    let eq = estimate_mi(&objective, &d_eq, seed)?;
    let star = estimate_mi(&objective, &selection.design, seed)?;
    let cmp = EquidistantComparison {
        equidistant: d_eq,
        equidistant_utility: eq.value,
        equidistant_std_error: eq.std_error,
        optimised: selection.design.clone(),
        optimised_utility: star.value,
        optimised_std_error: star.std_error,
        difference: star.value - eq.value,
        cumulative_best: trace.cumulative_best(),
    };
    let mut a = Artifacts::default();
    a.add_json("config.json", &cfg)?;
    add_trace(&mut a, cfg.dims, trace)?;
    add_curve(&mut a, cfg.dims, &selection.curve)?;
    a.add_json("summary.json", &cmp)?;
    let manifest = a.write_all(&cfg.outdir)?;
    Ok((cmp, manifest))
}

/// Min-max scaling onto `[0, 1]`; a flat curve maps to zeros.
pub fn min_max_normalise(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .map(|v| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 })
        .collect()
}

fn parse(s: &str) -> CliResult<f64> {
    s.parse::<f64>().map_err(|e| CliError::Runtime(format!("bad number {s:?}: {e}")))
}

fn column(header: &[String], name: &str) -> CliResult<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| CliError::Runtime(format!("column {name} not found")))
}

/// Verifies the run's manifest and writes plot-ready files under `outdir/plots`.
pub fn export_plot_data(outdir: &Path) -> CliResult<Manifest> {
    let manifest = Manifest::load(outdir)?;
    let diff = manifest.verify(outdir);
    if !diff.is_empty() {
        return Err(CliError::Runtime(format!("manifest does not match the output directory:\n  {}", diff.join("\n  "))));
    }
    let mut a = Artifacts::default();
    if manifest.contains("utility_curve.csv") {
        let (header, rows) = read_csv(&outdir.join("utility_curve.csv"))?;
        let vi = column(&header, "value")?;
        let taus: Vec<usize> = (0..header.len()).filter(|&i| header[i].starts_with("tau_")).collect();
        let values = rows.iter().map(|r| parse(&r[vi])).collect::<CliResult<Vec<_>>>()?;
        let norm = min_max_normalise(&values);
        let mut h: Vec<String> = taus.iter().map(|&i| header[i].clone()).collect();
        h.extend(["value", "normalised"].map(String::from));
        let out: Vec<Vec<String>> = rows
            .iter()
            .zip(values.iter().zip(&norm))
            .map(|(r, (v, n))| {
                let mut row: Vec<String> = taus.iter().map(|&i| r[i].clone()).collect();
                row.extend([fmt_f64(*v), fmt_f64(*n)]);
                row
            })
            .collect();
        a.add_csv("utility_curve_normalised.csv", &h, &out)?;
    }
    if manifest.contains("bo_trace.csv") {
        let (header, rows) = read_csv(&outdir.join("bo_trace.csv"))?;
        let it = column(&header, "iteration")?;
        let cb = column(&header, "cumulative_best")?;
        let out: Vec<Vec<String>> = rows
            .iter()
            .enumerate()
            .map(|(k, r)| Ok(vec![(k + 1).to_string(), r[it].clone(), fmt_f64(parse(&r[cb])?)]))
            .collect::<CliResult<_>>()?;
        let h = ["evaluation", "iteration", "cumulative_best"].map(String::from);
        a.add_csv("convergence.csv", &h, &out)?;
    }
    if manifest.contains("density_grid.csv") {
        let (header, rows) = read_csv(&outdir.join("density_grid.csv"))?;
        let (si, pi, xi, mi, sdi) = (
            column(&header, "source")?,
            column(&header, "parameter")?,
            column(&header, "value")?,
            column(&header, "mean")?,
            column(&header, "sd")?,
        );
        let out: Vec<Vec<String>> = rows
            .iter()
            .map(|r| {
                let (m, s) = (parse(&r[mi])?, parse(&r[sdi])?);
                Ok(vec![r[si].clone(), r[pi].clone(), r[xi].clone(), fmt_f64(m), fmt_f64(m - s), fmt_f64(m + s)])
            })
            .collect::<CliResult<_>>()?;
        let h = ["source", "parameter", "value", "mean", "mean_minus_sd", "mean_plus_sd"].map(String::from);
        a.add_csv("density_bands.csv", &h, &out)?;
    }
    a.write_all(&outdir.join("plots"))
}
