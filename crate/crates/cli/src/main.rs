use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use implicit_bed_cli::{
    equidistant_comparison, export_plot_data, random_baseline, run_experiment, CliError, CliResult, EstimatorKind,
    ExperimentConfig, Method, ModelKind,
};

#[derive(Parser)]
#[command(name = "implicit-bed", version, about = "Optimal experimental design for simulator-based epidemic models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Select a design and run posterior replicates at it.
    Design(Overrides),
    /// Posteriors at uniformly random designs.
    Baseline(Overrides),
    /// Compare the BO design with evenly spaced times.
    CompareEq(Overrides),
    /// Verify a run directory and write plot-ready files.
    Export {
        #[arg(long)]
        outdir: PathBuf,
    },
}

#[derive(Args)]
struct Overrides {
    /// JSON experiment configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    model: Option<ModelKind>,
    #[arg(long, value_enum)]
    method: Option<Method>,
    #[arg(long, value_enum)]
    estimator: Option<EstimatorKind>,
    #[arg(long)]
    dims: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    outdir: Option<PathBuf>,
}

impl Overrides {
    /// Reads the config, applies the flags and then `forced`, and validates.
    fn resolve(&self, forced: Option<Method>) -> CliResult<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::Validation(vec![format!("{}: {e}", path.display())]))?
            }
            None => ExperimentConfig::default(),
        };
        if let Some(v) = self.model {
            cfg.model = v;
        }
        if let Some(v) = self.method {
            cfg.method = v;
        }
        if let Some(v) = self.estimator {
            cfg.estimator = v;
        }
        if let Some(v) = self.dims {
            cfg.dims = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.budget {
            cfg.budget = v;
        }
        if let Some(v) = self.replicates {
            cfg.replicates = v;
        }
        if let Some(v) = &self.outdir {
            cfg.outdir = v.clone();
        }
        if let Some(v) = forced {
            cfg.method = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Design(o) => {
            let cfg = o.resolve(None)?;
            let r = run_experiment(&cfg)?;
            println!(
                "design {:?} utility {:.4} (se {:.4}); {} files in {}",
                r.summary.design.times(),
                r.summary.utility,
                r.summary.std_error,
                r.manifest.files.len(),
                cfg.outdir.display()
            );
        }
        Command::Baseline(o) => {
            let cfg = o.resolve(Some(Method::Random))?;
            let r = random_baseline(&cfg)?;
            println!(
                "{} baseline replicates ({} failed); sd of medians {:?}",
                r.replicates.len(),
                r.failures.len(),
                r.sd_of_medians
            );
        }
        Command::CompareEq(o) => {
            let cfg = o.resolve(Some(Method::Bo))?;
            let (c, _) = equidistant_comparison(&cfg)?;
            println!(
                "U(d_eq) = {:.4}, U(d*) = {:.4}, difference {:.4}",
                c.equidistant_utility, c.optimised_utility, c.difference
            );
        }
        Command::Export { outdir } => {
            let m = export_plot_data(&outdir)?;
            println!("wrote {} plot files to {}", m.files.len(), outdir.join("plots").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
