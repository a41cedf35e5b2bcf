//! Command-line front end: simulate, calibrate, compare scenarios, derive
//! interaction modes and recompute emissions.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tisdyn::calibration::WindowSpec;
use tisdyn::config::RunConfig;
use tisdyn::modes::EpsilonPolicy;
use tisdyn::pipeline::{
    calibrate_pipeline, emissions_pipeline, modes_pipeline, run_all_scenarios, run_pipeline, ConfigSource,
    ErrorKind, Manifest, PipelineError,
};
use tisdyn::scenario::ScenarioSpec;

#[derive(Parser)]
#[command(name = "tisdyn", version, about = "Lotka-Volterra dynamics of interacting technological innovation systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Scenario name overriding the configured one, run with default factors.
        #[arg(long)]
        scenario: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit rolling-window parameters to observed data.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run all seven scenarios and compare them.
    Scenarios {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Interaction modes from a parameter table.
    Modes {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Coefficients at or below this magnitude count as neutral.
        #[arg(long, default_value_t = EpsilonPolicy::default().absolute)]
        epsilon: f64,
        /// Length in years of the last window.
        #[arg(long, default_value_t = WindowSpec::default().length)]
        window_length: u32,
    },
    /// Recompute emissions of a finished run from its sales.
    Emissions {
        #[arg(long)]
        run: PathBuf,
    },
}

fn load(path: &Path) -> Result<RunConfig, PipelineError> {
    RunConfig::load(path).map_err(|e| PipelineError::config("load config", e))
}

fn out_dir(flag: Option<PathBuf>, configured: Option<PathBuf>, fallback: &str) -> PathBuf {
    flag.or(configured).unwrap_or_else(|| PathBuf::from(fallback))
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn summarize(manifest: &Manifest, dir: &Path) {
    println!("{}: {} files written to {}", manifest.command, manifest.outputs.len() + 1, dir.display());
    for (name, spans) in &manifest.interventions {
        for (start, end) in spans {
            println!("  {name}: transition intervention {start}-{end}");
        }
    }
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Simulate { config, scenario, out } => {
            let snapshot = load(&config)?;
            let resolved = snapshot.resolve(&base_dir(&config)).map_err(|e| PipelineError::config("resolve config", e))?;
            let spec = match scenario {
                Some(name) => ScenarioSpec::by_name(&name).map_err(|e| {
                    eprintln!("  expected one of {}", ScenarioSpec::NAMES.join(", "));
                    PipelineError::new(ErrorKind::Config, "select scenario", e)
                })?,
                None => resolved.scenario,
            };
            let dir = out_dir(out, resolved.output_dir.clone(), "out");
            let source = ConfigSource { snapshot: &snapshot, path: Some(&config) };
            let manifest = run_pipeline(&resolved, &source, &spec, &dir)?;
            summarize(&manifest, &dir);
        }
        Command::Calibrate { config, data, out } => {
            let snapshot = load(&config)?;
            let resolved = snapshot.resolve(&base_dir(&config)).map_err(|e| PipelineError::config("resolve config", e))?;
            let dir = out_dir(out, resolved.output_dir.clone(), "out");
            let source = ConfigSource { snapshot: &snapshot, path: Some(&config) };
            let manifest = calibrate_pipeline(&resolved, &source, &data, &dir)?;
            summarize(&manifest, &dir);
        }
        Command::Scenarios { config, out } => {
            let snapshot = load(&config)?;
            let resolved = snapshot.resolve(&base_dir(&config)).map_err(|e| PipelineError::config("resolve config", e))?;
            let dir = out_dir(out, resolved.output_dir.clone(), "out");
            let source = ConfigSource { snapshot: &snapshot, path: Some(&config) };
            let manifest = run_all_scenarios(&resolved, &source, &dir)?;
            summarize(&manifest, &dir);
        }
        Command::Modes { params, out, epsilon, window_length } => {
            let policy = EpsilonPolicy { absolute: epsilon, relative: None };
            let manifest = modes_pipeline(&params, &out, &policy, window_length)?;
            summarize(&manifest, &out);
        }
        Command::Emissions { run } => {
            emissions_pipeline(&run)?;
            println!("emissions: recomputed {}", run.join("emissions.csv").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
