//! File-producing entry points behind the CLI subcommands. Every command
//! writes a `manifest.json` recording the configuration, input and output
//! digests and stage timings; a failing command removes the partial outputs
//! and records the stage that failed.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calibration::{fit_all, goodness_of_fit, CalibrationError};
use crate::config::{ConfigError, ResolvedConfig, RunConfig};
use crate::emissions::{emissions, stock_from_sales, EmissionsError};
use crate::io::{self, ComparisonInput, IoError};
use crate::modes::{mode_series, pairs_of, EpsilonPolicy, ModeError, SideModes};
use crate::report::{behavior_series, emit_plot_data, run_modes, timeline_windows, PlotSource};
use crate::run::{run_scenario, run_scenarios, RunError, ScenarioRun};
use crate::scenario::ScenarioSpec;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad configuration or input content.
    Config,
    /// Blow-up or an unfittable calibration.
    Numerical,
    /// Files that cannot be read or written.
    Io,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineError {
    pub kind: ErrorKind,
    pub stage: String,
    pub message: String,
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} failed: {}", self.stage, self.message)
    }
}

impl std::error::Error for PipelineError {}

impl PipelineError {
    pub fn new(kind: ErrorKind, stage: &str, message: impl fmt::Display) -> Self {
        Self { kind, stage: stage.to_string(), message: message.to_string() }
    }

    /// Process exit status: 2 configuration, 3 numerical, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Config => 2,
            ErrorKind::Numerical => 3,
            ErrorKind::Io => 4,
        }
    }

    pub fn config(stage: &str, e: ConfigError) -> Self {
        let kind = if matches!(e, ConfigError::Io { .. }) { ErrorKind::Io } else { ErrorKind::Config };
        Self::new(kind, stage, e)
    }

    fn run(stage: &str, e: RunError) -> Self {
        Self::new(if e.is_numerical() { ErrorKind::Numerical } else { ErrorKind::Config }, stage, e)
    }

    fn io(stage: &str, e: IoError) -> Self {
        let kind = match e {
            IoError::Parse { .. } | IoError::Header(_) => ErrorKind::Config,
            _ => ErrorKind::Io,
        };
        Self::new(kind, stage, e)
    }

    fn calibration(stage: &str, e: CalibrationError) -> Self {
        let kind = match e {
            CalibrationError::NoFittableWindow(_) => ErrorKind::Numerical,
            _ => ErrorKind::Config,
        };
        Self::new(kind, stage, e)
    }

    fn modes(stage: &str, e: ModeError) -> Self {
        Self::new(ErrorKind::Config, stage, e)
    }

    fn emissions(stage: &str, e: EmissionsError) -> Self {
        Self::new(ErrorKind::Config, stage, e)
    }
}

/// Contents of `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub command: String,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    /// Directory that relative paths in `config` resolve against.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_dir: Option<PathBuf>,
    #[serde(default)]
    pub config: serde_json::Value,
    /// SHA-256 of input files, keyed by path.
    #[serde(default)]
    pub inputs: BTreeMap<String, String>,
    /// SHA-256 of output files, keyed by path relative to the output directory.
    #[serde(default)]
    pub outputs: BTreeMap<String, String>,
    #[serde(default)]
    pub interventions: BTreeMap<String, Vec<(i32, i32)>>,
    #[serde(default)]
    pub timings_ms: BTreeMap<String, f64>,
}

impl Manifest {
    fn new(command: &str) -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            status: "ok".into(),
            failed_stage: None,
            error: None,
            scenario: None,
            config_dir: None,
            config: serde_json::Value::Null,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            interventions: BTreeMap::new(),
            timings_ms: BTreeMap::new(),
        }
    }

    pub fn read(dir: &Path) -> Result<Manifest, PipelineError> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| PipelineError::new(ErrorKind::Io, "read manifest", e))?;
        serde_json::from_str(&text).map_err(|e| PipelineError::new(ErrorKind::Config, "read manifest", e))
    }
}

pub fn sha256_file(path: &Path) -> Result<String, std::io::Error> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

/// Tracks files written under one output directory.
struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self, PipelineError> {
        fs::create_dir_all(dir).map_err(|e| PipelineError::new(ErrorKind::Io, "create output directory", e))?;
        Ok(Self { dir: dir.to_path_buf(), written: Vec::new() })
    }

    fn write(
        &mut self,
        stage: &str,
        name: &str,
        f: impl FnOnce(BufWriter<File>) -> Result<(), IoError>,
    ) -> Result<(), PipelineError> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| PipelineError::new(ErrorKind::Io, stage, e))?;
        }
        self.written.push(path.clone());
        let file = File::create(&path).map_err(|e| PipelineError::new(ErrorKind::Io, stage, e))?;
        f(BufWriter::new(file)).map_err(|e| PipelineError::io(stage, e))
    }

    fn track(&mut self, paths: impl IntoIterator<Item = PathBuf>) {
        self.written.extend(paths);
    }

    fn digests(&self) -> Result<BTreeMap<String, String>, PipelineError> {
        let mut out = BTreeMap::new();
        for p in &self.written {
            let rel = p.strip_prefix(&self.dir).unwrap_or(p).to_string_lossy().replace('\\', "/");
            let d = sha256_file(p).map_err(|e| PipelineError::new(ErrorKind::Io, "digest outputs", e))?;
            out.insert(rel, d);
        }
        Ok(out)
    }

    fn remove_all(&mut self) {
        for p in self.written.drain(..) {
            let _ = fs::remove_file(&p);
        }
    }
}

struct Timer {
    timings: BTreeMap<String, f64>,
}

impl Timer {
    fn new() -> Self {
        Self { timings: BTreeMap::new() }
    }

    fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let t0 = Instant::now();
        let out = f();
        *self.timings.entry(name.to_string()).or_default() += t0.elapsed().as_secs_f64() * 1e3;
        out
    }
}

fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<(), PipelineError> {
    let text = serde_json::to_string_pretty(manifest).expect("manifest is plain data");
    fs::write(dir.join(MANIFEST), text + "\n").map_err(|e| PipelineError::new(ErrorKind::Io, "write manifest", e))
}

/// Runs `body`, then writes the manifest either with output digests or,
/// after removing partial outputs, with the failing stage.
fn with_manifest(
    dir: &Path,
    mut manifest: Manifest,
    body: impl FnOnce(&mut Outputs, &mut Timer, &mut Manifest) -> Result<(), PipelineError>,
) -> Result<Manifest, PipelineError> {
    let mut outputs = Outputs::new(dir)?;
    let mut timer = Timer::new();
    let result = body(&mut outputs, &mut timer, &mut manifest).and_then(|()| {
        manifest.outputs = outputs.digests()?;
        Ok(())
    });
    manifest.timings_ms = timer.timings;
    match result {
        Ok(()) => {
            write_manifest(dir, &manifest)?;
            Ok(manifest)
        }
        Err(e) => {
            outputs.remove_all();
            remove_empty_dirs(dir);
            manifest.status = "failed".into();
            manifest.failed_stage = Some(e.stage.clone());
            manifest.error = Some(e.message.clone());
            manifest.outputs.clear();
            let _ = write_manifest(dir, &manifest);
            Err(e)
        }
    }
}

fn remove_empty_dirs(dir: &Path) {
    if let Ok(entries) = fs::read_dir(dir) {
        for e in entries.flatten() {
            let p = e.path();
            if p.is_dir() {
                remove_empty_dirs(&p);
                let _ = fs::remove_dir(&p);
            }
        }
    }
}

fn input_digest(manifest: &mut Manifest, path: &Path) -> Result<(), PipelineError> {
    let d = sha256_file(path).map_err(|e| PipelineError::new(ErrorKind::Io, "read input", format!("{}: {e}", path.display())))?;
    manifest.inputs.insert(path.display().to_string(), d);
    Ok(())
}

/// Where a command's configuration came from.
pub struct ConfigSource<'a> {
    pub snapshot: &'a RunConfig,
    pub path: Option<&'a Path>,
}

impl ConfigSource<'_> {
    fn stamp(&self, manifest: &mut Manifest) -> Result<(), PipelineError> {
        manifest.config = self.snapshot.to_json();
        if let Some(p) = self.path {
            manifest.config_dir = p.parent().map(|d| d.to_path_buf());
            input_digest(manifest, p)?;
        }
        Ok(())
    }
}

fn write_run_files(
    outputs: &mut Outputs,
    timer: &mut Timer,
    prefix: &str,
    run: &ScenarioRun,
    resolved: &ResolvedConfig,
) -> Result<(), PipelineError> {
    let inputs = &resolved.inputs;
    let (roster, catalog) = (&inputs.roster, &inputs.catalog);
    let end = inputs.simulation.t_end;
    let name = run.spec.name();
    let modes = timer
        .stage("modes", || run_modes(run, roster, catalog, &resolved.modes, end))
        .map_err(|e| PipelineError::modes("modes", e))?;
    timer.stage("write", || -> Result<(), PipelineError> {
        outputs.write("write", &format!("{prefix}trajectory.csv"), |w| io::write_trajectory(w, &run.trajectory, roster, catalog))?;
        outputs.write("write", &format!("{prefix}parameters.csv"), |w| io::write_timeline(w, &run.timeline, roster, catalog))?;
        outputs.write("write", &format!("{prefix}modes.csv"), |w| io::write_modes(w, &modes, roster))?;
        outputs.write("write", &format!("{prefix}emissions.csv"), |w| io::write_emissions(w, name, &run.emissions, roster))?;
        outputs.write("write", &format!("{prefix}sales.csv"), |w| io::write_sales(w, name, &run.sales, &run.stocks, roster))
    })
}

fn plot_run(
    outputs: &mut Outputs,
    timer: &mut Timer,
    runs: &[&ScenarioRun],
    resolved: &ResolvedConfig,
) -> Result<(), PipelineError> {
    let inputs = &resolved.inputs;
    let end = inputs.simulation.t_end;
    let eps = resolved.modes.policy.absolute;
    timer.stage("plots", || {
        let mut modes = Vec::new();
        let mut behavior = Vec::new();
        for run in runs {
            modes.push(
                run_modes(run, &inputs.roster, &inputs.catalog, &resolved.modes, end)
                    .map_err(|e| PipelineError::modes("plots", e))?,
            );
            let windows = timeline_windows(&run.timeline, end);
            behavior.push(behavior_series(&windows, &run.active_techs(), &inputs.catalog, eps));
        }
        let sources: Vec<PlotSource> = runs
            .iter()
            .enumerate()
            .map(|(k, r)| PlotSource {
                scenario: r.spec.name(),
                trajectory: Some(&r.trajectory),
                modes: &modes[k],
                behavior: &behavior[k],
                emissions: Some(&r.emissions),
            })
            .collect();
        let files = emit_plot_data(&outputs.dir, &sources, &inputs.roster, &inputs.catalog)
            .map_err(|e| PipelineError::io("plots", e))?;
        outputs.track(files);
        Ok(())
    })
}

/// Simulates one scenario and writes trajectory, parameters, modes,
/// emissions, sales, plot tables and the manifest into `out`.
pub fn run_pipeline(
    resolved: &ResolvedConfig,
    source: &ConfigSource<'_>,
    spec: &ScenarioSpec,
    out: &Path,
) -> Result<Manifest, PipelineError> {
    let mut manifest = Manifest::new("simulate");
    manifest.scenario = Some(spec.name().to_string());
    source.stamp(&mut manifest)?;
    with_manifest(out, manifest, |outputs, timer, manifest| {
        let run = timer
            .stage("simulate", || run_scenario(&resolved.inputs, spec))
            .map_err(|e| PipelineError::run("simulate", e))?;
        manifest.interventions.insert(spec.name().to_string(), run.interventions.clone());
        write_run_files(outputs, timer, "", &run, resolved)?;
        plot_run(outputs, timer, &[&run], resolved)
    })
}

/// All seven scenarios. The configured scenario's factors replace that
/// variant's defaults; the others run with defaults.
pub fn scenario_set(configured: &ScenarioSpec) -> Vec<ScenarioSpec> {
    ScenarioSpec::all_defaults()
        .into_iter()
        .map(|s| if s.name() == configured.name() { *configured } else { s })
        .collect()
}

/// Runs every scenario concurrently into `out/<scenario>/`, then writes
/// `comparison.csv`, plot tables and a top-level manifest.
pub fn run_all_scenarios(
    resolved: &ResolvedConfig,
    source: &ConfigSource<'_>,
    out: &Path,
) -> Result<Manifest, PipelineError> {
    let mut manifest = Manifest::new("scenarios");
    source.stamp(&mut manifest)?;
    let specs = scenario_set(&resolved.scenario);
    with_manifest(out, manifest, |outputs, timer, manifest| {
        let runs = timer.stage("simulate", || run_scenarios(&resolved.inputs, &specs));
        let runs: Vec<ScenarioRun> = runs
            .into_iter()
            .zip(&specs)
            .map(|(r, s)| r.map_err(|e| PipelineError::run(&format!("simulate {}", s.name()), e)))
            .collect::<Result<_, _>>()?;
        for r in &runs {
            manifest.interventions.insert(r.spec.name().to_string(), r.interventions.clone());
        }

        // Per-scenario directories are independent, so write them in parallel.
        let written: Vec<Result<(Vec<PathBuf>, BTreeMap<String, f64>), PipelineError>> = runs
            .par_iter()
            .map(|run| {
                let mut sub = Outputs { dir: out.to_path_buf(), written: Vec::new() };
                let mut t = Timer::new();
                let res = write_run_files(&mut sub, &mut t, &format!("{}/", run.spec.name()), run, resolved);
                let files = std::mem::take(&mut sub.written);
                match res {
                    Ok(()) => Ok((files, t.timings)),
                    Err(e) => {
                        for f in &files {
                            let _ = fs::remove_file(f);
                        }
                        Err(e)
                    }
                }
            })
            .collect();
        for w in written {
            let (files, timings) = w?;
            outputs.track(files);
            for (k, v) in timings {
                *timer.timings.entry(k).or_default() += v;
            }
        }

        let share = resolved
            .inputs
            .catalog
            .share_index()
            .ok_or_else(|| PipelineError::new(ErrorKind::Config, "comparison", "no market_share sub-dimension"))?;
        let table: Vec<ComparisonInput> = runs
            .iter()
            .map(|r| ComparisonInput {
                scenario: r.spec.name(),
                trajectory: &r.trajectory,
                sales: &r.sales,
                emissions: &r.emissions,
            })
            .collect();
        timer.stage("write", || {
            outputs.write("comparison", "comparison.csv", |w| io::write_comparison(w, &table, &resolved.inputs.roster, share))
        })?;
        let refs: Vec<&ScenarioRun> = runs.iter().collect();
        plot_run(outputs, timer, &refs, resolved)
    })
}

/// Fits rolling windows to observed data and writes the parameter table,
/// goodness of fit, mode series, plot tables and manifest.
pub fn calibrate_pipeline(
    resolved: &ResolvedConfig,
    source: &ConfigSource<'_>,
    data: &Path,
    out: &Path,
) -> Result<Manifest, PipelineError> {
    let mut manifest = Manifest::new("calibrate");
    source.stamp(&mut manifest)?;
    input_digest(&mut manifest, data)?;
    let inputs = &resolved.inputs;
    let (roster, catalog) = (&inputs.roster, &inputs.catalog);
    with_manifest(out, manifest, |outputs, timer, _| {
        let series = timer.stage("read data", || -> Result<_, PipelineError> {
            let f = File::open(data).map_err(|e| PipelineError::new(ErrorKind::Io, "read data", e))?;
            io::read_observed(f, roster, catalog).map_err(|e| PipelineError::io("read data", e))
        })?;
        let fit = timer
            .stage("calibrate", || fit_all(&series, &resolved.window, &resolved.fit))
            .map_err(|e| PipelineError::calibration("calibrate", e))?;
        let gof = timer.stage("goodness of fit", || goodness_of_fit(&fit, &series, &resolved.fit));
        let windows = fit.window_coefficients();
        let techs: Vec<usize> = (0..roster.len()).collect();
        let modes = timer
            .stage("modes", || {
                mode_series(&windows, roster, catalog, &pairs_of(&techs), &resolved.modes.policy, SideModes::CoefficientSum)
            })
            .map_err(|e| PipelineError::modes("modes", e))?;
        let behavior = behavior_series(&windows, &techs, catalog, resolved.modes.policy.absolute);
        timer.stage("write", || -> Result<(), PipelineError> {
            outputs.write("write", "parameters.csv", |w| io::write_fit(w, &fit, roster, catalog))?;
            outputs.write("write", "goodness.csv", |w| io::write_goodness(w, &gof, roster, catalog))?;
            outputs.write("write", "modes.csv", |w| io::write_modes(w, &modes, roster))?;
            let src = PlotSource { scenario: "calibration", trajectory: None, modes: &modes, behavior: &behavior, emissions: None };
            let files = emit_plot_data(&outputs.dir, &[src], roster, catalog).map_err(|e| PipelineError::io("plots", e))?;
            outputs.track(files);
            Ok(())
        })
    })
}

/// Mode series straight from a parameter table, with side modes from
/// coefficient sums. The last window is closed `length` years after its
/// start.
pub fn modes_pipeline(params: &Path, out: &Path, policy: &EpsilonPolicy, last_window_length: u32) -> Result<Manifest, PipelineError> {
    let mut manifest = Manifest::new("modes");
    input_digest(&mut manifest, params)?;
    with_manifest(out, manifest, |outputs, timer, _| {
        let table = timer.stage("read parameters", || -> Result<_, PipelineError> {
            let f = File::open(params).map_err(|e| PipelineError::new(ErrorKind::Io, "read parameters", e))?;
            io::read_parameters(f, None, None).map_err(|e| PipelineError::io("read parameters", e))
        })?;
        let last = table.timeline.segments().last().map(|s| s.0).unwrap_or(0);
        let windows: Vec<_> = timeline_windows(&table.timeline, last + last_window_length as i32)
            .into_iter()
            .map(|mut w| {
                if table.filled.contains(&w.start) {
                    w.block = None;
                }
                w
            })
            .collect();
        let techs: Vec<usize> = (0..table.roster.len()).collect();
        let modes = timer
            .stage("modes", || {
                mode_series(&windows, &table.roster, &table.catalog, &pairs_of(&techs), policy, SideModes::CoefficientSum)
            })
            .map_err(|e| PipelineError::modes("modes", e))?;
        let behavior = behavior_series(&windows, &techs, &table.catalog, policy.absolute);
        timer.stage("write", || -> Result<(), PipelineError> {
            outputs.write("write", "modes.csv", |w| io::write_modes(w, &modes, &table.roster))?;
            let src = PlotSource { scenario: "parameters", trajectory: None, modes: &modes, behavior: &behavior, emissions: None };
            let files = emit_plot_data(&outputs.dir, &[src], &table.roster, &table.catalog)
                .map_err(|e| PipelineError::io("plots", e))?;
            outputs.track(files);
            Ok(())
        })
    })
}

/// Recomputes `emissions.csv` of a finished single-scenario run from its
/// `sales.csv` and the configuration recorded in its manifest; refreshes
/// the manifest's digest for that file.
pub fn emissions_pipeline(run_dir: &Path) -> Result<Manifest, PipelineError> {
    let mut manifest = Manifest::read(run_dir)?;
    if manifest.status != "ok" {
        return Err(PipelineError::new(ErrorKind::Config, "read manifest", "the run did not complete"));
    }
    let snapshot: RunConfig = serde_json::from_value(manifest.config.clone())
        .map_err(|e| PipelineError::new(ErrorKind::Config, "read manifest", e))?;
    let base = manifest.config_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    let resolved = snapshot.resolve(&base).map_err(|e| PipelineError::config("resolve config", e))?;
    let inputs = &resolved.inputs;
    let t0 = Instant::now();
    let sales_path = run_dir.join("sales.csv");
    let f = File::open(&sales_path).map_err(|e| PipelineError::new(ErrorKind::Io, "read sales", e))?;
    let (scenario, sales) = io::read_sales(f, &inputs.roster).map_err(|e| PipelineError::io("read sales", e))?;
    let stocks = stock_from_sales(&sales, inputs.lifetime).map_err(|e| PipelineError::emissions("emissions", e))?;
    let report = emissions(&stocks, &inputs.roster, &inputs.factors).map_err(|e| PipelineError::emissions("emissions", e))?;
    let path = run_dir.join("emissions.csv");
    let file = File::create(&path).map_err(|e| PipelineError::new(ErrorKind::Io, "write", e))?;
    io::write_emissions(BufWriter::new(file), &scenario, &report, &inputs.roster).map_err(|e| PipelineError::io("write", e))?;
    let digest = sha256_file(&path).map_err(|e| PipelineError::new(ErrorKind::Io, "digest outputs", e))?;
    manifest.outputs.insert("emissions.csv".into(), digest);
    manifest.timings_ms.insert("emissions".into(), t0.elapsed().as_secs_f64() * 1e3);
    write_manifest(run_dir, &manifest)?;
    Ok(manifest)
}
