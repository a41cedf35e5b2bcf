//! Python bindings: load or build a model, run scenarios, fit observed
//! data and classify interaction modes.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::PathBuf;

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use tisdyn::calibration::{fit_all, FitMethod, FitOptions, WindowSpec};
use tisdyn::config::RunConfig;
use tisdyn::io::read_observed;
use tisdyn::modes::classify_pair as classify;
use tisdyn::run::{run_scenario, run_scenarios, ModelInputs, ScenarioRun};
use tisdyn::scenario::{detect_structural_decline as detect, ScenarioSpec};
use tisdyn::technology::Technology;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn role(name: &str) -> PyResult<Technology> {
    match name {
        "incumbent" => Ok(Technology::Incumbent),
        "hybrid" => Ok(Technology::Hybrid),
        "emerging" => Ok(Technology::Emerging),
        other => Err(PyValueError::new_err(format!("unknown role `{other}`; expected incumbent, hybrid or emerging"))),
    }
}

/// Simulation inputs: parameters, initial state, drivers and factors.
#[pyclass(frozen, name = "Model")]
struct PyModel {
    inputs: ModelInputs,
    scenario: ScenarioSpec,
    window: WindowSpec,
    fit: FitOptions,
}

#[pymethods]
impl PyModel {
    /// The built-in three-technology vehicle fixture.
    #[staticmethod]
    fn demo() -> Self {
        let inputs = ModelInputs::demo();
        let fit = FitOptions { dt: inputs.simulation.dt, ..FitOptions::default() };
        Self { inputs, scenario: ScenarioSpec::Baseline, window: WindowSpec::default(), fit }
    }

    /// Loads a TOML run configuration; relative paths resolve against its directory.
    #[staticmethod]
    fn from_config(path: PathBuf) -> PyResult<Self> {
        let cfg = RunConfig::load(&path).map_err(value_err)?;
        let base = path.parent().map(|p| p.to_path_buf()).unwrap_or_default();
        let r = cfg.resolve(&base).map_err(value_err)?;
        Ok(Self { inputs: r.inputs, scenario: r.scenario, window: r.window, fit: r.fit })
    }

    #[getter]
    fn technologies(&self) -> Vec<String> {
        (0..self.inputs.roster.len()).map(|i| self.inputs.roster.name(i).to_string()).collect()
    }

    #[getter]
    fn sub_dimensions(&self) -> Vec<&'static str> {
        self.inputs.catalog.subs().iter().map(|s| s.name()).collect()
    }

    #[getter]
    fn configured_scenario(&self) -> &'static str {
        self.scenario.name()
    }

    /// Runs one scenario with its default factors, or the configured
    /// scenario when no name is given.
    #[pyo3(signature = (scenario = None))]
    fn run(&self, py: Python<'_>, scenario: Option<&str>) -> PyResult<Run> {
        let spec = match scenario {
            Some(name) if name != self.scenario.name() => ScenarioSpec::by_name(name).map_err(value_err)?,
            _ => self.scenario,
        };
        let run = py.detach(|| run_scenario(&self.inputs, &spec)).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        Ok(Run { run, inputs: self.inputs.clone() })
    }

    /// Runs all seven scenarios in parallel, keyed by name.
    fn run_all(&self, py: Python<'_>) -> PyResult<BTreeMap<String, Run>> {
        let specs: Vec<ScenarioSpec> = ScenarioSpec::all_defaults()
            .into_iter()
            .map(|s| if s.name() == self.scenario.name() { self.scenario } else { s })
            .collect();
        let runs = py.detach(|| run_scenarios(&self.inputs, &specs));
        runs.into_iter()
            .map(|r| {
                let run = r.map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
                Ok((run.spec.name().to_string(), Run { run, inputs: self.inputs.clone() }))
            })
            .collect()
    }

    /// Fits rolling windows to a `year,technology,sub_dimension,level` CSV.
    /// Returns one dict per window with `start`, `end`, `filled` and the
    /// coefficients keyed by `technology/sub_dimension`.
    #[pyo3(signature = (data, window_length = None, stride = None, method = None))]
    fn calibrate(
        &self,
        py: Python<'_>,
        data: PathBuf,
        window_length: Option<u32>,
        stride: Option<u32>,
        method: Option<&str>,
    ) -> PyResult<Vec<Window>> {
        let file = File::open(&data).map_err(|e| PyOSError::new_err(format!("{}: {e}", data.display())))?;
        let series = read_observed(file, &self.inputs.roster, &self.inputs.catalog).map_err(value_err)?;
        let spec = WindowSpec { length: window_length.unwrap_or(self.window.length), stride: stride.unwrap_or(self.window.stride) };
        let method = match method {
            None => self.fit.method,
            Some("linear") => FitMethod::Linear,
            Some("refined") => FitMethod::Refined,
            Some(other) => return Err(PyValueError::new_err(format!("unknown method `{other}`"))),
        };
        let opts = FitOptions { method, ..self.fit };
        let fit = py.detach(|| fit_all(&series, &spec, &opts)).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        let (roster, catalog) = (&self.inputs.roster, &self.inputs.catalog);
        Ok(fit
            .windows
            .iter()
            .map(|w| {
                let mut coefficients = BTreeMap::new();
                for i in 0..roster.len() {
                    for (d, sub) in catalog.subs().iter().enumerate() {
                        let cross = (0..roster.len())
                            .filter(|&j| j != i)
                            .map(|j| (roster.name(j).to_string(), w.block.interaction(i, j, d)))
                            .collect();
                        coefficients.insert(
                            format!("{}/{}", roster.name(i), sub.name()),
                            Coefficients { a: w.block.growth(i, d), b: w.block.decline(i, d), c: cross },
                        );
                    }
                }
                Window { start: w.start, end: w.end, filled: w.is_filled(), coefficients }
            })
            .collect())
    }
}

#[pyclass(frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
struct Coefficients {
    a: f64,
    b: f64,
    c: BTreeMap<String, f64>,
}

#[pyclass(frozen, get_all)]
struct Window {
    start: i32,
    end: i32,
    filled: bool,
    coefficients: BTreeMap<String, Coefficients>,
}

/// Result of one scenario run.
#[pyclass(frozen)]
struct Run {
    run: ScenarioRun,
    inputs: ModelInputs,
}

impl Run {
    fn per_tech(&self, f: impl Fn(usize) -> Vec<f64>) -> BTreeMap<String, Vec<f64>> {
        (0..self.inputs.roster.len()).map(|i| (self.inputs.roster.name(i).to_string(), f(i))).collect()
    }
}

#[pymethods]
impl Run {
    #[getter]
    fn scenario(&self) -> &'static str {
        self.run.spec.name()
    }

    /// Annual sample years.
    #[getter]
    fn years(&self) -> Vec<i32> {
        self.run.trajectory.annual().into_iter().map(|(y, _)| y).collect()
    }

    /// Annual level of one technology and sub-dimension.
    fn levels(&self, technology: &str, sub_dimension: &str) -> PyResult<Vec<f64>> {
        let i = self
            .inputs
            .roster
            .lookup(technology)
            .ok_or_else(|| PyValueError::new_err(format!("unknown technology `{technology}`")))?;
        let d = self.inputs.catalog.lookup(sub_dimension).map_err(value_err)?;
        Ok(self.run.trajectory.annual().into_iter().map(|(_, s)| s.level(i, d)).collect())
    }

    /// Annual market shares per technology.
    fn shares(&self) -> PyResult<BTreeMap<String, Vec<f64>>> {
        let d = self.inputs.catalog.share_index().ok_or_else(|| PyValueError::new_err("no market_share sub-dimension"))?;
        let annual = self.run.trajectory.annual();
        Ok(self.per_tech(|i| annual.iter().map(|(_, s)| s.level(i, d)).collect()))
    }

    fn sales(&self) -> BTreeMap<String, Vec<f64>> {
        self.per_tech(|i| self.run.sales.values[i].clone())
    }

    fn stock(&self) -> BTreeMap<String, Vec<f64>> {
        self.per_tech(|i| self.run.stocks.values[i].clone())
    }

    /// Annual emissions in Mt CO2 per technology.
    fn emissions(&self) -> BTreeMap<String, Vec<f64>> {
        self.per_tech(|i| self.run.emissions.annual[i].clone())
    }

    /// Cumulative emissions over all technologies, one value per year.
    fn cumulative_emissions(&self) -> Vec<f64> {
        self.run.emissions.total_cumulative.clone()
    }

    /// (start, end) years of transition interventions.
    #[getter]
    fn interventions(&self) -> Vec<(i32, i32)> {
        self.run.interventions.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "Run(scenario={:?}, cumulative_emissions={:.1} Mt)",
            self.run.spec.name(),
            self.run.emissions.final_cumulative_total()
        )
    }
}

/// Mode of a pair from `c_ij` (effect of j on i) and `c_ji`, positive
/// meaning harm. Returns `(mode, beneficiary, victim)` with roles
/// `incumbent`, `hybrid` or `emerging`.
#[pyfunction]
#[pyo3(signature = (c_ij, c_ji, i = "incumbent", j = "emerging", epsilon = 1e-6))]
fn classify_pair(c_ij: f64, c_ji: f64, i: &str, j: &str, epsilon: f64) -> PyResult<(String, Option<String>, Option<String>)> {
    let label = classify(c_ij, c_ji, role(i)?, role(j)?, epsilon);
    let key = |t: Technology| t.key().to_string();
    Ok((label.mode.name().to_string(), label.beneficiary.map(key), label.victim.map(key)))
}

/// True when the mean of the last three year-over-year changes is negative.
#[pyfunction]
fn detect_structural_decline(annual_shares: Vec<f64>) -> bool {
    detect(&annual_shares)
}

#[pyfunction]
fn scenario_names() -> Vec<&'static str> {
    ScenarioSpec::NAMES.to_vec()
}

#[pymodule]
#[pyo3(name = "tisdyn")]
fn tisdyn_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_class::<Run>()?;
    m.add_class::<Window>()?;
    m.add_class::<Coefficients>()?;
    m.add_function(wrap_pyfunction!(classify_pair, m)?)?;
    m.add_function(wrap_pyfunction!(detect_structural_decline, m)?)?;
    m.add_function(wrap_pyfunction!(scenario_names, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
