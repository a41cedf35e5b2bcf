//! Run configuration: a TOML document whose every problem, unknown keys
//! included, is reported together.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::{FitMethod, FitOptions, WindowSpec};
use crate::dynamics::{ParameterTimeline, SimulationConfig, SystemState};
use crate::emissions::{EmissionFactors, FactorSchedule};
use crate::fixture;
use crate::io::{read_observed, read_parameters};
use crate::modes::{AggregationMethod, EpsilonPolicy};
use crate::run::ModelInputs;
use crate::scenario::{Driver, DriverSeries, Elasticity, ElasticityMap, ExogenousDrivers, ScenarioSpec};
use crate::technology::{Roster, Technology, TechnologyId};
use crate::tis::{DimensionCatalog, Side, SubDimension};

/// One problem found in a configuration, located by its dotted key path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.key.is_empty() {
            f.write_str(&self.message)
        } else {
            write!(f, "{}: {}", self.key, self.message)
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid configuration:\n{}", .0.iter().map(|i| format!("  {i}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<ConfigIssue>),
}

impl ConfigError {
    pub fn issues(&self) -> &[ConfigIssue] {
        match self {
            ConfigError::Invalid(v) => v,
            ConfigError::Io { .. } => &[],
        }
    }
}

fn issue(key: impl Into<String>, message: impl Into<String>) -> ConfigIssue {
    ConfigIssue { key: key.into(), message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TechnologiesSection {
    pub roles: Vec<Technology>,
    /// Display names keyed by role.
    pub names: BTreeMap<String, String>,
}

impl Default for TechnologiesSection {
    fn default() -> Self {
        Self {
            roles: Technology::ALL.to_vec(),
            names: Technology::ALL.iter().map(|t| (t.key().to_string(), t.default_name().to_string())).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CatalogSection {
    pub sub_dimensions: Vec<String>,
    /// Side overrides for the assignable sub-dimensions.
    pub sides: BTreeMap<String, Side>,
}

impl Default for CatalogSection {
    fn default() -> Self {
        Self { sub_dimensions: SubDimension::ALL.iter().map(|s| s.name().to_string()).collect(), sides: BTreeMap::new() }
    }
}

/// Either the shipped fixture (`source = "demo"`) or a file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SourceSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

impl SourceSection {
    pub fn demo() -> Self {
        Self { source: Some("demo".into()), file: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationSection {
    pub window_length: u32,
    pub window_stride: u32,
    pub method: FitMethod,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        let w = WindowSpec::default();
        Self { window_length: w.length, window_stride: w.stride, method: FitMethod::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModesSection {
    pub epsilon: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relative_epsilon: Option<f64>,
    pub aggregation: AggregationMethod,
}

impl Default for ModesSection {
    fn default() -> Self {
        Self { epsilon: EpsilonPolicy::default().absolute, relative_epsilon: None, aggregation: AggregationMethod::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DriversSection {
    /// `"demo"` fills any series not given explicitly.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oil_price: Option<DriverSeries>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tax_registration_fees: Option<DriverSeries>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gdp_growth: Option<DriverSeries>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wtw_costs: Option<DriverSeries>,
}

impl Default for DriversSection {
    fn default() -> Self {
        Self { source: Some("demo".into()), oil_price: None, tax_registration_fees: None, gdp_growth: None, wtw_costs: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MarketSection {
    /// Total sales in the first simulated year.
    pub base: f64,
}

impl Default for MarketSection {
    fn default() -> Self {
        Self { base: fixture::BASE_MARKET }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmissionsSection {
    pub lifetime: u32,
    /// Keyed by role or display name; tCO2e per vehicle-year.
    pub factors: BTreeMap<String, FactorSchedule>,
}

impl Default for EmissionsSection {
    fn default() -> Self {
        let factors = fixture::demo_factors()
            .entries()
            .iter()
            .map(|(t, s)| (t.key().to_string(), s.clone()))
            .collect();
        Self { lifetime: 15, factors }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

fn default_elasticities() -> Vec<Elasticity> {
    ElasticityMap::default()
        .entries()
        .iter()
        .map(|&(driver, technology, sub, value)| Elasticity {
            driver,
            technology,
            sub_dimension: sub.name().to_string(),
            value,
        })
        .collect()
}

/// The configuration document as written. `simulation`, `parameters` and
/// `scenario` are required; every other block has defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Used only by noise-injection utilities.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub simulation: Option<SimulationConfig>,
    #[serde(default)]
    pub technologies: TechnologiesSection,
    #[serde(default)]
    pub catalog: CatalogSection,
    #[serde(default)]
    pub parameters: Option<SourceSection>,
    #[serde(default = "SourceSection::demo")]
    pub initial: SourceSection,
    #[serde(default)]
    pub calibration: CalibrationSection,
    #[serde(default)]
    pub modes: ModesSection,
    #[serde(default)]
    pub scenario: Option<ScenarioSpec>,
    #[serde(default)]
    pub drivers: DriversSection,
    #[serde(default = "default_elasticities")]
    pub elasticities: Vec<Elasticity>,
    #[serde(default)]
    pub market: MarketSection,
    #[serde(default)]
    pub emissions: EmissionsSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl RunConfig {
    /// The documented defaults with the demo fixture and the baseline scenario.
    pub fn demo() -> Self {
        Self {
            seed: None,
            simulation: Some(SimulationConfig::default()),
            technologies: TechnologiesSection::default(),
            catalog: CatalogSection::default(),
            parameters: Some(SourceSection::demo()),
            initial: SourceSection::demo(),
            calibration: CalibrationSection::default(),
            modes: ModesSection::default(),
            scenario: Some(ScenarioSpec::Baseline),
            drivers: DriversSection::default(),
            elasticities: default_elasticities(),
            market: MarketSection::default(),
            emissions: EmissionsSection::default(),
            output: OutputSection::default(),
        }
    }

    /// Parses and collects unknown keys; any problem is returned as
    /// `ConfigError::Invalid` listing all of them.
    pub fn from_toml_str(text: &str) -> Result<RunConfig, ConfigError> {
        let mut unknown = Vec::new();
        let parsed = toml::Deserializer::parse(text)
            .map_err(|e| e.to_string())
            .and_then(|de| serde_ignored::deserialize(de, |path| unknown.push(path.to_string())).map_err(|e| e.to_string()));
        let mut issues: Vec<ConfigIssue> = unknown.iter().map(|k| unknown_key(k)).collect();
        match parsed {
            Ok(cfg) if issues.is_empty() => Ok(cfg),
            Ok(_) => Err(ConfigError::Invalid(issues)),
            Err(msg) => {
                issues.push(issue("", msg.trim_end().to_string()));
                Err(ConfigError::Invalid(issues))
            }
        }
    }

    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        Self::from_toml_str(&text)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config is plain data")
    }
}

const KNOWN_KEYS: &[&str] = &[
    "seed", "simulation", "t_start", "t_end", "dt", "renormalize_shares", "blow_up_bound", "technologies", "roles",
    "names", "catalog", "sub_dimensions", "sides", "parameters", "source", "file", "initial", "calibration",
    "window_length", "window_stride", "method", "modes", "epsilon", "relative_epsilon", "aggregation", "scenario",
    "variant", "drivers", "oil_price", "tax_registration_fees", "gdp_growth", "wtw_costs", "start_year", "values",
    "elasticities", "driver", "technology", "sub_dimension", "value", "market", "base", "emissions", "lifetime",
    "factors", "constant", "linear", "annual", "from_year", "from", "to_year", "to", "output", "dir",
];

fn suggest(word: &str, candidates: &[&str]) -> Option<String> {
    candidates
        .iter()
        .map(|c| (strsim::damerau_levenshtein(word, c), *c))
        .filter(|(d, c)| *d > 0 && *d <= 2.max(c.len() / 4))
        .min()
        .map(|(_, c)| c.to_string())
}

fn unknown_key(path: &str) -> ConfigIssue {
    let last = path.rsplit('.').next().unwrap_or(path);
    let message = match suggest(last, KNOWN_KEYS) {
        Some(s) => format!("unknown key (did you mean `{s}`?)"),
        None => "unknown key".to_string(),
    };
    issue(path, message)
}

/// Modes settings after validation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeSettings {
    pub policy: EpsilonPolicy,
    pub aggregation: AggregationMethod,
}

/// A validated configuration ready to run.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub inputs: ModelInputs,
    pub scenario: ScenarioSpec,
    pub window: WindowSpec,
    pub fit: FitOptions,
    pub modes: ModeSettings,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

fn is_standard(roster: &Roster, catalog: &DimensionCatalog) -> bool {
    roster.iter().map(|t| t.role).eq(Technology::ALL) && catalog.subs() == SubDimension::ALL
}

impl RunConfig {
    /// Validates every block and loads referenced files relative to `base_dir`.
    pub fn resolve(&self, base_dir: &Path) -> Result<ResolvedConfig, ConfigError> {
        let mut issues = Vec::new();
        let path_of = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base_dir.join(p) };

        let simulation = match &self.simulation {
            Some(s) => {
                issues.extend(s.problems().into_iter().map(|p| issue("simulation", p)));
                s.clone()
            }
            None => {
                issues.push(issue("simulation", "required block is missing"));
                SimulationConfig::default()
            }
        };

        let roster = self.resolve_roster(&mut issues);
        let catalog = self.resolve_catalog(&mut issues);

        let timeline = match (&self.parameters, &roster, &catalog) {
            (None, ..) => {
                issues.push(issue("parameters", "required block is missing"));
                None
            }
            (Some(p), Some(r), Some(c)) => resolve_timeline(p, r, c, &path_of, &mut issues),
            _ => None,
        };
        if let Some(t) = &timeline {
            if let Err(e) = t.validate() {
                issues.push(issue("parameters", e.to_string()));
            }
        }

        let initial = match (&roster, &catalog) {
            (Some(r), Some(c)) => resolve_initial(&self.initial, r, c, &simulation, &path_of, &mut issues),
            _ => None,
        };

        let scenario = match &self.scenario {
            Some(s) => {
                if let Err(e) = s.validate() {
                    issues.push(issue("scenario", e.to_string()));
                }
                *s
            }
            None => {
                issues.push(issue("scenario", "required block is missing"));
                ScenarioSpec::Baseline
            }
        };

        let drivers = self.resolve_drivers(&simulation, &mut issues);

        let mut elasticities = Vec::new();
        for (k, e) in self.elasticities.iter().enumerate() {
            match SubDimension::from_name(&e.sub_dimension) {
                Ok(sub) if e.value.is_finite() => elasticities.push((e.driver, e.technology, sub, e.value)),
                Ok(_) => issues.push(issue(format!("elasticities[{k}].value"), "must be finite")),
                Err(err) => issues.push(issue(format!("elasticities[{k}].sub_dimension"), err.to_string())),
            }
            if e.driver == Driver::GdpGrowth {
                issues.push(issue(format!("elasticities[{k}].driver"), "gdp_growth acts on market size, not on growth rates"));
            }
        }

        if !(self.market.base > 0.0 && self.market.base.is_finite()) {
            issues.push(issue("market.base", format!("must be positive, got {}", self.market.base)));
        }

        if self.emissions.lifetime == 0 {
            issues.push(issue("emissions.lifetime", "must be at least one year"));
        }
        let factors = roster.as_ref().and_then(|r| self.resolve_factors(r, &mut issues));

        let window = WindowSpec { length: self.calibration.window_length, stride: self.calibration.window_stride };
        if let Some(r) = &roster {
            if let Err(e) = window.validate(r.len()) {
                issues.push(issue("calibration", e.to_string()));
            }
        }

        let m = &self.modes;
        if !(m.epsilon >= 0.0 && m.epsilon.is_finite()) {
            issues.push(issue("modes.epsilon", format!("must be finite and non-negative, got {}", m.epsilon)));
        }
        if let Some(r) = m.relative_epsilon {
            if !(r >= 0.0 && r.is_finite()) {
                issues.push(issue("modes.relative_epsilon", format!("must be finite and non-negative, got {r}")));
            }
        }

        if !issues.is_empty() {
            return Err(ConfigError::Invalid(issues));
        }
        let policy = EpsilonPolicy { absolute: m.epsilon, relative: m.relative_epsilon };
        let inputs = ModelInputs {
            simulation: simulation.clone(),
            roster: roster.expect("no issues"),
            catalog: catalog.expect("no issues"),
            timeline: timeline.expect("no issues"),
            initial: initial.expect("no issues"),
            drivers: drivers.expect("no issues"),
            base_market: self.market.base,
            elasticities: ElasticityMap::new(elasticities),
            factors: factors.expect("no issues"),
            lifetime: self.emissions.lifetime,
            epsilon: policy,
        };
        Ok(ResolvedConfig {
            inputs,
            scenario,
            window,
            fit: FitOptions {
                method: self.calibration.method,
                dt: simulation.dt,
                renormalize_shares: simulation.renormalize_shares,
            },
            modes: ModeSettings { policy, aggregation: m.aggregation },
            seed: self.seed,
            output_dir: self.output.dir.as_deref().map(path_of),
        })
    }

    fn resolve_roster(&self, issues: &mut Vec<ConfigIssue>) -> Option<Roster> {
        let t = &self.technologies;
        let before = issues.len();
        for key in t.names.keys() {
            match Technology::ALL.iter().find(|r| r.key() == key) {
                Some(r) if !t.roles.contains(r) => {
                    issues.push(issue(format!("technologies.names.{key}"), "names a role that is not in `roles`"))
                }
                Some(_) => {}
                None => {
                    let keys: Vec<&str> = Technology::ALL.iter().map(|r| r.key()).collect();
                    let hint = suggest(key, &keys).map(|s| format!(" (did you mean `{s}`?)")).unwrap_or_default();
                    issues.push(issue(format!("technologies.names.{key}"), format!("unknown role{hint}")));
                }
            }
        }
        let ids: Vec<TechnologyId> = t
            .roles
            .iter()
            .map(|&role| TechnologyId {
                role,
                display_name: t.names.get(role.key()).cloned().unwrap_or_else(|| role.default_name().to_string()),
            })
            .collect();
        let roster = Roster::new(ids);
        if roster.is_none() {
            issues.push(issue("technologies.roles", "must list at least one role, each once, with distinct names"));
        }
        if issues.len() > before {
            None
        } else {
            roster
        }
    }

    fn resolve_catalog(&self, issues: &mut Vec<ConfigIssue>) -> Option<DimensionCatalog> {
        let c = &self.catalog;
        let before = issues.len();
        let subs: Vec<SubDimension> = c
            .sub_dimensions
            .iter()
            .filter_map(|n| match SubDimension::from_name(n) {
                Ok(s) => Some(s),
                Err(e) => {
                    issues.push(issue("catalog.sub_dimensions", e.to_string()));
                    None
                }
            })
            .collect();
        let overrides: Vec<(SubDimension, Side)> = c
            .sides
            .iter()
            .filter_map(|(n, side)| match SubDimension::from_name(n) {
                Ok(s) => Some((s, *side)),
                Err(e) => {
                    issues.push(issue(format!("catalog.sides.{n}"), e.to_string()));
                    None
                }
            })
            .collect();
        if issues.len() > before {
            return None;
        }
        match DimensionCatalog::new(subs, &overrides) {
            Ok(cat) => Some(cat),
            Err(e) => {
                issues.push(issue("catalog", e.to_string()));
                None
            }
        }
    }

    fn resolve_drivers(&self, sim: &SimulationConfig, issues: &mut Vec<ConfigIssue>) -> Option<ExogenousDrivers> {
        let d = &self.drivers;
        let demo = match d.source.as_deref() {
            Some("demo") => Some(fixture::demo_drivers(sim)),
            Some(other) => {
                issues.push(issue("drivers.source", format!("unknown source `{other}`; only \"demo\" is built in")));
                return None;
            }
            None => None,
        };
        let mut pick = |name: &str, given: &Option<DriverSeries>, fallback: Option<&DriverSeries>| {
            let s = given.clone().or_else(|| fallback.cloned());
            if s.is_none() {
                issues.push(issue(format!("drivers.{name}"), "missing series and no demo source"));
            }
            s
        };
        let series = [
            pick("oil_price", &d.oil_price, demo.as_ref().map(|x| &x.oil_price)),
            pick("tax_registration_fees", &d.tax_registration_fees, demo.as_ref().map(|x| &x.tax_registration_fees)),
            pick("gdp_growth", &d.gdp_growth, demo.as_ref().map(|x| &x.gdp_growth)),
            pick("wtw_costs", &d.wtw_costs, demo.as_ref().map(|x| &x.wtw_costs)),
        ];
        let [Some(oil_price), Some(tax_registration_fees), Some(gdp_growth), Some(wtw_costs)] = series else {
            return None;
        };
        let drivers = ExogenousDrivers { oil_price, tax_registration_fees, gdp_growth, wtw_costs };
        if let Err(e) = drivers.check_coverage(sim.t_start, sim.t_end) {
            issues.push(issue("drivers", e.to_string()));
            return None;
        }
        Some(drivers)
    }

    fn resolve_factors(&self, roster: &Roster, issues: &mut Vec<ConfigIssue>) -> Option<EmissionFactors> {
        let before = issues.len();
        let mut per_tech: Vec<(Technology, FactorSchedule)> = Vec::new();
        for (key, sched) in &self.emissions.factors {
            match roster.lookup(key) {
                Some(i) => per_tech.push((roster.get(i).role, sched.clone())),
                None => {
                    let names: Vec<&str> = roster.iter().flat_map(|t| [t.role.key(), t.display_name.as_str()]).collect();
                    let hint = suggest(key, &names).map(|s| format!(" (did you mean `{s}`?)")).unwrap_or_default();
                    issues.push(issue(format!("emissions.factors.{key}"), format!("not a technology in the roster{hint}")));
                }
            }
        }
        for t in roster.iter() {
            if !per_tech.iter().any(|(r, _)| *r == t.role) {
                issues.push(issue("emissions.factors", format!("no factor for {}", t.display_name)));
            }
        }
        per_tech.sort_by_key(|(role, _)| roster.index_of(*role));
        match EmissionFactors::new(per_tech) {
            Ok(f) if issues.len() == before => Some(f),
            Ok(_) => None,
            Err(e) => {
                issues.push(issue("emissions.factors", e.to_string()));
                None
            }
        }
    }
}

fn resolve_timeline(
    p: &SourceSection,
    roster: &Roster,
    catalog: &DimensionCatalog,
    path_of: &dyn Fn(&Path) -> PathBuf,
    issues: &mut Vec<ConfigIssue>,
) -> Option<ParameterTimeline> {
    match (p.source.as_deref(), &p.file) {
        (Some("demo"), None) => {
            if is_standard(roster, catalog) {
                Some(fixture::demo_timeline())
            } else {
                issues.push(issue("parameters.source", "the demo fixture needs the standard roster and catalog"));
                None
            }
        }
        (None, Some(file)) => {
            let path = path_of(file);
            let read = File::open(&path)
                .map_err(|e| e.to_string())
                .and_then(|f| read_parameters(f, Some(roster), Some(catalog)).map_err(|e| e.to_string()));
            match read {
                Ok(t) => Some(t.timeline),
                Err(e) => {
                    issues.push(issue("parameters.file", format!("{}: {e}", path.display())));
                    None
                }
            }
        }
        (Some(other), None) => {
            issues.push(issue("parameters.source", format!("unknown source `{other}`; only \"demo\" is built in")));
            None
        }
        _ => {
            issues.push(issue("parameters", "give exactly one of `source` or `file`"));
            None
        }
    }
}

fn resolve_initial(
    s: &SourceSection,
    roster: &Roster,
    catalog: &DimensionCatalog,
    sim: &SimulationConfig,
    path_of: &dyn Fn(&Path) -> PathBuf,
    issues: &mut Vec<ConfigIssue>,
) -> Option<SystemState> {
    match (s.source.as_deref(), &s.file) {
        (Some("demo"), None) => {
            if is_standard(roster, catalog) {
                Some(fixture::demo_initial_state(sim))
            } else {
                issues.push(issue("initial.source", "the demo initial state needs the standard roster and catalog"));
                None
            }
        }
        (None, Some(file)) => {
            let path = path_of(file);
            let series = File::open(&path)
                .map_err(|e| e.to_string())
                .and_then(|f| read_observed(f, roster, catalog).map_err(|e| e.to_string()));
            let series = match series {
                Ok(s) => s,
                Err(e) => {
                    issues.push(issue("initial.file", format!("{}: {e}", path.display())));
                    return None;
                }
            };
            let mut state = SystemState::zeros(sim.t_start as f64, roster.len(), catalog.len());
            for i in 0..roster.len() {
                for d in 0..catalog.len() {
                    match series.get(sim.t_start, i, d) {
                        Some(v) => state.set_level(i, d, v),
                        None if series.is_absent(i, d) => {}
                        None => {
                            issues.push(issue(
                                "initial.file",
                                format!("no level for {} {} in {}", roster.name(i), catalog.get(d).name(), sim.t_start),
                            ));
                            return None;
                        }
                    }
                }
            }
            Some(state)
        }
        (Some(other), None) => {
            issues.push(issue("initial.source", format!("unknown source `{other}`; only \"demo\" is built in")));
            None
        }
        _ => {
            issues.push(issue("initial", "give exactly one of `source` or `file`"));
            None
        }
    }
}
