//! The seven policy scenarios as transformations of the baseline parameter
//! timeline, the technology roster and the exogenous drivers, plus the
//! runtime hook for the sociotechnical-transition intervention.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{HookContext, Modifiers, NoHook, ParameterTimeline, RuntimeHook, SystemLayout};
use crate::modes::EpsilonPolicy;
use crate::technology::{Roster, Technology};
use crate::tis::{DimensionCatalog, SubDimension};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("scenario `{scenario}` needs the {tech} technology, which is not in the roster")]
    MissingTechnology { scenario: &'static str, tech: Technology },
    #[error("scenario `{0}` needs a market_share sub-dimension")]
    MissingShareDimension(&'static str),
    #[error("{0} must be positive, got {1}")]
    NonPositiveFactor(&'static str, f64),
    #[error("driver series `{0}` does not cover {1}")]
    DriverCoverage(&'static str, i32),
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Driver {
    OilPrice,
    TaxRegistrationFees,
    GdpGrowth,
    WtwCosts,
}

/// Scenario multipliers applied to the baseline driver projections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriverMultipliers {
    pub oil_price: f64,
    pub tax_registration_fees: f64,
    pub gdp_growth: f64,
    pub wtw_costs: f64,
}

impl DriverMultipliers {
    pub fn uniform(m: f64) -> Self {
        Self { oil_price: m, tax_registration_fees: m, gdp_growth: m, wtw_costs: m }
    }

    pub fn get(&self, d: Driver) -> f64 {
        match d {
            Driver::OilPrice => self.oil_price,
            Driver::TaxRegistrationFees => self.tax_registration_fees,
            Driver::GdpGrowth => self.gdp_growth,
            Driver::WtwCosts => self.wtw_costs,
        }
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        for (name, v) in [
            ("oil_price multiplier", self.oil_price),
            ("tax_registration_fees multiplier", self.tax_registration_fees),
            ("gdp_growth multiplier", self.gdp_growth),
            ("wtw_costs multiplier", self.wtw_costs),
        ] {
            if !(v > 0.0) {
                return Err(ScenarioError::NonPositiveFactor(name, v));
            }
        }
        Ok(())
    }
}

impl Default for DriverMultipliers {
    fn default() -> Self {
        Self::uniform(1.5)
    }
}

/// Baseline annual projection of one driver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriverSeries {
    pub start_year: i32,
    pub values: Vec<f64>,
}

impl DriverSeries {
    pub fn constant(start_year: i32, end_year: i32, v: f64) -> Self {
        Self { start_year, values: vec![v; (end_year - start_year + 1).max(0) as usize] }
    }

    pub fn get(&self, year: i32) -> Option<f64> {
        usize::try_from(year - self.start_year).ok().and_then(|k| self.values.get(k).copied())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExogenousDrivers {
    pub oil_price: DriverSeries,
    pub tax_registration_fees: DriverSeries,
    /// Fractional growth per year; drives total market size.
    pub gdp_growth: DriverSeries,
    pub wtw_costs: DriverSeries,
}

impl ExogenousDrivers {
    pub fn series(&self, d: Driver) -> &DriverSeries {
        match d {
            Driver::OilPrice => &self.oil_price,
            Driver::TaxRegistrationFees => &self.tax_registration_fees,
            Driver::GdpGrowth => &self.gdp_growth,
            Driver::WtwCosts => &self.wtw_costs,
        }
    }

    pub fn check_coverage(&self, first: i32, last: i32) -> Result<(), ScenarioError> {
        for (d, name) in [
            (Driver::OilPrice, "oil_price"),
            (Driver::TaxRegistrationFees, "tax_registration_fees"),
            (Driver::GdpGrowth, "gdp_growth"),
            (Driver::WtwCosts, "wtw_costs"),
        ] {
            for y in [first, last] {
                if self.series(d).get(y).is_none() {
                    return Err(ScenarioError::DriverCoverage(name, y));
                }
            }
        }
        Ok(())
    }

    /// Scenario-adjusted value of one driver in one year.
    pub fn value(&self, d: Driver, year: i32, multipliers: &DriverMultipliers) -> Option<f64> {
        self.series(d).get(year).map(|v| v * multipliers.get(d))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Elasticity {
    pub driver: Driver,
    pub technology: Technology,
    pub sub_dimension: String,
    pub value: f64,
}

/// The rule `a' = a * (1 + e * (multiplier - 1))`, applied per driver and
/// compounded over drivers.
#[derive(Debug, Clone, PartialEq)]
pub struct ElasticityMap {
    entries: Vec<(Driver, Technology, SubDimension, f64)>,
}

impl Default for ElasticityMap {
    fn default() -> Self {
        use SubDimension::{FinancialCapital, MarketShare};
        use Technology::*;
        let mut entries = Vec::new();
        for driver in [Driver::OilPrice, Driver::WtwCosts] {
            for sub in [MarketShare, FinancialCapital] {
                entries.push((driver, Incumbent, sub, -0.5));
                entries.push((driver, Emerging, sub, 0.5));
                entries.push((driver, Hybrid, sub, 0.25));
            }
        }
        for sub in [MarketShare, FinancialCapital] {
            entries.push((Driver::TaxRegistrationFees, Incumbent, sub, -0.25));
        }
        Self { entries }
    }
}

impl ElasticityMap {
    pub fn empty() -> Self {
        Self { entries: Vec::new() }
    }

    pub fn new(entries: Vec<(Driver, Technology, SubDimension, f64)>) -> Self {
        Self { entries }
    }

    pub fn entries(&self) -> &[(Driver, Technology, SubDimension, f64)] {
        &self.entries
    }

    /// Combined growth-rate factor for one (technology, sub-dimension).
    pub fn growth_factor(&self, tech: Technology, sub: SubDimension, m: &DriverMultipliers) -> f64 {
        self.entries
            .iter()
            .filter(|(drv, t, s, _)| *t == tech && *s == sub && *drv != Driver::GdpGrowth)
            .fold(1.0, |acc, (drv, _, _, e)| acc * (1.0 + e * (m.get(*drv) - 1.0)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransitionParams {
    pub reinforce_factor: f64,
    pub weaken_factor: f64,
    pub duration_years: u32,
    pub hev_share_gate: f64,
    /// Also scale self-decline rates, inversely to the growth factor.
    pub scale_decline: bool,
}

impl Default for TransitionParams {
    fn default() -> Self {
        Self { reinforce_factor: 1.25, weaken_factor: 0.75, duration_years: 20, hev_share_gate: 0.5, scale_decline: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExternalityScale {
    pub toward: f64,
    pub away: f64,
}

impl Default for ExternalityScale {
    fn default() -> Self {
        Self { toward: 1.5, away: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case")]
pub enum ScenarioSpec {
    Baseline,
    LandscapePressure(DriverMultipliers),
    NicheIncumbent,
    HybridIncumbent,
    SociotechnicalTransition(TransitionParams),
    NicheFavoured(ExternalityScale),
    PredatorPrey,
}

impl ScenarioSpec {
    pub const NAMES: [&'static str; 7] = [
        "baseline",
        "landscape-pressure",
        "niche-incumbent",
        "hybrid-incumbent",
        "sociotechnical-transition",
        "niche-favoured",
        "predator-prey",
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ScenarioSpec::Baseline => Self::NAMES[0],
            ScenarioSpec::LandscapePressure(_) => Self::NAMES[1],
            ScenarioSpec::NicheIncumbent => Self::NAMES[2],
            ScenarioSpec::HybridIncumbent => Self::NAMES[3],
            ScenarioSpec::SociotechnicalTransition(_) => Self::NAMES[4],
            ScenarioSpec::NicheFavoured(_) => Self::NAMES[5],
            ScenarioSpec::PredatorPrey => Self::NAMES[6],
        }
    }

    /// Variant with its default factors.
    pub fn by_name(name: &str) -> Result<ScenarioSpec, ScenarioError> {
        Ok(match name {
            "baseline" => ScenarioSpec::Baseline,
            "landscape-pressure" => ScenarioSpec::LandscapePressure(DriverMultipliers::default()),
            "niche-incumbent" => ScenarioSpec::NicheIncumbent,
            "hybrid-incumbent" => ScenarioSpec::HybridIncumbent,
            "sociotechnical-transition" => ScenarioSpec::SociotechnicalTransition(TransitionParams::default()),
            "niche-favoured" => ScenarioSpec::NicheFavoured(ExternalityScale::default()),
            "predator-prey" => ScenarioSpec::PredatorPrey,
            other => return Err(ScenarioError::UnknownScenario(other.to_string())),
        })
    }

    pub fn all_defaults() -> Vec<ScenarioSpec> {
        Self::NAMES.iter().map(|n| Self::by_name(n).expect("listed name")).collect()
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        match self {
            ScenarioSpec::LandscapePressure(multipliers) => multipliers.validate(),
            ScenarioSpec::SociotechnicalTransition(params) => {
                if !(params.reinforce_factor > 0.0) {
                    return Err(ScenarioError::NonPositiveFactor("reinforce_factor", params.reinforce_factor));
                }
                if !(params.weaken_factor > 0.0) {
                    return Err(ScenarioError::NonPositiveFactor("weaken_factor", params.weaken_factor));
                }
                if params.duration_years == 0 {
                    return Err(ScenarioError::NonPositiveFactor("duration_years", 0.0));
                }
                Ok(())
            }
            ScenarioSpec::NicheFavoured(scale) => {
                if !(scale.toward > 0.0) {
                    return Err(ScenarioError::NonPositiveFactor("externality toward", scale.toward));
                }
                if !(scale.away > 0.0) {
                    return Err(ScenarioError::NonPositiveFactor("externality away", scale.away));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for ScenarioSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Fires when the mean of the last three year-over-year share changes is
/// negative. Needs at least four annual observations.
pub fn detect_structural_decline(annual_shares: &[f64]) -> bool {
    let n = annual_shares.len();
    if n < 4 {
        return false;
    }
    // The three changes telescope, so their mean is (s[n-1] - s[n-4]) / 3.
    (annual_shares[n - 1] - annual_shares[n - 4]) / 3.0 < 0.0
}

/// Reinforces the emerging technology and weakens the others for a fixed
/// number of years each time the decline detector fires.
pub struct TransitionHook {
    params: TransitionParams,
    n_tech: usize,
    emerging: usize,
    incumbent: usize,
    hybrid: Option<usize>,
    share: usize,
    active_until: Option<i32>,
    fired: Vec<i32>,
    shares: Vec<f64>,
}

impl TransitionHook {
    pub fn new(
        params: TransitionParams,
        n_tech: usize,
        emerging: usize,
        incumbent: usize,
        hybrid: Option<usize>,
        share: usize,
    ) -> Self {
        Self { params, n_tech, emerging, incumbent, hybrid, share, active_until: None, fired: Vec::new(), shares: Vec::new() }
    }

    pub fn fired_years(&self) -> &[i32] {
        &self.fired
    }
}

impl RuntimeHook for TransitionHook {
    fn modifiers(&mut self, ctx: &HookContext<'_>) -> Option<Modifiers> {
        if let Some(year) = ctx.at_year() {
            self.shares.push(ctx.current().level(self.emerging, self.share));
            if self.active_until.is_some_and(|until| year >= until) {
                self.active_until = None;
            }
            if self.active_until.is_none() && detect_structural_decline(&self.shares) {
                self.active_until = Some(year + self.params.duration_years as i32);
                self.fired.push(year);
            }
        }
        self.active_until?;
        let mut m = Modifiers::identity(self.n_tech);
        let p = &self.params;
        m.growth_scale[self.emerging] = p.reinforce_factor;
        m.growth_scale[self.incumbent] = p.weaken_factor;
        if let Some(h) = self.hybrid {
            let (_, latest) = ctx.annual().last().expect("initial state is an annual sample");
            if latest.level(h, self.share) > p.hev_share_gate {
                m.growth_scale[h] = p.weaken_factor;
            }
        }
        if p.scale_decline {
            for i in 0..self.n_tech {
                m.decline_scale[i] = 1.0 / m.growth_scale[i];
            }
        }
        Some(m)
    }

    fn interventions(&self) -> Vec<(i32, i32)> {
        self.fired.iter().map(|&y| (y, y + self.params.duration_years as i32)).collect()
    }
}

/// Everything a scenario contributes to one run.
pub struct ScenarioSetup {
    pub timeline: ParameterTimeline,
    pub layout: SystemLayout,
    pub market_growth_multiplier: f64,
    pub hook: Box<dyn RuntimeHook + Send>,
}

fn require(roster: &Roster, scenario: &'static str, tech: Technology) -> Result<usize, ScenarioError> {
    roster.index_of(tech).ok_or(ScenarioError::MissingTechnology { scenario, tech })
}

/// Builds the timeline, layout, market-size multiplier and runtime hook for
/// one scenario.
pub fn apply_scenario(
    baseline: &ParameterTimeline,
    roster: &Roster,
    catalog: &DimensionCatalog,
    elasticities: &ElasticityMap,
    spec: &ScenarioSpec,
    policy: &EpsilonPolicy,
) -> Result<ScenarioSetup, ScenarioError> {
    spec.validate()?;
    let name = spec.name();
    let n_tech = roster.len();
    let layout = SystemLayout::new(n_tech, catalog.len(), catalog.share_index());
    let mut setup = ScenarioSetup {
        timeline: baseline.clone(),
        layout,
        market_growth_multiplier: 1.0,
        hook: Box::new(NoHook),
    };
    match spec {
        ScenarioSpec::Baseline => {}
        ScenarioSpec::LandscapePressure(multipliers) => {
            setup.market_growth_multiplier = multipliers.gdp_growth;
            setup.timeline = baseline.map(|_, b| {
                let mut out = b.clone();
                for i in 0..n_tech {
                    for (d, &sub) in catalog.subs().iter().enumerate() {
                        let f = elasticities.growth_factor(roster.get(i).role, sub, multipliers);
                        if f != 1.0 {
                            out.set_growth(i, d, b.growth(i, d) * f);
                        }
                    }
                }
                out
            });
        }
        ScenarioSpec::NicheIncumbent => {
            let h = require(roster, name, Technology::Hybrid)?;
            setup.layout.deactivate(h);
        }
        ScenarioSpec::HybridIncumbent => {
            let e = require(roster, name, Technology::Emerging)?;
            setup.layout.deactivate(e);
        }
        ScenarioSpec::SociotechnicalTransition(params) => {
            let e = require(roster, name, Technology::Emerging)?;
            let i = require(roster, name, Technology::Incumbent)?;
            let share = catalog.share_index().ok_or(ScenarioError::MissingShareDimension(name))?;
            let h = roster.index_of(Technology::Hybrid);
            setup.hook = Box::new(TransitionHook::new(*params, n_tech, e, i, h, share));
        }
        ScenarioSpec::NicheFavoured(scale) => {
            let e = require(roster, name, Technology::Emerging)?;
            setup.timeline = baseline.map(|_, b| {
                let mut out = b.clone();
                for j in (0..n_tech).filter(|&j| j != e) {
                    for d in 0..catalog.len() {
                        let into = b.interaction(e, j, d);
                        // Benefit to the emerging technology grows, harm to it shrinks.
                        out.set_interaction(e, j, d, into * if into < 0.0 { scale.toward } else { scale.away });
                        let from = b.interaction(j, e, d);
                        if from < 0.0 {
                            out.set_interaction(j, e, d, from * scale.away);
                        }
                    }
                }
                out
            });
        }
        ScenarioSpec::PredatorPrey => {
            let e = require(roster, name, Technology::Emerging)?;
            let i = require(roster, name, Technology::Incumbent)?;
            let h = require(roster, name, Technology::Hybrid)?;
            // (affected, affecting, sign): emerging and incumbent compete,
            // hybrid feeds on incumbent, emerging feeds on hybrid.
            let template = [(e, i, 1.0), (i, e, 1.0), (h, i, -1.0), (i, h, 1.0), (e, h, -1.0), (h, e, 1.0)];
            setup.timeline = baseline.map(|_, b| {
                let mut out = b.clone();
                for d in 0..catalog.len() {
                    let mags: Vec<f64> = template
                        .iter()
                        .map(|&(x, y, _)| b.interaction(x, y, d).abs())
                        .filter(|m| *m > policy.absolute)
                        .collect();
                    let fallback = if mags.is_empty() { 0.0 } else { mags.iter().sum::<f64>() / mags.len() as f64 };
                    for &(x, y, sign) in &template {
                        let m = b.interaction(x, y, d).abs();
                        let m = if m > policy.absolute { m } else { fallback };
                        out.set_interaction(x, y, d, sign * m);
                    }
                }
                out
            });
        }
    }
    Ok(setup)
}
