//! One scenario run end to end: simulate, derive sales and fleet, account
//! emissions.

use rayon::prelude::*;
use thiserror::Error;

use crate::dynamics::{
    simulate, DynamicsError, ParameterTimeline, SimulationConfig, SystemLayout, SystemState, Trajectory,
};
use crate::emissions::{emissions, stock_from_sales, EmissionFactors, EmissionReport, EmissionsError};
use crate::fixture;
use crate::modes::EpsilonPolicy;
use crate::scenario::{apply_scenario, ElasticityMap, ExogenousDrivers, ScenarioError, ScenarioSpec};
use crate::technology::Roster;
use crate::tis::{sales_from_share, CatalogError, DimensionCatalog, MarketSizeSeries, TechSeries};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Emissions(#[from] EmissionsError),
}

impl RunError {
    /// Blow-ups and non-finite values, as opposed to bad inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, RunError::Dynamics(DynamicsError::BlowUp { .. } | DynamicsError::NonFinite { .. }))
    }
}

/// Everything needed to run any scenario.
#[derive(Debug, Clone)]
pub struct ModelInputs {
    pub simulation: SimulationConfig,
    pub roster: Roster,
    pub catalog: DimensionCatalog,
    pub timeline: ParameterTimeline,
    pub initial: SystemState,
    pub drivers: ExogenousDrivers,
    pub base_market: f64,
    pub elasticities: ElasticityMap,
    pub factors: EmissionFactors,
    pub lifetime: u32,
    pub epsilon: EpsilonPolicy,
}

impl ModelInputs {
    pub fn demo() -> Self {
        let simulation = SimulationConfig::default();
        Self {
            roster: Roster::standard(),
            catalog: DimensionCatalog::standard(),
            timeline: fixture::demo_timeline(),
            initial: fixture::demo_initial_state(&simulation),
            drivers: fixture::demo_drivers(&simulation),
            base_market: fixture::BASE_MARKET,
            elasticities: ElasticityMap::default(),
            factors: fixture::demo_factors(),
            lifetime: 15,
            epsilon: EpsilonPolicy::default(),
            simulation,
        }
    }

    pub fn market(&self, growth_multiplier: f64) -> Result<MarketSizeSeries, RunError> {
        let (a, b) = (self.simulation.t_start, self.simulation.t_end);
        self.drivers.check_coverage(a, b)?;
        let g = &self.drivers.gdp_growth;
        Ok(MarketSizeSeries::from_growth(a, b, self.base_market, |y| g.get(y).unwrap_or(0.0), growth_multiplier)?)
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub spec: ScenarioSpec,
    /// Scenario-adjusted parameters and the active technologies.
    pub timeline: ParameterTimeline,
    pub layout: SystemLayout,
    pub trajectory: Trajectory,
    pub market: MarketSizeSeries,
    pub sales: TechSeries,
    pub stocks: TechSeries,
    pub emissions: EmissionReport,
    /// (start, end) years of runtime interventions.
    pub interventions: Vec<(i32, i32)>,
}

impl ScenarioRun {
    pub fn active_techs(&self) -> Vec<usize> {
        (0..self.layout.n_tech).filter(|&i| self.layout.active[i]).collect()
    }
}

pub fn run_scenario(inputs: &ModelInputs, spec: &ScenarioSpec) -> Result<ScenarioRun, RunError> {
    let mut setup =
        apply_scenario(&inputs.timeline, &inputs.roster, &inputs.catalog, &inputs.elasticities, spec, &inputs.epsilon)?;
    let trajectory = simulate(&inputs.simulation, &setup.layout, &setup.timeline, &inputs.initial, setup.hook.as_mut())?;
    let market = inputs.market(setup.market_growth_multiplier)?;
    let share = inputs.catalog.share_index().ok_or(CatalogError::NoShareDimension)?;
    let sales = sales_from_share(&trajectory, share, &market)?;
    let stocks = stock_from_sales(&sales, inputs.lifetime)?;
    let emissions = emissions(&stocks, &inputs.roster, &inputs.factors)?;
    Ok(ScenarioRun {
        spec: *spec,
        interventions: setup.hook.interventions(),
        timeline: setup.timeline,
        layout: setup.layout,
        trajectory,
        market,
        sales,
        stocks,
        emissions,
    })
}

/// Runs scenarios concurrently; results keep the input order.
pub fn run_scenarios(inputs: &ModelInputs, specs: &[ScenarioSpec]) -> Vec<Result<ScenarioRun, RunError>> {
    specs.par_iter().map(|s| run_scenario(inputs, s)).collect()
}
