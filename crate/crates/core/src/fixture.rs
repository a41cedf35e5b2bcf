//! Shipped demo fixture: a synthetic parameter timeline for the standard
//! three-technology roster and sixteen sub-dimensions, built to show the
//! qualitative baseline mode structure (hybrid symbiotic with both others on
//! the technology side, mixed modes on the market side). Values here are
//! illustrative, not calibrated data.

use crate::calibration::ObservedSeries;
use crate::dynamics::{ParameterBlock, ParameterTimeline, SimulationConfig, SystemState};
use crate::emissions::{EmissionFactors, FactorSchedule};
use crate::run::{run_scenario, ModelInputs};
use crate::scenario::{DriverSeries, ExogenousDrivers, ScenarioSpec};
use crate::technology::Technology;
use crate::tis::{DimensionCatalog, Side, SubDimension};

const I: usize = 0;
const H: usize = 1;
const E: usize = 2;

/// First year of each parameter segment.
pub const SEGMENT_STARTS: [i32; 4] = [1985, 1995, 2008, 2020];

/// Total new-vehicle sales in the first simulated year.
pub const BASE_MARKET: f64 = 1.1e7;
/// Annual GDP-linked growth of total sales.
pub const BASE_MARKET_GROWTH: f64 = 0.02;

struct Interactions {
    ih: f64,
    hi: f64,
    ie: f64,
    ei: f64,
    he: f64,
    eh: f64,
}

impl Interactions {
    fn write(&self, b: &mut ParameterBlock, d: usize, scale: f64) {
        b.set_interaction(I, H, d, self.ih * scale);
        b.set_interaction(H, I, d, self.hi * scale);
        b.set_interaction(I, E, d, self.ie * scale);
        b.set_interaction(E, I, d, self.ei * scale);
        b.set_interaction(H, E, d, self.he * scale);
        b.set_interaction(E, H, d, self.eh * scale);
    }
}

// Market share: ICEV and HEV symbiotic, HEV and ICEV both feed on BEV.
const SHARE_A: [[f64; 3]; 4] = [[0.22, 0.35, 0.24], [0.33, 0.48, 0.18], [0.29, 0.27, 0.33], [-0.04, 0.16, 0.17]];
const SHARE_B: [f64; 3] = [0.056, 0.223, 0.183];
const SHARE_C: Interactions = Interactions { ih: -0.018, hi: -0.023, ie: -0.001, ei: 0.006, he: -0.004, eh: 0.027 };

const TECH_A: [[f64; 3]; 4] = [[0.06, 0.25, 0.15], [0.05, 0.30, 0.10], [0.04, 0.20, 0.25], [0.02, 0.10, 0.20]];
const TECH_B: [f64; 3] = [0.05, 0.25, 0.12];

const MARKET_A: [[f64; 3]; 4] = [[0.05, 0.30, 0.20], [0.04, 0.35, 0.08], [0.02, 0.20, 0.30], [-0.03, 0.10, 0.25]];
const MARKET_B: [f64; 3] = [0.04, 0.25, 0.15];

fn tech_interactions(segment: usize) -> Interactions {
    // HEV gives BEV more spillforward than it gives ICEV spillback.
    Interactions { ih: -0.03, hi: -0.04, ie: if segment == 3 { 0.0 } else { -0.02 }, ei: -0.01, he: -0.05, eh: -0.12 }
}

fn market_interactions(segment: usize) -> Interactions {
    Interactions {
        ih: if segment == 3 { 0.02 } else { -0.02 },
        hi: -0.03,
        ie: -0.02,
        ei: 0.0,
        he: -0.04,
        eh: if segment == 1 { -0.01 } else { 0.03 },
    }
}

/// Small deterministic spread so sub-dimensions on one side differ.
fn jitter(k: usize, segment: usize) -> f64 {
    1.0 + 0.1 * (((k + segment) % 3) as f64 - 1.0)
}

fn block(segment: usize, catalog: &DimensionCatalog) -> ParameterBlock {
    let mut b = ParameterBlock::zeros(3, catalog.len());
    for (d, &sub) in catalog.subs().iter().enumerate() {
        let k = d;
        if sub == SubDimension::MarketShare {
            for i in 0..3 {
                b.set_growth(i, d, SHARE_A[segment][i]);
                b.set_decline(i, d, SHARE_B[i]);
            }
            SHARE_C.write(&mut b, d, 1.0);
            continue;
        }
        let j = jitter(k, segment);
        let (a, bb, c) = match catalog.grouping().side_of(d) {
            Side::Technology => (&TECH_A, &TECH_B, tech_interactions(segment)),
            Side::Market => (&MARKET_A, &MARKET_B, market_interactions(segment)),
        };
        for i in 0..3 {
            b.set_growth(i, d, a[segment][i] * j);
            b.set_decline(i, d, bb[i]);
        }
        c.write(&mut b, d, j);
    }
    b
}

/// Demo timeline on the standard catalog.
pub fn demo_timeline() -> ParameterTimeline {
    let catalog = DimensionCatalog::standard();
    let segments = SEGMENT_STARTS.iter().enumerate().map(|(s, &start)| (start, block(s, &catalog))).collect();
    ParameterTimeline::new(segments).expect("demo segments are well formed")
}

/// Initial levels in the first simulated year.
pub fn demo_initial_state(config: &SimulationConfig) -> SystemState {
    let catalog = DimensionCatalog::standard();
    let mut s = SystemState::zeros(config.t_start as f64, 3, catalog.len());
    for (d, &sub) in catalog.subs().iter().enumerate() {
        let levels = if sub == SubDimension::MarketShare {
            [0.985, 0.005, 0.01]
        } else {
            match catalog.grouping().side_of(d) {
                Side::Technology => [1.0, 0.05, 0.2],
                Side::Market => [1.0, 0.01, 0.02],
            }
        };
        for (i, v) in levels.into_iter().enumerate() {
            s.set_level(i, d, v);
        }
    }
    s
}

/// Baseline driver projections as flat indices, with constant GDP growth.
pub fn demo_drivers(config: &SimulationConfig) -> ExogenousDrivers {
    let (a, b) = (config.t_start, config.t_end);
    ExogenousDrivers {
        oil_price: DriverSeries::constant(a, b, 1.0),
        tax_registration_fees: DriverSeries::constant(a, b, 1.0),
        gdp_growth: DriverSeries::constant(a, b, BASE_MARKET_GROWTH),
        wtw_costs: DriverSeries::constant(a, b, 1.0),
    }
}

/// Fixture factors in tCO2e per vehicle-year; BEV falls with grid decarbonisation.
pub fn demo_factors() -> EmissionFactors {
    EmissionFactors::new(vec![
        (Technology::Incumbent, FactorSchedule::Constant(4.6)),
        (Technology::Hybrid, FactorSchedule::Constant(3.0)),
        (Technology::Emerging, FactorSchedule::Linear { from_year: 2000, from: 2.0, to_year: 2050, to: 0.6 }),
    ])
    .expect("demo factors are non-negative")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn demo_timeline_shape() {
        let t = demo_timeline();
        assert_eq!(t.segments().len(), 4);
        t.validate().unwrap();
        let b = t.first();
        assert_eq!(b.n_tech(), 3);
        assert_eq!(b.n_sub(), 16);
    }

    #[test]
    fn demo_initial_shares_sum_to_one() {
        let s = demo_initial_state(&SimulationConfig::default());
        let d = DimensionCatalog::standard().share_index().unwrap();
        let sum: f64 = (0..3).map(|i| s.level(i, d)).sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }
}

/// Last year of the demo's observed history.
pub const OBSERVED_END: i32 = 2020;

/// Annual baseline samples from the start year through `OBSERVED_END`,
/// standing in for a measured history.
pub fn demo_observed() -> ObservedSeries {
    let inputs = ModelInputs::demo();
    let run = run_scenario(&inputs, &ScenarioSpec::Baseline).expect("demo baseline runs");
    let (roster, catalog) = (inputs.roster.clone(), inputs.catalog.clone());
    let first = inputs.simulation.t_start;
    let mut series = ObservedSeries::new(roster, catalog, first, OBSERVED_END);
    for (year, state) in run.trajectory.annual() {
        if year > OBSERVED_END {
            break;
        }
        for i in 0..state.n_tech() {
            for d in 0..state.n_sub() {
                series.set(year, i, d, Some(state.level(i, d))).expect("year in range");
            }
        }
    }
    series
}
