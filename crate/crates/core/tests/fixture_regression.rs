//! The demo fixture reproduces the qualitative scenario ordering of the
//! vehicle-powertrain case.

use tisdyn::run::{run_scenario, run_scenarios, ModelInputs, ScenarioRun};
use tisdyn::scenario::{DriverMultipliers, ScenarioSpec};
use tisdyn::technology::Technology;

fn all_runs() -> Vec<ScenarioRun> {
    let inputs = ModelInputs::demo();
    run_scenarios(&inputs, &ScenarioSpec::all_defaults()).into_iter().map(|r| r.expect("demo runs")).collect()
}

fn by_name<'a>(runs: &'a [ScenarioRun], name: &str) -> &'a ScenarioRun {
    runs.iter().find(|r| r.spec.name() == name).expect("scenario present")
}

fn icev_crossing(run: &ScenarioRun, share: usize) -> Option<i32> {
    run.trajectory.annual().into_iter().find(|(_, s)| s.level(0, share) < 0.5).map(|(y, _)| y)
}

#[test]
fn transition_has_lowest_and_hybrid_incumbent_highest_cumulative_emissions() {
    let runs = all_runs();
    let ghg = |r: &ScenarioRun| r.emissions.final_cumulative_total();
    let lowest = runs.iter().min_by(|a, b| ghg(a).total_cmp(&ghg(b))).unwrap();
    let highest = runs.iter().max_by(|a, b| ghg(a).total_cmp(&ghg(b))).unwrap();
    assert_eq!(lowest.spec.name(), "sociotechnical-transition");
    assert_eq!(highest.spec.name(), "hybrid-incumbent");
}

#[test]
fn incumbent_loses_majority_earlier_in_baseline_than_without_hybrids() {
    let runs = all_runs();
    let share = ModelInputs::demo().catalog.share_index().unwrap();
    let base = icev_crossing(by_name(&runs, "baseline"), share).expect("baseline crosses 50%");
    let niche = icev_crossing(by_name(&runs, "niche-incumbent"), share).expect("niche-incumbent crosses 50%");
    assert!(base < niche, "baseline {base}, niche-incumbent {niche}");
}

#[test]
fn only_the_transition_scenario_intervenes() {
    for run in all_runs() {
        if run.spec.name() == "sociotechnical-transition" {
            assert!(!run.interventions.is_empty());
            for &(start, end) in &run.interventions {
                assert_eq!(end - start, 20);
            }
        } else {
            assert!(run.interventions.is_empty(), "{}", run.spec.name());
        }
    }
}

#[test]
fn removed_technology_has_no_levels_sales_or_emissions() {
    let runs = all_runs();
    let inputs = ModelInputs::demo();
    for (name, role) in [("niche-incumbent", Technology::Hybrid), ("hybrid-incumbent", Technology::Emerging)] {
        let run = by_name(&runs, name);
        let i = inputs.roster.index_of(role).unwrap();
        assert!(run.trajectory.states().iter().all(|s| (0..s.n_sub()).all(|d| s.level(i, d) == 0.0)));
        assert!(run.sales.values[i].iter().all(|&v| v == 0.0));
        assert!(run.emissions.annual[i].iter().all(|&v| v == 0.0));
    }
}

#[test]
fn neutral_landscape_pressure_is_the_baseline() {
    let inputs = ModelInputs::demo();
    let base = run_scenario(&inputs, &ScenarioSpec::Baseline).unwrap();
    let neutral = run_scenario(&inputs, &ScenarioSpec::LandscapePressure(DriverMultipliers::uniform(1.0))).unwrap();
    assert_eq!(base.trajectory, neutral.trajectory);
    assert_eq!(base.emissions, neutral.emissions);
}

#[test]
fn landscape_pressure_cuts_cumulative_emissions() {
    let runs = all_runs();
    let ghg = |n: &str| by_name(&runs, n).emissions.final_cumulative_total();
    assert!(ghg("landscape-pressure") < ghg("baseline"));
}

#[test]
fn emerging_technology_side_is_lower_without_hybrids() {
    let runs = all_runs();
    let inputs = ModelInputs::demo();
    let e = inputs.roster.index_of(Technology::Emerging).unwrap();
    let tech_side = inputs.catalog.side_members(tisdyn::tis::Side::Technology);
    let (base, niche) = (by_name(&runs, "baseline"), by_name(&runs, "niche-incumbent"));
    for ((year, b), (_, n)) in base.trajectory.annual().into_iter().zip(niche.trajectory.annual()).skip(1) {
        for &d in &tech_side {
            assert!(n.level(e, d) < b.level(e, d), "{year} sub-dimension {d}");
        }
    }
}
