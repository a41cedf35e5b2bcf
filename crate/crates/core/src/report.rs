//! Derived report tables: behaviour labels, mode series for a run, and the
//! long-format plot CSVs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::config::ModeSettings;
use crate::dynamics::{ParameterTimeline, Trajectory};
use crate::emissions::EmissionReport;
use crate::io::{fmt_num, IoError};
use crate::modes::{mode_series, pairs_of, ModeError, ModeRecord, SideModes, WindowCoefficients};
use crate::run::ScenarioRun;
use crate::technology::Roster;
use crate::tis::{classify_behavior, side_sum, BehaviorLabel, DimensionCatalog, Side};

/// Behaviour of one technology on one side over one window.
#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorRow {
    pub tech: usize,
    pub side: Side,
    pub sum_a: f64,
    pub sum_b: f64,
    pub label: BehaviorLabel,
}

/// One row per (window, technology, side) with a non-empty side.
pub fn behavior_series(
    windows: &[WindowCoefficients<'_>],
    techs: &[usize],
    catalog: &DimensionCatalog,
    epsilon: f64,
) -> Vec<BehaviorRow> {
    let mut out = Vec::new();
    for w in windows {
        let Some(block) = w.block else { continue };
        for &tech in techs {
            for side in Side::BOTH {
                if let Ok((sum_a, sum_b)) = side_sum(block, catalog, side, tech) {
                    let label = classify_behavior(sum_a, sum_b, epsilon, (w.start, w.end));
                    out.push(BehaviorRow { tech, side, sum_a, sum_b, label });
                }
            }
        }
    }
    out
}

/// Mode-timeline windows for a parameter timeline over a horizon.
pub fn timeline_windows(timeline: &ParameterTimeline, horizon_end: i32) -> Vec<WindowCoefficients<'_>> {
    timeline
        .spans(horizon_end)
        .into_iter()
        .zip(timeline.segments())
        .map(|((start, end), (_, block))| WindowCoefficients { start, end, block: Some(block) })
        .collect()
}

/// Mode series of a simulated run over its scenario-adjusted timeline,
/// restricted to active technologies.
pub fn run_modes(
    run: &ScenarioRun,
    roster: &Roster,
    catalog: &DimensionCatalog,
    settings: &ModeSettings,
    horizon_end: i32,
) -> Result<Vec<ModeRecord>, ModeError> {
    let windows = timeline_windows(&run.timeline, horizon_end);
    let pairs = pairs_of(&run.active_techs());
    let sides = SideModes::from_method(settings.aggregation, Some(&run.trajectory));
    mode_series(&windows, roster, catalog, &pairs, &settings.policy, sides)
}

/// Everything a plot table can draw from, for one scenario.
pub struct PlotSource<'a> {
    pub scenario: &'a str,
    pub trajectory: Option<&'a Trajectory>,
    pub modes: &'a [ModeRecord],
    pub behavior: &'a [BehaviorRow],
    pub emissions: Option<&'a EmissionReport>,
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, IoError> {
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(fs::File::create(path)?))
}

fn finish<W: Write>(mut w: csv::Writer<W>) -> Result<(), IoError> {
    w.flush()?;
    Ok(())
}

/// Writes `plots/{behavior,mode_timeline,dimensions,ghg}.csv` under `dir`,
/// rows sorted by scenario then year. Returns the files written.
pub fn emit_plot_data(
    dir: &Path,
    sources: &[PlotSource<'_>],
    roster: &Roster,
    catalog: &DimensionCatalog,
) -> Result<Vec<PathBuf>, IoError> {
    let plots = dir.join("plots");
    fs::create_dir_all(&plots)?;
    let mut order: Vec<&PlotSource> = sources.iter().collect();
    order.sort_by(|a, b| a.scenario.cmp(b.scenario));
    let mut written = Vec::new();

    let path = plots.join("behavior.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["scenario", "window_start", "window_end", "technology", "side", "sum_a", "sum_b", "creativity", "orientation"])?;
    for s in &order {
        let mut rows: Vec<&BehaviorRow> = s.behavior.iter().collect();
        rows.sort_by_key(|r| (r.label.window.0, r.tech, r.side));
        for r in rows {
            w.write_record([
                s.scenario,
                &r.label.window.0.to_string(),
                &r.label.window.1.to_string(),
                roster.name(r.tech),
                r.side.key(),
                &fmt_num(r.sum_a),
                &fmt_num(r.sum_b),
                r.label.creativity.label(),
                r.label.orientation.label(),
            ])?;
        }
    }
    finish(w)?;
    written.push(path);

    // One row per calendar year inside each window, so the timeline can be
    // drawn as stacked bands.
    let path = plots.join("mode_timeline.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["scenario", "year", "pair", "scope", "mode", "beneficiary", "victim"])?;
    for s in &order {
        let mut rows: Vec<(i32, &ModeRecord)> = Vec::new();
        for r in s.modes {
            for year in r.window_start..r.window_end.max(r.window_start + 1) {
                rows.push((year, r));
            }
        }
        rows.sort_by(|a, b| a.0.cmp(&b.0));
        for (year, r) in rows {
            let name = |t: Option<crate::technology::Technology>| {
                t.and_then(|t| roster.index_of(t)).map(|k| roster.name(k).to_string()).unwrap_or_default()
            };
            let (mode, ben, vic) = match &r.label {
                Some(l) => (l.mode.name().to_string(), name(l.beneficiary), name(l.victim)),
                None => Default::default(),
            };
            let pair = format!("{}-{}", roster.name(r.pair.0), roster.name(r.pair.1));
            w.write_record([s.scenario, &year.to_string(), &pair, &r.scope.to_string(), &mode, &ben, &vic])?;
        }
    }
    finish(w)?;
    written.push(path);

    let path = plots.join("dimensions.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["scenario", "year", "technology", "sub_dimension", "level"])?;
    for s in &order {
        let Some(traj) = s.trajectory else { continue };
        for (year, state) in traj.annual() {
            for i in 0..roster.len() {
                for (d, sub) in catalog.subs().iter().enumerate() {
                    w.write_record([s.scenario, &year.to_string(), roster.name(i), sub.name(), &fmt_num(state.level(i, d))])?;
                }
            }
        }
    }
    finish(w)?;
    written.push(path);

    let path = plots.join("ghg.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["scenario", "year", "technology", "annual_mt", "cumulative_mt"])?;
    for s in &order {
        let Some(rep) = s.emissions else { continue };
        for (k, year) in rep.years.iter().enumerate() {
            let y = year.to_string();
            for i in 0..roster.len() {
                w.write_record([s.scenario, &y, roster.name(i), &fmt_num(rep.annual[i][k]), &fmt_num(rep.cumulative[i][k])])?;
            }
            w.write_record([s.scenario, &y, "total", &fmt_num(rep.total_annual[k]), &fmt_num(rep.total_cumulative[k])])?;
        }
    }
    finish(w)?;
    written.push(path);
    Ok(written)
}
