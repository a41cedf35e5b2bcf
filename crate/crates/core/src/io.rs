//! CSV readers and writers for trajectories, parameters, modes, sales,
//! emissions, comparisons and observed data. Numbers are written with nine
//! significant digits.

use std::io::{Read, Write};

use thiserror::Error;

use crate::calibration::{CalibrationError, FitResult, GoodnessOfFit, ObservedSeries};
use crate::dynamics::{DynamicsError, ParameterBlock, ParameterTimeline, Trajectory};
use crate::emissions::EmissionReport;
use crate::modes::ModeRecord;
use crate::technology::{Roster, TechnologyId};
use crate::tis::{CatalogError, DimensionCatalog, SubDimension, TechSeries};

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("header: {0}")]
    Header(String),
}

fn parse_err(line: u64, message: impl Into<String>) -> IoError {
    IoError::Parse { line, message: message.into() }
}

/// `%.9g`: nine significant digits, trailing zeros trimmed, exponent form
/// outside `1e-4 ..= 1e9`.
pub fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{:.8e}", v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..9).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (8 - exp).max(0) as usize;
    trim_zeros(&format!("{:.*}", decimals, v)).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

/// `year,technology,sub_dimension,level` at every annual sample.
pub fn write_trajectory<W: Write>(
    w: W,
    trajectory: &Trajectory,
    roster: &Roster,
    catalog: &DimensionCatalog,
) -> Result<(), IoError> {
    let mut out = writer(w);
    out.write_record(["year", "technology", "sub_dimension", "level"])?;
    for (year, state) in trajectory.annual() {
        for i in 0..roster.len() {
            for (d, sub) in catalog.subs().iter().enumerate() {
                out.write_record([&year.to_string(), roster.name(i), sub.name(), &fmt_num(state.level(i, d))])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn parameter_header(roster: &Roster) -> Vec<String> {
    let mut h: Vec<String> = ["window_start", "technology", "sub_dimension", "a", "b"].map(String::from).into();
    h.extend(roster.iter().map(|t| format!("c_{}", t.display_name)));
    h.push("r2".into());
    h.push("filled".into());
    h
}

fn write_block_rows<W: Write>(
    out: &mut csv::Writer<W>,
    start: i32,
    block: &ParameterBlock,
    roster: &Roster,
    catalog: &DimensionCatalog,
    r2: impl Fn(usize, usize) -> Option<f64>,
    filled: bool,
) -> Result<(), IoError> {
    for i in 0..roster.len() {
        for (d, sub) in catalog.subs().iter().enumerate() {
            let mut row = vec![
                start.to_string(),
                roster.name(i).to_string(),
                sub.name().to_string(),
                fmt_num(block.growth(i, d)),
                fmt_num(block.decline(i, d)),
            ];
            row.extend((0..roster.len()).map(|j| if j == i { String::new() } else { fmt_num(block.interaction(i, j, d)) }));
            row.push(r2(i, d).map(fmt_num).unwrap_or_default());
            row.push(filled.to_string());
            out.write_record(&row)?;
        }
    }
    Ok(())
}

/// Parameter table for a timeline without fit statistics.
pub fn write_timeline<W: Write>(
    w: W,
    timeline: &ParameterTimeline,
    roster: &Roster,
    catalog: &DimensionCatalog,
) -> Result<(), IoError> {
    let mut out = writer(w);
    out.write_record(parameter_header(roster))?;
    for (start, block) in timeline.segments() {
        write_block_rows(&mut out, *start, block, roster, catalog, |_, _| None, false)?;
    }
    out.flush()?;
    Ok(())
}

/// Parameter table for a calibration, with per-entry R² and fill flags.
pub fn write_fit<W: Write>(w: W, fit: &FitResult, roster: &Roster, catalog: &DimensionCatalog) -> Result<(), IoError> {
    let mut out = writer(w);
    out.write_record(parameter_header(roster))?;
    for win in &fit.windows {
        write_block_rows(&mut out, win.start, &win.block, roster, catalog, |i, d| win.r2(i, d), win.is_filled())?;
    }
    out.flush()?;
    Ok(())
}

/// Parameters read back from a parameter table.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterTable {
    pub roster: Roster,
    pub catalog: DimensionCatalog,
    pub timeline: ParameterTimeline,
    /// Window starts whose rows were marked filled.
    pub filled: Vec<i32>,
}

/// Reads a parameter table. The roster comes from the `c_<name>` columns
/// unless one is given; the catalog holds the listed sub-dimensions in
/// canonical order unless one is given.
pub fn read_parameters<R: Read>(
    r: R,
    roster: Option<&Roster>,
    catalog: Option<&DimensionCatalog>,
) -> Result<ParameterTable, IoError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let header = rdr.headers()?.clone();
    let fixed = ["window_start", "technology", "sub_dimension", "a", "b"];
    for (k, name) in fixed.iter().enumerate() {
        if header.get(k) != Some(*name) {
            return Err(IoError::Header(format!("column {} must be `{name}`", k + 1)));
        }
    }
    let c_cols: Vec<&str> = header.iter().skip(5).take_while(|h| h.starts_with("c_")).collect();
    let tail: Vec<&str> = header.iter().skip(5 + c_cols.len()).collect();
    if tail != ["r2", "filled"] {
        return Err(IoError::Header("expected c_<technology> columns followed by `r2,filled`".into()));
    }
    let standard = Roster::standard();
    let roster = match roster {
        Some(r) => r.clone(),
        None => {
            let ids = c_cols
                .iter()
                .map(|c| {
                    let name = &c[2..];
                    standard
                        .lookup(name)
                        .map(|k| TechnologyId { role: standard.get(k).role, display_name: name.to_string() })
                        .ok_or_else(|| IoError::Header(format!("unknown technology column `{c}`")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            Roster::new(ids).ok_or_else(|| IoError::Header("duplicate technology columns".into()))?
        }
    };
    // Column position for each roster index.
    let col_of: Vec<usize> = (0..roster.len())
        .map(|i| {
            c_cols
                .iter()
                .position(|c| roster.lookup(&c[2..]) == Some(i))
                .ok_or_else(|| IoError::Header(format!("no column for {}", roster.name(i))))
        })
        .collect::<Result<_, _>>()?;
    if c_cols.len() != roster.len() {
        return Err(IoError::Header(format!("{} technology columns, roster has {}", c_cols.len(), roster.len())));
    }

    struct Row {
        line: u64,
        start: i32,
        tech: usize,
        sub: SubDimension,
        a: f64,
        b: f64,
        c: Vec<Option<f64>>,
        filled: bool,
    }
    let num = |line: u64, s: &str, what: &str| -> Result<f64, IoError> {
        s.parse::<f64>().map_err(|_| parse_err(line, format!("{what} `{s}` is not a number")))
    };
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let start: i32 = rec[0].parse().map_err(|_| parse_err(line, format!("window_start `{}`", &rec[0])))?;
        let tech = roster.lookup(&rec[1]).ok_or_else(|| parse_err(line, format!("unknown technology `{}`", &rec[1])))?;
        let sub = SubDimension::from_name(&rec[2]).map_err(|e| parse_err(line, e.to_string()))?;
        let a = num(line, &rec[3], "a")?;
        let b = num(line, &rec[4], "b")?;
        let mut c = Vec::with_capacity(roster.len());
        for (j, &col) in col_of.iter().enumerate() {
            let s = &rec[5 + col];
            c.push(if j == tech || s.is_empty() { None } else { Some(num(line, s, "interaction")?) });
        }
        let filled = match &rec[6 + c_cols.len()] {
            "true" => true,
            "false" | "" => false,
            other => return Err(parse_err(line, format!("filled must be true or false, got `{other}`"))),
        };
        rows.push(Row { line, start, tech, sub, a, b, c, filled });
    }
    if rows.is_empty() {
        return Err(parse_err(1, "parameter table has no rows"));
    }

    let catalog = match catalog {
        Some(c) => c.clone(),
        None => {
            let subs: Vec<SubDimension> =
                SubDimension::ALL.iter().copied().filter(|s| rows.iter().any(|r| r.sub == *s)).collect();
            DimensionCatalog::new(subs, &[]).map_err(|e| IoError::Header(e.to_string()))?
        }
    };
    let mut starts: Vec<i32> = rows.iter().map(|r| r.start).collect();
    starts.sort_unstable();
    starts.dedup();
    let (nt, ns) = (roster.len(), catalog.len());
    let mut blocks = vec![ParameterBlock::zeros(nt, ns); starts.len()];
    let mut seen = vec![false; starts.len() * nt * ns];
    let mut filled = Vec::new();
    for r in &rows {
        let w = starts.binary_search(&r.start).expect("start collected above");
        let d = catalog.index_of(r.sub).ok_or_else(|| parse_err(r.line, format!("`{}` is not in the catalog", r.sub.name())))?;
        let slot = (w * nt + r.tech) * ns + d;
        if seen[slot] {
            return Err(parse_err(r.line, "duplicate row"));
        }
        seen[slot] = true;
        let b = &mut blocks[w];
        b.set_growth(r.tech, d, r.a);
        b.set_decline(r.tech, d, r.b);
        for (j, c) in r.c.iter().enumerate() {
            if j != r.tech {
                let v = c.ok_or_else(|| parse_err(r.line, format!("missing c_{}", roster.name(j))))?;
                b.set_interaction(r.tech, j, d, v);
            }
        }
        if r.filled && !filled.contains(&r.start) {
            filled.push(r.start);
        }
    }
    if let Some(k) = seen.iter().position(|s| !s) {
        let (w, i, d) = (k / (nt * ns), (k / ns) % nt, k % ns);
        return Err(parse_err(
            0,
            format!("no row for window {} {} {}", starts[w], roster.name(i), catalog.get(d).name()),
        ));
    }
    let timeline = ParameterTimeline::new(starts.into_iter().zip(blocks).collect())
        .map_err(|e: DynamicsError| parse_err(0, e.to_string()))?;
    Ok(ParameterTable { roster, catalog, timeline, filled })
}

/// `window_start,window_end,pair,scope,mode,beneficiary,victim`; gaps have
/// an empty mode.
pub fn write_modes<W: Write>(w: W, records: &[ModeRecord], roster: &Roster) -> Result<(), IoError> {
    let mut out = writer(w);
    out.write_record(["window_start", "window_end", "pair", "scope", "mode", "beneficiary", "victim"])?;
    let name_of = |t: Option<crate::technology::Technology>| {
        t.and_then(|t| roster.index_of(t)).map(|k| roster.name(k).to_string()).unwrap_or_default()
    };
    for r in records {
        let pair = format!("{}-{}", roster.name(r.pair.0), roster.name(r.pair.1));
        let (mode, ben, vic) = match &r.label {
            Some(l) => (l.mode.name().to_string(), name_of(l.beneficiary), name_of(l.victim)),
            None => (String::new(), String::new(), String::new()),
        };
        out.write_record([
            &r.window_start.to_string(),
            &r.window_end.to_string(),
            &pair,
            &r.scope.to_string(),
            &mode,
            &ben,
            &vic,
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// `scenario,year,technology,sales,stock`.
/// Sales are written at full precision so emissions can be recomputed
/// from the file exactly.
pub fn write_sales<W: Write>(
    w: W,
    scenario: &str,
    sales: &TechSeries,
    stocks: &TechSeries,
    roster: &Roster,
) -> Result<(), IoError> {
    let mut out = writer(w);
    out.write_record(["scenario", "year", "technology", "sales", "stock"])?;
    for (k, year) in sales.years.iter().enumerate() {
        for i in 0..roster.len() {
            out.write_record([
                scenario,
                &year.to_string(),
                roster.name(i),
                &sales.values[i][k].to_string(),
                &stocks.values[i][k].to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads the sales column of a sales table back into a series.
pub fn read_sales<R: Read>(r: R, roster: &Roster) -> Result<(String, TechSeries), IoError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let header = rdr.headers()?.clone();
    if header.iter().take(4).collect::<Vec<_>>() != ["scenario", "year", "technology", "sales"] {
        return Err(IoError::Header("expected `scenario,year,technology,sales,...`".into()));
    }
    let mut scenario = None;
    let mut entries: Vec<(i32, usize, f64)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        scenario.get_or_insert_with(|| rec[0].to_string());
        let year: i32 = rec[1].parse().map_err(|_| parse_err(line, format!("year `{}`", &rec[1])))?;
        let tech = roster.lookup(&rec[2]).ok_or_else(|| parse_err(line, format!("unknown technology `{}`", &rec[2])))?;
        let v: f64 = rec[3].parse().map_err(|_| parse_err(line, format!("sales `{}`", &rec[3])))?;
        entries.push((year, tech, v));
    }
    let mut years: Vec<i32> = entries.iter().map(|e| e.0).collect();
    years.sort_unstable();
    years.dedup();
    let mut out = TechSeries::zeros(years.clone(), roster.len());
    for (year, tech, v) in entries {
        let k = years.binary_search(&year).expect("year collected above");
        out.values[tech][k] = v;
    }
    Ok((scenario.unwrap_or_default(), out))
}

/// `scenario,year,technology,annual_mt,cumulative_mt`, with `total` rows.
pub fn write_emissions<W: Write>(w: W, scenario: &str, report: &EmissionReport, roster: &Roster) -> Result<(), IoError> {
    let mut out = writer(w);
    out.write_record(["scenario", "year", "technology", "annual_mt", "cumulative_mt"])?;
    write_emission_rows(&mut out, scenario, report, roster)?;
    out.flush()?;
    Ok(())
}

fn write_emission_rows<W: Write>(
    out: &mut csv::Writer<W>,
    scenario: &str,
    report: &EmissionReport,
    roster: &Roster,
) -> Result<(), IoError> {
    for (k, year) in report.years.iter().enumerate() {
        let y = year.to_string();
        for i in 0..roster.len() {
            out.write_record([scenario, &y, roster.name(i), &fmt_num(report.annual[i][k]), &fmt_num(report.cumulative[i][k])])?;
        }
        out.write_record([scenario, &y, "total", &fmt_num(report.total_annual[k]), &fmt_num(report.total_cumulative[k])])?;
    }
    Ok(())
}

/// One scenario's contribution to the comparison table.
pub struct ComparisonInput<'a> {
    pub scenario: &'a str,
    pub trajectory: &'a Trajectory,
    pub sales: &'a TechSeries,
    pub emissions: &'a EmissionReport,
}

/// `scenario,year,technology,share,sales,cumulative_ghg`, sorted by scenario then year.
pub fn write_comparison<W: Write>(
    w: W,
    runs: &[ComparisonInput<'_>],
    roster: &Roster,
    share_index: usize,
) -> Result<(), IoError> {
    let mut out = writer(w);
    out.write_record(["scenario", "year", "technology", "share", "sales", "cumulative_ghg"])?;
    let mut order: Vec<&ComparisonInput> = runs.iter().collect();
    order.sort_by(|a, b| a.scenario.cmp(b.scenario));
    for run in order {
        for (k, (year, state)) in run.trajectory.annual().into_iter().enumerate() {
            for i in 0..roster.len() {
                out.write_record([
                    run.scenario,
                    &year.to_string(),
                    roster.name(i),
                    &fmt_num(state.level(i, share_index)),
                    &fmt_num(run.sales.values[i][k]),
                    &fmt_num(run.emissions.cumulative[i][k]),
                ])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// `window_start,window_end,technology,sub_dimension,r2,rmse`.
pub fn write_goodness<W: Write>(
    w: W,
    gof: &GoodnessOfFit,
    roster: &Roster,
    catalog: &DimensionCatalog,
) -> Result<(), IoError> {
    let mut out = writer(w);
    out.write_record(["window_start", "window_end", "technology", "sub_dimension", "r2", "rmse"])?;
    let ns = catalog.len();
    for win in &gof.windows {
        for i in 0..roster.len() {
            for (d, sub) in catalog.subs().iter().enumerate() {
                out.write_record([
                    &win.start.to_string(),
                    &win.end.to_string(),
                    roster.name(i),
                    sub.name(),
                    &win.r2[i * ns + d].map(fmt_num).unwrap_or_default(),
                    &win.rmse[d].map(fmt_num).unwrap_or_default(),
                ])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Reads `year,technology,sub_dimension,level`; an empty level is a gap.
/// Pairs without any row stay absent.
pub fn read_observed<R: Read>(r: R, roster: &Roster, catalog: &DimensionCatalog) -> Result<ObservedSeries, IoError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != ["year", "technology", "sub_dimension", "level"] {
        return Err(IoError::Header("expected `year,technology,sub_dimension,level`".into()));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let year: i32 = rec[0].parse().map_err(|_| parse_err(line, format!("year `{}`", &rec[0])))?;
        let tech = roster.lookup(&rec[1]).ok_or_else(|| parse_err(line, format!("unknown technology `{}`", &rec[1])))?;
        let d = catalog.lookup(&rec[2]).map_err(|e: CatalogError| parse_err(line, e.to_string()))?;
        let level = if rec[3].is_empty() {
            None
        } else {
            Some(rec[3].parse::<f64>().map_err(|_| parse_err(line, format!("level `{}`", &rec[3])))?)
        };
        rows.push((line, year, tech, d, level));
    }
    let first = rows.iter().map(|r| r.1).min().ok_or_else(|| parse_err(1, "no observations"))?;
    let last = rows.iter().map(|r| r.1).max().expect("non-empty");
    let mut series = ObservedSeries::new(roster.clone(), catalog.clone(), first, last);
    for (line, year, tech, d, level) in rows {
        series.set(year, tech, d, level).map_err(|e: CalibrationError| parse_err(line, e.to_string()))?;
    }
    Ok(series)
}

/// Writes observations in the same format `read_observed` accepts.
pub fn write_observed<W: Write>(w: W, series: &ObservedSeries) -> Result<(), IoError> {
    let mut out = writer(w);
    out.write_record(["year", "technology", "sub_dimension", "level"])?;
    let (roster, catalog) = (series.roster(), series.catalog());
    for year in series.first_year()..=series.last_year() {
        for i in 0..roster.len() {
            for (d, sub) in catalog.subs().iter().enumerate() {
                if series.is_absent(i, d) {
                    continue;
                }
                let level = series.get(year, i, d).map(fmt_num).unwrap_or_default();
                out.write_record([&year.to_string(), roster.name(i), sub.name(), &level])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}
