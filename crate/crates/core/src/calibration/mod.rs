//! Estimation of piecewise-constant growth, decline and interaction rates
//! from annual indicator series.
//!
//! Each window is fitted per sub-dimension. The linear stage regresses the
//! annual log growth `ln(X[t+1] / X[t])` of every technology on an intercept
//! and the logarithmic-mean levels of all present technologies over the same
//! year; the intercept estimates `a`, the own-level slope `-b`, and the other
//! slopes `-C`. The refined stage starts from those estimates and minimises
//! one-year-ahead prediction error through the same Euler integrator the
//! simulator uses.

mod lm;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{integrate_span, ParameterBlock, ParameterTimeline, SystemLayout, SystemState, Trajectory};
use crate::modes::WindowCoefficients;
use crate::technology::Roster;
use crate::tis::DimensionCatalog;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibrationError {
    #[error("observed level must be finite and non-negative, got {value} ({tech}, {sub}, {year})")]
    InvalidLevel { tech: String, sub: String, year: i32, value: f64 },
    #[error("year {0} outside the observed span")]
    YearOutOfRange(i32),
    #[error("invalid window spec: {0}")]
    InvalidWindow(String),
    #[error("series spans {span} years, shorter than one {length}-year window")]
    InsufficientData { span: i32, length: u32 },
    #[error("no window could be fitted ({} failures); first: {}", .0.len(), .0.first().map(|f| f.to_string()).unwrap_or_default())]
    NoFittableWindow(Vec<WindowFailure>),
}

/// Annual observations per (technology, sub-dimension); `None` marks a gap.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedSeries {
    roster: Roster,
    catalog: DimensionCatalog,
    first_year: i32,
    n_years: usize,
    levels: Vec<Option<f64>>,
}

impl ObservedSeries {
    pub fn new(roster: Roster, catalog: DimensionCatalog, first_year: i32, last_year: i32) -> Self {
        let n_years = (last_year - first_year + 1).max(0) as usize;
        let len = n_years * roster.len() * catalog.len();
        Self { roster, catalog, first_year, n_years, levels: vec![None; len] }
    }

    /// Annual samples of a simulated trajectory.
    pub fn from_trajectory(traj: &Trajectory, roster: Roster, catalog: DimensionCatalog) -> Self {
        let annual = traj.annual();
        let first = annual[0].0;
        let last = annual[annual.len() - 1].0;
        let mut s = Self::new(roster, catalog, first, last);
        for (y, st) in annual {
            for i in 0..traj.n_tech() {
                for d in 0..traj.n_sub() {
                    let k = s.idx(y, i, d);
                    s.levels[k] = Some(st.level(i, d));
                }
            }
        }
        s
    }

    fn idx(&self, year: i32, i: usize, d: usize) -> usize {
        let k = (year - self.first_year) as usize;
        (k * self.roster.len() + i) * self.catalog.len() + d
    }

    pub fn roster(&self) -> &Roster {
        &self.roster
    }

    pub fn catalog(&self) -> &DimensionCatalog {
        &self.catalog
    }

    pub fn first_year(&self) -> i32 {
        self.first_year
    }

    pub fn last_year(&self) -> i32 {
        self.first_year + self.n_years as i32 - 1
    }

    pub fn set(&mut self, year: i32, i: usize, d: usize, level: Option<f64>) -> Result<(), CalibrationError> {
        if year < self.first_year || year > self.last_year() {
            return Err(CalibrationError::YearOutOfRange(year));
        }
        if let Some(v) = level {
            if !(v.is_finite() && v >= 0.0) {
                return Err(CalibrationError::InvalidLevel {
                    tech: self.roster.name(i).into(),
                    sub: self.catalog.get(d).name().into(),
                    year,
                    value: v,
                });
            }
        }
        let k = self.idx(year, i, d);
        self.levels[k] = level;
        Ok(())
    }

    pub fn get(&self, year: i32, i: usize, d: usize) -> Option<f64> {
        if year < self.first_year || year > self.last_year() {
            return None;
        }
        self.levels[self.idx(year, i, d)]
    }

    /// A technology that is zero or unobserved in every year of a
    /// sub-dimension takes no part in that sub-dimension's fit.
    pub fn is_absent(&self, i: usize, d: usize) -> bool {
        (self.first_year..=self.last_year()).all(|y| self.get(y, i, d).map_or(true, |v| v == 0.0))
    }

    fn present(&self, d: usize) -> Vec<usize> {
        (0..self.roster.len()).filter(|&i| !self.is_absent(i, d)).collect()
    }
}

/// Rolling calibration windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    pub length: u32,
    pub stride: u32,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self { length: 5, stride: 1 }
    }
}

impl WindowSpec {
    /// `length` must cover the intercept, the own term and every cross term.
    pub fn validate(&self, n_tech: usize) -> Result<(), CalibrationError> {
        if self.stride == 0 {
            return Err(CalibrationError::InvalidWindow("stride must be at least 1".into()));
        }
        if (self.length as usize) < n_tech + 1 {
            return Err(CalibrationError::InvalidWindow(format!(
                "length {} is shorter than the {} regressors of a {}-technology fit",
                self.length,
                n_tech + 1,
                n_tech
            )));
        }
        Ok(())
    }

    pub fn starts(&self, first_year: i32, last_year: i32) -> Vec<i32> {
        let mut out = Vec::new();
        let mut s = first_year;
        while s + self.length as i32 <= last_year {
            out.push(s);
            s += self.stride as i32;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    Linear,
    #[default]
    Refined,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub method: FitMethod,
    /// Integrator step used by the refined stage and by goodness of fit.
    pub dt: f64,
    pub renormalize_shares: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { method: FitMethod::default(), dt: 0.125, renormalize_shares: true }
    }
}

impl FitOptions {
    fn steps_per_year(&self) -> usize {
        (1.0 / self.dt).round().max(1.0) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionStats {
    pub r2: f64,
    pub residual_variance: f64,
    pub condition_number: f64,
    pub observations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FailureReason {
    ZeroLevel { year: i32 },
    MissingData,
    TooFewObservations { have: usize, need: usize },
    RankDeficient { condition_number: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Unfittable {
    pub tech: usize,
    pub sub: usize,
    pub reason: FailureReason,
}

/// Why a window produced no parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowFailure {
    pub start: i32,
    pub end: i32,
    pub problems: Vec<Unfittable>,
}

impl std::fmt::Display for WindowFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "window {}-{}:", self.start, self.end)?;
        for p in &self.problems {
            write!(f, " tech {} sub {} {:?};", p.tech, p.sub, p.reason)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedWindow {
    pub start: i32,
    pub end: i32,
    pub block: ParameterBlock,
    /// Indexed `tech * n_sub + sub`; `None` for absent technologies.
    pub stats: Vec<Option<RegressionStats>>,
}

impl FittedWindow {
    pub fn stats(&self, i: usize, d: usize) -> Option<&RegressionStats> {
        self.stats[i * self.block.n_sub() + d].as_ref()
    }
}

/// One window of a full calibration, either fitted or forward-filled.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowEntry {
    pub start: i32,
    pub end: i32,
    pub block: ParameterBlock,
    pub stats: Option<Vec<Option<RegressionStats>>>,
    /// Start year of the window whose block was copied here.
    pub filled_from: Option<i32>,
    pub failure: Option<WindowFailure>,
}

impl WindowEntry {
    pub fn is_filled(&self) -> bool {
        self.filled_from.is_some()
    }

    pub fn r2(&self, i: usize, d: usize) -> Option<f64> {
        self.stats.as_ref()?.get(i * self.block.n_sub() + d)?.map(|s| s.r2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub windows: Vec<WindowEntry>,
}

impl FitResult {
    pub fn timeline(&self) -> ParameterTimeline {
        ParameterTimeline::new(self.windows.iter().map(|w| (w.start, w.block.clone())).collect())
            .expect("windows have distinct starts and one shape")
    }

    /// Non-overlapping spans `[start_k, start_{k+1})`, the last ending at its fit end.
    pub fn spans(&self) -> Vec<(i32, i32)> {
        self.windows
            .iter()
            .enumerate()
            .map(|(k, w)| (w.start, self.windows.get(k + 1).map(|n| n.start).unwrap_or(w.end)))
            .collect()
    }

    /// Mode-timeline input; filled windows appear as gaps.
    pub fn window_coefficients(&self) -> Vec<WindowCoefficients<'_>> {
        self.windows
            .iter()
            .zip(self.spans())
            .map(|(w, (s, e))| WindowCoefficients { start: s, end: e, block: (!w.is_filled()).then_some(&w.block) })
            .collect()
    }
}

fn log_mean(x0: f64, x1: f64) -> f64 {
    if x0 > 0.0 && x1 > 0.0 {
        let d = x1 - x0;
        if d.abs() <= 1e-12 * x0 {
            0.5 * (x0 + x1)
        } else {
            d / (x1 / x0).ln()
        }
    } else {
        0.5 * (x0 + x1)
    }
}

struct LinearFit {
    a: f64,
    b: f64,
    /// `(j, c_ij)` for every other present technology.
    cross: Vec<(usize, f64)>,
    stats: RegressionStats,
}

/// Linear stage for technology `i`, sub-dimension `d`.
fn linear_fit(
    series: &ObservedSeries,
    i: usize,
    d: usize,
    present: &[usize],
    start: i32,
    end: i32,
) -> Result<LinearFit, FailureReason> {
    for y in start..=end {
        match series.get(y, i, d) {
            None => return Err(FailureReason::MissingData),
            Some(v) if v <= 0.0 => return Err(FailureReason::ZeroLevel { year: y }),
            Some(_) => {}
        }
    }
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut ys = Vec::new();
    'year: for t in start..end {
        let mut row = Vec::with_capacity(present.len() + 1);
        row.push(1.0);
        for &j in present {
            let (Some(x0), Some(x1)) = (series.get(t, j, d), series.get(t + 1, j, d)) else {
                continue 'year;
            };
            row.push(log_mean(x0, x1));
        }
        let (x0, x1) = (series.get(t, i, d).unwrap(), series.get(t + 1, i, d).unwrap());
        ys.push((x1 / x0).ln());
        rows.push(row);
    }
    // Columns that are identically zero carry no information; their
    // coefficients are fixed at zero.
    let ncol = present.len() + 1;
    let keep: Vec<usize> = (0..ncol).filter(|&c| c == 0 || rows.iter().any(|r| r[c] != 0.0)).collect();
    let nobs = rows.len();
    if nobs < keep.len() {
        return Err(FailureReason::TooFewObservations { have: nobs, need: keep.len() });
    }
    let mut design = DMatrix::<f64>::zeros(nobs, keep.len());
    for (r, row) in rows.iter().enumerate() {
        for (c, &col) in keep.iter().enumerate() {
            design[(r, c)] = row[col];
        }
    }
    let mut scale = vec![1.0; keep.len()];
    for c in 0..keep.len() {
        let n = design.column(c).norm();
        if n > 0.0 {
            scale[c] = n;
            design.column_mut(c).unscale_mut(n);
        }
    }
    let y = DVector::from_vec(ys);
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition_number = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let zero_response = y.iter().all(|&v| v == 0.0);

    let beta_scaled = if zero_response {
        DVector::zeros(keep.len())
    } else {
        if !(smin > 1e-12 * smax) {
            return Err(FailureReason::RankDeficient { condition_number });
        }
        svd.solve(&y, 0.0).map_err(|_| FailureReason::RankDeficient { condition_number })?
    };
    let mut beta = vec![0.0; ncol];
    for (c, &col) in keep.iter().enumerate() {
        beta[col] = beta_scaled[c] / scale[c];
    }
    let fitted = &design * &beta_scaled;
    let ss_res: f64 = (&y - &fitted).iter().map(|v| v * v).sum();
    let ymean = y.mean();
    let ss_tot: f64 = y.iter().map(|v| (v - ymean).powi(2)).sum();
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res <= 1e-30 {
        1.0
    } else {
        0.0
    };
    let dof = nobs.saturating_sub(keep.len()).max(1);
    let own = present.iter().position(|&j| j == i).expect("fitted technology is present");
    Ok(LinearFit {
        a: beta[0],
        b: -beta[1 + own],
        cross: present.iter().enumerate().filter(|(_, &j)| j != i).map(|(k, &j)| (j, -beta[1 + k])).collect(),
        stats: RegressionStats { r2, residual_variance: ss_res / dof as f64, condition_number, observations: nobs },
    })
}

/// Observed one-year transitions of sub-dimension `d` among `present`
/// technologies, with no gaps.
fn transitions(series: &ObservedSeries, d: usize, present: &[usize], start: i32, end: i32) -> Vec<(Vec<f64>, Vec<f64>)> {
    (start..end)
        .filter_map(|t| {
            let x0: Option<Vec<f64>> = present.iter().map(|&j| series.get(t, j, d)).collect();
            let x1: Option<Vec<f64>> = present.iter().map(|&j| series.get(t + 1, j, d)).collect();
            Some((x0?, x1?))
        })
        .collect()
}

/// Packs one sub-dimension's rates for the present technologies:
/// for each technology `a, b`, then `c` against every other present one.
fn pack(block: &ParameterBlock, d: usize, present: &[usize]) -> Vec<f64> {
    let mut p = Vec::new();
    for &i in present {
        p.push(block.growth(i, d));
        p.push(block.decline(i, d));
        for &j in present.iter().filter(|&&j| j != i) {
            p.push(block.interaction(i, j, d));
        }
    }
    p
}

fn unpack_into(block: &mut ParameterBlock, d: usize, present: &[usize], p: &[f64]) {
    let mut k = 0;
    for &i in present {
        block.set_growth(i, d, p[k]);
        block.set_decline(i, d, p[k + 1]);
        k += 2;
        for &j in present.iter().filter(|&&j| j != i) {
            block.set_interaction(i, j, d, p[k]);
            k += 1;
        }
    }
}

/// Reduced single-sub-dimension system for the present technologies.
fn reduced_block(p: &[f64], n: usize) -> ParameterBlock {
    let mut b = ParameterBlock::zeros(n, 1);
    let all: Vec<usize> = (0..n).collect();
    unpack_into(&mut b, 0, &all, p);
    b
}

fn one_year(x0: &[f64], block: &ParameterBlock, layout: &SystemLayout, opts: &FitOptions) -> SystemState {
    let s = SystemState::from_levels(0.0, 1, x0.to_vec());
    integrate_span(&s, block, layout, opts.dt, opts.steps_per_year(), opts.renormalize_shares)
}

fn refine_sub(
    series: &ObservedSeries,
    d: usize,
    present: &[usize],
    start: i32,
    end: i32,
    init: &[f64],
    opts: &FitOptions,
) -> Option<Vec<f64>> {
    let n = present.len();
    let trans = transitions(series, d, present, start, end);
    if trans.is_empty() {
        return None;
    }
    let share = series.catalog.share_index() == Some(d);
    let layout = SystemLayout::new(n, 1, share.then_some(0));
    let mut scale = vec![0.0; n];
    for (x0, _) in &trans {
        for k in 0..n {
            scale[k] += x0[k] / trans.len() as f64;
        }
    }
    for s in scale.iter_mut() {
        if !(*s > 0.0) {
            *s = 1.0;
        }
    }
    let residuals = |p: &[f64], r: &mut Vec<f64>| {
        r.clear();
        let block = reduced_block(p, n);
        for (x0, x1) in &trans {
            let sim = one_year(x0, &block, &layout, opts);
            for k in 0..n {
                let v = (sim.level(k, 0) - x1[k]) / scale[k];
                if !v.is_finite() {
                    return false;
                }
                r.push(v);
            }
        }
        true
    };
    let out = lm::minimize(residuals, init, 200)?;
    let mut r0 = Vec::new();
    let start_cost = if residuals(init, &mut r0) { r0.iter().map(|v| v * v).sum::<f64>() * 0.5 } else { f64::INFINITY };
    (out.cost <= start_cost).then_some(out.params)
}

/// One-year-ahead log-growth R² of `block` for technology `i` on `d`.
fn predictive_r2(
    series: &ObservedSeries,
    block: &ParameterBlock,
    d: usize,
    present: &[usize],
    i: usize,
    start: i32,
    end: i32,
    opts: &FitOptions,
) -> f64 {
    let n = present.len();
    let reduced = reduced_block(&pack(block, d, present), n);
    let share = series.catalog.share_index() == Some(d);
    let layout = SystemLayout::new(n, 1, share.then_some(0));
    let k = present.iter().position(|&j| j == i).expect("present");
    let mut obs = Vec::new();
    let mut pred = Vec::new();
    for (x0, x1) in transitions(series, d, present, start, end) {
        let sim = one_year(&x0, &reduced, &layout, opts).level(k, 0);
        obs.push((x1[k] / x0[k]).ln());
        pred.push((sim.max(f64::MIN_POSITIVE) / x0[k]).ln());
    }
    let mean = obs.iter().sum::<f64>() / obs.len().max(1) as f64;
    let ss_tot: f64 = obs.iter().map(|v| (v - mean).powi(2)).sum();
    let ss_res: f64 = obs.iter().zip(&pred).map(|(o, p)| (o - p).powi(2)).sum();
    if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res <= 1e-30 {
        1.0
    } else {
        0.0
    }
}

/// Fits every (technology, sub-dimension) over years `start..=start+length`.
pub fn fit_window(
    series: &ObservedSeries,
    start: i32,
    length: u32,
    opts: &FitOptions,
) -> Result<FittedWindow, WindowFailure> {
    let end = start + length as i32;
    let (nt, ns) = (series.roster.len(), series.catalog.len());
    let mut block = ParameterBlock::zeros(nt, ns);
    let mut stats: Vec<Option<RegressionStats>> = vec![None; nt * ns];
    let mut problems = Vec::new();
    for d in 0..ns {
        let present = series.present(d);
        let mut sub_ok = true;
        for &i in &present {
            match linear_fit(series, i, d, &present, start, end) {
                Ok(fit) => {
                    block.set_growth(i, d, fit.a);
                    block.set_decline(i, d, fit.b);
                    for (j, c) in fit.cross {
                        block.set_interaction(i, j, d, c);
                    }
                    stats[i * ns + d] = Some(fit.stats);
                }
                Err(reason) => {
                    sub_ok = false;
                    problems.push(Unfittable { tech: i, sub: d, reason });
                }
            }
        }
        if sub_ok && opts.method == FitMethod::Refined && !present.is_empty() {
            let init = pack(&block, d, &present);
            if let Some(p) = refine_sub(series, d, &present, start, end, &init, opts) {
                unpack_into(&mut block, d, &present, &p);
                for &i in &present {
                    let r2 = predictive_r2(series, &block, d, &present, i, start, end, opts);
                    if let Some(s) = stats[i * ns + d].as_mut() {
                        s.r2 = r2;
                    }
                }
            }
        }
    }
    if problems.is_empty() {
        Ok(FittedWindow { start, end, block, stats })
    } else {
        Err(WindowFailure { start, end, problems })
    }
}

/// Fits every window of `spec` over the series and fills failed windows
/// from the nearest earlier success (or, for leading failures, the first
/// success).
pub fn fit_all(series: &ObservedSeries, spec: &WindowSpec, opts: &FitOptions) -> Result<FitResult, CalibrationError> {
    spec.validate(series.roster.len())?;
    let starts = spec.starts(series.first_year, series.last_year());
    if starts.is_empty() {
        return Err(CalibrationError::InsufficientData {
            span: series.last_year() - series.first_year,
            length: spec.length,
        });
    }
    let fits: Vec<Result<FittedWindow, WindowFailure>> =
        starts.par_iter().map(|&s| fit_window(series, s, spec.length, opts)).collect();

    let Some(first_ok) = fits.iter().find_map(|f| f.as_ref().ok()) else {
        return Err(CalibrationError::NoFittableWindow(fits.into_iter().filter_map(Result::err).collect()));
    };
    let mut last_ok: &FittedWindow = first_ok;
    let mut windows = Vec::with_capacity(fits.len());
    for f in &fits {
        windows.push(match f {
            Ok(w) => {
                last_ok = w;
                WindowEntry {
                    start: w.start,
                    end: w.end,
                    block: w.block.clone(),
                    stats: Some(w.stats.clone()),
                    filled_from: None,
                    failure: None,
                }
            }
            Err(fail) => WindowEntry {
                start: fail.start,
                end: fail.end,
                block: last_ok.block.clone(),
                stats: None,
                filled_from: Some(last_ok.start),
                failure: Some(fail.clone()),
            },
        });
    }
    Ok(FitResult { windows })
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowGoodness {
    pub start: i32,
    pub end: i32,
    pub filled: bool,
    /// Indexed `tech * n_sub + sub`; `None` for filled windows or absent technologies.
    pub r2: Vec<Option<f64>>,
    /// Per sub-dimension; `None` when the window's initial state is incomplete.
    pub rmse: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoodnessOfFit {
    pub windows: Vec<WindowGoodness>,
}

/// Re-simulates each window from its observed initial state with the
/// window's parameters and reports the level RMSE per sub-dimension.
pub fn goodness_of_fit(fit: &FitResult, series: &ObservedSeries, opts: &FitOptions) -> GoodnessOfFit {
    let (nt, ns) = (series.roster.len(), series.catalog.len());
    let spy = opts.steps_per_year();
    let windows = fit
        .windows
        .iter()
        .map(|w| {
            let r2 = (0..nt * ns).map(|k| w.r2(k / ns, k % ns)).collect();
            let rmse = (0..ns)
                .map(|d| {
                    let present = series.present(d);
                    let x0: Option<Vec<f64>> = present.iter().map(|&j| series.get(w.start, j, d)).collect();
                    let x0 = x0?;
                    let n = present.len();
                    let reduced = reduced_block(&pack(&w.block, d, &present), n);
                    let share = series.catalog.share_index() == Some(d);
                    let layout = SystemLayout::new(n, 1, share.then_some(0));
                    let mut state = SystemState::from_levels(0.0, 1, x0);
                    let (mut sq, mut count) = (0.0, 0usize);
                    for y in w.start + 1..=w.end {
                        state = integrate_span(&state, &reduced, &layout, opts.dt, spy, opts.renormalize_shares);
                        for (k, &j) in present.iter().enumerate() {
                            if let Some(obs) = series.get(y, j, d) {
                                sq += (state.level(k, 0) - obs).powi(2);
                                count += 1;
                            }
                        }
                    }
                    (count > 0).then(|| (sq / count as f64).sqrt())
                })
                .collect();
            WindowGoodness { start: w.start, end: w.end, filled: w.is_filled(), r2, rmse }
        })
        .collect();
    GoodnessOfFit { windows }
}
