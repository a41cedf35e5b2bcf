//! Coupled Lotka-Volterra state equations over every (technology,
//! sub-dimension) pair, integrated with fixed-step Euler.
//!
//! For technology `i` on sub-dimension `d`:
//!
//! ```text
//! dX[i,d]/dt = X[i,d] * ( a[i,d] - b[i,d] X[i,d] - sum_{j != i} C[i,j,d] X[j,d] )
//! ```
//!
//! The interaction term is subtracted, so a positive `C[i,j,d]` means `j`
//! harms `i` and a negative one means `j` benefits `i`. Sub-dimensions only
//! interact with the same sub-dimension of other technologies.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("non-finite {what} at technology {tech}, sub-dimension {sub}")]
    NonFinite { what: &'static str, tech: usize, sub: usize },
    #[error("negative initial level {value} at technology {tech}, sub-dimension {sub}")]
    NegativeLevel { tech: usize, sub: usize, value: f64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("level {value:e} at technology {tech}, sub-dimension {sub} exceeded the blow-up bound at step {step}")]
    BlowUp { step: usize, tech: usize, sub: usize, value: f64 },
}

/// Growth, self-decline and interaction rates for one calibration window.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterBlock {
    n_tech: usize,
    n_sub: usize,
    growth: Vec<f64>,
    decline: Vec<f64>,
    interaction: Vec<f64>,
}

impl ParameterBlock {
    pub fn zeros(n_tech: usize, n_sub: usize) -> Self {
        Self {
            n_tech,
            n_sub,
            growth: vec![0.0; n_tech * n_sub],
            decline: vec![0.0; n_tech * n_sub],
            interaction: vec![0.0; n_tech * n_tech * n_sub],
        }
    }

    pub fn n_tech(&self) -> usize {
        self.n_tech
    }

    pub fn n_sub(&self) -> usize {
        self.n_sub
    }

    #[inline]
    fn idx(&self, i: usize, d: usize) -> usize {
        i * self.n_sub + d
    }

    #[inline]
    fn cidx(&self, i: usize, j: usize, d: usize) -> usize {
        (i * self.n_tech + j) * self.n_sub + d
    }

    #[inline]
    pub fn growth(&self, i: usize, d: usize) -> f64 {
        self.growth[self.idx(i, d)]
    }

    #[inline]
    pub fn decline(&self, i: usize, d: usize) -> f64 {
        self.decline[self.idx(i, d)]
    }

    /// Effect of technology `j` on technology `i`'s growth in sub-dimension `d`.
    #[inline]
    pub fn interaction(&self, i: usize, j: usize, d: usize) -> f64 {
        self.interaction[self.cidx(i, j, d)]
    }

    pub fn set_growth(&mut self, i: usize, d: usize, v: f64) {
        let k = self.idx(i, d);
        self.growth[k] = v;
    }

    pub fn set_decline(&mut self, i: usize, d: usize, v: f64) {
        let k = self.idx(i, d);
        self.decline[k] = v;
    }

    /// # Panics
    /// When `i == j`; there are no self-interaction entries.
    pub fn set_interaction(&mut self, i: usize, j: usize, d: usize, v: f64) {
        assert_ne!(i, j, "interaction matrix has no diagonal");
        let k = self.cidx(i, j, d);
        self.interaction[k] = v;
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        for i in 0..self.n_tech {
            for d in 0..self.n_sub {
                if !self.growth(i, d).is_finite() {
                    return Err(DynamicsError::NonFinite { what: "growth rate", tech: i, sub: d });
                }
                if !self.decline(i, d).is_finite() {
                    return Err(DynamicsError::NonFinite { what: "decline rate", tech: i, sub: d });
                }
                for j in (0..self.n_tech).filter(|&j| j != i) {
                    if !self.interaction(i, j, d).is_finite() {
                        return Err(DynamicsError::NonFinite { what: "interaction rate", tech: i, sub: d });
                    }
                }
            }
        }
        Ok(())
    }

    /// Keeps only the listed technologies, in the given order.
    pub fn restrict(&self, techs: &[usize]) -> ParameterBlock {
        let mut out = ParameterBlock::zeros(techs.len(), self.n_sub);
        for (ni, &i) in techs.iter().enumerate() {
            for d in 0..self.n_sub {
                out.set_growth(ni, d, self.growth(i, d));
                out.set_decline(ni, d, self.decline(i, d));
                for (nj, &j) in techs.iter().enumerate() {
                    if ni != nj {
                        out.set_interaction(ni, nj, d, self.interaction(i, j, d));
                    }
                }
            }
        }
        out
    }

    /// Copy with every rate of technology `i` scaled per technology.
    pub fn scaled(&self, modifiers: &Modifiers) -> ParameterBlock {
        let mut out = self.clone();
        for i in 0..self.n_tech {
            let (ga, gb) = (modifiers.growth_scale[i], modifiers.decline_scale[i]);
            for d in 0..self.n_sub {
                let k = self.idx(i, d);
                out.growth[k] *= ga;
                out.decline[k] *= gb;
            }
        }
        out
    }
}

/// Piecewise-constant parameters: each block applies from its start year
/// until the next block's start year. Times before the first start use the
/// first block.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterTimeline {
    segments: Vec<(i32, ParameterBlock)>,
}

impl ParameterTimeline {
    pub fn constant(start: i32, block: ParameterBlock) -> Self {
        Self { segments: vec![(start, block)] }
    }

    pub fn new(mut segments: Vec<(i32, ParameterBlock)>) -> Result<Self, DynamicsError> {
        if segments.is_empty() {
            return Err(DynamicsError::ShapeMismatch("parameter timeline is empty".into()));
        }
        segments.sort_by_key(|(y, _)| *y);
        let (nt, ns) = (segments[0].1.n_tech, segments[0].1.n_sub);
        for w in segments.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(DynamicsError::ShapeMismatch(format!("two parameter blocks start in {}", w[0].0)));
            }
        }
        if segments.iter().any(|(_, b)| b.n_tech != nt || b.n_sub != ns) {
            return Err(DynamicsError::ShapeMismatch("parameter blocks differ in shape".into()));
        }
        Ok(Self { segments })
    }

    pub fn segments(&self) -> &[(i32, ParameterBlock)] {
        &self.segments
    }

    pub fn segments_mut(&mut self) -> &mut [(i32, ParameterBlock)] {
        &mut self.segments
    }

    pub fn first(&self) -> &ParameterBlock {
        &self.segments[0].1
    }

    pub fn block_at(&self, t: f64) -> &ParameterBlock {
        let k = self.segments.partition_point(|(y, _)| (*y as f64) <= t);
        &self.segments[k.saturating_sub(1)].1
    }

    /// `(start, end)` spans of each segment, the last one closed at `horizon_end`.
    pub fn spans(&self, horizon_end: i32) -> Vec<(i32, i32)> {
        self.segments
            .iter()
            .enumerate()
            .map(|(k, (s, _))| {
                let e = self.segments.get(k + 1).map(|n| n.0).unwrap_or(horizon_end.max(*s + 1));
                (*s, e)
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        self.segments.iter().try_for_each(|(_, b)| b.validate())
    }

    pub fn map(&self, mut f: impl FnMut(i32, &ParameterBlock) -> ParameterBlock) -> ParameterTimeline {
        Self { segments: self.segments.iter().map(|(y, b)| (*y, f(*y, b))).collect() }
    }
}

/// Which technologies are simulated and which sub-dimension, if any, holds
/// market shares.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemLayout {
    pub n_tech: usize,
    pub n_sub: usize,
    pub share_index: Option<usize>,
    pub active: Vec<bool>,
}

impl SystemLayout {
    pub fn new(n_tech: usize, n_sub: usize, share_index: Option<usize>) -> Self {
        Self { n_tech, n_sub, share_index, active: vec![true; n_tech] }
    }

    pub fn deactivate(&mut self, tech: usize) {
        self.active[tech] = false;
    }
}

/// Levels of every (technology, sub-dimension) pair at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub t: f64,
    n_sub: usize,
    levels: Vec<f64>,
}

impl SystemState {
    pub fn zeros(t: f64, n_tech: usize, n_sub: usize) -> Self {
        Self { t, n_sub, levels: vec![0.0; n_tech * n_sub] }
    }

    pub fn from_levels(t: f64, n_sub: usize, levels: Vec<f64>) -> Self {
        assert!(n_sub > 0 && levels.len() % n_sub == 0);
        Self { t, n_sub, levels }
    }

    pub fn n_tech(&self) -> usize {
        self.levels.len() / self.n_sub
    }

    pub fn n_sub(&self) -> usize {
        self.n_sub
    }

    #[inline]
    pub fn level(&self, i: usize, d: usize) -> f64 {
        self.levels[i * self.n_sub + d]
    }

    #[inline]
    pub fn set_level(&mut self, i: usize, d: usize, v: f64) {
        self.levels[i * self.n_sub + d] = v;
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// Keeps only the listed technologies, in the given order.
    pub fn restrict(&self, techs: &[usize]) -> SystemState {
        let mut levels = Vec::with_capacity(techs.len() * self.n_sub);
        for &i in techs {
            levels.extend_from_slice(&self.levels[i * self.n_sub..(i + 1) * self.n_sub]);
        }
        SystemState { t: self.t, n_sub: self.n_sub, levels }
    }

    fn renormalize_shares(&mut self, layout: &SystemLayout) {
        let Some(d) = layout.share_index else { return };
        let total: f64 = (0..self.n_tech()).filter(|&i| layout.active[i]).map(|i| self.level(i, d)).sum();
        if total > 0.0 {
            for i in (0..self.n_tech()).filter(|&i| layout.active[i]) {
                let v = self.level(i, d) / total;
                self.set_level(i, d, v);
            }
        }
    }
}

fn check_shapes(state: &SystemState, params: &ParameterBlock, layout: &SystemLayout) -> Result<(), DynamicsError> {
    if state.n_tech() != params.n_tech
        || state.n_sub != params.n_sub
        || layout.n_tech != params.n_tech
        || layout.n_sub != params.n_sub
        || layout.active.len() != layout.n_tech
    {
        return Err(DynamicsError::ShapeMismatch(format!(
            "state {}x{}, parameters {}x{}, layout {}x{}",
            state.n_tech(),
            state.n_sub,
            params.n_tech,
            params.n_sub,
            layout.n_tech,
            layout.n_sub
        )));
    }
    Ok(())
}

fn rates_into(state: &SystemState, params: &ParameterBlock, layout: &SystemLayout, out: &mut [f64]) {
    let (nt, ns) = (params.n_tech, params.n_sub);
    for i in 0..nt {
        for d in 0..ns {
            let k = i * ns + d;
            if !layout.active[i] {
                out[k] = 0.0;
                continue;
            }
            let x = state.levels[k];
            let mut cross = 0.0;
            for j in (0..nt).filter(|&j| j != i && layout.active[j]) {
                cross += params.interaction(i, j, d) * state.levels[j * ns + d];
            }
            out[k] = x * (params.growth(i, d) - params.decline(i, d) * x - cross);
        }
    }
}

/// Instantaneous rates `dX/dt`. Inactive technologies get rate zero.
pub fn derivative(state: &SystemState, params: &ParameterBlock, layout: &SystemLayout) -> Result<Vec<f64>, DynamicsError> {
    check_shapes(state, params, layout)?;
    params.validate()?;
    for i in 0..state.n_tech() {
        for d in 0..state.n_sub {
            if !state.level(i, d).is_finite() {
                return Err(DynamicsError::NonFinite { what: "level", tech: i, sub: d });
            }
        }
    }
    let mut out = vec![0.0; state.levels.len()];
    rates_into(state, params, layout, &mut out);
    Ok(out)
}

fn euler_in_place(
    state: &mut SystemState,
    params: &ParameterBlock,
    layout: &SystemLayout,
    dt: f64,
    renormalize: bool,
    scratch: &mut [f64],
) {
    rates_into(state, params, layout, scratch);
    apply_rates(state, scratch, layout, dt, renormalize);
}

fn apply_rates(state: &mut SystemState, rates: &[f64], layout: &SystemLayout, dt: f64, renormalize: bool) {
    for (x, r) in state.levels.iter_mut().zip(rates) {
        let v = *x + dt * *r;
        *x = if v < 0.0 { 0.0 } else { v };
    }
    if renormalize {
        state.renormalize_shares(layout);
    }
    state.t += dt;
}

/// One Euler step: `x' = x + dt * dX/dt`, negative results clamped to zero,
/// then market shares of active technologies rescaled to unit sum when
/// `renormalize` is set.
pub fn step_euler(
    state: &SystemState,
    params: &ParameterBlock,
    layout: &SystemLayout,
    dt: f64,
    renormalize: bool,
) -> Result<SystemState, DynamicsError> {
    if !(dt > 0.0) {
        return Err(DynamicsError::InvalidConfig(format!("dt must be positive, got {dt}")));
    }
    let rates = derivative(state, params, layout)?;
    let mut next = state.clone();
    apply_rates(&mut next, &rates, layout, dt, renormalize);
    Ok(next)
}

/// Advances `state` by `steps` Euler steps under a fixed block, without
/// hooks or blow-up detection. Used by calibration to roll windows forward.
pub fn integrate_span(
    state: &SystemState,
    params: &ParameterBlock,
    layout: &SystemLayout,
    dt: f64,
    steps: usize,
    renormalize: bool,
) -> SystemState {
    let mut s = state.clone();
    let mut scratch = vec![0.0; s.levels.len()];
    for _ in 0..steps {
        euler_in_place(&mut s, params, layout, dt, renormalize, &mut scratch);
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub t_start: i32,
    pub t_end: i32,
    pub dt: f64,
    pub renormalize_shares: bool,
    pub blow_up_bound: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self { t_start: 1985, t_end: 2070, dt: 0.125, renormalize_shares: true, blow_up_bound: 1e12 }
    }
}

fn integral_ratio(num: f64, den: f64) -> Option<usize> {
    let r = num / den;
    let n = r.round();
    ((r - n).abs() <= 1e-9 * n.max(1.0) && n >= 1.0).then_some(n as usize)
}

impl SimulationConfig {
    /// Every violated constraint, not just the first.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.t_start >= self.t_end {
            out.push(format!("t_start ({}) must be before t_end ({})", self.t_start, self.t_end));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            out.push(format!("dt must be positive and finite, got {}", self.dt));
        } else {
            let span = (self.t_end - self.t_start) as f64;
            if span > 0.0 && integral_ratio(span, self.dt).is_none() {
                out.push(format!(
                    "(t_end - t_start) / dt must be an integer number of steps, got {}",
                    span / self.dt
                ));
            }
            if integral_ratio(1.0, self.dt).is_none() {
                out.push(format!("1 / dt must be an integer so annual samples land on steps, got {}", 1.0 / self.dt));
            }
        }
        if !(self.blow_up_bound > 0.0) {
            out.push(format!("blow_up_bound must be positive, got {}", self.blow_up_bound));
        }
        out
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        match self.problems().into_iter().next() {
            Some(p) => Err(DynamicsError::InvalidConfig(p)),
            None => Ok(()),
        }
    }

    pub fn steps(&self) -> usize {
        integral_ratio((self.t_end - self.t_start) as f64, self.dt).unwrap_or(0)
    }

    pub fn steps_per_year(&self) -> usize {
        integral_ratio(1.0, self.dt).unwrap_or(1)
    }

    pub fn years(&self) -> impl Iterator<Item = i32> {
        self.t_start..=self.t_end
    }
}

/// Per-technology multipliers a runtime hook applies to one step's block.
#[derive(Debug, Clone, PartialEq)]
pub struct Modifiers {
    pub growth_scale: Vec<f64>,
    pub decline_scale: Vec<f64>,
}

impl Modifiers {
    pub fn identity(n_tech: usize) -> Self {
        Self { growth_scale: vec![1.0; n_tech], decline_scale: vec![1.0; n_tech] }
    }
}

/// What a hook can see at the start of a step.
pub struct HookContext<'a> {
    pub step: usize,
    pub t: f64,
    pub t_start: i32,
    pub steps_per_year: usize,
    states: &'a [SystemState],
}

impl HookContext<'_> {
    /// Annual samples reached so far, including the current time when it is
    /// an integer year.
    pub fn annual(&self) -> impl Iterator<Item = (i32, &SystemState)> + '_ {
        self.states
            .iter()
            .step_by(self.steps_per_year)
            .enumerate()
            .map(move |(k, s)| (self.t_start + k as i32, s))
    }

    /// Whether the current step starts exactly on a calendar year.
    pub fn at_year(&self) -> Option<i32> {
        (self.step % self.steps_per_year == 0).then(|| self.t_start + (self.step / self.steps_per_year) as i32)
    }

    pub fn current(&self) -> &SystemState {
        self.states.last().expect("trajectory holds at least the initial state")
    }
}

/// Intervention point consulted before each step.
pub trait RuntimeHook {
    fn modifiers(&mut self, ctx: &HookContext<'_>) -> Option<Modifiers>;

    /// (start, end) years of interventions triggered so far.
    fn interventions(&self) -> Vec<(i32, i32)> {
        Vec::new()
    }
}

/// Hook that never intervenes.
pub struct NoHook;

impl RuntimeHook for NoHook {
    fn modifiers(&mut self, _ctx: &HookContext<'_>) -> Option<Modifiers> {
        None
    }
}

/// States at `t_start, t_start + dt, ..., t_end`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    t_start: i32,
    dt: f64,
    steps_per_year: usize,
    n_tech: usize,
    n_sub: usize,
    states: Vec<SystemState>,
}

impl Trajectory {
    pub fn states(&self) -> &[SystemState] {
        &self.states
    }

    pub fn n_tech(&self) -> usize {
        self.n_tech
    }

    pub fn n_sub(&self) -> usize {
        self.n_sub
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn last(&self) -> &SystemState {
        self.states.last().expect("non-empty")
    }

    /// One state per calendar year, taken at the exact integer-year step.
    pub fn annual(&self) -> Vec<(i32, &SystemState)> {
        self.states
            .iter()
            .step_by(self.steps_per_year)
            .enumerate()
            .map(|(k, s)| (self.t_start + k as i32, s))
            .collect()
    }

    pub fn at_year(&self, year: i32) -> Option<&SystemState> {
        let k = usize::try_from(year - self.t_start).ok()? * self.steps_per_year;
        self.states.get(k)
    }

    /// States whose time lies in `[start, end]`.
    pub fn window(&self, start: i32, end: i32) -> impl Iterator<Item = &SystemState> {
        let (s, e) = (start as f64 - 1e-9, end as f64 + 1e-9);
        self.states.iter().filter(move |st| st.t >= s && st.t <= e)
    }

    /// Keeps only the listed technologies.
    pub fn restrict(&self, techs: &[usize]) -> Trajectory {
        Trajectory {
            n_tech: techs.len(),
            states: self.states.iter().map(|s| s.restrict(techs)).collect(),
            ..*self
        }
    }
}

/// Integrates from `init` over the configured horizon. The hook is consulted
/// before every step; any modifiers it returns scale that step's block.
pub fn simulate(
    config: &SimulationConfig,
    layout: &SystemLayout,
    timeline: &ParameterTimeline,
    init: &SystemState,
    hook: &mut dyn RuntimeHook,
) -> Result<Trajectory, DynamicsError> {
    config.validate()?;
    timeline.validate()?;
    check_shapes(init, timeline.first(), layout)?;
    if (init.t - config.t_start as f64).abs() > 1e-9 {
        return Err(DynamicsError::InvalidConfig(format!(
            "initial state at t = {} but the run starts at {}",
            init.t, config.t_start
        )));
    }
    let mut first = init.clone();
    for i in 0..first.n_tech() {
        for d in 0..first.n_sub {
            let v = first.level(i, d);
            if !v.is_finite() {
                return Err(DynamicsError::NonFinite { what: "level", tech: i, sub: d });
            }
            if v < 0.0 {
                return Err(DynamicsError::NegativeLevel { tech: i, sub: d, value: v });
            }
            if !layout.active[i] {
                first.set_level(i, d, 0.0);
            }
        }
    }
    if config.renormalize_shares {
        first.renormalize_shares(layout);
    }

    let steps = config.steps();
    let spy = config.steps_per_year();
    let mut states = Vec::with_capacity(steps + 1);
    states.push(first);
    let mut scratch = vec![0.0; init.levels.len()];
    for k in 0..steps {
        let t = config.t_start as f64 + k as f64 * config.dt;
        let ctx = HookContext { step: k, t, t_start: config.t_start, steps_per_year: spy, states: &states };
        let mods = hook.modifiers(&ctx);
        let base = timeline.block_at(t);
        let scaled;
        let block = match &mods {
            Some(m) => {
                scaled = base.scaled(m);
                &scaled
            }
            None => base,
        };
        let mut next = states[k].clone();
        euler_in_place(&mut next, block, layout, config.dt, config.renormalize_shares, &mut scratch);
        next.t = config.t_start as f64 + (k + 1) as f64 * config.dt;
        for (c, &v) in next.levels.iter().enumerate() {
            if !(v <= config.blow_up_bound) {
                return Err(DynamicsError::BlowUp { step: k + 1, tech: c / init.n_sub, sub: c % init.n_sub, value: v });
            }
        }
        states.push(next);
    }
    Ok(Trajectory {
        t_start: config.t_start,
        dt: config.dt,
        steps_per_year: spy,
        n_tech: init.n_tech(),
        n_sub: init.n_sub,
        states,
    })
}
