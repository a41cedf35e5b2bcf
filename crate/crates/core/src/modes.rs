//! Relationship modes between pairs of technologies from the signs of their
//! interaction coefficients.
//!
//! Coefficients follow the subtraction convention of the state equations:
//! `c_ij > 0` means `j` harms `i`, `c_ij < 0` means `j` benefits `i`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{ParameterBlock, Trajectory};
use crate::technology::{Roster, Technology};
use crate::tis::{DimensionCatalog, Side, SubDimension};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModeError {
    #[error("the {0} side has no sub-dimensions")]
    EmptySide(Side),
    #[error("window {0}..{1} contains no trajectory states")]
    EmptyWindow(i32, i32),
}

/// Ternary sign after thresholding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    Positive,
    Zero,
    Negative,
}

impl Sign {
    pub const ALL: [Sign; 3] = [Sign::Positive, Sign::Zero, Sign::Negative];

    pub fn of(v: f64, epsilon: f64) -> Sign {
        if v > epsilon {
            Sign::Positive
        } else if v < -epsilon {
            Sign::Negative
        } else {
            Sign::Zero
        }
    }
}

/// Band below which an estimated coefficient counts as zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsilonPolicy {
    pub absolute: f64,
    /// Fraction of the window's median absolute coefficient.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relative: Option<f64>,
}

impl Default for EpsilonPolicy {
    fn default() -> Self {
        Self { absolute: 1e-6, relative: None }
    }
}

impl EpsilonPolicy {
    pub fn threshold(&self, coefficients: impl IntoIterator<Item = f64>) -> f64 {
        let Some(rel) = self.relative else { return self.absolute };
        let mut mags: Vec<f64> = coefficients.into_iter().map(f64::abs).collect();
        if mags.is_empty() {
            return self.absolute;
        }
        mags.sort_by(f64::total_cmp);
        let n = mags.len();
        let median = if n % 2 == 1 { mags[n / 2] } else { 0.5 * (mags[n / 2 - 1] + mags[n / 2]) };
        self.absolute.max(rel * median)
    }

    /// Threshold for every off-diagonal interaction entry of one block.
    pub fn threshold_for(&self, block: &ParameterBlock) -> f64 {
        let (nt, ns) = (block.n_tech(), block.n_sub());
        let coeffs = (0..nt)
            .flat_map(move |i| (0..nt).filter(move |&j| j != i).flat_map(move |j| (0..ns).map(move |d| (i, j, d))))
            .map(|(i, j, d)| block.interaction(i, j, d));
        self.threshold(coeffs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Competition,
    Symbiosis,
    Parasitism,
    Commensalism,
    Amensalism,
    Neutralism,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Competition => "competition",
            Mode::Symbiosis => "symbiosis",
            Mode::Parasitism => "parasitism",
            Mode::Commensalism => "commensalism",
            Mode::Amensalism => "amensalism",
            Mode::Neutralism => "neutralism",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A mode with its orientation: who gains and who loses, where that applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModeLabel {
    pub mode: Mode,
    pub beneficiary: Option<Technology>,
    pub victim: Option<Technology>,
}

impl ModeLabel {
    fn plain(mode: Mode) -> Self {
        Self { mode, beneficiary: None, victim: None }
    }
}

/// `c_ij` is the coefficient in `i`'s equation for `j`'s effect; `c_ji` the reverse.
pub fn classify_pair(c_ij: f64, c_ji: f64, i: Technology, j: Technology, epsilon: f64) -> ModeLabel {
    use Sign::*;
    let gains = |b| ModeLabel { mode: Mode::Parasitism, beneficiary: Some(b), victim: None };
    match (Sign::of(c_ij, epsilon), Sign::of(c_ji, epsilon)) {
        (Positive, Positive) => ModeLabel::plain(Mode::Competition),
        (Negative, Negative) => ModeLabel::plain(Mode::Symbiosis),
        (Zero, Zero) => ModeLabel::plain(Mode::Neutralism),
        (Negative, Positive) => ModeLabel { victim: Some(j), ..gains(i) },
        (Positive, Negative) => ModeLabel { victim: Some(i), ..gains(j) },
        (Negative, Zero) => ModeLabel { mode: Mode::Commensalism, ..gains(i) },
        (Zero, Negative) => ModeLabel { mode: Mode::Commensalism, ..gains(j) },
        (Positive, Zero) => ModeLabel { mode: Mode::Amensalism, beneficiary: None, victim: Some(i) },
        (Zero, Positive) => ModeLabel { mode: Mode::Amensalism, beneficiary: None, victim: Some(j) },
    }
}

/// How side-level modes are derived from sub-dimension data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMethod {
    /// Time-averaged cross-term contributions to growth, summed over the side.
    #[default]
    Externality,
    /// Interaction coefficients summed over the side.
    CoefficientSum,
}

/// Net externalities `(E_i<-j, E_j<-i)` over one side and window. Positive
/// `E_i<-j` means `j` net-benefits `i`.
pub fn aggregate_side_externality(
    trajectory: &Trajectory,
    params: &ParameterBlock,
    catalog: &DimensionCatalog,
    side: Side,
    pair: (usize, usize),
    window: (i32, i32),
) -> Result<(f64, f64), ModeError> {
    let members = catalog.side_members(side);
    if members.is_empty() {
        return Err(ModeError::EmptySide(side));
    }
    let (i, j) = pair;
    let mut sums = (0.0, 0.0);
    let mut n = 0usize;
    for s in trajectory.window(window.0, window.1) {
        n += 1;
        for &d in &members {
            let cross = s.level(i, d) * s.level(j, d);
            sums.0 += -params.interaction(i, j, d) * cross;
            sums.1 += -params.interaction(j, i, d) * cross;
        }
    }
    if n == 0 {
        return Err(ModeError::EmptyWindow(window.0, window.1));
    }
    Ok((sums.0 / n as f64, sums.1 / n as f64))
}

/// Mode from a pair of net externalities.
pub fn externality_mode(e_ij: f64, e_ji: f64, i: Technology, j: Technology, epsilon: f64) -> ModeLabel {
    classify_pair(-e_ij, -e_ji, i, j, epsilon)
}

/// Side-level coefficient sums `(sum_d C[i,j,d], sum_d C[j,i,d])`.
pub fn aggregate_side_coefficients(
    params: &ParameterBlock,
    catalog: &DimensionCatalog,
    side: Side,
    pair: (usize, usize),
) -> Result<(f64, f64), ModeError> {
    let members = catalog.side_members(side);
    if members.is_empty() {
        return Err(ModeError::EmptySide(side));
    }
    let (i, j) = pair;
    Ok(members
        .iter()
        .fold((0.0, 0.0), |(a, b), &d| (a + params.interaction(i, j, d), b + params.interaction(j, i, d))))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scope {
    Sub(SubDimension),
    Side(Side),
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scope::Sub(s) => f.write_str(s.name()),
            Scope::Side(s) => write!(f, "side:{}", s.key()),
        }
    }
}

/// Coefficients for one window of the mode timeline. `block` is `None`
/// where no fit exists; such windows become explicit gaps.
#[derive(Debug, Clone, Copy)]
pub struct WindowCoefficients<'a> {
    pub start: i32,
    pub end: i32,
    pub block: Option<&'a ParameterBlock>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeRecord {
    pub window_start: i32,
    pub window_end: i32,
    pub pair: (usize, usize),
    pub scope: Scope,
    /// `None` marks a gap.
    pub label: Option<ModeLabel>,
}

/// Where side-level modes come from, if they are wanted.
#[derive(Clone, Copy)]
pub enum SideModes<'a> {
    Skip,
    CoefficientSum,
    Externality(&'a Trajectory),
}

impl<'a> SideModes<'a> {
    pub fn from_method(method: AggregationMethod, trajectory: Option<&'a Trajectory>) -> Self {
        match (method, trajectory) {
            (AggregationMethod::Externality, Some(t)) => SideModes::Externality(t),
            _ => SideModes::CoefficientSum,
        }
    }
}

/// Every unordered pair `(i, j)` with `i < j` among the listed technologies.
pub fn pairs_of(techs: &[usize]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (k, &i) in techs.iter().enumerate() {
        for &j in &techs[k + 1..] {
            out.push((i, j));
        }
    }
    out
}

/// One label per window, pair and scope. Windows without coefficients
/// yield gap records; nothing is interpolated.
pub fn mode_series(
    windows: &[WindowCoefficients<'_>],
    roster: &Roster,
    catalog: &DimensionCatalog,
    pairs: &[(usize, usize)],
    policy: &EpsilonPolicy,
    sides: SideModes<'_>,
) -> Result<Vec<ModeRecord>, ModeError> {
    let mut scopes: Vec<Scope> = catalog.subs().iter().map(|&s| Scope::Sub(s)).collect();
    if !matches!(sides, SideModes::Skip) {
        scopes.extend(Side::BOTH.iter().filter(|s| !catalog.side_members(**s).is_empty()).map(|&s| Scope::Side(s)));
    }
    let mut out = Vec::with_capacity(windows.len() * pairs.len() * scopes.len());
    for w in windows {
        let eps = w.block.map(|b| policy.threshold_for(b)).unwrap_or(policy.absolute);
        for &(i, j) in pairs {
            let (ri, rj) = (roster.get(i).role, roster.get(j).role);
            for &scope in &scopes {
                let label = match w.block {
                    None => None,
                    Some(b) => Some(match scope {
                        Scope::Sub(s) => {
                            let d = catalog.index_of(s).expect("scope built from catalog");
                            classify_pair(b.interaction(i, j, d), b.interaction(j, i, d), ri, rj, eps)
                        }
                        Scope::Side(side) => match sides {
                            SideModes::Externality(traj) => {
                                let (e1, e2) = aggregate_side_externality(traj, b, catalog, side, (i, j), (w.start, w.end))?;
                                externality_mode(e1, e2, ri, rj, policy.absolute)
                            }
                            _ => {
                                let (c1, c2) = aggregate_side_coefficients(b, catalog, side, (i, j))?;
                                classify_pair(c1, c2, ri, rj, eps)
                            }
                        },
                    }),
                };
                out.push(ModeRecord { window_start: w.start, window_end: w.end, pair: (i, j), scope, label });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{simulate, NoHook, ParameterTimeline, SimulationConfig, SystemLayout, SystemState};
    use proptest::prelude::*;

    const I: Technology = Technology::Emerging;
    const J: Technology = Technology::Hybrid;

    #[test]
    fn table_examples() {
        assert_eq!(classify_pair(0.3, 0.2, I, J, 1e-6).mode, Mode::Competition);
        let p = classify_pair(-0.3, 0.2, I, J, 1e-6);
        assert_eq!(p, ModeLabel { mode: Mode::Parasitism, beneficiary: Some(I), victim: Some(J) });
        assert_eq!(classify_pair(1e-9, -1e-9, I, J, 1e-6).mode, Mode::Neutralism);
    }

    /// Independent table: sign pair to (mode, beneficiary, victim) written out
    /// cell by cell.
    fn table_oracle(si: Sign, sj: Sign) -> (Mode, Option<Technology>, Option<Technology>) {
        use Sign::*;
        match (si, sj) {
            (Positive, Positive) => (Mode::Competition, None, None),
            (Negative, Negative) => (Mode::Symbiosis, None, None),
            (Zero, Zero) => (Mode::Neutralism, None, None),
            (Negative, Positive) => (Mode::Parasitism, Some(I), Some(J)),
            (Positive, Negative) => (Mode::Parasitism, Some(J), Some(I)),
            (Zero, Negative) => (Mode::Commensalism, Some(J), None),
            (Negative, Zero) => (Mode::Commensalism, Some(I), None),
            (Zero, Positive) => (Mode::Amensalism, None, Some(J)),
            (Positive, Zero) => (Mode::Amensalism, None, Some(I)),
        }
    }

    fn value(s: Sign) -> f64 {
        match s {
            Sign::Positive => 0.25,
            Sign::Zero => 0.0,
            Sign::Negative => -0.25,
        }
    }

    #[test]
    fn exhaustive_over_nine_sign_pairs() {
        let mut seen = std::collections::HashSet::new();
        for si in Sign::ALL {
            for sj in Sign::ALL {
                let l = classify_pair(value(si), value(sj), I, J, 1e-6);
                assert_eq!((l.mode, l.beneficiary, l.victim), table_oracle(si, sj), "{si:?} {sj:?}");
                seen.insert(l.mode);
            }
        }
        assert_eq!(seen.len(), 6);
    }

    #[test]
    fn orientation_invariants_per_mode() {
        for si in Sign::ALL {
            for sj in Sign::ALL {
                let l = classify_pair(value(si), value(sj), I, J, 1e-6);
                match l.mode {
                    Mode::Parasitism => assert!(l.beneficiary.is_some() && l.victim.is_some()),
                    Mode::Commensalism => assert!(l.beneficiary.is_some() && l.victim.is_none()),
                    Mode::Amensalism => assert!(l.beneficiary.is_none() && l.victim.is_some()),
                    _ => assert!(l.beneficiary.is_none() && l.victim.is_none()),
                }
            }
        }
    }

    proptest! {
        #[test]
        fn swapping_arguments_swaps_roles(x in -1.0f64..1.0, y in -1.0f64..1.0) {
            let a = classify_pair(x, y, I, J, 1e-6);
            let b = classify_pair(y, x, J, I, 1e-6);
            prop_assert_eq!(a, b);
        }

        #[test]
        fn positive_rescaling_keeps_mode(x in -1.0f64..1.0, y in -1.0f64..1.0, k in 0.01f64..100.0) {
            let eps = 1e-6;
            prop_assume!(x.abs() > eps && y.abs() > eps);
            prop_assume!(k * x.abs() > eps && k * y.abs() > eps);
            prop_assert_eq!(classify_pair(x, y, I, J, eps), classify_pair(k * x, k * y, I, J, eps));
        }
    }

    #[test]
    fn relative_threshold_uses_window_median() {
        let p = EpsilonPolicy { absolute: 1e-6, relative: Some(0.1) };
        assert_eq!(p.threshold([1.0, -2.0, 3.0]), 0.2);
        assert_eq!(p.threshold([1.0, -2.0, 3.0, 4.0]), 0.25);
        assert_eq!(EpsilonPolicy::default().threshold([5.0]), 1e-6);
    }

    fn constant_pair_trajectory(level: f64) -> (Trajectory, DimensionCatalog) {
        let cat = DimensionCatalog::new(vec![SubDimension::Patents], &[]).unwrap();
        let p = ParameterBlock::zeros(2, 1);
        let init = SystemState::from_levels(2000.0, 1, vec![level, level]);
        let cfg = SimulationConfig { t_start: 2000, t_end: 2005, ..Default::default() };
        let tr = simulate(&cfg, &SystemLayout::new(2, 1, None), &ParameterTimeline::constant(2000, p), &init, &mut NoHook)
            .unwrap();
        (tr, cat)
    }

    #[test]
    fn externality_hand_example() {
        let (tr, cat) = constant_pair_trajectory(1.0);
        let zero = ParameterBlock::zeros(2, 1);
        let e = aggregate_side_externality(&tr, &zero, &cat, Side::Technology, (0, 1), (2000, 2005)).unwrap();
        assert_eq!(e, (0.0, 0.0));
        assert_eq!(externality_mode(e.0, e.1, I, J, 1e-6).mode, Mode::Neutralism);

        let mut p = ParameterBlock::zeros(2, 1);
        p.set_interaction(0, 1, 0, -0.2);
        p.set_interaction(1, 0, 0, 0.1);
        let (e1, e2) = aggregate_side_externality(&tr, &p, &cat, Side::Technology, (0, 1), (2000, 2005)).unwrap();
        assert!((e1 - 0.2).abs() < 1e-15 && (e2 + 0.1).abs() < 1e-15);
        let l = externality_mode(e1, e2, I, J, 1e-6);
        assert_eq!(l, ModeLabel { mode: Mode::Parasitism, beneficiary: Some(I), victim: Some(J) });

        let (tr2, _) = constant_pair_trajectory(2.0);
        let (f1, f2) = aggregate_side_externality(&tr2, &p, &cat, Side::Technology, (0, 1), (2000, 2005)).unwrap();
        assert!((f1 - 4.0 * e1).abs() < 1e-14 && (f2 - 4.0 * e2).abs() < 1e-14);
        assert_eq!(externality_mode(f1, f2, I, J, 1e-6), l);

        assert_eq!(
            aggregate_side_externality(&tr, &p, &cat, Side::Market, (0, 1), (2000, 2005)),
            Err(ModeError::EmptySide(Side::Market))
        );
    }

    #[test]
    fn series_marks_gaps_and_does_not_smooth() {
        let roster = Roster::from_roles(&[I, J]).unwrap();
        let cat = DimensionCatalog::new(vec![SubDimension::Patents], &[]).unwrap();
        let mut sym = ParameterBlock::zeros(2, 1);
        sym.set_interaction(0, 1, 0, -0.1);
        sym.set_interaction(1, 0, 0, -0.1);
        let mut comp = sym.clone();
        comp.set_interaction(0, 1, 0, 0.1);
        comp.set_interaction(1, 0, 0, 0.1);
        let windows = [
            WindowCoefficients { start: 2000, end: 2001, block: Some(&sym) },
            WindowCoefficients { start: 2001, end: 2002, block: Some(&comp) },
            WindowCoefficients { start: 2002, end: 2003, block: None },
            WindowCoefficients { start: 2003, end: 2004, block: Some(&sym) },
        ];
        let recs =
            mode_series(&windows, &roster, &cat, &[(0, 1)], &EpsilonPolicy::default(), SideModes::Skip).unwrap();
        let modes: Vec<Option<Mode>> = recs.iter().map(|r| r.label.map(|l| l.mode)).collect();
        assert_eq!(modes, vec![Some(Mode::Symbiosis), Some(Mode::Competition), None, Some(Mode::Symbiosis)]);
    }

    #[test]
    fn series_matches_enumerated_sign_oracle() {
        // Fixture: nine windows, one per sign cell, walked in a fixed order.
        let roster = Roster::from_roles(&[I, J]).unwrap();
        let cat = DimensionCatalog::new(vec![SubDimension::Patents], &[]).unwrap();
        let cells: Vec<(Sign, Sign)> = Sign::ALL.iter().flat_map(|&a| Sign::ALL.iter().map(move |&b| (a, b))).collect();
        let blocks: Vec<ParameterBlock> = cells
            .iter()
            .map(|&(a, b)| {
                let mut p = ParameterBlock::zeros(2, 1);
                p.set_interaction(0, 1, 0, value(a) * 1.7);
                p.set_interaction(1, 0, 0, value(b) * 0.3);
                p
            })
            .collect();
        let windows: Vec<WindowCoefficients> = blocks
            .iter()
            .enumerate()
            .map(|(k, b)| WindowCoefficients { start: 2000 + k as i32, end: 2001 + k as i32, block: Some(b) })
            .collect();
        let recs = mode_series(&windows, &roster, &cat, &[(0, 1)], &EpsilonPolicy::default(), SideModes::CoefficientSum)
            .unwrap();
        let subs: Vec<&ModeRecord> = recs.iter().filter(|r| matches!(r.scope, Scope::Sub(_))).collect();
        assert_eq!(subs.len(), 9);
        for (r, &(a, b)) in subs.iter().zip(&cells) {
            let l = r.label.unwrap();
            assert_eq!((l.mode, l.beneficiary, l.victim), table_oracle(a, b));
        }
        assert_eq!(recs.iter().filter(|r| r.scope == Scope::Side(Side::Technology)).count(), 9);
    }
}
