//! Fleet stocks from sales and well-to-wheel GHG emissions from stocks.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::technology::{Roster, Technology};
use crate::tis::TechSeries;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmissionsError {
    #[error("emission factor for {tech} in {year} is {value}; factors must be finite and non-negative")]
    NegativeFactor { tech: Technology, year: i32, value: f64 },
    #[error("no emission factor for {0}")]
    MissingTechnology(Technology),
    #[error("emission factor series for {tech} does not cover {year}")]
    Uncovered { tech: Technology, year: i32 },
    #[error("vehicle lifetime must be at least one year")]
    ZeroLifetime,
    #[error("stock series has {got} technologies, roster has {want}")]
    ShapeMismatch { got: usize, want: usize },
}

/// Emission intensity over time, in tCO2e per vehicle-year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorSchedule {
    Constant(f64),
    /// Linear between two anchor years, flat outside them.
    Linear { from_year: i32, from: f64, to_year: i32, to: f64 },
    /// One value per year from `start_year`.
    Annual { start_year: i32, values: Vec<f64> },
}

impl FactorSchedule {
    pub fn value(&self, year: i32) -> Option<f64> {
        match self {
            FactorSchedule::Constant(v) => Some(*v),
            FactorSchedule::Linear { from_year, from, to_year, to } => {
                if year <= *from_year || to_year <= from_year {
                    Some(if year < *to_year { *from } else { *to })
                } else if year >= *to_year {
                    Some(*to)
                } else {
                    let w = (year - from_year) as f64 / (to_year - from_year) as f64;
                    Some(from + w * (to - from))
                }
            }
            FactorSchedule::Annual { start_year, values } => {
                usize::try_from(year - start_year).ok().and_then(|k| values.get(k).copied())
            }
        }
    }

    fn anchors(&self) -> Vec<(i32, f64)> {
        match self {
            FactorSchedule::Constant(v) => vec![(0, *v)],
            FactorSchedule::Linear { from_year, from, to_year, to } => vec![(*from_year, *from), (*to_year, *to)],
            FactorSchedule::Annual { start_year, values } => {
                values.iter().enumerate().map(|(k, v)| (start_year + k as i32, *v)).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionFactors {
    per_tech: Vec<(Technology, FactorSchedule)>,
}

impl EmissionFactors {
    /// Rejects negative or non-finite values anywhere in a schedule.
    pub fn new(per_tech: Vec<(Technology, FactorSchedule)>) -> Result<Self, EmissionsError> {
        for (tech, sched) in &per_tech {
            for (year, value) in sched.anchors() {
                if !(value >= 0.0 && value.is_finite()) {
                    return Err(EmissionsError::NegativeFactor { tech: *tech, year, value });
                }
            }
        }
        Ok(Self { per_tech })
    }

    pub fn schedule(&self, tech: Technology) -> Option<&FactorSchedule> {
        self.per_tech.iter().find(|(t, _)| *t == tech).map(|(_, s)| s)
    }

    pub fn entries(&self) -> &[(Technology, FactorSchedule)] {
        &self.per_tech
    }

    pub fn factor(&self, tech: Technology, year: i32) -> Result<f64, EmissionsError> {
        self.schedule(tech)
            .ok_or(EmissionsError::MissingTechnology(tech))?
            .value(year)
            .ok_or(EmissionsError::Uncovered { tech, year })
    }
}

/// Fleet in service at `y` is the sum of sales over `y-L+1 ..= y`.
pub fn stock_from_sales(sales: &TechSeries, lifetime: u32) -> Result<TechSeries, EmissionsError> {
    if lifetime == 0 {
        return Err(EmissionsError::ZeroLifetime);
    }
    let l = lifetime as usize;
    let mut out = TechSeries::zeros(sales.years.clone(), sales.n_tech());
    for (row, src) in out.values.iter_mut().zip(&sales.values) {
        for k in 0..src.len() {
            let lo = (k + 1).saturating_sub(l);
            row[k] = src[lo..=k].iter().sum::<f64>().max(0.0);
        }
    }
    Ok(out)
}

/// Annual and cumulative emissions in Mt per technology and in total.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionReport {
    pub years: Vec<i32>,
    pub technologies: Vec<Technology>,
    pub annual: Vec<Vec<f64>>,
    pub cumulative: Vec<Vec<f64>>,
    pub total_annual: Vec<f64>,
    pub total_cumulative: Vec<f64>,
}

impl EmissionReport {
    pub fn cumulative_total_at(&self, year: i32) -> Option<f64> {
        self.years.iter().position(|&y| y == year).map(|k| self.total_cumulative[k])
    }

    pub fn final_cumulative_total(&self) -> f64 {
        self.total_cumulative.last().copied().unwrap_or(0.0)
    }
}

pub fn emissions(
    stocks: &TechSeries,
    roster: &Roster,
    factors: &EmissionFactors,
) -> Result<EmissionReport, EmissionsError> {
    if stocks.n_tech() != roster.len() {
        return Err(EmissionsError::ShapeMismatch { got: stocks.n_tech(), want: roster.len() });
    }
    let n = stocks.years.len();
    let mut annual = vec![vec![0.0; n]; roster.len()];
    let mut cumulative = vec![vec![0.0; n]; roster.len()];
    for (i, id) in roster.iter().enumerate() {
        let mut acc = 0.0;
        for (k, &year) in stocks.years.iter().enumerate() {
            let f = factors.factor(id.role, year)?;
            if !(f >= 0.0) {
                return Err(EmissionsError::NegativeFactor { tech: id.role, year, value: f });
            }
            annual[i][k] = stocks.values[i][k] * f / 1e6;
            acc += annual[i][k];
            cumulative[i][k] = acc;
        }
    }
    let total_annual: Vec<f64> = (0..n).map(|k| annual.iter().map(|r| r[k]).sum()).collect();
    let mut acc = 0.0;
    let total_cumulative = total_annual
        .iter()
        .map(|v| {
            acc += v;
            acc
        })
        .collect();
    Ok(EmissionReport {
        years: stocks.years.clone(),
        technologies: roster.iter().map(|t| t.role).collect(),
        annual,
        cumulative,
        total_annual,
        total_cumulative,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn series(values: Vec<Vec<f64>>) -> TechSeries {
        let n = values[0].len();
        TechSeries { years: (2000..2000 + n as i32).collect(), values }
    }

    fn constant_factors(v: f64) -> EmissionFactors {
        EmissionFactors::new(Technology::ALL.iter().map(|&t| (t, FactorSchedule::Constant(v))).collect()).unwrap()
    }

    #[test]
    fn constant_sales_reach_steady_state() {
        let st = stock_from_sales(&series(vec![vec![1e6; 40]]), 15).unwrap();
        for k in 14..40 {
            assert_eq!(st.values[0][k], 1.5e7);
        }
        assert_eq!(st.values[0][0], 1e6);
        assert_eq!(st.values[0][13], 1.4e7);
    }

    #[test]
    fn impulse_lives_exactly_lifetime() {
        let mut s = vec![0.0; 40];
        s[5] = 1e6;
        let st = stock_from_sales(&series(vec![s]), 15).unwrap();
        for k in 0..40 {
            let want = if (5..20).contains(&k) { 1e6 } else { 0.0 };
            assert_eq!(st.values[0][k], want, "k = {k}");
        }
        assert!(stock_from_sales(&series(vec![vec![0.0; 3]]), 0).is_err());
    }

    #[test]
    fn stock_times_factor_in_megatonnes() {
        let roster = Roster::standard();
        let stocks = series(vec![vec![1e7; 3], vec![0.0; 3], vec![0.0; 3]]);
        let rep = emissions(&stocks, &roster, &constant_factors(4.6)).unwrap();
        assert!((rep.annual[0][0] - 46.0).abs() < 1e-12);
        assert!((rep.total_cumulative[2] - 138.0).abs() < 1e-12);
        let zero = emissions(&stocks, &roster, &constant_factors(0.0)).unwrap();
        assert!(zero.total_cumulative.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn negative_factor_rejected() {
        let err = EmissionFactors::new(vec![(Technology::Incumbent, FactorSchedule::Constant(-1.0))]);
        assert!(matches!(err, Err(EmissionsError::NegativeFactor { .. })));
        let err = EmissionFactors::new(vec![(
            Technology::Emerging,
            FactorSchedule::Linear { from_year: 2020, from: 1.0, to_year: 2050, to: -0.1 },
        )]);
        assert!(err.is_err());
    }

    #[test]
    fn linear_schedule_interpolates_and_clamps() {
        let s = FactorSchedule::Linear { from_year: 2020, from: 2.0, to_year: 2030, to: 1.0 };
        assert_eq!(s.value(2000), Some(2.0));
        assert_eq!(s.value(2025), Some(1.5));
        assert_eq!(s.value(2070), Some(1.0));
        let a = FactorSchedule::Annual { start_year: 2000, values: vec![1.0, 2.0] };
        assert_eq!(a.value(2001), Some(2.0));
        assert_eq!(a.value(2002), None);
    }

    #[test]
    fn missing_technology_is_an_error() {
        let f = EmissionFactors::new(vec![(Technology::Incumbent, FactorSchedule::Constant(1.0))]).unwrap();
        let stocks = series(vec![vec![1.0; 2], vec![1.0; 2], vec![1.0; 2]]);
        assert!(matches!(
            emissions(&stocks, &Roster::standard(), &f),
            Err(EmissionsError::MissingTechnology(Technology::Hybrid))
        ));
    }

    proptest! {
        #[test]
        fn cumulative_monotone_and_dominance(
            base in prop::collection::vec(0.0f64..5e6, 3 * 30),
            bump in prop::collection::vec(0.0f64..1e6, 30),
            factor in 0.0f64..10.0,
        ) {
            let roster = Roster::standard();
            let rows: Vec<Vec<f64>> = base.chunks(30).map(|c| c.to_vec()).collect();
            let sales = series(rows.clone());
            let stocks = stock_from_sales(&sales, 15).unwrap();
            let f = constant_factors(factor);
            let rep = emissions(&stocks, &roster, &f).unwrap();
            for w in rep.total_cumulative.windows(2) {
                prop_assert!(w[1] >= w[0]);
            }
            for row in &rep.cumulative {
                for w in row.windows(2) {
                    prop_assert!(w[1] >= w[0]);
                }
            }
            let mut more = rows;
            for (v, b) in more[0].iter_mut().zip(&bump) {
                *v += b;
            }
            let bigger = stock_from_sales(&series(more), 15).unwrap();
            let rep2 = emissions(&bigger, &roster, &f).unwrap();
            for k in 0..30 {
                prop_assert!(bigger.values[0][k] >= stocks.values[0][k]);
                prop_assert!(rep2.total_annual[k] >= rep.total_annual[k]);
            }
            prop_assert_eq!(emissions(&stocks, &roster, &f).unwrap(), rep);
        }
    }
}
