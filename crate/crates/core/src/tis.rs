//! Innovation-system dimension catalog, side grouping, behaviour labels
//! and the sales series derived from market shares.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{ParameterBlock, Trajectory};
use crate::modes::Sign;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CatalogError {
    #[error("unknown sub-dimension `{name}`{}", suggestion_suffix(.suggestion))]
    UnknownSubDimension { name: String, suggestion: Option<String> },
    #[error("sub-dimension `{0}` listed more than once")]
    Duplicate(String),
    #[error("sub-dimension `{0}` has a fixed side and cannot be reassigned")]
    FixedSide(String),
    #[error("side override for `{0}` which is not in the catalog")]
    OverrideNotInCatalog(String),
    #[error("catalog must list at least one sub-dimension")]
    Empty,
    #[error("the {0} side has no sub-dimensions")]
    EmptySide(Side),
    #[error("market size missing for year {0}")]
    MissingMarketYear(i32),
    #[error("market size must be positive, got {value} for year {year}")]
    NonPositiveMarket { year: i32, value: f64 },
    #[error("trajectory has no market share sub-dimension")]
    NoShareDimension,
}

fn suggestion_suffix(s: &Option<String>) -> String {
    match s {
        Some(s) => format!(" (did you mean `{s}`?)"),
        None => String::new(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    KnowledgeDevelopment,
    KnowledgeDiffusion,
    Entrepreneurship,
    GuidanceOfSearch,
    MarketFormation,
    ResourceMobilisation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Technology,
    Market,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Technology, Side::Market];

    pub fn key(self) -> &'static str {
        match self {
            Side::Technology => "technology",
            Side::Market => "market",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

/// One measured indicator of an innovation system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SubDimension {
    Publications,
    Patents,
    PublicationCitations,
    PatentCitations,
    PublicationCollaborations,
    PatentCollaborations,
    PublicationAssignees,
    PatentAssignees,
    VehicleModels,
    LawsRegulations,
    SearchPopularity,
    Incentives,
    MarketShare,
    PublicationAuthors,
    PatentApplicants,
    FinancialCapital,
}

impl SubDimension {
    pub const ALL: [SubDimension; 16] = [
        SubDimension::Publications,
        SubDimension::Patents,
        SubDimension::PublicationCitations,
        SubDimension::PatentCitations,
        SubDimension::PublicationCollaborations,
        SubDimension::PatentCollaborations,
        SubDimension::PublicationAssignees,
        SubDimension::PatentAssignees,
        SubDimension::VehicleModels,
        SubDimension::LawsRegulations,
        SubDimension::SearchPopularity,
        SubDimension::Incentives,
        SubDimension::MarketShare,
        SubDimension::PublicationAuthors,
        SubDimension::PatentApplicants,
        SubDimension::FinancialCapital,
    ];

    pub fn name(self) -> &'static str {
        use SubDimension::*;
        match self {
            Publications => "publications",
            Patents => "patents",
            PublicationCitations => "publication_citations",
            PatentCitations => "patent_citations",
            PublicationCollaborations => "publication_collaborations",
            PatentCollaborations => "patent_collaborations",
            PublicationAssignees => "publication_assignees",
            PatentAssignees => "patent_assignees",
            VehicleModels => "vehicle_models",
            LawsRegulations => "laws_regulations",
            SearchPopularity => "search_popularity",
            Incentives => "incentives",
            MarketShare => "market_share",
            PublicationAuthors => "publication_authors",
            PatentApplicants => "patent_applicants",
            FinancialCapital => "financial_capital",
        }
    }

    pub fn unit(self) -> &'static str {
        use SubDimension::*;
        match self {
            Publications => "publications",
            Patents => "patents",
            PublicationCitations | PatentCitations => "forward citations",
            PublicationCollaborations | PatentCollaborations => "bilateral links",
            PublicationAssignees | PatentAssignees => "assignees",
            VehicleModels => "vehicle models",
            LawsRegulations => "laws and regulations",
            SearchPopularity => "search popularity index",
            Incentives => "incentives",
            MarketShare => "fraction of sales",
            PublicationAuthors => "authors",
            PatentApplicants => "applicants",
            FinancialCapital => "currency units",
        }
    }

    pub fn dimension(self) -> Dimension {
        use SubDimension::*;
        match self {
            Publications | Patents => Dimension::KnowledgeDevelopment,
            PublicationCitations | PatentCitations | PublicationCollaborations | PatentCollaborations => {
                Dimension::KnowledgeDiffusion
            }
            PublicationAssignees | PatentAssignees | VehicleModels => Dimension::Entrepreneurship,
            LawsRegulations | SearchPopularity => Dimension::GuidanceOfSearch,
            Incentives | MarketShare => Dimension::MarketFormation,
            PublicationAuthors | PatentApplicants | FinancialCapital => Dimension::ResourceMobilisation,
        }
    }

    pub fn default_side(self) -> Side {
        use SubDimension::*;
        match self {
            Publications | Patents | PublicationCitations | PatentCitations | PublicationCollaborations
            | PatentCollaborations | PublicationAuthors | PatentApplicants => Side::Technology,
            _ => Side::Market,
        }
    }

    /// Collaborations and laws are not pinned to a side.
    pub fn side_is_assignable(self) -> bool {
        matches!(
            self,
            SubDimension::PublicationCollaborations
                | SubDimension::PatentCollaborations
                | SubDimension::LawsRegulations
        )
    }

    pub fn from_name(name: &str) -> Result<Self, CatalogError> {
        if let Some(s) = Self::ALL.iter().find(|s| s.name() == name) {
            return Ok(*s);
        }
        let suggestion = Self::ALL
            .iter()
            .map(|s| (strsim::damerau_levenshtein(name, s.name()), s.name()))
            .min_by_key(|(d, _)| *d)
            .filter(|(d, _)| *d <= 3 || name.len() > 6 && *d <= name.len() / 2)
            .map(|(_, n)| n.to_string());
        Err(CatalogError::UnknownSubDimension { name: name.to_string(), suggestion })
    }
}

impl fmt::Display for SubDimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Side assignment, parallel to the catalog's sub-dimension list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SideGrouping {
    sides: Vec<Side>,
}

impl SideGrouping {
    pub fn side_of(&self, d: usize) -> Side {
        self.sides[d]
    }

    pub fn members(&self, side: Side) -> Vec<usize> {
        (0..self.sides.len()).filter(|&d| self.sides[d] == side).collect()
    }
}

/// Ordered list of simulated sub-dimensions with their side grouping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DimensionCatalog {
    subs: Vec<SubDimension>,
    grouping: SideGrouping,
}

impl DimensionCatalog {
    /// All sixteen sub-dimensions with default sides.
    pub fn standard() -> Self {
        Self::new(SubDimension::ALL.to_vec(), &[]).expect("standard catalog is valid")
    }

    pub fn new(subs: Vec<SubDimension>, overrides: &[(SubDimension, Side)]) -> Result<Self, CatalogError> {
        if subs.is_empty() {
            return Err(CatalogError::Empty);
        }
        for (k, s) in subs.iter().enumerate() {
            if subs[..k].contains(s) {
                return Err(CatalogError::Duplicate(s.name().into()));
            }
        }
        let mut sides: Vec<Side> = subs.iter().map(|s| s.default_side()).collect();
        for &(sub, side) in overrides {
            let d = subs
                .iter()
                .position(|s| *s == sub)
                .ok_or_else(|| CatalogError::OverrideNotInCatalog(sub.name().into()))?;
            if !sub.side_is_assignable() && side != sub.default_side() {
                return Err(CatalogError::FixedSide(sub.name().into()));
            }
            sides[d] = side;
        }
        Ok(Self { subs, grouping: SideGrouping { sides } })
    }

    pub fn len(&self) -> usize {
        self.subs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subs.is_empty()
    }

    pub fn get(&self, d: usize) -> SubDimension {
        self.subs[d]
    }

    pub fn subs(&self) -> &[SubDimension] {
        &self.subs
    }

    pub fn index_of(&self, sub: SubDimension) -> Option<usize> {
        self.subs.iter().position(|s| *s == sub)
    }

    pub fn lookup(&self, name: &str) -> Result<usize, CatalogError> {
        let sub = SubDimension::from_name(name)?;
        self.index_of(sub).ok_or_else(|| CatalogError::UnknownSubDimension {
            name: name.to_string(),
            suggestion: None,
        })
    }

    pub fn share_index(&self) -> Option<usize> {
        self.index_of(SubDimension::MarketShare)
    }

    pub fn grouping(&self) -> &SideGrouping {
        &self.grouping
    }

    pub fn side_members(&self, side: Side) -> Vec<usize> {
        self.grouping.members(side)
    }
}

/// Sign of a growth-rate sum, with the magnitude kept when it falls inside the neutral band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Creativity {
    Creative,
    Uncreative,
    Neutral { magnitude: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Orientation {
    Exploitative,
    Explorative,
    Neutral { magnitude: f64 },
}

impl Creativity {
    pub fn label(&self) -> &'static str {
        match self {
            Creativity::Creative => "creative",
            Creativity::Uncreative => "uncreative",
            Creativity::Neutral { .. } => "neutral",
        }
    }
}

impl Orientation {
    pub fn label(&self) -> &'static str {
        match self {
            Orientation::Exploitative => "exploitative",
            Orientation::Explorative => "explorative",
            Orientation::Neutral { .. } => "neutral",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BehaviorLabel {
    pub creativity: Creativity,
    pub orientation: Orientation,
    pub window: (i32, i32),
}

/// Sums of growth and self-decline rates over one side for one technology.
pub fn side_sum(
    params: &ParameterBlock,
    catalog: &DimensionCatalog,
    side: Side,
    tech: usize,
) -> Result<(f64, f64), CatalogError> {
    let members = catalog.side_members(side);
    if members.is_empty() {
        return Err(CatalogError::EmptySide(side));
    }
    Ok(members.iter().fold((0.0, 0.0), |(sa, sb), &d| (sa + params.growth(tech, d), sb + params.decline(tech, d))))
}

/// Growth sign gives creativity, decline sign gives orientation.
pub fn classify_behavior(sum_a: f64, sum_b: f64, epsilon: f64, window: (i32, i32)) -> BehaviorLabel {
    let creativity = match Sign::of(sum_a, epsilon) {
        Sign::Positive => Creativity::Creative,
        Sign::Negative => Creativity::Uncreative,
        Sign::Zero => Creativity::Neutral { magnitude: sum_a.abs() },
    };
    let orientation = match Sign::of(sum_b, epsilon) {
        Sign::Positive => Orientation::Exploitative,
        Sign::Negative => Orientation::Explorative,
        Sign::Zero => Orientation::Neutral { magnitude: sum_b.abs() },
    };
    BehaviorLabel { creativity, orientation, window }
}

/// Exogenous total vehicle sales per calendar year.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketSizeSeries {
    start_year: i32,
    values: Vec<f64>,
}

impl MarketSizeSeries {
    pub fn new(start_year: i32, values: Vec<f64>) -> Result<Self, CatalogError> {
        for (k, &v) in values.iter().enumerate() {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CatalogError::NonPositiveMarket { year: start_year + k as i32, value: v });
            }
        }
        Ok(Self { start_year, values })
    }

    /// Compounds `base` forward with the per-year growth rates, each scaled by
    /// `growth_multiplier`.
    pub fn from_growth(
        start_year: i32,
        end_year: i32,
        base: f64,
        growth: impl Fn(i32) -> f64,
        growth_multiplier: f64,
    ) -> Result<Self, CatalogError> {
        let mut values = Vec::with_capacity((end_year - start_year + 1).max(0) as usize);
        let mut level = base;
        for y in start_year..=end_year {
            values.push(level);
            level *= 1.0 + growth(y) * growth_multiplier;
        }
        Self::new(start_year, values)
    }

    pub fn get(&self, year: i32) -> Option<f64> {
        let k = year.checked_sub(self.start_year)?;
        usize::try_from(k).ok().and_then(|k| self.values.get(k).copied())
    }

    pub fn start_year(&self) -> i32 {
        self.start_year
    }

    pub fn end_year(&self) -> i32 {
        self.start_year + self.values.len() as i32 - 1
    }
}

/// Annual values per technology: `values[tech][k]` belongs to `years[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TechSeries {
    pub years: Vec<i32>,
    pub values: Vec<Vec<f64>>,
}

impl TechSeries {
    pub fn zeros(years: Vec<i32>, n_tech: usize) -> Self {
        let n = years.len();
        Self { years, values: vec![vec![0.0; n]; n_tech] }
    }

    pub fn n_tech(&self) -> usize {
        self.values.len()
    }
}

/// Annual sales as share times total market size.
pub fn sales_from_share(
    trajectory: &Trajectory,
    share_index: usize,
    market: &MarketSizeSeries,
) -> Result<TechSeries, CatalogError> {
    if share_index >= trajectory.n_sub() {
        return Err(CatalogError::NoShareDimension);
    }
    let annual = trajectory.annual();
    let years: Vec<i32> = annual.iter().map(|(y, _)| *y).collect();
    let mut out = TechSeries::zeros(years, trajectory.n_tech());
    for (k, (year, state)) in annual.iter().enumerate() {
        let total = market.get(*year).ok_or(CatalogError::MissingMarketYear(*year))?;
        for i in 0..trajectory.n_tech() {
            out.values[i][k] = state.level(i, share_index) * total;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_partitions_sixteen_sub_dimensions() {
        let cat = DimensionCatalog::standard();
        assert_eq!(cat.len(), 16);
        let tech = cat.side_members(Side::Technology);
        let market = cat.side_members(Side::Market);
        assert_eq!(tech.len() + market.len(), 16);
        assert!(tech.iter().all(|d| !market.contains(d)));
        assert_eq!(cat.share_index(), Some(12));
        let laws = cat.index_of(SubDimension::LawsRegulations).unwrap();
        assert_eq!(cat.grouping().side_of(laws), Side::Market);
        let collab = cat.index_of(SubDimension::PatentCollaborations).unwrap();
        assert_eq!(cat.grouping().side_of(collab), Side::Technology);
    }

    #[test]
    fn dimensions_group_as_documented() {
        let count = |dim| SubDimension::ALL.iter().filter(|s| s.dimension() == dim).count();
        assert_eq!(count(Dimension::KnowledgeDevelopment), 2);
        assert_eq!(count(Dimension::KnowledgeDiffusion), 4);
        assert_eq!(count(Dimension::Entrepreneurship), 3);
        assert_eq!(count(Dimension::GuidanceOfSearch), 2);
        assert_eq!(count(Dimension::MarketFormation), 2);
        assert_eq!(count(Dimension::ResourceMobilisation), 3);
    }

    #[test]
    fn overrides_only_for_assignable_sub_dimensions() {
        let cat = DimensionCatalog::new(
            SubDimension::ALL.to_vec(),
            &[(SubDimension::LawsRegulations, Side::Technology)],
        )
        .unwrap();
        let laws = cat.index_of(SubDimension::LawsRegulations).unwrap();
        assert_eq!(cat.grouping().side_of(laws), Side::Technology);
        let err = DimensionCatalog::new(SubDimension::ALL.to_vec(), &[(SubDimension::Patents, Side::Market)]);
        assert_eq!(err, Err(CatalogError::FixedSide("patents".into())));
        let dup = DimensionCatalog::new(vec![SubDimension::Patents, SubDimension::Patents], &[]);
        assert!(matches!(dup, Err(CatalogError::Duplicate(_))));
    }

    #[test]
    fn misspelled_name_gets_suggestion() {
        match SubDimension::from_name("patnets") {
            Err(CatalogError::UnknownSubDimension { suggestion, .. }) => {
                assert_eq!(suggestion.as_deref(), Some("patents"))
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(SubDimension::from_name("market_share").is_ok());
    }

    fn block_with_growth(cat: &DimensionCatalog, growth: &[(usize, f64, f64)]) -> ParameterBlock {
        let mut p = ParameterBlock::zeros(1, cat.len());
        for &(d, a, b) in growth {
            p.set_growth(0, d, a);
            p.set_decline(0, d, b);
        }
        p
    }

    #[test]
    fn side_sum_hand_values() {
        let cat = DimensionCatalog::standard();
        let tech = cat.side_members(Side::Technology);
        assert_eq!(tech.len(), 8);
        let zero = block_with_growth(&cat, &[]);
        assert_eq!(side_sum(&zero, &cat, Side::Technology, 0).unwrap(), (0.0, 0.0));

        let p = block_with_growth(&cat, &[(tech[0], 0.2, 0.0), (tech[1], 0.3, 0.0), (tech[2], -0.1, 0.0)]);
        let (sa, _) = side_sum(&p, &cat, Side::Technology, 0).unwrap();
        assert!((sa - 0.4).abs() < 1e-15);

        let single = DimensionCatalog::new(vec![SubDimension::Patents], &[]).unwrap();
        let p = block_with_growth(&single, &[(0, 0.7, -0.05)]);
        assert_eq!(side_sum(&p, &single, Side::Technology, 0).unwrap(), (0.7, -0.05));
        assert_eq!(side_sum(&p, &single, Side::Market, 0), Err(CatalogError::EmptySide(Side::Market)));
    }

    #[test]
    fn behaviour_labels() {
        let l = classify_behavior(0.4, -0.2, 1e-6, (1985, 1990));
        assert_eq!(l.creativity, Creativity::Creative);
        assert_eq!(l.orientation, Orientation::Explorative);
        let l = classify_behavior(0.4, 0.2, 1e-6, (1985, 1990));
        assert_eq!(l.orientation, Orientation::Exploitative);
        let l = classify_behavior(0.0, 0.0, 1e-6, (1985, 1990));
        assert_eq!(l.creativity, Creativity::Neutral { magnitude: 0.0 });
        assert_eq!(l.orientation, Orientation::Neutral { magnitude: 0.0 });
        let l = classify_behavior(-3e-7, -0.5, 1e-6, (1985, 1990));
        assert_eq!(l.creativity, Creativity::Neutral { magnitude: 3e-7 });
        assert_eq!(classify_behavior(-0.1, 0.0, 1e-6, (0, 1)).creativity, Creativity::Uncreative);
    }

    #[test]
    fn market_series_lookup() {
        let m = MarketSizeSeries::from_growth(2000, 2002, 100.0, |_| 0.1, 1.0).unwrap();
        assert_eq!(m.get(2000), Some(100.0));
        assert!((m.get(2002).unwrap() - 121.0).abs() < 1e-9);
        assert_eq!(m.get(1999), None);
        assert_eq!(m.get(2003), None);
        assert!(MarketSizeSeries::new(1990, vec![1.0, 0.0]).is_err());
    }
}
