//! Technology identities and the ordered roster a model is built over.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Role a technology plays in the transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Technology {
    Incumbent,
    Hybrid,
    Emerging,
}

impl Technology {
    pub const ALL: [Technology; 3] = [Technology::Incumbent, Technology::Hybrid, Technology::Emerging];

    pub fn default_name(self) -> &'static str {
        match self {
            Technology::Incumbent => "ICEV",
            Technology::Hybrid => "HEV",
            Technology::Emerging => "BEV",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Technology::Incumbent => "incumbent",
            Technology::Hybrid => "hybrid",
            Technology::Emerging => "emerging",
        }
    }
}

impl fmt::Display for Technology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

/// A technology together with the label used in reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TechnologyId {
    pub role: Technology,
    pub display_name: String,
}

impl TechnologyId {
    pub fn new(role: Technology) -> Self {
        Self { role, display_name: role.default_name().to_string() }
    }
}

/// Ordered set of technologies present in a model. Index `i` in every
/// per-technology array refers to `roster.get(i)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roster {
    techs: Vec<TechnologyId>,
}

impl Roster {
    /// The shipped incumbent / hybrid / emerging roster.
    pub fn standard() -> Self {
        Self::from_roles(&Technology::ALL).expect("standard roster is valid")
    }

    pub fn from_roles(roles: &[Technology]) -> Option<Self> {
        Self::new(roles.iter().copied().map(TechnologyId::new).collect())
    }

    /// Returns `None` when a role appears twice or the list is empty.
    pub fn new(techs: Vec<TechnologyId>) -> Option<Self> {
        if techs.is_empty() {
            return None;
        }
        for (k, t) in techs.iter().enumerate() {
            if techs[..k].iter().any(|o| o.role == t.role || o.display_name == t.display_name) {
                return None;
            }
        }
        Some(Self { techs })
    }

    pub fn len(&self) -> usize {
        self.techs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.techs.is_empty()
    }

    pub fn get(&self, i: usize) -> &TechnologyId {
        &self.techs[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &TechnologyId> {
        self.techs.iter()
    }

    pub fn index_of(&self, role: Technology) -> Option<usize> {
        self.techs.iter().position(|t| t.role == role)
    }

    pub fn name(&self, i: usize) -> &str {
        &self.techs[i].display_name
    }

    /// Resolves a display name or role key, case-insensitively.
    pub fn lookup(&self, name: &str) -> Option<usize> {
        self.techs.iter().position(|t| {
            t.display_name.eq_ignore_ascii_case(name) || t.role.key().eq_ignore_ascii_case(name)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_roster_order_and_names() {
        let r = Roster::standard();
        assert_eq!(r.len(), 3);
        assert_eq!(r.name(0), "ICEV");
        assert_eq!(r.name(2), "BEV");
        assert_eq!(r.index_of(Technology::Hybrid), Some(1));
        assert_eq!(r.lookup("bev"), Some(2));
        assert_eq!(r.lookup("incumbent"), Some(0));
        assert_eq!(r.lookup("FCEV"), None);
    }

    #[test]
    fn duplicate_roles_rejected() {
        assert!(Roster::from_roles(&[Technology::Hybrid, Technology::Hybrid]).is_none());
        assert!(Roster::from_roles(&[]).is_none());
    }
}
