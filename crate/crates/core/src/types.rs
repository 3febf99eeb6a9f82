//! Domain records shared by the metric, corpus and generation code.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Ai,
    Biology,
    NanoscalePhysics,
    HighEnergyPhysics,
    Other,
}

impl Domain {
    pub const ALL: [Domain; 5] = [
        Domain::Ai,
        Domain::Biology,
        Domain::NanoscalePhysics,
        Domain::HighEnergyPhysics,
        Domain::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Ai => "ai",
            Domain::Biology => "biology",
            Domain::NanoscalePhysics => "nanoscale_physics",
            Domain::HighEnergyPhysics => "high_energy_physics",
            Domain::Other => "other",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Domain {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Domain::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| format!("unknown domain `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Valid,
    Test,
    Unsplit,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Train, Split::Valid, Split::Test, Split::Unsplit];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
            Split::Unsplit => "unsplit",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Split::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| format!("unknown split `{s}`"))
    }
}

/// A group of related technical terms generated and split together.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermCluster {
    pub cluster_id: u64,
    pub domain: Domain,
    pub terms: Vec<String>,
}

/// One English/Korean sentence pair.
///
/// `terms` is the multiset of technical-term occurrences in `source`,
/// duplicates included. `target` is the reference translation carrying the
/// parenthetical annotations. Fields not known to this type are kept in
/// `extra` and written back unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentencePair {
    pub id: String,
    pub cluster_id: u64,
    pub domain: Domain,
    pub split: Split,
    pub source: String,
    pub target: String,
    pub terms: Vec<String>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl SentencePair {
    /// |T_Eng|.
    pub fn term_count(&self) -> usize {
        self.terms.len()
    }
}
