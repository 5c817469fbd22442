//! Catalogs of goals and boundaries, and the interaction label vocabulary.
//!
//! The catalog (17 SDGs, 9 PBs, with short names and the definitions that are
//! pasted into prompts) ships as `data/catalog.json` and is embedded in the
//! binary. A replacement file with the same shape can be loaded at runtime.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const EMBEDDED_CATALOG: &str = include_str!("../data/catalog.json");

pub const SDG_COUNT: u8 = 17;
pub const PB_COUNT: u8 = 9;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TaxonomyError {
    #[error("SDG id {0} out of range 1..=17")]
    SdgOutOfRange(i64),
    #[error("PB id {0} out of range 1..=9")]
    PbOutOfRange(i64),
    #[error("refinement {refined:?} is not legal for category {category:?}")]
    IllegalRefinement {
        category: Category,
        refined: Option<RefinedLabel>,
    },
    #[error("invalid catalog: {0}")]
    InvalidCatalog(String),
}

/// Sustainable Development Goal number, 1..=17.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "u8")]
pub struct SdgId(u8);

/// Planetary Boundary number, 1..=9.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "u8")]
pub struct PbId(u8);

impl SdgId {
    pub fn new(value: i64) -> Result<Self, TaxonomyError> {
        if (1..=SDG_COUNT as i64).contains(&value) {
            Ok(Self(value as u8))
        } else {
            Err(TaxonomyError::SdgOutOfRange(value))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    /// Zero-based position in a 17-entry table.
    pub fn index(self) -> usize {
        (self.0 - 1) as usize
    }

    pub fn all() -> impl Iterator<Item = SdgId> {
        (1..=SDG_COUNT).map(SdgId)
    }
}

impl PbId {
    pub fn new(value: i64) -> Result<Self, TaxonomyError> {
        if (1..=PB_COUNT as i64).contains(&value) {
            Ok(Self(value as u8))
        } else {
            Err(TaxonomyError::PbOutOfRange(value))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        (self.0 - 1) as usize
    }

    pub fn all() -> impl Iterator<Item = PbId> {
        (1..=PB_COUNT).map(PbId)
    }
}

impl TryFrom<i64> for SdgId {
    type Error = TaxonomyError;
    fn try_from(value: i64) -> Result<Self, Self::Error> {
        SdgId::new(value)
    }
}

impl TryFrom<i64> for PbId {
    type Error = TaxonomyError;
    fn try_from(value: i64) -> Result<Self, Self::Error> {
        PbId::new(value)
    }
}

impl From<SdgId> for u8 {
    fn from(id: SdgId) -> u8 {
        id.0
    }
}

impl From<PbId> for u8 {
    fn from(id: PbId) -> u8 {
        id.0
    }
}

impl fmt::Display for SdgId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SDG{}", self.0)
    }
}

impl fmt::Display for PbId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PB{}", self.0)
    }
}

/// Which side of the grid an operation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Sdg,
    Pb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GoalId {
    Sdg(SdgId),
    Pb(PbId),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GoalDescriptor {
    pub id: GoalId,
    pub short_name: String,
    pub definition: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Synergy,
    TradeOff,
    Neutral,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Synergy, Category::TradeOff, Category::Neutral];

    pub fn label(self) -> &'static str {
        match self {
            Category::Synergy => "synergy",
            Category::TradeOff => "trade-off",
            Category::Neutral => "neutral",
        }
    }
}

/// Reasoner-stage refinement of a synergy or trade-off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefinedLabel {
    Generality,
    MisledByPositivity,
    ActualSynergy,
    ActualTradeOff,
    GenericNegativeAssociation,
    DoubleNegative,
}

impl RefinedLabel {
    pub const ALL: [RefinedLabel; 6] = [
        RefinedLabel::Generality,
        RefinedLabel::MisledByPositivity,
        RefinedLabel::ActualSynergy,
        RefinedLabel::ActualTradeOff,
        RefinedLabel::GenericNegativeAssociation,
        RefinedLabel::DoubleNegative,
    ];

    /// The wording used in prompts and accepted back from the model.
    pub fn display_name(self) -> &'static str {
        match self {
            RefinedLabel::Generality => "Generality",
            RefinedLabel::MisledByPositivity => "Misled by Positivity",
            RefinedLabel::ActualSynergy => "Actual Synergy",
            RefinedLabel::ActualTradeOff => "Actual Trade-off",
            RefinedLabel::GenericNegativeAssociation => "Generic Negative Association",
            RefinedLabel::DoubleNegative => "Double Negative (Co-Degradation)",
        }
    }

    pub fn parent(self) -> Category {
        match self {
            RefinedLabel::Generality
            | RefinedLabel::MisledByPositivity
            | RefinedLabel::ActualSynergy => Category::Synergy,
            _ => Category::TradeOff,
        }
    }
}

/// Reporting bucket used by the matrix and figure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ReportBucket {
    #[serde(rename = "ts")]
    TS,
    #[serde(rename = "tt")]
    TT,
    #[serde(rename = "dp")]
    DP,
    #[serde(rename = "dn")]
    DN,
    #[serde(rename = "generic_positive")]
    GenericPositive,
    #[serde(rename = "generic_negative")]
    GenericNegative,
    #[serde(rename = "neutral")]
    NeutralBucket,
}

impl ReportBucket {
    pub const ALL: [ReportBucket; 7] = [
        ReportBucket::TS,
        ReportBucket::DP,
        ReportBucket::GenericPositive,
        ReportBucket::TT,
        ReportBucket::DN,
        ReportBucket::GenericNegative,
        ReportBucket::NeutralBucket,
    ];

    pub fn category(self) -> Category {
        match self {
            ReportBucket::TS | ReportBucket::DP | ReportBucket::GenericPositive => {
                Category::Synergy
            }
            ReportBucket::TT | ReportBucket::DN | ReportBucket::GenericNegative => {
                Category::TradeOff
            }
            ReportBucket::NeutralBucket => Category::Neutral,
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            ReportBucket::TS => "ts",
            ReportBucket::TT => "tt",
            ReportBucket::DP => "dp",
            ReportBucket::DN => "dn",
            ReportBucket::GenericPositive => "generic_positive",
            ReportBucket::GenericNegative => "generic_negative",
            ReportBucket::NeutralBucket => "neutral",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    SdgToPb,
    PbToSdg,
}

impl Direction {
    pub fn label(self) -> &'static str {
        match self {
            Direction::SdgToPb => "SDG->PB",
            Direction::PbToSdg => "PB->SDG",
        }
    }
}

/// Legal reasoner refinements for a category. Neutral links are never refined.
pub fn refined_labels_for(category: Category) -> BTreeSet<RefinedLabel> {
    RefinedLabel::ALL
        .into_iter()
        .filter(|label| category != Category::Neutral && label.parent() == category)
        .collect()
}

/// Maps a (category, refinement) pair onto its reporting bucket.
///
/// Neutral takes no refinement; synergies and trade-offs take one of their
/// own three labels. An unrefined synergy or trade-off is rejected here: the
/// pipeline only emits records once the reasoner stage has run.
pub fn bucket(
    category: Category,
    refined: Option<RefinedLabel>,
) -> Result<ReportBucket, TaxonomyError> {
    let illegal = || TaxonomyError::IllegalRefinement { category, refined };
    match (category, refined) {
        (Category::Neutral, None) => Ok(ReportBucket::NeutralBucket),
        (Category::Neutral, Some(_)) | (_, None) => Err(illegal()),
        (category, Some(label)) if label.parent() != category => Err(illegal()),
        (_, Some(label)) => Ok(match label {
            RefinedLabel::ActualSynergy => ReportBucket::TS,
            RefinedLabel::MisledByPositivity => ReportBucket::DP,
            RefinedLabel::Generality => ReportBucket::GenericPositive,
            RefinedLabel::ActualTradeOff => ReportBucket::TT,
            RefinedLabel::DoubleNegative => ReportBucket::DN,
            RefinedLabel::GenericNegativeAssociation => ReportBucket::GenericNegative,
        }),
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
struct CatalogEntry {
    id: i64,
    short_name: String,
    definition: String,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
struct CatalogFile {
    version: String,
    sdgs: Vec<CatalogEntry>,
    pbs: Vec<CatalogEntry>,
}

/// Validated goal/boundary catalog. Immutable once built.
#[derive(Debug, Clone)]
pub struct Catalog {
    version: String,
    sdgs: Vec<GoalDescriptor>,
    pbs: Vec<GoalDescriptor>,
}

impl Catalog {
    /// The catalog compiled into the binary.
    pub fn embedded() -> &'static Catalog {
        static CATALOG: OnceLock<Catalog> = OnceLock::new();
        CATALOG.get_or_init(|| {
            Catalog::from_json(EMBEDDED_CATALOG).expect("embedded catalog is valid")
        })
    }

    pub fn from_path(path: &Path) -> Result<Catalog, TaxonomyError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| TaxonomyError::InvalidCatalog(format!("{}: {e}", path.display())))?;
        Catalog::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Catalog, TaxonomyError> {
        let file: CatalogFile =
            serde_json::from_str(text).map_err(|e| TaxonomyError::InvalidCatalog(e.to_string()))?;
        let sdgs = build_entries(&file.sdgs, SDG_COUNT, |v| SdgId::new(v).map(GoalId::Sdg))?;
        let pbs = build_entries(&file.pbs, PB_COUNT, |v| PbId::new(v).map(GoalId::Pb))?;
        if file.version.trim().is_empty() {
            return Err(TaxonomyError::InvalidCatalog("empty version".into()));
        }
        Ok(Catalog {
            version: file.version,
            sdgs,
            pbs,
        })
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn sdg(&self, id: SdgId) -> &GoalDescriptor {
        &self.sdgs[id.index()]
    }

    pub fn pb(&self, id: PbId) -> &GoalDescriptor {
        &self.pbs[id.index()]
    }

    pub fn sdgs(&self) -> &[GoalDescriptor] {
        &self.sdgs
    }

    pub fn pbs(&self) -> &[GoalDescriptor] {
        &self.pbs
    }

    pub fn sdg_descriptor(&self, id: i64) -> Result<&GoalDescriptor, TaxonomyError> {
        Ok(self.sdg(SdgId::new(id)?))
    }

    pub fn pb_descriptor(&self, id: i64) -> Result<&GoalDescriptor, TaxonomyError> {
        Ok(self.pb(PbId::new(id)?))
    }
}

fn build_entries(
    entries: &[CatalogEntry],
    expected: u8,
    make_id: impl Fn(i64) -> Result<GoalId, TaxonomyError>,
) -> Result<Vec<GoalDescriptor>, TaxonomyError> {
    if entries.len() != expected as usize {
        return Err(TaxonomyError::InvalidCatalog(format!(
            "expected {expected} entries, found {}",
            entries.len()
        )));
    }
    let mut sorted: Vec<&CatalogEntry> = entries.iter().collect();
    sorted.sort_by_key(|e| e.id);
    sorted
        .into_iter()
        .enumerate()
        .map(|(i, entry)| {
            if entry.id != i as i64 + 1 {
                return Err(TaxonomyError::InvalidCatalog(format!(
                    "ids must be 1..={expected} without gaps (saw {})",
                    entry.id
                )));
            }
            if entry.short_name.trim().is_empty() || entry.definition.trim().is_empty() {
                return Err(TaxonomyError::InvalidCatalog(format!(
                    "entry {} has an empty name or definition",
                    entry.id
                )));
            }
            Ok(GoalDescriptor {
                id: make_id(entry.id)?,
                short_name: entry.short_name.clone(),
                definition: entry.definition.clone(),
            })
        })
        .collect()
}

/// Looks up an SDG in the embedded catalog.
pub fn sdg_descriptor(id: i64) -> Result<&'static GoalDescriptor, TaxonomyError> {
    Catalog::embedded().sdg_descriptor(id)
}

/// Looks up a PB in the embedded catalog.
pub fn pb_descriptor(id: i64) -> Result<&'static GoalDescriptor, TaxonomyError> {
    Catalog::embedded().pb_descriptor(id)
}
