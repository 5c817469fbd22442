//! Interaction records, the 17 × 9 count matrix and the statistics read off it.
//!
//! All shares are plain `count / total` quotients in `f64`. Formatting to one
//! decimal happens only in [`percent`].

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::DocumentResult;
use crate::taxonomy::{
    self, Axis, Category, Direction, GoalId, PbId, ReportBucket, SdgId, TaxonomyError, PB_COUNT,
    SDG_COUNT,
};

const CELL_COUNT: usize = SDG_COUNT as usize * PB_COUNT as usize;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticsError {
    #[error("duplicate record for {doc_id} {sdg}/{pb}")]
    DuplicateRecord {
        doc_id: String,
        sdg: SdgId,
        pb: PbId,
    },
    #[error("matrix has no records")]
    EmptyMatrix,
    #[error("corpus has no documents")]
    ZeroCorpus,
    #[error("no record carries a direction")]
    NoDirectedRecords,
    #[error("{0} has no records")]
    EmptyPanel(SdgId),
    #[error("global share is zero")]
    ZeroGlobal,
    #[error("record for {doc_id} {sdg}/{pb}: {source}")]
    InvalidRecord {
        doc_id: String,
        sdg: SdgId,
        pb: PbId,
        source: TaxonomyError,
    },
    #[error("matrix layout is invalid: {0}")]
    InvalidMatrix(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub doc_id: String,
    pub sdg: SdgId,
    pub pb: PbId,
    pub category: Category,
    pub bucket: ReportBucket,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
}

/// One record per classified pair of every Complete document.
pub fn flatten(results: &[DocumentResult]) -> Result<Vec<InteractionRecord>, AnalyticsError> {
    let mut records = Vec::new();
    for result in results.iter().filter(|r| r.is_complete()) {
        for pc in &result.pairs {
            let bucket = taxonomy::bucket(pc.category, pc.refined).map_err(|source| {
                AnalyticsError::InvalidRecord {
                    doc_id: result.doc_id.clone(),
                    sdg: pc.sdg,
                    pb: pc.pb,
                    source,
                }
            })?;
            records.push(InteractionRecord {
                doc_id: result.doc_id.clone(),
                sdg: pc.sdg,
                pb: pc.pb,
                category: pc.category,
                bucket,
                direction: pc.direction,
            });
        }
    }
    Ok(records)
}

/// Number of Complete documents, the presence denominator.
pub fn complete_docs(results: &[DocumentResult]) -> u64 {
    results.iter().filter(|r| r.is_complete()).count() as u64
}

/// Bucket and direction counts for one cell, or summed over several.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub ts: u64,
    pub tt: u64,
    pub dp: u64,
    pub dn: u64,
    pub generic_positive: u64,
    pub generic_negative: u64,
    pub neutral: u64,
    pub sdg_to_pb: u64,
    pub pb_to_sdg: u64,
}

impl Counts {
    pub fn bucket(&self, bucket: ReportBucket) -> u64 {
        match bucket {
            ReportBucket::TS => self.ts,
            ReportBucket::TT => self.tt,
            ReportBucket::DP => self.dp,
            ReportBucket::DN => self.dn,
            ReportBucket::GenericPositive => self.generic_positive,
            ReportBucket::GenericNegative => self.generic_negative,
            ReportBucket::NeutralBucket => self.neutral,
        }
    }

    fn bucket_mut(&mut self, bucket: ReportBucket) -> &mut u64 {
        match bucket {
            ReportBucket::TS => &mut self.ts,
            ReportBucket::TT => &mut self.tt,
            ReportBucket::DP => &mut self.dp,
            ReportBucket::DN => &mut self.dn,
            ReportBucket::GenericPositive => &mut self.generic_positive,
            ReportBucket::GenericNegative => &mut self.generic_negative,
            ReportBucket::NeutralBucket => &mut self.neutral,
        }
    }

    pub fn category(&self, category: Category) -> u64 {
        ReportBucket::ALL
            .into_iter()
            .filter(|b| b.category() == category)
            .map(|b| self.bucket(b))
            .sum()
    }

    pub fn total(&self) -> u64 {
        ReportBucket::ALL.into_iter().map(|b| self.bucket(b)).sum()
    }

    pub fn directed(&self) -> u64 {
        self.sdg_to_pb + self.pb_to_sdg
    }

    pub fn add(&mut self, other: &Counts) {
        for b in ReportBucket::ALL {
            *self.bucket_mut(b) += other.bucket(b);
        }
        self.sdg_to_pb += other.sdg_to_pb;
        self.pb_to_sdg += other.pb_to_sdg;
    }

    fn count(&mut self, record: &InteractionRecord) {
        *self.bucket_mut(record.bucket) += 1;
        match record.direction {
            Some(Direction::SdgToPb) => self.sdg_to_pb += 1,
            Some(Direction::PbToSdg) => self.pb_to_sdg += 1,
            None => {}
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub sdg: SdgId,
    pub pb: PbId,
    #[serde(flatten)]
    pub counts: Counts,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionMatrix {
    pub total_docs: u64,
    pub total_records: u64,
    /// Documents with at least one record for SDG n, at index n - 1.
    pub doc_presence_sdg: Vec<u64>,
    /// Documents with at least one record for PB n, at index n - 1.
    pub doc_presence_pb: Vec<u64>,
    /// Row-major by SDG then PB.
    pub cells: Vec<Cell>,
}

fn cell_index(sdg: SdgId, pb: PbId) -> usize {
    sdg.index() * PB_COUNT as usize + pb.index()
}

impl InteractionMatrix {
    pub fn empty(total_docs: u64) -> Self {
        let cells = SdgId::all()
            .flat_map(|sdg| {
                PbId::all().map(move |pb| Cell {
                    sdg,
                    pb,
                    counts: Counts::default(),
                })
            })
            .collect();
        Self {
            total_docs,
            total_records: 0,
            doc_presence_sdg: vec![0; SDG_COUNT as usize],
            doc_presence_pb: vec![0; PB_COUNT as usize],
            cells,
        }
    }

    pub fn cell(&self, sdg: SdgId, pb: PbId) -> &Counts {
        &self.cells[cell_index(sdg, pb)].counts
    }

    pub fn sdg_counts(&self, sdg: SdgId) -> Counts {
        let mut sum = Counts::default();
        PbId::all().for_each(|pb| sum.add(self.cell(sdg, pb)));
        sum
    }

    pub fn pb_counts(&self, pb: PbId) -> Counts {
        let mut sum = Counts::default();
        SdgId::all().for_each(|sdg| sum.add(self.cell(sdg, pb)));
        sum
    }

    pub fn global_counts(&self) -> Counts {
        let mut sum = Counts::default();
        self.cells.iter().for_each(|c| sum.add(&c.counts));
        sum
    }

    pub fn presence(&self, goal: GoalId) -> u64 {
        match goal {
            GoalId::Sdg(id) => self.doc_presence_sdg[id.index()],
            GoalId::Pb(id) => self.doc_presence_pb[id.index()],
        }
    }

    /// Checks shape and the count invariants, e.g. after loading from disk.
    pub fn validate(&self) -> Result<(), AnalyticsError> {
        let bad = |m: &str| Err(AnalyticsError::InvalidMatrix(m.to_string()));
        if self.cells.len() != CELL_COUNT
            || self.doc_presence_sdg.len() != SDG_COUNT as usize
            || self.doc_presence_pb.len() != PB_COUNT as usize
        {
            return bad("wrong dimensions");
        }
        if self
            .cells
            .iter()
            .enumerate()
            .any(|(i, c)| cell_index(c.sdg, c.pb) != i)
        {
            return bad("cells out of order");
        }
        if self.global_counts().total() != self.total_records {
            return bad("total_records differs from the sum of cells");
        }
        let presence = self.doc_presence_sdg.iter().chain(&self.doc_presence_pb);
        if presence.copied().any(|p| p > self.total_docs) {
            return bad("presence exceeds total_docs");
        }
        Ok(())
    }
}

/// Counts records into a fresh matrix. Presence counts distinct documents.
pub fn build_matrix<'a>(
    records: impl IntoIterator<Item = &'a InteractionRecord>,
    total_docs: u64,
) -> Result<InteractionMatrix, AnalyticsError> {
    let mut m = InteractionMatrix::empty(total_docs);
    let mut seen: BTreeSet<(&str, SdgId, PbId)> = BTreeSet::new();
    let mut sdg_docs: BTreeSet<(SdgId, &str)> = BTreeSet::new();
    let mut pb_docs: BTreeSet<(PbId, &str)> = BTreeSet::new();
    for r in records {
        if !seen.insert((&r.doc_id, r.sdg, r.pb)) {
            return Err(AnalyticsError::DuplicateRecord {
                doc_id: r.doc_id.clone(),
                sdg: r.sdg,
                pb: r.pb,
            });
        }
        if r.bucket.category() != r.category {
            return Err(AnalyticsError::InvalidRecord {
                doc_id: r.doc_id.clone(),
                sdg: r.sdg,
                pb: r.pb,
                source: TaxonomyError::IllegalRefinement {
                    category: r.category,
                    refined: None,
                },
            });
        }
        m.cells[cell_index(r.sdg, r.pb)].counts.count(r);
        m.total_records += 1;
        sdg_docs.insert((r.sdg, &r.doc_id));
        pb_docs.insert((r.pb, &r.doc_id));
    }
    for (sdg, _) in sdg_docs {
        m.doc_presence_sdg[sdg.index()] += 1;
    }
    for (pb, _) in pb_docs {
        m.doc_presence_pb[pb.index()] += 1;
    }
    Ok(m)
}

/// Sums two matrices built from document-disjoint record sets.
pub fn merge(
    a: &InteractionMatrix,
    b: &InteractionMatrix,
) -> Result<InteractionMatrix, AnalyticsError> {
    a.validate()?;
    b.validate()?;
    let mut out = a.clone();
    out.total_docs += b.total_docs;
    out.total_records += b.total_records;
    for (x, y) in out.doc_presence_sdg.iter_mut().zip(&b.doc_presence_sdg) {
        *x += y;
    }
    for (x, y) in out.doc_presence_pb.iter_mut().zip(&b.doc_presence_pb) {
        *x += y;
    }
    for (x, y) in out.cells.iter_mut().zip(&b.cells) {
        x.counts.add(&y.counts);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BucketShares {
    pub ts: f64,
    pub tt: f64,
    pub dp: f64,
    pub dn: f64,
    pub generic_positive: f64,
    pub generic_negative: f64,
    pub neutral: f64,
}

impl BucketShares {
    pub fn get(&self, bucket: ReportBucket) -> f64 {
        match bucket {
            ReportBucket::TS => self.ts,
            ReportBucket::TT => self.tt,
            ReportBucket::DP => self.dp,
            ReportBucket::DN => self.dn,
            ReportBucket::GenericPositive => self.generic_positive,
            ReportBucket::GenericNegative => self.generic_negative,
            ReportBucket::NeutralBucket => self.neutral,
        }
    }
}

/// Category and bucket shares over some set of links.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shares {
    pub links: u64,
    pub synergy: f64,
    pub neutral: f64,
    /// Includes DN.
    pub tradeoff: f64,
    pub tradeoff_excluding_dn: f64,
    pub buckets: BucketShares,
    pub ts_of_synergy: Option<f64>,
    pub dp_of_synergy: Option<f64>,
    pub tt_of_tradeoff: Option<f64>,
    pub dn_of_tradeoff: Option<f64>,
    /// PB→SDG among the links that carry a direction.
    pub pb_to_sdg_of_directed: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl Shares {
    /// `None` when `counts` holds no links.
    pub fn from_counts(c: &Counts) -> Option<Shares> {
        let n = c.total();
        if n == 0 {
            return None;
        }
        let share = |k: u64| k as f64 / n as f64;
        let synergies = c.category(Category::Synergy);
        let tradeoffs = c.category(Category::TradeOff);
        Some(Shares {
            links: n,
            synergy: share(synergies),
            neutral: share(c.neutral),
            tradeoff: share(tradeoffs),
            tradeoff_excluding_dn: share(tradeoffs - c.dn),
            buckets: BucketShares {
                ts: share(c.ts),
                tt: share(c.tt),
                dp: share(c.dp),
                dn: share(c.dn),
                generic_positive: share(c.generic_positive),
                generic_negative: share(c.generic_negative),
                neutral: share(c.neutral),
            },
            ts_of_synergy: ratio(c.ts, synergies),
            dp_of_synergy: ratio(c.dp, synergies),
            tt_of_tradeoff: ratio(c.tt, tradeoffs),
            dn_of_tradeoff: ratio(c.dn, tradeoffs),
            pb_to_sdg_of_directed: ratio(c.pb_to_sdg, c.directed()),
        })
    }

    pub fn category(&self, category: Category) -> f64 {
        match category {
            Category::Synergy => self.synergy,
            Category::TradeOff => self.tradeoff,
            Category::Neutral => self.neutral,
        }
    }
}

pub fn cell_proportions(m: &InteractionMatrix, sdg: SdgId, pb: PbId) -> Option<Shares> {
    Shares::from_counts(m.cell(sdg, pb))
}

/// Shares over every link of one SDG (a row) or one PB (a column).
pub fn axis_proportions(m: &InteractionMatrix, goal: GoalId) -> Option<Shares> {
    match goal {
        GoalId::Sdg(id) => Shares::from_counts(&m.sdg_counts(id)),
        GoalId::Pb(id) => Shares::from_counts(&m.pb_counts(id)),
    }
}

pub fn global_proportions(m: &InteractionMatrix) -> Result<Shares, AnalyticsError> {
    Shares::from_counts(&m.global_counts()).ok_or(AnalyticsError::EmptyMatrix)
}

pub fn presence_share(m: &InteractionMatrix, goal: GoalId) -> Result<f64, AnalyticsError> {
    ratio(m.presence(goal), m.total_docs).ok_or(AnalyticsError::ZeroCorpus)
}

pub fn presence_shares(m: &InteractionMatrix, axis: Axis) -> Result<Vec<f64>, AnalyticsError> {
    let goals: Vec<GoalId> = match axis {
        Axis::Sdg => SdgId::all().map(GoalId::Sdg).collect(),
        Axis::Pb => PbId::all().map(GoalId::Pb).collect(),
    };
    goals.into_iter().map(|g| presence_share(m, g)).collect()
}

/// Fraction of directed records driven from the PB side.
pub fn directionality_share<'a>(
    records: impl IntoIterator<Item = &'a InteractionRecord>,
) -> Result<f64, AnalyticsError> {
    let (mut directed, mut pb_side) = (0u64, 0u64);
    for r in records {
        if let Some(d) = r.direction {
            directed += 1;
            pb_side += u64::from(d == Direction::PbToSdg);
        }
    }
    ratio(pb_side, directed).ok_or(AnalyticsError::NoDirectedRecords)
}

pub fn matrix_directionality_share(m: &InteractionMatrix) -> Result<f64, AnalyticsError> {
    let g = m.global_counts();
    ratio(g.pb_to_sdg, g.directed()).ok_or(AnalyticsError::NoDirectedRecords)
}

/// Link counts of an SDG's nine cells divided by the largest of them.
pub fn normalize_bars(
    m: &InteractionMatrix,
    sdg: SdgId,
) -> Result<[f64; PB_COUNT as usize], AnalyticsError> {
    let counts: Vec<u64> = PbId::all().map(|pb| m.cell(sdg, pb).total()).collect();
    let max = counts.iter().copied().max().unwrap_or(0);
    if max == 0 {
        return Err(AnalyticsError::EmptyPanel(sdg));
    }
    let mut bars = [0.0; PB_COUNT as usize];
    for (bar, count) in bars.iter_mut().zip(counts) {
        *bar = count as f64 / max as f64;
    }
    Ok(bars)
}

pub fn ratio_to_global(cell_share: f64, global_share: f64) -> Result<f64, AnalyticsError> {
    if global_share == 0.0 {
        return Err(AnalyticsError::ZeroGlobal);
    }
    Ok(cell_share / global_share)
}

/// `0.7551` → `"75.5%"`.
pub fn percent(share: f64) -> String {
    format!("{:.1}%", share * 100.0)
}
