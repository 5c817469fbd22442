//! The five-stage per-document classification pipeline.
//!
//! Stage 1 assigns SDGs, stage 2 assigns PBs, stage 3 classifies every
//! SDG × PB pair, stage 4 gives non-neutral pairs a direction and stage 5
//! refines synergies and trade-offs. Stages 3–5 send pairs in batches of at
//! most `batch_cap`. State is checkpointed after each stage.

pub mod checkpoint;
pub mod parse;
pub mod process;
pub mod prompts;
pub mod templates;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm_gateway::Stage;
use crate::taxonomy::{Category, Direction, PbId, RefinedLabel, SdgId};

pub use checkpoint::{Checkpoint, CheckpointStore, ResultStore};
pub use parse::ParseError;
pub use process::{DocOutcome, Pipeline, PipelineSettings};
pub use prompts::PromptBuilder;
pub use templates::TemplateSet;

/// Pairs per stage-3/4/5 request.
pub const DEFAULT_BATCH_CAP: usize = 20;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("prompt of {tokens} estimated tokens exceeds the context budget of {budget}")]
    OverContext { tokens: u64, budget: u64 },
    #[error("template error: {0}")]
    Template(String),
    #[error("checkpoint template version {found} does not match current {expected}")]
    TemplateVersionMismatch { expected: String, found: String },
    #[error("checkpoint for {doc_id} would move back from stage {from} to {to}")]
    NonMonotoneCheckpoint { doc_id: String, from: u8, to: u8 },
    #[error("store {path}: {message}")]
    Store { path: String, message: String },
    #[error("backend: {0}")]
    Backend(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Pair {
    pub sdg: SdgId,
    pub pb: PbId,
}

impl Pair {
    pub fn new(sdg: SdgId, pb: PbId) -> Self {
        Self { sdg, pb }
    }
}

impl fmt::Display for Pair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}|{}", self.sdg, self.pb)
    }
}

/// Stage-3 verdict for one pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub pair: Pair,
    pub category: Category,
    pub justification: String,
    pub evidence_quote: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairClassification {
    pub sdg: SdgId,
    pub pb: PbId,
    pub category: Category,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refined: Option<RefinedLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
    pub justification: String,
    pub evidence_quote: String,
}

impl PairClassification {
    pub fn pair(&self) -> Pair {
        Pair::new(self.sdg, self.pb)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum DocumentStatus {
    Complete,
    Failed {
        stage: Stage,
        reason: String,
        detail: String,
    },
    Skipped {
        reason: String,
        detail: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentResult {
    pub doc_id: String,
    pub sdgs: BTreeSet<SdgId>,
    pub pbs: BTreeSet<PbId>,
    pub pairs: Vec<PairClassification>,
    pub status: DocumentStatus,
    pub template_version: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl DocumentResult {
    pub fn is_complete(&self) -> bool {
        self.status == DocumentStatus::Complete
    }
}

/// Full SDG × PB product, ascending by (sdg, pb).
pub fn pair_candidates(sdgs: &BTreeSet<SdgId>, pbs: &BTreeSet<PbId>) -> Vec<Pair> {
    sdgs.iter()
        .flat_map(|&sdg| pbs.iter().map(move |&pb| Pair::new(sdg, pb)))
        .collect()
}

/// Splits `pairs` into consecutive batches of `cap` (the last may be shorter).
pub fn chunk_pairs<T: Clone>(pairs: &[T], cap: usize) -> Vec<Vec<T>> {
    assert!(cap >= 1, "batch cap must be at least 1");
    pairs.chunks(cap).map(<[T]>::to_vec).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sdgs(ids: &[i64]) -> BTreeSet<SdgId> {
        ids.iter().map(|&i| SdgId::new(i).unwrap()).collect()
    }

    fn pbs(ids: &[i64]) -> BTreeSet<PbId> {
        ids.iter().map(|&i| PbId::new(i).unwrap()).collect()
    }

    fn p(s: i64, b: i64) -> Pair {
        Pair::new(SdgId::new(s).unwrap(), PbId::new(b).unwrap())
    }

    #[test]
    fn candidates_are_sorted_products() {
        assert_eq!(pair_candidates(&sdgs(&[13]), &pbs(&[6])), vec![p(13, 6)]);
        assert_eq!(
            pair_candidates(&sdgs(&[6, 2]), &pbs(&[6])),
            vec![p(2, 6), p(6, 6)]
        );
        assert!(pair_candidates(&sdgs(&[]), &pbs(&[1, 2, 3, 4, 5, 6, 7, 8, 9])).is_empty());
    }

    #[test]
    fn chunk_sizes() {
        let sizes = |n: usize, cap: usize| -> Vec<usize> {
            chunk_pairs(&vec![0u8; n], cap)
                .iter()
                .map(Vec::len)
                .collect()
        };
        assert_eq!(sizes(45, 20), [20, 20, 5]);
        assert_eq!(sizes(20, 20), [20]);
        assert!(sizes(0, 20).is_empty());
        assert_eq!(sizes(3, 1), [1, 1, 1]);
    }

    #[test]
    fn status_serialization() {
        let s = DocumentStatus::Failed {
            stage: Stage::Relationship,
            reason: "SchemaError".into(),
            detail: "x".into(),
        };
        assert_eq!(
            serde_json::to_string(&s).unwrap(),
            r#"{"state":"failed","stage":3,"reason":"SchemaError","detail":"x"}"#
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn chunking_partitions_in_order(n in 0usize..=200, cap in 1usize..=20) {
                let items: Vec<usize> = (0..n).collect();
                let batches = chunk_pairs(&items, cap);
                prop_assert!(batches.iter().all(|b| !b.is_empty() && b.len() <= cap));
                if let Some((_, init)) = batches.split_last() {
                    prop_assert!(init.iter().all(|b| b.len() == cap));
                }
                let flat: Vec<usize> = batches.concat();
                prop_assert_eq!(flat, items);
            }
        }
    }
}
