//! Per-document checkpoints and the results store.
//!
//! Both are JSON-lines files. Checkpoints are append-only
//! (`run_dir/checkpoints/checkpoints.jsonl`, last line per document wins).
//! Results (`run_dir/results/results.jsonl`) are appended as documents finish
//! and rewritten in document-id order once a run completes.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{DocumentResult, Pair, PipelineError, Verdict};
use crate::corpus::read_jsonl;
use crate::taxonomy::{Direction, PbId, RefinedLabel, SdgId};

pub const CHECKPOINT_FILE: &str = "checkpoints/checkpoints.jsonl";
pub const RESULTS_FILE: &str = "results/results.jsonl";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub doc_id: String,
    pub template_version: String,
    pub last_completed_stage: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sdgs: Option<Vec<SdgId>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pbs: Option<Vec<PbId>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relationships: Option<Vec<Verdict>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directions: Option<Vec<(Pair, Direction)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refinements: Option<Vec<(Pair, RefinedLabel)>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl Checkpoint {
    pub fn new(doc_id: &str, template_version: &str) -> Self {
        Self {
            doc_id: doc_id.to_string(),
            template_version: template_version.to_string(),
            last_completed_stage: 0,
            sdgs: None,
            pbs: None,
            relationships: None,
            directions: None,
            refinements: None,
            notes: Vec::new(),
        }
    }

    /// Every stage up to `last_completed_stage` has its payload.
    pub fn is_consistent(&self) -> bool {
        let present = [
            self.sdgs.is_some(),
            self.pbs.is_some(),
            self.relationships.is_some(),
            self.directions.is_some(),
            self.refinements.is_some(),
        ];
        self.last_completed_stage <= 5
            && present
                .iter()
                .take(self.last_completed_stage as usize)
                .all(|&p| p)
    }
}

fn store_err(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Store {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn append_line<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut line = serde_json::to_vec(value).map_err(|e| store_err(path, e))?;
    line.push(b'\n');
    OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .and_then(|mut f| f.write_all(&line))
        .map_err(|e| store_err(path, e))
}

pub struct CheckpointStore {
    path: PathBuf,
    template_version: String,
    latest: Mutex<BTreeMap<String, Checkpoint>>,
}

impl CheckpointStore {
    /// Opens the store under `run_dir`, refusing checkpoints written with a
    /// different template version.
    pub fn open(run_dir: &Path, template_version: &str) -> Result<Self, PipelineError> {
        let path = run_dir.join(CHECKPOINT_FILE);
        let parent = path.parent().expect("checkpoint path has a parent");
        fs::create_dir_all(parent).map_err(|e| store_err(parent, e))?;
        let mut latest = BTreeMap::new();
        if path.exists() {
            let rows: Vec<Checkpoint> = read_jsonl(&path).map_err(|e| store_err(&path, e))?;
            for cp in rows {
                if cp.template_version != template_version {
                    return Err(PipelineError::TemplateVersionMismatch {
                        expected: template_version.to_string(),
                        found: cp.template_version,
                    });
                }
                latest.insert(cp.doc_id.clone(), cp);
            }
        }
        Ok(Self {
            path,
            template_version: template_version.to_string(),
            latest: Mutex::new(latest),
        })
    }

    pub fn get(&self, doc_id: &str) -> Option<Checkpoint> {
        self.latest.lock().unwrap().get(doc_id).cloned()
    }

    pub fn write(&self, checkpoint: &Checkpoint) -> Result<(), PipelineError> {
        if checkpoint.template_version != self.template_version {
            return Err(PipelineError::TemplateVersionMismatch {
                expected: self.template_version.clone(),
                found: checkpoint.template_version.clone(),
            });
        }
        debug_assert!(checkpoint.is_consistent());
        let mut latest = self.latest.lock().unwrap();
        if let Some(previous) = latest.get(&checkpoint.doc_id) {
            if checkpoint.last_completed_stage < previous.last_completed_stage {
                return Err(PipelineError::NonMonotoneCheckpoint {
                    doc_id: checkpoint.doc_id.clone(),
                    from: previous.last_completed_stage,
                    to: checkpoint.last_completed_stage,
                });
            }
        }
        append_line(&self.path, checkpoint)?;
        latest.insert(checkpoint.doc_id.clone(), checkpoint.clone());
        Ok(())
    }
}

pub struct ResultStore {
    path: PathBuf,
    results: Mutex<BTreeMap<String, DocumentResult>>,
}

impl ResultStore {
    pub fn open(run_dir: &Path, template_version: &str) -> Result<Self, PipelineError> {
        let path = run_dir.join(RESULTS_FILE);
        let parent = path.parent().expect("results path has a parent");
        fs::create_dir_all(parent).map_err(|e| store_err(parent, e))?;
        let mut results = BTreeMap::new();
        if path.exists() {
            for result in Self::load(&path)? {
                if result.template_version != template_version {
                    return Err(PipelineError::TemplateVersionMismatch {
                        expected: template_version.to_string(),
                        found: result.template_version,
                    });
                }
                results.insert(result.doc_id.clone(), result);
            }
        }
        Ok(Self {
            path,
            results: Mutex::new(results),
        })
    }

    /// Reads a results file without version checks.
    pub fn load(path: &Path) -> Result<Vec<DocumentResult>, PipelineError> {
        read_jsonl(path).map_err(|e| store_err(path, e))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn contains(&self, doc_id: &str) -> bool {
        self.results.lock().unwrap().contains_key(doc_id)
    }

    pub fn len(&self) -> usize {
        self.results.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn append(&self, result: DocumentResult) -> Result<(), PipelineError> {
        let mut results = self.results.lock().unwrap();
        append_line(&self.path, &result)?;
        results.insert(result.doc_id.clone(), result);
        Ok(())
    }

    /// Rewrites the file with one line per document, sorted by id.
    pub fn finalize(&self) -> Result<Vec<DocumentResult>, PipelineError> {
        let results = self.results.lock().unwrap();
        let mut out = Vec::new();
        for result in results.values() {
            serde_json::to_writer(&mut out, result).map_err(|e| store_err(&self.path, e))?;
            out.push(b'\n');
        }
        fs::write(&self.path, out).map_err(|e| store_err(&self.path, e))?;
        Ok(results.values().cloned().collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::DocumentStatus;

    #[test]
    fn checkpoints_are_monotone_and_versioned() {
        let dir = tempfile::tempdir().unwrap();
        let store = CheckpointStore::open(dir.path(), "v1").unwrap();
        let mut cp = Checkpoint::new("a", "v1");
        cp.sdgs = Some(vec![SdgId::new(2).unwrap()]);
        cp.last_completed_stage = 1;
        store.write(&cp).unwrap();
        cp.pbs = Some(vec![]);
        cp.last_completed_stage = 2;
        store.write(&cp).unwrap();

        let mut stale = cp.clone();
        stale.last_completed_stage = 1;
        assert!(matches!(
            store.write(&stale),
            Err(PipelineError::NonMonotoneCheckpoint { from: 2, to: 1, .. })
        ));

        let reopened = CheckpointStore::open(dir.path(), "v1").unwrap();
        assert_eq!(reopened.get("a").unwrap().last_completed_stage, 2);
        assert!(matches!(
            CheckpointStore::open(dir.path(), "v2"),
            Err(PipelineError::TemplateVersionMismatch { .. })
        ));
    }

    #[test]
    fn consistency_requires_payloads() {
        let mut cp = Checkpoint::new("a", "v");
        assert!(cp.is_consistent());
        cp.last_completed_stage = 1;
        assert!(!cp.is_consistent());
        cp.sdgs = Some(vec![]);
        assert!(cp.is_consistent());
    }

    #[test]
    fn results_finalize_sorted() {
        let dir = tempfile::tempdir().unwrap();
        let store = ResultStore::open(dir.path(), "v").unwrap();
        for id in ["b", "a"] {
            store
                .append(DocumentResult {
                    doc_id: id.into(),
                    sdgs: Default::default(),
                    pbs: Default::default(),
                    pairs: vec![],
                    status: DocumentStatus::Complete,
                    template_version: "v".into(),
                    notes: vec![],
                })
                .unwrap();
        }
        store.finalize().unwrap();
        let text = fs::read_to_string(store.path()).unwrap();
        assert!(text.starts_with(r#"{"doc_id":"a""#));
        assert_eq!(text.lines().count(), 2);
        assert!(ResultStore::open(dir.path(), "other").is_err());
    }
}
