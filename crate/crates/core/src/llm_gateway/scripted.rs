//! A backend that answers from per-document answer keys.
//!
//! Used to author fixture recordings: each key file
//! (`<answer_keys_dir>/<doc_id>.json`) lists the SDGs and PBs of a document,
//! the non-neutral pairs with their direction, refinement, justification and
//! quote, and optional faults that make the backend misbehave a set number of
//! times for a stage. Pairs missing from the key are answered as neutral.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{CallError, CompletionBackend, PromptRequest, Stage, PAIRS_BEGIN, PAIRS_END};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    /// Reply that is not JSON.
    Malformed,
    /// Drops the last pair of the batch.
    OmitPair,
    /// Gives the first pair a refinement from the other category.
    CrossLabel,
    /// Lists the first pair twice with different categories.
    ConflictingDuplicate,
    /// Answers HTTP 429.
    Http429,
    UnknownCategory,
    /// Direction "both" for the first pair.
    BothDirection,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fault {
    pub stage: u8,
    pub kind: FaultKind,
    /// Number of consecutive calls affected, per batch.
    pub times: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyedPair {
    pub sdg: u8,
    pub pb: u8,
    /// "synergy" or "trade-off".
    pub category: String,
    /// "SDG->PB" or "PB->SDG".
    pub direction: String,
    pub label: String,
    pub justification: String,
    pub evidence_quote: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerKey {
    pub doc_id: String,
    pub sdgs: Vec<u8>,
    pub pbs: Vec<u8>,
    #[serde(default)]
    pub pairs: Vec<KeyedPair>,
    #[serde(default)]
    pub faults: Vec<Fault>,
}

impl AnswerKey {
    fn pair(&self, sdg: u8, pb: u8) -> Option<&KeyedPair> {
        self.pairs.iter().find(|p| p.sdg == sdg && p.pb == pb)
    }
}

pub struct ScriptedBackend {
    dir: PathBuf,
    keys: Mutex<HashMap<String, AnswerKey>>,
    /// Calls seen per (doc, stage, listed pairs).
    calls: Mutex<HashMap<(String, u8, String), u32>>,
}

/// One `(sdg, pb, extra)` per line of the request's pair block.
fn listed_pairs(user_text: &str) -> Vec<(u8, u8)> {
    let Some(start) = user_text.find(PAIRS_BEGIN) else {
        return Vec::new();
    };
    let rest = &user_text[start + PAIRS_BEGIN.len()..];
    let block = rest.split(PAIRS_END).next().unwrap_or("");
    block
        .lines()
        .filter_map(|line| {
            let mut parts = line.split('|');
            let sdg = parts.next()?.trim().strip_prefix("SDG")?.parse().ok()?;
            let pb = parts.next()?.trim().strip_prefix("PB")?.parse().ok()?;
            Some((sdg, pb))
        })
        .collect()
}

fn opposite_label(label: &str) -> &'static str {
    match label {
        "Actual Synergy" | "Misled by Positivity" | "Generality" => "Actual Trade-off",
        _ => "Actual Synergy",
    }
}

impl ScriptedBackend {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: dir.into(),
            keys: Mutex::new(HashMap::new()),
            calls: Mutex::new(HashMap::new()),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn key(&self, doc_id: &str) -> Result<AnswerKey, CallError> {
        let mut keys = self.keys.lock().unwrap();
        if let Some(key) = keys.get(doc_id) {
            return Ok(key.clone());
        }
        let path = self.dir.join(format!("{doc_id}.json"));
        let text = std::fs::read_to_string(&path).map_err(|e| CallError::Status {
            code: 404,
            retry_after: None,
            message: format!("no answer key {}: {e}", path.display()),
        })?;
        let key: AnswerKey =
            serde_json::from_str(&text).map_err(|e| CallError::Malformed(e.to_string()))?;
        keys.insert(doc_id.to_string(), key.clone());
        Ok(key)
    }

    fn answer(key: &AnswerKey, stage: Stage, pairs: &[(u8, u8)]) -> Value {
        match stage {
            Stage::SdgAllocation => json!({ "sdgs": key.sdgs }),
            Stage::PbAllocation => json!({ "pbs": key.pbs }),
            Stage::Relationship => {
                let entries: Vec<Value> = pairs
                    .iter()
                    .map(|&(s, b)| match key.pair(s, b) {
                        Some(p) => json!({
                            "sdg": s, "pb": b, "category": p.category,
                            "justification": p.justification, "evidence_quote": p.evidence_quote,
                        }),
                        None => json!({
                            "sdg": s, "pb": b, "category": "neutral",
                            "justification": "The text does not connect these two.", "evidence_quote": "",
                        }),
                    })
                    .collect();
                json!({ "pairs": entries })
            }
            Stage::Causality | Stage::Reasoner => {
                let entries: Vec<Value> = pairs
                    .iter()
                    .map(|&(s, b)| {
                        let p = key.pair(s, b);
                        if stage == Stage::Causality {
                            json!({ "sdg": s, "pb": b, "direction": p.map_or("SDG->PB", |p| &p.direction) })
                        } else {
                            json!({ "sdg": s, "pb": b, "label": p.map_or("Generality", |p| &p.label) })
                        }
                    })
                    .collect();
                json!({ "pairs": entries })
            }
        }
    }

    fn apply(kind: FaultKind, key: &AnswerKey, mut answer: Value) -> Result<String, CallError> {
        let entries = answer.get_mut("pairs").and_then(Value::as_array_mut);
        match (kind, entries) {
            (FaultKind::Http429, _) => {
                return Err(CallError::Status {
                    code: 429,
                    retry_after: Some(Duration::from_secs(1)),
                    message: "quota exceeded".into(),
                })
            }
            (FaultKind::Malformed, _) => return Ok("Here is my answer: {\"pairs\": [".into()),
            (FaultKind::OmitPair, Some(entries)) => {
                entries.pop();
            }
            (FaultKind::CrossLabel, Some(entries)) if !entries.is_empty() => {
                let (s, b) = (entries[0]["sdg"].as_u64(), entries[0]["pb"].as_u64());
                let label = key
                    .pairs
                    .iter()
                    .find(|p| Some(p.sdg as u64) == s && Some(p.pb as u64) == b)
                    .map_or("Actual Synergy", |p| opposite_label(&p.label));
                entries[0]["label"] = json!(label);
            }
            (FaultKind::ConflictingDuplicate, Some(entries)) if !entries.is_empty() => {
                let mut dup = entries[0].clone();
                let flipped = if dup["category"] == "synergy" {
                    "trade-off"
                } else {
                    "synergy"
                };
                dup["category"] = json!(flipped);
                dup["justification"] = json!("Listed again.");
                entries.push(dup);
            }
            (FaultKind::UnknownCategory, Some(entries)) if !entries.is_empty() => {
                entries[0]["category"] = json!("mixed");
            }
            (FaultKind::BothDirection, Some(entries)) if !entries.is_empty() => {
                entries[0]["direction"] = json!("both");
            }
            _ => {}
        }
        Ok(answer.to_string())
    }
}

impl CompletionBackend for ScriptedBackend {
    fn backend_id(&self, _stage: Stage) -> String {
        "scripted".into()
    }

    fn call(&self, req: &PromptRequest) -> Result<String, CallError> {
        let key = self.key(&req.doc_id)?;
        let pairs = listed_pairs(&req.user_text);
        let pair_sig: String = pairs.iter().map(|(s, b)| format!("{s}:{b};")).collect();
        let n = {
            let mut calls = self.calls.lock().unwrap();
            let count = calls
                .entry((req.doc_id.clone(), req.stage.number(), pair_sig))
                .or_insert(0);
            *count += 1;
            *count
        };
        let answer = Self::answer(&key, req.stage, &pairs);
        let fault = key
            .faults
            .iter()
            .find(|f| f.stage == req.stage.number() && n <= f.times);
        match fault {
            Some(f) => Self::apply(f.kind, &key, answer),
            None => Ok(answer.to_string()),
        }
    }
}

/// Loads every `*.json` answer key in `dir`, keyed by document id.
pub fn load_answer_keys(dir: &Path) -> std::io::Result<BTreeMap<String, AnswerKey>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "json") {
            let key: AnswerKey = serde_json::from_str(&std::fs::read_to_string(&path)?)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
            out.insert(key.doc_id.clone(), key);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm_gateway::DecodeParams;

    fn req(stage: Stage, user: &str) -> PromptRequest {
        PromptRequest::new(
            stage,
            "d",
            "sys",
            user,
            DecodeParams {
                temperature: 0.0,
                max_output_tokens: 10,
            },
        )
    }

    fn backend(faults: Vec<Fault>) -> (tempfile::TempDir, ScriptedBackend) {
        let dir = tempfile::tempdir().unwrap();
        let key = AnswerKey {
            doc_id: "d".into(),
            sdgs: vec![2],
            pbs: vec![6, 1],
            pairs: vec![KeyedPair {
                sdg: 2,
                pb: 6,
                category: "trade-off".into(),
                direction: "SDG->PB".into(),
                label: "Actual Trade-off".into(),
                justification: "j".into(),
                evidence_quote: "q".into(),
            }],
            faults,
        };
        std::fs::write(
            dir.path().join("d.json"),
            serde_json::to_string(&key).unwrap(),
        )
        .unwrap();
        let b = ScriptedBackend::new(dir.path());
        (dir, b)
    }

    const BATCH: &str = "x\nBEGIN PAIRS\nSDG2|PB1\nSDG2|PB6|trade-off|j\nEND PAIRS\n";

    #[test]
    fn answers_from_key() {
        let (_d, b) = backend(vec![]);
        assert_eq!(
            b.call(&req(Stage::PbAllocation, "")).unwrap(),
            r#"{"pbs":[6,1]}"#
        );
        let reply: Value =
            serde_json::from_str(&b.call(&req(Stage::Relationship, BATCH)).unwrap()).unwrap();
        assert_eq!(reply["pairs"][0]["category"], "neutral");
        assert_eq!(reply["pairs"][1]["category"], "trade-off");
    }

    #[test]
    fn faults_expire() {
        let (_d, b) = backend(vec![Fault {
            stage: 5,
            kind: FaultKind::CrossLabel,
            times: 1,
        }]);
        let single = "BEGIN PAIRS\nSDG2|PB6|trade-off|j\nEND PAIRS";
        let first: Value =
            serde_json::from_str(&b.call(&req(Stage::Reasoner, single)).unwrap()).unwrap();
        assert_eq!(first["pairs"][0]["label"], "Actual Synergy");
        let second: Value =
            serde_json::from_str(&b.call(&req(Stage::Reasoner, single)).unwrap()).unwrap();
        assert_eq!(second["pairs"][0]["label"], "Actual Trade-off");
    }

    #[test]
    fn rate_limit_fault() {
        let (_d, b) = backend(vec![Fault {
            stage: 1,
            kind: FaultKind::Http429,
            times: 2,
        }]);
        for _ in 0..2 {
            assert!(matches!(
                b.call(&req(Stage::SdgAllocation, "")),
                Err(CallError::Status { code: 429, .. })
            ));
        }
        assert!(b.call(&req(Stage::SdgAllocation, "")).is_ok());
    }
}
