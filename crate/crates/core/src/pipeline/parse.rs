//! Parsing and validation of stage replies.
//!
//! Every stage answers with one JSON object. A reply wrapped in a Markdown
//! code fence is accepted; anything else around the object is not.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::{Map, Value};
use thiserror::Error;

use super::{Pair, Verdict};
use crate::taxonomy::{refined_labels_for, Category, Direction, PbId, RefinedLabel, SdgId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("reply does not match the answer schema: {0}")]
    SchemaError(String),
    #[error("id out of range: {0}")]
    IdOutOfRange(String),
    #[error("reply covers {got:?} but the request listed {expected:?}")]
    PairSetMismatch {
        expected: Vec<String>,
        got: Vec<String>,
    },
    #[error("unknown category {0:?}")]
    UnknownCategory(String),
    #[error("unknown direction {0:?}")]
    UnknownDirection(String),
    #[error("unknown refinement label {0:?}")]
    UnknownLabel(String),
    #[error("{pair} is a {category:?} and cannot be labelled {label:?}")]
    IllegalRefinement {
        pair: String,
        category: Category,
        label: RefinedLabel,
    },
    #[error("{0} appears twice with different answers")]
    ConflictingDuplicate(String),
    #[error("{0} is not neutral but has no justification")]
    MissingJustification(String),
}

impl ParseError {
    /// Short name used in failure statuses.
    pub fn kind(&self) -> &'static str {
        match self {
            ParseError::SchemaError(_) => "SchemaError",
            ParseError::IdOutOfRange(_) => "IdOutOfRange",
            ParseError::PairSetMismatch { .. } => "PairSetMismatch",
            ParseError::UnknownCategory(_) => "UnknownCategory",
            ParseError::UnknownDirection(_) => "UnknownDirection",
            ParseError::UnknownLabel(_) => "UnknownLabel",
            ParseError::IllegalRefinement { .. } => "IllegalRefinement",
            ParseError::ConflictingDuplicate(_) => "ConflictingDuplicate",
            ParseError::MissingJustification(_) => "MissingJustification",
        }
    }
}

fn schema(msg: impl Into<String>) -> ParseError {
    ParseError::SchemaError(msg.into())
}

fn strip_fence(text: &str) -> &str {
    let t = text.trim();
    let Some(inner) = t.strip_prefix("```") else {
        return t;
    };
    let inner = inner.strip_suffix("```").unwrap_or(inner);
    let inner = inner
        .strip_prefix("json")
        .or_else(|| inner.strip_prefix("JSON"))
        .unwrap_or(inner);
    inner.trim()
}

fn object(text: &str) -> Result<Map<String, Value>, ParseError> {
    match serde_json::from_str::<Value>(strip_fence(text)) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(other) => Err(schema(format!(
            "expected a JSON object, found {}",
            type_name(&other)
        ))),
        Err(e) => Err(schema(format!("invalid JSON: {e}"))),
    }
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "a boolean",
        Value::Number(_) => "a number",
        Value::String(_) => "a string",
        Value::Array(_) => "an array",
        Value::Object(_) => "an object",
    }
}

/// Accepts `13`, `"13"`, `"SDG13"` or `"SDG 13"` (and the PB equivalents).
fn raw_id(value: &Value, prefix: &str) -> Result<i64, ParseError> {
    match value {
        Value::Number(n) => n
            .as_i64()
            .ok_or_else(|| schema(format!("{prefix} id {n} is not an integer"))),
        Value::String(s) => {
            let t = s.trim();
            let t = if t.len() >= prefix.len() && t[..prefix.len()].eq_ignore_ascii_case(prefix) {
                &t[prefix.len()..]
            } else {
                t
            };
            t.trim()
                .parse::<i64>()
                .map_err(|_| schema(format!("{prefix} id {s:?} is not a number")))
        }
        other => Err(schema(format!(
            "{prefix} id must be a number, found {}",
            type_name(other)
        ))),
    }
}

fn sdg_id(value: &Value) -> Result<SdgId, ParseError> {
    let n = raw_id(value, "SDG")?;
    SdgId::new(n).map_err(|e| ParseError::IdOutOfRange(e.to_string()))
}

fn pb_id(value: &Value) -> Result<PbId, ParseError> {
    let n = raw_id(value, "PB")?;
    PbId::new(n).map_err(|e| ParseError::IdOutOfRange(e.to_string()))
}

fn id_list<'a>(map: &'a Map<String, Value>, key: &str) -> Result<&'a Vec<Value>, ParseError> {
    map.get(key)
        .ok_or_else(|| schema(format!("missing {key:?} field")))?
        .as_array()
        .ok_or_else(|| schema(format!("{key:?} must be an array")))
}

/// Stage 1 reply `{"sdgs": [...]}`, deduplicated.
pub fn parse_sdg_allocation(text: &str) -> Result<BTreeSet<SdgId>, ParseError> {
    id_list(&object(text)?, "sdgs")?
        .iter()
        .map(sdg_id)
        .collect()
}

/// Stage 2 reply `{"pbs": [...]}`, deduplicated.
pub fn parse_pb_allocation(text: &str) -> Result<BTreeSet<PbId>, ParseError> {
    id_list(&object(text)?, "pbs")?.iter().map(pb_id).collect()
}

fn normalize_word(s: &str) -> String {
    s.chars()
        .filter(char::is_ascii_alphanumeric)
        .map(|c| c.to_ascii_lowercase())
        .collect()
}

pub fn parse_category(s: &str) -> Result<Category, ParseError> {
    match normalize_word(s).as_str() {
        "synergy" => Ok(Category::Synergy),
        "tradeoff" => Ok(Category::TradeOff),
        "neutral" => Ok(Category::Neutral),
        _ => Err(ParseError::UnknownCategory(s.to_string())),
    }
}

pub fn parse_direction(s: &str) -> Result<Direction, ParseError> {
    match normalize_word(s).as_str() {
        "sdgpb" | "sdgtopb" => Ok(Direction::SdgToPb),
        "pbsdg" | "pbtosdg" => Ok(Direction::PbToSdg),
        _ => Err(ParseError::UnknownDirection(s.to_string())),
    }
}

pub fn parse_label(s: &str) -> Result<RefinedLabel, ParseError> {
    let word = normalize_word(s);
    RefinedLabel::ALL
        .into_iter()
        .find(|l| normalize_word(l.display_name()) == word)
        .or(match word.as_str() {
            "doublenegative" => Some(RefinedLabel::DoubleNegative),
            "genericnegative" => Some(RefinedLabel::GenericNegativeAssociation),
            _ => None,
        })
        .ok_or_else(|| ParseError::UnknownLabel(s.to_string()))
}

fn str_field<'a>(entry: &'a Map<String, Value>, key: &str) -> Result<&'a str, ParseError> {
    entry
        .get(key)
        .ok_or_else(|| schema(format!("pair entry missing {key:?}")))?
        .as_str()
        .ok_or_else(|| schema(format!("{key:?} must be a string")))
}

fn optional_str<'a>(entry: &'a Map<String, Value>, key: &str) -> Result<&'a str, ParseError> {
    match entry.get(key) {
        None | Some(Value::Null) => Ok(""),
        Some(Value::String(s)) => Ok(s),
        Some(other) => Err(schema(format!(
            "{key:?} must be a string, found {}",
            type_name(other)
        ))),
    }
}

/// Parses the `pairs` array, mapping each entry through `item`. Exact
/// duplicates collapse; a pair answered twice differently is an error. The
/// answered pair set must equal `expected`. Output follows `expected` order.
fn pair_entries<T: Clone + PartialEq>(
    text: &str,
    expected: &[Pair],
    item: impl Fn(Pair, &Map<String, Value>) -> Result<T, ParseError>,
) -> Result<Vec<(Pair, T)>, ParseError> {
    let map = object(text)?;
    let entries = map
        .get("pairs")
        .ok_or_else(|| schema("missing \"pairs\" field"))?
        .as_array()
        .ok_or_else(|| schema("\"pairs\" must be an array"))?;
    let mut answers: BTreeMap<Pair, T> = BTreeMap::new();
    for entry in entries {
        let entry = entry
            .as_object()
            .ok_or_else(|| schema("each pair entry must be an object"))?;
        let pair = Pair::new(
            sdg_id(
                entry
                    .get("sdg")
                    .ok_or_else(|| schema("pair entry missing \"sdg\""))?,
            )?,
            pb_id(
                entry
                    .get("pb")
                    .ok_or_else(|| schema("pair entry missing \"pb\""))?,
            )?,
        );
        let value = item(pair, entry)?;
        match answers.get(&pair) {
            Some(existing) if *existing != value => {
                return Err(ParseError::ConflictingDuplicate(pair.to_string()))
            }
            Some(_) => {}
            None => {
                answers.insert(pair, value);
            }
        }
    }
    let expected_set: BTreeSet<Pair> = expected.iter().copied().collect();
    if answers.keys().copied().collect::<BTreeSet<_>>() != expected_set {
        return Err(ParseError::PairSetMismatch {
            expected: expected_set.iter().map(Pair::to_string).collect(),
            got: answers.keys().map(Pair::to_string).collect(),
        });
    }
    Ok(expected.iter().map(|p| (*p, answers[p].clone())).collect())
}

/// Stage 3: one verdict per requested pair.
pub fn parse_relationship(text: &str, batch: &[Pair]) -> Result<Vec<Verdict>, ParseError> {
    let verdicts = pair_entries(text, batch, |pair, entry| {
        let category = parse_category(str_field(entry, "category")?)?;
        let justification = optional_str(entry, "justification")?.trim().to_string();
        if category != Category::Neutral && justification.is_empty() {
            return Err(ParseError::MissingJustification(pair.to_string()));
        }
        Ok(Verdict {
            pair,
            category,
            justification,
            evidence_quote: optional_str(entry, "evidence_quote")?.trim().to_string(),
        })
    })?;
    Ok(verdicts.into_iter().map(|(_, v)| v).collect())
}

/// Stage 4: one direction per requested pair.
pub fn parse_causality(text: &str, batch: &[Pair]) -> Result<Vec<(Pair, Direction)>, ParseError> {
    pair_entries(text, batch, |_, entry| {
        parse_direction(str_field(entry, "direction")?)
    })
}

/// Stage 5: one refinement per requested pair, legal for the pair's category.
pub fn parse_reasoner(
    text: &str,
    batch: &[(Pair, Category)],
) -> Result<Vec<(Pair, RefinedLabel)>, ParseError> {
    let pairs: Vec<Pair> = batch.iter().map(|(p, _)| *p).collect();
    let categories: BTreeMap<Pair, Category> = batch.iter().copied().collect();
    pair_entries(text, &pairs, |pair, entry| {
        let label = parse_label(str_field(entry, "label")?)?;
        // Pairs outside the batch are reported by the pair-set check.
        if let Some(&category) = categories.get(&pair) {
            if !refined_labels_for(category).contains(&label) {
                return Err(ParseError::IllegalRefinement {
                    pair: pair.to_string(),
                    category,
                    label,
                });
            }
        }
        Ok(label)
    })
}
