//! Corpus acquisition and full-text ingestion.

pub mod extraction;
pub mod openalex;
pub mod tei;

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use openalex::{OpenAlexClient, OpenAlexConfig, WorkRecord, WorksPage};
pub use tei::{parse_tei, Division, SectionKind, TeiDocument};

pub const TEI_SUFFIX: &str = ".tei.xml";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("malformed XML: {0}")]
    MalformedXml(String),
    #[error("root element <{0}> is not TEI")]
    NotTei(String),
    #[error("document {0} has no body text after pruning")]
    EmptyDocument(String),
    #[error("HTTP failure: {0}")]
    HttpFailure(String),
    #[error("cursor {0:?} was not issued by this session")]
    InvalidCursor(String),
    #[error("quota exceeded after {attempts} attempts")]
    QuotaExceeded { attempts: u32 },
    #[error("query must not be empty")]
    EmptyQuery,
    #[error("unexpected response shape: {0}")]
    Decode(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CorpusError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Pruned full text of one article.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanDocument {
    pub doc_id: String,
    pub title: String,
    pub body_text: String,
    pub token_estimate: u64,
    pub source_path: String,
}

/// Context-window guard heuristic: one token per four characters, rounded up.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

/// Drops figure, acknowledgment and bibliography divisions and joins what is
/// left, in document order.
pub fn prune(doc: &TeiDocument, doc_id: &str) -> Result<CleanDocument, CorpusError> {
    let kept: Vec<&str> = doc
        .divisions
        .iter()
        .filter(|d| matches!(d.kind, SectionKind::Body | SectionKind::Other))
        .map(|d| d.text.as_str())
        .filter(|t| !t.trim().is_empty())
        .collect();
    if kept.is_empty() {
        return Err(CorpusError::EmptyDocument(doc_id.to_string()));
    }
    let body_text = kept.join("\n\n");
    Ok(CleanDocument {
        doc_id: doc_id.to_string(),
        title: doc.title.clone(),
        token_estimate: estimate_tokens(&body_text),
        body_text,
        source_path: String::new(),
    })
}

/// A file that could not be turned into a clean document.
#[derive(Debug)]
pub struct IngestIssue {
    pub path: PathBuf,
    pub error: CorpusError,
}

/// Parses and prunes every `*.tei.xml` file in `dir`, sorted by document id.
pub fn ingest_dir(dir: &Path) -> Result<(Vec<CleanDocument>, Vec<IngestIssue>), CorpusError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CorpusError::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.ends_with(TEI_SUFFIX))
        })
        .collect();
    paths.sort();

    let mut docs = Vec::new();
    let mut issues = Vec::new();
    for path in paths {
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default();
        let doc_id = name.trim_end_matches(TEI_SUFFIX).to_string();
        let result = fs::read(&path)
            .map_err(|e| CorpusError::io(&path, e))
            .and_then(|bytes| parse_tei(&bytes))
            .and_then(|tei| prune(&tei, &doc_id));
        match result {
            Ok(mut doc) => {
                doc.source_path = name.to_string();
                docs.push(doc);
            }
            Err(error) => {
                tracing::warn!(path = %path.display(), %error, "skipping document");
                issues.push(IngestIssue { path, error });
            }
        }
    }
    docs.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    Ok((docs, issues))
}

/// Writes one JSON object per line.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), CorpusError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CorpusError::io(parent, e))?;
    }
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item).map_err(|e| CorpusError::Decode(e.to_string()))?;
        out.push(b'\n');
    }
    let mut file = fs::File::create(path).map_err(|e| CorpusError::io(path, e))?;
    file.write_all(&out).map_err(|e| CorpusError::io(path, e))
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, CorpusError> {
    let file = fs::File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let mut items = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line)
            .map_err(|e| CorpusError::Decode(format!("{}:{}: {e}", path.display(), n + 1)))?;
        items.push(item);
    }
    Ok(items)
}
