//! Prompt templates: plain text with `{{name}}` placeholders.
//!
//! The set's version is a hash of every template's name and bytes. It is
//! stored with checkpoints and results so that a run never mixes prompt
//! versions.

use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::PipelineError;

/// Template name → placeholders it may use.
pub const TEMPLATE_NAMES: &[(&str, &[&str])] = &[
    ("system", &[]),
    ("sdg_allocation", &["definitions", "title", "body_text"]),
    ("pb_allocation", &["definitions", "title", "body_text"]),
    (
        "relationship",
        &["definitions", "pair_count", "pairs", "title", "body_text"],
    ),
    (
        "causality",
        &["definitions", "pair_count", "pairs", "title", "body_text"],
    ),
    ("reasoner", &["pair_count", "pairs", "title", "body_text"]),
    ("repair", &["error", "previous"]),
    ("retry", &["attempt"]),
];

const EMBEDDED: &[(&str, &str)] = &[
    ("system", include_str!("../../templates/system.txt")),
    (
        "sdg_allocation",
        include_str!("../../templates/sdg_allocation.txt"),
    ),
    (
        "pb_allocation",
        include_str!("../../templates/pb_allocation.txt"),
    ),
    (
        "relationship",
        include_str!("../../templates/relationship.txt"),
    ),
    ("causality", include_str!("../../templates/causality.txt")),
    ("reasoner", include_str!("../../templates/reasoner.txt")),
    ("repair", include_str!("../../templates/repair.txt")),
    ("retry", include_str!("../../templates/retry.txt")),
];

#[derive(Debug, Clone)]
pub struct TemplateSet {
    templates: BTreeMap<String, String>,
    version: String,
}

impl TemplateSet {
    pub fn embedded() -> Self {
        let map = EMBEDDED
            .iter()
            .map(|(name, text)| (name.to_string(), text.to_string()))
            .collect();
        Self::from_map(map).expect("embedded templates are valid")
    }

    /// Loads `<name>.txt` for every template name from `dir`.
    pub fn from_dir(dir: &Path) -> Result<Self, PipelineError> {
        let mut map = BTreeMap::new();
        for (name, _) in TEMPLATE_NAMES {
            let path = dir.join(format!("{name}.txt"));
            let text = std::fs::read_to_string(&path)
                .map_err(|e| PipelineError::Template(format!("{}: {e}", path.display())))?;
            map.insert(name.to_string(), text);
        }
        Self::from_map(map)
    }

    pub fn from_map(templates: BTreeMap<String, String>) -> Result<Self, PipelineError> {
        for (name, allowed) in TEMPLATE_NAMES {
            let text = templates
                .get(*name)
                .ok_or_else(|| PipelineError::Template(format!("missing template {name}")))?;
            for placeholder in placeholders(text)? {
                if !allowed.contains(&placeholder.as_str()) {
                    return Err(PipelineError::Template(format!(
                        "template {name} uses unknown placeholder {{{{{placeholder}}}}}"
                    )));
                }
            }
        }
        let mut hasher = Sha256::new();
        for (name, text) in &templates {
            hasher.update((name.len() as u64).to_le_bytes());
            hasher.update(name.as_bytes());
            hasher.update((text.len() as u64).to_le_bytes());
            hasher.update(text.as_bytes());
        }
        let digest = hex::encode(hasher.finalize());
        Ok(Self {
            templates,
            version: format!("tpl-{}", &digest[..16]),
        })
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn raw(&self, name: &str) -> &str {
        &self.templates[name]
    }

    /// Substitutes placeholders in one pass; substituted text is never
    /// re-scanned, so `{{...}}` inside an article stays literal.
    pub fn render(&self, name: &str, vars: &[(&str, &str)]) -> Result<String, PipelineError> {
        let template = self
            .templates
            .get(name)
            .ok_or_else(|| PipelineError::Template(format!("missing template {name}")))?;
        let mut out = String::with_capacity(
            template.len() + vars.iter().map(|(_, v)| v.len()).sum::<usize>(),
        );
        let mut rest = template.as_str();
        while let Some(start) = rest.find("{{") {
            out.push_str(&rest[..start]);
            let after = &rest[start + 2..];
            let end = after.find("}}").ok_or_else(|| {
                PipelineError::Template(format!("unclosed placeholder in {name}"))
            })?;
            let key = &after[..end];
            let value = vars
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| *v)
                .ok_or_else(|| {
                    PipelineError::Template(format!("no value for {{{{{key}}}}} in {name}"))
                })?;
            out.push_str(value);
            rest = &after[end + 2..];
        }
        out.push_str(rest);
        Ok(out.trim_end().to_string())
    }
}

fn placeholders(text: &str) -> Result<Vec<String>, PipelineError> {
    let mut found = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find("{{") {
        let after = &rest[start + 2..];
        let end = after
            .find("}}")
            .ok_or_else(|| PipelineError::Template("unclosed placeholder".into()))?;
        found.push(after[..end].to_string());
        rest = &after[end + 2..];
    }
    Ok(found)
}
