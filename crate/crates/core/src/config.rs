//! Run configuration, read from a TOML file.
//!
//! Relative paths are resolved against the directory holding the file. The
//! API key is never read from the file, only from the environment variable
//! named by `api_key_env`.
//!
//! ```toml
//! corpus_dir = "fixtures/corpus"
//! run_dir = "runs/fixtures"
//! backend = "replay"
//! cache_dir = "fixtures/llm_cache"
//! batch_cap = 20
//! worker_count = 4
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::DEFAULT_BATCH_CAP;

pub const DEFAULT_API_KEY_ENV: &str = "GEMINI_API_KEY";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Read { path: String, message: String },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("environment variable {0} is not set")]
    MissingApiKey(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendMode {
    Live,
    Record,
    Replay,
}

impl std::str::FromStr for BackendMode {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "live" => Ok(BackendMode::Live),
            "record" => Ok(BackendMode::Record),
            "replay" => Ok(BackendMode::Replay),
            other => Err(ConfigError::Invalid(format!(
                "unknown backend mode {other:?}"
            ))),
        }
    }
}

/// Which completion provider answers live and record calls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provider {
    Gemini,
    /// Answers from per-document answer keys; used to author fixtures.
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpenAlexSettings {
    pub base_url: String,
    pub query: String,
    pub filters: BTreeMap<String, String>,
    pub mailto: Option<String>,
    pub limit: usize,
    pub grobid_url: String,
}

impl Default for OpenAlexSettings {
    fn default() -> Self {
        Self {
            base_url: "https://api.openalex.org".into(),
            query: "climate change".into(),
            filters: BTreeMap::from([("language".to_string(), "en".to_string())]),
            mailto: None,
            limit: 100,
            grobid_url: "http://localhost:8070".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus_dir: PathBuf,
    pub run_dir: PathBuf,
    pub backend: BackendMode,
    pub provider: Provider,
    /// Recording directory; `run_dir/llm_cache` when unset.
    pub cache_dir: Option<PathBuf>,
    pub answer_keys_dir: Option<PathBuf>,
    /// Model per stage, stage 1 first.
    pub models: [String; 5],
    pub temperature: f64,
    pub batch_cap: usize,
    pub worker_count: usize,
    pub rpm_limit: Option<u32>,
    pub retry_budget: u32,
    pub jitter_seed: u64,
    pub request_timeout_secs: u64,
    pub template_dir: Option<PathBuf>,
    pub catalog_path: Option<PathBuf>,
    pub report_dir: Option<PathBuf>,
    pub api_key_env: String,
    pub gemini_base_url: String,
    pub openalex: OpenAlexSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        let flash = "gemini-1.5-flash".to_string();
        Self {
            corpus_dir: PathBuf::from("corpus"),
            run_dir: PathBuf::from("run"),
            backend: BackendMode::Replay,
            provider: Provider::Gemini,
            cache_dir: None,
            answer_keys_dir: None,
            models: [
                flash.clone(),
                flash.clone(),
                flash.clone(),
                flash,
                "gemini-2.0-flash-thinking-exp".to_string(),
            ],
            temperature: 0.0,
            batch_cap: DEFAULT_BATCH_CAP,
            worker_count: 4,
            rpm_limit: Some(1000),
            retry_budget: 4,
            jitter_seed: 0,
            request_timeout_secs: 300,
            template_dir: None,
            catalog_path: None,
            report_dir: None,
            api_key_env: DEFAULT_API_KEY_ENV.into(),
            gemini_base_url: crate::llm_gateway::GEMINI_BASE_URL.into(),
            openalex: OpenAlexSettings::default(),
        }
    }
}

fn resolve(base: &Path, path: &mut PathBuf) {
    if path.is_relative() {
        *path = base.join(&*path);
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: RunConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads `path` and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut config = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.corpus_dir);
        resolve(base, &mut self.run_dir);
        for p in [
            &mut self.cache_dir,
            &mut self.answer_keys_dir,
            &mut self.template_dir,
            &mut self.catalog_path,
            &mut self.report_dir,
        ]
        .into_iter()
        .flatten()
        {
            resolve(base, p);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.batch_cap < 1 {
            return invalid("batch_cap must be at least 1");
        }
        if self.worker_count < 1 {
            return invalid("worker_count must be at least 1");
        }
        if self.rpm_limit == Some(0) {
            return invalid("rpm_limit must be positive");
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return invalid("temperature must be within 0..=2");
        }
        if self.models.iter().any(|m| m.trim().is_empty()) {
            return invalid("every stage needs a model name");
        }
        if self.provider == Provider::Scripted
            && self.backend != BackendMode::Replay
            && self.answer_keys_dir.is_none()
        {
            return invalid("the scripted provider needs answer_keys_dir");
        }
        Ok(())
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.cache_dir
            .clone()
            .unwrap_or_else(|| self.run_dir.join("llm_cache"))
    }

    pub fn report_dir(&self) -> PathBuf {
        self.report_dir
            .clone()
            .unwrap_or_else(|| self.run_dir.join("report"))
    }

    pub fn api_key(&self) -> Result<String, ConfigError> {
        std::env::var(&self.api_key_env)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| ConfigError::MissingApiKey(self.api_key_env.clone()))
    }
}
