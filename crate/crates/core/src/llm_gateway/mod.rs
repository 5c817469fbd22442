//! Completion gateway: retries, rate limiting and record/replay.
//!
//! A [`Gateway`] runs in one of three modes. `Live` sends every request to a
//! [`CompletionBackend`]. `Record` does the same but persists each response in
//! a [`RecordStore`] keyed by [`record_key`], serving keys it already holds
//! from disk. `Replay` serves only recorded keys and never touches a backend.

mod gemini;
pub mod scripted;
mod store;

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::net::{Backoff, Clock, RateLimiter};

pub use gemini::{GeminiBackend, DEFAULT_BASE_URL as GEMINI_BASE_URL};
pub use store::{RecordEntry, RecordStore};

/// Marks the start of a pair list inside a prompt. Lines between the two
/// markers are sorted before hashing.
pub const PAIRS_BEGIN: &str = "BEGIN PAIRS";
pub const PAIRS_END: &str = "END PAIRS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Stage {
    SdgAllocation = 1,
    PbAllocation = 2,
    Relationship = 3,
    Causality = 4,
    Reasoner = 5,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::SdgAllocation,
        Stage::PbAllocation,
        Stage::Relationship,
        Stage::Causality,
        Stage::Reasoner,
    ];

    pub fn number(self) -> u8 {
        self as u8
    }

    pub fn from_number(n: u8) -> Option<Stage> {
        Stage::ALL.get((n as usize).checked_sub(1)?).copied()
    }
}

impl TryFrom<u8> for Stage {
    type Error = String;
    fn try_from(n: u8) -> Result<Self, Self::Error> {
        Stage::from_number(n).ok_or_else(|| format!("stage {n} out of range 1..=5"))
    }
}

impl From<Stage> for u8 {
    fn from(s: Stage) -> u8 {
        s.number()
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeParams {
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl Default for DecodeParams {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            max_output_tokens: 8192,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptRequest {
    pub stage: Stage,
    pub doc_id: String,
    pub system_text: String,
    pub user_text: String,
    pub decode_params: DecodeParams,
    pub payload_digest: [u8; 32],
}

impl PromptRequest {
    pub fn new(
        stage: Stage,
        doc_id: impl Into<String>,
        system_text: impl Into<String>,
        user_text: impl Into<String>,
        decode_params: DecodeParams,
    ) -> Self {
        let doc_id = doc_id.into();
        let user_text = user_text.into();
        let payload_digest = digest(stage, &doc_id, &user_text);
        Self {
            stage,
            doc_id,
            system_text: system_text.into(),
            user_text,
            decode_params,
            payload_digest,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawResponse {
    pub text: String,
    pub backend_id: String,
    pub latency_ms: u64,
    pub attempt_count: u32,
}

/// Sorts the lines of every pair-list section so that listing order does not
/// affect the record key.
pub fn canonicalize_user_text(text: &str) -> String {
    let mut out: Vec<&str> = Vec::new();
    let mut section: Option<Vec<&str>> = None;
    for line in text.lines() {
        match &mut section {
            None => {
                out.push(line);
                if line.trim() == PAIRS_BEGIN {
                    section = Some(Vec::new());
                }
            }
            Some(lines) if line.trim() == PAIRS_END => {
                lines.sort_unstable();
                out.append(lines);
                out.push(line);
                section = None;
            }
            Some(lines) => lines.push(line),
        }
    }
    if let Some(mut lines) = section {
        lines.sort_unstable();
        out.append(&mut lines);
    }
    out.join("\n")
}

fn digest(stage: Stage, doc_id: &str, user_text: &str) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update([stage.number()]);
    hasher.update((doc_id.len() as u64).to_le_bytes());
    hasher.update(doc_id.as_bytes());
    hasher.update(canonicalize_user_text(user_text).as_bytes());
    hasher.finalize().into()
}

/// Recording key: SHA-256 over stage, document id and canonicalized user text.
pub fn record_key(req: &PromptRequest) -> [u8; 32] {
    digest(req.stage, &req.doc_id, &req.user_text)
}

pub fn record_key_hex(req: &PromptRequest) -> String {
    hex::encode(record_key(req))
}

/// Failure of a single backend call.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CallError {
    #[error("status {code}: {message}")]
    Status {
        code: u16,
        retry_after: Option<Duration>,
        message: String,
    },
    #[error("timeout")]
    Timeout,
    #[error("transport: {0}")]
    Transport(String),
    #[error("malformed backend reply: {0}")]
    Malformed(String),
}

/// A completion provider. One call is one attempt; retrying is the gateway's job.
pub trait CompletionBackend: Send + Sync {
    fn backend_id(&self, stage: Stage) -> String;
    fn call(&self, req: &PromptRequest) -> Result<String, CallError>;
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("timed out after {attempts} attempts")]
    Timeout { attempts: u32 },
    #[error("backend error: {0}")]
    BackendError(String),
    #[error("no recording for stage {stage} of {doc_id} (key {key})")]
    ReplayMiss {
        key: String,
        stage: Stage,
        doc_id: String,
    },
    #[error("recording store: {0}")]
    Store(String),
}

#[derive(Debug, Clone)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub budget: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
    pub jitter_seed: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            budget: 4,
            base_delay: Duration::from_secs(1),
            max_delay: Duration::from_secs(60),
            jitter_seed: 0,
        }
    }
}

enum Mode {
    Live(Arc<dyn CompletionBackend>),
    Record {
        backend: Arc<dyn CompletionBackend>,
        store: RecordStore,
    },
    Replay(RecordStore),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GatewayStats {
    /// Attempts dispatched to a live backend.
    pub live_calls: u64,
    /// Requests answered from a recording.
    pub recorded_hits: u64,
}

pub struct Gateway {
    mode: Mode,
    retry: RetryPolicy,
    backoff: Backoff,
    limiter: Option<RateLimiter>,
    clock: Arc<dyn Clock>,
    live_calls: AtomicU64,
    recorded_hits: AtomicU64,
}

impl Gateway {
    pub fn live(
        backend: Arc<dyn CompletionBackend>,
        retry: RetryPolicy,
        rpm: Option<u32>,
        clock: Arc<dyn Clock>,
    ) -> Self {
        Self::with_mode(Mode::Live(backend), retry, rpm, clock)
    }

    pub fn record(
        backend: Arc<dyn CompletionBackend>,
        store: RecordStore,
        retry: RetryPolicy,
        rpm: Option<u32>,
        clock: Arc<dyn Clock>,
    ) -> Self {
        Self::with_mode(Mode::Record { backend, store }, retry, rpm, clock)
    }

    pub fn replay(store: RecordStore, clock: Arc<dyn Clock>) -> Self {
        Self::with_mode(Mode::Replay(store), RetryPolicy::default(), None, clock)
    }

    /// Opens a record session rooted at `run_dir/llm_cache`.
    pub fn record_session(
        run_dir: &std::path::Path,
        backend: Arc<dyn CompletionBackend>,
        retry: RetryPolicy,
        rpm: Option<u32>,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, GatewayError> {
        let store = RecordStore::open(&run_dir.join("llm_cache"))?;
        Ok(Self::record(backend, store, retry, rpm, clock))
    }

    /// Opens a replay session over `run_dir/llm_cache`.
    pub fn replay_session(
        run_dir: &std::path::Path,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, GatewayError> {
        let store = RecordStore::open_existing(&run_dir.join("llm_cache"))?;
        Ok(Self::replay(store, clock))
    }

    fn with_mode(mode: Mode, retry: RetryPolicy, rpm: Option<u32>, clock: Arc<dyn Clock>) -> Self {
        let backoff = Backoff::new(retry.base_delay, retry.max_delay, retry.jitter_seed);
        let limiter = rpm.map(|rpm| RateLimiter::per_minute(rpm, clock.clone()));
        Self {
            mode,
            retry,
            backoff,
            limiter,
            clock,
            live_calls: AtomicU64::new(0),
            recorded_hits: AtomicU64::new(0),
        }
    }

    pub fn stats(&self) -> GatewayStats {
        GatewayStats {
            live_calls: self.live_calls.load(Ordering::SeqCst),
            recorded_hits: self.recorded_hits.load(Ordering::SeqCst),
        }
    }

    /// The store behind a record or replay gateway.
    pub fn store(&self) -> Option<&RecordStore> {
        match &self.mode {
            Mode::Live(_) => None,
            Mode::Record { store, .. } | Mode::Replay(store) => Some(store),
        }
    }

    pub fn complete(&self, req: &PromptRequest) -> Result<RawResponse, GatewayError> {
        match &self.mode {
            Mode::Live(backend) => self.call_live(backend.as_ref(), req),
            Mode::Record { backend, store } => {
                let key = record_key_hex(req);
                if let Some(hit) = store.get(&key) {
                    self.recorded_hits.fetch_add(1, Ordering::SeqCst);
                    return Ok(hit.to_response());
                }
                let response = self.call_live(backend.as_ref(), req)?;
                store.append(RecordEntry {
                    key,
                    stage: req.stage,
                    doc_id: req.doc_id.clone(),
                    text: response.text.clone(),
                    backend_id: response.backend_id.clone(),
                    latency_ms: response.latency_ms,
                })?;
                Ok(response)
            }
            Mode::Replay(store) => {
                let key = record_key_hex(req);
                match store.get(&key) {
                    Some(hit) => {
                        self.recorded_hits.fetch_add(1, Ordering::SeqCst);
                        Ok(hit.to_response())
                    }
                    None => Err(GatewayError::ReplayMiss {
                        key,
                        stage: req.stage,
                        doc_id: req.doc_id.clone(),
                    }),
                }
            }
        }
    }

    fn call_live(
        &self,
        backend: &dyn CompletionBackend,
        req: &PromptRequest,
    ) -> Result<RawResponse, GatewayError> {
        let max_attempts = self.retry.budget + 1;
        let mut last: GatewayError = GatewayError::BackendError("no attempt made".into());
        let mut retry_after = None;
        for attempt in 1..=max_attempts {
            if attempt > 1 {
                let delay = self
                    .backoff
                    .delay(attempt - 1)
                    .max(retry_after.unwrap_or_default());
                self.clock.sleep(delay);
            }
            if let Some(limiter) = &self.limiter {
                limiter.acquire();
            }
            self.live_calls.fetch_add(1, Ordering::SeqCst);
            let started = self.clock.now();
            let outcome = backend.call(req);
            let latency_ms = (self.clock.now().saturating_sub(started)).as_millis() as u64;
            retry_after = None;
            match outcome {
                Ok(text) if !text.trim().is_empty() => {
                    tracing::info!(
                        stage = req.stage.number(),
                        doc_id = %req.doc_id,
                        attempt,
                        latency_ms,
                        "completion ok"
                    );
                    return Ok(RawResponse {
                        text,
                        backend_id: backend.backend_id(req.stage),
                        latency_ms,
                        attempt_count: attempt,
                    });
                }
                Ok(_) => last = GatewayError::BackendError("empty completion".into()),
                Err(CallError::Status {
                    code: 429,
                    retry_after: wait,
                    ..
                }) => {
                    retry_after = wait;
                    last = GatewayError::RateLimited { attempts: attempt };
                }
                Err(CallError::Status { code, message, .. }) if code >= 500 || code == 408 => {
                    last = GatewayError::BackendError(format!("status {code}: {message}"));
                }
                Err(CallError::Status { code, message, .. }) => {
                    tracing::error!(stage = req.stage.number(), doc_id = %req.doc_id, code, "non-retryable status");
                    return Err(GatewayError::BackendError(format!(
                        "status {code}: {message}"
                    )));
                }
                Err(CallError::Malformed(m)) => return Err(GatewayError::BackendError(m)),
                Err(CallError::Timeout) => last = GatewayError::Timeout { attempts: attempt },
                Err(CallError::Transport(e)) => last = GatewayError::BackendError(e),
            }
            tracing::warn!(
                stage = req.stage.number(),
                doc_id = %req.doc_id,
                attempt,
                latency_ms,
                error = %last,
                "completion attempt failed"
            );
        }
        Err(match last {
            GatewayError::RateLimited { .. } => GatewayError::RateLimited {
                attempts: max_attempts,
            },
            GatewayError::Timeout { .. } => GatewayError::Timeout {
                attempts: max_attempts,
            },
            other => other,
        })
    }
}
