//! Cursor-paginated client for the OpenAlex works endpoint.
//!
//! Every query is restricted to open-access works. Cursors handed out by a
//! client are remembered; a cursor the client never issued is rejected before
//! any request is made.

use std::collections::{BTreeMap, HashSet};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::CorpusError;
use crate::net::{Backoff, Clock, HttpRequest, HttpTransport, RateLimiter, TransportError};

pub const DEFAULT_BASE_URL: &str = "https://api.openalex.org";
pub const DEFAULT_PAGE_SIZE: u32 = 200;
const START_CURSOR: &str = "*";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkRecord {
    pub work_id: String,
    pub title: String,
    #[serde(default)]
    pub open_access_url: Option<String>,
    pub publication_year: i32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorksPage {
    pub records: Vec<WorkRecord>,
    pub next_cursor: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct OpenAlexConfig {
    pub base_url: String,
    /// Sent as `mailto` to join the polite pool.
    pub mailto: Option<String>,
    pub page_size: u32,
    pub retry_budget: u32,
    pub requests_per_minute: u32,
    pub jitter_seed: u64,
}

impl Default for OpenAlexConfig {
    fn default() -> Self {
        Self {
            base_url: DEFAULT_BASE_URL.to_string(),
            mailto: None,
            page_size: DEFAULT_PAGE_SIZE,
            retry_budget: 4,
            requests_per_minute: 600,
            jitter_seed: 0,
        }
    }
}

pub struct OpenAlexClient {
    config: OpenAlexConfig,
    transport: Arc<dyn HttpTransport>,
    clock: Arc<dyn Clock>,
    limiter: RateLimiter,
    backoff: Backoff,
    issued_cursors: Mutex<HashSet<String>>,
    seen_ids: Mutex<HashSet<String>>,
}

impl OpenAlexClient {
    pub fn new(
        config: OpenAlexConfig,
        transport: Arc<dyn HttpTransport>,
        clock: Arc<dyn Clock>,
    ) -> Self {
        let limiter = RateLimiter::per_minute(config.requests_per_minute.max(1), clock.clone());
        let backoff = Backoff::new(
            Duration::from_millis(500),
            Duration::from_secs(30),
            config.jitter_seed,
        );
        Self {
            config,
            transport,
            clock,
            limiter,
            backoff,
            issued_cursors: Mutex::new(HashSet::new()),
            seen_ids: Mutex::new(HashSet::new()),
        }
    }

    /// Fetches one page. `cursor` is `None` for the first page, then whatever
    /// the previous call returned. Work ids already returned by this client
    /// are dropped from later pages.
    pub fn fetch_works(
        &self,
        query: &str,
        filters: &BTreeMap<String, String>,
        cursor: Option<&str>,
    ) -> Result<WorksPage, CorpusError> {
        if query.trim().is_empty() {
            return Err(CorpusError::EmptyQuery);
        }
        let cursor = match cursor {
            None => START_CURSOR.to_string(),
            Some(c) if self.issued_cursors.lock().unwrap().contains(c) => c.to_string(),
            Some(c) => return Err(CorpusError::InvalidCursor(c.to_string())),
        };

        let url = self.works_url(query, filters, &cursor)?;
        let body = self.get_with_retry(&url, &cursor)?;
        let json: Value =
            serde_json::from_slice(&body).map_err(|e| CorpusError::Decode(e.to_string()))?;
        let results = json
            .get("results")
            .and_then(Value::as_array)
            .ok_or_else(|| CorpusError::Decode("missing results array".into()))?;

        let mut records = Vec::new();
        {
            let mut seen = self.seen_ids.lock().unwrap();
            for work in results {
                if let Some(record) = work_record(work) {
                    if seen.insert(record.work_id.clone()) {
                        records.push(record);
                    }
                }
            }
        }

        let next_cursor = if results.is_empty() {
            None
        } else {
            json.pointer("/meta/next_cursor")
                .and_then(Value::as_str)
                .map(str::to_string)
        };
        if let Some(next) = &next_cursor {
            self.issued_cursors.lock().unwrap().insert(next.clone());
        }
        Ok(WorksPage {
            records,
            next_cursor,
        })
    }

    /// Walks every page until the cursor runs out or `limit` records are held.
    pub fn fetch_all(
        &self,
        query: &str,
        filters: &BTreeMap<String, String>,
        limit: Option<usize>,
    ) -> Result<Vec<WorkRecord>, CorpusError> {
        let mut all = Vec::new();
        let mut cursor: Option<String> = None;
        loop {
            let page = self.fetch_works(query, filters, cursor.as_deref())?;
            all.extend(page.records);
            if let Some(limit) = limit {
                if all.len() >= limit {
                    all.truncate(limit);
                    break;
                }
            }
            match page.next_cursor {
                Some(next) => cursor = Some(next),
                None => break,
            }
        }
        Ok(all)
    }

    fn works_url(
        &self,
        query: &str,
        filters: &BTreeMap<String, String>,
        cursor: &str,
    ) -> Result<String, CorpusError> {
        let mut filter_parts: Vec<String> = filters
            .iter()
            .filter(|(k, _)| k.as_str() != "is_oa" && k.as_str() != "open_access.is_oa")
            .map(|(k, v)| format!("{k}:{v}"))
            .collect();
        filter_parts.push("open_access.is_oa:true".to_string());
        let mut params = vec![
            ("search", query.to_string()),
            ("filter", filter_parts.join(",")),
            ("per-page", self.config.page_size.to_string()),
            ("cursor", cursor.to_string()),
        ];
        if let Some(mail) = &self.config.mailto {
            params.push(("mailto", mail.clone()));
        }
        let base = format!("{}/works", self.config.base_url.trim_end_matches('/'));
        url::Url::parse_with_params(&base, &params)
            .map(|u| u.to_string())
            .map_err(|e| CorpusError::HttpFailure(e.to_string()))
    }

    fn get_with_retry(&self, url: &str, cursor: &str) -> Result<Vec<u8>, CorpusError> {
        let max_attempts = self.config.retry_budget + 1;
        let mut last_error = String::new();
        for attempt in 1..=max_attempts {
            if attempt > 1 {
                self.clock.sleep(self.backoff.delay(attempt - 1));
            }
            self.limiter.acquire();
            match self.transport.send(HttpRequest::get(url)) {
                Ok(resp) if resp.is_success() => return Ok(resp.body),
                Ok(resp) if resp.status == 429 => {
                    tracing::warn!(attempt, "scholarly API rate limited");
                    if attempt == max_attempts {
                        return Err(CorpusError::QuotaExceeded {
                            attempts: max_attempts,
                        });
                    }
                    if let Some(wait) = resp.retry_after() {
                        self.clock.sleep(wait);
                    }
                }
                Ok(resp) if resp.status >= 500 => {
                    last_error = format!("status {}", resp.status);
                    tracing::warn!(attempt, status = resp.status, "scholarly API server error");
                }
                Ok(resp) => {
                    let text = String::from_utf8_lossy(&resp.body).to_string();
                    if resp.status == 400 && text.to_ascii_lowercase().contains("cursor") {
                        return Err(CorpusError::InvalidCursor(cursor.to_string()));
                    }
                    return Err(CorpusError::HttpFailure(format!(
                        "status {}: {text}",
                        resp.status
                    )));
                }
                Err(TransportError::Timeout) => {
                    last_error = "timeout".into();
                    tracing::warn!(attempt, "scholarly API timeout");
                }
                Err(e) => {
                    last_error = e.to_string();
                    tracing::warn!(attempt, error = %e, "scholarly API transport failure");
                }
            }
        }
        Err(CorpusError::HttpFailure(last_error))
    }
}

/// Short id: `https://openalex.org/W123` → `W123`.
fn short_id(id: &str) -> &str {
    id.rsplit('/').next().unwrap_or(id)
}

fn work_record(work: &Value) -> Option<WorkRecord> {
    let is_oa = work
        .pointer("/open_access/is_oa")
        .and_then(Value::as_bool)
        .unwrap_or(false);
    if !is_oa {
        return None;
    }
    let work_id = short_id(work.get("id")?.as_str()?).to_string();
    let title = work
        .get("display_name")
        .or_else(|| work.get("title"))
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string();
    let open_access_url = work
        .pointer("/best_oa_location/pdf_url")
        .and_then(Value::as_str)
        .or_else(|| work.pointer("/open_access/oa_url").and_then(Value::as_str))
        .map(str::to_string);
    let publication_year = work
        .get("publication_year")
        .and_then(Value::as_i64)
        .unwrap_or_default() as i32;
    Some(WorkRecord {
        work_id,
        title,
        open_access_url,
        publication_year,
    })
}
