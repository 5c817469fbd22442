//! End-to-end orchestration: ingest, the worker pool, aggregation, reports
//! and fixture validation. The command-line binary is a thin layer over this.
//!
//! Run directory layout:
//!
//! ```text
//! run_dir/
//!   corpus/documents.jsonl      clean documents
//!   corpus/issues.jsonl         files that could not be ingested
//!   checkpoints/checkpoints.jsonl
//!   results/results.jsonl
//!   llm_cache/stage{1..5}.jsonl recordings (unless cache_dir is set)
//!   aggregate/matrix.json
//!   report/{summary.json,matrix.csv,figure1.svg}
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::Serialize;
use thiserror::Error;

use crate::analytics::{self, AnalyticsError, InteractionMatrix};
use crate::config::{BackendMode, ConfigError, Provider, RunConfig};
use crate::corpus::openalex::{OpenAlexClient, OpenAlexConfig};
use crate::corpus::{self, extraction, CleanDocument, CorpusError};
use crate::llm_gateway::scripted::ScriptedBackend;
use crate::llm_gateway::{
    CompletionBackend, Gateway, GatewayError, GatewayStats, GeminiBackend, RecordStore,
    RetryPolicy, Stage,
};
use crate::net::{Clock, HttpTransport, ReqwestTransport};
use crate::pipeline::checkpoint::{CHECKPOINT_FILE, RESULTS_FILE};
use crate::pipeline::{
    CheckpointStore, DocOutcome, DocumentResult, DocumentStatus, Pipeline, PipelineError,
    PipelineSettings, PromptBuilder, ResultStore, TemplateSet,
};
use crate::reporting::{self, ReportError, Style};
use crate::taxonomy::Catalog;

pub const DOCUMENTS_FILE: &str = "corpus/documents.jsonl";
pub const ISSUES_FILE: &str = "corpus/issues.jsonl";
pub const MATRIX_FILE: &str = "aggregate/matrix.json";
pub const FIXTURE_CONFIG: &str = "fixtures.toml";

/// Files compared by fixture validation: (golden name, path under the run dir).
pub const GOLDEN_FILES: [(&str, &str); 5] = [
    ("results.jsonl", RESULTS_FILE),
    ("matrix.json", MATRIX_FILE),
    ("summary.json", "report/summary.json"),
    ("matrix.csv", "report/matrix.csv"),
    ("figure1.svg", "report/figure1.svg"),
];

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{} output(s) differ from the goldens: {}", .0.len(), .0.join(", "))]
    GoldenMismatch(Vec<String>),
}

impl RunError {
    pub fn kind(&self) -> &'static str {
        match self {
            RunError::Config(_) => "ConfigError",
            RunError::MissingInput(_) => "MissingInput",
            RunError::Corpus(_) => "CorpusError",
            RunError::Gateway(_) => "BackendError",
            RunError::Pipeline(PipelineError::Backend(_)) => "BackendError",
            RunError::Pipeline(_) => "PipelineError",
            RunError::Analytics(AnalyticsError::EmptyMatrix) => "EmptyMatrix",
            RunError::Analytics(_) => "AnalyticsError",
            RunError::Report(_) => "ReportError",
            RunError::Io { .. } => "IoError",
            RunError::GoldenMismatch(_) => "GoldenMismatch",
        }
    }

    /// 2 configuration, 3 input, 4 backend, 5 golden mismatch.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Gateway(_) | RunError::Pipeline(PipelineError::Backend(_)) => 4,
            RunError::Corpus(CorpusError::HttpFailure(_) | CorpusError::QuotaExceeded { .. }) => 4,
            RunError::GoldenMismatch(_) => 5,
            _ => 3,
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> RunError {
    RunError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

pub fn load_catalog(config: &RunConfig) -> Result<Catalog, RunError> {
    match &config.catalog_path {
        Some(path) => {
            Catalog::from_path(path).map_err(|e| ConfigError::Invalid(e.to_string()).into())
        }
        None => Ok(Catalog::embedded().clone()),
    }
}

pub fn build_prompts(config: &RunConfig) -> Result<PromptBuilder, RunError> {
    let templates = match &config.template_dir {
        Some(dir) => TemplateSet::from_dir(dir).map_err(|e| ConfigError::Invalid(e.to_string()))?,
        None => TemplateSet::embedded(),
    };
    let mut prompts = PromptBuilder::new(templates, load_catalog(config)?);
    for params in &mut prompts.decode {
        params.temperature = config.temperature;
    }
    Ok(prompts)
}

fn live_backend(config: &RunConfig) -> Result<Arc<dyn CompletionBackend>, RunError> {
    match config.provider {
        Provider::Gemini => {
            let key = config.api_key()?;
            let transport = ReqwestTransport::new(Duration::from_secs(config.request_timeout_secs))
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
            Ok(Arc::new(GeminiBackend::new(
                config.gemini_base_url.clone(),
                key,
                config.models.clone(),
                Arc::new(transport),
            )))
        }
        Provider::Scripted => {
            let dir = config.answer_keys_dir.clone().ok_or_else(|| {
                ConfigError::Invalid("the scripted provider needs answer_keys_dir".into())
            })?;
            if !dir.is_dir() {
                return Err(RunError::MissingInput(format!(
                    "answer keys {}",
                    dir.display()
                )));
            }
            Ok(Arc::new(ScriptedBackend::new(dir)))
        }
    }
}

pub fn build_gateway(config: &RunConfig, clock: Arc<dyn Clock>) -> Result<Gateway, RunError> {
    let retry = RetryPolicy {
        budget: config.retry_budget,
        jitter_seed: config.jitter_seed,
        ..RetryPolicy::default()
    };
    let cache = config.cache_dir();
    match config.backend {
        BackendMode::Replay => {
            if !cache.is_dir() {
                return Err(ConfigError::Invalid(format!(
                    "replay mode needs an existing recording directory, {} not found",
                    cache.display()
                ))
                .into());
            }
            Ok(Gateway::replay(RecordStore::open_existing(&cache)?, clock))
        }
        BackendMode::Record => {
            let backend = live_backend(config)?;
            let store = RecordStore::open(&cache)?;
            Ok(Gateway::record(
                backend,
                store,
                retry,
                config.rpm_limit,
                clock,
            ))
        }
        BackendMode::Live => Ok(Gateway::live(
            live_backend(config)?,
            retry,
            config.rpm_limit,
            clock,
        )),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IngestSummary {
    pub documents: usize,
    pub issues: Vec<(String, String)>,
}

/// Parses the corpus and writes the clean-document store under `run_dir`.
pub fn ingest(
    corpus_dir: &Path,
    run_dir: &Path,
) -> Result<(Vec<CleanDocument>, IngestSummary), RunError> {
    if !corpus_dir.is_dir() {
        return Err(RunError::MissingInput(format!(
            "corpus directory {}",
            corpus_dir.display()
        )));
    }
    let (docs, issues) = corpus::ingest_dir(corpus_dir)?;
    corpus::write_jsonl(&run_dir.join(DOCUMENTS_FILE), &docs)?;
    let issues: Vec<(String, String)> = issues
        .into_iter()
        .map(|i| {
            let name = i
                .path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            (name, i.error.to_string())
        })
        .collect();
    corpus::write_jsonl(&run_dir.join(ISSUES_FILE), &issues)?;
    tracing::info!(
        documents = docs.len(),
        issues = issues.len(),
        "ingest complete"
    );
    let summary = IngestSummary {
        documents: docs.len(),
        issues,
    };
    Ok((docs, summary))
}

type StopHook = dyn Fn(&str, Stage) -> bool + Send + Sync;

/// Ways to stop a run at the next stage boundary.
#[derive(Clone, Default)]
pub struct RunControl {
    /// Set from outside (e.g. on Ctrl-C) to stop every worker.
    pub halt: Arc<AtomicBool>,
    pub stop_hook: Option<Arc<StopHook>>,
}

impl RunControl {
    pub fn stop_after(doc_id: impl Into<String>, stage: Stage) -> Self {
        let doc_id = doc_id.into();
        Self {
            halt: Arc::default(),
            stop_hook: Some(Arc::new(move |d: &str, s: Stage| d == doc_id && s == stage)),
        }
    }

    fn should_stop(&self, doc_id: &str, stage: Stage) -> bool {
        self.halt.load(Ordering::SeqCst)
            || self
                .stop_hook
                .as_ref()
                .is_some_and(|hook| hook(doc_id, stage))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RunSummary {
    pub documents: usize,
    pub complete: usize,
    pub failed: usize,
    pub skipped: usize,
    pub interrupted: bool,
    pub live_calls: u64,
    pub recorded_hits: u64,
}

/// Runs the pipeline over the corpus. A fresh run discards earlier
/// checkpoints and results; otherwise finished documents are kept and
/// unfinished ones continue from their checkpoints.
pub fn run_pipeline(
    config: &RunConfig,
    gateway: &Gateway,
    prompts: &PromptBuilder,
    fresh: bool,
    control: &RunControl,
) -> Result<RunSummary, RunError> {
    let run_dir = &config.run_dir;
    if fresh {
        for file in [CHECKPOINT_FILE, RESULTS_FILE] {
            let path = run_dir.join(file);
            if path.exists() {
                fs::remove_file(&path).map_err(|e| io_err(&path, e))?;
            }
        }
    }
    let (docs, _) = ingest(&config.corpus_dir, run_dir)?;
    let version = prompts.templates.version();
    let checkpoints = CheckpointStore::open(run_dir, version)?;
    let results = ResultStore::open(run_dir, version)?;
    let pending: Vec<&CleanDocument> = docs
        .iter()
        .filter(|d| !results.contains(&d.doc_id))
        .collect();
    tracing::info!(
        documents = docs.len(),
        pending = pending.len(),
        template_version = version,
        "starting run"
    );

    let pipeline = Pipeline::new(
        gateway,
        prompts,
        &checkpoints,
        PipelineSettings {
            batch_cap: config.batch_cap,
        },
    );
    let next = AtomicUsize::new(0);
    let stopped = AtomicBool::new(false);
    let first_error: Mutex<Option<RunError>> = Mutex::new(None);
    let fail = |e: RunError| {
        stopped.store(true, Ordering::SeqCst);
        first_error.lock().unwrap().get_or_insert(e);
    };
    let stop = |doc_id: &str, stage: Stage| {
        stopped.load(Ordering::SeqCst) || control.should_stop(doc_id, stage)
    };

    std::thread::scope(|scope| {
        for _ in 0..config.worker_count.min(pending.len().max(1)) {
            scope.spawn(|| loop {
                if stopped.load(Ordering::SeqCst) || control.halt.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(doc) = pending.get(i) else { break };
                match pipeline.process_document(doc, &stop) {
                    Ok(DocOutcome::Finished(result)) => {
                        tracing::info!(doc_id = %result.doc_id, status = ?result.status, "document finished");
                        if let Err(e) = results.append(result) {
                            fail(e.into());
                        }
                    }
                    Ok(DocOutcome::Interrupted { stage }) => {
                        tracing::info!(doc_id = %doc.doc_id, stage = stage.number(), "stopped at stage boundary");
                        stopped.store(true, Ordering::SeqCst);
                    }
                    Err(e) => fail(e.into()),
                }
            });
        }
    });
    if let Some(e) = first_error.into_inner().unwrap() {
        return Err(e);
    }

    let stats: GatewayStats = gateway.stats();
    let interrupted = results.len() < docs.len();
    let mut summary = RunSummary {
        documents: docs.len(),
        interrupted,
        live_calls: stats.live_calls,
        recorded_hits: stats.recorded_hits,
        ..RunSummary::default()
    };
    if !interrupted {
        for result in results.finalize()? {
            match result.status {
                DocumentStatus::Complete => summary.complete += 1,
                DocumentStatus::Failed { .. } => summary.failed += 1,
                DocumentStatus::Skipped { .. } => summary.skipped += 1,
            }
        }
        if config.backend == BackendMode::Record {
            if let Some(store) = gateway.store() {
                store.compact()?;
            }
        }
    }
    tracing::info!(?summary, "run finished");
    Ok(summary)
}

pub fn load_results(run_dir: &Path) -> Result<Vec<DocumentResult>, RunError> {
    let path = run_dir.join(RESULTS_FILE);
    if !path.exists() {
        return Err(RunError::MissingInput(format!(
            "results store {}",
            path.display()
        )));
    }
    Ok(ResultStore::load(&path)?)
}

/// Builds the matrix from the results store and writes `aggregate/matrix.json`.
pub fn aggregate(run_dir: &Path) -> Result<InteractionMatrix, RunError> {
    let results = load_results(run_dir)?;
    let records = analytics::flatten(&results)?;
    let matrix = analytics::build_matrix(&records, analytics::complete_docs(&results))?;
    if matrix.total_records == 0 {
        return Err(AnalyticsError::EmptyMatrix.into());
    }
    write_file(
        &run_dir.join(MATRIX_FILE),
        &reporting::matrix_json(&matrix)?,
    )?;
    tracing::info!(
        records = matrix.total_records,
        docs = matrix.total_docs,
        "aggregate written"
    );
    Ok(matrix)
}

pub fn load_matrix(path: &Path) -> Result<InteractionMatrix, RunError> {
    let text = fs::read_to_string(path)
        .map_err(|_| RunError::MissingInput(format!("matrix {}", path.display())))?;
    let matrix: InteractionMatrix = serde_json::from_str(&text).map_err(|e| io_err(path, e))?;
    matrix.validate()?;
    Ok(matrix)
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportPaths {
    pub summary: PathBuf,
    pub csv: PathBuf,
    pub figure: PathBuf,
}

pub fn write_reports(
    matrix: &InteractionMatrix,
    catalog: &Catalog,
    out_dir: &Path,
) -> Result<ReportPaths, RunError> {
    let paths = ReportPaths {
        summary: out_dir.join("summary.json"),
        csv: out_dir.join("matrix.csv"),
        figure: out_dir.join("figure1.svg"),
    };
    write_file(&paths.summary, &reporting::summary_json(matrix, catalog)?)?;
    write_file(&paths.csv, &reporting::matrix_csv(matrix)?)?;
    let spec = reporting::figure_spec(matrix, catalog)?;
    write_file(
        &paths.figure,
        &reporting::render_svg(&spec, Style::embedded()),
    )?;
    Ok(paths)
}

#[derive(Debug, Clone, Serialize)]
pub struct FetchSummary {
    pub works: usize,
    pub converted: usize,
    pub failed: usize,
}

/// Queries OpenAlex, downloads open-access PDFs and converts them to TEI in
/// `corpus_dir`. The work list goes to `corpus_dir/manifest.jsonl`.
pub fn fetch(
    config: &RunConfig,
    transport: Arc<dyn HttpTransport>,
    clock: Arc<dyn Clock>,
) -> Result<FetchSummary, RunError> {
    let settings = &config.openalex;
    let client = OpenAlexClient::new(
        OpenAlexConfig {
            base_url: settings.base_url.clone(),
            mailto: settings.mailto.clone(),
            retry_budget: config.retry_budget,
            jitter_seed: config.jitter_seed,
            ..OpenAlexConfig::default()
        },
        transport.clone(),
        clock,
    );
    let works = client.fetch_all(&settings.query, &settings.filters, Some(settings.limit))?;
    let dir = &config.corpus_dir;
    corpus::write_jsonl(&dir.join("manifest.jsonl"), &works)?;
    let grobid = extraction::ExtractionClient::new(settings.grobid_url.clone(), transport.clone());
    let mut summary = FetchSummary {
        works: works.len(),
        converted: 0,
        failed: 0,
    };
    for work in &works {
        let Some(url) = &work.open_access_url else {
            summary.failed += 1;
            continue;
        };
        let id = work
            .work_id
            .rsplit('/')
            .next()
            .unwrap_or(&work.work_id)
            .to_string();
        let converted = extraction::download(transport.as_ref(), url).and_then(|pdf| {
            write_file(&dir.join("pdf").join(format!("{id}.pdf")), &pdf)
                .map_err(|e| CorpusError::Decode(e.to_string()))?;
            grobid.pdf_to_tei(&format!("{id}.pdf"), pdf)
        });
        match converted {
            Ok(tei) => {
                write_file(&dir.join(format!("{id}.tei.xml")), &tei)?;
                summary.converted += 1;
            }
            Err(error) => {
                tracing::warn!(work_id = %work.work_id, %error, "could not fetch full text");
                summary.failed += 1;
            }
        }
    }
    Ok(summary)
}

/// Replays the fixture corpus into `work_dir` and compares every output with
/// the goldens. Returns the golden file names that differ.
pub fn validate_fixtures(
    fixtures_dir: &Path,
    work_dir: &Path,
    clock: Arc<dyn Clock>,
) -> Result<Vec<String>, RunError> {
    let mut config = RunConfig::load(&fixtures_dir.join(FIXTURE_CONFIG))?;
    config.backend = BackendMode::Replay;
    config.run_dir = work_dir.to_path_buf();
    config.report_dir = None;
    run_fixture(&config, clock)?;
    let golden = fixtures_dir.join("golden");
    let mut mismatches = Vec::new();
    for (name, produced) in GOLDEN_FILES {
        let expected = fs::read(golden.join(name)).map_err(|e| io_err(&golden.join(name), e))?;
        let actual =
            fs::read(work_dir.join(produced)).map_err(|e| io_err(&work_dir.join(produced), e))?;
        if expected != actual {
            mismatches.push(name.to_string());
        }
    }
    Ok(mismatches)
}

/// Fresh run, aggregate and report with `config`.
pub fn run_fixture(config: &RunConfig, clock: Arc<dyn Clock>) -> Result<RunSummary, RunError> {
    let prompts = build_prompts(config)?;
    let gateway = build_gateway(config, clock)?;
    let summary = run_pipeline(config, &gateway, &prompts, true, &RunControl::default())?;
    let matrix = aggregate(&config.run_dir)?;
    write_reports(&matrix, &prompts.catalog, &config.report_dir())?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(
            RunError::Config(ConfigError::Invalid("x".into())).exit_code(),
            2
        );
        assert_eq!(RunError::MissingInput("x".into()).exit_code(), 3);
        assert_eq!(
            RunError::Analytics(AnalyticsError::EmptyMatrix).exit_code(),
            3
        );
        assert_eq!(
            RunError::Gateway(GatewayError::RateLimited { attempts: 5 }).exit_code(),
            4
        );
        assert_eq!(
            RunError::Pipeline(PipelineError::Backend("miss".into())).exit_code(),
            4
        );
        assert_eq!(RunError::GoldenMismatch(vec!["a".into()]).exit_code(), 5);
    }

    #[test]
    fn replay_needs_cache() {
        let dir = tempfile::tempdir().unwrap();
        let config = RunConfig {
            run_dir: dir.path().join("run"),
            ..RunConfig::default()
        };
        let Err(err) = build_gateway(&config, Arc::new(crate::net::SimClock::new())) else {
            panic!("replay without a recording directory was accepted");
        };
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn aggregate_without_records_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            aggregate(dir.path()),
            Err(RunError::MissingInput(_))
        ));
        write_file(&dir.path().join(RESULTS_FILE), b"").unwrap();
        assert!(matches!(
            aggregate(dir.path()),
            Err(RunError::Analytics(AnalyticsError::EmptyMatrix))
        ));
    }
}
