//! `sdgpb` command-line entry point.
//!
//! Every subcommand prints a JSON summary on stdout when it succeeds. On
//! failure it prints `{"error": <kind>, "message": <text>, "exit_code": <n>}`
//! on stderr and exits with 2 (configuration), 3 (input), 4 (backend) or
//! 5 (golden mismatch). Logs are JSON lines on stderr.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::Ordering;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use tracing_subscriber::EnvFilter;

use sdgpb_core::config::{BackendMode, ConfigError, RunConfig};
use sdgpb_core::llm_gateway::Stage;
use sdgpb_core::net::{ReqwestTransport, SystemClock};
use sdgpb_core::runner::{self, RunControl, RunError, MATRIX_FILE};

#[derive(Parser)]
#[command(
    name = "sdgpb",
    version,
    about = "Mine SDG / planetary-boundary interactions from scholarly full texts"
)]
struct Cli {
    /// TOML run configuration. Built-in defaults apply when omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,

    /// Log filter, e.g. `info` or `sdgpb_core=debug`. Overrides RUST_LOG.
    #[arg(long, global = true)]
    log: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct PathArgs {
    /// Directory of `*.tei.xml` files.
    #[arg(long)]
    corpus_dir: Option<PathBuf>,
    /// Directory for checkpoints, results and reports.
    #[arg(long)]
    run_dir: Option<PathBuf>,
}

#[derive(Args, Clone, Default)]
struct RunArgs {
    #[command(flatten)]
    paths: PathArgs,
    /// live, record or replay.
    #[arg(long)]
    backend: Option<String>,
    /// Recording directory (default: RUN_DIR/llm_cache).
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Maximum pairs per stage 3-5 request.
    #[arg(long)]
    batch_cap: Option<usize>,
    /// Documents processed in parallel.
    #[arg(long)]
    workers: Option<usize>,
    /// Requests per minute sent to the model API.
    #[arg(long)]
    rpm: Option<u32>,
    /// Stop after DOC_ID finishes STAGE (1-5), e.g. `fx-001:3`.
    #[arg(long, value_name = "DOC_ID:STAGE")]
    stop_after: Option<String>,
    /// Also write the aggregate matrix and reports when the run completes.
    #[arg(long)]
    report: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Query OpenAlex, download open-access PDFs and convert them to TEI.
    Fetch {
        #[command(flatten)]
        paths: PathArgs,
        /// Search query (overrides the config).
        #[arg(long)]
        query: Option<String>,
        /// Maximum number of works.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Parse and prune the TEI corpus into RUN_DIR/corpus/documents.jsonl.
    Ingest {
        #[command(flatten)]
        paths: PathArgs,
    },
    /// Process every document from scratch.
    Run(RunArgs),
    /// Continue an interrupted run from its checkpoints.
    Resume(RunArgs),
    /// Build the interaction matrix from the results store.
    Aggregate {
        #[arg(long)]
        run_dir: Option<PathBuf>,
    },
    /// Write summary.json, matrix.csv and figure1.svg.
    Report {
        #[arg(long)]
        run_dir: Option<PathBuf>,
        /// Matrix JSON to report on (default: RUN_DIR/aggregate/matrix.json).
        #[arg(long)]
        matrix: Option<PathBuf>,
        /// Output directory (default: RUN_DIR/report).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replay the bundled fixture corpus and compare with the goldens.
    ValidateFixtures {
        #[arg(long, default_value = "fixtures")]
        fixtures: PathBuf,
        /// Scratch run directory (default: FIXTURES/run).
        #[arg(long)]
        work_dir: Option<PathBuf>,
    },
}

fn init_logging(filter: Option<&str>) {
    let filter = match filter {
        Some(f) => EnvFilter::new(f),
        None => EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")),
    };
    let _ = tracing_subscriber::fmt()
        .json()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, RunError> {
    match path {
        Some(path) => Ok(RunConfig::load(path)?),
        None => Ok(RunConfig::default()),
    }
}

fn apply_paths(config: &mut RunConfig, paths: &PathArgs) {
    if let Some(dir) = &paths.corpus_dir {
        config.corpus_dir = dir.clone();
    }
    if let Some(dir) = &paths.run_dir {
        config.run_dir = dir.clone();
    }
}

fn apply_run_args(config: &mut RunConfig, args: &RunArgs) -> Result<(), RunError> {
    apply_paths(config, &args.paths);
    if let Some(backend) = &args.backend {
        config.backend = backend.parse::<BackendMode>()?;
    }
    if let Some(dir) = &args.cache_dir {
        config.cache_dir = Some(dir.clone());
    }
    if let Some(cap) = args.batch_cap {
        config.batch_cap = cap;
    }
    if let Some(workers) = args.workers {
        config.worker_count = workers;
    }
    if let Some(rpm) = args.rpm {
        config.rpm_limit = Some(rpm);
    }
    config.validate()?;
    Ok(())
}

fn parse_stop_after(spec: &str) -> Result<(String, Stage), RunError> {
    let invalid =
        || ConfigError::Invalid(format!("--stop-after expects DOC_ID:STAGE, got {spec:?}"));
    let (doc, stage) = spec.rsplit_once(':').ok_or_else(invalid)?;
    let stage = stage
        .parse::<u8>()
        .ok()
        .and_then(Stage::from_number)
        .ok_or_else(invalid)?;
    Ok((doc.to_string(), stage))
}

fn run(config: &RunConfig, args: &RunArgs, fresh: bool) -> Result<serde_json::Value, RunError> {
    let prompts = runner::build_prompts(config)?;
    let gateway = runner::build_gateway(config, Arc::new(SystemClock::new()))?;
    let control = match &args.stop_after {
        Some(spec) => {
            let (doc, stage) = parse_stop_after(spec)?;
            RunControl::stop_after(doc, stage)
        }
        None => RunControl::default(),
    };
    let halt = control.halt.clone();
    let _ = ctrlc::set_handler(move || {
        tracing::warn!("interrupt received, stopping at the next stage boundary");
        halt.store(true, Ordering::SeqCst);
    });
    let summary = runner::run_pipeline(config, &gateway, &prompts, fresh, &control)?;
    let mut out = json!({ "run": summary });
    if args.report && !summary.interrupted {
        let matrix = runner::aggregate(&config.run_dir)?;
        out["report"] = json!(runner::write_reports(
            &matrix,
            &prompts.catalog,
            &config.report_dir()
        )?);
    }
    Ok(out)
}

fn execute(cli: Cli) -> Result<serde_json::Value, RunError> {
    let config_path = cli.config.as_deref();
    match cli.command {
        Command::Fetch {
            paths,
            query,
            limit,
        } => {
            let mut config = load_config(config_path)?;
            apply_paths(&mut config, &paths);
            if let Some(q) = query {
                config.openalex.query = q;
            }
            if let Some(l) = limit {
                config.openalex.limit = l;
            }
            let transport = ReqwestTransport::new(Duration::from_secs(config.request_timeout_secs))
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
            let summary =
                runner::fetch(&config, Arc::new(transport), Arc::new(SystemClock::new()))?;
            Ok(json!({ "fetch": summary }))
        }
        Command::Ingest { paths } => {
            let mut config = load_config(config_path)?;
            apply_paths(&mut config, &paths);
            let (_, summary) = runner::ingest(&config.corpus_dir, &config.run_dir)?;
            Ok(json!({ "ingest": summary }))
        }
        Command::Run(args) => {
            let mut config = load_config(config_path)?;
            apply_run_args(&mut config, &args)?;
            run(&config, &args, true)
        }
        Command::Resume(args) => {
            let mut config = load_config(config_path)?;
            apply_run_args(&mut config, &args)?;
            run(&config, &args, false)
        }
        Command::Aggregate { run_dir } => {
            let mut config = load_config(config_path)?;
            if let Some(dir) = run_dir {
                config.run_dir = dir;
            }
            let matrix = runner::aggregate(&config.run_dir)?;
            Ok(json!({
                "aggregate": {
                    "matrix": config.run_dir.join(MATRIX_FILE),
                    "total_docs": matrix.total_docs,
                    "total_records": matrix.total_records,
                }
            }))
        }
        Command::Report {
            run_dir,
            matrix,
            out,
        } => {
            let mut config = load_config(config_path)?;
            if let Some(dir) = run_dir {
                config.run_dir = dir;
            }
            let matrix_path = matrix.unwrap_or_else(|| config.run_dir.join(MATRIX_FILE));
            let m = runner::load_matrix(&matrix_path)?;
            let catalog = runner::load_catalog(&config)?;
            let out = out.unwrap_or_else(|| config.report_dir());
            Ok(json!({ "report": runner::write_reports(&m, &catalog, &out)? }))
        }
        Command::ValidateFixtures { fixtures, work_dir } => {
            let work_dir = work_dir.unwrap_or_else(|| fixtures.join("run"));
            let mismatches =
                runner::validate_fixtures(&fixtures, &work_dir, Arc::new(SystemClock::new()))?;
            if !mismatches.is_empty() {
                return Err(RunError::GoldenMismatch(mismatches));
            }
            Ok(json!({ "validate_fixtures": "ok", "work_dir": work_dir }))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.log.as_deref());
    match execute(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let code = e.exit_code();
            eprintln!(
                "{}",
                json!({ "error": e.kind(), "message": e.to_string(), "exit_code": code })
            );
            ExitCode::from(code as u8)
        }
    }
}
