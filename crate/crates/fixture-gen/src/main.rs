//! Regenerates `fixtures/`: the synthetic TEI corpus, answer keys, recorded
//! replies and the golden outputs of a replayed run.
//!
//! ```text
//! cargo run -p sdgpb-fixture-gen -- --out fixtures
//! ```

mod docs;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::Parser;

use sdgpb_core::config::{BackendMode, RunConfig};
use sdgpb_core::net::SimClock;
use sdgpb_core::runner::{self, FIXTURE_CONFIG, GOLDEN_FILES};

const FIXTURE_TOML: &str = r#"# Bundled fixture corpus. Replays recorded replies; no network needed.
corpus_dir = "corpus"
run_dir = "run"
backend = "replay"
provider = "scripted"
cache_dir = "llm_cache"
answer_keys_dir = "answer_keys"
batch_cap = 20
worker_count = 4
"#;

#[derive(Parser)]
#[command(about = "Regenerate the fixture corpus, recordings and goldens")]
struct Args {
    /// Fixture directory to (re)write.
    #[arg(long, default_value = "fixtures")]
    out: PathBuf,
}

fn reset(dir: &Path) -> std::io::Result<()> {
    if dir.exists() {
        fs::remove_dir_all(dir)?;
    }
    fs::create_dir_all(dir)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args = Args::parse();
    let out = args.out;
    fs::create_dir_all(&out)?;
    for sub in ["corpus", "answer_keys", "llm_cache", "golden"] {
        reset(&out.join(sub))?;
    }

    let docs = docs::corpus();
    let mut manifest = String::new();
    for doc in &docs {
        let file = format!("{}.tei.xml", doc.doc_id);
        fs::write(out.join("corpus").join(&file), &doc.tei)?;
        if let Some(key) = &doc.key {
            let mut text = serde_json::to_string_pretty(key)?;
            text.push('\n');
            fs::write(
                out.join("answer_keys").join(format!("{}.json", doc.doc_id)),
                text,
            )?;
        }
        manifest.push_str(&serde_json::to_string(&docs::ManifestEntry {
            doc_id: &doc.doc_id,
            file,
            purpose: &doc.purpose,
        })?);
        manifest.push('\n');
    }
    fs::write(out.join("corpus").join("manifest.jsonl"), manifest)?;
    fs::write(out.join(FIXTURE_CONFIG), FIXTURE_TOML)?;
    fs::write(out.join(".gitignore"), "/run/\n")?;

    let mut config = RunConfig::load(&out.join(FIXTURE_CONFIG))?;
    let record_dir = tempfile::tempdir()?;
    config.backend = BackendMode::Record;
    config.run_dir = record_dir.path().to_path_buf();
    let recorded = runner::run_fixture(&config, Arc::new(SimClock::new()))?;
    println!(
        "recorded {} documents ({} live calls)",
        recorded.documents, recorded.live_calls
    );

    let replay_dir = tempfile::tempdir()?;
    config.backend = BackendMode::Replay;
    config.run_dir = replay_dir.path().to_path_buf();
    let replayed = runner::run_fixture(&config, Arc::new(SimClock::new()))?;
    assert_eq!(replayed.live_calls, 0);
    for (name, produced) in GOLDEN_FILES {
        let recorded_bytes = fs::read(record_dir.path().join(produced))?;
        let replayed_bytes = fs::read(replay_dir.path().join(produced))?;
        if recorded_bytes != replayed_bytes {
            return Err(format!("{name} differs between the recording run and its replay").into());
        }
        fs::write(out.join("golden").join(name), replayed_bytes)?;
    }
    println!(
        "goldens written: {} complete, {} failed, {} skipped",
        replayed.complete, replayed.failed, replayed.skipped
    );
    Ok(())
}
