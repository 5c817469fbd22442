//! Acceptance gate. Runs each criterion, prints one PASS/FAIL line per
//! criterion and exits non-zero if any failed.
//!
//! ```text
//! cargo test -p sdgpb --test acceptance
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sdgpb_core::analytics::{
    self, axis_proportions, build_matrix, cell_proportions, directionality_share,
    global_proportions, merge, normalize_bars, presence_share, ratio_to_global, InteractionMatrix,
    InteractionRecord,
};
use sdgpb_core::config::{BackendMode, RunConfig};
use sdgpb_core::corpus;
use sdgpb_core::llm_gateway::{
    record_key_hex, CallError, CompletionBackend, Gateway, GeminiBackend, PromptRequest,
    RecordStore, RetryPolicy, Stage,
};
use sdgpb_core::net::{Clock, FailingTransport, RateLimiter, SimClock};
use sdgpb_core::pipeline::{
    self, chunk_pairs, parse, DocumentResult, DocumentStatus, Pair, DEFAULT_BATCH_CAP,
};
use sdgpb_core::runner::{self, RunControl, FIXTURE_CONFIG, GOLDEN_FILES};
use sdgpb_core::taxonomy::{Category, Direction, GoalId, PbId, ReportBucket, SdgId};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn fixture_config(run_dir: &Path) -> RunConfig {
    let mut config = RunConfig::load(&fixtures_dir().join(FIXTURE_CONFIG)).expect("fixture config");
    config.backend = BackendMode::Replay;
    config.run_dir = run_dir.to_path_buf();
    config
}

fn read(path: &Path) -> Vec<u8> {
    fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn golden(name: &str) -> Vec<u8> {
    read(&fixtures_dir().join("golden").join(name))
}

fn outputs(run_dir: &Path) -> BTreeMap<&'static str, Vec<u8>> {
    GOLDEN_FILES
        .iter()
        .map(|(name, rel)| (*name, read(&run_dir.join(rel))))
        .collect()
}

// AC1 -------------------------------------------------------------------

fn ac1_determinism() -> Check {
    let started = Instant::now();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let docs_a = runner::run_fixture(&fixture_config(a.path()), Arc::new(SimClock::new()))
        .map_err(|e| e.to_string())?;
    runner::run_fixture(&fixture_config(b.path()), Arc::new(SimClock::new()))
        .map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    ensure(docs_a.documents >= 30, || {
        format!("only {} fixture documents", docs_a.documents)
    })?;
    let (oa, ob) = (outputs(a.path()), outputs(b.path()));
    for (name, bytes) in &oa {
        ensure(*bytes == ob[name], || {
            format!("{name} differs between two runs")
        })?;
        ensure(*bytes == golden(name), || {
            format!("{name} differs from the golden")
        })?;
    }
    ensure(elapsed < Duration::from_secs(60), || {
        format!("two runs took {elapsed:?}")
    })?;
    Ok(format!(
        "{} docs, {} outputs byte-identical across runs and goldens, {:.2}s for two runs",
        docs_a.documents,
        oa.len(),
        elapsed.as_secs_f64()
    ))
}

// AC2 -------------------------------------------------------------------

fn records_with(counts: &[(ReportBucket, usize)], sdg: i64, pb: i64) -> Vec<InteractionRecord> {
    let mut out = Vec::new();
    for &(bucket, n) in counts {
        for _ in 0..n {
            let i = out.len();
            out.push(InteractionRecord {
                doc_id: format!("doc-{i}"),
                sdg: SdgId::new(sdg).unwrap(),
                pb: PbId::new(pb).unwrap(),
                category: bucket.category(),
                bucket,
                direction: (bucket.category() != Category::Neutral).then_some(Direction::PbToSdg),
            });
        }
    }
    out
}

fn within(
    label: &str,
    got: f64,
    want: f64,
    tol: f64,
    failures: &mut Vec<String>,
    notes: &mut Vec<String>,
) {
    let line = format!("{label} {:.4} (want {want} ±{tol})", got);
    if (got - want).abs() <= tol {
        notes.push(line);
    } else {
        failures.push(line);
    }
}

fn ac2_published_arithmetic() -> Check {
    const PP: f64 = 0.0005;
    let mut failures = Vec::new();
    let mut notes = Vec::new();

    // Category shares: 338 synergy, 449 trade-off, 195 neutral links.
    let category_set = records_with(
        &[
            (ReportBucket::TS, 338),
            (ReportBucket::TT, 449),
            (ReportBucket::NeutralBucket, 195),
        ],
        1,
        1,
    );
    let m = build_matrix(&category_set, category_set.len() as u64).map_err(|e| e.to_string())?;
    let g = global_proportions(&m).map_err(|e| e.to_string())?;
    within("synergy", g.synergy, 0.338, PP, &mut failures, &mut notes);
    within(
        "trade-off",
        g.tradeoff,
        0.449,
        PP,
        &mut failures,
        &mut notes,
    );
    within("neutral", g.neutral, 0.195, PP, &mut failures, &mut notes);

    // Bucket shares: 283 TS and 211 TT per 1000 links.
    let bucket_set = records_with(
        &[
            (ReportBucket::TS, 283),
            (ReportBucket::DP, 40),
            (ReportBucket::GenericPositive, 15),
            (ReportBucket::TT, 211),
            (ReportBucket::DN, 200),
            (ReportBucket::GenericNegative, 56),
            (ReportBucket::NeutralBucket, 195),
        ],
        1,
        1,
    );
    let m = build_matrix(&bucket_set, bucket_set.len() as u64).map_err(|e| e.to_string())?;
    let g = global_proportions(&m).map_err(|e| e.to_string())?;
    within("TS", g.buckets.ts, 0.283, PP, &mut failures, &mut notes);
    within("TT", g.buckets.tt, 0.211, PP, &mut failures, &mut notes);

    // PB2-SDG14 cell: 755 of 1000 links are trade-offs, 975 of 1000 trade-offs DN.
    let cell_set = records_with(
        &[
            (ReportBucket::DN, 736),
            (ReportBucket::TT, 19),
            (ReportBucket::TS, 150),
            (ReportBucket::NeutralBucket, 95),
        ],
        14,
        2,
    );
    let m = build_matrix(&cell_set, 1000).map_err(|e| e.to_string())?;
    let cell =
        cell_proportions(&m, SdgId::new(14).unwrap(), PbId::new(2).unwrap()).ok_or("empty cell")?;
    within(
        "PB2-SDG14 trade-off",
        cell.tradeoff,
        0.755,
        PP,
        &mut failures,
        &mut notes,
    );
    ensure(analytics::percent(cell.tradeoff) == "75.5%", || {
        "display is not 75.5%".into()
    })?;
    let ratio = ratio_to_global(cell.tradeoff, 0.449).map_err(|e| e.to_string())?;
    within(
        "ratio to global",
        ratio,
        1.68,
        0.005,
        &mut failures,
        &mut notes,
    );

    let dn_set = records_with(&[(ReportBucket::DN, 975), (ReportBucket::TT, 25)], 14, 2);
    let m = build_matrix(&dn_set, 1000).map_err(|e| e.to_string())?;
    let dn = cell_proportions(&m, SdgId::new(14).unwrap(), PbId::new(2).unwrap())
        .and_then(|s| s.dn_of_tradeoff)
        .ok_or("no trade-offs")?;
    within("DN of trade-offs", dn, 0.975, PP, &mut failures, &mut notes);

    if failures.is_empty() {
        Ok(notes.join("; "))
    } else {
        Err(format!(
            "{} (338+449+195 = 982 links, so category shares over a three-way partition cannot hit all three targets); passed: {}",
            failures.join("; "),
            notes.join("; ")
        ))
    }
}

// AC3 -------------------------------------------------------------------

fn random_records(rng: &mut ChaCha8Rng) -> Vec<InteractionRecord> {
    let target = rng.random_range(0..=10_000usize);
    let docs = (target / 4).max(1);
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(target);
    while out.len() < target {
        let doc = rng.random_range(0..docs);
        let sdg = rng.random_range(1..=17);
        let pb = rng.random_range(1..=9);
        if !seen.insert((doc, sdg, pb)) {
            if seen.len() >= docs * 153 {
                break;
            }
            continue;
        }
        let bucket = ReportBucket::ALL[rng.random_range(0..7)];
        let direction = match (bucket, rng.random_range(0..10)) {
            (ReportBucket::NeutralBucket, _) => None,
            (_, 0) => None,
            (_, r) if r < 7 => Some(Direction::PbToSdg),
            _ => Some(Direction::SdgToPb),
        };
        out.push(InteractionRecord {
            doc_id: format!("d{doc}"),
            sdg: SdgId::new(sdg).unwrap(),
            pb: PbId::new(pb).unwrap(),
            category: bucket.category(),
            bucket,
            direction,
        });
    }
    out
}

/// Straight recount from the records, sharing no code with the library.
struct Oracle {
    cell: HashMap<(u8, u8, ReportBucket), u64>,
    cell_dir: HashMap<(u8, u8, Direction), u64>,
    sdg_docs: HashMap<u8, HashSet<String>>,
    pb_docs: HashMap<u8, HashSet<String>>,
    total: u64,
}

impl Oracle {
    fn new(records: &[InteractionRecord]) -> Self {
        let mut o = Oracle {
            cell: HashMap::new(),
            cell_dir: HashMap::new(),
            sdg_docs: HashMap::new(),
            pb_docs: HashMap::new(),
            total: 0,
        };
        for r in records {
            let (s, p) = (r.sdg.get(), r.pb.get());
            *o.cell.entry((s, p, r.bucket)).or_default() += 1;
            if let Some(d) = r.direction {
                *o.cell_dir.entry((s, p, d)).or_default() += 1;
            }
            o.sdg_docs.entry(s).or_default().insert(r.doc_id.clone());
            o.pb_docs.entry(p).or_default().insert(r.doc_id.clone());
            o.total += 1;
        }
        o
    }

    fn count(&self, sdgs: &[u8], pbs: &[u8], buckets: &[ReportBucket]) -> u64 {
        let mut n = 0;
        for &s in sdgs {
            for &p in pbs {
                for &b in buckets {
                    n += self.cell.get(&(s, p, b)).copied().unwrap_or(0);
                }
            }
        }
        n
    }

    fn dir(&self, sdgs: &[u8], pbs: &[u8], d: Direction) -> u64 {
        let mut n = 0;
        for &s in sdgs {
            for &p in pbs {
                n += self.cell_dir.get(&(s, p, d)).copied().unwrap_or(0);
            }
        }
        n
    }
}

const SYN: [ReportBucket; 3] = [
    ReportBucket::TS,
    ReportBucket::DP,
    ReportBucket::GenericPositive,
];
const TRD: [ReportBucket; 3] = [
    ReportBucket::TT,
    ReportBucket::DN,
    ReportBucket::GenericNegative,
];

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12
}

fn check_shares(
    o: &Oracle,
    sdgs: &[u8],
    pbs: &[u8],
    got: Option<analytics::Shares>,
    what: &str,
) -> Result<(), String> {
    let n = o.count(sdgs, pbs, &ReportBucket::ALL);
    let Some(s) = got else {
        return ensure(n == 0, || format!("{what}: shares missing for {n} links"));
    };
    ensure(s.links == n, || format!("{what}: links {} vs {n}", s.links))?;
    let f = |k: u64| k as f64 / n as f64;
    let syn = o.count(sdgs, pbs, &SYN);
    let trd = o.count(sdgs, pbs, &TRD);
    let dn = o.count(sdgs, pbs, &[ReportBucket::DN]);
    let mut pairs = vec![
        (s.synergy, f(syn)),
        (s.tradeoff, f(trd)),
        (
            s.neutral,
            f(o.count(sdgs, pbs, &[ReportBucket::NeutralBucket])),
        ),
        (s.tradeoff_excluding_dn, f(trd - dn)),
    ];
    for b in ReportBucket::ALL {
        pairs.push((s.buckets.get(b), f(o.count(sdgs, pbs, &[b]))));
    }
    let opt = |x: Option<f64>, num: u64, den: u64| -> bool {
        match x {
            None => den == 0,
            Some(v) => den > 0 && close(v, num as f64 / den as f64),
        }
    };
    ensure(pairs.iter().all(|&(a, b)| close(a, b)), || {
        format!("{what}: share mismatch")
    })?;
    let ts = o.count(sdgs, pbs, &[ReportBucket::TS]);
    let dp = o.count(sdgs, pbs, &[ReportBucket::DP]);
    let tt = o.count(sdgs, pbs, &[ReportBucket::TT]);
    let pb_side = o.dir(sdgs, pbs, Direction::PbToSdg);
    let directed = pb_side + o.dir(sdgs, pbs, Direction::SdgToPb);
    ensure(
        opt(s.ts_of_synergy, ts, syn)
            && opt(s.dp_of_synergy, dp, syn)
            && opt(s.tt_of_tradeoff, tt, trd)
            && opt(s.dn_of_tradeoff, dn, trd)
            && opt(s.pb_to_sdg_of_directed, pb_side, directed),
        || format!("{what}: within-category share mismatch"),
    )?;
    let sum = s.synergy + s.neutral + s.tradeoff;
    let bucket_sum: f64 = ReportBucket::ALL.iter().map(|&b| s.buckets.get(b)).sum();
    ensure(close(sum, 1.0) && close(bucket_sum, 1.0), || {
        format!("{what}: shares do not sum to 1")
    })
}

fn check_matrix(
    records: &[InteractionRecord],
    m: &InteractionMatrix,
    docs: u64,
) -> Result<(), String> {
    let o = Oracle::new(records);
    let all_s: Vec<u8> = (1..=17).collect();
    let all_p: Vec<u8> = (1..=9).collect();
    ensure(m.total_records == o.total, || "total_records".into())?;
    for s in 1..=17u8 {
        for p in 1..=9u8 {
            let counts = m.cell(SdgId::new(s as i64).unwrap(), PbId::new(p as i64).unwrap());
            for b in ReportBucket::ALL {
                ensure(counts.bucket(b) == o.count(&[s], &[p], &[b]), || {
                    format!("cell {s}/{p} {b:?}")
                })?;
            }
            check_shares(
                &o,
                &[s],
                &[p],
                cell_proportions(
                    m,
                    SdgId::new(s as i64).unwrap(),
                    PbId::new(p as i64).unwrap(),
                ),
                "cell",
            )?;
        }
    }
    for s in 1..=17u8 {
        let id = SdgId::new(s as i64).unwrap();
        let present = o.sdg_docs.get(&s).map_or(0, HashSet::len) as u64;
        ensure(m.presence(GoalId::Sdg(id)) == present, || {
            format!("presence SDG{s}")
        })?;
        ensure(
            close(
                presence_share(m, GoalId::Sdg(id)).unwrap(),
                present as f64 / docs as f64,
            ),
            || "presence share".into(),
        )?;
        check_shares(
            &o,
            &[s],
            &all_p,
            axis_proportions(m, GoalId::Sdg(id)),
            "row",
        )?;
        let counts: Vec<u64> = (1..=9u8)
            .map(|p| o.count(&[s], &[p], &ReportBucket::ALL))
            .collect();
        let max = *counts.iter().max().unwrap();
        match normalize_bars(m, id) {
            Ok(bars) => {
                ensure(max > 0, || "bars for an empty panel".into())?;
                for (bar, c) in bars.iter().zip(&counts) {
                    ensure(close(*bar, *c as f64 / max as f64), || {
                        format!("bar SDG{s}")
                    })?;
                }
                ensure(bars.iter().copied().fold(0.0, f64::max) == 1.0, || {
                    "max bar is not 1".into()
                })?;
            }
            Err(_) => ensure(max == 0, || format!("EmptyPanel for non-empty SDG{s}"))?,
        }
    }
    for p in 1..=9u8 {
        let id = PbId::new(p as i64).unwrap();
        let present = o.pb_docs.get(&p).map_or(0, HashSet::len) as u64;
        ensure(m.presence(GoalId::Pb(id)) == present, || {
            format!("presence PB{p}")
        })?;
        check_shares(
            &o,
            &all_s,
            &[p],
            axis_proportions(m, GoalId::Pb(id)),
            "column",
        )?;
    }
    check_shares(&o, &all_s, &all_p, global_proportions(m).ok(), "global")?;
    let pb_side = o.dir(&all_s, &all_p, Direction::PbToSdg);
    let directed = pb_side + o.dir(&all_s, &all_p, Direction::SdgToPb);
    match directionality_share(records) {
        Ok(v) => ensure(
            directed > 0 && close(v, pb_side as f64 / directed as f64),
            || "directionality".into(),
        ),
        Err(_) => ensure(directed == 0, || {
            "NoDirectedRecords with directed records".into()
        }),
    }
}

fn ac3_aggregation_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut total_records = 0usize;
    for trial in 0..1000 {
        let mut records = random_records(&mut rng);
        total_records += records.len();
        let docs: BTreeSet<&str> = records.iter().map(|r| r.doc_id.as_str()).collect();
        let n_docs = docs.len() as u64 + rng.random_range(0..5);
        let m = build_matrix(&records, n_docs).map_err(|e| format!("trial {trial}: {e}"))?;
        check_matrix(&records, &m, n_docs).map_err(|e| format!("trial {trial}: {e}"))?;

        let doc_split: HashSet<String> = docs
            .iter()
            .filter(|_| rng.random_bool(0.5))
            .map(|d| d.to_string())
            .collect();
        let (a, b): (Vec<_>, Vec<_>) = records
            .iter()
            .cloned()
            .partition(|r| doc_split.contains(&r.doc_id));
        let docs_a = a.iter().map(|r| &r.doc_id).collect::<HashSet<_>>().len() as u64;
        let merged = merge(
            &build_matrix(&a, docs_a).unwrap(),
            &build_matrix(&b, n_docs - docs_a).unwrap(),
        )
        .map_err(|e| e.to_string())?;
        ensure(merged == m, || {
            format!("trial {trial}: merge differs from a single build")
        })?;

        records.shuffle(&mut rng);
        ensure(build_matrix(&records, n_docs).unwrap() == m, || {
            format!("trial {trial}: order changed the matrix")
        })?;
    }
    Ok(format!("1000 multisets ({total_records} records) match a brute-force recount; merge and permutation invariant"))
}

// AC4 -------------------------------------------------------------------

fn ac4_batching() -> Check {
    for n in 0..=200usize {
        let items: Vec<usize> = (0..n).collect();
        for cap in 1..=20usize {
            let batches = chunk_pairs(&items, cap);
            ensure(
                batches.iter().all(|b| !b.is_empty() && b.len() <= cap),
                || format!("n={n} cap={cap}: size"),
            )?;
            let flat: Vec<usize> = batches.concat();
            ensure(flat == items, || {
                format!("n={n} cap={cap}: not an ordered partition")
            })?;
            let distinct: HashSet<usize> = flat.iter().copied().collect();
            ensure(distinct.len() == n, || format!("n={n} cap={cap}: overlap"))?;
            ensure(batches.len() == n.div_ceil(cap), || {
                format!("n={n} cap={cap}: batch count")
            })?;
        }
    }
    ensure(DEFAULT_BATCH_CAP == 20, || "default cap is not 20".into())?;
    ensure(RunConfig::default().batch_cap == 20, || {
        "config default cap is not 20".into()
    })?;
    Ok(
        "201 pair counts x 20 caps: disjoint, ordered, complete, each batch <= cap; default cap 20"
            .into(),
    )
}

// AC5 -------------------------------------------------------------------

fn golden_results() -> Vec<DocumentResult> {
    let text = String::from_utf8(golden("results.jsonl")).unwrap();
    text.lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn ac5_pipeline_integrity() -> Check {
    let results = golden_results();
    let mut complete = 0;
    for r in &results {
        if r.status != DocumentStatus::Complete {
            continue;
        }
        complete += 1;
        let expected: BTreeSet<Pair> = pipeline::pair_candidates(&r.sdgs, &r.pbs)
            .into_iter()
            .collect();
        let got: BTreeSet<Pair> = r.pairs.iter().map(|p| p.pair()).collect();
        ensure(got == expected && r.pairs.len() == expected.len(), || {
            format!("{}: pairs != sdgs x pbs", r.doc_id)
        })?;
        for p in &r.pairs {
            let linked = p.category != Category::Neutral;
            ensure(
                p.direction.is_some() == linked && p.refined.is_some() == linked,
                || format!("{}: {} direction/refinement presence", r.doc_id, p.pair()),
            )?;
            if let Some(label) = p.refined {
                ensure(label.parent() == p.category, || {
                    format!("{}: cross-category label", r.doc_id)
                })?;
            }
        }
    }
    let adversarial = results
        .iter()
        .find(|r| r.doc_id == "fx-cross-label-fail")
        .ok_or("adversarial fixture missing")?;
    ensure(
        matches!(&adversarial.status, DocumentStatus::Failed { stage: Stage::Reasoner, reason, .. } if reason == "IllegalRefinement"),
        || format!("adversarial fixture ended as {:?}", adversarial.status),
    )?;
    let pair = Pair::new(SdgId::new(2).unwrap(), PbId::new(6).unwrap());
    let reply = r#"{"pairs":[{"sdg":2,"pb":6,"label":"Actual Synergy"}]}"#;
    ensure(
        matches!(
            parse::parse_reasoner(reply, &[(pair, Category::TradeOff)]),
            Err(parse::ParseError::IllegalRefinement { .. })
        ),
        || "trade-off relabelled as synergy was accepted".into(),
    )?;
    Ok(format!("{complete} complete results consistent; cross-category refinement fails with IllegalRefinement"))
}

// AC6 -------------------------------------------------------------------

/// Serves replies from the fixture recordings and keeps every prompt it sees.
struct Spy {
    store: RecordStore,
    prompts: Mutex<Vec<String>>,
}

impl CompletionBackend for Spy {
    fn backend_id(&self, _: Stage) -> String {
        "spy".into()
    }

    fn call(&self, req: &PromptRequest) -> Result<String, CallError> {
        self.prompts
            .lock()
            .unwrap()
            .push(format!("{}\n{}", req.system_text, req.user_text));
        self.store
            .get(&record_key_hex(req))
            .map(|e| e.text)
            .ok_or_else(|| CallError::Malformed("not recorded".into()))
    }
}

fn ac6_pruning() -> Check {
    let corpus_dir = fixtures_dir().join("corpus");
    let mut planted = 0;
    for entry in fs::read_dir(&corpus_dir).unwrap() {
        let path = entry.unwrap().path();
        if path.to_string_lossy().ends_with(".tei.xml") {
            let text = fs::read_to_string(&path).unwrap();
            planted += text.matches("SENTINEL-").count();
        }
    }
    ensure(planted >= 90, || {
        format!("only {planted} sentinels planted")
    })?;

    let (docs, _) = corpus::ingest_dir(&corpus_dir).map_err(|e| e.to_string())?;
    for d in &docs {
        ensure(
            !d.body_text.contains("SENTINEL") && !d.title.contains("SENTINEL"),
            || format!("{} leaks a sentinel", d.doc_id),
        )?;
    }

    let run = tempfile::tempdir().unwrap();
    let config = fixture_config(run.path());
    let spy = Arc::new(Spy {
        store: RecordStore::open_existing(&config.cache_dir()).map_err(|e| e.to_string())?,
        prompts: Mutex::new(Vec::new()),
    });
    let gateway = Gateway::live(
        spy.clone(),
        RetryPolicy::default(),
        None,
        Arc::new(SimClock::new()),
    );
    let prompts = runner::build_prompts(&config).map_err(|e| e.to_string())?;
    runner::run_pipeline(&config, &gateway, &prompts, true, &RunControl::default())
        .map_err(|e| e.to_string())?;
    let seen = spy.prompts.lock().unwrap();
    ensure(seen.len() > 100, || {
        format!("only {} prompts captured", seen.len())
    })?;
    ensure(seen.iter().all(|p| !p.contains("SENTINEL")), || {
        "a prompt contains a sentinel".into()
    })?;
    let stored = fs::read_to_string(run.path().join(runner::DOCUMENTS_FILE)).unwrap();
    ensure(!stored.contains("SENTINEL"), || {
        "clean-document store contains a sentinel".into()
    })?;
    Ok(format!(
        "{planted} planted sentinels; none in {} clean documents or {} prompts",
        docs.len(),
        seen.len()
    ))
}

// AC7 -------------------------------------------------------------------

fn ac7_resume_equivalence() -> Check {
    let docs: Vec<String> = golden_results().into_iter().map(|r| r.doc_id).collect();
    let mut interrupts = 0;
    for doc in &docs {
        for stage in Stage::ALL {
            let run = tempfile::tempdir().unwrap();
            let config = fixture_config(run.path());
            let prompts = runner::build_prompts(&config).map_err(|e| e.to_string())?;
            let gateway = runner::build_gateway(&config, Arc::new(SimClock::new()))
                .map_err(|e| e.to_string())?;
            let first = runner::run_pipeline(
                &config,
                &gateway,
                &prompts,
                true,
                &RunControl::stop_after(doc.as_str(), stage),
            )
            .map_err(|e| e.to_string())?;
            if first.interrupted {
                interrupts += 1;
                let gateway = runner::build_gateway(&config, Arc::new(SimClock::new()))
                    .map_err(|e| e.to_string())?;
                let resumed = runner::run_pipeline(
                    &config,
                    &gateway,
                    &prompts,
                    false,
                    &RunControl::default(),
                )
                .map_err(|e| e.to_string())?;
                ensure(!resumed.interrupted, || {
                    format!("{doc}:{stage:?} resume did not finish")
                })?;
            }
            let matrix = runner::aggregate(run.path()).map_err(|e| e.to_string())?;
            runner::write_reports(&matrix, &prompts.catalog, &config.report_dir())
                .map_err(|e| e.to_string())?;
            for (name, bytes) in outputs(run.path()) {
                ensure(bytes == golden(name), || {
                    format!("{doc} stopped after {stage:?}: {name} differs")
                })?;
            }
        }
    }
    ensure(interrupts >= docs.len() * 3, || {
        format!("only {interrupts} runs were actually interrupted")
    })?;
    Ok(format!(
        "{} stop points ({} interrupted mid-run) resume to byte-identical outputs",
        docs.len() * 5,
        interrupts
    ))
}

// AC8 -------------------------------------------------------------------

fn attr(node: roxmltree::Node, name: &str) -> f64 {
    node.attribute(name)
        .and_then(|v| v.parse().ok())
        .unwrap_or_else(|| panic!("missing numeric attribute {name}"))
}

fn check_svg(bytes: &[u8]) -> Result<usize, String> {
    let text = std::str::from_utf8(bytes).map_err(|e| e.to_string())?;
    let doc = roxmltree::Document::parse(text).map_err(|e| format!("not XML: {e}"))?;
    let panels: Vec<_> = doc
        .descendants()
        .filter(|n| n.attribute("class") == Some("panel"))
        .collect();
    ensure(panels.len() == 17, || format!("{} panels", panels.len()))?;
    let mut non_empty_bars = 0;
    for panel in panels {
        let bars: Vec<_> = panel
            .children()
            .filter(|n| n.attribute("class") == Some("bar"))
            .collect();
        ensure(bars.len() == 9, || {
            format!("{} bars in a panel", bars.len())
        })?;
        let mut max_len: f64 = 0.0;
        let mut any = false;
        for bar in bars {
            if attr(bar, "data-links") == 0.0 {
                continue;
            }
            any = true;
            non_empty_bars += 1;
            max_len = max_len.max(attr(bar, "data-length"));
            let (s, n, t) = (
                attr(bar, "data-synergy"),
                attr(bar, "data-neutral"),
                attr(bar, "data-tradeoff"),
            );
            ensure((s + n + t - 1.0).abs() <= 1e-9, || {
                format!("stacked shares sum to {}", s + n + t)
            })?;
            ensure(
                attr(bar, "data-ts") <= s && attr(bar, "data-tt") <= t,
                || "overlay share exceeds segment".into(),
            )?;
            let width = |class: &str| {
                bar.children()
                    .find(|c| c.attribute("class") == Some(class))
                    .map(|c| attr(c, "width"))
                    .unwrap_or(0.0)
            };
            ensure(
                width("ts") <= width("synergy") && width("tt") <= width("tradeoff"),
                || "overlay wider than its segment".into(),
            )?;
        }
        if any {
            ensure(max_len == 1.0, || format!("panel max bar {max_len}"))?;
        }
    }
    Ok(non_empty_bars)
}

fn ac8_figure_structure() -> Check {
    let bars = check_svg(&golden("figure1.svg"))?;

    // A denser synthetic matrix to exercise every panel.
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let records = random_records(&mut rng);
    let m = build_matrix(&records, 5000).map_err(|e| e.to_string())?;
    let spec = sdgpb_core::reporting::figure_spec(&m, sdgpb_core::taxonomy::Catalog::embedded())
        .map_err(|e| e.to_string())?;
    let svg = sdgpb_core::reporting::render_svg(&spec, sdgpb_core::reporting::Style::embedded());
    let dense = check_svg(&svg)?;
    Ok(format!(
        "17 panels x 9 bars; {bars} fixture and {dense} synthetic non-empty bars sum to 1, overlays within segments, panel max 1"
    ))
}

// AC9 -------------------------------------------------------------------

/// Largest number of instants inside any half-open window of `window`.
fn busiest_window(times: &[Duration], window: Duration) -> usize {
    let mut best = 0;
    for (i, &start) in times.iter().enumerate() {
        let n = times[i..]
            .iter()
            .take_while(|&&t| t < start + window)
            .count();
        best = best.max(n);
    }
    best
}

struct Stamping {
    clock: Arc<SimClock>,
    times: Mutex<Vec<Duration>>,
}

impl CompletionBackend for Stamping {
    fn backend_id(&self, _: Stage) -> String {
        "stamping".into()
    }

    fn call(&self, _: &PromptRequest) -> Result<String, CallError> {
        self.times.lock().unwrap().push(self.clock.now());
        self.clock.advance(Duration::from_millis(150));
        Ok("{}".into())
    }
}

fn ac9_rate_limit_and_replay() -> Check {
    let clock = Arc::new(SimClock::new());
    let limiter = RateLimiter::per_minute(60, clock.clone());
    let mut times = Vec::new();
    for i in 0..500 {
        times.push(limiter.acquire());
        clock.advance(Duration::from_millis(if i % 7 == 0 { 2500 } else { 90 }));
    }
    let busiest = busiest_window(&times, Duration::from_secs(60));
    ensure(busiest <= 60, || {
        format!("limiter let {busiest} requests into one minute")
    })?;

    let backend = Arc::new(Stamping {
        clock: clock.clone(),
        times: Mutex::new(Vec::new()),
    });
    let gateway = Gateway::live(
        backend.clone(),
        RetryPolicy::default(),
        Some(30),
        clock.clone(),
    );
    for i in 0..200 {
        let req = PromptRequest::new(
            Stage::SdgAllocation,
            format!("d{i}"),
            "s",
            "u",
            sdgpb_core::pipeline::prompts::default_decode_params()[0],
        );
        gateway.complete(&req).map_err(|e| e.to_string())?;
    }
    let gw_busiest = busiest_window(&backend.times.lock().unwrap(), Duration::from_secs(60));
    ensure(gw_busiest <= 30, || {
        format!("gateway sent {gw_busiest} requests in one minute at rpm 30")
    })?;

    let run = tempfile::tempdir().unwrap();
    let config = fixture_config(run.path());
    let prompts = runner::build_prompts(&config).map_err(|e| e.to_string())?;
    let replay =
        runner::build_gateway(&config, Arc::new(SimClock::new())).map_err(|e| e.to_string())?;
    runner::run_pipeline(&config, &replay, &prompts, true, &RunControl::default())
        .map_err(|e| e.to_string())?;
    ensure(replay.stats().live_calls == 0, || {
        "replay made live calls".into()
    })?;
    ensure(replay.stats().recorded_hits > 100, || {
        "replay served too few recordings".into()
    })?;

    let network = Arc::new(FailingTransport::new());
    let models = config.models.clone();
    let guarded = Gateway::record(
        Arc::new(GeminiBackend::new(
            "http://127.0.0.1:9",
            "unused",
            models,
            network.clone(),
        )),
        RecordStore::open_existing(&config.cache_dir()).map_err(|e| e.to_string())?,
        RetryPolicy::default(),
        config.rpm_limit,
        Arc::new(SimClock::new()),
    );
    let run2 = tempfile::tempdir().unwrap();
    let mut config2 = config.clone();
    config2.run_dir = run2.path().to_path_buf();
    runner::run_pipeline(&config2, &guarded, &prompts, true, &RunControl::default())
        .map_err(|e| e.to_string())?;
    ensure(network.calls() == 0, || {
        format!("{} network calls during replay", network.calls())
    })?;
    ensure(
        read(&run2.path().join(pipeline::checkpoint::RESULTS_FILE)) == golden("results.jsonl"),
        || "results behind a failing network differ from the goldens".into(),
    )?;
    Ok(format!(
        "busiest minute {busiest}/60 (limiter), {gw_busiest}/30 (gateway); replay served {} recordings with 0 network calls",
        replay.stats().recorded_hits
    ))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("AC1 end-to-end determinism", ac1_determinism),
        ("AC2 published-figure arithmetic", ac2_published_arithmetic),
        ("AC3 aggregation oracle", ac3_aggregation_oracle),
        ("AC4 batching fuzz", ac4_batching),
        ("AC5 pipeline integrity", ac5_pipeline_integrity),
        ("AC6 pruning", ac6_pruning),
        ("AC7 resume equivalence", ac7_resume_equivalence),
        ("AC8 figure structure", ac8_figure_structure),
        ("AC9 rate limiter and replay", ac9_rate_limit_and_replay),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        let started = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(format!("panic: {msg}"))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name} ({secs:.1}s): {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
