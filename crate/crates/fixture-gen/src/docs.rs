//! Synthetic TEI documents and their answer keys.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use sdgpb_core::llm_gateway::scripted::{AnswerKey, Fault, FaultKind, KeyedPair};

const SDG_THEMES: [&str; 17] = [
    "cash transfer programmes for low-income households",
    "intensified crop production for food security",
    "expanded rural health clinics",
    "new school construction",
    "programmes for women's land tenure",
    "piped water and sanitation schemes",
    "rural electrification",
    "export-led manufacturing growth",
    "road and port infrastructure",
    "progressive income redistribution",
    "compact urban development",
    "circular procurement rules",
    "national emission reduction policies",
    "marine protected area networks",
    "forest restoration programmes",
    "anti-corruption reforms in permitting",
    "international climate finance",
];

const PB_THEMES: [&str; 9] = [
    "greenhouse gas emissions",
    "coastal water acidity",
    "ozone-depleting substance releases",
    "nitrogen and phosphorus runoff",
    "groundwater abstraction",
    "conversion of grassland and forest",
    "local species richness loss",
    "black carbon and sulphate aerosol loads",
    "plastic and pesticide pollution",
];

const FILLER: [&str; 8] = [
    "Data were collected through household surveys and remote sensing.",
    "The analysis combined panel regressions with field observations.",
    "Uncertainty ranges were estimated by bootstrapping over sites.",
    "Stakeholder interviews informed the interpretation of the trends.",
    "Results were robust to alternative model specifications.",
    "Further monitoring is needed to confirm long-term effects.",
    "The region has experienced rapid demographic change since 2000.",
    "Policy documents were coded by two independent reviewers.",
];

#[derive(Debug, Clone)]
pub struct FixtureDoc {
    pub doc_id: String,
    pub purpose: String,
    pub tei: String,
    pub key: Option<AnswerKey>,
}

#[derive(Debug, Serialize)]
pub struct ManifestEntry<'a> {
    pub doc_id: &'a str,
    pub file: String,
    pub purpose: &'a str,
}

struct Linked {
    sdg: u8,
    pb: u8,
    synergy: bool,
    label: &'static str,
    pb_drives: bool,
}

fn evidence_sentence(link: &Linked, rng: &mut ChaCha8Rng) -> String {
    let verb = if link.synergy { "lowered" } else { "raised" };
    let start = rng.random_range(1995..2012);
    format!(
        "Across the {} study sites, {} {verb} {} by {}% between {start} and {}.",
        rng.random_range(3..40),
        SDG_THEMES[link.sdg as usize - 1],
        PB_THEMES[link.pb as usize - 1],
        rng.random_range(4..60),
        start + rng.random_range(4..12),
    )
}

fn justification(link: &Linked) -> String {
    let effect = if link.synergy { "lowered" } else { "raised" };
    format!(
        "The article measures how {} {effect} {}.",
        SDG_THEMES[link.sdg as usize - 1],
        PB_THEMES[link.pb as usize - 1]
    )
}

fn pick_label(synergy: bool, rng: &mut ChaCha8Rng) -> &'static str {
    let roll = rng.random_range(0..100);
    match (synergy, roll) {
        (true, 0..60) => "Actual Synergy",
        (true, 60..85) => "Misled by Positivity",
        (true, _) => "Generality",
        (false, 0..45) => "Actual Trade-off",
        (false, 45..85) => "Double Negative",
        (false, _) => "Generic Negative Association",
    }
}

struct Blueprint {
    doc_id: String,
    purpose: String,
    sdgs: Vec<u8>,
    pbs: Vec<u8>,
    links: Vec<Linked>,
    faults: Vec<Fault>,
    fake_quote_for: Option<(u8, u8)>,
    headed_back_matter: bool,
}

fn random_links(sdgs: &[u8], pbs: &[u8], rng: &mut ChaCha8Rng) -> Vec<Linked> {
    let mut links = Vec::new();
    for &sdg in sdgs {
        for &pb in pbs {
            if rng.random_range(0..100) < 55 {
                let synergy = rng.random_range(0..100) < 45;
                links.push(Linked {
                    sdg,
                    pb,
                    synergy,
                    label: pick_label(synergy, rng),
                    pb_drives: rng.random_range(0..100) < 65,
                });
            }
        }
    }
    links
}

fn sample_ids(n: u8, k: usize, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let mut ids: Vec<u8> = index::sample(rng, n as usize, k)
        .into_iter()
        .map(|i| i as u8 + 1)
        .collect();
    ids.sort_unstable();
    ids
}

fn blueprint(
    doc_id: &str,
    purpose: &str,
    seed: u64,
    sdg_count: usize,
    pb_count: usize,
) -> Blueprint {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sdgs = sample_ids(17, sdg_count, &mut rng);
    let pbs = sample_ids(9, pb_count, &mut rng);
    let links = random_links(&sdgs, &pbs, &mut rng);
    Blueprint {
        doc_id: doc_id.into(),
        purpose: purpose.into(),
        sdgs,
        pbs,
        links,
        faults: Vec::new(),
        fake_quote_for: None,
        headed_back_matter: seed.is_multiple_of(3),
    }
}

fn fault(stage: u8, kind: FaultKind, times: u32) -> Fault {
    Fault { stage, kind, times }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn render(bp: Blueprint, seed: u64) -> FixtureDoc {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let id = &bp.doc_id;
    let themes: Vec<&str> = bp
        .sdgs
        .iter()
        .map(|&s| SDG_THEMES[s as usize - 1])
        .collect();
    let title = format!(
        "Field evidence on {} ({})",
        themes.first().copied().unwrap_or("regional change"),
        id
    );

    let mut results = Vec::new();
    let mut pairs = Vec::new();
    for link in &bp.links {
        let sentence = evidence_sentence(link, &mut rng);
        let quote = if bp.fake_quote_for == Some((link.sdg, link.pb)) {
            "Every site reported complete recovery of all ecosystems within a single season."
                .to_string()
        } else {
            sentence.clone()
        };
        results.push(sentence);
        pairs.push(KeyedPair {
            sdg: link.sdg,
            pb: link.pb,
            category: if link.synergy { "synergy" } else { "trade-off" }.into(),
            direction: if link.pb_drives { "PB->SDG" } else { "SDG->PB" }.into(),
            label: link.label.into(),
            justification: justification(link),
            evidence_quote: quote,
        });
    }
    let filler = |rng: &mut ChaCha8Rng, n: usize| -> String {
        (0..n)
            .map(|_| FILLER[rng.random_range(0..FILLER.len())])
            .collect::<Vec<_>>()
            .join(" ")
    };
    let intro = format!(
        "This study examines {} in a changing climate. {}",
        if themes.is_empty() {
            "land and water management".to_string()
        } else {
            themes.join(", ")
        },
        filler(&mut rng, 2)
    );
    let methods = filler(&mut rng, 3);
    let results_text = if results.is_empty() {
        filler(&mut rng, 2)
    } else {
        results.join(" ")
    };
    let discussion = filler(&mut rng, 2);

    let (ack, refs) = if bp.headed_back_matter {
        (
            format!("<div><head>Acknowledgements</head><p>SENTINEL-ACK-{id} We thank the field teams.</p></div>"),
            format!(
                "<div><head>References</head><listBibl><biblStruct><analytic><title>SENTINEL-BIB-{id} An earlier assessment</title></analytic></biblStruct></listBibl></div>"
            ),
        )
    } else {
        (
            format!("<div type=\"acknowledgement\"><p>SENTINEL-ACK-{id} Funded by a national research council.</p></div>"),
            format!(
                "<div type=\"references\"><listBibl><biblStruct><analytic><title>SENTINEL-BIB-{id} Regional baselines</title></analytic></biblStruct></listBibl></div>"
            ),
        )
    };

    let tei = format!(
        r#"<?xml version="1.0" encoding="UTF-8"?>
<TEI xmlns="http://www.tei-c.org/ns/1.0">
  <teiHeader>
    <fileDesc>
      <titleStmt><title level="a" type="main">{title}</title></titleStmt>
    </fileDesc>
  </teiHeader>
  <text>
    <body>
      <div><head>Introduction</head><p>{intro}</p></div>
      <div><head>Methods</head><p>{methods}</p></div>
      <div><head>Results</head><p>{results_text}</p>
        <figure><head>Figure 1</head><figDesc>SENTINEL-FIG-{id} Study area and sampling design.</figDesc></figure>
      </div>
      <div><head>Discussion</head><p>{discussion}</p></div>
    </body>
    <back>
      {ack}
      {refs}
    </back>
  </text>
</TEI>
"#,
        title = escape(&title),
        intro = escape(&intro),
        methods = escape(&methods),
        results_text = escape(&results_text),
        discussion = escape(&discussion),
    );

    FixtureDoc {
        doc_id: bp.doc_id.clone(),
        purpose: bp.purpose.clone(),
        tei,
        key: Some(AnswerKey {
            doc_id: bp.doc_id,
            sdgs: bp.sdgs,
            pbs: bp.pbs,
            pairs,
            faults: bp.faults,
        }),
    }
}

fn bibliography_only(doc_id: &str) -> FixtureDoc {
    let tei = format!(
        r#"<?xml version="1.0" encoding="UTF-8"?>
<TEI xmlns="http://www.tei-c.org/ns/1.0">
  <teiHeader><fileDesc><titleStmt><title level="a" type="main">Reference list only</title></titleStmt></fileDesc></teiHeader>
  <text>
    <body><figure><figDesc>SENTINEL-FIG-{doc_id} Scanned table.</figDesc></figure></body>
    <back><div type="references"><listBibl><biblStruct><analytic><title>SENTINEL-BIB-{doc_id} A cited work</title></analytic></biblStruct></listBibl></div></back>
  </text>
</TEI>
"#
    );
    FixtureDoc {
        doc_id: doc_id.into(),
        purpose: "no body text; rejected at ingest".into(),
        tei,
        key: None,
    }
}

/// The full fixture corpus, in a fixed order.
pub fn corpus() -> Vec<FixtureDoc> {
    let mut docs = Vec::new();
    for i in 1..=24u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(i);
        let sdg_count = rng.random_range(1..=4);
        let pb_count = rng.random_range(1..=3);
        let bp = blueprint(
            &format!("fx-{i:03}"),
            "regular document",
            100 + i,
            sdg_count,
            pb_count,
        );
        docs.push(render(bp, 100 + i));
    }

    let mut special = Vec::new();
    special.push(blueprint(
        "fx-batch-25",
        "5 x 5 pairs, two relationship batches",
        201,
        5,
        5,
    ));

    let mut bp = blueprint(
        "fx-empty-sdg",
        "no SDG allocated; complete with zero pairs",
        202,
        0,
        2,
    );
    bp.links.clear();
    special.push(bp);

    let mut bp = blueprint(
        "fx-malformed-once",
        "stage 1 reply malformed once, repaired",
        203,
        2,
        2,
    );
    bp.faults.push(fault(1, FaultKind::Malformed, 1));
    special.push(bp);

    let mut bp = blueprint("fx-schema-fail", "stage 3 reply never valid", 204, 2, 2);
    bp.faults.push(fault(3, FaultKind::Malformed, 3));
    special.push(bp);

    let mut bp = blueprint(
        "fx-cross-label-fail",
        "stage 5 keeps refining across categories",
        205,
        3,
        2,
    );
    bp.links.truncate(1);
    if bp.links.is_empty() {
        bp.links.push(Linked {
            sdg: bp.sdgs[0],
            pb: bp.pbs[0],
            synergy: true,
            label: "Actual Synergy",
            pb_drives: true,
        });
    }
    bp.faults.push(fault(5, FaultKind::CrossLabel, 3));
    special.push(bp);

    let mut bp = blueprint(
        "fx-cross-label-once",
        "stage 5 cross-category label once, then corrected",
        206,
        2,
        3,
    );
    bp.faults.push(fault(5, FaultKind::CrossLabel, 1));
    special.push(bp);

    let mut bp = blueprint(
        "fx-duplicate",
        "stage 3 conflicting duplicate once",
        207,
        2,
        2,
    );
    bp.faults.push(fault(3, FaultKind::ConflictingDuplicate, 1));
    special.push(bp);

    let mut bp = blueprint(
        "fx-rate-limited",
        "HTTP 429 twice on stage 2, then served",
        208,
        2,
        2,
    );
    bp.faults.push(fault(2, FaultKind::Http429, 2));
    special.push(bp);

    let mut bp = blueprint(
        "fx-fake-quote",
        "evidence quote absent from the text; downgraded",
        209,
        2,
        2,
    );
    if bp.links.is_empty() {
        bp.links.push(Linked {
            sdg: bp.sdgs[0],
            pb: bp.pbs[0],
            synergy: false,
            label: "Actual Trade-off",
            pb_drives: false,
        });
    }
    bp.fake_quote_for = Some((bp.links[0].sdg, bp.links[0].pb));
    special.push(bp);

    let mut bp = blueprint(
        "fx-both-direction",
        "stage 4 keeps answering both directions",
        210,
        2,
        2,
    );
    if bp.links.is_empty() {
        bp.links.push(Linked {
            sdg: bp.sdgs[0],
            pb: bp.pbs[0],
            synergy: false,
            label: "Double Negative",
            pb_drives: true,
        });
    }
    bp.faults.push(fault(4, FaultKind::BothDirection, 3));
    special.push(bp);

    let mut bp = blueprint("fx-omit-pair", "stage 3 omits a pair once", 211, 2, 3);
    bp.faults.push(fault(3, FaultKind::OmitPair, 1));
    special.push(bp);

    let mut bp = blueprint(
        "fx-unknown-category",
        "stage 3 unknown category once",
        212,
        3,
        1,
    );
    bp.faults.push(fault(3, FaultKind::UnknownCategory, 1));
    special.push(bp);

    for (n, bp) in special.into_iter().enumerate() {
        docs.push(render(bp, 300 + n as u64));
    }
    docs.push(bibliography_only("fx-bibliography-only"));
    docs
}
