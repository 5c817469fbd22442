//! Tables and the stacked-bar figure.
//!
//! Every output here is a pure function of an [`InteractionMatrix`], so
//! re-running the report over an unchanged results store gives the same bytes.
//!
//! Figure layout: one panel per SDG (ascending), each with nine horizontal
//! bars, one per PB. A bar's length is its link count over the panel's largest
//! count. Inside a bar the synergy, neutral and trade-off shares are stacked
//! left to right; TS and TT are drawn as darker overlays at the start of the
//! synergy and trade-off segments, so DP, DN and the generic buckets make up
//! the lighter remainder. A thin bar above each panel shows the fraction of
//! documents mentioning the SDG.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{
    self, axis_proportions, cell_proportions, global_proportions, matrix_directionality_share,
    normalize_bars, presence_share, ratio_to_global, AnalyticsError, Counts, InteractionMatrix,
    Shares,
};
use crate::taxonomy::{Catalog, GoalId, PbId, SdgId};

const EMBEDDED_STYLE: &str = include_str!("../data/style.json");

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error("invalid style: {0}")]
    Style(String),
    #[error("serialization failed: {0}")]
    Serialize(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub columns: usize,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelStyle {
    pub width: f64,
    pub height: f64,
    pub label_width: f64,
    pub count_width: f64,
    pub title_height: f64,
    pub presence_height: f64,
    pub presence_gap: f64,
    pub bar_height: f64,
    pub bar_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Font {
    pub family: String,
    pub title_size: f64,
    pub label_size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Colors {
    pub background: String,
    pub text: String,
    pub synergy: String,
    pub synergy_dark: String,
    pub neutral: String,
    pub tradeoff: String,
    pub tradeoff_dark: String,
    pub presence: String,
    pub presence_track: String,
    pub empty_bar: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Style {
    pub grid: Grid,
    pub margin: f64,
    pub panel: PanelStyle,
    pub legend_height: f64,
    pub font: Font,
    pub colors: Colors,
}

impl Style {
    pub fn embedded() -> &'static Style {
        static STYLE: OnceLock<Style> = OnceLock::new();
        STYLE.get_or_init(|| Style::from_json(EMBEDDED_STYLE).expect("embedded style is valid"))
    }

    pub fn from_json(text: &str) -> Result<Style, ReportError> {
        let style: Style =
            serde_json::from_str(text).map_err(|e| ReportError::Style(e.to_string()))?;
        if style.grid.columns * style.grid.rows < SdgId::all().count() {
            return Err(ReportError::Style("grid has fewer slots than SDGs".into()));
        }
        let p = &style.panel;
        if p.width <= p.label_width + p.count_width {
            return Err(ReportError::Style("panel too narrow for its labels".into()));
        }
        Ok(style)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarSpec {
    pub pb: PbId,
    pub length: f64,
    pub link_count: u64,
    pub synergy: f64,
    pub neutral: f64,
    pub tradeoff: f64,
    /// TS links over all links of the bar.
    pub ts_overlay: f64,
    /// TT links over all links of the bar.
    pub tt_overlay: f64,
}

impl BarSpec {
    pub fn is_empty(&self) -> bool {
        self.link_count == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelSpec {
    pub sdg: SdgId,
    pub short_name: String,
    pub paper_share: f64,
    pub bars: Vec<BarSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureSpec {
    pub panels: Vec<PanelSpec>,
}

pub fn figure_spec(m: &InteractionMatrix, catalog: &Catalog) -> Result<FigureSpec, ReportError> {
    m.validate()?;
    if m.total_records == 0 {
        return Err(AnalyticsError::EmptyMatrix.into());
    }
    let mut panels = Vec::new();
    for sdg in SdgId::all() {
        let lengths = match normalize_bars(m, sdg) {
            Ok(lengths) => lengths,
            Err(AnalyticsError::EmptyPanel(_)) => [0.0; 9],
            Err(e) => return Err(e.into()),
        };
        let bars = PbId::all()
            .zip(lengths)
            .map(|(pb, length)| {
                let counts = m.cell(sdg, pb);
                let shares = cell_proportions(m, sdg, pb);
                let get = |f: fn(&Shares) -> f64| shares.as_ref().map(f).unwrap_or(0.0);
                BarSpec {
                    pb,
                    length,
                    link_count: counts.total(),
                    synergy: get(|s| s.synergy),
                    neutral: get(|s| s.neutral),
                    tradeoff: get(|s| s.tradeoff),
                    ts_overlay: get(|s| s.buckets.ts),
                    tt_overlay: get(|s| s.buckets.tt),
                }
            })
            .collect();
        panels.push(PanelSpec {
            sdg,
            short_name: catalog.sdg(sdg).short_name.clone(),
            paper_share: presence_share(m, GoalId::Sdg(sdg))?,
            bars,
        });
    }
    Ok(FigureSpec { panels })
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for ch in text.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn rect(out: &mut String, class: &str, x: f64, y: f64, w: f64, h: f64, fill: &str) {
    let _ = writeln!(
        out,
        r#"<rect class="{class}" x="{x:.3}" y="{y:.3}" width="{w:.3}" height="{h:.3}" fill="{fill}"/>"#
    );
}

pub fn render_svg(spec: &FigureSpec, style: &Style) -> Vec<u8> {
    let p = &style.panel;
    let c = &style.colors;
    let width = style.margin * 2.0 + p.width * style.grid.columns as f64;
    let height = style.margin * 2.0 + p.height * style.grid.rows as f64 + style.legend_height;
    let bar_max = p.width - p.label_width - p.count_width;

    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="{}">"#,
        escape(&style.font.family)
    );
    rect(
        &mut out,
        "background",
        0.0,
        0.0,
        width,
        height,
        &c.background,
    );

    for (slot, panel) in spec.panels.iter().enumerate() {
        let col = slot % style.grid.columns;
        let row = slot / style.grid.columns;
        let x0 = style.margin + col as f64 * p.width;
        let y0 = style.margin + row as f64 * p.height;
        let _ = writeln!(
            out,
            r#"<g class="panel" id="panel-sdg{}" data-sdg="{}" data-paper-share="{}" transform="translate({x0:.3},{y0:.3})">"#,
            panel.sdg.get(),
            panel.sdg.get(),
            panel.paper_share
        );
        let _ = writeln!(
            out,
            r#"<text class="title" x="0" y="{:.3}" font-size="{}" font-weight="bold" fill="{}">{} {}</text>"#,
            p.title_height - 6.0,
            style.font.title_size,
            c.text,
            panel.sdg,
            escape(&panel.short_name)
        );
        let py = p.title_height;
        rect(
            &mut out,
            "presence-track",
            p.label_width,
            py,
            bar_max,
            p.presence_height,
            &c.presence_track,
        );
        rect(
            &mut out,
            "presence",
            p.label_width,
            py,
            bar_max * panel.paper_share,
            p.presence_height,
            &c.presence,
        );
        let _ = writeln!(
            out,
            r#"<text class="presence-label" x="{:.3}" y="{:.3}" font-size="{}" fill="{}">{}</text>"#,
            p.label_width + bar_max + 4.0,
            py + p.presence_height,
            style.font.label_size,
            c.text,
            analytics::percent(panel.paper_share)
        );

        for (i, bar) in panel.bars.iter().enumerate() {
            let y = py + p.presence_height + p.presence_gap + i as f64 * (p.bar_height + p.bar_gap);
            let _ = writeln!(
                out,
                r#"<g class="bar" data-pb="{}" data-links="{}" data-length="{}" data-synergy="{}" data-neutral="{}" data-tradeoff="{}" data-ts="{}" data-tt="{}">"#,
                bar.pb.get(),
                bar.link_count,
                bar.length,
                bar.synergy,
                bar.neutral,
                bar.tradeoff,
                bar.ts_overlay,
                bar.tt_overlay
            );
            let _ = writeln!(
                out,
                r#"<text class="pb-label" x="0" y="{:.3}" font-size="{}" fill="{}">{}</text>"#,
                y + p.bar_height - 4.0,
                style.font.label_size,
                c.text,
                bar.pb
            );
            let len = bar_max * bar.length;
            if bar.is_empty() {
                rect(
                    &mut out,
                    "empty",
                    p.label_width,
                    y,
                    0.0,
                    p.bar_height,
                    &c.empty_bar,
                );
            } else {
                let x = p.label_width;
                let syn = len * bar.synergy;
                let neu = len * bar.neutral;
                let trd = len * bar.tradeoff;
                rect(&mut out, "synergy", x, y, syn, p.bar_height, &c.synergy);
                rect(
                    &mut out,
                    "ts",
                    x,
                    y,
                    len * bar.ts_overlay,
                    p.bar_height,
                    &c.synergy_dark,
                );
                rect(
                    &mut out,
                    "neutral",
                    x + syn,
                    y,
                    neu,
                    p.bar_height,
                    &c.neutral,
                );
                rect(
                    &mut out,
                    "tradeoff",
                    x + syn + neu,
                    y,
                    trd,
                    p.bar_height,
                    &c.tradeoff,
                );
                rect(
                    &mut out,
                    "tt",
                    x + syn + neu,
                    y,
                    len * bar.tt_overlay,
                    p.bar_height,
                    &c.tradeoff_dark,
                );
            }
            let _ = writeln!(
                out,
                r#"<text class="count" x="{:.3}" y="{:.3}" font-size="{}" fill="{}">{}</text>"#,
                p.label_width + len + 4.0,
                y + p.bar_height - 4.0,
                style.font.label_size,
                c.text,
                bar.link_count
            );
            out.push_str("</g>\n");
        }
        out.push_str("</g>\n");
    }

    let ly = style.margin + p.height * style.grid.rows as f64 + 10.0;
    out.push_str("<g class=\"legend\">\n");
    let entries = [
        ("Synergy", &c.synergy),
        ("True synergy (TS)", &c.synergy_dark),
        ("Neutral", &c.neutral),
        ("Trade-off", &c.tradeoff),
        ("True trade-off (TT)", &c.tradeoff_dark),
        ("Documents mentioning the SDG", &c.presence),
    ];
    let mut lx = style.margin;
    for (label, color) in entries {
        rect(&mut out, "legend-swatch", lx, ly, 14.0, 14.0, color);
        let _ = writeln!(
            out,
            r#"<text x="{:.3}" y="{:.3}" font-size="{}" fill="{}">{}</text>"#,
            lx + 18.0,
            ly + 11.0,
            style.font.label_size,
            c.text,
            escape(label)
        );
        lx += 40.0 + 6.5 * label.len() as f64;
    }
    out.push_str("</g>\n</svg>\n");
    out.into_bytes()
}

pub const CSV_HEADER: [&str; 22] = [
    "sdg",
    "pb",
    "links",
    "synergy",
    "neutral",
    "tradeoff",
    "ts",
    "tt",
    "dp",
    "dn",
    "generic_positive",
    "generic_negative",
    "sdg_to_pb",
    "pb_to_sdg",
    "synergy_share",
    "neutral_share",
    "tradeoff_share",
    "tradeoff_excluding_dn_share",
    "ts_share",
    "tt_share",
    "dp_share",
    "dn_share",
];

/// One row per cell, SDG-major. Share columns are 0 for cells without links.
pub fn matrix_csv(m: &InteractionMatrix) -> Result<Vec<u8>, ReportError> {
    let ser = |e: csv::Error| ReportError::Serialize(e.to_string());
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).map_err(ser)?;
    for cell in &m.cells {
        let k: &Counts = &cell.counts;
        let s = Shares::from_counts(k);
        let share = |f: fn(&Shares) -> f64| s.as_ref().map(f).unwrap_or(0.0).to_string();
        let row = [
            cell.sdg.get().to_string(),
            cell.pb.get().to_string(),
            k.total().to_string(),
            k.category(crate::taxonomy::Category::Synergy).to_string(),
            k.neutral.to_string(),
            k.category(crate::taxonomy::Category::TradeOff).to_string(),
            k.ts.to_string(),
            k.tt.to_string(),
            k.dp.to_string(),
            k.dn.to_string(),
            k.generic_positive.to_string(),
            k.generic_negative.to_string(),
            k.sdg_to_pb.to_string(),
            k.pb_to_sdg.to_string(),
            share(|s| s.synergy),
            share(|s| s.neutral),
            share(|s| s.tradeoff),
            share(|s| s.tradeoff_excluding_dn),
            share(|s| s.buckets.ts),
            share(|s| s.buckets.tt),
            share(|s| s.buckets.dp),
            share(|s| s.buckets.dn),
        ];
        w.write_record(&row).map_err(ser)?;
    }
    w.into_inner()
        .map_err(|e| ReportError::Serialize(e.to_string()))
}

/// One-decimal percentages for every share that is defined.
pub fn display_shares(s: &Shares) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let mut put = |k: &str, v: Option<f64>| {
        if let Some(v) = v {
            out.insert(k.to_string(), analytics::percent(v));
        }
    };
    put("synergy", Some(s.synergy));
    put("neutral", Some(s.neutral));
    put("tradeoff", Some(s.tradeoff));
    put("tradeoff_excluding_dn", Some(s.tradeoff_excluding_dn));
    put("ts", Some(s.buckets.ts));
    put("tt", Some(s.buckets.tt));
    put("dp", Some(s.buckets.dp));
    put("dn", Some(s.buckets.dn));
    put("generic_positive", Some(s.buckets.generic_positive));
    put("generic_negative", Some(s.buckets.generic_negative));
    put("ts_of_synergy", s.ts_of_synergy);
    put("dp_of_synergy", s.dp_of_synergy);
    put("tt_of_tradeoff", s.tt_of_tradeoff);
    put("dn_of_tradeoff", s.dn_of_tradeoff);
    put("pb_to_sdg_of_directed", s.pb_to_sdg_of_directed);
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharesReport {
    pub shares: Shares,
    pub display: BTreeMap<String, String>,
}

impl SharesReport {
    fn of(shares: Option<Shares>) -> Option<Self> {
        shares.map(|shares| SharesReport {
            display: display_shares(&shares),
            shares,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalSummary {
    pub id: u8,
    pub short_name: String,
    pub presence: Option<f64>,
    pub presence_display: Option<String>,
    pub links: Option<SharesReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub sdg: SdgId,
    pub pb: PbId,
    pub links: u64,
    pub shares: Option<SharesReport>,
    /// Cell trade-off share over the global trade-off share.
    pub tradeoff_ratio_to_global: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub total_docs: u64,
    pub total_records: u64,
    pub global: Option<SharesReport>,
    pub pb_to_sdg_share: Option<f64>,
    pub pb_to_sdg_display: Option<String>,
    pub sdgs: Vec<GoalSummary>,
    pub pbs: Vec<GoalSummary>,
    pub cells: Vec<CellSummary>,
    pub matrix: InteractionMatrix,
}

fn goal_summary(m: &InteractionMatrix, id: GoalId, short_name: &str) -> GoalSummary {
    let presence = presence_share(m, id).ok();
    let number = match id {
        GoalId::Sdg(s) => s.get(),
        GoalId::Pb(p) => p.get(),
    };
    GoalSummary {
        id: number,
        short_name: short_name.to_string(),
        presence,
        presence_display: presence.map(analytics::percent),
        links: SharesReport::of(axis_proportions(m, id)),
    }
}

/// Every statistic derivable from `m`, plus `m` itself.
pub fn summary(m: &InteractionMatrix, catalog: &Catalog) -> Result<Summary, ReportError> {
    m.validate()?;
    let global = global_proportions(m).ok();
    let pb_to_sdg_share = matrix_directionality_share(m).ok();
    let sdgs = SdgId::all()
        .map(|id| goal_summary(m, GoalId::Sdg(id), &catalog.sdg(id).short_name))
        .collect();
    let pbs = PbId::all()
        .map(|id| goal_summary(m, GoalId::Pb(id), &catalog.pb(id).short_name))
        .collect();
    let cells = m
        .cells
        .iter()
        .map(|cell| {
            let shares = cell_proportions(m, cell.sdg, cell.pb);
            let ratio = match (shares, global) {
                (Some(s), Some(g)) => ratio_to_global(s.tradeoff, g.tradeoff).ok(),
                _ => None,
            };
            CellSummary {
                sdg: cell.sdg,
                pb: cell.pb,
                links: cell.counts.total(),
                shares: SharesReport::of(shares),
                tradeoff_ratio_to_global: ratio,
            }
        })
        .collect();
    Ok(Summary {
        total_docs: m.total_docs,
        total_records: m.total_records,
        global: SharesReport::of(global),
        pb_to_sdg_share,
        pb_to_sdg_display: pb_to_sdg_share.map(analytics::percent),
        sdgs,
        pbs,
        cells,
        matrix: m.clone(),
    })
}

pub fn summary_json(m: &InteractionMatrix, catalog: &Catalog) -> Result<Vec<u8>, ReportError> {
    let mut bytes = serde_json::to_vec_pretty(&summary(m, catalog)?)
        .map_err(|e| ReportError::Serialize(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn matrix_json(m: &InteractionMatrix) -> Result<Vec<u8>, ReportError> {
    let mut bytes =
        serde_json::to_vec_pretty(m).map_err(|e| ReportError::Serialize(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}
