//! TEI full-text parsing.
//!
//! Section kinds are inferred from element context:
//!
//! | TEI context                                              | kind           |
//! |----------------------------------------------------------|----------------|
//! | `<figure>` anywhere (including `type="table"`)           | Figure         |
//! | `<listBibl>`, `<biblStruct>` anywhere                    | Bibliography   |
//! | `<div type="references"\|"bibliography">`                | Bibliography   |
//! | `<div type="acknowledgement"\|"acknowledgment"\|"funding">` | Acknowledgment |
//! | `<div>` whose `<head>` reads Acknowledg(e)ments / Funding | Acknowledgment |
//! | `<div>` whose `<head>` reads References / Bibliography   | Bibliography   |
//! | other content of `<body>`                                | Body           |
//! | `<abstract>`, `<front>`, other content of `<back>`, notes | Other          |
//!
//! Anything unrecognised falls through to Other, which pruning keeps.

use roxmltree::{Document, Node};
use serde::{Deserialize, Serialize};

use super::CorpusError;

pub const TEI_NAMESPACE: &str = "http://www.tei-c.org/ns/1.0";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SectionKind {
    Body,
    Figure,
    Acknowledgment,
    Bibliography,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Division {
    pub kind: SectionKind,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TeiDocument {
    pub title: String,
    pub divisions: Vec<Division>,
}

/// Elements whose text forms its own block (separated by blank lines).
const BLOCK_ELEMENTS: &[&str] = &["p", "head", "formula", "item", "label", "quote", "ab"];

pub fn parse_tei(xml: &[u8]) -> Result<TeiDocument, CorpusError> {
    let text = std::str::from_utf8(xml).map_err(|e| CorpusError::MalformedXml(e.to_string()))?;
    let doc = Document::parse(text).map_err(|e| CorpusError::MalformedXml(e.to_string()))?;
    let root = doc.root_element();
    let ns = root.tag_name().namespace();
    if root.tag_name().name() != "TEI" || !(ns.is_none() || ns == Some(TEI_NAMESPACE)) {
        return Err(CorpusError::NotTei(root.tag_name().name().to_string()));
    }

    let title = find_title(root).unwrap_or_default();
    let mut walker = Walker::default();

    if let Some(abstract_node) = root.descendants().find(|n| is(n, "abstract")) {
        walker.section(abstract_node, SectionKind::Other);
    }
    if let Some(text_node) = root.children().find(|n| is(n, "text")) {
        for part in text_node.children().filter(Node::is_element) {
            let kind = match part.tag_name().name() {
                "body" => SectionKind::Body,
                _ => SectionKind::Other,
            };
            walker.section(part, kind);
        }
    }
    Ok(TeiDocument {
        title,
        divisions: walker.finish(),
    })
}

fn is(node: &Node, name: &str) -> bool {
    node.is_element() && node.tag_name().name() == name
}

fn find_title(root: Node) -> Option<String> {
    let header = root.children().find(|n| is(n, "teiHeader"))?;
    let title_stmt = header.descendants().find(|n| is(n, "titleStmt"))?;
    let title = title_stmt.children().find(|n| is(n, "title"))?;
    Some(normalize_ws(&collect_text(title)))
}

fn collect_text(node: Node) -> String {
    node.descendants()
        .filter(|n| n.is_text())
        .filter_map(|n| n.text())
        .collect::<Vec<_>>()
        .join("")
}

fn normalize_ws(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn kind_of_div(div: Node, inherited: SectionKind) -> SectionKind {
    let typ = div.attribute("type").unwrap_or("").to_ascii_lowercase();
    match typ.as_str() {
        "acknowledgement" | "acknowledgment" | "acknowledgements" | "acknowledgments"
        | "funding" => return SectionKind::Acknowledgment,
        "references" | "bibliography" => return SectionKind::Bibliography,
        _ => {}
    }
    let head = div
        .children()
        .find(|n| is(n, "head"))
        .map(|h| normalize_ws(&collect_text(h)).to_ascii_lowercase());
    if let Some(head) = head {
        let head = head.trim_end_matches([':', '.']);
        if head.starts_with("acknowledg") || head == "funding" {
            return SectionKind::Acknowledgment;
        }
        if head == "references" || head == "bibliography" {
            return SectionKind::Bibliography;
        }
    }
    inherited
}

/// Accumulates blocks into divisions, flushing on every kind change or
/// division boundary so that document order is kept.
#[derive(Default)]
struct Walker {
    divisions: Vec<Division>,
    current_kind: Option<SectionKind>,
    blocks: Vec<String>,
    inline: String,
}

impl Walker {
    fn section(&mut self, node: Node, kind: SectionKind) {
        self.flush();
        self.visit_children(node, kind);
        self.flush();
    }

    fn visit_children(&mut self, node: Node, kind: SectionKind) {
        for child in node.children() {
            self.visit(child, kind);
        }
    }

    fn visit(&mut self, node: Node, kind: SectionKind) {
        if node.is_text() {
            if let Some(text) = node.text() {
                self.push_inline(kind, text);
            }
            return;
        }
        if !node.is_element() {
            return;
        }
        let name = node.tag_name().name();
        match name {
            "figure" => self.section(node, SectionKind::Figure),
            "listBibl" | "biblStruct" => self.section(node, SectionKind::Bibliography),
            "div" => {
                let div_kind = kind_of_div(node, kind);
                self.section(node, div_kind);
            }
            "note" if kind == SectionKind::Body => self.section(node, SectionKind::Other),
            _ if BLOCK_ELEMENTS.contains(&name) => {
                self.end_block();
                self.visit_children(node, kind);
                self.end_block();
            }
            _ => self.visit_children(node, kind),
        }
    }

    fn push_inline(&mut self, kind: SectionKind, text: &str) {
        if self.current_kind != Some(kind) {
            self.flush();
            self.current_kind = Some(kind);
        }
        self.inline.push_str(text);
    }

    fn end_block(&mut self) {
        let block = normalize_ws(&self.inline);
        self.inline.clear();
        if !block.is_empty() {
            self.blocks.push(block);
        }
    }

    fn flush(&mut self) {
        self.end_block();
        if let Some(kind) = self.current_kind.take() {
            if !self.blocks.is_empty() {
                self.divisions.push(Division {
                    kind,
                    text: self.blocks.join("\n\n"),
                });
            }
        }
        self.blocks.clear();
    }

    fn finish(mut self) -> Vec<Division> {
        self.flush();
        self.divisions
    }
}
