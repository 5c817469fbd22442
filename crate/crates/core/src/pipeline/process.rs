//! Per-document stage machine.

use std::collections::{BTreeMap, BTreeSet};

use crate::corpus::CleanDocument;
use crate::llm_gateway::{Gateway, GatewayError, PromptRequest, Stage};
use crate::taxonomy::{Axis, Category};

use super::parse::{self, ParseError};
use super::{
    chunk_pairs, pair_candidates, Checkpoint, CheckpointStore, DocumentResult, DocumentStatus,
    PairClassification, PipelineError, PromptBuilder, Verdict, DEFAULT_BATCH_CAP,
};

#[derive(Debug, Clone, Copy)]
pub struct PipelineSettings {
    pub batch_cap: usize,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        Self {
            batch_cap: DEFAULT_BATCH_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DocOutcome {
    Finished(DocumentResult),
    /// Stopped at a stage boundary; the checkpoint for `stage` is on disk.
    Interrupted {
        stage: Stage,
    },
}

/// Why a stage could not produce its payload.
enum StageFailure {
    Parse(ParseError),
    Gateway(GatewayError),
    OverContext(String),
    Fatal(PipelineError),
}

impl From<PipelineError> for StageFailure {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::OverContext { .. } => StageFailure::OverContext(e.to_string()),
            other => StageFailure::Fatal(other),
        }
    }
}

impl From<GatewayError> for StageFailure {
    fn from(e: GatewayError) -> Self {
        StageFailure::Gateway(e)
    }
}

fn gateway_reason(e: &GatewayError) -> &'static str {
    match e {
        GatewayError::RateLimited { .. } => "RateLimited",
        GatewayError::Timeout { .. } => "Timeout",
        GatewayError::BackendError(_) => "BackendError",
        GatewayError::ReplayMiss { .. } => "ReplayMiss",
        GatewayError::Store(_) => "Store",
    }
}

pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub struct Pipeline<'a> {
    gateway: &'a Gateway,
    prompts: &'a PromptBuilder,
    checkpoints: &'a CheckpointStore,
    settings: PipelineSettings,
}

impl<'a> Pipeline<'a> {
    pub fn new(
        gateway: &'a Gateway,
        prompts: &'a PromptBuilder,
        checkpoints: &'a CheckpointStore,
        settings: PipelineSettings,
    ) -> Self {
        assert!(settings.batch_cap >= 1, "batch cap must be at least 1");
        Self {
            gateway,
            prompts,
            checkpoints,
            settings,
        }
    }

    pub fn template_version(&self) -> &str {
        self.prompts.templates.version()
    }

    /// Runs the stages the document's checkpoint has not completed yet.
    /// `stop` is consulted after every checkpoint write.
    pub fn process_document(
        &self,
        doc: &CleanDocument,
        stop: &dyn Fn(&str, Stage) -> bool,
    ) -> Result<DocOutcome, PipelineError> {
        let version = self.template_version().to_string();
        let mut cp = self
            .checkpoints
            .get(&doc.doc_id)
            .unwrap_or_else(|| Checkpoint::new(&doc.doc_id, &version));
        if cp.template_version != version {
            return Err(PipelineError::TemplateVersionMismatch {
                expected: version,
                found: cp.template_version,
            });
        }

        for stage in Stage::ALL {
            if stage.number() <= cp.last_completed_stage {
                continue;
            }
            if let Err(failure) = self.run_stage(stage, doc, &mut cp) {
                return match failure {
                    StageFailure::Fatal(e) => Err(e),
                    StageFailure::Gateway(
                        e @ (GatewayError::ReplayMiss { .. } | GatewayError::Store(_)),
                    ) => Err(PipelineError::Backend(e.to_string())),
                    other => Ok(DocOutcome::Finished(self.failed(doc, &cp, stage, other))),
                };
            }
            cp.last_completed_stage = stage.number();
            self.checkpoints.write(&cp)?;
            tracing::info!(doc_id = %doc.doc_id, stage = stage.number(), "stage complete");
            if stop(&doc.doc_id, stage) {
                return Ok(DocOutcome::Interrupted { stage });
            }
        }
        Ok(DocOutcome::Finished(assemble(&cp)))
    }

    fn failed(
        &self,
        doc: &CleanDocument,
        cp: &Checkpoint,
        stage: Stage,
        failure: StageFailure,
    ) -> DocumentResult {
        let (reason, detail) = match &failure {
            StageFailure::Parse(e) => (e.kind().to_string(), e.to_string()),
            StageFailure::Gateway(e) => (gateway_reason(e).to_string(), e.to_string()),
            StageFailure::OverContext(m) => ("OverContext".to_string(), m.clone()),
            StageFailure::Fatal(e) => ("Fatal".to_string(), e.to_string()),
        };
        tracing::warn!(doc_id = %doc.doc_id, stage = stage.number(), %reason, %detail, "document failed");
        let status = if stage == Stage::SdgAllocation && reason == "OverContext" {
            DocumentStatus::Skipped { reason, detail }
        } else {
            DocumentStatus::Failed {
                stage,
                reason,
                detail,
            }
        };
        DocumentResult {
            doc_id: doc.doc_id.clone(),
            sdgs: cp.sdgs.iter().flatten().copied().collect(),
            pbs: cp.pbs.iter().flatten().copied().collect(),
            pairs: Vec::new(),
            status,
            template_version: cp.template_version.clone(),
            notes: cp.notes.clone(),
        }
    }

    /// Sends `req`, and on an unusable reply sends one repair request and then
    /// one full retry before giving up.
    fn ask<T>(
        &self,
        req: PromptRequest,
        parse: impl Fn(&str) -> Result<T, ParseError>,
    ) -> Result<T, StageFailure> {
        let first = self.gateway.complete(&req)?;
        let error = match parse(&first.text) {
            Ok(value) => return Ok(value),
            Err(e) => e,
        };
        tracing::warn!(doc_id = %req.doc_id, stage = req.stage.number(), %error, "unusable reply, requesting repair");
        let repair = self
            .prompts
            .repair_prompt(&req, &error.to_string(), &first.text)?;
        let second = self.gateway.complete(&repair)?;
        let error = match parse(&second.text) {
            Ok(value) => return Ok(value),
            Err(e) => e,
        };
        tracing::warn!(doc_id = %req.doc_id, stage = req.stage.number(), %error, "repair failed, retrying request");
        let retry = self.prompts.retry_prompt(&req, 2)?;
        let third = self.gateway.complete(&retry)?;
        parse(&third.text).map_err(StageFailure::Parse)
    }

    fn run_stage(
        &self,
        stage: Stage,
        doc: &CleanDocument,
        cp: &mut Checkpoint,
    ) -> Result<(), StageFailure> {
        let cap = self.settings.batch_cap;
        match stage {
            Stage::SdgAllocation => {
                let req = self.prompts.build_allocation_prompt(doc, Axis::Sdg)?;
                let sdgs = self.ask(req, parse::parse_sdg_allocation)?;
                cp.sdgs = Some(sdgs.into_iter().collect());
            }
            Stage::PbAllocation => {
                let req = self.prompts.build_allocation_prompt(doc, Axis::Pb)?;
                let pbs = self.ask(req, parse::parse_pb_allocation)?;
                cp.pbs = Some(pbs.into_iter().collect());
            }
            Stage::Relationship => {
                let sdgs = cp.sdgs.iter().flatten().copied().collect();
                let pbs = cp.pbs.iter().flatten().copied().collect();
                let candidates = pair_candidates(&sdgs, &pbs);
                let body = normalize_whitespace(&doc.body_text);
                let mut verdicts = Vec::with_capacity(candidates.len());
                for batch in chunk_pairs(&candidates, cap) {
                    let req = self.prompts.build_relationship_prompt(doc, &batch)?;
                    let answered = self.ask(req, |text| parse::parse_relationship(text, &batch))?;
                    for mut verdict in answered {
                        if verdict.category != Category::Neutral {
                            let quote = normalize_whitespace(&verdict.evidence_quote);
                            if quote.is_empty() || !body.contains(&quote) {
                                let note = format!(
                                    "{}: evidence quote not found in the text; {} downgraded to neutral",
                                    verdict.pair,
                                    verdict.category.label()
                                );
                                tracing::warn!(doc_id = %doc.doc_id, %note);
                                cp.notes.push(note);
                                verdict.category = Category::Neutral;
                            }
                        }
                        verdicts.push(verdict);
                    }
                }
                cp.relationships = Some(verdicts);
            }
            Stage::Causality => {
                let linked = non_neutral(cp);
                let mut directions = Vec::with_capacity(linked.len());
                for batch in chunk_pairs(&linked, cap) {
                    let pairs: Vec<_> = batch.iter().map(|v| v.pair).collect();
                    let req = self.prompts.build_causality_prompt(doc, &batch)?;
                    directions.extend(self.ask(req, |text| parse::parse_causality(text, &pairs))?);
                }
                cp.directions = Some(directions);
            }
            Stage::Reasoner => {
                let linked = non_neutral(cp);
                let mut refinements = Vec::with_capacity(linked.len());
                for batch in chunk_pairs(&linked, cap) {
                    let typed: Vec<_> = batch.iter().map(|v| (v.pair, v.category)).collect();
                    let req = self.prompts.build_reasoner_prompt(doc, &batch)?;
                    refinements.extend(self.ask(req, |text| parse::parse_reasoner(text, &typed))?);
                }
                cp.refinements = Some(refinements);
            }
        }
        Ok(())
    }
}

fn non_neutral(cp: &Checkpoint) -> Vec<Verdict> {
    cp.relationships
        .iter()
        .flatten()
        .filter(|v| v.category != Category::Neutral)
        .cloned()
        .collect()
}

/// Builds the final result from a checkpoint that completed all five stages.
fn assemble(cp: &Checkpoint) -> DocumentResult {
    let directions: BTreeMap<_, _> = cp.directions.iter().flatten().copied().collect();
    let refinements: BTreeMap<_, _> = cp.refinements.iter().flatten().copied().collect();
    let pairs = cp
        .relationships
        .iter()
        .flatten()
        .map(|v| PairClassification {
            sdg: v.pair.sdg,
            pb: v.pair.pb,
            category: v.category,
            refined: refinements.get(&v.pair).copied(),
            direction: directions.get(&v.pair).copied(),
            justification: v.justification.clone(),
            evidence_quote: v.evidence_quote.clone(),
        })
        .collect();
    let sdgs: BTreeSet<_> = cp.sdgs.iter().flatten().copied().collect();
    let pbs: BTreeSet<_> = cp.pbs.iter().flatten().copied().collect();
    DocumentResult {
        doc_id: cp.doc_id.clone(),
        sdgs,
        pbs,
        pairs,
        status: DocumentStatus::Complete,
        template_version: cp.template_version.clone(),
        notes: cp.notes.clone(),
    }
}
