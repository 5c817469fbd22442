use std::collections::BTreeSet;

use crate::corpus::{estimate_tokens, CleanDocument};
use crate::llm_gateway::{DecodeParams, PromptRequest, Stage};
use crate::taxonomy::{Axis, Catalog, Category, PbId, SdgId};

use super::{Pair, PipelineError, TemplateSet, Verdict};

/// Context window of the models the pipeline targets, in tokens.
pub const DEFAULT_CONTEXT_BUDGET: u64 = 1_000_000;

#[derive(Debug, Clone)]
pub struct PromptBuilder {
    pub templates: TemplateSet,
    pub catalog: Catalog,
    pub context_budget: u64,
    /// Decode parameters per stage, index 0 = stage 1.
    pub decode: [DecodeParams; 5],
}

pub fn default_decode_params() -> [DecodeParams; 5] {
    let with = |max_output_tokens| DecodeParams {
        temperature: 0.0,
        max_output_tokens,
    };
    [with(1024), with(1024), with(16384), with(8192), with(16384)]
}

impl PromptBuilder {
    pub fn new(templates: TemplateSet, catalog: Catalog) -> Self {
        Self {
            templates,
            catalog,
            context_budget: DEFAULT_CONTEXT_BUDGET,
            decode: default_decode_params(),
        }
    }

    fn finish(
        &self,
        stage: Stage,
        doc: &CleanDocument,
        user_text: String,
    ) -> Result<PromptRequest, PipelineError> {
        let system_text = self.templates.render("system", &[])?;
        let tokens = estimate_tokens(&system_text) + estimate_tokens(&user_text);
        if tokens > self.context_budget {
            return Err(PipelineError::OverContext {
                tokens,
                budget: self.context_budget,
            });
        }
        Ok(PromptRequest::new(
            stage,
            doc.doc_id.clone(),
            system_text,
            user_text,
            self.decode[stage.number() as usize - 1],
        ))
    }

    pub fn sdg_definition_block(&self, sdgs: impl IntoIterator<Item = SdgId>) -> String {
        sdgs.into_iter()
            .map(|id| {
                let d = self.catalog.sdg(id);
                format!("{id} ({}): {}", d.short_name, d.definition)
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn pb_definition_block(&self, pbs: impl IntoIterator<Item = PbId>) -> String {
        pbs.into_iter()
            .map(|id| {
                let d = self.catalog.pb(id);
                format!("{id} ({}): {}", d.short_name, d.definition)
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Stage 1 or 2: unconstrained multi-label assignment over the whole catalog.
    pub fn build_allocation_prompt(
        &self,
        doc: &CleanDocument,
        axis: Axis,
    ) -> Result<PromptRequest, PipelineError> {
        let (stage, template, definitions) = match axis {
            Axis::Sdg => (
                Stage::SdgAllocation,
                "sdg_allocation",
                self.sdg_definition_block(SdgId::all()),
            ),
            Axis::Pb => (
                Stage::PbAllocation,
                "pb_allocation",
                self.pb_definition_block(PbId::all()),
            ),
        };
        let user = self.templates.render(
            template,
            &[
                ("definitions", &definitions),
                ("title", &doc.title),
                ("body_text", &doc.body_text),
            ],
        )?;
        self.finish(stage, doc, user)
    }

    fn batch_definitions(&self, pairs: impl Iterator<Item = Pair> + Clone) -> String {
        let sdgs: BTreeSet<SdgId> = pairs.clone().map(|p| p.sdg).collect();
        let pbs: BTreeSet<PbId> = pairs.map(|p| p.pb).collect();
        format!(
            "{}\n{}",
            self.sdg_definition_block(sdgs),
            self.pb_definition_block(pbs)
        )
    }

    fn pair_prompt(
        &self,
        stage: Stage,
        template: &str,
        doc: &CleanDocument,
        pairs: Vec<Pair>,
        lines: Vec<String>,
    ) -> Result<PromptRequest, PipelineError> {
        let definitions = self.batch_definitions(pairs.iter().copied());
        let count = pairs.len().to_string();
        let pair_lines = lines.join("\n");
        let user = self.templates.render(
            template,
            &[
                ("definitions", &definitions),
                ("pair_count", &count),
                ("pairs", &pair_lines),
                ("title", &doc.title),
                ("body_text", &doc.body_text),
            ],
        )?;
        self.finish(stage, doc, user)
    }

    /// Stage 3 prompt for one batch of candidate pairs.
    pub fn build_relationship_prompt(
        &self,
        doc: &CleanDocument,
        batch: &[Pair],
    ) -> Result<PromptRequest, PipelineError> {
        let lines = batch.iter().map(Pair::to_string).collect();
        self.pair_prompt(
            Stage::Relationship,
            "relationship",
            doc,
            batch.to_vec(),
            lines,
        )
    }

    /// Stage 4 prompt; every pair must be non-neutral.
    pub fn build_causality_prompt(
        &self,
        doc: &CleanDocument,
        batch: &[Verdict],
    ) -> Result<PromptRequest, PipelineError> {
        debug_assert!(batch.iter().all(|v| v.category != Category::Neutral));
        let lines = batch
            .iter()
            .map(|v| format!("{}|{}", v.pair, v.category.label()))
            .collect();
        self.pair_prompt(
            Stage::Causality,
            "causality",
            doc,
            batch.iter().map(|v| v.pair).collect(),
            lines,
        )
    }

    /// Stage 5 prompt; every pair must be a synergy or a trade-off.
    pub fn build_reasoner_prompt(
        &self,
        doc: &CleanDocument,
        batch: &[Verdict],
    ) -> Result<PromptRequest, PipelineError> {
        debug_assert!(batch.iter().all(|v| v.category != Category::Neutral));
        let lines = batch
            .iter()
            .map(|v| {
                let justification = v
                    .justification
                    .split_whitespace()
                    .collect::<Vec<_>>()
                    .join(" ");
                format!("{}|{}|{}", v.pair, v.category.label(), justification)
            })
            .collect();
        self.pair_prompt(
            Stage::Reasoner,
            "reasoner",
            doc,
            batch.iter().map(|v| v.pair).collect(),
            lines,
        )
    }

    /// Re-asks for valid JSON after an unusable reply.
    pub fn repair_prompt(
        &self,
        original: &PromptRequest,
        error: &str,
        previous: &str,
    ) -> Result<PromptRequest, PipelineError> {
        let repair = self
            .templates
            .render("repair", &[("error", error), ("previous", previous)])?;
        Ok(PromptRequest::new(
            original.stage,
            original.doc_id.clone(),
            original.system_text.clone(),
            format!("{}\n\n{repair}", original.user_text),
            original.decode_params,
        ))
    }

    /// Re-issues the original request with a retry marker so it gets its own key.
    pub fn retry_prompt(
        &self,
        original: &PromptRequest,
        attempt: u32,
    ) -> Result<PromptRequest, PipelineError> {
        let marker = self
            .templates
            .render("retry", &[("attempt", &attempt.to_string())])?;
        Ok(PromptRequest::new(
            original.stage,
            original.doc_id.clone(),
            original.system_text.clone(),
            format!("{}\n\n{marker}", original.user_text),
            original.decode_params,
        ))
    }
}
