//! Report assembly from examiner-chosen drafts, and Markdown rendering.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::case_model::{CaseBundle, ReportSectionKind, ResultsTopic, SectionTarget, Timestamp};
use crate::grounding::{score, DraftRef, Tolerances};
use crate::llm_gateway::GeneratedDraft;

pub const DISCLAIMER: &str = "Disclaimer: parts of this report were drafted with a large language model from the case data. Generated text can omit facts or state facts absent from the sources. The examiner must check every statement against the evidence before signing.";

pub const MANUAL_NOTE: &str = "To be written by the examiner.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DraftPart {
    pub target: SectionTarget,
    pub draft_ref: DraftRef,
    pub created_at: Timestamp,
    pub text: String,
    pub grounding_summary: String,
    pub hallucination_count: usize,
}

impl DraftPart {
    pub fn provenance(&self) -> String {
        format!(
            "draft target={} backend={} prompt_id={} created_at={} {}",
            self.target,
            self.draft_ref.backend_label,
            self.draft_ref.prompt_id,
            self.created_at.to_rfc3339(),
            self.grounding_summary
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SectionContent {
    /// One part per section; Results may carry one per subsection.
    DraftContent(Vec<DraftPart>),
    ManualPlaceholder(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub sections: BTreeMap<ReportSectionKind, SectionContent>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChosenDraft {
    pub section: ReportSectionKind,
    /// Required for Results.
    pub topic: Option<ResultsTopic>,
    pub draft: GeneratedDraft,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AssembleError {
    #[error("{} is written by the examiner; drafts are not accepted", .0.title())]
    NotDraftable(ReportSectionKind),
    #[error("a Results draft must name its subsection (conversations or locations)")]
    MissingTopic,
    #[error("two drafts chosen for {0}")]
    Duplicate(SectionTarget),
}

fn topic_order(t: SectionTarget) -> u8 {
    match t {
        SectionTarget::ResultsConversations => 0,
        SectionTarget::ResultsLocations => 1,
        _ => 0,
    }
}

pub fn assemble(
    bundle: &CaseBundle,
    chosen: &[ChosenDraft],
    tolerances: &Tolerances,
) -> Result<ReportDocument, AssembleError> {
    let mut parts: BTreeMap<ReportSectionKind, Vec<DraftPart>> = BTreeMap::new();
    for c in chosen {
        if !c.section.is_draftable() {
            return Err(AssembleError::NotDraftable(c.section));
        }
        let topic = if c.section == ReportSectionKind::Results {
            Some(c.topic.ok_or(AssembleError::MissingTopic)?)
        } else {
            None
        };
        let target = SectionTarget::from_parts(c.section, topic).ok_or(AssembleError::MissingTopic)?;
        let slot = parts.entry(c.section).or_default();
        if slot.iter().any(|p| p.target == target) {
            return Err(AssembleError::Duplicate(target));
        }
        let report = score(&c.draft, bundle, target, tolerances);
        slot.push(DraftPart {
            target,
            draft_ref: report.draft_ref.clone(),
            created_at: c.draft.created_at,
            text: c.draft.text.clone(),
            grounding_summary: report.summary_line(),
            hallucination_count: report.hallucination_count,
        });
        slot.sort_by_key(|p| topic_order(p.target));
    }
    let sections = ReportSectionKind::ALL
        .into_iter()
        .map(|kind| {
            let content = match parts.remove(&kind) {
                Some(p) => SectionContent::DraftContent(p),
                None => SectionContent::ManualPlaceholder(MANUAL_NOTE.to_string()),
            };
            (kind, content)
        })
        .collect();
    Ok(ReportDocument { sections })
}

// Heading markers inside a draft must not open sections of their own.
fn escape_headings(text: &str) -> String {
    text.trim_end()
        .lines()
        .map(|l| {
            if l.trim_start().starts_with('#') {
                format!("\\{}", l.trim_start())
            } else {
                l.to_string()
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn comment(text: &str) -> String {
    format!("<!-- {} -->", text.replace("--", "- -"))
}

/// One `#` heading per section in schema order, the disclaimer banner first,
/// provenance as HTML comments.
pub fn render_markdown(doc: &ReportDocument) -> String {
    let mut out = format!("> **{DISCLAIMER}**\n");
    for kind in ReportSectionKind::ALL {
        out.push_str(&format!("\n# {}\n\n", kind.title()));
        match doc.sections.get(&kind) {
            Some(SectionContent::DraftContent(parts)) => {
                for (i, part) in parts.iter().enumerate() {
                    if i > 0 {
                        out.push('\n');
                    }
                    if let Some(topic) = part.target.results_topic() {
                        let name = match topic {
                            ResultsTopic::Conversations => "Conversations",
                            ResultsTopic::Locations => "Locations",
                        };
                        out.push_str(&format!("## {name}\n\n"));
                    }
                    out.push_str(&comment(&part.provenance()));
                    out.push('\n');
                    out.push_str(&escape_headings(&part.text));
                    out.push('\n');
                }
            }
            Some(SectionContent::ManualPlaceholder(note)) => out.push_str(&format!("_{note}_\n")),
            None => out.push_str(&format!("_{MANUAL_NOTE}_\n")),
        }
    }
    out
}
