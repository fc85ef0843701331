//! Prompt rendering and the 36-prompt experiment matrix.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::case_model::{
    validate_bundle, CaseBundle, EvidenceKind, ExcerptTopic, Mandate, ReportSectionKind, SectionTarget,
    SourceFormat, ValidationIssue,
};
use crate::ingest::lex::translate_french;
use crate::transform::{reduce_to_csv, TransformError, STANDARD_LOCATION_COLUMNS, STANDARD_MESSAGE_COLUMNS};

/// Prefix of the line that opens one device's block in a Results input.
pub const ITEM_MARKER: &str = "### Item: ";

/// Header of the items table appended to the Items Received input.
pub const ITEMS_TABLE_HEADER: &str = "Item\tKind\tVendor\tModel\tSize\tIdentifier\tCondition\tAcquisition";

const PHRASINGS_TOML: &str = include_str!("../data/phrasings.toml");

/// Results formats, in matrix order.
pub const RESULTS_FORMATS: [SourceFormat; 3] = [
    SourceFormat::ToolReportExcerpt,
    SourceFormat::LabLogTable,
    SourceFormat::ReducedCsv,
];

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PromptError {
    #[error("{target} cannot be drafted from {format} input")]
    IllegalPairing {
        target: SectionTarget,
        format: SourceFormat,
    },
    #[error("phrasing {phrasing_id} out of range for {target} ({available} available)")]
    PhrasingOutOfRange {
        target: SectionTarget,
        phrasing_id: usize,
        available: usize,
    },
    #[error("summary mode is only meaningful for Results prompts")]
    SummaryModeMismatch,
    #[error("no {format} excerpt for {topic:?}")]
    MissingExcerpt {
        topic: ExcerptTopic,
        format: SourceFormat,
    },
    #[error("bundle does not validate ({} issues)", .0.len())]
    InvalidBundle(Vec<ValidationIssue>),
    #[error(transparent)]
    Transform(#[from] TransformError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Placement {
    RequestFirst,
    RequestLast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SummaryMode {
    Overall,
    DayByDay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PromptVariant {
    pub placement: Placement,
    pub phrasing_id: usize,
    /// Set for Results prompts only.
    pub summary_mode: Option<SummaryMode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub prompt_id: String,
    pub target: SectionTarget,
    pub section: ReportSectionKind,
    pub input_format: SourceFormat,
    pub variant: PromptVariant,
    pub request: String,
    pub rendered_text: String,
    pub input_char_count: usize,
}

impl PromptSpec {
    /// The input block, without the request sentence.
    pub fn input_block(&self) -> &str {
        let text = self.rendered_text.as_str();
        match self.variant.placement {
            Placement::RequestFirst => text.strip_prefix(self.request.as_str()).unwrap_or(text),
            Placement::RequestLast => text.strip_suffix(self.request.as_str()).unwrap_or(text),
        }
        .trim_matches('\n')
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct ModeTable {
    #[serde(default)]
    overall: Vec<String>,
    #[serde(default)]
    day_by_day: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhrasingTable {
    pub version: u32,
    #[serde(flatten)]
    targets: BTreeMap<String, ModeTable>,
}

impl PhrasingTable {
    /// The table shipped with the crate.
    pub fn builtin() -> &'static PhrasingTable {
        static TABLE: OnceLock<PhrasingTable> = OnceLock::new();
        TABLE.get_or_init(|| toml::from_str(PHRASINGS_TOML).expect("builtin phrasing table parses"))
    }

    pub fn requests(&self, target: SectionTarget, mode: Option<SummaryMode>) -> &[String] {
        match self.targets.get(target.as_str()) {
            Some(t) => match mode {
                Some(SummaryMode::DayByDay) => &t.day_by_day,
                _ => &t.overall,
            },
            None => &[],
        }
    }

    pub fn request(&self, target: SectionTarget, variant: &PromptVariant) -> Result<&str, PromptError> {
        let list = self.requests(target, variant.summary_mode);
        list.get(variant.phrasing_id)
            .map(String::as_str)
            .ok_or(PromptError::PhrasingOutOfRange {
                target,
                phrasing_id: variant.phrasing_id,
                available: list.len(),
            })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RenderOptions {
    /// Leave French tool labels untranslated.
    pub keep_french: bool,
}

pub fn is_legal_pairing(target: SectionTarget, format: SourceFormat) -> bool {
    match target {
        SectionTarget::Introduction | SectionTarget::ItemsReceived => format == SourceFormat::MandateText,
        SectionTarget::Methodology => format == SourceFormat::LabLogTable,
        SectionTarget::ResultsConversations | SectionTarget::ResultsLocations => {
            RESULTS_FORMATS.contains(&format)
        }
    }
}

pub fn render_input(
    bundle: &CaseBundle,
    target: SectionTarget,
    format: SourceFormat,
    options: RenderOptions,
) -> Result<String, PromptError> {
    if !is_legal_pairing(target, format) {
        return Err(PromptError::IllegalPairing { target, format });
    }
    let text = match target {
        SectionTarget::Introduction => render_mandate(&bundle.mandate),
        SectionTarget::ItemsReceived => {
            format!(
                "{}\n\n{}",
                render_mandate(&bundle.mandate),
                render_items_table(bundle)
            )
        }
        SectionTarget::Methodology => render_methods_table(bundle),
        SectionTarget::ResultsConversations => render_results(bundle, ExcerptTopic::Messages, format)?,
        SectionTarget::ResultsLocations => render_results(bundle, ExcerptTopic::Locations, format)?,
    };
    Ok(if options.keep_french {
        text
    } else {
        translate_french(&text)
    })
}

fn to_roman(mut n: usize) -> String {
    const TABLE: [(usize, &str); 9] = [
        (100, "c"),
        (90, "xc"),
        (50, "l"),
        (40, "xl"),
        (10, "x"),
        (9, "ix"),
        (5, "v"),
        (4, "iv"),
        (1, "i"),
    ];
    let mut out = String::new();
    for (v, s) in TABLE {
        while n >= v {
            out.push_str(s);
            n -= v;
        }
    }
    out
}

/// A mandate laid out in the labeled blocks the mandate parser reads back.
pub fn render_mandate(m: &Mandate) -> String {
    let mut out = String::new();
    if let Some(d) = m.received_date {
        out.push_str(&format!("Date: {}\n", d.format("%d.%m.%Y")));
    }
    out.push_str(&format!("Description: {}\n", m.description));
    if !m.transmitted_items.is_empty() {
        out.push_str("Items:\n");
        for item in &m.transmitted_items {
            out.push_str(&format!("- {item}\n"));
        }
    }
    out.push_str("Mandate: Using the information provided, we ask you to answer the following questions:\n");
    for (i, q) in m.questions.iter().enumerate() {
        out.push_str(&format!("{}. {}\n", to_roman(i + 1), q));
    }
    if let Some(d) = m.deadline {
        out.push_str(&format!("Deadline: {}\n", d.format("%d.%m.%Y")));
    }
    if let Some(name) = &m.investigator_name {
        out.push_str(&format!("Note: The person mandated is the investigator {name}\n"));
    }
    out.trim_end().to_string()
}

/// Items in the lab-log items table layout.
pub fn render_items_table(bundle: &CaseBundle) -> String {
    let mut out = String::from(ITEMS_TABLE_HEADER);
    for item in &bundle.items {
        let identifier = match (&item.hash, bundle.device_profiles.get(&item.item_id)) {
            (Some(h), _) => format!("{} {}", h.algorithm, h.hex),
            (None, Some(p)) if !p.mac_address.is_empty() => format!("MAC {}", p.mac_address),
            _ => "-".to_string(),
        };
        let kind = match item.kind {
            EvidenceKind::PhysicalDevice => "PhysicalDevice",
            EvidenceKind::ForensicImage => "ForensicImage",
        };
        let cells = [
            item.item_id.clone(),
            kind.to_string(),
            dash(&item.vendor),
            dash(&item.model),
            item.storage_size.map_or("-".into(), |s| s.to_string()),
            identifier,
            item.physical_condition.clone().unwrap_or_else(|| "-".into()),
            dash(&item.acquisition_methods.join(", ")),
        ];
        out.push('\n');
        out.push_str(&cells.map(|c| c.replace(['\t', '\n'], " ")).join("\t"));
    }
    out
}

fn dash(text: &str) -> String {
    if text.trim().is_empty() {
        "-".into()
    } else {
        text.to_string()
    }
}

pub fn render_methods_table(bundle: &CaseBundle) -> String {
    let mut out = String::from("Step\tAction\tPurpose\tTool\tVersion");
    for s in &bundle.method_steps {
        let cells = [
            s.ordinal.to_string(),
            dash(&s.action),
            dash(&s.purpose),
            s.tool_name.clone().unwrap_or_else(|| "-".into()),
            s.tool_version.clone().unwrap_or_else(|| "-".into()),
        ];
        out.push('\n');
        out.push_str(&cells.map(|c| c.replace(['\t', '\n'], " ")).join("\t"));
    }
    out
}

fn render_results(
    bundle: &CaseBundle,
    topic: ExcerptTopic,
    format: SourceFormat,
) -> Result<String, PromptError> {
    let mut blocks: Vec<(String, String)> = Vec::new();
    if format == SourceFormat::ReducedCsv {
        for id in bundle.ordered_item_ids() {
            let text = match topic {
                ExcerptTopic::Messages => match bundle.messages.get(id) {
                    Some(m) if !m.is_empty() => reduce_to_csv(m, &STANDARD_MESSAGE_COLUMNS)?,
                    _ => continue,
                },
                ExcerptTopic::Locations => match bundle.locations.get(id) {
                    Some(l) if !l.is_empty() => reduce_to_csv(l, &STANDARD_LOCATION_COLUMNS)?,
                    _ => continue,
                },
            };
            blocks.push((id.to_string(), text));
        }
    } else {
        for e in bundle.excerpts_for(topic, format) {
            blocks.push((e.item_id.clone(), e.text.clone()));
        }
    }
    if blocks.is_empty() {
        return Err(PromptError::MissingExcerpt { topic, format });
    }
    Ok(blocks
        .iter()
        .map(|(id, text)| format!("{ITEM_MARKER}{id}\n{}", text.trim_end()))
        .collect::<Vec<_>>()
        .join("\n\n"))
}

/// Split a Results input back into `(item_id, text)` blocks.
pub fn split_item_blocks(input: &str) -> Vec<(String, String)> {
    let mut blocks: Vec<(String, String)> = Vec::new();
    for line in input.split_inclusive('\n') {
        if let Some(id) = line.strip_prefix(ITEM_MARKER) {
            blocks.push((id.trim().to_string(), String::new()));
        } else if let Some((_, text)) = blocks.last_mut() {
            text.push_str(line);
        }
    }
    for (_, text) in &mut blocks {
        let trimmed = text.trim_end_matches('\n').to_string();
        *text = trimmed;
        text.push('\n');
    }
    blocks
}

fn hex_digest(data: &[u8]) -> String {
    Sha256::digest(data).iter().map(|b| format!("{b:02x}")).collect()
}

fn format_for(target: SectionTarget) -> Option<SourceFormat> {
    match target {
        SectionTarget::Introduction | SectionTarget::ItemsReceived => Some(SourceFormat::MandateText),
        SectionTarget::Methodology => Some(SourceFormat::LabLogTable),
        _ => None,
    }
}

/// Combine a request and an input block. The digest covers the table
/// version, target, format, variant and input text.
pub fn build_prompt(
    target: SectionTarget,
    input_format: SourceFormat,
    input_text: &str,
    variant: PromptVariant,
) -> Result<PromptSpec, PromptError> {
    build_prompt_with(
        PhrasingTable::builtin(),
        target,
        input_format,
        input_text,
        variant,
    )
}

pub fn build_prompt_with(
    table: &PhrasingTable,
    target: SectionTarget,
    input_format: SourceFormat,
    input_text: &str,
    variant: PromptVariant,
) -> Result<PromptSpec, PromptError> {
    if !is_legal_pairing(target, input_format) {
        return Err(PromptError::IllegalPairing {
            target,
            format: input_format,
        });
    }
    if variant.summary_mode.is_some() != target.results_topic().is_some() {
        return Err(PromptError::SummaryModeMismatch);
    }
    let request = table.request(target, &variant)?.to_string();
    let input = input_text.trim_matches('\n');
    let rendered_text = match variant.placement {
        Placement::RequestFirst => format!("{request}\n\n{input}"),
        Placement::RequestLast => format!("{input}\n\n{request}"),
    };
    let key = format!(
        "v{}|{}|{}|{:?}|{}|{:?}|{}",
        table.version,
        target,
        input_format,
        variant.placement,
        variant.phrasing_id,
        variant.summary_mode,
        hex_digest(input.as_bytes())
    );
    Ok(PromptSpec {
        prompt_id: format!("{}-{}", target, &hex_digest(key.as_bytes())[..16]),
        target,
        section: target.section(),
        input_format,
        variant,
        request,
        input_char_count: input.chars().count(),
        rendered_text,
    })
}

/// Early sections: 2 phrasings × 2 placements. Results subsections:
/// 3 formats × 2 summary modes × 2 placements.
pub fn build_matrix(bundle: &CaseBundle, options: RenderOptions) -> Result<Vec<PromptSpec>, PromptError> {
    let issues = validate_bundle(bundle);
    if !issues.is_empty() {
        return Err(PromptError::InvalidBundle(issues));
    }
    let placements = [Placement::RequestLast, Placement::RequestFirst];
    let mut out = Vec::with_capacity(36);
    for target in SectionTarget::ALL {
        match format_for(target) {
            Some(format) => {
                let input = render_input(bundle, target, format, options)?;
                for phrasing_id in 0..2 {
                    for placement in placements {
                        let variant = PromptVariant {
                            placement,
                            phrasing_id,
                            summary_mode: None,
                        };
                        out.push(build_prompt(target, format, &input, variant)?);
                    }
                }
            }
            None => {
                for format in RESULTS_FORMATS {
                    let input = render_input(bundle, target, format, options)?;
                    for mode in [SummaryMode::Overall, SummaryMode::DayByDay] {
                        for placement in placements {
                            let variant = PromptVariant {
                                placement,
                                phrasing_id: 0,
                                summary_mode: Some(mode),
                            };
                            out.push(build_prompt(target, format, &input, variant)?);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}
