//! Domain types for case inputs and the six-section report schema.
//!
//! Everything here is plain value data. Timestamps keep the offset they were
//! recorded with; conversion happens in [`crate::transform`].

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, FixedOffset, NaiveDate};
use regex::Regex;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

pub type Timestamp = DateTime<FixedOffset>;

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Mandate {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub received_date: Option<NaiveDate>,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub questions: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deadline: Option<NaiveDate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub investigator_name: Option<String>,
    #[serde(default)]
    pub suspects: Vec<String>,
    #[serde(default)]
    pub transmitted_items: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EvidenceKind {
    PhysicalDevice,
    ForensicImage,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashDigest {
    pub algorithm: String,
    pub hex: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceItem {
    pub item_id: String,
    pub kind: EvidenceKind,
    pub vendor: String,
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub storage_size: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hash: Option<HashDigest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub physical_condition: Option<String>,
    #[serde(default)]
    pub acquisition_methods: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub vendor: String,
    pub model_code: String,
    pub os_version: String,
    pub mac_address: String,
    pub timezone: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationRecord {
    pub name: String,
    pub timestamp: Timestamp,
    pub category: String,
    pub latitude: f64,
    pub longitude: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub related_location: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size_bytes: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Incoming,
    Outgoing,
    System,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sender {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub display_name: Option<String>,
}

impl Sender {
    /// `id` followed by the display name, as the lab log and CSV show it.
    pub fn label(&self) -> String {
        match &self.display_name {
            Some(name) => format!("{} {}", self.id, name),
            None => self.id.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sender: Option<Sender>,
    pub body: String,
    pub timestamp: Timestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
    #[serde(default)]
    pub app: String,
    #[serde(default)]
    pub source_files: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deleted: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodStep {
    pub ordinal: u32,
    pub action: String,
    pub purpose: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_version: Option<String>,
}

/// Layout of a piece of source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SourceFormat {
    ToolReportExcerpt,
    LabLogTable,
    ReducedCsv,
    MandateText,
}

impl SourceFormat {
    pub const ALL: [SourceFormat; 4] = [
        SourceFormat::ToolReportExcerpt,
        SourceFormat::LabLogTable,
        SourceFormat::ReducedCsv,
        SourceFormat::MandateText,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SourceFormat::ToolReportExcerpt => "tool_report",
            SourceFormat::LabLogTable => "lab_log",
            SourceFormat::ReducedCsv => "csv",
            SourceFormat::MandateText => "mandate",
        }
    }
}

impl fmt::Display for SourceFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SourceFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SourceFormat::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| format!("unknown source format `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ExcerptTopic {
    Locations,
    Messages,
}

/// Source text kept verbatim so prompts can reproduce the examiner's copy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceExcerpt {
    pub item_id: String,
    pub topic: ExcerptTopic,
    pub format: SourceFormat,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ReportSectionKind {
    Introduction,
    ItemsReceived,
    Methodology,
    Results,
    Discussion,
    Conclusion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LlmPotential {
    High,
    /// Low for the section as a whole, high for individual components.
    MediumStar,
    MediumLow,
    Low,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum InputSource {
    Mandate,
    LabLog,
    ToolReport,
    PriorSections,
    ExaminerKnowledge,
}

impl ReportSectionKind {
    /// Schema order.
    pub const ALL: [ReportSectionKind; 6] = [
        ReportSectionKind::Introduction,
        ReportSectionKind::ItemsReceived,
        ReportSectionKind::Methodology,
        ReportSectionKind::Results,
        ReportSectionKind::Discussion,
        ReportSectionKind::Conclusion,
    ];

    pub fn title(self) -> &'static str {
        match self {
            ReportSectionKind::Introduction => "Introduction",
            ReportSectionKind::ItemsReceived => "Items Received",
            ReportSectionKind::Methodology => "Methodology",
            ReportSectionKind::Results => "Results",
            ReportSectionKind::Discussion => "Discussion",
            ReportSectionKind::Conclusion => "Conclusion",
        }
    }

    /// Whether drafts for this section may be generated at all.
    pub fn is_draftable(self) -> bool {
        !matches!(
            self,
            ReportSectionKind::Discussion | ReportSectionKind::Conclusion
        )
    }
}

pub fn section_metadata(kind: ReportSectionKind) -> (LlmPotential, Vec<InputSource>) {
    use InputSource::*;
    match kind {
        ReportSectionKind::Introduction => (LlmPotential::High, vec![Mandate, LabLog]),
        ReportSectionKind::ItemsReceived => (LlmPotential::High, vec![Mandate, LabLog, ToolReport]),
        ReportSectionKind::Methodology => (LlmPotential::High, vec![LabLog]),
        ReportSectionKind::Results => (LlmPotential::MediumStar, vec![LabLog, ToolReport]),
        ReportSectionKind::Discussion => (LlmPotential::Low, vec![ExaminerKnowledge, LabLog]),
        ReportSectionKind::Conclusion => (LlmPotential::MediumLow, vec![PriorSections]),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ResultsTopic {
    Conversations,
    Locations,
}

/// A draftable unit: one of the four in-scope sections, with Results split
/// into its two artifact subsections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SectionTarget {
    Introduction,
    ItemsReceived,
    Methodology,
    ResultsConversations,
    ResultsLocations,
}

impl SectionTarget {
    pub const ALL: [SectionTarget; 5] = [
        SectionTarget::Introduction,
        SectionTarget::ItemsReceived,
        SectionTarget::Methodology,
        SectionTarget::ResultsConversations,
        SectionTarget::ResultsLocations,
    ];

    pub fn section(self) -> ReportSectionKind {
        match self {
            SectionTarget::Introduction => ReportSectionKind::Introduction,
            SectionTarget::ItemsReceived => ReportSectionKind::ItemsReceived,
            SectionTarget::Methodology => ReportSectionKind::Methodology,
            SectionTarget::ResultsConversations | SectionTarget::ResultsLocations => {
                ReportSectionKind::Results
            }
        }
    }

    pub fn results_topic(self) -> Option<ResultsTopic> {
        match self {
            SectionTarget::ResultsConversations => Some(ResultsTopic::Conversations),
            SectionTarget::ResultsLocations => Some(ResultsTopic::Locations),
            _ => None,
        }
    }

    pub fn from_parts(section: ReportSectionKind, topic: Option<ResultsTopic>) -> Option<SectionTarget> {
        match (section, topic) {
            (ReportSectionKind::Introduction, None) => Some(SectionTarget::Introduction),
            (ReportSectionKind::ItemsReceived, None) => Some(SectionTarget::ItemsReceived),
            (ReportSectionKind::Methodology, None) => Some(SectionTarget::Methodology),
            (ReportSectionKind::Results, Some(ResultsTopic::Conversations)) => {
                Some(SectionTarget::ResultsConversations)
            }
            (ReportSectionKind::Results, Some(ResultsTopic::Locations)) => {
                Some(SectionTarget::ResultsLocations)
            }
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SectionTarget::Introduction => "introduction",
            SectionTarget::ItemsReceived => "items_received",
            SectionTarget::Methodology => "methodology",
            SectionTarget::ResultsConversations => "results_conversations",
            SectionTarget::ResultsLocations => "results_locations",
        }
    }
}

impl fmt::Display for SectionTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SectionTarget {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SectionTarget::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown section target `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CaseBundle {
    pub mandate: Mandate,
    #[serde(default)]
    pub items: Vec<EvidenceItem>,
    #[serde(default)]
    pub device_profiles: BTreeMap<String, DeviceProfile>,
    #[serde(default)]
    pub locations: BTreeMap<String, Vec<LocationRecord>>,
    #[serde(default)]
    pub messages: BTreeMap<String, Vec<MessageRecord>>,
    #[serde(default)]
    pub method_steps: Vec<MethodStep>,
    #[serde(default)]
    pub excerpts: Vec<SourceExcerpt>,
}

#[derive(Debug, thiserror::Error)]
pub enum BundleIoError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("decoding case bundle: {0}")]
    Decode(#[from] toml::de::Error),
    #[error("encoding case bundle: {0}")]
    Encode(#[from] toml::ser::Error),
}

impl CaseBundle {
    pub fn to_toml(&self) -> Result<String, BundleIoError> {
        Ok(toml::to_string(self)?)
    }

    pub fn from_toml(text: &str) -> Result<CaseBundle, BundleIoError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<CaseBundle, BundleIoError> {
        let text = std::fs::read_to_string(path).map_err(|source| BundleIoError::Io {
            path: path.display().to_string(),
            source,
        })?;
        CaseBundle::from_toml(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), BundleIoError> {
        std::fs::write(path, self.to_toml()?).map_err(|source| BundleIoError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn item(&self, item_id: &str) -> Option<&EvidenceItem> {
        self.items.iter().find(|i| i.item_id == item_id)
    }

    /// Locations of every device, in item order then record order.
    pub fn all_locations(&self) -> Vec<&LocationRecord> {
        self.ordered_item_ids()
            .filter_map(|id| self.locations.get(id))
            .flatten()
            .collect()
    }

    pub fn all_messages(&self) -> Vec<&MessageRecord> {
        self.ordered_item_ids()
            .filter_map(|id| self.messages.get(id))
            .flatten()
            .collect()
    }

    pub fn excerpts_for(&self, topic: ExcerptTopic, format: SourceFormat) -> Vec<&SourceExcerpt> {
        let mut found: Vec<&SourceExcerpt> = self
            .excerpts
            .iter()
            .filter(|e| e.topic == topic && e.format == format)
            .collect();
        found.sort_by_key(|e| self.item_rank(&e.item_id));
        found
    }

    fn item_rank(&self, item_id: &str) -> usize {
        self.items
            .iter()
            .position(|i| i.item_id == item_id)
            .unwrap_or(usize::MAX)
    }

    // Map keys that are not items still get visited so nothing is silently
    // dropped; they sort after the known items.
    pub fn ordered_item_ids(&self) -> impl Iterator<Item = &str> {
        let mut ids: Vec<&str> = self.items.iter().map(|i| i.item_id.as_str()).collect();
        for key in self.locations.keys().chain(self.messages.keys()) {
            if !ids.contains(&key.as_str()) {
                ids.push(key);
            }
        }
        ids.into_iter()
    }
}

/// One invariant violation, located by a dotted path into the bundle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationIssue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

fn mac_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^[0-9A-Fa-f]{2}(?::[0-9A-Fa-f]{2}){5}$").unwrap())
}

pub fn is_valid_mac(text: &str) -> bool {
    mac_pattern().is_match(text)
}

pub fn validate_bundle(bundle: &CaseBundle) -> Vec<ValidationIssue> {
    let mut issues = Vec::new();
    let mut push = |path: String, message: &str| {
        issues.push(ValidationIssue {
            path,
            message: message.to_string(),
        })
    };

    let mandate = &bundle.mandate;
    if mandate.questions.is_empty() {
        push("mandate.questions".into(), "at least one question is required");
    }
    if let (Some(received), Some(deadline)) = (mandate.received_date, mandate.deadline) {
        if deadline < received {
            push("mandate.deadline".into(), "deadline precedes received_date");
        }
    }

    let mut seen_ids = HashSet::new();
    for (i, item) in bundle.items.iter().enumerate() {
        if !seen_ids.insert(item.item_id.as_str()) {
            push(format!("items[{i}].item_id"), "duplicate item_id");
        }
        if item.hash.is_some() && item.kind != EvidenceKind::ForensicImage {
            push(
                format!("items[{i}].hash"),
                "hash is only allowed on forensic images",
            );
        }
        let mut methods = HashSet::new();
        for (j, method) in item.acquisition_methods.iter().enumerate() {
            if !methods.insert(method.as_str()) {
                push(
                    format!("items[{i}].acquisition_methods[{j}]"),
                    "duplicate acquisition method",
                );
            }
        }
    }

    for (id, profile) in &bundle.device_profiles {
        if !seen_ids.contains(id.as_str()) {
            push(format!("device_profiles.{id}"), "key does not name an item");
        }
        if !is_valid_mac(&profile.mac_address) {
            push(
                format!("device_profiles.{id}.mac_address"),
                "expected six colon-separated hex octets",
            );
        }
    }

    for (id, records) in &bundle.locations {
        if !seen_ids.contains(id.as_str()) {
            push(format!("locations.{id}"), "key does not name an item");
        }
        for (j, rec) in records.iter().enumerate() {
            if !(-90.0..=90.0).contains(&rec.latitude) {
                push(format!("locations.{id}[{j}].latitude"), "outside [-90, 90]");
            }
            if !(-180.0..=180.0).contains(&rec.longitude) {
                push(format!("locations.{id}[{j}].longitude"), "outside [-180, 180]");
            }
        }
    }

    for (id, records) in &bundle.messages {
        if !seen_ids.contains(id.as_str()) {
            push(format!("messages.{id}"), "key does not name an item");
        }
        for (j, rec) in records.iter().enumerate() {
            if rec.body.trim().is_empty() {
                push(format!("messages.{id}[{j}].body"), "body is empty");
            }
        }
    }

    let mut ordinals: Vec<u32> = bundle.method_steps.iter().map(|s| s.ordinal).collect();
    ordinals.sort_unstable();
    for (expected, (i, got)) in (1u32..).zip(ordinals.iter().enumerate()) {
        if *got != expected {
            push(
                format!("method_steps[{i}].ordinal"),
                "ordinals must be unique and contiguous from 1",
            );
            break;
        }
    }

    issues
}
