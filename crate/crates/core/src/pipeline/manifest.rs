//! Build a [`CaseBundle`] from the files an examiner collected, listed in a
//! TOML manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::case_model::{CaseBundle, DeviceProfile, ExcerptTopic, SourceExcerpt, SourceFormat};
use crate::ingest::{
    merge_locations, parse_csv_locations, parse_csv_messages, parse_device_profile, parse_lablog_items,
    parse_lablog_locations, parse_lablog_messages, parse_lablog_methods, parse_mandate,
    parse_tool_report_locations, parse_tool_report_messages, ParseDiagnostic, Severity,
};
use crate::transform::{resolve_place, Gazetteer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Profile,
    Locations,
    Messages,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceEntry {
    pub item: String,
    pub kind: SourceKind,
    /// `tool_report`, `lab_log` or `csv`; ignored for profiles.
    #[serde(default)]
    pub format: Option<String>,
    pub path: PathBuf,
}

/// Paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub mandate: PathBuf,
    #[serde(default)]
    pub methodology: Option<PathBuf>,
    #[serde(default)]
    pub items: Option<PathBuf>,
    /// Fills missing place names of location records.
    #[serde(default)]
    pub gazetteer: Option<PathBuf>,
    #[serde(default)]
    pub sources: Vec<SourceEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDiagnostic {
    pub file: String,
    pub diagnostic: ParseDiagnostic,
}

impl FileDiagnostic {
    pub fn render(&self) -> String {
        self.diagnostic.render(&self.file)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("manifest: {0}")]
    Parse(String),
    #[error("{path}: {message}")]
    Source { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestOutcome {
    pub bundle: CaseBundle,
    pub diagnostics: Vec<FileDiagnostic>,
}

impl IngestOutcome {
    pub fn has_errors(&self) -> bool {
        self.diagnostics
            .iter()
            .any(|d| d.diagnostic.severity == Severity::Error)
    }
}

impl Manifest {
    pub fn from_toml(text: &str) -> Result<Manifest, ManifestError> {
        toml::from_str(text).map_err(|e| ManifestError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Manifest, ManifestError> {
        Manifest::from_toml(&read(path)?)
    }
}

fn read(path: &Path) -> Result<String, ManifestError> {
    std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Read every listed file and assemble the bundle.
///
/// The first locations source of an item provides its records; later ones
/// only fill missing fields. The first messages source is canonical. Every
/// locations and messages source is kept verbatim as an excerpt.
pub fn ingest_manifest(manifest_path: &Path) -> Result<IngestOutcome, ManifestError> {
    let manifest = Manifest::load(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    ingest(&manifest, base)
}

pub fn ingest(manifest: &Manifest, base: &Path) -> Result<IngestOutcome, ManifestError> {
    let mut bundle = CaseBundle::default();
    let mut diagnostics = Vec::new();
    let mut note = |file: &Path, diags: Vec<ParseDiagnostic>| {
        let file = file.display().to_string();
        diagnostics.extend(diags.into_iter().map(|diagnostic| FileDiagnostic {
            file: file.clone(),
            diagnostic,
        }));
    };

    let (mandate, d) = parse_mandate(&read(&base.join(&manifest.mandate))?);
    bundle.mandate = mandate;
    note(&manifest.mandate, d);

    if let Some(p) = &manifest.methodology {
        let (steps, d) = parse_lablog_methods(&read(&base.join(p))?);
        bundle.method_steps = steps;
        note(p, d);
    }

    let mut macs: Vec<(String, String)> = Vec::new();
    if let Some(p) = &manifest.items {
        let (rows, d) = parse_lablog_items(&read(&base.join(p))?);
        note(p, d);
        for row in rows {
            if let Some(mac) = row.mac_address {
                macs.push((row.item.item_id.clone(), mac));
            }
            bundle.items.push(row.item);
        }
    }

    for src in &manifest.sources {
        let text = read(&base.join(&src.path))?;
        let format = match (src.kind, src.format.as_deref()) {
            (SourceKind::Profile, _) => None,
            (_, Some(f)) => Some(
                f.parse::<SourceFormat>()
                    .map_err(|message| ManifestError::Source {
                        path: src.path.display().to_string(),
                        message,
                    })?,
            ),
            (_, None) => {
                return Err(ManifestError::Source {
                    path: src.path.display().to_string(),
                    message: "locations and messages sources need a format".into(),
                })
            }
        };
        match (src.kind, format) {
            (SourceKind::Profile, _) => {
                let (profile, d) = parse_device_profile(&text);
                note(&src.path, d);
                bundle.device_profiles.insert(src.item.clone(), profile);
            }
            (SourceKind::Locations, Some(format)) => {
                let (recs, d) = match format {
                    SourceFormat::ToolReportExcerpt => parse_tool_report_locations(&text),
                    SourceFormat::LabLogTable => parse_lablog_locations(&text),
                    SourceFormat::ReducedCsv => parse_csv_locations(&text),
                    SourceFormat::MandateText => return Err(bad_format(src)),
                };
                note(&src.path, d);
                let slot = bundle.locations.entry(src.item.clone()).or_default();
                *slot = if slot.is_empty() {
                    recs
                } else {
                    merge_locations(slot, &recs)
                };
                bundle
                    .excerpts
                    .push(excerpt(src, ExcerptTopic::Locations, format, text));
            }
            (SourceKind::Messages, Some(format)) => {
                let (msgs, d) = match format {
                    SourceFormat::ToolReportExcerpt => parse_tool_report_messages(&text),
                    SourceFormat::LabLogTable => parse_lablog_messages(&text),
                    SourceFormat::ReducedCsv => parse_csv_messages(&text),
                    SourceFormat::MandateText => return Err(bad_format(src)),
                };
                note(&src.path, d);
                bundle.messages.entry(src.item.clone()).or_insert(msgs);
                bundle
                    .excerpts
                    .push(excerpt(src, ExcerptTopic::Messages, format, text));
            }
            (_, None) => unreachable!("format checked above"),
        }
    }

    for (item, mac) in macs {
        let profile = bundle
            .device_profiles
            .entry(item)
            .or_insert_with(DeviceProfile::default);
        if profile.mac_address.is_empty() {
            profile.mac_address = mac;
        }
    }

    if let Some(p) = &manifest.gazetteer {
        let gazetteer = Gazetteer::parse(&read(&base.join(p))?).map_err(|e| ManifestError::Source {
            path: p.display().to_string(),
            message: e.to_string(),
        })?;
        for recs in bundle.locations.values_mut() {
            for r in recs.iter_mut().filter(|r| r.related_location.is_none()) {
                r.related_location = resolve_place(r.latitude, r.longitude, &gazetteer).map(str::to_string);
            }
        }
    }

    Ok(IngestOutcome { bundle, diagnostics })
}

fn bad_format(src: &SourceEntry) -> ManifestError {
    ManifestError::Source {
        path: src.path.display().to_string(),
        message: "the mandate layout only applies to the mandate file".into(),
    }
}

fn excerpt(src: &SourceEntry, topic: ExcerptTopic, format: SourceFormat, text: String) -> SourceExcerpt {
    SourceExcerpt {
        item_id: src.item.clone(),
        topic,
        format,
        text,
    }
}
