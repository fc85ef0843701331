use super::lex::{optional_cell, split_columns};
use super::{numbered_lines, ParseDiagnostic};
use crate::case_model::{DeviceProfile, EvidenceItem, EvidenceKind, HashDigest, MethodStep};

#[derive(Clone, Copy)]
enum ProfileKey {
    Vendor,
    Model,
    Os,
    Mac,
    Timezone,
}

const PROFILE_KEYS: &[(&str, ProfileKey)] = &[
    ("detected phone vendor", ProfileKey::Vendor),
    ("vendor", ProfileKey::Vendor),
    ("detected phone model", ProfileKey::Model),
    ("model", ProfileKey::Model),
    ("os version", ProfileKey::Os),
    ("mac address", ProfileKey::Mac),
    ("time zone", ProfileKey::Timezone),
    ("timezone", ProfileKey::Timezone),
];

fn profile_key(line: &str) -> Option<(ProfileKey, &str)> {
    let trimmed = line.trim_start();
    let lower = trimmed.to_lowercase();
    PROFILE_KEYS.iter().find_map(|(key, k)| {
        let rest = lower.strip_prefix(key)?;
        // Key must end at a column boundary.
        if !rest.is_empty() && !rest.starts_with(['\t', ' ', ':']) {
            return None;
        }
        Some((*k, &trimmed[key.len()..]))
    })
}

/// Device characteristics as key/value rows. A third `Source` column, as the
/// tool report prints it, is dropped.
pub fn parse_device_profile(text: &str) -> (DeviceProfile, Vec<ParseDiagnostic>) {
    let mut profile = DeviceProfile::default();
    let mut diags = Vec::new();
    let mut last_line = 1;

    for (n, line) in numbered_lines(text) {
        last_line = n;
        if line.trim().is_empty() {
            continue;
        }
        let cols = split_columns(line);
        if cols.len() >= 2 && cols[0].eq_ignore_ascii_case("name") && cols[1].eq_ignore_ascii_case("value") {
            continue;
        }
        match profile_key(line) {
            Some((key, rest)) => {
                let rest = rest.trim_start().trim_start_matches(':');
                let value = split_columns(rest).into_iter().next().unwrap_or_default();
                let slot = match key {
                    ProfileKey::Vendor => &mut profile.vendor,
                    ProfileKey::Model => &mut profile.model_code,
                    ProfileKey::Os => &mut profile.os_version,
                    ProfileKey::Mac => &mut profile.mac_address,
                    ProfileKey::Timezone => &mut profile.timezone,
                };
                *slot = value;
            }
            // A lone cell is a table title.
            None if cols.len() < 2 => {}
            None => diags.push(ParseDiagnostic::warning(n, format!("unknown key `{}`", cols[0]))),
        }
    }
    if profile.vendor.is_empty() {
        diags.push(ParseDiagnostic::error(last_line, "vendor missing"));
    }
    if profile.model_code.is_empty() {
        diags.push(ParseDiagnostic::error(last_line, "model missing"));
    }
    (profile, diags)
}

fn header_index(header: &[String], names: &[&str]) -> Option<usize> {
    header
        .iter()
        .position(|h| names.iter().any(|n| h.eq_ignore_ascii_case(n)))
}

/// Lab-log methodology table: `Step Action Purpose Tool Version`.
pub fn parse_lablog_methods(text: &str) -> (Vec<MethodStep>, Vec<ParseDiagnostic>) {
    let mut steps = Vec::new();
    let mut diags = Vec::new();
    let mut lines = numbered_lines(text).filter(|(_, l)| !l.trim().is_empty());
    let Some((hn, header)) = lines.next() else {
        return (steps, diags);
    };
    let header = split_columns(header);
    let idx = |names: &[&str]| header_index(&header, names);
    let (Some(step_i), Some(action_i)) = (idx(&["step", "#", "ordinal"]), idx(&["action"])) else {
        diags.push(ParseDiagnostic::error(
            hn,
            "methodology header needs Step and Action columns",
        ));
        return (steps, diags);
    };
    let purpose_i = idx(&["purpose"]);
    let tool_i = idx(&["tool"]);
    let version_i = idx(&["version"]);

    for (n, line) in lines {
        let cols: Vec<String> = line.split('\t').map(|c| c.trim().to_string()).collect();
        let cols = if cols.len() == header.len() {
            cols
        } else {
            split_columns(line)
        };
        let get = |i: Option<usize>| i.and_then(|i| cols.get(i)).and_then(|c| optional_cell(c));
        let Some(ordinal) = get(Some(step_i)).and_then(|s| s.trim_end_matches('.').parse().ok()) else {
            diags.push(ParseDiagnostic::warning(n, "row without a step number skipped"));
            continue;
        };
        let Some(action) = get(Some(action_i)) else {
            diags.push(ParseDiagnostic::warning(n, "row without an action skipped"));
            continue;
        };
        steps.push(MethodStep {
            ordinal,
            action,
            purpose: get(purpose_i).unwrap_or_default(),
            tool_name: get(tool_i),
            tool_version: get(version_i),
        });
    }
    (steps, diags)
}

/// One row of the lab-log items table. The MAC address, when the identifier
/// column carries one, belongs to the device profile rather than the item.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemRow {
    pub item: EvidenceItem,
    pub mac_address: Option<String>,
}

/// Lab-log items table: `Item Kind Vendor Model Size Identifier Condition
/// Acquisition`. Identifier is `MAC <addr>`, `<ALGO> <hex>`, or `-`.
pub fn parse_lablog_items(text: &str) -> (Vec<ItemRow>, Vec<ParseDiagnostic>) {
    let mut rows = Vec::new();
    let mut diags = Vec::new();
    let mut lines = numbered_lines(text).filter(|(_, l)| !l.trim().is_empty());
    let Some((hn, header)) = lines.next() else {
        return (rows, diags);
    };
    let header = split_columns(header);
    let idx = |names: &[&str]| header_index(&header, names);
    let (Some(id_i), Some(vendor_i), Some(model_i)) =
        (idx(&["item", "item id", "id"]), idx(&["vendor"]), idx(&["model"]))
    else {
        diags.push(ParseDiagnostic::error(
            hn,
            "items header needs Item, Vendor and Model columns",
        ));
        return (rows, diags);
    };
    let kind_i = idx(&["kind", "type"]);
    let size_i = idx(&["size", "storage size"]);
    let ident_i = idx(&["identifier", "hash"]);
    let cond_i = idx(&["condition", "physical condition"]);
    let acq_i = idx(&["acquisition", "acquisition methods"]);

    for (n, line) in lines {
        let cols: Vec<String> = line.split('\t').map(|c| c.trim().to_string()).collect();
        if cols.len() != header.len() {
            diags.push(ParseDiagnostic::warning(
                n,
                "items rows must be tab-separated with one cell per column",
            ));
            continue;
        }
        let get = |i: Option<usize>| i.and_then(|i| optional_cell(&cols[i]));
        let kind = match get(kind_i).map(|k| k.to_lowercase().replace([' ', '_', '-'], "")) {
            Some(k) if k == "forensicimage" || k == "image" => EvidenceKind::ForensicImage,
            Some(k) if k == "physicaldevice" || k == "device" => EvidenceKind::PhysicalDevice,
            None => EvidenceKind::PhysicalDevice,
            Some(other) => {
                diags.push(ParseDiagnostic::warning(
                    n,
                    format!("unknown kind `{other}`; row skipped"),
                ));
                continue;
            }
        };
        let (mut hash, mut mac) = (None, None);
        if let Some(ident) = get(ident_i) {
            match ident.split_once(char::is_whitespace) {
                Some((tag, value)) if tag.eq_ignore_ascii_case("mac") => mac = Some(value.trim().to_string()),
                Some((algo, hex)) => {
                    hash = Some(HashDigest {
                        algorithm: algo.to_string(),
                        hex: hex.trim().to_string(),
                    })
                }
                None => diags.push(ParseDiagnostic::warning(
                    n,
                    "identifier needs a `MAC` or algorithm prefix",
                )),
            }
        }
        let mut methods: Vec<String> = Vec::new();
        for m in get(acq_i).unwrap_or_default().split(',') {
            let m = m.trim().to_string();
            if !m.is_empty() && !methods.contains(&m) {
                methods.push(m);
            }
        }
        rows.push(ItemRow {
            item: EvidenceItem {
                item_id: cols[id_i].clone(),
                kind,
                vendor: cols[vendor_i].clone(),
                model: cols[model_i].clone(),
                storage_size: get(size_i).and_then(|s| s.parse().ok()),
                hash,
                physical_condition: get(cond_i),
                acquisition_methods: methods,
            },
            mac_address: mac,
        });
    }
    (rows, diags)
}
