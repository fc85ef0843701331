use std::sync::OnceLock;

use regex::Regex;

use super::lex::{
    collapse_whitespace, in_bounds, localize, optional_cell, parse_clock, parse_coordinate_pair,
    parse_decimal, parse_dmy_timestamp, parse_mdy, parse_offset, parse_size_annotation, utc,
};
use super::{numbered_lines, ParseDiagnostic};
use crate::case_model::LocationRecord;

fn entry_start() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*(?P<n>\d+)\s+\((?P<rest>.*)$").unwrap())
}

fn labeled(line: &str, labels: &[&str]) -> Option<String> {
    let trimmed = line.trim();
    for label in labels {
        if let Some(rest) = trimmed
            .get(..label.len())
            .filter(|h| h.eq_ignore_ascii_case(label))
            .map(|_| &trimmed[label.len()..])
        {
            if let Some(value) = rest.trim_start().strip_prefix(':') {
                return Some(value.trim().to_string());
            }
        }
    }
    None
}

#[derive(Default)]
struct PendingEntry {
    line: usize,
    ordinal: String,
    coords: Option<(f64, f64)>,
    name: Option<String>,
    timestamp: Option<crate::case_model::Timestamp>,
    source: Vec<String>,
    in_source: bool,
    size: Option<u64>,
    extra: Vec<String>,
}

impl PendingEntry {
    fn finish(self, out: &mut Vec<LocationRecord>, diags: &mut Vec<ParseDiagnostic>) {
        let Some((latitude, longitude)) = self.coords else {
            return;
        };
        let Some(timestamp) = self.timestamp else {
            diags.push(ParseDiagnostic::error(
                self.line,
                format!("entry {} has no readable Hour line; skipped", self.ordinal),
            ));
            return;
        };
        let name = self.name.unwrap_or_else(|| {
            diags.push(ParseDiagnostic::warning(
                self.line,
                format!("entry {} has no Name", self.ordinal),
            ));
            format!("entry {}", self.ordinal)
        });
        let source = collapse_whitespace(&self.source.join(" "));
        let source = source.trim_end_matches([':', ' ']).to_string();
        out.push(LocationRecord {
            name,
            timestamp,
            category: self.extra.first().cloned().unwrap_or_default(),
            latitude,
            longitude,
            related_location: None,
            source_file: (!source.is_empty()).then_some(source),
            size_bytes: self.size,
        });
    }
}

/// Numbered entries with a `(lat, lon)` pair, `Name:`, `Hour:` in
/// `MM/DD/YYYY HH:MM:SS` (UTC unless an offset follows), `Source File:` and a
/// size annotation, then the category line.
pub fn parse_tool_report_locations(text: &str) -> (Vec<LocationRecord>, Vec<ParseDiagnostic>) {
    static HOUR: OnceLock<Regex> = OnceLock::new();
    let hour_re = HOUR.get_or_init(|| {
        Regex::new(r"^(?P<d>\d{2}/\d{2}/\d{4})\s+(?P<t>\d{2}:\d{2}(?::\d{2})?)\s*(?P<off>.*)$").unwrap()
    });

    let mut out = Vec::new();
    let mut diags = Vec::new();
    let mut current: Option<PendingEntry> = None;

    for (n, line) in numbered_lines(text) {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if let Some(caps) = entry_start().captures(line) {
            if let Some(done) = current.take() {
                done.finish(&mut out, &mut diags);
            }
            let mut entry = PendingEntry {
                line: n,
                ordinal: caps["n"].to_string(),
                ..Default::default()
            };
            let rest = format!("({}", &caps["rest"]);
            match parse_coordinate_pair(&rest) {
                Some(pair) => entry.coords = Some(pair),
                None => diags.push(ParseDiagnostic::error(
                    n,
                    format!("entry {}: unreadable coordinate pair; skipped", entry.ordinal),
                )),
            }
            if let Some(idx) = rest.find("Name:") {
                entry.name = Some(rest[idx + 5..].trim().to_string());
            }
            current = Some(entry);
            continue;
        }
        let Some(entry) = current.as_mut() else {
            diags.push(ParseDiagnostic::warning(n, "line outside any entry ignored"));
            continue;
        };
        if entry.coords.is_none() {
            continue;
        }
        if let Some(v) = labeled(trimmed, &["Name"]) {
            entry.name = Some(v);
        } else if let Some(v) = labeled(trimmed, &["Hour", "Heure", "Time"]) {
            let parsed = hour_re.captures(&v).and_then(|c| {
                let date = parse_mdy(&c["d"])?;
                let time = parse_clock(&c["t"])?;
                let off = parse_offset(&c["off"]).unwrap_or_else(utc);
                localize(date, time, off)
            });
            match parsed {
                Some(ts) => entry.timestamp = Some(ts),
                None => diags.push(ParseDiagnostic::error(n, format!("unreadable Hour `{v}`"))),
            }
        } else if let Some(v) = labeled(trimmed, &["Source File", "Fichier source"]) {
            entry.in_source = true;
            entry.source.push(v);
        } else if entry.in_source {
            if let Some(size) = parse_size_annotation(trimmed) {
                entry.size = Some(size);
                entry.in_source = false;
            } else {
                entry.source.push(trimmed.to_string());
            }
        } else {
            entry.extra.push(trimmed.to_string());
        }
    }
    if let Some(done) = current.take() {
        done.finish(&mut out, &mut diags);
    }
    (out, diags)
}

fn lablog_row() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"^\s*(?P<name>\S.*?)\s+(?P<ts>\d{2}\.\d{2}\.\d{4}\s+\d{2}:\d{2}(?::\d{2})?(?:\s*\(UTC\s*[+-]\s*\d{1,2}(?::?\d{2})?\))?)\s+(?P<cat>\S.*?)\s+(?P<lat>[-+]?\d+(?:[.,]\d+)?)\s+(?P<lon>[-+]?\d+(?:[.,]\d+)?)(?:\s+(?P<place>.*?))?\s*$",
        )
        .unwrap()
    })
}

fn is_location_header(line: &str) -> bool {
    let lower = line.to_lowercase();
    ["name", "time", "latitude", "longitude"]
        .iter()
        .all(|w| lower.contains(w))
}

/// The lab-log location table: `Name Time Category Latitude Longitude
/// Related Location`, dates `DD.MM.YYYY`, comma decimals.
pub fn parse_lablog_locations(text: &str) -> (Vec<LocationRecord>, Vec<ParseDiagnostic>) {
    let mut out = Vec::new();
    let mut diags = Vec::new();
    let mut seen_header = false;

    for (n, line) in numbered_lines(text) {
        if line.trim().is_empty() {
            continue;
        }
        if is_location_header(line) {
            seen_header = true;
            continue;
        }
        if !seen_header {
            continue;
        }
        let Some(caps) = lablog_row().captures(line) else {
            diags.push(ParseDiagnostic::warning(n, "malformed location row skipped"));
            continue;
        };
        let (lat, lon) = match (parse_decimal(&caps["lat"]), parse_decimal(&caps["lon"])) {
            (Some(lat), Some(lon)) if in_bounds(lat, lon) => (lat, lon),
            _ => {
                diags.push(ParseDiagnostic::warning(n, "unreadable coordinates; row skipped"));
                continue;
            }
        };
        let Some((timestamp, _)) = parse_dmy_timestamp(&caps["ts"], utc()) else {
            diags.push(ParseDiagnostic::warning(n, "unreadable timestamp; row skipped"));
            continue;
        };
        out.push(LocationRecord {
            name: caps["name"].trim().to_string(),
            timestamp,
            category: caps["cat"].trim().to_string(),
            latitude: lat,
            longitude: lon,
            related_location: caps.name("place").and_then(|p| optional_cell(p.as_str())),
            source_file: None,
            size_bytes: None,
        });
    }

    if !seen_header {
        diags.push(ParseDiagnostic::error(1, "location table header row not found"));
    }
    (out, diags)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum LocColumn {
    Name,
    Time,
    Category,
    Latitude,
    Longitude,
    Place,
    Source,
    Size,
}

fn location_column(header: &str) -> Option<LocColumn> {
    let h = header.trim().to_lowercase();
    Some(match h.as_str() {
        "name" => LocColumn::Name,
        "time" | "timestamp" | "timestamp: time" => LocColumn::Time,
        "category" => LocColumn::Category,
        "latitude" => LocColumn::Latitude,
        "longitude" => LocColumn::Longitude,
        "related location" | "related_location" => LocColumn::Place,
        "source file" | "source_file" => LocColumn::Source,
        "size" | "size_bytes" => LocColumn::Size,
        _ => return None,
    })
}

/// Reduced ` ; `-delimited location table as written by
/// [`crate::transform::reduce_to_csv`].
pub fn parse_csv_locations(text: &str) -> (Vec<LocationRecord>, Vec<ParseDiagnostic>) {
    let mut out = Vec::new();
    let mut diags = Vec::new();
    let mut lines = numbered_lines(text).filter(|(_, l)| !l.trim().is_empty());

    let Some((hn, header)) = lines.next() else {
        return (out, diags);
    };
    let columns: Vec<Option<LocColumn>> = header.split(';').map(location_column).collect();
    for (i, c) in columns.iter().enumerate() {
        if c.is_none() {
            diags.push(ParseDiagnostic::warning(
                hn,
                format!("unknown column {} ignored", i + 1),
            ));
        }
    }
    let required = [
        LocColumn::Name,
        LocColumn::Time,
        LocColumn::Latitude,
        LocColumn::Longitude,
    ];
    if !required.iter().all(|r| columns.contains(&Some(*r))) {
        diags.push(ParseDiagnostic::error(
            hn,
            "header lacks Name/Time/Latitude/Longitude",
        ));
        return (out, diags);
    }

    for (n, line) in lines {
        let cells: Vec<&str> = line.split(';').map(str::trim).collect();
        if cells.len() < 2 {
            diags.push(ParseDiagnostic::error(n, "no ` ; ` delimiter on data row"));
            continue;
        }
        if cells.len() != columns.len() {
            diags.push(ParseDiagnostic::warning(n, "column count mismatch; row skipped"));
            continue;
        }
        let cell = |c: LocColumn| {
            columns
                .iter()
                .position(|x| *x == Some(c))
                .map(|i| cells[i])
                .unwrap_or("")
        };
        let coords = parse_decimal(cell(LocColumn::Latitude))
            .zip(parse_decimal(cell(LocColumn::Longitude)))
            .filter(|(a, b)| in_bounds(*a, *b));
        let Some((latitude, longitude)) = coords else {
            diags.push(ParseDiagnostic::warning(n, "unreadable coordinates; row skipped"));
            continue;
        };
        let Some((timestamp, explicit)) = parse_dmy_timestamp(cell(LocColumn::Time), utc()) else {
            diags.push(ParseDiagnostic::warning(n, "unreadable timestamp; row skipped"));
            continue;
        };
        if !explicit {
            diags.push(ParseDiagnostic::warning(
                n,
                "timestamp without offset read as UTC+0",
            ));
        }
        out.push(LocationRecord {
            name: cell(LocColumn::Name).to_string(),
            timestamp,
            category: cell(LocColumn::Category).to_string(),
            latitude,
            longitude,
            related_location: optional_cell(cell(LocColumn::Place)),
            source_file: optional_cell(cell(LocColumn::Source)),
            size_bytes: cell(LocColumn::Size).parse().ok(),
        });
    }
    (out, diags)
}

/// Fill absent optional fields of `primary` from records in `enrich` with the
/// same name and instant.
pub fn merge_locations(primary: &[LocationRecord], enrich: &[LocationRecord]) -> Vec<LocationRecord> {
    primary
        .iter()
        .map(|p| {
            let mut merged = p.clone();
            if let Some(e) = enrich
                .iter()
                .find(|e| e.name == p.name && e.timestamp == p.timestamp)
            {
                merged.related_location = merged.related_location.or_else(|| e.related_location.clone());
                merged.source_file = merged.source_file.or_else(|| e.source_file.clone());
                merged.size_bytes = merged.size_bytes.or(e.size_bytes);
                if merged.category.is_empty() {
                    merged.category = e.category.clone();
                }
            }
            merged
        })
        .collect()
}
