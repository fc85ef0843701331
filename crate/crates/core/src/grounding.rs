//! Claim extraction and verification of drafts against the case bundle,
//! plus completeness against the facts a section is expected to carry.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::sync::OnceLock;
use std::time::Duration;

use chrono::{DateTime, NaiveDate, NaiveDateTime, TimeDelta};
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::case_model::{CaseBundle, LocationRecord, SectionTarget};
use crate::ingest::lex::{
    format_dmy_timestamp, localize, parse_clock, parse_decimal, parse_dmy, parse_mdy, parse_offset,
    translate_french,
};
use crate::llm_gateway::GeneratedDraft;
use crate::transform::{group_locations_spatial, DEFAULT_RADIUS_M};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClaimKind {
    Coordinate,
    Timestamp,
    PersonName,
    Filename,
    NumericValue,
    PlaceName,
    ToolVersion,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Claim {
    pub kind: ClaimKind,
    pub surface_text: String,
    /// Coordinates: `lat,lon`. Timestamps: RFC 3339 in UTC when an offset was
    /// given, a naive `YYYY-MM-DDTHH:MM:SS` otherwise, or a bare date. Text
    /// kinds: lowercased, whitespace-collapsed.
    pub normalized_value: String,
    /// Character offsets `[start, end)` into the draft.
    pub span: (usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClaimStatus {
    Grounded,
    Ungrounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub coordinate_decimal_places: u32,
    pub timestamp_slack: Duration,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            coordinate_decimal_places: 4,
            timestamp_slack: Duration::from_secs(60),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckedClaim {
    pub claim: Claim,
    pub status: ClaimStatus,
}

/// A fact the section should mention. It is satisfied when every phrase of
/// at least one alternative occurs in the draft as a contiguous run of
/// normalized tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequiredFact {
    /// Human-readable restatement; always satisfies the fact on its own.
    pub description: String,
    pub alternatives: Vec<Vec<String>>,
}

impl RequiredFact {
    fn new(description: String, alternatives: Vec<Vec<String>>) -> Option<RequiredFact> {
        let alternatives: Vec<Vec<String>> = alternatives
            .into_iter()
            .filter(|alt| !alt.is_empty() && alt.iter().all(|p| !tokens(p).is_empty()))
            .collect();
        (!alternatives.is_empty()).then_some(RequiredFact {
            description,
            alternatives,
        })
    }

    pub fn is_satisfied_by(&self, text: &str) -> bool {
        self.satisfied_in(&tokens(text))
    }

    fn satisfied_in(&self, draft_tokens: &[String]) -> bool {
        self.alternatives
            .iter()
            .any(|alt| alt.iter().all(|p| contains_run(draft_tokens, &tokens(p))))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactCheck {
    pub description: String,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DraftRef {
    pub prompt_id: String,
    pub backend_label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingReport {
    pub draft_ref: DraftRef,
    pub claims: Vec<CheckedClaim>,
    pub hallucination_count: usize,
    pub required_facts: Vec<FactCheck>,
    pub completeness: f64,
}

impl GroundingReport {
    /// One claim per line, then one fact per line, then a summary line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "draft {} ({})",
            self.draft_ref.prompt_id, self.draft_ref.backend_label
        );
        for c in &self.claims {
            let _ = writeln!(
                out,
                "claim\t{:?}\t{:?}\t{}..{}\t{}",
                c.status,
                c.claim.kind,
                c.claim.span.0,
                c.claim.span.1,
                c.claim.surface_text.replace('\n', " ")
            );
        }
        for f in &self.required_facts {
            let mark = if f.satisfied { "present" } else { "missing" };
            let _ = writeln!(out, "fact\t{mark}\t{}", f.description.replace('\n', " "));
        }
        let _ = writeln!(out, "{}", self.summary_line());
        out
    }

    pub fn summary_line(&self) -> String {
        format!(
            "hallucinations={} completeness={:.3} ({}/{} facts)",
            self.hallucination_count,
            self.completeness,
            self.required_facts.iter().filter(|f| f.satisfied).count(),
            self.required_facts.len()
        )
    }
}

/// Lowercased alphanumeric runs.
pub fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn contains_run(hay: &[String], needle: &[String]) -> bool {
    needle.is_empty() || hay.windows(needle.len()).any(|w| w == needle)
}

// ---------------------------------------------------------------- extraction

const COORD_DECIMAL: &str = r"[-+]?\d{1,3}[.,]\d+";
const DATE: &str = r"(?P<dmy>\d{2}\.\d{2}\.\d{4})|(?P<mdy>\d{2}/\d{2}/\d{4})|(?P<iso>\d{4}-\d{2}-\d{2})";
const CLOCK: &str = r"\d{1,2}:\d{2}(?::\d{2})?";
const OFFSET: &str = r"\(?\s*UTC\s*[+-]\s*\d{1,2}(?::?\d{2})?\s*\)?";

fn coordinate_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(&format!(
            r"(?:\(\s*)?(?P<lat>{COORD_DECIMAL})\s*[,;]\s+(?P<lon>{COORD_DECIMAL})(?:\s*\))?"
        ))
        .unwrap()
    })
}

fn date_first_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(&format!(
            r"\b(?:{DATE})(?:(?:[ \t]+|T)(?P<t>{CLOCK})\b(?:[ \t]*(?P<off>{OFFSET}))?)?"
        ))
        .unwrap()
    })
}

fn time_first_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(&format!(
            r"\b(?P<t>{CLOCK})\b(?:[ \t]*(?P<off>{OFFSET}))?[ \t]*,?[ \t]*(?:on[ \t]+)?(?:{DATE})\b"
        ))
        .unwrap()
    })
}

fn version_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b\d+(?:\.\d+){2,}\b").unwrap())
}

fn filename_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)\b[\w\-]+(?:\.[\w\-]+)*\.(?:db-wal|db-shm|jpeg|jpg|png|gif|heic|mp4|mov|3gp|sqlite|db|plist|txt|pdf|xml|json|zip|wav|mp3|amr|opus|vcf|csv|doc|docx|xlsx)\b").unwrap()
    })
}

fn bytes_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\b(?P<n>\d+)\s*(?:bytes|octets)\b").unwrap())
}

fn honorific_name_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"\b(?:Mr|Mrs|Ms|Dr|Mme|Mlle)\.?[ \t~]*(?P<n>[A-Z][\w'\-]*(?:[ \t]+[A-Z][\w'\-]*)?)")
            .unwrap()
    })
}

const HONORIFICS: [&str; 6] = ["mr", "mrs", "ms", "dr", "mme", "mlle"];

fn strip_honorific(name: &str) -> String {
    let mut words: Vec<&str> = name.split_whitespace().collect();
    if words.len() > 1 && HONORIFICS.contains(&words[0].trim_end_matches('.').to_lowercase().as_str()) {
        words.remove(0);
    }
    words.join(" ")
}

/// Names and places of the bundle that extraction looks for verbatim.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Roster {
    pub people: Vec<String>,
    pub places: Vec<String>,
}

impl Roster {
    /// Multi-token person names and every place text of the bundle. Single
    /// tokens are left to the honorific pattern.
    pub fn from_bundle(bundle: &CaseBundle) -> Roster {
        let mut people: BTreeSet<String> = BTreeSet::new();
        let m = &bundle.mandate;
        for name in m.suspects.iter().chain(m.investigator_name.iter()) {
            people.insert(strip_honorific(name));
        }
        for msg in bundle.all_messages() {
            if let Some(n) = msg.sender.as_ref().and_then(|s| s.display_name.as_ref()) {
                people.insert(n.trim().to_string());
            }
        }
        let mut places: BTreeSet<String> = BTreeSet::new();
        for loc in bundle.all_locations() {
            if let Some(p) = &loc.related_location {
                let p = p.trim();
                places.insert(p.to_string());
                if let Some((head, _)) = p.split_once(',') {
                    places.insert(head.trim().to_string());
                }
            }
        }
        Roster {
            people: people
                .into_iter()
                .filter(|p| p.split_whitespace().count() > 1)
                .collect(),
            places: places.into_iter().filter(|p| p.chars().count() > 2).collect(),
        }
    }

    fn pattern(names: &[String], case_insensitive: bool) -> Option<Regex> {
        if names.is_empty() {
            return None;
        }
        let mut sorted: Vec<&String> = names.iter().collect();
        sorted.sort_by_key(|n| std::cmp::Reverse(n.len()));
        let alts: Vec<String> = sorted
            .iter()
            .map(|n| {
                n.split_whitespace()
                    .map(regex::escape)
                    .collect::<Vec<_>>()
                    .join(r"\s+")
            })
            .collect();
        let flags = if case_insensitive { "(?i)" } else { "" };
        Regex::new(&format!(r"{flags}\b(?:{})\b", alts.join("|"))).ok()
    }
}

struct Candidate {
    priority: u8,
    start: usize,
    end: usize,
    kind: ClaimKind,
    normalized: String,
}

fn timestamp_value(caps: &regex::Captures) -> Option<String> {
    let date = if let Some(d) = caps.name("dmy") {
        parse_dmy(d.as_str())?
    } else if let Some(d) = caps.name("mdy") {
        parse_mdy(d.as_str())?
    } else {
        NaiveDate::parse_from_str(caps.name("iso")?.as_str(), "%Y-%m-%d").ok()?
    };
    let Some(t) = caps.name("t") else {
        return Some(date.format("%Y-%m-%d").to_string());
    };
    let time = parse_clock(t.as_str())?;
    match caps.name("off") {
        Some(off) => {
            let ts = localize(date, time, parse_offset(off.as_str())?)?;
            Some(ts.naive_utc().format("%Y-%m-%dT%H:%M:%SZ").to_string())
        }
        None => Some(
            NaiveDateTime::new(date, time)
                .format("%Y-%m-%dT%H:%M:%S")
                .to_string(),
        ),
    }
}

/// Pattern-based claims, longest match first within a kind and earlier kinds
/// first across kinds; overlapping matches are dropped. Ordered by span start.
pub fn extract_claims(draft: &str, roster: &Roster) -> Vec<Claim> {
    let mut cands: Vec<Candidate> = Vec::new();
    fn at(priority: u8, m: regex::Match, kind: ClaimKind, normalized: String) -> Candidate {
        Candidate {
            priority,
            start: m.start(),
            end: m.end(),
            kind,
            normalized,
        }
    }

    for caps in coordinate_regex().captures_iter(draft) {
        let (Some(lat), Some(lon)) = (parse_decimal(&caps["lat"]), parse_decimal(&caps["lon"])) else {
            continue;
        };
        if crate::ingest::lex::in_bounds(lat, lon) {
            cands.push(at(
                0,
                caps.get(0).unwrap(),
                ClaimKind::Coordinate,
                format!("{lat},{lon}"),
            ));
        }
    }
    for re in [time_first_regex(), date_first_regex()] {
        for caps in re.captures_iter(draft) {
            if let Some(v) = timestamp_value(&caps) {
                cands.push(at(1, caps.get(0).unwrap(), ClaimKind::Timestamp, v));
            }
        }
    }
    for m in version_regex().find_iter(draft) {
        cands.push(at(2, m, ClaimKind::ToolVersion, m.as_str().to_string()));
    }
    for m in filename_regex().find_iter(draft) {
        cands.push(at(2, m, ClaimKind::Filename, m.as_str().to_lowercase()));
    }
    for caps in bytes_regex().captures_iter(draft) {
        let n = caps["n"]
            .parse::<u64>()
            .map_or_else(|_| caps["n"].to_string(), |n| n.to_string());
        cands.push(at(3, caps.get(0).unwrap(), ClaimKind::NumericValue, n));
    }
    if let Some(re) = Roster::pattern(&roster.people, false) {
        for m in re.find_iter(draft) {
            cands.push(at(4, m, ClaimKind::PersonName, tokens(m.as_str()).join(" ")));
        }
    }
    for caps in honorific_name_regex().captures_iter(draft) {
        let name = caps.name("n").unwrap();
        // A second capitalized word is only part of the name when the roster
        // knows the pair; otherwise keep the surname alone.
        let full = tokens(name.as_str()).join(" ");
        let keep_full = roster.people.iter().any(|p| tokens(p).join(" ") == full);
        let first_word_end = name.as_str().find(char::is_whitespace).map(|i| name.start() + i);
        let end = if keep_full {
            name.end()
        } else {
            first_word_end.unwrap_or(name.end())
        };
        let whole = caps.get(0).unwrap();
        cands.push(Candidate {
            priority: 4,
            start: whole.start(),
            end,
            kind: ClaimKind::PersonName,
            normalized: tokens(&draft[name.start()..end]).join(" "),
        });
    }
    if let Some(re) = Roster::pattern(&roster.places, true) {
        for m in re.find_iter(draft) {
            cands.push(at(5, m, ClaimKind::PlaceName, tokens(m.as_str()).join(" ")));
        }
    }

    cands.sort_by(|a, b| {
        (a.priority, a.start, std::cmp::Reverse(a.end - a.start)).cmp(&(
            b.priority,
            b.start,
            std::cmp::Reverse(b.end - b.start),
        ))
    });
    let mut taken: Vec<(usize, usize)> = Vec::new();
    let mut accepted: Vec<Candidate> = Vec::new();
    for c in cands {
        if taken.iter().any(|&(s, e)| c.start < e && s < c.end) {
            continue;
        }
        taken.push((c.start, c.end));
        accepted.push(c);
    }
    accepted.sort_by_key(|c| (c.start, c.end));

    let char_offset = |byte: usize| draft[..byte].chars().count();
    accepted
        .into_iter()
        .map(|c| Claim {
            kind: c.kind,
            surface_text: draft[c.start..c.end].to_string(),
            normalized_value: c.normalized,
            span: (char_offset(c.start), char_offset(c.end)),
        })
        .collect()
}

// -------------------------------------------------------------- verification

/// Everything in the bundle a claim can be checked against.
struct Evidence<'a> {
    bundle: &'a CaseBundle,
    /// Lowercased, whitespace-collapsed text fields.
    fields: Vec<String>,
    field_tokens: Vec<Vec<String>>,
    numbers: BTreeSet<u64>,
}

impl<'a> Evidence<'a> {
    fn new(bundle: &'a CaseBundle) -> Evidence<'a> {
        let mut raw: Vec<String> = Vec::new();
        let m = &bundle.mandate;
        raw.push(m.description.clone());
        raw.extend(m.questions.iter().cloned());
        raw.extend(m.investigator_name.iter().cloned());
        raw.extend(m.suspects.iter().cloned());
        raw.extend(m.transmitted_items.iter().cloned());
        for i in &bundle.items {
            raw.extend([i.item_id.clone(), i.vendor.clone(), i.model.clone()]);
            raw.extend(i.hash.as_ref().map(|h| h.hex.clone()));
            raw.extend(i.physical_condition.iter().cloned());
            raw.extend(i.acquisition_methods.iter().cloned());
        }
        for p in bundle.device_profiles.values() {
            raw.extend([
                p.vendor.clone(),
                p.model_code.clone(),
                p.os_version.clone(),
                p.mac_address.clone(),
                p.timezone.clone(),
            ]);
        }
        for l in bundle.all_locations() {
            raw.extend([l.name.clone(), l.category.clone()]);
            raw.extend(l.related_location.iter().cloned());
            raw.extend(l.source_file.iter().cloned());
        }
        for msg in bundle.all_messages() {
            if let Some(s) = &msg.sender {
                raw.push(s.id.clone());
                raw.extend(s.display_name.iter().cloned());
            }
            raw.extend([msg.body.clone(), msg.app.clone()]);
            raw.extend(msg.source_files.iter().cloned());
        }
        for s in &bundle.method_steps {
            raw.extend([s.action.clone(), s.purpose.clone()]);
            raw.extend(s.tool_name.iter().cloned());
            raw.extend(s.tool_version.iter().cloned());
        }
        for e in &bundle.excerpts {
            raw.push(translate_french(&e.text));
        }

        let mut numbers: BTreeSet<u64> = BTreeSet::new();
        numbers.extend(bundle.items.iter().filter_map(|i| i.storage_size));
        numbers.extend(bundle.all_locations().iter().filter_map(|l| l.size_bytes));
        for text in &raw {
            for caps in bytes_regex().captures_iter(text) {
                numbers.extend(caps["n"].parse::<u64>().ok());
            }
        }

        let fields: Vec<String> = raw
            .iter()
            .filter(|f| !f.trim().is_empty())
            .map(|f| f.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase())
            .collect();
        let field_tokens = fields.iter().map(|f| tokens(f)).collect();
        Evidence {
            bundle,
            fields,
            field_tokens,
            numbers,
        }
    }

    fn contains_bounded(&self, needle: &str) -> bool {
        let needle = needle.to_lowercase();
        if needle.is_empty() {
            return false;
        }
        self.fields.iter().any(|hay| {
            hay.match_indices(&needle).any(|(i, _)| {
                let before = hay[..i].chars().next_back();
                let mut after = hay[i + needle.len()..].chars();
                let a0 = after.next();
                let word = |c: Option<char>| c.is_some_and(|c| c.is_alphanumeric() || c == '_');
                let dotted_digit = a0 == Some('.') && after.next().is_some_and(|c| c.is_ascii_digit());
                !word(before) && !word(a0) && !dotted_digit
            })
        })
    }

    fn contains_tokens(&self, value: &str) -> bool {
        let needle = tokens(value);
        !needle.is_empty() && self.field_tokens.iter().any(|f| contains_run(f, &needle))
    }

    fn coordinate(&self, value: &str, places: u32) -> bool {
        let Some((lat, lon)) = value.split_once(',') else {
            return false;
        };
        let (Ok(lat), Ok(lon)) = (lat.parse::<f64>(), lon.parse::<f64>()) else {
            return false;
        };
        let scale = 10f64.powi(places as i32);
        let r = |x: f64| (x * scale).round() as i64;
        self.bundle
            .all_locations()
            .iter()
            .any(|l| r(l.latitude) == r(lat) && r(l.longitude) == r(lon))
    }

    fn timestamp(&self, value: &str, slack: Duration) -> bool {
        let slack = TimeDelta::from_std(slack).unwrap_or(TimeDelta::MAX);
        let instants: Vec<_> = self
            .bundle
            .all_locations()
            .iter()
            .map(|l| l.timestamp)
            .chain(self.bundle.all_messages().iter().map(|m| m.timestamp))
            .collect();
        if let Ok(ts) = DateTime::parse_from_rfc3339(&value.replace('Z', "+00:00")) {
            return instants.iter().any(|i| (*i - ts).abs() <= slack);
        }
        if let Ok(naive) = NaiveDateTime::parse_from_str(value, "%Y-%m-%dT%H:%M:%S") {
            // No offset given: accept the record's own wall clock or UTC.
            return instants
                .iter()
                .any(|i| (i.naive_local() - naive).abs() <= slack || (i.naive_utc() - naive).abs() <= slack);
        }
        if let Ok(date) = NaiveDate::parse_from_str(value, "%Y-%m-%d") {
            let m = &self.bundle.mandate;
            return m.received_date == Some(date)
                || m.deadline == Some(date)
                || instants
                    .iter()
                    .any(|i| i.date_naive() == date || i.naive_utc().date() == date);
        }
        false
    }

    fn check(&self, claim: &Claim, tol: &Tolerances) -> bool {
        let v = &claim.normalized_value;
        match claim.kind {
            ClaimKind::Coordinate => self.coordinate(v, tol.coordinate_decimal_places),
            ClaimKind::Timestamp => self.timestamp(v, tol.timestamp_slack),
            ClaimKind::NumericValue => v.parse::<u64>().is_ok_and(|n| self.numbers.contains(&n)),
            ClaimKind::Filename | ClaimKind::ToolVersion => self.contains_bounded(v),
            ClaimKind::PersonName | ClaimKind::PlaceName => self.contains_tokens(v),
        }
    }
}

pub fn verify(claims: &[Claim], bundle: &CaseBundle, tolerances: &Tolerances) -> Vec<CheckedClaim> {
    let evidence = Evidence::new(bundle);
    claims
        .iter()
        .map(|c| CheckedClaim {
            claim: c.clone(),
            status: if evidence.check(c, tolerances) {
                ClaimStatus::Grounded
            } else {
                ClaimStatus::Ungrounded
            },
        })
        .collect()
}

// -------------------------------------------------------------- completeness

fn location_line(r: &LocationRecord) -> String {
    format!(
        "{} at ({:.6}, {:.6}) on {}",
        r.name,
        r.latitude,
        r.longitude,
        format_dmy_timestamp(&r.timestamp)
    )
}

/// Facts a draft of `target` should mention.
pub fn required_facts_for(target: SectionTarget, bundle: &CaseBundle) -> Vec<RequiredFact> {
    let mut facts: Vec<Option<RequiredFact>> = Vec::new();
    let one = |phrase: &str| vec![vec![phrase.to_string()]];
    match target {
        SectionTarget::Introduction => {
            let m = &bundle.mandate;
            for (i, q) in m.questions.iter().enumerate() {
                facts.push(RequiredFact::new(format!("Question {}: {}", i + 1, q), one(q)));
            }
            for s in &m.suspects {
                facts.push(RequiredFact::new(
                    format!("Suspect: {s}"),
                    one(&strip_honorific(s)),
                ));
            }
            if let Some(inv) = &m.investigator_name {
                facts.push(RequiredFact::new(
                    format!("Investigator: {inv}"),
                    vec![vec!["investigator".into(), inv.clone()]],
                ));
            }
            for item in &m.transmitted_items {
                facts.push(RequiredFact::new(format!("Transmitted item: {item}"), one(item)));
            }
        }
        SectionTarget::ItemsReceived => {
            for item in &bundle.items {
                let id = &item.item_id;
                facts.push(RequiredFact::new(
                    format!("{id}: {} {}", item.vendor, item.model),
                    vec![vec![item.vendor.clone(), item.model.clone()]],
                ));
                let identifier = match (&item.hash, bundle.device_profiles.get(id)) {
                    (Some(h), _) => Some(format!("{} {}", h.algorithm, h.hex)).zip(Some(h.hex.clone())),
                    (None, Some(p)) if !p.mac_address.is_empty() => {
                        Some(format!("MAC {}", p.mac_address)).zip(Some(p.mac_address.clone()))
                    }
                    _ => None,
                };
                if let Some((shown, key)) = identifier {
                    facts.push(RequiredFact::new(format!("{id} identifier: {shown}"), one(&key)));
                }
                if !item.acquisition_methods.is_empty() {
                    facts.push(RequiredFact::new(
                        format!("{id} acquisition: {}", item.acquisition_methods.join(", ")),
                        vec![item.acquisition_methods.clone()],
                    ));
                }
            }
        }
        SectionTarget::Methodology => {
            for s in &bundle.method_steps {
                facts.push(RequiredFact::new(
                    format!("Step {}: {}", s.ordinal, s.action),
                    one(&s.action),
                ));
                if let Some(tool) = &s.tool_name {
                    let shown = match &s.tool_version {
                        Some(v) => format!("{tool} {v}"),
                        None => tool.clone(),
                    };
                    facts.push(RequiredFact::new(format!("Tool: {shown}"), one(tool)));
                }
            }
        }
        SectionTarget::ResultsConversations => {
            // Every extracted message is treated as relevant.
            for msg in bundle.all_messages() {
                let who = msg
                    .sender
                    .as_ref()
                    .map(|s| s.display_name.clone().unwrap_or_else(|| s.id.clone()))
                    .unwrap_or_else(|| "(no sender)".into());
                let body = msg.body.split_whitespace().collect::<Vec<_>>().join(" ");
                facts.push(RequiredFact::new(
                    format!("{} {who}: {body}", format_dmy_timestamp(&msg.timestamp)),
                    one(&body),
                ));
            }
        }
        SectionTarget::ResultsLocations => {
            let records: Vec<LocationRecord> = bundle.all_locations().into_iter().cloned().collect();
            for (k, cluster) in group_locations_spatial(&records, DEFAULT_RADIUS_M)
                .iter()
                .enumerate()
            {
                let members: Vec<&LocationRecord> =
                    cluster.member_indices.iter().map(|&i| &records[i]).collect();
                let place = members
                    .iter()
                    .any(|r| r.related_location.is_some())
                    .then(|| cluster.label.clone());
                let mut alternatives: Vec<Vec<String>> = Vec::new();
                alternatives.extend(place.iter().map(|p| vec![p.clone()]));
                alternatives.extend(members.iter().map(|r| vec![r.name.clone()]));
                let head = match &place {
                    Some(p) => format!("Near {p}"),
                    None => format!("Location group {}", k + 1),
                };
                let lines: Vec<String> = members.iter().map(|r| location_line(r)).collect();
                facts.push(RequiredFact::new(
                    format!("{head} ({} records): {}", members.len(), lines.join("; ")),
                    alternatives,
                ));
            }
        }
    }
    // A fact that another fact already covers could never be missed alone.
    let mut seen = BTreeSet::new();
    facts
        .into_iter()
        .flatten()
        .filter(|f| seen.insert(f.alternatives.clone()))
        .collect()
}

pub fn score_text(
    text: &str,
    draft_ref: DraftRef,
    bundle: &CaseBundle,
    target: SectionTarget,
    tolerances: &Tolerances,
) -> GroundingReport {
    let roster = Roster::from_bundle(bundle);
    let claims = verify(&extract_claims(text, &roster), bundle, tolerances);
    let hallucination_count = claims
        .iter()
        .filter(|c| c.status == ClaimStatus::Ungrounded)
        .count();
    let draft_tokens = tokens(text);
    let required_facts: Vec<FactCheck> = required_facts_for(target, bundle)
        .into_iter()
        .map(|f| FactCheck {
            satisfied: f.satisfied_in(&draft_tokens),
            description: f.description,
        })
        .collect();
    let satisfied = required_facts.iter().filter(|f| f.satisfied).count();
    let completeness = if required_facts.is_empty() {
        1.0
    } else {
        satisfied as f64 / required_facts.len() as f64
    };
    GroundingReport {
        draft_ref,
        claims,
        hallucination_count,
        required_facts,
        completeness,
    }
}

pub fn score(
    draft: &GeneratedDraft,
    bundle: &CaseBundle,
    target: SectionTarget,
    tolerances: &Tolerances,
) -> GroundingReport {
    let draft_ref = DraftRef {
        prompt_id: draft.prompt_id.clone(),
        backend_label: draft.backend_label.clone(),
    };
    score_text(&draft.text, draft_ref, bundle, target, tolerances)
}
