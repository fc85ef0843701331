//! Token-level helpers shared by the line parsers.

use std::sync::OnceLock;

use chrono::{FixedOffset, NaiveDate, NaiveDateTime, NaiveTime, TimeZone};
use regex::Regex;

use crate::case_model::Timestamp;

/// Label synonyms seen in French-localised tool reports.
pub const FRENCH_SYNONYMS: &[(&str, &str)] = &[
    ("Fichier source", "Source File"),
    ("Taille", "Size"),
    ("octets", "bytes"),
    ("Entrant", "Incoming"),
    ("Sortant", "Outgoing"),
    ("Heure", "Hour"),
];

/// Replace every French label with its English equivalent.
pub fn translate_french(text: &str) -> String {
    static RES: OnceLock<Vec<(Regex, &'static str)>> = OnceLock::new();
    let res = RES.get_or_init(|| {
        FRENCH_SYNONYMS
            .iter()
            .map(|(fr, en)| (Regex::new(&format!(r"\b{}\b", regex::escape(fr))).unwrap(), *en))
            .collect()
    });
    let mut out = text.to_string();
    for (re, en) in res {
        out = re.replace_all(&out, *en).into_owned();
    }
    out
}

pub fn contains_french(text: &str) -> bool {
    translate_french(text) != text
}

/// Parse a decimal written with either `.` or `,` as the separator.
pub fn parse_decimal(token: &str) -> Option<f64> {
    let t = token.trim();
    if t.is_empty() || t.matches([',', '.']).count() > 1 {
        return None;
    }
    let body = t.strip_prefix(['-', '+']).unwrap_or(t);
    if body.is_empty() || !body.chars().all(|c| c.is_ascii_digit() || c == '.' || c == ',') {
        return None;
    }
    if body.starts_with(['.', ',']) || body.ends_with(['.', ',']) {
        return None;
    }
    t.replace(',', ".").parse().ok()
}

const DECIMAL: &str = r"[-+]?\d{1,3}(?:[.,]\d+)?";

/// A `(lat, lon)` pair. The pair separator is a comma or semicolon followed by
/// whitespace, so `38,907500, -77,072778` reads as two comma-decimals.
pub fn coordinate_pair_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(&format!(
            r"\(\s*(?P<lat>{DECIMAL})\s*[,;]\s+(?P<lon>{DECIMAL})\s*\)"
        ))
        .unwrap()
    })
}

pub fn parse_coordinate_pair(text: &str) -> Option<(f64, f64)> {
    let caps = coordinate_pair_regex().captures(text)?;
    let lat = parse_decimal(&caps["lat"])?;
    let lon = parse_decimal(&caps["lon"])?;
    in_bounds(lat, lon).then_some((lat, lon))
}

pub fn in_bounds(lat: f64, lon: f64) -> bool {
    (-90.0..=90.0).contains(&lat) && (-180.0..=180.0).contains(&lon)
}

pub fn fixed_offset(hours: i32, minutes: i32) -> Option<FixedOffset> {
    let sign = if hours < 0 { -1 } else { 1 };
    FixedOffset::east_opt(sign * (hours.abs() * 3600 + minutes * 60))
}

pub fn utc() -> FixedOffset {
    FixedOffset::east_opt(0).unwrap()
}

/// `UTC+0`, `UTC-5`, `UTC+05:30`, optionally wrapped in parentheses.
pub fn offset_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"\(?\s*UTC\s*(?P<sign>[+-])\s*(?P<h>\d{1,2})(?::?(?P<m>\d{2}))?\s*\)?").unwrap()
    })
}

pub fn parse_offset(text: &str) -> Option<FixedOffset> {
    let caps = offset_regex().captures(text)?;
    let h: i32 = caps["h"].parse().ok()?;
    let m: i32 = caps.name("m").map_or(Some(0), |m| m.as_str().parse().ok())?;
    if h > 14 || m > 59 {
        return None;
    }
    let h = if &caps["sign"] == "-" { -h } else { h };
    if h == 0 && &caps["sign"] == "-" {
        return FixedOffset::west_opt(m * 60);
    }
    fixed_offset(h, m)
}

/// Render an offset the way the lab log writes it: `UTC+0`, `UTC-5`, `UTC+5:30`.
pub fn format_offset(offset: FixedOffset) -> String {
    let secs = offset.local_minus_utc();
    let sign = if secs < 0 { '-' } else { '+' };
    let abs = secs.abs();
    let (h, m) = (abs / 3600, (abs % 3600) / 60);
    if m == 0 {
        format!("UTC{sign}{h}")
    } else {
        format!("UTC{sign}{h}:{m:02}")
    }
}

pub fn parse_dmy(text: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(text.trim(), "%d.%m.%Y").ok()
}

pub fn parse_mdy(text: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(text.trim(), "%m/%d/%Y").ok()
}

/// `HH:MM` or `HH:MM:SS`; missing seconds are zero.
pub fn parse_clock(text: &str) -> Option<NaiveTime> {
    let t = text.trim();
    NaiveTime::parse_from_str(t, "%H:%M:%S")
        .or_else(|_| NaiveTime::parse_from_str(t, "%H:%M"))
        .ok()
}

pub fn localize(date: NaiveDate, time: NaiveTime, offset: FixedOffset) -> Option<Timestamp> {
    offset
        .from_local_datetime(&NaiveDateTime::new(date, time))
        .single()
}

/// `DD.MM.YYYY HH:MM[:SS][(UTC±N)]`; without an offset token `default` is used.
pub fn parse_dmy_timestamp(text: &str, default: FixedOffset) -> Option<(Timestamp, bool)> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| {
        Regex::new(r"^\s*(?P<d>\d{2}\.\d{2}\.\d{4})\s+(?P<t>\d{2}:\d{2}(?::\d{2})?)\s*(?P<off>\(?\s*UTC\s*[+-]\s*\d{1,2}(?::?\d{2})?\s*\)?)?\s*$").unwrap()
    });
    let caps = re.captures(text)?;
    let date = parse_dmy(&caps["d"])?;
    let time = parse_clock(&caps["t"])?;
    let (offset, explicit) = match caps.name("off") {
        Some(m) => (parse_offset(m.as_str())?, true),
        None => (default, false),
    };
    Some((localize(date, time, offset)?, explicit))
}

/// Render a timestamp as `DD.MM.YYYY HH:MM:SS(UTC±N)`.
pub fn format_dmy_timestamp(ts: &Timestamp) -> String {
    format!(
        "{}({})",
        ts.format("%d.%m.%Y %H:%M:%S"),
        format_offset(*ts.offset())
    )
}

/// Split a table row on tabs or runs of two or more spaces.
pub fn split_columns(line: &str) -> Vec<String> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"\t+ *| {2,}\t*").unwrap());
    re.split(line.trim())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

/// `-` and empty cells mean "absent".
pub fn optional_cell(cell: &str) -> Option<String> {
    let c = cell.trim();
    (!c.is_empty() && c != "-").then(|| c.to_string())
}

pub fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Byte count in a `(Size : N octets)` / `Size: N bytes` annotation.
pub fn parse_size_annotation(text: &str) -> Option<u64> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE
        .get_or_init(|| Regex::new(r"(?i)\b(?:size|taille)\s*:\s*(?P<n>\d+)\s*(?:octets|bytes)\b").unwrap());
    re.captures(text)?["n"].parse().ok()
}

pub fn app_from_paths<'a>(paths: impl IntoIterator<Item = &'a String>) -> String {
    for p in paths {
        let lower = p.to_lowercase();
        for (needle, app) in [
            ("telegram", "Telegram"),
            ("whatsapp", "WhatsApp"),
            ("mail", "Email"),
            ("sms", "SMS"),
        ] {
            if lower.contains(needle) {
                return app.to_string();
            }
        }
    }
    String::new()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimals_in_both_locales() {
        assert_eq!(parse_decimal("38,9075"), Some(38.9075));
        assert_eq!(parse_decimal("-77,0727777777778"), Some(-77.0727777777778));
        assert_eq!(parse_decimal("38.907500"), Some(38.9075));
        assert_eq!(parse_decimal("1,2.3"), None);
        assert_eq!(parse_decimal("abc"), None);
        assert_eq!(parse_decimal("-"), None);
    }

    #[test]
    fn pairs_with_mixed_separators() {
        assert_eq!(
            parse_coordinate_pair("(38,907500, -77,072778)"),
            parse_coordinate_pair("(38.907500, -77.072778)")
        );
        assert_eq!(parse_coordinate_pair("(91.0, 10.0)"), None);
    }

    #[test]
    fn offsets() {
        assert_eq!(parse_offset("(UTC+0)").unwrap().local_minus_utc(), 0);
        assert_eq!(parse_offset("(UTC-5)").unwrap().local_minus_utc(), -5 * 3600);
        assert_eq!(
            parse_offset("UTC+05:30").unwrap().local_minus_utc(),
            5 * 3600 + 1800
        );
        for secs in [-5 * 3600, 0, 19800, -1800] {
            let off = FixedOffset::east_opt(secs).unwrap();
            assert_eq!(parse_offset(&format_offset(off)), Some(off));
        }
    }

    #[test]
    fn dmy_timestamps() {
        let (ts, explicit) = parse_dmy_timestamp("05.02.2019 07:16:04(UTC-5)", utc()).unwrap();
        assert!(explicit);
        assert_eq!(ts.to_rfc3339(), "2019-02-05T07:16:04-05:00");
        let (ts, explicit) = parse_dmy_timestamp("14.02.2019 14:33", utc()).unwrap();
        assert!(!explicit);
        assert_eq!(ts.to_rfc3339(), "2019-02-14T14:33:00+00:00");
        assert_eq!(format_dmy_timestamp(&ts), "14.02.2019 14:33:00(UTC+0)");
    }

    #[test]
    fn french_labels_translate() {
        assert_eq!(
            translate_french("Fichier source: x (Taille : 5 octets) Direction:Entrant"),
            "Source File: x (Size : 5 bytes) Direction:Incoming"
        );
    }

    #[test]
    fn columns_split_on_tabs_and_wide_gaps() {
        assert_eq!(
            split_columns("Detected Phone Vendor   Samsung               build.prop: 0x2AC"),
            vec!["Detected Phone Vendor", "Samsung", "build.prop: 0x2AC"]
        );
        assert_eq!(split_columns("a\t  b\tc d"), vec!["a", "b", "c d"]);
    }
}
