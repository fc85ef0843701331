use std::sync::OnceLock;

use regex::Regex;

use super::lex::{app_from_paths, optional_cell, parse_dmy_timestamp, utc};
use super::{numbered_lines, ParseDiagnostic};
use crate::case_model::{Direction, MessageRecord, Sender, Timestamp};

fn direction_word(word: &str) -> Option<Direction> {
    match word.trim().to_lowercase().as_str() {
        "incoming" | "entrant" | "received" | "reçu" => Some(Direction::Incoming),
        "outgoing" | "sortant" | "sent" | "envoyé" => Some(Direction::Outgoing),
        "system" | "système" => Some(Direction::System),
        _ => None,
    }
}

/// `695862679 (Wonder Woman)`, `695862679 Wonder Woman`, `-` (absent).
pub fn parse_sender_label(text: &str) -> Option<Sender> {
    static PAREN: OnceLock<Regex> = OnceLock::new();
    let paren = PAREN.get_or_init(|| Regex::new(r"^(?P<id>[^()]+?)\s*\((?P<name>[^()]+)\)$").unwrap());
    let t = optional_cell(text)?;
    if let Some(caps) = paren.captures(&t) {
        return Some(Sender {
            id: caps["id"].trim().to_string(),
            display_name: Some(caps["name"].trim().to_string()),
        });
    }
    let (first, rest) = match t.split_once(char::is_whitespace) {
        Some((a, b)) => (a, Some(b.trim())),
        None => (t.as_str(), None),
    };
    let id_like = first.chars().any(|c| c.is_ascii_digit() || c == '@' || c == '+');
    if id_like {
        Some(Sender {
            id: first.to_string(),
            display_name: rest.filter(|r| !r.is_empty()).map(str::to_string),
        })
    } else {
        Some(Sender {
            id: t.clone(),
            display_name: None,
        })
    }
}

fn source_label(line: &str) -> Option<&str> {
    let t = line.trim_start();
    for label in ["Fichier source", "Source File", "Source file"] {
        if let Some(rest) = t.strip_prefix(label) {
            if let Some(v) = rest.trim_start().strip_prefix(':') {
                return Some(v.trim());
            }
        }
    }
    None
}

fn looks_like_source_path(line: &str) -> bool {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| {
        Regex::new(r"^\s*(?:[A-Z][A-Z0-9_]*\s*\([A-Za-z0-9]+\)\s*/|/\S)|\s:\s0x[0-9A-Fa-f]+").unwrap()
    });
    re.is_match(line)
}

fn push_source_lines(into: &mut Vec<String>, line: &str) {
    for part in line.split(" & ") {
        let p = part.trim().trim_end_matches('&').trim();
        if !p.is_empty() {
            into.push(p.to_string());
        }
    }
}

struct Draft {
    sender: Option<Sender>,
    timestamp: Timestamp,
    direction: Option<Direction>,
    deleted: Option<bool>,
    body: Vec<String>,
    sources: Vec<String>,
    in_sources: bool,
    line: usize,
}

impl Draft {
    fn new(line: usize, timestamp: Timestamp) -> Draft {
        Draft {
            sender: None,
            timestamp,
            direction: None,
            deleted: None,
            body: Vec::new(),
            sources: Vec::new(),
            in_sources: false,
            line,
        }
    }

    fn finish(self, out: &mut Vec<MessageRecord>, diags: &mut Vec<ParseDiagnostic>) {
        let body = self.body.join("\n").trim().to_string();
        if body.is_empty() {
            diags.push(ParseDiagnostic::warning(
                self.line,
                "message without body skipped",
            ));
            return;
        }
        out.push(MessageRecord {
            sender: self.sender,
            body,
            timestamp: self.timestamp,
            direction: self.direction,
            app: app_from_paths(&self.sources),
            source_files: self.sources,
            deleted: self.deleted,
        });
    }
}

fn feed_entry_line(draft: &mut Draft, line: &str) {
    let trimmed = line.trim();
    if let Some(rest) = source_label(line) {
        draft.in_sources = true;
        push_source_lines(&mut draft.sources, rest);
    } else if draft.in_sources || (!draft.body.is_empty() && looks_like_source_path(line)) {
        draft.in_sources = true;
        push_source_lines(&mut draft.sources, trimmed);
    } else {
        draft.body.push(trimmed.to_string());
    }
}

/// Tool-report chat entries opened by `DD.MM.YYYY HH:MM(UTC±N) Direction:…`.
pub fn parse_tool_report_messages(text: &str) -> (Vec<MessageRecord>, Vec<ParseDiagnostic>) {
    static HEAD: OnceLock<Regex> = OnceLock::new();
    static LOOSE: OnceLock<Regex> = OnceLock::new();
    let head = HEAD.get_or_init(|| {
        Regex::new(r"^\s*(?P<ts>\d{2}\.\d{2}\.\d{4}\s+\d{2}:\d{2}(?::\d{2})?\s*\(UTC\s*[+-]\s*\d{1,2}(?::?\d{2})?\))\s*(?:Direction\s*:\s*(?P<dir>[^,\s]+))?\s*(?:,\s*(?P<sender>.+?))?\s*$").unwrap()
    });
    let loose =
        LOOSE.get_or_init(|| Regex::new(r"^\s*\d{1,2}[./]\d{1,2}[./]\d{2,4}\b|Direction\s*:").unwrap());

    let mut out = Vec::new();
    let mut diags = Vec::new();
    let mut current: Option<Draft> = None;
    let mut orphan_reported = false;
    let mut skipping = false;

    for (n, line) in numbered_lines(text) {
        if line.trim().is_empty() {
            if let Some(d) = current.as_mut() {
                if !d.body.is_empty() {
                    d.in_sources = true;
                }
            }
            continue;
        }
        if let Some(caps) = head.captures(line) {
            if let Some(d) = current.take() {
                d.finish(&mut out, &mut diags);
            }
            skipping = false;
            match parse_dmy_timestamp(&caps["ts"], utc()) {
                Some((ts, _)) => {
                    let mut d = Draft::new(n, ts);
                    d.direction = caps.name("dir").and_then(|m| direction_word(m.as_str()));
                    d.sender = caps.name("sender").and_then(|m| parse_sender_label(m.as_str()));
                    current = Some(d);
                }
                None => {
                    diags.push(ParseDiagnostic::error(n, "entry timestamp is not a valid date"));
                    skipping = true;
                }
            }
            continue;
        }
        if loose.is_match(line) && current.as_ref().is_none_or(|d| d.in_sources || d.body.is_empty()) {
            if let Some(d) = current.take() {
                d.finish(&mut out, &mut diags);
            }
            diags.push(ParseDiagnostic::error(
                n,
                "entry lacks a parseable timestamp line; skipped",
            ));
            skipping = true;
            continue;
        }
        if skipping {
            continue;
        }
        match current.as_mut() {
            Some(d) => {
                if d.in_sources && source_label(line).is_none() && !looks_like_source_path(line) {
                    // Text after the source block with no new header.
                    diags.push(ParseDiagnostic::warning(
                        n,
                        "unexpected text after source lines ignored",
                    ));
                    continue;
                }
                feed_entry_line(d, line)
            }
            None if !orphan_reported => {
                diags.push(ParseDiagnostic::error(
                    n,
                    "entry lacks a parseable timestamp line; skipped",
                ));
                orphan_reported = true;
            }
            None => {}
        }
    }
    if let Some(d) = current.take() {
        d.finish(&mut out, &mut diags);
    }
    (out, diags)
}

fn is_lablog_header(line: &str) -> bool {
    let t = line.trim().to_lowercase();
    (t.starts_with("from") && t.contains("timestamp")) || t == "body" || t == "source file information"
}

/// Lab-log message table: a `From  Timestamp  Deleted  Instant Message
/// Status` row, the body lines, then the source-file lines.
pub fn parse_lablog_messages(text: &str) -> (Vec<MessageRecord>, Vec<ParseDiagnostic>) {
    static ROW: OnceLock<Regex> = OnceLock::new();
    let row = ROW.get_or_init(|| {
        Regex::new(r"^\s*(?P<from>.*?)\s*(?P<ts>\b\d{2}\.\d{2}\.\d{4}\s+\d{2}:\d{2}(?::\d{2})?\s*\(UTC\s*[+-]\s*\d{1,2}(?::?\d{2})?\))\s*(?P<rest>.*)$").unwrap()
    });

    let mut out = Vec::new();
    let mut diags = Vec::new();
    let mut current: Option<Draft> = None;
    let mut orphan_reported = false;

    for (n, line) in numbered_lines(text) {
        if line.trim().is_empty() || is_lablog_header(line) {
            continue;
        }
        if let Some(caps) = row.captures(line) {
            if let Some(d) = current.take() {
                d.finish(&mut out, &mut diags);
            }
            let Some((ts, _)) = parse_dmy_timestamp(&caps["ts"], utc()) else {
                diags.push(ParseDiagnostic::error(n, "row timestamp is not a valid date"));
                continue;
            };
            let mut d = Draft::new(n, ts);
            d.sender = parse_sender_label(&caps["from"]);
            let rest: Vec<&str> = caps["rest"].split_whitespace().collect();
            d.deleted = rest.first().and_then(|c| match c.to_lowercase().as_str() {
                "yes" | "true" | "deleted" | "oui" => Some(true),
                "no" | "false" | "non" => Some(false),
                _ => None,
            });
            d.direction = rest.iter().skip(1).find_map(|c| direction_word(c));
            current = Some(d);
            continue;
        }
        if line.contains("(UTC") && current.as_ref().is_none_or(|d| d.in_sources) {
            diags.push(ParseDiagnostic::error(
                n,
                "row lacks a parseable timestamp; skipped",
            ));
            continue;
        }
        match current.as_mut() {
            Some(d) => feed_entry_line(d, line),
            None if !orphan_reported => {
                diags.push(ParseDiagnostic::error(
                    n,
                    "entry lacks a parseable timestamp line; skipped",
                ));
                orphan_reported = true;
            }
            None => {}
        }
    }
    if let Some(d) = current.take() {
        d.finish(&mut out, &mut diags);
    }
    (out, diags)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum MsgColumn {
    From,
    Body,
    Timestamp,
    App,
    Direction,
    Deleted,
    Sources,
}

fn message_column(header: &str) -> Option<MsgColumn> {
    Some(match header.trim().to_lowercase().as_str() {
        "from" | "sender" => MsgColumn::From,
        "body" => MsgColumn::Body,
        "timestamp: time" | "timestamp" | "time" => MsgColumn::Timestamp,
        "app" => MsgColumn::App,
        "direction" => MsgColumn::Direction,
        "deleted" => MsgColumn::Deleted,
        "source files" | "source_files" | "source file information" => MsgColumn::Sources,
        _ => return None,
    })
}

/// Reduced ` ; `-delimited message table. A row whose non-body cells are all
/// empty continues the previous row's body on a new line.
pub fn parse_csv_messages(text: &str) -> (Vec<MessageRecord>, Vec<ParseDiagnostic>) {
    let mut out: Vec<MessageRecord> = Vec::new();
    let mut diags = Vec::new();
    let mut lines = numbered_lines(text).filter(|(_, l)| !l.trim().is_empty());

    let Some((hn, header)) = lines.next() else {
        return (out, diags);
    };
    let columns: Vec<Option<MsgColumn>> = header.split(';').map(message_column).collect();
    let Some(body_idx) = columns.iter().position(|c| *c == Some(MsgColumn::Body)) else {
        diags.push(ParseDiagnostic::error(hn, "header has no Body column"));
        return (out, diags);
    };
    if !columns.contains(&Some(MsgColumn::Timestamp)) {
        diags.push(ParseDiagnostic::error(hn, "header has no Timestamp column"));
        return (out, diags);
    }
    let trailing = columns.len() - body_idx - 1;

    for (n, line) in lines {
        let raw: Vec<&str> = line.split(';').collect();
        if raw.len() < 2 {
            diags.push(ParseDiagnostic::error(n, "no ` ; ` delimiter on data row"));
            continue;
        }
        if raw.len() < columns.len() {
            diags.push(ParseDiagnostic::error(n, "too few ` ; `-delimited cells"));
            continue;
        }
        // Extra delimiters belong to the body.
        let body_end = raw.len() - trailing;
        let mut cells: Vec<String> = raw[..body_idx].iter().map(|c| c.trim().to_string()).collect();
        cells.push(raw[body_idx..body_end].join(";").trim().to_string());
        cells.extend(raw[body_end..].iter().map(|c| c.trim().to_string()));

        let cell = |c: MsgColumn| {
            columns
                .iter()
                .position(|x| *x == Some(c))
                .map(|i| cells[i].as_str())
                .unwrap_or("")
        };

        let continuation = columns
            .iter()
            .enumerate()
            .all(|(i, _)| i == body_idx || cells[i].is_empty());
        if continuation {
            match out.last_mut() {
                Some(prev) => {
                    prev.body.push('\n');
                    prev.body.push_str(cell(MsgColumn::Body));
                }
                None => diags.push(ParseDiagnostic::error(
                    n,
                    "continuation row without a preceding record; dropped",
                )),
            }
            continue;
        }

        let Some((timestamp, explicit)) = parse_dmy_timestamp(cell(MsgColumn::Timestamp), utc()) else {
            diags.push(ParseDiagnostic::error(n, "unreadable timestamp; row skipped"));
            continue;
        };
        if !explicit {
            diags.push(ParseDiagnostic::warning(
                n,
                "timestamp without offset read as UTC+0",
            ));
        }
        let sources: Vec<String> = cell(MsgColumn::Sources)
            .split(" & ")
            .filter_map(optional_cell)
            .collect();
        let app = match optional_cell(cell(MsgColumn::App)) {
            Some(app) => app,
            None => app_from_paths(&sources),
        };
        out.push(MessageRecord {
            sender: parse_sender_label(cell(MsgColumn::From)),
            body: cell(MsgColumn::Body).to_string(),
            timestamp,
            direction: direction_word(cell(MsgColumn::Direction)),
            app,
            source_files: sources,
            deleted: match cell(MsgColumn::Deleted).to_lowercase().as_str() {
                "yes" | "true" => Some(true),
                "no" | "false" => Some(false),
                _ => None,
            },
        });
    }

    for rec in out.iter_mut() {
        rec.body = rec.body.trim_end_matches('\n').to_string();
    }
    (out, diags)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{has_errors, Severity};

    const TOOL_MESSAGES: &str = include_str!("../../fixtures/case/tool_report_messages.txt");
    const LABLOG_MESSAGES: &str = include_str!("../../fixtures/case/lablog_messages.txt");
    const CSV_MESSAGES: &str = include_str!("../../fixtures/case/csv_messages.txt");

    #[test]
    fn tool_report_chat() {
        let (recs, diags) = parse_tool_report_messages(TOOL_MESSAGES);
        assert!(diags.is_empty(), "{diags:?}");
        assert_eq!(recs.len(), 3);
        assert_eq!(recs[0].body, "Wonder Woman created the group Secret");
        assert_eq!(recs[0].timestamp.to_rfc3339(), "2019-02-05T12:16:00+00:00");
        assert_eq!(recs[0].direction, Some(Direction::Incoming));
        assert_eq!(recs[0].sender, None);
        assert_eq!(recs[0].app, "Telegram");
        let s = recs[1].sender.as_ref().unwrap();
        assert_eq!(s.id, "695862679");
        assert_eq!(s.display_name.as_deref(), Some("Wonder Woman"));
        assert_eq!(recs[1].source_files.len(), 2);
        assert_eq!(recs[2].direction, Some(Direction::Incoming));
        assert!(recs[2].body.starts_with("A package is waiting"));
    }

    #[test]
    fn tool_report_bad_timestamp() {
        let text = "45.13.2019 12:16(UTC+0) Direction:Incoming\nhello\n\n05.02.2019 12:17(UTC+0) Direction:Outgoing\nbye\n";
        let (recs, diags) = parse_tool_report_messages(text);
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].direction, Some(Direction::Outgoing));
        assert!(has_errors(&diags));
    }

    #[test]
    fn lablog_chat() {
        let (recs, diags) = parse_lablog_messages(LABLOG_MESSAGES);
        assert!(diags.is_empty(), "{diags:?}");
        assert_eq!(recs.len(), 3);
        assert_eq!(recs[0].sender, None);
        assert_eq!(recs[0].timestamp.to_rfc3339(), "2019-02-05T07:16:04-05:00");
        assert_eq!(recs[0].body, "Wonder Woman created the group Secret");
        assert_eq!(recs[0].deleted, None);
        let s = recs[1].sender.as_ref().unwrap();
        assert_eq!(
            (s.id.as_str(), s.display_name.as_deref()),
            ("695862679", Some("Wonder Woman"))
        );
        assert_eq!(recs[1].source_files.len(), 2);
        assert!(recs[1].source_files[1].ends_with("(Table: users, Size: 4144752 bytes)"));
        assert_eq!(parse_lablog_messages(""), (vec![], vec![]));
    }

    #[test]
    fn csv_chat() {
        let (recs, diags) = parse_csv_messages(CSV_MESSAGES);
        assert!(diags.is_empty(), "{diags:?}");
        assert_eq!(recs.len(), 3);
        assert_eq!(recs[0].sender, None);
        assert_eq!(
            recs[1].body,
            "Han, Obi Wan,\nThis mission will be tricky and we need the best!"
        );
        assert_eq!(recs[2].timestamp.to_rfc3339(), "2019-02-05T07:17:49-05:00");
    }

    #[test]
    fn csv_single_row_and_orphan() {
        let single = "From ; Body ; Timestamp: Time\n1 A ; hi ; 05.02.2019 07:16:04(UTC-5)\n";
        assert_eq!(parse_csv_messages(single).0.len(), 1);

        let orphan = "From ; Body ; Timestamp: Time\n ; dangling ;\n1 A ; hi ; 05.02.2019 07:16:04(UTC-5)\n";
        let (recs, diags) = parse_csv_messages(orphan);
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].body, "hi");
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].severity, Severity::Error);
    }

    #[test]
    fn csv_without_delimiter() {
        let text = "From ; Body ; Timestamp: Time\nno delimiter here\n";
        let (recs, diags) = parse_csv_messages(text);
        assert!(recs.is_empty());
        assert!(has_errors(&diags));
    }

    #[test]
    fn sender_labels() {
        assert_eq!(parse_sender_label("-"), None);
        assert_eq!(parse_sender_label("  "), None);
        let s = parse_sender_label("a@b.ch").unwrap();
        assert_eq!((s.id.as_str(), s.display_name), ("a@b.ch", None));
        let s = parse_sender_label("Wonder Woman").unwrap();
        assert_eq!(s.id, "Wonder Woman");
    }
}
