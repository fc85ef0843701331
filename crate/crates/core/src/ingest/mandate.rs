use std::sync::OnceLock;

use chrono::NaiveDate;
use regex::Regex;

use super::lex::{collapse_whitespace, parse_dmy};
use super::{numbered_lines, ParseDiagnostic};
use crate::case_model::Mandate;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Block {
    Date,
    Description,
    Items,
    Mandate,
    Deadline,
    Note,
}

const LABELS: &[(&str, Block)] = &[
    ("date", Block::Date),
    ("description", Block::Description),
    ("items", Block::Items),
    ("mandate", Block::Mandate),
    ("deadline", Block::Deadline),
    ("note", Block::Note),
];

fn block_label(line: &str) -> Option<(Block, &str)> {
    let (head, rest) = line.trim_start().split_once(':')?;
    let head = head.trim().to_ascii_lowercase();
    LABELS
        .iter()
        .find(|(label, _)| *label == head)
        .map(|(_, block)| (*block, rest))
}

struct Captured {
    block: Block,
    line: usize,
    lines: Vec<String>,
}

impl Captured {
    fn joined(&self) -> String {
        collapse_whitespace(&self.lines.join(" "))
    }
}

/// Parse a mandate laid out as labeled blocks (`Date:`, `Description:`,
/// `Items:`, `Mandate:`, `Deadline:`, `Note:`) in any order.
pub fn parse_mandate(text: &str) -> (Mandate, Vec<ParseDiagnostic>) {
    let mut diags = Vec::new();
    let mut blocks: Vec<Captured> = Vec::new();

    for (n, line) in numbered_lines(text) {
        if let Some((block, rest)) = block_label(line) {
            blocks.push(Captured {
                block,
                line: n,
                lines: vec![rest.trim().to_string()],
            });
        } else if let Some(current) = blocks.last_mut() {
            current.lines.push(line.trim().to_string());
        } else if !line.trim().is_empty() {
            diags.push(ParseDiagnostic::warning(
                n,
                "text before the first labeled block ignored",
            ));
        }
    }

    let find = |b: Block| blocks.iter().find(|c| c.block == b);
    let last_line = text.lines().count().max(1);
    let mut mandate = Mandate::default();

    match find(Block::Date) {
        Some(c) => {
            mandate.received_date = first_date(&c.joined());
            if mandate.received_date.is_none() {
                diags.push(ParseDiagnostic::warning(
                    c.line,
                    "Date block has no readable date",
                ));
            }
        }
        None => diags.push(ParseDiagnostic::warning(last_line, "no Date block")),
    }

    match find(Block::Description) {
        Some(c) => mandate.description = c.joined(),
        None => diags.push(ParseDiagnostic::error(last_line, "missing Description block")),
    }

    if let Some(c) = find(Block::Items) {
        mandate.transmitted_items = c
            .lines
            .iter()
            .map(|l| l.trim().trim_start_matches(['-', '*']).trim().to_string())
            .filter(|l| !l.is_empty())
            .collect();
    }

    match find(Block::Mandate) {
        Some(c) => {
            let body = c.joined();
            mandate.questions = split_questions(&body);
            if mandate.questions.is_empty() {
                diags.push(ParseDiagnostic::warning(
                    c.line,
                    "Mandate block lists no questions",
                ));
            }
            mandate.deadline = find_deadline(&body);
        }
        None => diags.push(ParseDiagnostic::error(last_line, "missing Mandate block")),
    }

    if let Some(c) = find(Block::Deadline) {
        mandate.deadline = first_date(&c.joined()).or(mandate.deadline);
    }

    if let Some(c) = find(Block::Note) {
        mandate.investigator_name = investigator(&c.joined());
    }

    let mut name_sources = vec![mandate.description.clone()];
    name_sources.extend(mandate.questions.iter().cloned());
    mandate.suspects = honorific_names(&name_sources.join(" "));

    (mandate, diags)
}

fn first_date(text: &str) -> Option<NaiveDate> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"\b(\d{2}\.\d{2}\.\d{4}|\d{4}-\d{2}-\d{2})\b").unwrap());
    for m in re.find_iter(text) {
        let s = m.as_str();
        if let Some(d) = parse_dmy(s).or_else(|| NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()) {
            return Some(d);
        }
    }
    written_date(text)
}

/// `12th of October 2023`, `1 March 2020`.
fn written_date(text: &str) -> Option<NaiveDate> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| {
        Regex::new(r"(?i)\b(?P<d>\d{1,2})(?:st|nd|rd|th)?\s+(?:of\s+)?(?P<m>january|february|march|april|may|june|july|august|september|october|november|december)\s+(?P<y>\d{4})\b").unwrap()
    });
    let caps = re.captures(text)?;
    let month = [
        "january",
        "february",
        "march",
        "april",
        "may",
        "june",
        "july",
        "august",
        "september",
        "october",
        "november",
        "december",
    ]
    .iter()
    .position(|m| caps["m"].eq_ignore_ascii_case(m))? as u32
        + 1;
    NaiveDate::from_ymd_opt(caps["y"].parse().ok()?, month, caps["d"].parse().ok()?)
}

fn find_deadline(text: &str) -> Option<NaiveDate> {
    let lower = text.to_lowercase();
    let idx = ["before", "deadline", "by the", "no later than"]
        .iter()
        .filter_map(|k| lower.find(k))
        .min()?;
    first_date(&text[idx..])
}

fn roman_value(token: &str) -> Option<u32> {
    let mut total = 0u32;
    let mut prev = 0u32;
    for c in token.chars().rev() {
        let v = match c {
            'i' => 1,
            'v' => 5,
            'x' => 10,
            'l' => 50,
            'c' => 100,
            _ => return None,
        };
        if v < prev {
            total = total.checked_sub(v)?;
        } else {
            total += v;
            prev = v;
        }
    }
    (total > 0).then_some(total)
}

/// Split an enumerated question list. Enumerators must run 1, 2, 3 (or
/// i, ii, iii) to count, so stray tokens like `c.` do not split a question.
fn split_questions(text: &str) -> Vec<String> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"(?:^|\s)(?P<e>\d{1,2}|[ivxlc]{1,6})[.)]\s+").unwrap());

    let mut cuts: Vec<(usize, usize)> = Vec::new();
    let mut roman: Option<bool> = None;
    for caps in re.captures_iter(text) {
        let e = caps.name("e").unwrap();
        let whole = caps.get(0).unwrap();
        let (value, is_roman) = match e.as_str().parse::<u32>() {
            Ok(v) => (Some(v), false),
            Err(_) => (roman_value(e.as_str()), true),
        };
        let expected = cuts.len() as u32 + 1;
        if value != Some(expected) || roman.is_some_and(|r| r != is_roman) {
            continue;
        }
        roman = Some(is_roman);
        cuts.push((e.start(), whole.end()));
    }

    if cuts.is_empty() {
        return text
            .split_inclusive('?')
            .filter(|s| s.ends_with('?'))
            .map(|s| {
                let s = s.trim();
                let start = s.rfind(['.', ':', '!']).map_or(0, |i| i + 1);
                s[start..].trim().to_string()
            })
            .filter(|s| s.len() > 1)
            .collect();
    }

    let mut questions = Vec::new();
    for (i, &(_, body_start)) in cuts.iter().enumerate() {
        let end = cuts.get(i + 1).map_or(text.len(), |c| c.0);
        let chunk = text[body_start..end].trim();
        let q = match chunk.find('?') {
            Some(q) => &chunk[..=q],
            None => chunk.split_inclusive(". ").next().unwrap_or(chunk).trim(),
        };
        if !q.is_empty() {
            questions.push(q.to_string());
        }
    }
    questions
}

fn investigator(note: &str) -> Option<String> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"(?i)\binvestigator\s*:?\s+(?P<n>[^.,;!?]+)").unwrap());
    let name = re.captures(note)?["n"].trim().to_string();
    (!name.is_empty()).then_some(name)
}

/// `Mr Sforza`, `Mrs. Holmes`, deduplicated by surname, in order of first use.
pub(crate) fn honorific_names(text: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for caps in honorific_regex().captures_iter(text) {
        let name = format!("{} {}", &caps["h"], &caps["n"]);
        if !out.iter().any(|o| o.ends_with(&format!(" {}", &caps["n"]))) {
            out.push(name);
        }
    }
    out
}

pub(crate) fn honorific_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"\b(?P<h>Mr|Mrs|Ms|Dr|Mme|Mlle)\.?[ \t\n~]+(?P<n>[A-Z][A-Za-z'\-]+)").unwrap()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Severity;

    const EXCERPT: &str = include_str!("../../fixtures/case/mandate_excerpt.txt");
    const FULL: &str = include_str!("../../fixtures/case/mandate_full.txt");

    #[test]
    fn short_excerpt() {
        let (m, diags) = parse_mandate(EXCERPT);
        assert!(diags.is_empty(), "{diags:?}");
        assert_eq!(m.received_date, NaiveDate::from_ymd_opt(2023, 10, 1));
        assert_eq!(m.investigator_name.as_deref(), Some("X"));
        assert_eq!(m.questions.len(), 1);
        assert!(m.questions[0].starts_with("Where was Mr Sforza"));
        assert_eq!(m.deadline, NaiveDate::from_ymd_opt(2023, 10, 12));
        assert_eq!(m.suspects, vec!["Mr Sforza", "Mr Pressive"]);
    }

    #[test]
    fn full_mandate_has_five_ordered_questions() {
        let (m, diags) = parse_mandate(FULL);
        assert!(diags.is_empty(), "{diags:?}");
        assert_eq!(m.questions.len(), 5);
        assert_eq!(
            m.questions[0],
            "Where was Mr Sforza in January and February 2019?"
        );
        assert_eq!(
            m.questions[2],
            "Did Mr Sforza and Mr Pressive meet during this period?"
        );
        assert!(m.questions[4].starts_with("In particular"));
        assert_eq!(m.deadline, NaiveDate::from_ymd_opt(2023, 10, 12));
        assert_eq!(m.transmitted_items, vec!["Samsung Galaxy S6 Edge", "iPhone 6"]);
    }

    #[test]
    fn empty_text_reports_both_missing_blocks() {
        let (m, diags) = parse_mandate("");
        let errors: Vec<_> = diags.iter().filter(|d| d.severity == Severity::Error).collect();
        assert_eq!(errors.len(), 2);
        assert!(m.questions.is_empty());
    }

    #[test]
    fn arabic_enumeration_and_stray_tokens() {
        let text = "Description: case\nMandate: 1. Who sent item c. first? 2. When?";
        let (m, _) = parse_mandate(text);
        assert_eq!(m.questions, vec!["Who sent item c. first?", "When?"]);
    }

    #[test]
    fn unnumbered_questions_fall_back_to_question_marks() {
        let (m, _) = parse_mandate("Description: d\nMandate: Please answer. Who? Where exactly?");
        assert_eq!(m.questions, vec!["Who?", "Where exactly?"]);
    }

    #[test]
    fn roman_values() {
        assert_eq!(roman_value("iv"), Some(4));
        assert_eq!(roman_value("ix"), Some(9));
        assert_eq!(roman_value("q"), None);
    }
}
