//! Line-oriented parsers for the source layouts an examiner copies into the
//! lab log: tool-report excerpts, lab-log tables, reduced CSV, and the
//! mandate.
//!
//! Every parser is recoverable. Malformed entries are skipped and reported as
//! [`ParseDiagnostic`]s; the caller always gets whatever could be read.

use std::fmt;

use serde::{Deserialize, Serialize};

pub mod lex;
mod locations;
mod mandate;
mod messages;
mod tables;

pub use crate::case_model::SourceFormat;
pub use locations::{
    merge_locations, parse_csv_locations, parse_lablog_locations, parse_tool_report_locations,
};
pub use mandate::parse_mandate;
pub use messages::{
    parse_csv_messages, parse_lablog_messages, parse_sender_label, parse_tool_report_messages,
};
pub use tables::{parse_device_profile, parse_lablog_items, parse_lablog_methods, ItemRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Severity {
    Warning,
    Error,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Warning => "warning",
            Severity::Error => "error",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseDiagnostic {
    /// 1-based line in the parsed text.
    pub line_number: usize,
    pub severity: Severity,
    pub message: String,
}

impl ParseDiagnostic {
    pub(crate) fn error(line_number: usize, message: impl Into<String>) -> Self {
        ParseDiagnostic {
            line_number: line_number.max(1),
            severity: Severity::Error,
            message: message.into(),
        }
    }

    pub(crate) fn warning(line_number: usize, message: impl Into<String>) -> Self {
        ParseDiagnostic {
            line_number: line_number.max(1),
            severity: Severity::Warning,
            message: message.into(),
        }
    }

    /// `file:line: severity: message`
    pub fn render(&self, file: &str) -> String {
        format!(
            "{}:{}: {}: {}",
            file, self.line_number, self.severity, self.message
        )
    }
}

pub fn has_errors(diagnostics: &[ParseDiagnostic]) -> bool {
    diagnostics.iter().any(|d| d.severity == Severity::Error)
}

/// Lines paired with their 1-based numbers.
pub(crate) fn numbered_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(i, l)| (i + 1, l))
}
