//! Aggregates over a results store.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::experiment::ExperimentRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub backend: String,
    pub section: String,
    pub input_format: String,
    pub count: usize,
    pub errors: usize,
    pub mean_latency_s: f64,
    pub median_latency_s: f64,
    pub mean_hallucinations: f64,
    pub mean_completeness: f64,
}

// Sorting first makes the sums independent of record order.
fn mean(mut values: Vec<f64>) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

fn median(mut values: Vec<f64>) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// One row per (backend, section target, input format), sorted by that key.
pub fn summarize(records: &[ExperimentRecord]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, String, String), Vec<&ExperimentRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((
                r.backend_label.clone(),
                r.prompt.target.to_string(),
                r.prompt.input_format.to_string(),
            ))
            .or_default()
            .push(r);
    }
    groups
        .into_iter()
        .map(|((backend, section, input_format), rs)| {
            let done: Vec<&&ExperimentRecord> = rs.iter().filter(|r| !r.is_error()).collect();
            let latencies: Vec<f64> = done
                .iter()
                .filter_map(|r| r.draft.as_ref())
                .map(|d| d.latency.as_secs_f64())
                .collect();
            let groundings: Vec<_> = done.iter().filter_map(|r| r.grounding.as_ref()).collect();
            SummaryRow {
                backend,
                section,
                input_format,
                count: rs.len(),
                errors: rs.len() - done.len(),
                mean_latency_s: mean(latencies.clone()),
                median_latency_s: median(latencies),
                mean_hallucinations: mean(groundings.iter().map(|g| g.hallucination_count as f64).collect()),
                mean_completeness: mean(groundings.iter().map(|g| g.completeness).collect()),
            }
        })
        .collect()
}

const HEADERS: [&str; 9] = [
    "backend",
    "section",
    "format",
    "count",
    "errors",
    "mean_latency_s",
    "median_latency_s",
    "mean_halluc",
    "mean_complete",
];

/// Column-aligned text table; header only when there are no rows.
pub fn render_table(rows: &[SummaryRow]) -> String {
    let mut cells: Vec<Vec<String>> = vec![HEADERS.iter().map(|h| h.to_string()).collect()];
    for r in rows {
        cells.push(vec![
            r.backend.clone(),
            r.section.clone(),
            r.input_format.clone(),
            r.count.to_string(),
            r.errors.to_string(),
            format!("{:.3}", r.mean_latency_s),
            format!("{:.3}", r.median_latency_s),
            format!("{:.3}", r.mean_hallucinations),
            format!("{:.3}", r.mean_completeness),
        ]);
    }
    let widths: Vec<usize> = (0..HEADERS.len())
        .map(|i| cells.iter().map(|c| c[i].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &cells {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(i, c)| {
                if i < 3 {
                    format!("{c:<w$}", w = widths[i])
                } else {
                    format!("{c:>w$}", w = widths[i])
                }
            })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

pub fn render_json(rows: &[SummaryRow]) -> String {
    serde_json::to_string_pretty(rows).expect("rows serialize")
}
