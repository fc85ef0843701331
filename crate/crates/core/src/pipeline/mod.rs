//! Report assembly, the experiment harness and its store, and bundle
//! ingestion from a manifest.

mod experiment;
mod manifest;
mod report;
mod summary;

pub use experiment::{run_experiment, ExperimentRecord, PromptSummary, ResultsStore, RunOutcome, StoreError};
pub use manifest::{
    ingest, ingest_manifest, FileDiagnostic, IngestOutcome, Manifest, ManifestError, SourceEntry, SourceKind,
};
pub use report::{
    assemble, render_markdown, AssembleError, ChosenDraft, DraftPart, ReportDocument, SectionContent,
    DISCLAIMER, MANUAL_NOTE,
};
pub use summary::{render_json, render_table, summarize, SummaryRow};
