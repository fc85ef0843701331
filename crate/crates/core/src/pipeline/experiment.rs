//! The experiment harness: every prompt of the matrix against every backend,
//! scored and appended to a line-per-record store.

use std::collections::BTreeSet;
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::case_model::{CaseBundle, ReportSectionKind, SectionTarget, SourceFormat};
use crate::grounding::{score, GroundingReport, Tolerances};
use crate::llm_gateway::{Gateway, GeneratedDraft};
use crate::prompting::{PromptSpec, PromptVariant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSummary {
    pub prompt_id: String,
    pub target: SectionTarget,
    pub section: ReportSectionKind,
    pub input_format: SourceFormat,
    pub variant: PromptVariant,
    pub input_char_count: usize,
}

impl From<&PromptSpec> for PromptSummary {
    fn from(p: &PromptSpec) -> Self {
        PromptSummary {
            prompt_id: p.prompt_id.clone(),
            target: p.target,
            section: p.section,
            input_format: p.input_format,
            variant: p.variant,
            input_char_count: p.input_char_count,
        }
    }
}

/// One line of the results store. Exactly one of `draft`+`grounding` or
/// `error` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub run_id: String,
    pub backend_label: String,
    pub prompt: PromptSummary,
    pub draft: Option<GeneratedDraft>,
    pub grounding: Option<GroundingReport>,
    pub error: Option<String>,
}

impl ExperimentRecord {
    pub fn is_error(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Corrupt {
        path: String,
        line: usize,
        message: String,
    },
}

/// Append-only JSON-lines file.
#[derive(Debug)]
pub struct ResultsStore {
    path: PathBuf,
    writer: Mutex<()>,
}

impl ResultsStore {
    pub fn open(path: impl Into<PathBuf>) -> ResultsStore {
        ResultsStore {
            path: path.into(),
            writer: Mutex::new(()),
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn io(&self, source: std::io::Error) -> StoreError {
        StoreError::Io {
            path: self.path.display().to_string(),
            source,
        }
    }

    pub fn append(&self, records: &[ExperimentRecord]) -> Result<(), StoreError> {
        let _guard = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| self.io(e))?;
        let mut buf = String::new();
        for r in records {
            buf.push_str(&serde_json::to_string(r).expect("records serialize"));
            buf.push('\n');
        }
        file.write_all(buf.as_bytes()).map_err(|e| self.io(e))?;
        file.flush().map_err(|e| self.io(e))
    }

    pub fn read_all(&self) -> Result<Vec<ExperimentRecord>, StoreError> {
        let file = match std::fs::File::open(&self.path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(self.io(e)),
        };
        let mut out = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| self.io(e))?;
            if line.trim().is_empty() {
                continue;
            }
            out.push(serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
                path: self.path.display().to_string(),
                line: i + 1,
                message: e.to_string(),
            })?);
        }
        Ok(out)
    }

    pub fn run_ids(&self) -> Result<BTreeSet<String>, StoreError> {
        Ok(self.read_all()?.into_iter().map(|r| r.run_id).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub run_id: String,
    pub records: usize,
    pub errors: usize,
}

fn run_id(store: &ResultsStore, backends: &[Gateway], matrix: &[PromptSpec]) -> Result<String, StoreError> {
    let mut h = Sha256::new();
    for g in backends {
        h.update(g.config.label.as_bytes());
        h.update(b"\n");
    }
    for p in matrix {
        h.update(p.prompt_id.as_bytes());
        h.update(b"\n");
    }
    let digest: String = h.finalize().iter().take(4).map(|b| format!("{b:02x}")).collect();
    let previous = store.run_ids()?.len();
    Ok(format!("run-{:04}-{digest}", previous + 1))
}

/// Generate and score every (backend, prompt) pair. Gateway failures become
/// error records; only store I/O aborts the run. Calls to one backend run
/// concurrently up to its cap, and records land in backend-then-matrix order.
pub fn run_experiment(
    bundle: &CaseBundle,
    backends: &[Gateway],
    matrix: &[PromptSpec],
    store: &ResultsStore,
    tolerances: &Tolerances,
) -> Result<RunOutcome, StoreError> {
    let run_id = run_id(store, backends, matrix)?;
    let mut total = 0;
    let mut errors = 0;
    for gateway in backends {
        let slots: Vec<Mutex<Option<ExperimentRecord>>> = matrix.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let workers = gateway.config.concurrency_cap().min(matrix.len().max(1));
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(prompt) = matrix.get(i) else { break };
                    let record = run_one(&run_id, gateway, prompt, bundle, tolerances);
                    *slots[i].lock().unwrap() = Some(record);
                });
            }
        });
        let records: Vec<ExperimentRecord> = slots
            .into_iter()
            .map(|m| m.into_inner().unwrap().expect("every prompt ran"))
            .collect();
        errors += records.iter().filter(|r| r.is_error()).count();
        total += records.len();
        store.append(&records)?;
    }
    Ok(RunOutcome {
        run_id,
        records: total,
        errors,
    })
}

fn run_one(
    run_id: &str,
    gateway: &Gateway,
    prompt: &PromptSpec,
    bundle: &CaseBundle,
    tolerances: &Tolerances,
) -> ExperimentRecord {
    let mut record = ExperimentRecord {
        run_id: run_id.to_string(),
        backend_label: gateway.config.label.clone(),
        prompt: PromptSummary::from(prompt),
        draft: None,
        grounding: None,
        error: None,
    };
    match gateway.generate(prompt) {
        Ok(draft) => {
            record.grounding = Some(score(&draft, bundle, prompt.target, tolerances));
            record.draft = Some(draft);
        }
        Err(e) => record.error = Some(e.to_string()),
    }
    record
}
