//! Forensic case-bundle ingestion, LLM-assisted report drafting, and
//! grounding validation of generated drafts.

pub mod case_model;
pub mod grounding;
pub mod ingest;
pub mod llm_gateway;
pub mod pipeline;
pub mod prompting;
pub mod transform;
