//! Text-generation backends behind one call: a local generate server, a
//! hosted chat-completions API, and a deterministic mock.
//!
//! Every call is stateless: the wire payload carries the one prompt and
//! nothing else.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::{DateTime, FixedOffset, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::case_model::{CaseBundle, DeviceProfile, SectionTarget, SourceFormat, Timestamp};
use crate::grounding::required_facts_for;
use crate::ingest::{
    parse_csv_locations, parse_csv_messages, parse_lablog_items, parse_lablog_locations,
    parse_lablog_messages, parse_lablog_methods, parse_mandate, parse_tool_report_locations,
    parse_tool_report_messages,
};
use crate::prompting::{split_item_blocks, PromptSpec, ITEMS_TABLE_HEADER};

pub const DEFAULT_LOCAL_ENDPOINT: &str = "http://localhost:5001";
pub const DEFAULT_API_KEY_ENV: &str = "REPDRAFT_API_KEY";
pub const LOCAL_GENERATE_PATH: &str = "/api/v1/generate";
pub const CHAT_COMPLETIONS_PATH: &str = "/v1/chat/completions";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    LocalGenerate,
    HostedChat,
    Mock,
}

/// Scripted behaviour of the mock backend.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FaultProfile {
    #[default]
    Faithful,
    DropFacts {
        k: usize,
    },
    InjectCoordinate {
        lat: f64,
        lon: f64,
    },
    InjectName {
        name: String,
    },
}

fn default_max_new_tokens() -> u32 {
    512
}
fn default_temperature() -> f64 {
    0.7
}
fn default_timeout_secs() -> u64 {
    600
}
fn default_max_retries() -> u32 {
    2
}
fn default_backoff_ms() -> u64 {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    /// Name recorded with every draft.
    pub label: String,
    pub backend_kind: BackendKind,
    #[serde(default)]
    pub endpoint_url: String,
    #[serde(default)]
    pub model_name: String,
    #[serde(default = "default_max_new_tokens")]
    pub max_new_tokens: u32,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_timeout_secs")]
    pub request_timeout_secs: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    /// First retry delay; doubles on each further attempt.
    #[serde(default = "default_backoff_ms")]
    pub retry_backoff_ms: u64,
    /// Environment variable holding the hosted API key.
    #[serde(default)]
    pub api_key_env: Option<String>,
    /// Parallel calls allowed against this backend.
    #[serde(default)]
    pub concurrency: Option<usize>,
    #[serde(default)]
    pub fault_profile: FaultProfile,
}

impl BackendConfig {
    pub fn mock(label: &str, fault_profile: FaultProfile) -> BackendConfig {
        BackendConfig {
            label: label.to_string(),
            backend_kind: BackendKind::Mock,
            endpoint_url: String::new(),
            model_name: "mock".into(),
            max_new_tokens: default_max_new_tokens(),
            temperature: 0.0,
            request_timeout_secs: default_timeout_secs(),
            max_retries: 0,
            retry_backoff_ms: 0,
            api_key_env: None,
            concurrency: None,
            fault_profile,
        }
    }

    pub fn local(label: &str, endpoint_url: &str, model_name: &str) -> BackendConfig {
        BackendConfig {
            label: label.to_string(),
            backend_kind: BackendKind::LocalGenerate,
            endpoint_url: endpoint_url.to_string(),
            model_name: model_name.to_string(),
            temperature: default_temperature(),
            max_retries: default_max_retries(),
            retry_backoff_ms: default_backoff_ms(),
            ..BackendConfig::mock(label, FaultProfile::Faithful)
        }
    }

    pub fn hosted(label: &str, endpoint_url: &str, model_name: &str) -> BackendConfig {
        BackendConfig {
            backend_kind: BackendKind::HostedChat,
            api_key_env: Some(DEFAULT_API_KEY_ENV.into()),
            ..BackendConfig::local(label, endpoint_url, model_name)
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.max_new_tokens == 0 {
            return Err(GatewayError::Config("max_new_tokens must be at least 1".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(GatewayError::Config("temperature must be non-negative".into()));
        }
        Ok(())
    }

    pub fn concurrency_cap(&self) -> usize {
        self.concurrency
            .unwrap_or(match self.backend_kind {
                BackendKind::LocalGenerate => 1,
                BackendKind::HostedChat | BackendKind::Mock => 4,
            })
            .max(1)
    }

    pub fn request_timeout(&self) -> Duration {
        Duration::from_secs(self.request_timeout_secs)
    }

    fn endpoint(&self, path: &str) -> String {
        let base = if self.endpoint_url.is_empty() {
            DEFAULT_LOCAL_ENDPOINT
        } else {
            self.endpoint_url.as_str()
        };
        let base = base.trim_end_matches('/');
        if base.ends_with(path) {
            base.to_string()
        } else {
            format!("{base}{path}")
        }
    }
}

/// Named backend profiles, one TOML table per profile.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BackendProfiles {
    #[serde(default)]
    pub profiles: BTreeMap<String, BackendConfig>,
}

impl BackendProfiles {
    pub fn from_toml(text: &str) -> Result<BackendProfiles, GatewayError> {
        let profiles: BackendProfiles =
            toml::from_str(text).map_err(|e| GatewayError::Config(e.to_string()))?;
        for p in profiles.profiles.values() {
            p.validate()?;
        }
        Ok(profiles)
    }

    pub fn load(path: &Path) -> Result<BackendProfiles, GatewayError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        BackendProfiles::from_toml(&text)
    }

    pub fn get(&self, name: &str) -> Result<&BackendConfig, GatewayError> {
        self.profiles
            .get(name)
            .ok_or_else(|| GatewayError::Config(format!("no backend profile `{name}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedDraft {
    pub prompt_id: String,
    pub backend_label: String,
    pub text: String,
    pub latency: Duration,
    pub created_at: Timestamp,
    pub token_estimate: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error, Serialize, Deserialize)]
pub enum GatewayError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("backend refused with status {status}: {message}")]
    BackendRefusal { status: u16, message: String },
    #[error("configuration error: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

/// One HTTP POST of a JSON body. Implementations must not keep state
/// between calls that could leak into a later request.
pub trait Transport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &Value,
        timeout: Duration,
    ) -> Result<HttpResponse, String>;
}

/// Blocking HTTP through a fresh agent per call.
#[derive(Debug, Default, Clone, Copy)]
pub struct HttpTransport;

impl Transport for HttpTransport {
    fn post_json(
        &self,
        url: &str,
        headers: &[(String, String)],
        body: &Value,
        timeout: Duration,
    ) -> Result<HttpResponse, String> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let mut req = agent.post(url);
        for (k, v) in headers {
            req = req.header(k.as_str(), v.as_str());
        }
        let mut resp = req.send_json(body).map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().map_err(|e| e.to_string())?;
        Ok(HttpResponse { status, body })
    }
}

pub fn local_generate_payload(config: &BackendConfig, prompt: &PromptSpec) -> Value {
    json!({
        "prompt": prompt.rendered_text,
        "max_length": config.max_new_tokens,
        "temperature": config.temperature,
    })
}

pub fn hosted_chat_payload(config: &BackendConfig, prompt: &PromptSpec) -> Value {
    json!({
        "model": config.model_name,
        "messages": [{ "role": "user", "content": prompt.rendered_text }],
        "max_tokens": config.max_new_tokens,
        "temperature": config.temperature,
    })
}

/// Reads the draft text and any reported completion token count.
type ResponseParser = fn(&str) -> Result<(String, Option<u32>), GatewayError>;

fn parse_local_response(body: &str) -> Result<(String, Option<u32>), GatewayError> {
    let v: Value = serde_json::from_str(body).map_err(|e| GatewayError::Protocol(e.to_string()))?;
    let text = v
        .pointer("/results/0/text")
        .and_then(Value::as_str)
        .ok_or_else(|| GatewayError::Protocol("missing results[0].text".into()))?;
    Ok((text.to_string(), None))
}

fn parse_chat_response(body: &str) -> Result<(String, Option<u32>), GatewayError> {
    let v: Value = serde_json::from_str(body).map_err(|e| GatewayError::Protocol(e.to_string()))?;
    let text = v
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| GatewayError::Protocol("missing choices[0].message.content".into()))?;
    let tokens = v
        .pointer("/usage/completion_tokens")
        .and_then(Value::as_u64)
        .and_then(|n| u32::try_from(n).ok());
    Ok((text.to_string(), tokens))
}

fn estimate_tokens(text: &str) -> u32 {
    // Roughly four characters per token for English prose.
    u32::try_from(text.chars().count().div_ceil(4)).unwrap_or(u32::MAX)
}

fn now() -> Timestamp {
    Utc::now().with_timezone(&FixedOffset::east_opt(0).unwrap())
}

/// Creation time of mock drafts, fixed so runs are reproducible.
pub fn mock_epoch() -> Timestamp {
    DateTime::parse_from_rfc3339("2000-01-01T00:00:00+00:00").unwrap()
}

pub struct Gateway {
    pub config: BackendConfig,
    transport: Arc<dyn Transport>,
}

impl Gateway {
    pub fn new(config: BackendConfig) -> Gateway {
        Gateway::with_transport(config, Arc::new(HttpTransport))
    }

    pub fn with_transport(config: BackendConfig, transport: Arc<dyn Transport>) -> Gateway {
        Gateway { config, transport }
    }

    pub fn generate(&self, prompt: &PromptSpec) -> Result<GeneratedDraft, GatewayError> {
        self.config.validate()?;
        let c = &self.config;
        let (url, payload, headers, parse): (String, Value, Vec<(String, String)>, ResponseParser) = match c
            .backend_kind
        {
            BackendKind::Mock => {
                let text = mock_complete(prompt, &c.fault_profile);
                return Ok(GeneratedDraft {
                    prompt_id: prompt.prompt_id.clone(),
                    backend_label: c.label.clone(),
                    token_estimate: Some(estimate_tokens(&text)),
                    text,
                    latency: Duration::ZERO,
                    created_at: mock_epoch(),
                });
            }
            BackendKind::LocalGenerate => (
                c.endpoint(LOCAL_GENERATE_PATH),
                local_generate_payload(c, prompt),
                Vec::new(),
                parse_local_response,
            ),
            BackendKind::HostedChat => {
                let var = c.api_key_env.as_deref().unwrap_or(DEFAULT_API_KEY_ENV);
                let key = std::env::var(var)
                    .map_err(|_| GatewayError::Config(format!("environment variable {var} is not set")))?;
                (
                    c.endpoint(CHAT_COMPLETIONS_PATH),
                    hosted_chat_payload(c, prompt),
                    vec![("Authorization".into(), format!("Bearer {key}"))],
                    parse_chat_response,
                )
            }
        };

        let mut attempt = 0u32;
        loop {
            let started = Instant::now();
            let outcome = self
                .transport
                .post_json(&url, &headers, &payload, c.request_timeout());
            let latency = started.elapsed();
            let transient = match &outcome {
                Err(_) => true,
                Ok(r) => r.status == 429 || r.status >= 500,
            };
            if transient && attempt < c.max_retries {
                let delay = c.retry_backoff_ms.saturating_mul(1u64 << attempt.min(16));
                std::thread::sleep(Duration::from_millis(delay));
                attempt += 1;
                continue;
            }
            let resp = outcome
                .map_err(|e| GatewayError::Transport(format!("{e} (after {} attempts)", attempt + 1)))?;
            if !(200..300).contains(&resp.status) {
                return Err(GatewayError::BackendRefusal {
                    status: resp.status,
                    message: resp.body.chars().take(500).collect(),
                });
            }
            let (text, reported) = parse(&resp.body)?;
            return Ok(GeneratedDraft {
                prompt_id: prompt.prompt_id.clone(),
                backend_label: c.label.clone(),
                token_estimate: reported.or_else(|| Some(estimate_tokens(&text))),
                text,
                latency: latency.max(Duration::from_nanos(1)),
                created_at: now(),
            });
        }
    }
}

pub fn generate(config: &BackendConfig, prompt: &PromptSpec) -> Result<GeneratedDraft, GatewayError> {
    Gateway::new(config.clone()).generate(prompt)
}

/// Rebuild the part of a bundle a prompt's input block carries.
pub fn reconstruct_bundle(prompt: &PromptSpec) -> CaseBundle {
    let input = prompt.input_block();
    let mut bundle = CaseBundle::default();
    match prompt.target {
        SectionTarget::Introduction => bundle.mandate = parse_mandate(input).0,
        SectionTarget::ItemsReceived => {
            let (mandate_text, table) = match input.find(ITEMS_TABLE_HEADER) {
                Some(i) => (&input[..i], &input[i..]),
                None => (input, ""),
            };
            bundle.mandate = parse_mandate(mandate_text).0;
            for row in parse_lablog_items(table).0 {
                if let Some(mac) = row.mac_address {
                    bundle.device_profiles.insert(
                        row.item.item_id.clone(),
                        DeviceProfile {
                            mac_address: mac,
                            ..DeviceProfile::default()
                        },
                    );
                }
                bundle.items.push(row.item);
            }
        }
        SectionTarget::Methodology => bundle.method_steps = parse_lablog_methods(input).0,
        SectionTarget::ResultsConversations => {
            for (id, text) in split_item_blocks(input) {
                let msgs = match prompt.input_format {
                    SourceFormat::ToolReportExcerpt => parse_tool_report_messages(&text).0,
                    SourceFormat::LabLogTable => parse_lablog_messages(&text).0,
                    _ => parse_csv_messages(&text).0,
                };
                bundle.messages.entry(id).or_default().extend(msgs);
            }
        }
        SectionTarget::ResultsLocations => {
            for (id, text) in split_item_blocks(input) {
                let locs = match prompt.input_format {
                    SourceFormat::ToolReportExcerpt => parse_tool_report_locations(&text).0,
                    SourceFormat::LabLogTable => parse_lablog_locations(&text).0,
                    _ => parse_csv_locations(&text).0,
                };
                bundle.locations.entry(id).or_default().extend(locs);
            }
        }
    }
    bundle
}

/// Deterministic stand-in for a model: restates every required fact of the
/// prompt's input, then applies the fault profile.
pub fn mock_complete(prompt: &PromptSpec, fault_profile: &FaultProfile) -> String {
    let partial = reconstruct_bundle(prompt);
    let facts = required_facts_for(prompt.target, &partial);
    let header = match prompt.target {
        SectionTarget::Introduction => format!(
            "Draft {}. The mandate lists {} questions.",
            prompt.section.title(),
            partial.mandate.questions.len()
        ),
        SectionTarget::ResultsConversations => format!("Draft {}: conversations.", prompt.section.title()),
        SectionTarget::ResultsLocations => format!("Draft {}: locations.", prompt.section.title()),
        _ => format!("Draft {}.", prompt.section.title()),
    };
    let lines: Vec<String> = facts.iter().map(|f| format!("- {}", f.description)).collect();
    let mut keep = vec![true; lines.len()];

    let compose = |keep: &[bool]| {
        let mut out = header.clone();
        for (line, k) in lines.iter().zip(keep) {
            if *k {
                out.push('\n');
                out.push_str(line);
            }
        }
        out
    };

    let mut extra: Option<String> = None;
    match fault_profile {
        FaultProfile::Faithful => {}
        FaultProfile::DropFacts { k } => {
            // Drop a line only if that fact then goes missing while every
            // remaining fact stays satisfied, so exactly k facts are lost
            // whenever k such lines exist.
            let mut dropped = 0;
            for i in 0..lines.len() {
                if dropped == *k {
                    break;
                }
                keep[i] = false;
                let text = compose(&keep);
                let others_ok = facts
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| keep[*j])
                    .all(|(_, f)| f.is_satisfied_by(&text));
                if !facts[i].is_satisfied_by(&text) && others_ok {
                    dropped += 1;
                } else {
                    keep[i] = true;
                }
            }
        }
        FaultProfile::InjectCoordinate { lat, lon } => {
            extra = Some(format!(
                "- An additional position was recorded at ({lat:.6}, {lon:.6})."
            ));
        }
        FaultProfile::InjectName { name } => {
            let first = name.split_whitespace().next().unwrap_or("").trim_end_matches('.');
            let honorific = ["Mr", "Mrs", "Ms", "Dr", "Mme", "Mlle"].contains(&first);
            let shown = if honorific {
                name.clone()
            } else {
                format!("Mr. {name}")
            };
            extra = Some(format!("- {shown} was also involved in the events."));
        }
    }
    let mut out = compose(&keep);
    if let Some(e) = extra {
        out.push('\n');
        out.push_str(&e);
    }
    out.push('\n');
    out
}
