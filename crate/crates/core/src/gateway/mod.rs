//! Chat-completion backends for triple elicitation and named-entity classification.
//!
//! Two backends implement [`Gateway`]: [`RemoteChat`] talks to an
//! OpenAI-compatible endpoint, [`MockWorld`] answers from a JSON fixture and is
//! a pure function of its input, which is what makes crawls reproducible in tests.

mod mock;
pub mod prompts;
mod remote;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::normalize_label;
use crate::retry::Backoff;

pub use mock::{MockWorld, NoiseInjector, OffTopicInjector, QIdInjector, SuffixLoopInjector, WorldError, WorldFact, WorldFile};
pub use prompts::{render_elicitation_prompt, render_ner_prompt, PromptError, PromptTemplates};
pub use remote::{replay_audit, AuditEntry, RemoteChat, API_KEY_ENV};

pub const DEFAULT_MAX_RETRIES: u32 = 2;
pub const DEFAULT_NER_BATCH: usize = 100;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("malformed model output after {attempts} attempt(s): {detail}")]
    MalformedOutput { attempts: u32, detail: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("rate limited after {attempts} attempt(s)")]
    RateLimited { attempts: u32 },
    #[error("elicitation subject is empty")]
    EmptySubject,
    #[error("NER batch is empty")]
    EmptyBatch,
    #[error("environment variable {0} is not set")]
    MissingApiKey(&'static str),
    #[error("backend descriptor is invalid: {0}")]
    InvalidDescriptor(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

impl GatewayError {
    /// Errors that should abort a crawl instead of degrading one subject.
    pub fn is_fatal(&self) -> bool {
        !matches!(self, GatewayError::MalformedOutput { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElicitationRequest {
    pub subject: String,
    pub topic: String,
    pub language: String,
}

impl ElicitationRequest {
    pub fn new(subject: &str, topic: &str, language: &str) -> Self {
        ElicitationRequest {
            subject: subject.to_string(),
            topic: topic.to_string(),
            language: language.to_string(),
        }
    }
}

/// A triple as the model wrote it, before normalization and NER.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawTriple {
    pub subject: String,
    pub predicate: String,
    pub object: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ElicitationResponse {
    pub triples: Vec<RawTriple>,
    pub raw_payload: String,
    /// Labels the backend itself tagged as off-topic (mock injector only).
    pub off_topic: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NerRequest {
    pub phrases: Vec<String>,
    pub topic: String,
    pub language: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NerResponse {
    pub verdicts: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    RemoteChat,
    MockWorld,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub kind: BackendKind,
    #[serde(default)]
    pub endpoint_url: Option<String>,
    pub model_id: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_timeout")]
    pub request_timeout_seconds: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_batch")]
    pub ner_batch_size: usize,
    #[serde(default)]
    pub backoff: Backoff,
    /// Directory with `<lang>.json` prompt templates for non-English runs.
    #[serde(default)]
    pub prompt_dir: Option<PathBuf>,
    /// Append-only request/response log (remote only).
    #[serde(default)]
    pub audit_log: Option<PathBuf>,
}

fn default_timeout() -> u64 {
    120
}
fn default_retries() -> u32 {
    DEFAULT_MAX_RETRIES
}
fn default_batch() -> usize {
    DEFAULT_NER_BATCH
}

impl BackendDescriptor {
    pub fn remote(endpoint_url: &str, model_id: &str, temperature: f64) -> Self {
        BackendDescriptor {
            kind: BackendKind::RemoteChat,
            endpoint_url: Some(endpoint_url.to_string()),
            model_id: model_id.to_string(),
            temperature,
            request_timeout_seconds: default_timeout(),
            max_retries: DEFAULT_MAX_RETRIES,
            ner_batch_size: DEFAULT_NER_BATCH,
            backoff: Backoff::default(),
            prompt_dir: None,
            audit_log: None,
        }
    }

    pub fn mock() -> Self {
        BackendDescriptor {
            kind: BackendKind::MockWorld,
            endpoint_url: None,
            model_id: "mock-world".to_string(),
            ..Self::remote("", "", 0.0)
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.ner_batch_size == 0 {
            return Err(GatewayError::InvalidDescriptor("ner_batch_size must be positive".into()));
        }
        if self.kind == BackendKind::RemoteChat
            && self.endpoint_url.as_deref().is_none_or(|u| u.trim().is_empty())
        {
            return Err(GatewayError::InvalidDescriptor("remote backend needs endpoint_url".into()));
        }
        Ok(())
    }
}

/// A source of triples and NER verdicts.
///
/// Implementors answer one subject or one phrase batch; subject enforcement
/// and batching live in the provided methods.
pub trait Gateway: Send + Sync {
    fn elicit_raw(&self, req: &ElicitationRequest) -> Result<ElicitationResponse, GatewayError>;

    /// One request's worth of verdicts, same length and order as `phrases`.
    fn classify_batch(
        &self,
        phrases: &[String],
        topic: &str,
        language: &str,
    ) -> Result<Vec<bool>, GatewayError>;

    fn ner_batch_size(&self) -> usize {
        DEFAULT_NER_BATCH
    }

    fn elicit(&self, req: &ElicitationRequest) -> Result<ElicitationResponse, GatewayError> {
        let subject = normalize_label(&req.subject);
        if subject.is_empty() {
            return Err(GatewayError::EmptySubject);
        }
        let mut resp = self.elicit_raw(req)?;
        enforce_subject(&subject, &mut resp.triples);
        Ok(resp)
    }

    fn classify_ner(&self, req: &NerRequest) -> Result<NerResponse, GatewayError> {
        if req.phrases.is_empty() {
            return Err(GatewayError::EmptyBatch);
        }
        let mut verdicts = Vec::with_capacity(req.phrases.len());
        for chunk in req.phrases.chunks(self.ner_batch_size().max(1)) {
            match self.classify_batch(chunk, &req.topic, &req.language) {
                Ok(v) => verdicts.extend(v),
                Err(GatewayError::MalformedOutput { attempts, detail }) => {
                    log::warn!(
                        "NER batch of {} phrases unparseable after {attempts} attempt(s) ({detail}); marking all as non-entities",
                        chunk.len()
                    );
                    verdicts.extend(std::iter::repeat_n(false, chunk.len()));
                }
                Err(e) => return Err(e),
            }
        }
        Ok(NerResponse { verdicts })
    }
}

/// Overwrites model-returned subjects that differ from the requested one.
pub fn enforce_subject(subject: &str, triples: &mut [RawTriple]) -> usize {
    let mut diverged = 0;
    for t in triples.iter_mut() {
        if normalize_label(&t.subject) != subject {
            log::debug!("model returned subject '{}' for '{}'; overwriting", t.subject, subject);
            t.subject = subject.to_string();
            diverged += 1;
        }
    }
    diverged
}
