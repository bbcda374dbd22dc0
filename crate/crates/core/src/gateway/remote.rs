//! OpenAI-compatible chat-completions backend.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::prompts::PromptTemplates;
use super::{enforce_subject, BackendDescriptor, BackendKind, ElicitationRequest, ElicitationResponse, Gateway, GatewayError, RawTriple};
use crate::model::normalize_label;

pub const API_KEY_ENV: &str = "KBFORGE_API_KEY";

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TriplesPayload {
    triples: Vec<RawTriple>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Verdict {
    #[allow(dead_code)]
    phrase: String,
    is_named_entity: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct VerdictPayload {
    verdicts: Vec<Verdict>,
}

/// One request/response pair as written to the audit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
    pub request: Value,
    pub status: u16,
    pub response: String,
}

fn triples_schema() -> Value {
    json!({
        "type": "object",
        "properties": {
            "triples": {
                "type": "array",
                "items": {
                    "type": "object",
                    "properties": {
                        "subject": {"type": "string"},
                        "predicate": {"type": "string"},
                        "object": {"type": "string"}
                    },
                    "required": ["subject", "predicate", "object"],
                    "additionalProperties": false
                }
            }
        },
        "required": ["triples"],
        "additionalProperties": false
    })
}

fn verdicts_schema() -> Value {
    json!({
        "type": "object",
        "properties": {
            "verdicts": {
                "type": "array",
                "items": {
                    "type": "object",
                    "properties": {
                        "phrase": {"type": "string"},
                        "is_named_entity": {"type": "boolean"}
                    },
                    "required": ["phrase", "is_named_entity"],
                    "additionalProperties": false
                }
            }
        },
        "required": ["verdicts"],
        "additionalProperties": false
    })
}

/// Pulls `choices[0].message.content` out of a chat-completions body.
fn message_content(body: &str) -> Result<String, String> {
    let v: Value = serde_json::from_str(body).map_err(|e| format!("response is not JSON: {e}"))?;
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| "response has no choices[0].message.content".to_string())
}

fn parse_elicitation(body: &str) -> Result<ElicitationResponse, String> {
    let content = message_content(body)?;
    let payload: TriplesPayload =
        serde_json::from_str(&content).map_err(|e| format!("content does not match triple schema: {e}"))?;
    Ok(ElicitationResponse {
        triples: payload.triples,
        raw_payload: content,
        off_topic: Vec::new(),
    })
}

fn parse_verdicts(body: &str, expected: usize) -> Result<Vec<bool>, String> {
    let content = message_content(body)?;
    let payload: VerdictPayload =
        serde_json::from_str(&content).map_err(|e| format!("content does not match verdict schema: {e}"))?;
    if payload.verdicts.len() != expected {
        return Err(format!(
            "expected {expected} verdicts, got {}",
            payload.verdicts.len()
        ));
    }
    Ok(payload.verdicts.into_iter().map(|v| v.is_named_entity).collect())
}

/// Re-parses every successful elicitation in an audit log.
pub fn replay_audit(path: &Path) -> std::io::Result<Vec<(String, ElicitationResponse)>> {
    let file = File::open(path)?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        let Ok(entry) = serde_json::from_str::<AuditEntry>(&line) else {
            continue;
        };
        if entry.kind != "elicit" || entry.status != 200 {
            continue;
        }
        let Some(subject) = entry.subject else { continue };
        if let Ok(mut resp) = parse_elicitation(&entry.response) {
            enforce_subject(&normalize_label(&subject), &mut resp.triples);
            out.push((subject, resp));
        }
    }
    Ok(out)
}

pub struct RemoteChat {
    descriptor: BackendDescriptor,
    url: String,
    api_key: String,
    client: reqwest::blocking::Client,
    audit: Option<Mutex<File>>,
}

impl RemoteChat {
    /// Reads the API key from `KBFORGE_API_KEY`.
    pub fn from_env(descriptor: BackendDescriptor) -> Result<Self, GatewayError> {
        let key = std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or(GatewayError::MissingApiKey(API_KEY_ENV))?;
        Self::with_api_key(descriptor, key)
    }

    pub fn with_api_key(descriptor: BackendDescriptor, api_key: String) -> Result<Self, GatewayError> {
        if descriptor.kind != BackendKind::RemoteChat {
            return Err(GatewayError::InvalidDescriptor("not a remote descriptor".into()));
        }
        descriptor.validate()?;
        let base = descriptor.endpoint_url.clone().unwrap_or_default();
        let base = base.trim_end_matches('/');
        let url = if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(descriptor.request_timeout_seconds.max(1)))
            .build()
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        let audit = match &descriptor.audit_log {
            Some(p) => Some(Mutex::new(
                OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(p)
                    .map_err(|e| GatewayError::Transport(format!("audit log {}: {e}", p.display())))?,
            )),
            None => None,
        };
        Ok(RemoteChat {
            descriptor,
            url,
            api_key,
            client,
            audit,
        })
    }

    fn body(&self, system: String, user: String, schema_name: &str, schema: Value) -> Value {
        json!({
            "model": self.descriptor.model_id,
            "temperature": self.descriptor.temperature,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user}
            ],
            "response_format": {
                "type": "json_schema",
                "json_schema": {"name": schema_name, "strict": true, "schema": schema}
            }
        })
    }

    fn audit(&self, entry: &AuditEntry) {
        if let Some(f) = &self.audit {
            let mut f = f.lock().unwrap_or_else(|e| e.into_inner());
            if let Ok(line) = serde_json::to_string(entry) {
                if let Err(e) = writeln!(f, "{line}") {
                    log::warn!("audit log write failed: {e}");
                }
            }
        }
    }

    /// Sends `body` until `parse` accepts the reply or the retry budget runs out.
    fn exchange<T>(
        &self,
        kind: &str,
        subject: Option<&str>,
        body: &Value,
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> Result<T, GatewayError> {
        let attempts = self.descriptor.max_retries + 1;
        let mut last_detail = String::new();
        let mut rate_limited = false;
        for attempt in 0..attempts {
            if attempt > 0 {
                self.descriptor.backoff.sleep(attempt - 1);
            }
            let sent = self
                .client
                .post(&self.url)
                .bearer_auth(&self.api_key)
                .json(body)
                .send();
            let resp = match sent {
                Ok(r) => r,
                Err(e) => {
                    log::warn!("{kind} request failed (attempt {}): {e}", attempt + 1);
                    if attempt + 1 == attempts {
                        return Err(GatewayError::Transport(e.to_string()));
                    }
                    continue;
                }
            };
            let status = resp.status().as_u16();
            let text = resp.text().unwrap_or_default();
            self.audit(&AuditEntry {
                kind: kind.to_string(),
                subject: subject.map(str::to_string),
                request: body.clone(),
                status,
                response: text.clone(),
            });
            rate_limited = status == 429;
            match status {
                200..=299 => match parse(&text) {
                    Ok(v) => return Ok(v),
                    Err(detail) => {
                        log::debug!("{kind}: malformed output (attempt {}): {detail}", attempt + 1);
                        last_detail = detail;
                    }
                },
                429 => {}
                500..=599 => {
                    if attempt + 1 == attempts {
                        return Err(GatewayError::Transport(format!("HTTP {status}: {text}")));
                    }
                }
                _ => return Err(GatewayError::Transport(format!("HTTP {status}: {text}"))),
            }
        }
        if rate_limited {
            return Err(GatewayError::RateLimited { attempts });
        }
        Err(GatewayError::MalformedOutput {
            attempts,
            detail: last_detail,
        })
    }
}

impl Gateway for RemoteChat {
    fn elicit_raw(&self, req: &ElicitationRequest) -> Result<ElicitationResponse, GatewayError> {
        let templates = PromptTemplates::load(&req.language, self.descriptor.prompt_dir.as_deref())?;
        let subject = normalize_label(&req.subject);
        let body = self.body(templates.elicitation(&req.topic)?, subject.clone(), "triples", triples_schema());
        self.exchange("elicit", Some(&subject), &body, parse_elicitation)
    }

    fn classify_batch(&self, phrases: &[String], topic: &str, language: &str) -> Result<Vec<bool>, GatewayError> {
        let templates = PromptTemplates::load(language, self.descriptor.prompt_dir.as_deref())?;
        let lines: Vec<String> = phrases.iter().map(|p| normalize_label(p)).collect();
        let body = self.body(templates.ner(topic)?, lines.join("\n"), "verdicts", verdicts_schema());
        let n = phrases.len();
        self.exchange("ner", None, &body, move |b| parse_verdicts(b, n))
    }

    fn ner_batch_size(&self) -> usize {
        self.descriptor.ner_batch_size
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chat_body(content: &str) -> String {
        json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
    }

    #[test]
    fn strict_triple_parsing() {
        let ok = chat_body(r#"{"triples":[{"subject":"A","predicate":"p","object":"B"}]}"#);
        assert_eq!(parse_elicitation(&ok).unwrap().triples.len(), 1);
        let extra = chat_body(r#"{"triples":[{"subject":"A","predicate":"p","object":"B","x":1}]}"#);
        assert!(parse_elicitation(&extra).is_err());
        assert!(parse_elicitation(&chat_body("not json")).is_err());
        assert!(parse_elicitation("{}").is_err());
    }

    #[test]
    fn verdict_length_checked() {
        let body = chat_body(r#"{"verdicts":[{"phrase":"A","is_named_entity":true}]}"#);
        assert_eq!(parse_verdicts(&body, 1).unwrap(), vec![true]);
        assert!(parse_verdicts(&body, 2).is_err());
    }

    #[test]
    fn missing_key_is_reported() {
        std::env::remove_var(API_KEY_ENV);
        let d = BackendDescriptor::remote("http://127.0.0.1:9", "m", 0.0);
        assert!(matches!(RemoteChat::from_env(d), Err(GatewayError::MissingApiKey(_))));
    }
}
