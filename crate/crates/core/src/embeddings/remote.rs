use std::time::Duration;

use serde_json::{json, Value};

use super::cache::EmbeddingProvider;
use super::EmbeddingError;
use crate::gateway::API_KEY_ENV;
use crate::retry::Backoff;

/// OpenAI-compatible `/embeddings` endpoint.
pub struct RemoteEmbedder {
    url: String,
    model: String,
    id: String,
    api_key: String,
    client: reqwest::blocking::Client,
    pub max_retries: u32,
    pub backoff: Backoff,
    pub batch_size: usize,
}

impl RemoteEmbedder {
    pub fn from_env(endpoint: &str, model: &str) -> Result<Self, EmbeddingError> {
        let key = std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or(EmbeddingError::MissingApiKey(API_KEY_ENV))?;
        Self::with_api_key(endpoint, model, key)
    }

    pub fn with_api_key(endpoint: &str, model: &str, api_key: String) -> Result<Self, EmbeddingError> {
        let base = endpoint.trim_end_matches('/');
        let url = if base.ends_with("/embeddings") {
            base.to_string()
        } else {
            format!("{base}/embeddings")
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| EmbeddingError::Transport(e.to_string()))?;
        Ok(RemoteEmbedder {
            url,
            model: model.to_string(),
            id: format!("remote:{model}"),
            api_key,
            client,
            max_retries: 2,
            backoff: Backoff::default(),
            batch_size: 256,
        })
    }

    fn embed_chunk(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        let body = json!({"model": self.model, "input": texts});
        let mut last = String::new();
        for attempt in 0..=self.max_retries {
            if attempt > 0 {
                self.backoff.sleep(attempt - 1);
            }
            let resp = match self.client.post(&self.url).bearer_auth(&self.api_key).json(&body).send() {
                Ok(r) => r,
                Err(e) => {
                    last = e.to_string();
                    continue;
                }
            };
            let status = resp.status().as_u16();
            let text = resp.text().unwrap_or_default();
            match status {
                200..=299 => return parse_embeddings(&text, texts.len()),
                429 | 500..=599 => last = format!("HTTP {status}"),
                _ => return Err(EmbeddingError::Transport(format!("HTTP {status}: {text}"))),
            }
        }
        Err(EmbeddingError::Transport(last))
    }
}

fn parse_embeddings(body: &str, expected: usize) -> Result<Vec<Vec<f64>>, EmbeddingError> {
    let v: Value = serde_json::from_str(body).map_err(|e| EmbeddingError::Transport(e.to_string()))?;
    let data = v
        .get("data")
        .and_then(Value::as_array)
        .ok_or_else(|| EmbeddingError::Transport("response has no data array".into()))?;
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::with_capacity(data.len());
    for (pos, item) in data.iter().enumerate() {
        let idx = item.get("index").and_then(Value::as_u64).map(|i| i as usize).unwrap_or(pos);
        let emb = item
            .get("embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| EmbeddingError::Transport("item has no embedding".into()))?
            .iter()
            .map(|x| x.as_f64().ok_or(EmbeddingError::InvalidVector))
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push((idx, emb));
    }
    rows.sort_by_key(|(i, _)| *i);
    if rows.len() != expected {
        return Err(EmbeddingError::CountMismatch {
            expected,
            got: rows.len(),
        });
    }
    Ok(rows.into_iter().map(|(_, v)| v).collect())
}

impl EmbeddingProvider for RemoteEmbedder {
    fn provider_id(&self) -> &str {
        &self.id
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.batch_size.max(1)) {
            out.extend(self.embed_chunk(chunk)?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_are_reordered_by_index() {
        let body = r#"{"data":[{"index":1,"embedding":[0.0,1.0]},{"index":0,"embedding":[1.0,0.0]}]}"#;
        let rows = parse_embeddings(body, 2).unwrap();
        assert_eq!(rows, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!(matches!(parse_embeddings(body, 3), Err(EmbeddingError::CountMismatch { .. })));
    }
}
