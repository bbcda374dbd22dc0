use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, RwLock};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{PopularityError, PopularityRecord};
use crate::retry::Backoff;

pub const WIKIDATA_API: &str = "https://www.wikidata.org/w/api.php";
pub const POPULARITY_CACHE_FILE: &str = "popularity.ndjson";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WikidataConfig {
    pub api_url: String,
    pub language: String,
    pub user_agent: String,
    pub requests_per_second: f64,
    pub max_retries: u32,
    pub backoff: Backoff,
    pub timeout_seconds: u64,
}

impl Default for WikidataConfig {
    fn default() -> Self {
        WikidataConfig {
            api_url: WIKIDATA_API.to_string(),
            language: "en".to_string(),
            user_agent: format!("kbforge/{} (knowledge-base stability tooling)", env!("CARGO_PKG_VERSION")),
            requests_per_second: 5.0,
            max_retries: 3,
            backoff: Backoff::default(),
            timeout_seconds: 30,
        }
    }
}

/// Search-then-fetch resolver with a permanent on-disk cache.
///
/// Safe to share between threads; every HTTP request passes through one
/// rate limiter.
pub struct WikidataClient {
    config: WikidataConfig,
    http: Option<reqwest::blocking::Client>,
    cache: RwLock<HashMap<String, PopularityRecord>>,
    file: Option<Mutex<File>>,
    next_slot: Mutex<Option<Instant>>,
    calls: AtomicUsize,
}

impl WikidataClient {
    pub fn new(config: WikidataConfig) -> Result<Self, PopularityError> {
        let http = reqwest::blocking::Client::builder()
            .user_agent(config.user_agent.clone())
            .timeout(Duration::from_secs(config.timeout_seconds))
            .build()
            .map_err(|e| PopularityError::Transport(e.to_string()))?;
        Ok(Self::build(config, Some(http)))
    }

    /// Cache-only client: misses resolve to not-found without touching the network.
    pub fn offline() -> Self {
        Self::build(WikidataConfig::default(), None)
    }

    fn build(config: WikidataConfig, http: Option<reqwest::blocking::Client>) -> Self {
        WikidataClient {
            config,
            http,
            cache: RwLock::new(HashMap::new()),
            file: None,
            next_slot: Mutex::new(None),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn with_cache_file(mut self, path: &Path) -> Result<Self, PopularityError> {
        if path.exists() {
            let mut cache = self.cache.write().unwrap_or_else(|e| e.into_inner());
            for line in BufReader::new(File::open(path)?).lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<PopularityRecord>(&line) {
                    Ok(r) => {
                        cache.insert(r.entity.clone(), r);
                    }
                    Err(e) => log::warn!("skipping bad popularity cache line: {e}"),
                }
            }
        }
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        self.file = Some(Mutex::new(OpenOptions::new().create(true).append(true).open(path)?));
        Ok(self)
    }

    pub fn is_offline(&self) -> bool {
        self.http.is_none()
    }

    /// HTTP requests issued so far, retries included.
    pub fn network_calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn resolve(&self, entity: &str) -> Result<PopularityRecord, PopularityError> {
        let entity = entity.trim();
        if entity.is_empty() {
            return Err(PopularityError::EmptyEntity);
        }
        if let Some(hit) = self.cache.read().unwrap_or_else(|e| e.into_inner()).get(entity) {
            return Ok(hit.clone());
        }
        if self.http.is_none() {
            return Ok(PopularityRecord::not_found(entity));
        }
        let record = match self.search_top_hit(entity)? {
            None => PopularityRecord::not_found(entity),
            Some(qid) => PopularityRecord::found(entity, &qid, self.statement_count(&qid)?),
        };
        self.remember(&record)?;
        Ok(record)
    }

    /// Resolves labels in order, stopping at the first transport failure.
    pub fn resolve_all<'a, I>(&self, entities: I) -> Result<Vec<PopularityRecord>, PopularityError>
    where
        I: IntoIterator<Item = &'a String>,
    {
        entities.into_iter().map(|e| self.resolve(e)).collect()
    }

    fn remember(&self, record: &PopularityRecord) -> Result<(), PopularityError> {
        if let Some(file) = &self.file {
            let mut f = file.lock().unwrap_or_else(|e| e.into_inner());
            let json = serde_json::to_string(record).map_err(std::io::Error::other)?;
            writeln!(f, "{json}")?;
            f.flush()?;
        }
        self.cache
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(record.entity.clone(), record.clone());
        Ok(())
    }

    fn search_top_hit(&self, label: &str) -> Result<Option<String>, PopularityError> {
        let body = self.get(&[
            ("action", "wbsearchentities"),
            ("search", label),
            ("language", &self.config.language),
            ("type", "item"),
            ("limit", "5"),
            ("format", "json"),
        ])?;
        let hits = body
            .get("search")
            .and_then(Value::as_array)
            .ok_or_else(|| PopularityError::Payload("search response has no 'search' array".into()))?;
        if hits.len() > 1 {
            log::debug!("'{label}' has {} hits; taking the first", hits.len());
        }
        Ok(hits
            .first()
            .and_then(|h| h.get("id"))
            .and_then(Value::as_str)
            .map(str::to_string))
    }

    fn statement_count(&self, qid: &str) -> Result<u64, PopularityError> {
        let body = self.get(&[("action", "wbgetentities"), ("ids", qid), ("props", "claims"), ("format", "json")])?;
        let claims = body
            .get("entities")
            .and_then(|e| e.get(qid))
            .and_then(|e| e.get("claims"))
            .and_then(Value::as_object)
            .ok_or_else(|| PopularityError::Payload(format!("no claims for {qid}")))?;
        Ok(claims.values().map(|v| v.as_array().map_or(0, |a| a.len() as u64)).sum())
    }

    fn wait_for_slot(&self) {
        let interval = Duration::from_secs_f64(1.0 / self.config.requests_per_second.max(0.001));
        let slot = {
            let mut next = self.next_slot.lock().unwrap_or_else(|e| e.into_inner());
            let now = Instant::now();
            let slot = next.map_or(now, |t| t.max(now));
            *next = Some(slot + interval);
            slot
        };
        let now = Instant::now();
        if slot > now {
            std::thread::sleep(slot - now);
        }
    }

    fn get(&self, query: &[(&str, &str)]) -> Result<Value, PopularityError> {
        let http = self.http.as_ref().ok_or_else(|| PopularityError::Transport("client is offline".into()))?;
        let url = url::Url::parse_with_params(&self.config.api_url, query)
            .map_err(|e| PopularityError::Transport(format!("bad api url: {e}")))?;
        let mut last = String::new();
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                self.config.backoff.sleep(attempt - 1);
            }
            self.wait_for_slot();
            self.calls.fetch_add(1, Ordering::SeqCst);
            let resp = match http.get(url.clone()).send() {
                Ok(r) => r,
                Err(e) => {
                    last = e.to_string();
                    continue;
                }
            };
            let status = resp.status().as_u16();
            match status {
                200..=299 => {
                    let text = resp.text().map_err(|e| PopularityError::Transport(e.to_string()))?;
                    return serde_json::from_str(&text).map_err(|e| PopularityError::Payload(e.to_string()));
                }
                429 | 500..=599 => last = format!("HTTP {status}"),
                _ => return Err(PopularityError::Transport(format!("HTTP {status}"))),
            }
        }
        Err(PopularityError::Transport(last))
    }
}
