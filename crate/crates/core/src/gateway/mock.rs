//! Deterministic fixture backend.
//!
//! A world file maps entity labels to their facts and lists which labels are
//! named entities. Optional injectors synthesize the degenerate behaviours seen
//! with weaker models: syllable loops, Wikidata-style Q identifiers, off-topic
//! branches, and per-run noise.

use std::collections::{BTreeMap, BTreeSet};
use std::hash::Hasher;
use std::path::Path;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ElicitationRequest, ElicitationResponse, Gateway, GatewayError, RawTriple, DEFAULT_NER_BATCH};
use crate::model::normalize_label;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("cannot read world file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid world file: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldFact {
    /// Defaults to the entity the fact is filed under.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
    pub predicate: String,
    pub object: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuffixLoopInjector {
    pub stem: String,
    pub syllable: String,
    /// Second syllable branch that keeps the family growing past the detector.
    #[serde(default)]
    pub escape: Option<String>,
    #[serde(default = "default_successor")]
    pub predicate: String,
}

fn default_successor() -> String {
    "hasSuccessor".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QIdInjector {
    pub subjects: Vec<String>,
    #[serde(default = "one")]
    pub per_subject: u64,
    #[serde(default = "default_q_start")]
    pub start: u64,
    #[serde(default = "default_related")]
    pub predicate: String,
}

fn one() -> u64 {
    1
}
fn default_q_start() -> u64 {
    768_509
}
fn default_related() -> String {
    "relatedTo".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffTopicInjector {
    pub trigger: String,
    pub chain: Vec<String>,
    #[serde(default = "default_related")]
    pub predicate: String,
}

/// Salted pseudo-random perturbation: drops some facts and adds hallucinated entities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseInjector {
    pub salt: u64,
    #[serde(default)]
    pub drop_rate: f64,
    #[serde(default)]
    pub extra_entities: usize,
    #[serde(default = "default_associated")]
    pub predicate: String,
}

fn default_associated() -> String {
    "associatedWith".to_string()
}

const NOISE_MARKER: &str = " associate ";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Injectors {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suffix_loop: Option<SuffixLoopInjector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_identifiers: Option<QIdInjector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub off_topic: Option<OffTopicInjector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseInjector>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WorldFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<String>,
    /// Ground truth for NER.
    pub entities: BTreeSet<String>,
    pub facts: BTreeMap<String, Vec<WorldFact>>,
    #[serde(default)]
    pub injectors: Injectors,
}

#[derive(Debug, Clone)]
pub struct MockWorld {
    world: WorldFile,
    ner_batch_size: usize,
}

#[derive(Serialize)]
struct Payload<'a> {
    triples: &'a [RawTriple],
}

fn salted_hash(salt: u64, parts: &[&str]) -> u64 {
    let mut h = FnvHasher::default();
    h.write_u64(salt);
    for p in parts {
        h.write(p.as_bytes());
        h.write_u8(0xff);
    }
    // splitmix64 finalizer; raw FNV output has weak high bits for short inputs.
    let mut z = h.finish().wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn unit_interval(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn is_q_label(label: &str) -> Option<u64> {
    label.strip_prefix('Q').filter(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit())).and_then(|d| d.parse().ok())
}

fn is_noise_label(label: &str) -> bool {
    match label.rfind(NOISE_MARKER) {
        Some(i) => {
            let tail = &label[i + NOISE_MARKER.len()..];
            i > 0 && tail.len() == 8 && tail.bytes().all(|b| b.is_ascii_hexdigit())
        }
        None => false,
    }
}

impl SuffixLoopInjector {
    fn in_family(&self, label: &str) -> bool {
        if label == self.stem {
            return true;
        }
        let Some(rest) = label.strip_prefix(self.stem.as_str()).and_then(|r| r.strip_prefix('-')) else {
            return false;
        };
        rest.split('-')
            .all(|tok| tok == self.syllable || Some(tok) == self.escape.as_deref())
    }
}

impl MockWorld {
    pub fn new(world: WorldFile) -> Self {
        let entities = world
            .entities
            .iter()
            .map(|e| normalize_label(e))
            .collect();
        let facts = world
            .facts
            .iter()
            .map(|(k, v)| (normalize_label(k), v.clone()))
            .collect();
        MockWorld {
            world: WorldFile {
                entities,
                facts,
                ..world
            },
            ner_batch_size: DEFAULT_NER_BATCH,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, WorldError> {
        Ok(Self::new(serde_json::from_str(text)?))
    }

    pub fn load(path: &Path) -> Result<Self, WorldError> {
        let text = std::fs::read_to_string(path).map_err(|source| WorldError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn world(&self) -> &WorldFile {
        &self.world
    }

    pub fn with_ner_batch_size(mut self, n: usize) -> Self {
        self.ner_batch_size = n.max(1);
        self
    }

    pub fn with_noise(mut self, noise: Option<NoiseInjector>) -> Self {
        self.world.injectors.noise = noise;
        self
    }

    pub fn with_suffix_loop(mut self, inj: SuffixLoopInjector) -> Self {
        self.world.injectors.suffix_loop = Some(inj);
        self
    }

    /// Whether the world considers `label` a named entity.
    pub fn is_entity(&self, label: &str) -> bool {
        let label = normalize_label(label);
        if self.world.entities.contains(&label) {
            return true;
        }
        let inj = &self.world.injectors;
        if let Some(sl) = &inj.suffix_loop {
            if sl.in_family(&label) {
                return true;
            }
        }
        if inj.q_identifiers.is_some() && is_q_label(&label).is_some() {
            return true;
        }
        if let Some(ot) = &inj.off_topic {
            if ot.chain.iter().any(|c| normalize_label(c) == label) {
                return true;
            }
        }
        inj.noise.is_some() && is_noise_label(&label)
    }

    fn answer(&self, subject: &str) -> (Vec<RawTriple>, Vec<String>) {
        let inj = &self.world.injectors;
        let mut triples = Vec::new();
        let mut off_topic = Vec::new();
        let push = |triples: &mut Vec<RawTriple>, p: &str, o: String| {
            triples.push(RawTriple {
                subject: subject.to_string(),
                predicate: p.to_string(),
                object: o,
            })
        };

        if let Some(facts) = self.world.facts.get(subject) {
            for (i, f) in facts.iter().enumerate() {
                if let Some(noise) = &inj.noise {
                    let idx = i.to_string();
                    if unit_interval(salted_hash(noise.salt, &["drop", subject, &idx])) < noise.drop_rate {
                        continue;
                    }
                }
                triples.push(RawTriple {
                    subject: f.subject.clone().unwrap_or_else(|| subject.to_string()),
                    predicate: f.predicate.clone(),
                    object: f.object.clone(),
                });
            }
        }

        if let Some(sl) = &inj.suffix_loop {
            if sl.in_family(subject) {
                push(&mut triples, &sl.predicate, format!("{subject}-{}", sl.syllable));
                if let Some(esc) = &sl.escape {
                    push(&mut triples, &sl.predicate, format!("{subject}-{esc}"));
                }
            }
        }

        if let Some(q) = &inj.q_identifiers {
            if let Some(i) = q.subjects.iter().position(|s| normalize_label(s) == subject) {
                for j in 0..q.per_subject {
                    push(&mut triples, &q.predicate, format!("Q{}", q.start + i as u64 * q.per_subject + j));
                }
            } else if let Some(n) = is_q_label(subject) {
                push(&mut triples, &q.predicate, format!("Q{}", n + 1));
            }
        }

        if let Some(ot) = &inj.off_topic {
            let chain: Vec<String> = ot.chain.iter().map(|c| normalize_label(c)).collect();
            let next = if normalize_label(&ot.trigger) == subject {
                chain.first()
            } else {
                chain.iter().position(|c| c == subject).and_then(|i| chain.get(i + 1))
            };
            if let Some(next) = next {
                push(&mut triples, &ot.predicate, next.clone());
                off_topic.push(next.clone());
            }
        }

        if let Some(noise) = &inj.noise {
            if !is_noise_label(subject) && !triples.is_empty() {
                for j in 0..noise.extra_entities {
                    let h = salted_hash(noise.salt, &["extra", subject, &j.to_string()]);
                    push(&mut triples, &noise.predicate, format!("{subject}{NOISE_MARKER}{:08x}", h as u32));
                }
            }
        }
        (triples, off_topic)
    }
}

impl Gateway for MockWorld {
    fn elicit_raw(&self, req: &ElicitationRequest) -> Result<ElicitationResponse, GatewayError> {
        let subject = normalize_label(&req.subject);
        let (triples, off_topic) = self.answer(&subject);
        let raw_payload = serde_json::to_string(&Payload { triples: &triples })
            .map_err(|e| GatewayError::Transport(e.to_string()))?;
        Ok(ElicitationResponse {
            triples,
            raw_payload,
            off_topic,
        })
    }

    fn classify_batch(&self, phrases: &[String], _topic: &str, _language: &str) -> Result<Vec<bool>, GatewayError> {
        Ok(phrases.iter().map(|p| self.is_entity(p)).collect())
    }

    fn ner_batch_size(&self) -> usize {
        self.ner_batch_size
    }
}
