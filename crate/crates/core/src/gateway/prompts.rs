//! Elicitation and NER prompt templates.
//!
//! English templates are built in. Other languages are read from
//! `<dir>/<lang>.json` files shaped like
//! `{"elicitation": "...{topic}...", "ner": "...{topic}...", "topics": {"babylon": "..."}}`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

pub const TOPIC_SLOT: &str = "{topic}";

const ELICITATION_EN: &str = "I want to construct a knowledge graph on the topic of the {topic}. \
Given a subject entity, return all facts that you know for the subject as a list of \
(subject, predicate, object) triples. The number of facts may be very high, between 50 to 100 \
or more, for very popular subjects. For less popular subjects, the number of facts can be very \
low, like 5 or 10. Important:
- If you don't know the subject, return an empty list.
- If the subject is not a named entity, return an empty list.
- If the subject does not belong to the topic of the {topic}, return an empty list.
- If the subject is a named entity, include at least one triple where predicate is \"instanceOf\".
- Do not get too wordy.
- Separate several objects into multiple triples with one object.";

const NER_EN: &str = "I want you to perform named entity recognition (NER) on the topic of the \
{topic}. Your task is to classify if given phrases are topic-relevant named entities, or not \
(e.g., literals, dates, URLs, verbose phrases...). Each phrase is given to you in a line.";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("topic is empty")]
    EmptyTopic,
    #[error("no prompt template for language '{language}' (looked for {path:?})")]
    MissingTemplate {
        language: String,
        path: Option<PathBuf>,
    },
    #[error("unreadable prompt template {path}: {detail}")]
    BadTemplate { path: PathBuf, detail: String },
}

#[derive(Debug, Clone, Deserialize)]
pub struct PromptTemplates {
    pub elicitation: String,
    pub ner: String,
    /// Localized descriptions of the built-in topic keys.
    #[serde(default)]
    pub topics: BTreeMap<String, String>,
}

/// Human-readable description of a built-in topic key, or the key itself.
pub fn topic_description(topic: &str) -> &str {
    match topic {
        "babylon" => "ancient city of Babylon",
        "tbbt" => "TV series The Big Bang Theory",
        "dax40" => "DAX 40 Index",
        other => other,
    }
}

fn is_english(language: &str) -> bool {
    let primary = language.split(['-', '_']).next().unwrap_or("");
    primary.eq_ignore_ascii_case("en")
}

impl PromptTemplates {
    pub fn english() -> Self {
        PromptTemplates {
            elicitation: ELICITATION_EN.to_string(),
            ner: NER_EN.to_string(),
            topics: BTreeMap::new(),
        }
    }

    /// Templates for `language`; non-English languages need `<dir>/<language>.json`.
    pub fn load(language: &str, dir: Option<&Path>) -> Result<Self, PromptError> {
        if let Some(dir) = dir {
            let path = dir.join(format!("{language}.json"));
            if path.is_file() {
                let text = std::fs::read_to_string(&path).map_err(|e| PromptError::BadTemplate {
                    path: path.clone(),
                    detail: e.to_string(),
                })?;
                return serde_json::from_str(&text).map_err(|e| PromptError::BadTemplate {
                    path,
                    detail: e.to_string(),
                });
            }
            if is_english(language) {
                return Ok(Self::english());
            }
            return Err(PromptError::MissingTemplate {
                language: language.to_string(),
                path: Some(path),
            });
        }
        if is_english(language) {
            Ok(Self::english())
        } else {
            Err(PromptError::MissingTemplate {
                language: language.to_string(),
                path: None,
            })
        }
    }

    fn topic_text<'a>(&'a self, topic: &'a str) -> &'a str {
        self.topics
            .get(topic)
            .map(String::as_str)
            .unwrap_or_else(|| topic_description(topic))
    }

    pub fn elicitation(&self, topic: &str) -> Result<String, PromptError> {
        self.fill(&self.elicitation, topic)
    }

    pub fn ner(&self, topic: &str) -> Result<String, PromptError> {
        self.fill(&self.ner, topic)
    }

    fn fill(&self, template: &str, topic: &str) -> Result<String, PromptError> {
        let topic = topic.trim();
        if topic.is_empty() {
            return Err(PromptError::EmptyTopic);
        }
        Ok(template.replace(TOPIC_SLOT, self.topic_text(topic)))
    }
}

pub fn render_elicitation_prompt(
    topic: &str,
    language: &str,
    template_dir: Option<&Path>,
) -> Result<String, PromptError> {
    PromptTemplates::load(language, template_dir)?.elicitation(topic)
}

pub fn render_ner_prompt(
    topic: &str,
    language: &str,
    template_dir: Option<&Path>,
) -> Result<String, PromptError> {
    PromptTemplates::load(language, template_dir)?.ner(topic)
}
