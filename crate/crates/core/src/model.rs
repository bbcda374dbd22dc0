//! Knowledge-base data model: triples, structural categories and run metadata.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crawler::DegeneracyEvent;

/// Predicate that marks class membership.
pub const INSTANCE_OF: &str = "instanceOf";

/// Separator used when a triple is flattened into one comparable string.
pub const TRIPLE_SEPARATOR: char = '\u{241F}';

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("triple has an empty subject")]
    EmptySubject,
    #[error("triple has an empty predicate")]
    EmptyPredicate,
    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),
}

/// Strips surrounding whitespace and collapses internal runs to one space.
pub fn normalize_label(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for word in raw.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TermKind {
    #[serde(rename = "ne")]
    NamedEntity,
    #[serde(rename = "lit")]
    Literal,
}

impl TermKind {
    pub fn code(self) -> &'static str {
        match self {
            TermKind::NamedEntity => "ne",
            TermKind::Literal => "lit",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        match code {
            "ne" => Some(TermKind::NamedEntity),
            "lit" => Some(TermKind::Literal),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructuralCategory {
    NamedEntities,
    Literals,
    Predicates,
    Classes,
    Triples,
}

impl StructuralCategory {
    pub const ALL: [StructuralCategory; 5] = [
        StructuralCategory::NamedEntities,
        StructuralCategory::Literals,
        StructuralCategory::Predicates,
        StructuralCategory::Classes,
        StructuralCategory::Triples,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StructuralCategory::NamedEntities => "named_entities",
            StructuralCategory::Literals => "literals",
            StructuralCategory::Predicates => "predicates",
            StructuralCategory::Classes => "classes",
            StructuralCategory::Triples => "triples",
        }
    }

    /// Accepts the long name or the short CLI alias (`ne`, `lit`, `pred`, `cls`, `tri`).
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "named_entities" | "ne" | "nes" => StructuralCategory::NamedEntities,
            "literals" | "lit" => StructuralCategory::Literals,
            "predicates" | "pred" => StructuralCategory::Predicates,
            "classes" | "cls" => StructuralCategory::Classes,
            "triples" | "tri" => StructuralCategory::Triples,
            _ => return None,
        })
    }
}

impl fmt::Display for StructuralCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Normalized (subject, predicate, object) identity of a triple.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TripleKey {
    pub subject: String,
    pub predicate: String,
    pub object: String,
}

impl TripleKey {
    pub fn new(subject: &str, predicate: &str, object: &str) -> Self {
        TripleKey {
            subject: normalize_label(subject),
            predicate: normalize_label(predicate),
            object: normalize_label(object),
        }
    }

    /// `s⟂p⟂o` with U+241F between the parts.
    pub fn joined(&self) -> String {
        let mut s = String::with_capacity(
            self.subject.len() + self.predicate.len() + self.object.len() + 6,
        );
        s.push_str(&self.subject);
        s.push(TRIPLE_SEPARATOR);
        s.push_str(&self.predicate);
        s.push(TRIPLE_SEPARATOR);
        s.push_str(&self.object);
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triple {
    pub subject: String,
    pub predicate: String,
    pub object: String,
    pub object_kind: TermKind,
    /// BFS depth at which the subject was expanded.
    pub layer: u32,
    pub run_id: String,
}

impl Triple {
    pub fn new(
        subject: &str,
        predicate: &str,
        object: &str,
        object_kind: TermKind,
        layer: u32,
        run_id: &str,
    ) -> Self {
        Triple {
            subject: subject.to_string(),
            predicate: predicate.to_string(),
            object: object.to_string(),
            object_kind,
            layer,
            run_id: run_id.to_string(),
        }
    }

    pub fn key(&self) -> TripleKey {
        TripleKey::new(&self.subject, &self.predicate, &self.object)
    }
}

/// Accumulated triples of one run, deduplicated on normalized (s, p, o).
#[derive(Debug, Clone, Default)]
pub struct KnowledgeBase {
    triples: Vec<Triple>,
    keys: HashSet<TripleKey>,
    pub visited_subjects: BTreeSet<String>,
    pub layer_count: u32,
}

impl PartialEq for KnowledgeBase {
    fn eq(&self, other: &Self) -> bool {
        self.triples == other.triples
            && self.visited_subjects == other.visited_subjects
            && self.layer_count == other.layer_count
    }
}

impl KnowledgeBase {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a KB from triples, silently dropping duplicates.
    pub fn from_triples<I: IntoIterator<Item = Triple>>(triples: I) -> Result<Self, ModelError> {
        let mut kb = KnowledgeBase::new();
        for t in triples {
            kb.insert(t)?;
        }
        Ok(kb)
    }

    /// Normalizes and inserts a triple. Returns `Ok(false)` for a duplicate.
    pub fn insert(&mut self, mut triple: Triple) -> Result<bool, ModelError> {
        let key = triple.key();
        if key.subject.is_empty() {
            return Err(ModelError::EmptySubject);
        }
        if key.predicate.is_empty() {
            return Err(ModelError::EmptyPredicate);
        }
        if self.keys.contains(&key) {
            return Ok(false);
        }
        triple.subject = key.subject.clone();
        triple.predicate = key.predicate.clone();
        triple.object = key.object.clone();
        self.layer_count = self.layer_count.max(triple.layer + 1);
        self.keys.insert(key);
        self.triples.push(triple);
        Ok(true)
    }

    pub fn contains(&self, key: &TripleKey) -> bool {
        self.keys.contains(key)
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    /// Triples ordered by (s, p, o); used by every exporter.
    pub fn sorted_triples(&self) -> Vec<&Triple> {
        let mut v: Vec<&Triple> = self.triples.iter().collect();
        v.sort_by(|a, b| {
            (&a.subject, &a.predicate, &a.object).cmp(&(&b.subject, &b.predicate, &b.object))
        });
        v
    }

    pub fn categories(&self) -> CategorySets {
        derive_categories(self)
    }
}

/// Per-category label sets of a knowledge base.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategorySets(pub BTreeMap<StructuralCategory, BTreeSet<String>>);

impl CategorySets {
    pub fn get(&self, category: StructuralCategory) -> &BTreeSet<String> {
        static EMPTY: BTreeSet<String> = BTreeSet::new();
        self.0.get(&category).unwrap_or(&EMPTY)
    }

    pub fn counts(&self) -> BTreeMap<StructuralCategory, usize> {
        StructuralCategory::ALL
            .iter()
            .map(|c| (*c, self.get(*c).len()))
            .collect()
    }
}

/// Splits a KB into the five structural categories.
///
/// Named entities are every subject plus every object tagged as an entity;
/// classes are the distinct objects of `instanceOf` triples.
pub fn derive_categories(kb: &KnowledgeBase) -> CategorySets {
    let mut named = BTreeSet::new();
    let mut literals = BTreeSet::new();
    let mut predicates = BTreeSet::new();
    let mut classes = BTreeSet::new();
    let mut triples = BTreeSet::new();
    for t in kb.triples() {
        named.insert(t.subject.clone());
        match t.object_kind {
            TermKind::NamedEntity => {
                named.insert(t.object.clone());
            }
            TermKind::Literal => {
                literals.insert(t.object.clone());
            }
        }
        predicates.insert(t.predicate.clone());
        if t.predicate == INSTANCE_OF {
            classes.insert(t.object.clone());
        }
        triples.insert(t.key().joined());
    }
    let mut map = BTreeMap::new();
    map.insert(StructuralCategory::NamedEntities, named);
    map.insert(StructuralCategory::Literals, literals);
    map.insert(StructuralCategory::Predicates, predicates);
    map.insert(StructuralCategory::Classes, classes);
    map.insert(StructuralCategory::Triples, triples);
    CategorySets(map)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caps {
    pub max_layers: u32,
    pub max_wall_seconds: u64,
    pub max_triples: u64,
}

impl Default for Caps {
    fn default() -> Self {
        Caps {
            max_layers: 30,
            max_wall_seconds: 345_600,
            max_triples: 5_000_000,
        }
    }
}

/// Experiment parameters for one crawl.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// `babylon`, `tbbt`, `dax40` or a free-form topic description.
    pub topic: String,
    pub seed_entity: String,
    #[serde(default = "default_language")]
    pub prompt_language: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_model")]
    pub model_id: String,
    #[serde(default)]
    pub caps: Caps,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
}

fn default_language() -> String {
    "en".to_string()
}

fn default_model() -> String {
    "gpt-4.1-mini".to_string()
}

fn default_parallelism() -> usize {
    8
}

/// Highest temperature accepted by OpenAI-compatible chat endpoints.
pub const MAX_TEMPERATURE: f64 = 2.0;

impl RunConfig {
    pub fn new(topic: &str, seed_entity: &str) -> Self {
        RunConfig {
            topic: topic.to_string(),
            seed_entity: seed_entity.to_string(),
            prompt_language: default_language(),
            temperature: 0.0,
            model_id: default_model(),
            caps: Caps::default(),
            parallelism: default_parallelism(),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        if normalize_label(&self.topic).is_empty() {
            return bad("topic is empty");
        }
        if normalize_label(&self.seed_entity).is_empty() {
            return bad("seed entity is empty");
        }
        if self.prompt_language.trim().is_empty() {
            return bad("prompt language is empty");
        }
        if !(0.0..=MAX_TEMPERATURE).contains(&self.temperature) {
            return bad("temperature outside [0, 2]");
        }
        if self.caps.max_layers == 0 || self.caps.max_wall_seconds == 0 || self.caps.max_triples == 0
        {
            return bad("caps must be positive");
        }
        if self.parallelism == 0 {
            return bad("parallelism must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Organic,
    CappedLayers,
    CappedTime,
    CappedTriples,
}

impl Termination {
    pub fn is_capped(self) -> bool {
        self != Termination::Organic
    }
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::Organic => "organic",
            Termination::CappedLayers => "capped_layers",
            Termination::CappedTime => "capped_time",
            Termination::CappedTriples => "capped_triples",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerStats {
    pub layer: u32,
    pub new_entities: usize,
    pub new_triples: usize,
}

/// Outcome of one crawl.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run_id: String,
    pub config: RunConfig,
    pub kb: KnowledgeBase,
    pub termination: Termination,
    pub wall_seconds: f64,
    pub deepest_layer: u32,
    pub per_layer_counts: Vec<LayerStats>,
    pub degeneracy_flags: Vec<DegeneracyEvent>,
    /// Subjects whose elicitation never produced parseable output.
    pub failed_subjects: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ne(s: &str, p: &str, o: &str) -> Triple {
        Triple::new(s, p, o, TermKind::NamedEntity, 0, "r")
    }

    fn lit(s: &str, p: &str, o: &str) -> Triple {
        Triple::new(s, p, o, TermKind::Literal, 0, "r")
    }

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_label("  Hammurabi "), "Hammurabi");
        assert_eq!(normalize_label("Temple  of  Marduk"), "Temple of Marduk");
        assert_eq!(normalize_label("Hammurabi"), "Hammurabi");
        assert_eq!(normalize_label("\tIshtar\n Gate "), "Ishtar Gate");
        assert_eq!(normalize_label("   "), "");
        assert_eq!(normalize_label("kIng"), "kIng");
    }

    #[test]
    fn single_instance_of_triple() {
        let kb = KnowledgeBase::from_triples([ne("Hammurabi", "instanceOf", "King")]).unwrap();
        let cats = derive_categories(&kb);
        assert_eq!(cats.get(StructuralCategory::Classes), &set(&["King"]));
        assert_eq!(
            cats.get(StructuralCategory::NamedEntities),
            &set(&["Hammurabi", "King"])
        );
        assert_eq!(cats.get(StructuralCategory::Predicates), &set(&["instanceOf"]));
        assert!(cats.get(StructuralCategory::Literals).is_empty());
        assert_eq!(cats.get(StructuralCategory::Triples).len(), 1);
    }

    #[test]
    fn empty_kb_has_empty_categories() {
        let cats = derive_categories(&KnowledgeBase::new());
        for c in StructuralCategory::ALL {
            assert!(cats.get(c).is_empty(), "{c}");
        }
    }

    #[test]
    fn literal_class_still_counts_as_class() {
        let kb = KnowledgeBase::from_triples([lit("Akitu", "instanceOf", "festival")]).unwrap();
        let cats = kb.categories();
        assert_eq!(cats.get(StructuralCategory::Classes), &set(&["festival"]));
        assert_eq!(cats.get(StructuralCategory::Literals), &set(&["festival"]));
        assert_eq!(cats.get(StructuralCategory::NamedEntities), &set(&["Akitu"]));
    }

    #[test]
    fn dedup_on_normalized_key() {
        let mut kb = KnowledgeBase::new();
        assert!(kb.insert(ne("Hammurabi", "instanceOf", "King")).unwrap());
        assert!(!kb.insert(ne(" Hammurabi", "instanceOf ", "King")).unwrap());
        assert!(!kb.insert(lit("Hammurabi", "instanceOf", "King")).unwrap());
        assert!(kb.insert(ne("Hammurabi", "instanceOf", "king")).unwrap());
        assert_eq!(kb.len(), 2);
        assert_eq!(kb.categories().get(StructuralCategory::Triples).len(), 2);
    }

    #[test]
    fn empty_subject_or_predicate_rejected() {
        let mut kb = KnowledgeBase::new();
        assert_eq!(kb.insert(ne("  ", "p", "o")), Err(ModelError::EmptySubject));
        assert_eq!(kb.insert(ne("s", "", "o")), Err(ModelError::EmptyPredicate));
        assert!(kb.is_empty());
    }

    #[test]
    fn joined_key_uses_reserved_separator() {
        let k = TripleKey::new("a", "b", "c d");
        assert_eq!(k.joined(), "a\u{241F}b\u{241F}c d");
    }

    #[test]
    fn config_validation() {
        let mut c = RunConfig::new("babylon", "Hammurabi");
        assert!(c.validate().is_ok());
        c.seed_entity = " ".into();
        assert!(c.validate().is_err());
        let mut c = RunConfig::new("babylon", "Hammurabi");
        c.caps.max_layers = 0;
        assert!(c.validate().is_err());
        let mut c = RunConfig::new("babylon", "Hammurabi");
        c.temperature = -0.1;
        assert!(c.validate().is_err());
    }
}
