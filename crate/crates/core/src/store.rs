//! On-disk run layout: `manifest.json` plus `triples.ndjson`.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crawler::DegeneracyEvent;
use crate::model::{KnowledgeBase, LayerStats, ModelError, RunConfig, RunRecord, TermKind, Termination, Triple};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRIPLES_FILE: &str = "triples.ndjson";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed JSON in {path} line {line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("run directory {0} already exists")]
    AlreadyExists(PathBuf),
    #[error("invalid triple in {path}: {source}")]
    Model {
        path: PathBuf,
        #[source]
        source: ModelError,
    },
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// One line of `triples.ndjson`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripleLine {
    pub s: String,
    pub p: String,
    pub o: String,
    pub o_kind: TermKind,
    pub layer: u32,
}

impl TripleLine {
    pub fn from_triple(t: &Triple) -> Self {
        TripleLine {
            s: t.subject.clone(),
            p: t.predicate.clone(),
            o: t.object.clone(),
            o_kind: t.object_kind,
            layer: t.layer,
        }
    }

    pub fn into_triple(self, run_id: &str) -> Triple {
        Triple::new(&self.s, &self.p, &self.o, self.o_kind, self.layer, run_id)
    }
}

/// Run scalars written next to the triples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub config: RunConfig,
    pub termination: Termination,
    pub wall_seconds: f64,
    pub deepest_layer: u32,
    pub triple_count: usize,
    pub per_layer_counts: Vec<LayerStats>,
    pub degeneracy_flags: Vec<DegeneracyEvent>,
    #[serde(default)]
    pub failed_subjects: Vec<String>,
    #[serde(default)]
    pub visited_subjects: Vec<String>,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
}

pub fn write_triples_ndjson<W: Write>(kb: &KnowledgeBase, mut out: W) -> std::io::Result<()> {
    for t in kb.triples() {
        serde_json::to_writer(&mut out, &TripleLine::from_triple(t))?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_triples_ndjson(path: &Path, run_id: &str) -> Result<KnowledgeBase, StoreError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut kb = KnowledgeBase::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TripleLine = serde_json::from_str(&line).map_err(|source| StoreError::Json {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        })?;
        kb.insert(parsed.into_triple(run_id))
            .map_err(|source| StoreError::Model {
                path: path.to_path_buf(),
                source,
            })?;
    }
    Ok(kb)
}

/// Writes a finished run into a fresh directory. Refuses to touch an existing one.
pub fn write_run(
    dir: &Path,
    record: &RunRecord,
    started_at: DateTime<Utc>,
    finished_at: DateTime<Utc>,
) -> Result<(), StoreError> {
    if dir.exists() {
        return Err(StoreError::AlreadyExists(dir.to_path_buf()));
    }
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let triples_path = dir.join(TRIPLES_FILE);
    let f = File::create(&triples_path).map_err(io_err(&triples_path))?;
    write_triples_ndjson(&record.kb, BufWriter::new(f)).map_err(io_err(&triples_path))?;

    let manifest = RunManifest {
        run_id: record.run_id.clone(),
        config: record.config.clone(),
        termination: record.termination,
        wall_seconds: record.wall_seconds,
        deepest_layer: record.deepest_layer,
        triple_count: record.kb.len(),
        per_layer_counts: record.per_layer_counts.clone(),
        degeneracy_flags: record.degeneracy_flags.clone(),
        failed_subjects: record.failed_subjects.clone(),
        visited_subjects: record.kb.visited_subjects.iter().cloned().collect(),
        started_at,
        finished_at,
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)
}

pub fn read_manifest(dir: &Path) -> Result<RunManifest, StoreError> {
    read_json(&dir.join(MANIFEST_FILE))
}

pub fn read_run(dir: &Path) -> Result<RunRecord, StoreError> {
    let manifest = read_manifest(dir)?;
    let mut kb = read_triples_ndjson(&dir.join(TRIPLES_FILE), &manifest.run_id)?;
    kb.visited_subjects = manifest.visited_subjects.iter().cloned().collect();
    kb.layer_count = kb.layer_count.max(manifest.deepest_layer + 1);
    Ok(RunRecord {
        run_id: manifest.run_id,
        config: manifest.config,
        kb,
        termination: manifest.termination,
        wall_seconds: manifest.wall_seconds,
        deepest_layer: manifest.deepest_layer,
        per_layer_counts: manifest.per_layer_counts,
        degeneracy_flags: manifest.degeneracy_flags,
        failed_subjects: manifest.failed_subjects,
    })
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), StoreError> {
    let f = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| StoreError::Json {
        path: path.to_path_buf(),
        line: 0,
        source,
    })?;
    w.write_all(b"\n").map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, StoreError> {
    let f = File::open(path).map_err(io_err(path))?;
    serde_json::from_reader(BufReader::new(f)).map_err(|source| StoreError::Json {
        path: path.to_path_buf(),
        line: 0,
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Caps;

    fn record() -> RunRecord {
        let mut kb = KnowledgeBase::from_triples([
            Triple::new("Hammurabi", "instanceOf", "King", TermKind::NamedEntity, 0, "r1"),
            Triple::new("Hammurabi", "reignStart", "1792 BC", TermKind::Literal, 0, "r1"),
        ])
        .unwrap();
        kb.visited_subjects.insert("Hammurabi".into());
        kb.visited_subjects.insert("King".into());
        kb.layer_count = 2;
        RunRecord {
            run_id: "r1".into(),
            config: RunConfig {
                caps: Caps {
                    max_layers: 4,
                    ..Caps::default()
                },
                ..RunConfig::new("babylon", "Hammurabi")
            },
            kb,
            termination: Termination::Organic,
            wall_seconds: 0.5,
            deepest_layer: 1,
            per_layer_counts: vec![LayerStats {
                layer: 0,
                new_entities: 1,
                new_triples: 2,
            }],
            degeneracy_flags: vec![],
            failed_subjects: vec![],
        }
    }

    #[test]
    fn run_round_trips_through_disk() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("r1");
        let rec = record();
        let now = Utc::now();
        write_run(&dir, &rec, now, now).unwrap();
        let line = fs::read_to_string(dir.join(TRIPLES_FILE)).unwrap();
        assert_eq!(
            line.lines().next().unwrap(),
            r#"{"s":"Hammurabi","p":"instanceOf","o":"King","o_kind":"ne","layer":0}"#
        );
        let back = read_run(&dir).unwrap();
        assert_eq!(back, rec);
    }

    #[test]
    fn existing_run_directory_is_not_overwritten() {
        let tmp = tempfile::tempdir().unwrap();
        let now = Utc::now();
        write_run(tmp.path(), &record(), now, now).unwrap_err();
    }
}
