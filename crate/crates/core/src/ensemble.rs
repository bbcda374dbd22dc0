//! Intersection ensembling over repeated runs, with an elbow heuristic for
//! choosing how many runs a triple must appear in.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::model::{KnowledgeBase, ModelError, RunRecord, TermKind, Triple, TripleKey};

pub const ELBOW_CSV: &str = "elbow.csv";
pub const ELBOW_PLOT_JSON: &str = "elbow_plot.json";

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("no runs to ensemble")]
    NoRuns,
    #[error("k must be within 1..={n}, got {k}")]
    KOutOfRange { k: usize, n: usize },
    #[error("elbow needs at least 3 points, got {0}")]
    TooFewPoints(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("ensemble output: {0}")]
    Io(#[from] std::io::Error),
}

/// Number of distinct runs containing each triple key.
pub fn occurrence_counts(records: &[RunRecord]) -> HashMap<TripleKey, usize> {
    let mut counts = HashMap::new();
    for r in records {
        let keys: BTreeSet<TripleKey> = r.kb.triples().iter().map(Triple::key).collect();
        for k in keys {
            *counts.entry(k).or_insert(0) += 1;
        }
    }
    counts
}

fn check_k(records: &[RunRecord], k: usize) -> Result<(), EnsembleError> {
    if records.is_empty() {
        return Err(EnsembleError::NoRuns);
    }
    if k == 0 || k > records.len() {
        return Err(EnsembleError::KOutOfRange { k, n: records.len() });
    }
    Ok(())
}

pub fn shared_triples_at_k(records: &[RunRecord], k: usize) -> Result<BTreeSet<TripleKey>, EnsembleError> {
    check_k(records, k)?;
    Ok(occurrence_counts(records)
        .into_iter()
        .filter(|(_, c)| *c >= k)
        .map(|(key, _)| key)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SharedTripleCurve {
    /// `(k, shared_count)` for k = 1..=n.
    pub points: Vec<(usize, usize)>,
}

impl SharedTripleCurve {
    pub fn from_records(records: &[RunRecord]) -> Result<Self, EnsembleError> {
        if records.is_empty() {
            return Err(EnsembleError::NoRuns);
        }
        let n = records.len();
        let mut at_least = vec![0usize; n + 2];
        for c in occurrence_counts(records).into_values() {
            at_least[c] += 1;
        }
        for k in (1..=n).rev() {
            at_least[k] += at_least[k + 1];
        }
        Ok(SharedTripleCurve {
            points: (1..=n).map(|k| (k, at_least[k])).collect(),
        })
    }

    /// Curve from counts listed for k = 1, 2, ...
    pub fn from_counts(counts: &[usize]) -> Self {
        SharedTripleCurve {
            points: counts.iter().enumerate().map(|(i, c)| (i + 1, *c)).collect(),
        }
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), EnsembleError> {
        let mut w = csv::Writer::from_path(path).map_err(|e| std::io::Error::other(e.to_string()))?;
        w.write_record(["k", "shared_count"]).map_err(std::io::Error::other)?;
        for (k, c) in &self.points {
            w.write_record([k.to_string(), c.to_string()]).map_err(std::io::Error::other)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Points, chord end points and chosen k, for external plotting.
    pub fn plot_json(&self, elbow: Option<usize>) -> serde_json::Value {
        json!({
            "x_label": "k (minimum runs containing a triple)",
            "y_label": "shared triples",
            "points": self.points.iter().map(|(k, c)| json!({"k": k, "shared_count": c})).collect::<Vec<_>>(),
            "chord": [self.points.first(), self.points.last()],
            "elbow_k": elbow,
        })
    }

    pub fn write_plot_json(&self, path: &Path, elbow: Option<usize>) -> Result<(), EnsembleError> {
        let mut f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(&mut f, &self.plot_json(elbow)).map_err(std::io::Error::other)?;
        writeln!(f)?;
        Ok(())
    }
}

/// k of the point farthest (perpendicular distance) from the chord joining
/// the first and last points; ties go to the smaller k.
pub fn elbow_k(curve: &SharedTripleCurve) -> Result<usize, EnsembleError> {
    let pts = &curve.points;
    if pts.len() < 3 {
        return Err(EnsembleError::TooFewPoints(pts.len()));
    }
    let (x1, y1) = (pts[0].0 as f64, pts[0].1 as f64);
    let (x2, y2) = (pts[pts.len() - 1].0 as f64, pts[pts.len() - 1].1 as f64);
    let (dx, dy) = (x2 - x1, y2 - y1);
    let len = dx.hypot(dy);
    let mut best = (pts[0].0, f64::NEG_INFINITY);
    for &(k, c) in pts {
        let (x, y) = (k as f64, c as f64);
        let d = (dy * x - dx * y + x2 * y1 - y2 * x1).abs() / len;
        if d > best.1 {
            best = (k, d);
        }
    }
    Ok(best.0)
}

/// KB of the triples found in at least `k` runs. Each triple takes the
/// majority object kind among the runs that have it (ties go to named
/// entity) and the smallest layer.
pub fn build_ensemble_kb(records: &[RunRecord], k: usize, run_id: &str) -> Result<KnowledgeBase, EnsembleError> {
    check_k(records, k)?;
    struct Votes {
        runs: usize,
        entity: usize,
        layer: u32,
    }
    let mut votes: BTreeMap<TripleKey, Votes> = BTreeMap::new();
    for r in records {
        let mut seen = BTreeSet::new();
        for t in r.kb.triples() {
            let key = t.key();
            if !seen.insert(key.clone()) {
                continue;
            }
            let v = votes.entry(key).or_insert(Votes {
                runs: 0,
                entity: 0,
                layer: u32::MAX,
            });
            v.runs += 1;
            v.entity += usize::from(t.object_kind == TermKind::NamedEntity);
            v.layer = v.layer.min(t.layer);
        }
    }
    let mut kb = KnowledgeBase::new();
    for (key, v) in votes.into_iter().filter(|(_, v)| v.runs >= k) {
        let kind = if 2 * v.entity >= v.runs {
            TermKind::NamedEntity
        } else {
            TermKind::Literal
        };
        kb.visited_subjects.insert(key.subject.clone());
        kb.insert(Triple::new(&key.subject, &key.predicate, &key.object, kind, v.layer, run_id))?;
    }
    Ok(kb)
}
