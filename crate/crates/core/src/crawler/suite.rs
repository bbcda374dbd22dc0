use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{crawl_with, DetectorConfig};
use crate::gateway::{Gateway, GatewayError};
use crate::model::{RunConfig, RunRecord, Termination};
use crate::store::{self, io_err, StoreError};

pub const SUITE_FILE: &str = "suite.json";
pub const RUNS_DIR: &str = "runs";

/// Which experiment parameter a suite varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Base,
    Seed,
    Language,
    Temperature,
    Model,
    /// More than one parameter differs between runs.
    Mixed,
}

impl Dimension {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "base" => Dimension::Base,
            "seed" => Dimension::Seed,
            "language" => Dimension::Language,
            "temperature" => Dimension::Temperature,
            "model" => Dimension::Model,
            "mixed" => Dimension::Mixed,
            _ => return None,
        })
    }

    fn value_of(self, c: &RunConfig) -> String {
        match self {
            Dimension::Seed => c.seed_entity.clone(),
            Dimension::Language => c.prompt_language.clone(),
            Dimension::Temperature => c.temperature.to_string(),
            Dimension::Model => c.model_id.clone(),
            Dimension::Base | Dimension::Mixed => String::new(),
        }
    }
}

pub fn infer_dimension(configs: &[RunConfig]) -> Dimension {
    let Some(first) = configs.first() else {
        return Dimension::Base;
    };
    let mut varying = Vec::new();
    let differs = |f: &dyn Fn(&RunConfig) -> String| configs.iter().any(|c| f(c) != f(first));
    if differs(&|c| c.seed_entity.clone()) {
        varying.push(Dimension::Seed);
    }
    if differs(&|c| c.prompt_language.clone()) {
        varying.push(Dimension::Language);
    }
    if differs(&|c| c.temperature.to_string()) {
        varying.push(Dimension::Temperature);
    }
    if differs(&|c| c.model_id.clone()) {
        varying.push(Dimension::Model);
    }
    let other = configs.iter().any(|c| c.topic != first.topic || c.caps != first.caps);
    match (varying.as_slice(), other) {
        ([], false) => Dimension::Base,
        ([d], false) => *d,
        _ => Dimension::Mixed,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteRunStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteRunEntry {
    pub run_id: String,
    pub status: SuiteRunStatus,
    /// Value of the varied parameter for this run.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub value: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub termination: Option<Termination>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteManifest {
    pub dimension: Dimension,
    pub run_ids: Vec<String>,
    pub runs: Vec<SuiteRunEntry>,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
}

impl SuiteManifest {
    pub fn successful_run_dirs(&self, suite_dir: &Path) -> Vec<PathBuf> {
        self.runs
            .iter()
            .filter(|r| r.status == SuiteRunStatus::Ok)
            .map(|r| suite_dir.join(RUNS_DIR).join(&r.run_id))
            .collect()
    }

    pub fn load(suite_dir: &Path) -> Result<Self, StoreError> {
        store::read_json(&suite_dir.join(SUITE_FILE))
    }
}

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error("suite has no run configurations")]
    Empty,
    #[error(transparent)]
    Store(#[from] StoreError),
}

fn run_id(i: usize, n: usize) -> String {
    let width = n.to_string().len().max(2);
    format!("run-{:0width$}", i + 1)
}

/// Executes each configuration as an independent crawl under `out_dir/runs/`.
///
/// A run that fails (bad config, unreachable backend) is recorded in the
/// manifest and does not stop the others.
pub fn run_suite<F>(
    configs: &[RunConfig],
    dimension: Option<Dimension>,
    out_dir: &Path,
    detectors: &DetectorConfig,
    gateway_for: F,
) -> Result<(SuiteManifest, Vec<RunRecord>), SuiteError>
where
    F: Fn(&RunConfig) -> Result<Box<dyn Gateway>, GatewayError>,
{
    if configs.is_empty() {
        return Err(SuiteError::Empty);
    }
    let manifest_path = out_dir.join(SUITE_FILE);
    if manifest_path.exists() {
        return Err(StoreError::AlreadyExists(out_dir.to_path_buf()).into());
    }
    let runs_dir = out_dir.join(RUNS_DIR);
    fs::create_dir_all(&runs_dir).map_err(io_err(&runs_dir))?;

    let dimension = dimension.unwrap_or_else(|| infer_dimension(configs));
    let started_at = Utc::now();
    let mut entries = Vec::with_capacity(configs.len());
    let mut records = Vec::new();

    for (i, config) in configs.iter().enumerate() {
        let id = run_id(i, configs.len());
        let value = dimension.value_of(config);
        let outcome = (|| -> Result<RunRecord, String> {
            let gateway = gateway_for(config).map_err(|e| e.to_string())?;
            let run_start = Utc::now();
            let rec = crawl_with(&id, config, gateway.as_ref(), detectors).map_err(|e| e.to_string())?;
            store::write_run(&runs_dir.join(&id), &rec, run_start, Utc::now()).map_err(|e| e.to_string())?;
            Ok(rec)
        })();
        match outcome {
            Ok(rec) => {
                entries.push(SuiteRunEntry {
                    run_id: id,
                    status: SuiteRunStatus::Ok,
                    value,
                    termination: Some(rec.termination),
                    error: None,
                });
                records.push(rec);
            }
            Err(err) => {
                log::warn!("run {id} failed: {err}");
                entries.push(SuiteRunEntry {
                    run_id: id,
                    status: SuiteRunStatus::Failed,
                    value,
                    termination: None,
                    error: Some(err),
                });
            }
        }
    }

    let manifest = SuiteManifest {
        dimension,
        run_ids: entries.iter().map(|e| e.run_id.clone()).collect(),
        runs: entries,
        started_at,
        finished_at: Utc::now(),
    };
    store::write_json(&manifest_path, &manifest)?;
    Ok((manifest, records))
}
