//! JSON configuration files and their command-line overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use kbforge_core::crawler::{DetectorConfig, Dimension};
use kbforge_core::gateway::{BackendDescriptor, BackendKind, Gateway, MockWorld, NoiseInjector, RemoteChat};
use kbforge_core::retry::Backoff;
use kbforge_core::RunConfig;
use serde::Deserialize;

pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1";

/// Backend section of a config file. Absent fields keep descriptor defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSection {
    pub kind: Option<BackendKind>,
    pub endpoint_url: Option<String>,
    /// Mock world file, relative to the workspace.
    pub world: Option<PathBuf>,
    pub request_timeout_seconds: Option<u64>,
    pub max_retries: Option<u32>,
    pub ner_batch_size: Option<usize>,
    pub backoff: Option<Backoff>,
    pub prompt_dir: Option<PathBuf>,
    pub audit_log: Option<PathBuf>,
    /// Overrides the mock world's noise salt (ignored without a noise injector).
    pub noise_salt: Option<u64>,
}

/// One crawl's settings as written in a config file; every field optional so
/// files can be layered (suite base, then per-run entry, then flags).
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    pub topic: Option<String>,
    pub seed_entity: Option<String>,
    pub prompt_language: Option<String>,
    pub temperature: Option<f64>,
    pub model_id: Option<String>,
    pub max_layers: Option<u32>,
    pub max_wall_seconds: Option<u64>,
    pub max_triples: Option<u64>,
    pub parallelism: Option<usize>,
    #[serde(default)]
    pub backend: BackendSection,
    pub detectors: Option<DetectorConfig>,
}

macro_rules! take {
    ($dst:expr, $src:expr, $($f:ident),+) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )+
    };
}

impl CliConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Fields set in `other` win.
    pub fn merge(&mut self, other: &CliConfig) {
        take!(self, other, topic, seed_entity, prompt_language, temperature, model_id);
        take!(self, other, max_layers, max_wall_seconds, max_triples, parallelism, detectors);
        let (b, o) = (&mut self.backend, &other.backend);
        take!(b, o, kind, endpoint_url, world, request_timeout_seconds, max_retries, ner_batch_size);
        take!(b, o, backoff, prompt_dir, audit_log, noise_salt);
    }

    pub fn run_config(&self) -> Result<RunConfig> {
        let (Some(topic), Some(seed)) = (&self.topic, &self.seed_entity) else {
            bail!("both a topic and a seed entity are required (--topic, --seed or the config file)");
        };
        let mut c = RunConfig::new(topic, seed);
        if let Some(v) = &self.prompt_language {
            c.prompt_language = v.clone();
        }
        if let Some(v) = self.temperature {
            c.temperature = v;
        }
        if let Some(v) = &self.model_id {
            c.model_id = v.clone();
        }
        if let Some(v) = self.max_layers {
            c.caps.max_layers = v;
        }
        if let Some(v) = self.max_wall_seconds {
            c.caps.max_wall_seconds = v;
        }
        if let Some(v) = self.max_triples {
            c.caps.max_triples = v;
        }
        if let Some(v) = self.parallelism {
            c.parallelism = v;
        }
        Ok(c)
    }

    pub fn detectors(&self) -> DetectorConfig {
        self.detectors.unwrap_or_default()
    }

    fn kind(&self) -> BackendKind {
        self.backend.kind.unwrap_or(if self.backend.world.is_some() {
            BackendKind::MockWorld
        } else {
            BackendKind::RemoteChat
        })
    }

    pub fn descriptor(&self, run: &RunConfig, workspace: &Path) -> BackendDescriptor {
        let b = &self.backend;
        let mut d = match self.kind() {
            BackendKind::MockWorld => BackendDescriptor::mock(),
            BackendKind::RemoteChat => BackendDescriptor::remote(
                b.endpoint_url.as_deref().unwrap_or(DEFAULT_ENDPOINT),
                &run.model_id,
                run.temperature,
            ),
        };
        if let Some(v) = b.request_timeout_seconds {
            d.request_timeout_seconds = v;
        }
        if let Some(v) = b.max_retries {
            d.max_retries = v;
        }
        if let Some(v) = b.ner_batch_size {
            d.ner_batch_size = v;
        }
        if let Some(v) = b.backoff {
            d.backoff = v;
        }
        d.prompt_dir = b.prompt_dir.as_ref().map(|p| workspace.join(p));
        d.audit_log = b.audit_log.as_ref().map(|p| workspace.join(p));
        d
    }

    /// Builds the backend for one run. Fails before any network traffic when
    /// the remote key is missing.
    pub fn gateway(&self, run: &RunConfig, workspace: &Path) -> Result<Box<dyn Gateway>> {
        let d = self.descriptor(run, workspace);
        d.validate()?;
        match d.kind {
            BackendKind::MockWorld => {
                let Some(world) = &self.backend.world else {
                    bail!("mock backend needs a world file (--world or backend.world)");
                };
                let path = workspace.join(world);
                let mut w = MockWorld::load(&path)
                    .with_context(|| format!("loading world {}", path.display()))?
                    .with_ner_batch_size(d.ner_batch_size);
                if let Some(salt) = self.backend.noise_salt {
                    let noise = w.world().injectors.noise.clone().map(|n| NoiseInjector { salt, ..n });
                    w = w.with_noise(noise);
                }
                Ok(Box::new(w))
            }
            BackendKind::RemoteChat => Ok(Box::new(RemoteChat::from_env(d)?)),
        }
    }
}

/// Suite file: a base config, per-run overrides and the varied dimension.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteFile {
    pub dimension: Option<String>,
    #[serde(default)]
    pub base: CliConfig,
    #[serde(default)]
    pub runs: Vec<CliConfig>,
    /// Replicates the base config this many times when `runs` is empty.
    pub repeat: Option<usize>,
}

impl SuiteFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading suite {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing suite {}", path.display()))
    }

    pub fn dimension(&self) -> Result<Option<Dimension>> {
        match &self.dimension {
            None => Ok(None),
            Some(d) => Dimension::parse(d)
                .map(Some)
                .with_context(|| format!("unknown dimension '{d}' (base, seed, language, temperature, model)")),
        }
    }

    /// Fully layered per-run configs: base, then the run entry, then `flags`.
    pub fn expand(&self, flags: &CliConfig) -> Result<Vec<CliConfig>> {
        let entries: Vec<CliConfig> = if self.runs.is_empty() {
            vec![CliConfig::default(); self.repeat.unwrap_or(1)]
        } else {
            if self.repeat.is_some() {
                bail!("a suite takes either 'runs' or 'repeat', not both");
            }
            self.runs.clone()
        };
        Ok(entries
            .iter()
            .map(|e| {
                let mut c = self.base.clone();
                c.merge(e);
                c.merge(flags);
                c
            })
            .collect())
    }
}
