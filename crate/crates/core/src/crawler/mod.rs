//! Recursive BFS knowledge crawl.
//!
//! Each layer elicits every frontier subject, keeps the new deduplicated
//! triples, classifies the unseen object labels, and queues the ones judged
//! named entities. Degenerate labels are kept as objects but never queued.

mod degeneracy;
mod suite;

use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use thiserror::Error;

use crate::gateway::{ElicitationRequest, ElicitationResponse, Gateway, GatewayError, NerRequest};
use crate::model::{normalize_label, KnowledgeBase, LayerStats, ModelError, RunConfig, RunRecord, TermKind, Termination, Triple};

pub use degeneracy::{detect_overlong, detect_q_identifier, detect_repetition_loop, DegeneracyEvent, DegeneracyKind, DetectorConfig};
pub use suite::{infer_dimension, run_suite, Dimension, SuiteError, SuiteManifest, SuiteRunEntry, SuiteRunStatus, SUITE_FILE};

#[derive(Debug, Error)]
pub enum CrawlError {
    #[error(transparent)]
    Config(#[from] ModelError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("cannot start worker pool: {0}")]
    Pool(String),
}

pub fn crawl(run_id: &str, config: &RunConfig, gateway: &dyn Gateway) -> Result<RunRecord, CrawlError> {
    crawl_with(run_id, config, gateway, &DetectorConfig::default())
}

pub fn crawl_with(
    run_id: &str,
    config: &RunConfig,
    gateway: &dyn Gateway,
    detectors: &DetectorConfig,
) -> Result<RunRecord, CrawlError> {
    config.validate()?;
    let started = Instant::now();
    let max_wall = Duration::from_secs(config.caps.max_wall_seconds);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism)
        .build()
        .map_err(|e| CrawlError::Pool(e.to_string()))?;

    let mut kb = KnowledgeBase::new();
    let mut classified: HashMap<String, bool> = HashMap::new();
    let mut queued: HashSet<String> = HashSet::new();
    let mut flagged: HashSet<String> = HashSet::new();
    let mut events = Vec::new();
    let mut per_layer = Vec::new();
    let mut failed = Vec::new();

    let seed = normalize_label(&config.seed_entity);
    queued.insert(seed.clone());
    let mut frontier = vec![seed];
    let mut layer: u32 = 0;
    let mut deepest: u32 = 0;

    let termination = loop {
        if layer >= config.caps.max_layers {
            break Termination::CappedLayers;
        }
        if started.elapsed() > max_wall {
            break Termination::CappedTime;
        }
        deepest = layer;

        let out_of_time = AtomicBool::new(false);
        let responses: Vec<Option<Result<ElicitationResponse, GatewayError>>> = pool.install(|| {
            frontier
                .par_iter()
                .map(|subject| {
                    if started.elapsed() > max_wall {
                        out_of_time.store(true, Ordering::Relaxed);
                        return None;
                    }
                    let req = ElicitationRequest::new(subject, &config.topic, &config.prompt_language);
                    Some(gateway.elicit(&req))
                })
                .collect()
        });

        let mut candidates: Vec<(String, String, String)> = Vec::new();
        let mut off_topic: HashSet<String> = HashSet::new();
        for (subject, resp) in frontier.iter().zip(responses) {
            match resp {
                None => {}
                Some(Ok(r)) => {
                    kb.visited_subjects.insert(subject.clone());
                    off_topic.extend(r.off_topic.iter().map(|l| normalize_label(l)));
                    for t in r.triples {
                        let (s, p, o) = (normalize_label(&t.subject), normalize_label(&t.predicate), normalize_label(&t.object));
                        if s.is_empty() || p.is_empty() || o.is_empty() {
                            log::debug!("dropping incomplete triple from '{subject}'");
                            continue;
                        }
                        candidates.push((s, p, o));
                    }
                }
                Some(Err(e)) if e.is_fatal() => return Err(e.into()),
                Some(Err(e)) => {
                    log::warn!("subject '{subject}' failed: {e}");
                    kb.visited_subjects.insert(subject.clone());
                    failed.push(subject.clone());
                }
            }
        }

        let mut unseen: Vec<String> = Vec::new();
        let mut pending: HashSet<&str> = HashSet::new();
        for (_, _, o) in &candidates {
            if !classified.contains_key(o) && pending.insert(o.as_str()) {
                unseen.push(o.clone());
            }
        }
        if !unseen.is_empty() {
            let batch = gateway.ner_batch_size().max(1);
            let verdicts: Vec<Result<Vec<bool>, GatewayError>> = pool.install(|| {
                unseen
                    .par_chunks(batch)
                    .map(|chunk| {
                        gateway
                            .classify_ner(&NerRequest {
                                phrases: chunk.to_vec(),
                                topic: config.topic.clone(),
                                language: config.prompt_language.clone(),
                            })
                            .map(|r| r.verdicts)
                    })
                    .collect()
            });
            let mut flat = Vec::with_capacity(unseen.len());
            for v in verdicts {
                flat.extend(v?);
            }
            for (label, verdict) in unseen.into_iter().zip(flat) {
                classified.insert(label, verdict);
            }
        }

        let mut new_triples = 0;
        let mut next = Vec::new();
        for (s, p, o) in candidates {
            let is_entity = classified.get(&o).copied().unwrap_or(false);
            let kind = if is_entity { TermKind::NamedEntity } else { TermKind::Literal };
            if !kb.insert(Triple::new(&s, &p, &o, kind, layer, run_id))? {
                continue;
            }
            new_triples += 1;
            if !is_entity || queued.contains(&o) || flagged.contains(&o) {
                continue;
            }
            if let Some(kind) = detectors.classify(&o) {
                log::info!("degenerate entity '{o}' ({kind:?}) at layer {layer}; not expanding");
                events.push(DegeneracyEvent { kind, entity: o.clone(), layer });
                flagged.insert(o);
                continue;
            }
            if off_topic.contains(&o) {
                events.push(DegeneracyEvent {
                    kind: DegeneracyKind::OffTopic,
                    entity: o.clone(),
                    layer,
                });
            }
            queued.insert(o.clone());
            next.push(o);
        }

        per_layer.push(LayerStats {
            layer,
            new_entities: next.len(),
            new_triples,
        });
        log::info!(
            "layer {layer}: {} subjects, {new_triples} new triples, {} queued, {} total triples",
            frontier.len(),
            next.len(),
            kb.len()
        );

        if out_of_time.load(Ordering::Relaxed) {
            break Termination::CappedTime;
        }
        if next.is_empty() {
            break Termination::Organic;
        }
        if kb.len() as u64 >= config.caps.max_triples {
            break Termination::CappedTriples;
        }
        frontier = next;
        layer += 1;
    };
    kb.layer_count = deepest + 1;

    Ok(RunRecord {
        run_id: run_id.to_string(),
        config: config.clone(),
        kb,
        termination,
        wall_seconds: started.elapsed().as_secs_f64(),
        deepest_layer: deepest,
        per_layer_counts: per_layer,
        degeneracy_flags: events,
        failed_subjects: failed,
    })
}
