#![allow(dead_code)]

use std::collections::{BTreeSet, VecDeque};
use std::path::PathBuf;

use kbforge_core::gateway::MockWorld;
use kbforge_core::model::{KnowledgeBase, RunRecord, Termination};
use kbforge_core::{RunConfig, TermKind, Triple};
use serde_json::Value;

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn babylon_text() -> String {
    std::fs::read_to_string(fixture_path("babylon.json")).unwrap()
}

pub fn babylon_world() -> MockWorld {
    MockWorld::from_json(&babylon_text()).unwrap()
}

pub fn babylon_config() -> RunConfig {
    let mut c = RunConfig::new("babylon", "Hammurabi");
    c.parallelism = 4;
    c
}

/// Named entities a BFS over the raw world file reaches from `seed`: every
/// subject with at least one fact plus every entity-typed object.
pub fn reachable_named_entities(world_json: &str, seed: &str) -> BTreeSet<String> {
    let world: Value = serde_json::from_str(world_json).unwrap();
    let entities: BTreeSet<&str> = world["entities"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    let mut seen: BTreeSet<String> = BTreeSet::from([seed.to_string()]);
    let mut queue = VecDeque::from([seed.to_string()]);
    let mut named = BTreeSet::new();
    while let Some(s) = queue.pop_front() {
        let facts = world["facts"].get(&s).and_then(Value::as_array).cloned().unwrap_or_default();
        if !facts.is_empty() {
            named.insert(s.clone());
        }
        for f in facts {
            let o = f["object"].as_str().unwrap();
            if entities.contains(o) {
                named.insert(o.to_string());
                if seen.insert(o.to_string()) {
                    queue.push_back(o.to_string());
                }
            }
        }
    }
    named
}

pub fn record(id: &str, kb: KnowledgeBase) -> RunRecord {
    RunRecord {
        run_id: id.to_string(),
        config: RunConfig::new("babylon", "Hammurabi"),
        kb,
        termination: Termination::Organic,
        wall_seconds: 0.0,
        deepest_layer: 0,
        per_layer_counts: vec![],
        degeneracy_flags: vec![],
        failed_subjects: vec![],
    }
}

/// Run whose named entities are exactly `labels`, one self-describing triple each.
pub fn entity_run(id: &str, labels: &[&str]) -> RunRecord {
    let kb = KnowledgeBase::from_triples(labels.iter().map(|l| Triple::new(l, "label", l, TermKind::Literal, 0, id))).unwrap();
    record(id, kb)
}

/// The twelve-triple reference KB used across tests.
pub fn twelve_triples() -> KnowledgeBase {
    use TermKind::{Literal as L, NamedEntity as N};
    let rows: [(&str, &str, &str, TermKind, u32); 12] = [
        ("Hammurabi", "instanceOf", "King", N, 0),
        ("Hammurabi", "ruled", "Babylon", N, 0),
        ("Hammurabi", "reignStart", "1792 BC", L, 0),
        ("Hammurabi", "issued", "Code of Hammurabi", N, 0),
        ("Babylon", "instanceOf", "city", L, 1),
        ("Babylon", "patronDeity", "Marduk", N, 1),
        ("Babylon", "locatedOn", "Euphrates", N, 1),
        ("Code of Hammurabi", "numberOfLaws", "282", L, 1),
        ("Code of Hammurabi", "writtenIn", "Akkadian", N, 1),
        ("Marduk", "instanceOf", "Deity", N, 2),
        ("Marduk", "spouse", "Sarpanit", N, 2),
        ("Euphrates", "length", "2800 km", L, 2),
    ];
    KnowledgeBase::from_triples(rows.iter().map(|(s, p, o, k, l)| Triple::new(s, p, o, *k, *l, "fixture"))).unwrap()
}

/// Local HTTP stub. `reply` maps (url, body) to (status, body); every request
/// is recorded. The server thread lives until the process exits.
pub struct Stub {
    pub url: String,
    pub seen: std::sync::Arc<std::sync::Mutex<Vec<(String, String)>>>,
}

impl Stub {
    pub fn start<F>(reply: F) -> Stub
    where
        F: Fn(&str, &str) -> (u16, String) + Send + 'static,
    {
        let server = tiny_http::Server::http("127.0.0.1:0").unwrap();
        let url = format!("http://{}", server.server_addr().to_ip().unwrap());
        let seen = std::sync::Arc::new(std::sync::Mutex::new(Vec::new()));
        let log = seen.clone();
        std::thread::spawn(move || {
            for mut req in server.incoming_requests() {
                let mut body = String::new();
                let _ = std::io::Read::read_to_string(req.as_reader(), &mut body);
                let path = req.url().to_string();
                let (status, text) = reply(&path, &body);
                log.lock().unwrap().push((path, body));
                let header = tiny_http::Header::from_bytes("Content-Type", "application/json").unwrap();
                let _ = req.respond(tiny_http::Response::from_string(text).with_status_code(status).with_header(header));
            }
        });
        Stub { url, seen }
    }

    pub fn count(&self) -> usize {
        self.seen.lock().unwrap().len()
    }
}

pub fn chat_reply(content: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
}

// Brute-force references, written without the crate's helpers.

pub fn naive_cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for i in 0..a.len() {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    dot / (na.sqrt() * nb.sqrt())
}

fn directed_mean_distance(from: &[Vec<f64>], to: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for x in from {
        let mut best = f64::INFINITY;
        for y in to {
            let d = 1.0 - naive_cosine(x, y);
            if d < best {
                best = d;
            }
        }
        total += best;
    }
    total / from.len() as f64
}

pub fn oracle_hausdorff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    1.0 - 0.5 * (directed_mean_distance(a, b) + directed_mean_distance(b, a))
}

/// Best similarity of each row of `from` into `to`.
pub fn oracle_best(from: &[Vec<f64>], to: &[Vec<f64>]) -> Vec<f64> {
    from.iter()
        .map(|x| to.iter().map(|y| naive_cosine(x, y)).fold(f64::NEG_INFINITY, f64::max))
        .collect()
}

pub fn oracle_match(a: &[Vec<f64>], b: &[Vec<f64>], tau: f64) -> f64 {
    let pct = |best: Vec<f64>| {
        let hits = best.iter().filter(|s| **s >= tau).count();
        hits as f64 * 100.0 / best.len() as f64
    };
    (pct(oracle_best(a, b)) + pct(oracle_best(b, a))) / 2.0
}

pub fn oracle_jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let all: std::collections::HashSet<&String> = a.iter().chain(b.iter()).collect();
    if all.is_empty() {
        return 1.0;
    }
    let both = all.iter().filter(|x| a.contains(**x) && b.contains(**x)).count();
    both as f64 / all.len() as f64
}

pub fn offline_vectors(labels: &BTreeSet<String>) -> Vec<Vec<f64>> {
    let e = kbforge_core::embeddings::OfflineHashEmbedder::default();
    labels.iter().map(|l| e.embed_one(l)).collect()
}

/// True when some best similarity sits so close to `tau` that rounding order
/// could flip the comparison.
pub fn near_threshold(a: &[Vec<f64>], b: &[Vec<f64>], tau: f64) -> bool {
    oracle_best(a, b).into_iter().chain(oracle_best(b, a)).any(|s| (s - tau).abs() < 1e-9)
}

/// `n` crawls of the Babylon world, each perturbed by its own noise salt.
pub fn noisy_runs(n: usize) -> Vec<RunRecord> {
    (0..n)
        .map(|i| {
            let world = babylon_world().with_noise(Some(kbforge_core::gateway::NoiseInjector {
                salt: 1000 + i as u64,
                drop_rate: 0.2,
                extra_entities: 2,
                predicate: "associatedWith".into(),
            }));
            kbforge_core::crawler::crawl(&format!("run-{:02}", i + 1), &babylon_config(), &world).unwrap()
        })
        .collect()
}

/// Average off-diagonal SS2 of NE sets vs the ensembles built from `group`
/// disjoint slices of `runs` at threshold `k`. Returns (raw, ensembled).
pub fn raw_vs_ensemble_ss2(runs: &[RunRecord], group: usize, k: usize) -> (f64, f64) {
    use kbforge_core::embeddings::{Embedder, OfflineHashEmbedder};
    use kbforge_core::ensemble::build_ensemble_kb;
    use kbforge_core::metrics::pairwise_report;
    use kbforge_core::StructuralCategory::NamedEntities;

    let embedder = Embedder::new(OfflineHashEmbedder::default());
    let raw = pairwise_report(runs, NamedEntities, 0.95, &embedder).unwrap().row.ss2.unwrap();
    let ensembles: Vec<RunRecord> = runs
        .chunks(group)
        .enumerate()
        .map(|(g, chunk)| {
            let id = format!("ensemble-{g}");
            record(&id, build_ensemble_kb(chunk, k, &id).unwrap())
        })
        .collect();
    let ens = pairwise_report(&ensembles, NamedEntities, 0.95, &embedder).unwrap().row.ss2.unwrap();
    (raw, ens)
}

/// KB exercising quoting, unicode, percent signs and case-only label clashes.
pub fn awkward_kb() -> KnowledgeBase {
    use TermKind::{Literal as L, NamedEntity as N};
    let rows = [
        ("Nabu's \"temple\"", "locatedIn", "Borsippa, Babylonia", N),
        ("Borsippa, Babylonia", "instanceOf", "city", L),
        ("Marduk", "alias", "Bēl", L),
        ("marduk", "note", "lower-case twin", L),
        ("Ishtar Gate", "restored", "100% <replica>", L),
        ("Ishtar Gate", "instanceOf", "City gate", N),
        ("a/b?c#d", "see", "Marduk", N),
        ("Ur", "population", "65000", L),
    ];
    KnowledgeBase::from_triples(rows.iter().map(|(s, p, o, k)| Triple::new(s, p, o, *k, 0, "awkward"))).unwrap()
}

/// Runs all four exporters into `dir` and checks each artifact with a tool
/// that does not share code with the writer.
pub fn check_exports(kb: &KnowledgeBase, dir: &std::path::Path) -> Result<(), String> {
    use kbforge_core::export::{export_all, parse_csv, ExportFormat, IriPolicy, DEFAULT_BASE_NAMESPACE};

    let policy = IriPolicy::new(DEFAULT_BASE_NAMESPACE).unwrap();
    export_all(kb, &ExportFormat::ALL, dir, &policy).map_err(|e| e.to_string())?;

    // Turtle: independent parser, same number of distinct triples.
    let ttl = std::fs::read(dir.join("kb.ttl")).map_err(|e| e.to_string())?;
    let mut parsed = BTreeSet::new();
    for t in oxttl::TurtleParser::new().for_slice(&ttl) {
        parsed.insert(t.map_err(|e| format!("turtle: {e}"))?.to_string());
    }
    if parsed.len() != kb.len() {
        return Err(format!("turtle has {} triples, kb has {}", parsed.len(), kb.len()));
    }

    // CSV round trip.
    let csv = std::fs::File::open(dir.join("kb.csv")).map_err(|e| e.to_string())?;
    let back = parse_csv(csv, &kb.triples().first().map(|t| t.run_id.clone()).unwrap_or_default()).map_err(|e| e.to_string())?;
    if back.sorted_triples() != kb.sorted_triples() {
        return Err("csv round trip changed the kb".into());
    }

    // SQL: load into SQLite and count rows.
    let sql = std::fs::read_to_string(dir.join("kb.sql")).map_err(|e| e.to_string())?;
    let db = rusqlite::Connection::open_in_memory().unwrap();
    db.execute_batch(&sql).map_err(|e| format!("sql: {e}"))?;
    let count = |q: &str| db.query_row(q, [], |r| r.get::<_, i64>(0)).unwrap() as usize;
    if count("SELECT COUNT(*) FROM triples") != kb.len() {
        return Err("sql triple count differs".into());
    }
    let mut nodes: BTreeSet<&str> = BTreeSet::new();
    for t in kb.triples() {
        nodes.insert(&t.subject);
        nodes.insert(&t.object);
    }
    if count("SELECT COUNT(*) FROM entities") != nodes.len() {
        return Err("sql entity count differs".into());
    }
    let distinct = count("SELECT COUNT(*) FROM (SELECT DISTINCT subject, predicate, object FROM triples)");
    if distinct != kb.len() {
        return Err("sql triples not distinct".into());
    }

    // HTML: every href resolves and every named entity has a page.
    let href = regex::Regex::new(r#"href="([^"]+)""#).unwrap();
    let root = dir.join("html");
    let mut pages = 0;
    let mut stack = vec![root.clone()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).map_err(|e| e.to_string())? {
            let p = entry.map_err(|e| e.to_string())?.path();
            if p.is_dir() {
                stack.push(p);
                continue;
            }
            if p.extension().and_then(|e| e.to_str()) != Some("html") {
                continue;
            }
            if p.parent() != Some(root.as_path()) {
                pages += 1;
            }
            let text = std::fs::read_to_string(&p).map_err(|e| e.to_string())?;
            for cap in href.captures_iter(&text) {
                let target = p.parent().unwrap().join(&cap[1]);
                if !target.is_file() {
                    return Err(format!("{} links to missing {}", p.display(), &cap[1]));
                }
            }
        }
    }
    let ne = kb.categories().get(kbforge_core::StructuralCategory::NamedEntities).len();
    if pages != ne {
        return Err(format!("{pages} entity pages for {ne} named entities"));
    }
    Ok(())
}
