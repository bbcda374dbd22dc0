use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::Utc;
use kbforge_core::crawler::{crawl_with, run_suite, SuiteManifest, SuiteRunStatus};
use kbforge_core::embeddings::{Embedder, OfflineHashEmbedder, RemoteEmbedder};
use kbforge_core::ensemble::{build_ensemble_kb, elbow_k, SharedTripleCurve, ELBOW_CSV, ELBOW_PLOT_JSON};
use kbforge_core::export::{export_all, ExportFormat, IriPolicy};
use kbforge_core::gateway::GatewayError;
use kbforge_core::metrics::{Comparator, StabilityReport, REPORT_CSV, REPORT_JSON};
use kbforge_core::popularity::{bucketize, BucketAssignment, WikidataClient, WikidataConfig, POPULARITY_CACHE_FILE};
use kbforge_core::store::{read_run, read_triples_ndjson, write_run, write_triples_ndjson, TRIPLES_FILE};
use kbforge_core::{RunRecord, StructuralCategory};
use serde_json::json;

use crate::config::{CliConfig, SuiteFile, DEFAULT_ENDPOINT};
use crate::RunFlags;

fn flags_config(ws: &Path, flags: &RunFlags) -> Result<CliConfig> {
    let mut c = match &flags.config {
        Some(p) => CliConfig::load(&ws.join(p))?,
        None => CliConfig::default(),
    };
    let over = CliConfig {
        topic: flags.topic.clone(),
        seed_entity: flags.seed.clone(),
        prompt_language: flags.language.clone(),
        temperature: flags.temperature,
        model_id: flags.model.clone(),
        max_layers: flags.max_layers,
        max_wall_seconds: flags.max_wall_seconds,
        max_triples: flags.max_triples,
        parallelism: flags.parallelism,
        backend: crate::config::BackendSection {
            world: flags.world.clone(),
            endpoint_url: flags.endpoint.clone(),
            ..Default::default()
        },
        detectors: None,
    };
    c.merge(&over);
    Ok(c)
}

const YIELD_HEADER: &str = "run_id\ttermination\tdeepest_layer\tnamed_entities\tliterals\tpredicates\tclasses\ttriples";

fn yield_line(rec: &RunRecord) -> String {
    let counts = rec.kb.categories().counts();
    let mut cols = vec![rec.run_id.clone(), rec.termination.to_string(), rec.deepest_layer.to_string()];
    cols.extend(StructuralCategory::ALL.iter().map(|c| counts[c].to_string()));
    cols.join("\t")
}

pub fn crawl(ws: &Path, flags: &RunFlags, out: Option<PathBuf>, run_id: Option<String>) -> Result<()> {
    let cfg = flags_config(ws, flags)?;
    let run = cfg.run_config()?;
    run.validate()?;
    let gateway = cfg.gateway(&run, ws)?;
    let run_id = run_id.unwrap_or_else(|| format!("run-{}", Utc::now().format("%Y%m%dT%H%M%SZ")));
    let dir = ws.join(out.unwrap_or_else(|| PathBuf::from("runs").join(&run_id)));
    if dir.exists() {
        bail!("{} already exists; completed runs are never overwritten", dir.display());
    }
    let started = Utc::now();
    let rec = crawl_with(&run_id, &run, gateway.as_ref(), &cfg.detectors())?;
    write_run(&dir, &rec, started, Utc::now())?;
    println!("{YIELD_HEADER}");
    println!("{}", yield_line(&rec));
    if !rec.degeneracy_flags.is_empty() {
        println!("degenerate entities: {}", rec.degeneracy_flags.len());
    }
    println!("run written to {}", dir.display());
    Ok(())
}

pub fn suite(ws: &Path, suite_path: &Path, out: &Path, flags: &RunFlags) -> Result<()> {
    let file = SuiteFile::load(&ws.join(suite_path))?;
    let layered = file.expand(&flags_config(ws, flags)?)?;
    let configs = layered.iter().map(|c| c.run_config()).collect::<Result<Vec<_>>>()?;
    let detectors = layered.first().map(|c| c.detectors()).unwrap_or_default();
    let out_dir = ws.join(out);

    let (manifest, records) = run_suite(&configs, file.dimension()?, &out_dir, &detectors, |rc| {
        let i = configs.iter().position(|c| std::ptr::eq(c, rc)).unwrap_or(0);
        layered[i]
            .gateway(rc, ws)
            .map_err(|e| GatewayError::InvalidDescriptor(format!("{e:#}")))
    })?;

    println!("suite dimension: {:?}", manifest.dimension);
    println!("{YIELD_HEADER}");
    for r in &records {
        println!("{}", yield_line(r));
    }
    let failed: Vec<_> = manifest.runs.iter().filter(|r| r.status == SuiteRunStatus::Failed).collect();
    for f in &failed {
        eprintln!("warning: {} failed: {}", f.run_id, f.error.as_deref().unwrap_or("unknown error"));
    }
    println!("{} of {} runs succeeded; suite written to {}", records.len(), manifest.runs.len(), out_dir.display());
    Ok(())
}

fn load_suite_runs(suite_dir: &Path) -> Result<Vec<RunRecord>> {
    let manifest = SuiteManifest::load(suite_dir).with_context(|| format!("reading suite in {}", suite_dir.display()))?;
    manifest
        .successful_run_dirs(suite_dir)
        .iter()
        .map(|d| read_run(d).with_context(|| format!("reading run {}", d.display())))
        .collect()
}

fn parse_categories(spec: &str) -> Result<Vec<StructuralCategory>> {
    if spec.trim() == "all" {
        return Ok(StructuralCategory::ALL.to_vec());
    }
    spec.split(',')
        .map(|s| StructuralCategory::parse(s.trim()).with_context(|| format!("unknown category '{s}'")))
        .collect()
}

fn wikidata_client(ws: &Path, offline: bool, api: Option<String>) -> Result<WikidataClient> {
    let client = if offline {
        WikidataClient::offline()
    } else {
        let mut cfg = WikidataConfig::default();
        if let Some(url) = api {
            cfg.api_url = url;
        }
        WikidataClient::new(cfg)?
    };
    Ok(client.with_cache_file(&ws.join(POPULARITY_CACHE_FILE))?)
}

fn assign_buckets(client: &WikidataClient, rec: &RunRecord) -> Result<BucketAssignment> {
    let ne = rec.kb.categories().get(StructuralCategory::NamedEntities).clone();
    let records = client.resolve_all(&ne).with_context(|| format!("resolving entities of {}", rec.run_id))?;
    Ok(bucketize(&records))
}

pub struct CompareArgs {
    pub suite: PathBuf,
    pub categories: String,
    pub tau: f64,
    pub provider: String,
    pub embedding_endpoint: Option<String>,
    pub buckets: bool,
    pub offline: bool,
    pub wikidata_api: Option<String>,
    pub out: Option<PathBuf>,
}

pub fn compare(ws: &Path, args: &CompareArgs) -> Result<()> {
    let suite_dir = ws.join(&args.suite);
    let records = load_suite_runs(&suite_dir)?;
    if records.len() < 2 {
        bail!("need at least 2 successful runs to compare, found {}", records.len());
    }
    let categories = parse_categories(&args.categories)?;

    let embedder = match args.provider.as_str() {
        "offline" => Embedder::new(OfflineHashEmbedder::default()),
        p => match p.strip_prefix("remote:") {
            Some(model) if !model.is_empty() => {
                let endpoint = args.embedding_endpoint.as_deref().unwrap_or(DEFAULT_ENDPOINT);
                Embedder::new(RemoteEmbedder::from_env(endpoint, model)?)
                    .with_cache_file(&ws.join("cache").join("embeddings.ndjson"))?
            }
            _ => bail!("unknown provider '{p}' (use 'offline' or 'remote:<model>')"),
        },
    };

    let buckets = if args.buckets {
        let client = wikidata_client(ws, args.offline, args.wikidata_api.clone())?;
        Some(records.iter().map(|r| assign_buckets(&client, r)).collect::<Result<Vec<_>>>()?)
    } else {
        None
    };

    let suite_id = suite_dir.file_name().map(|n| n.to_string_lossy().into_owned());
    let report = Comparator::new(&embedder)
        .with_tau(args.tau)?
        .report(suite_id, &records, &categories, buckets.as_deref())?;

    let out = ws.join(args.out.clone().unwrap_or_else(|| args.suite.join("report")));
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    report.write_json(&out.join(REPORT_JSON))?;
    report.write_csv(&out.join(REPORT_CSV))?;
    print_report(&report);
    println!("report written to {}", out.display());
    Ok(())
}

fn print_report(report: &StabilityReport) {
    let f = |v: Option<f64>, digits: usize| v.map_or("-".to_string(), |x| format!("{x:.digits$}"));
    println!("category\tbucket\tyield_mean\tyield_std\tY_CV\tLS\tSS1\tSS2%");
    for r in &report.rows {
        println!(
            "{}\t{}\t{:.1}\t{:.2}\t{}\t{}\t{}\t{}{}",
            r.category,
            r.bucket.map_or("all".to_string(), |b| b.to_string()),
            r.yield_mean,
            r.yield_std,
            f(r.yield_cv, 3),
            f(r.ls, 3),
            f(r.ss1, 3),
            f(r.ss2, 1),
            r.flag.as_ref().map_or(String::new(), |fl| format!("\t({fl})"))
        );
    }
}

pub fn ensemble(ws: &Path, suite: &Path, k: Option<usize>, auto: bool, out: Option<PathBuf>) -> Result<()> {
    let suite_dir = ws.join(suite);
    let records = load_suite_runs(&suite_dir)?;
    if records.len() < 2 {
        bail!("need at least 2 successful runs to ensemble, found {}", records.len());
    }
    let curve = SharedTripleCurve::from_records(&records)?;
    let k = if auto { elbow_k(&curve)? } else { k.context("either --k or --auto is required")? };
    let id = format!("ensemble-k{k}");
    let kb = build_ensemble_kb(&records, k, &id)?;

    let dir = ws.join(out.unwrap_or_else(|| suite.join(&id)));
    if dir.join(TRIPLES_FILE).exists() {
        bail!("{} already holds an ensemble", dir.display());
    }
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let file = std::fs::File::create(dir.join(TRIPLES_FILE))?;
    let mut w = std::io::BufWriter::new(file);
    write_triples_ndjson(&kb, &mut w)?;
    std::io::Write::flush(&mut w)?;
    curve.write_csv(&dir.join(ELBOW_CSV))?;
    curve.write_plot_json(&dir.join(ELBOW_PLOT_JSON), auto.then_some(k))?;
    let meta = json!({
        "k": k,
        "auto": auto,
        "source_runs": records.iter().map(|r| &r.run_id).collect::<Vec<_>>(),
        "triple_count": kb.len(),
        "curve": curve.points,
    });
    std::fs::write(dir.join("ensemble.json"), format!("{}\n", serde_json::to_string_pretty(&meta)?))?;

    println!("k\tshared_count");
    for (pk, c) in &curve.points {
        println!("{pk}\t{c}{}", if *pk == k { "\t<- selected" } else { "" });
    }
    println!("ensemble at k={k}: {} triples written to {}", kb.len(), dir.display());
    Ok(())
}

pub fn export(ws: &Path, kb: &Path, format: &str, out: &Path, base: &str) -> Result<()> {
    let src = ws.join(kb);
    let (path, id) = if src.is_dir() {
        (src.join(TRIPLES_FILE), src.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default())
    } else {
        (src.clone(), "kb".to_string())
    };
    let formats = ExportFormat::parse_list(format)?;
    if formats.is_empty() {
        bail!("no export format selected");
    }
    let policy = IriPolicy::new(base)?;
    let kb = read_triples_ndjson(&path, &id).with_context(|| format!("loading {}", path.display()))?;
    let written = export_all(&kb, &formats, &ws.join(out), &policy)?;
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}

pub fn popularity(ws: &Path, run: &Path, offline: bool, api: Option<String>, out: Option<PathBuf>) -> Result<()> {
    let rec = read_run(&ws.join(run))?;
    let client = wikidata_client(ws, offline, api)?;
    let ne = rec.kb.categories().get(StructuralCategory::NamedEntities).clone();
    let records = client.resolve_all(&ne)?;
    let assignment = bucketize(&records);
    let sizes: BTreeMap<String, usize> = assignment.sizes().into_iter().map(|(b, n)| (b.to_string(), n)).collect();

    let path = ws.join(out.unwrap_or_else(|| PathBuf::from("popularity").join(format!("{}.json", rec.run_id))));
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let doc = json!({"run_id": rec.run_id, "records": records, "buckets": assignment.buckets, "sizes": sizes});
    std::fs::write(&path, format!("{}\n", serde_json::to_string_pretty(&doc)?))?;
    for (b, n) in &sizes {
        println!("{b}\t{n}");
    }
    println!("{} network calls; buckets written to {}", client.network_calls(), path.display());
    Ok(())
}
