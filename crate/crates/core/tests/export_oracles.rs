mod common;

use kbforge_core::export::{export_all, ExportFormat, IriPolicy, DEFAULT_BASE_NAMESPACE};
use kbforge_core::KnowledgeBase;

#[test]
fn twelve_triple_kb_exports_validate() {
    let tmp = tempfile::tempdir().unwrap();
    common::check_exports(&common::twelve_triples(), tmp.path()).unwrap();
}

#[test]
fn crawled_kb_exports_validate() {
    let rec = kbforge_core::crawler::crawl("r", &common::babylon_config(), &common::babylon_world()).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    common::check_exports(&rec.kb, tmp.path()).unwrap();
}

#[test]
fn awkward_labels_export_validate() {
    let tmp = tempfile::tempdir().unwrap();
    common::check_exports(&common::awkward_kb(), tmp.path()).unwrap();
}

#[test]
fn empty_kb_exports_validate() {
    let tmp = tempfile::tempdir().unwrap();
    common::check_exports(&KnowledgeBase::new(), tmp.path()).unwrap();
}

#[test]
fn exports_are_deterministic() {
    let kb = common::awkward_kb();
    let policy = IriPolicy::new(DEFAULT_BASE_NAMESPACE).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    export_all(&kb, &ExportFormat::ALL, a.path(), &policy).unwrap();
    let reversed = KnowledgeBase::from_triples(kb.triples().iter().rev().cloned()).unwrap();
    export_all(&reversed, &ExportFormat::ALL, b.path(), &policy).unwrap();
    for name in ["kb.csv", "kb.sql", "kb.ttl", "html/index.html"] {
        assert_eq!(std::fs::read(a.path().join(name)).unwrap(), std::fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn case_twins_get_distinct_pages() {
    let tmp = tempfile::tempdir().unwrap();
    let kb = common::awkward_kb();
    let site = kbforge_core::export::to_html(&kb, &tmp.path().join("html")).unwrap();
    let upper = &site.pages["Marduk"];
    let lower = &site.pages["marduk"];
    assert_ne!(upper.to_lowercase(), lower.to_lowercase());
}
