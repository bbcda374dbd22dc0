use std::collections::BTreeMap;
use std::io::Write;

use crate::model::{KnowledgeBase, TermKind};

fn quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', "''"))
}

/// SQL script with two tables. `entities` holds every node label once:
/// named entities with kind `ne`, remaining literal values with kind `lit`.
pub fn to_sql_dump<W: Write>(kb: &KnowledgeBase, mut out: W) -> std::io::Result<()> {
    writeln!(out, "BEGIN TRANSACTION;")?;
    writeln!(out, "CREATE TABLE entities (label TEXT PRIMARY KEY, kind TEXT NOT NULL);")?;
    writeln!(
        out,
        "CREATE TABLE triples (subject TEXT NOT NULL, predicate TEXT NOT NULL, object TEXT NOT NULL, \
         object_kind TEXT NOT NULL, layer INTEGER NOT NULL);"
    )?;

    let mut nodes: BTreeMap<&str, TermKind> = BTreeMap::new();
    for t in kb.triples() {
        nodes.insert(&t.subject, TermKind::NamedEntity);
    }
    for t in kb.triples() {
        let entry = nodes.entry(&t.object).or_insert(t.object_kind);
        if t.object_kind == TermKind::NamedEntity {
            *entry = TermKind::NamedEntity;
        }
    }
    for (label, kind) in &nodes {
        writeln!(out, "INSERT INTO entities (label, kind) VALUES ({}, {});", quote(label), quote(kind.code()))?;
    }
    for t in kb.sorted_triples() {
        writeln!(
            out,
            "INSERT INTO triples (subject, predicate, object, object_kind, layer) VALUES ({}, {}, {}, {}, {});",
            quote(&t.subject),
            quote(&t.predicate),
            quote(&t.object),
            quote(t.object_kind.code()),
            t.layer
        )?;
    }
    writeln!(out, "COMMIT;")
}
