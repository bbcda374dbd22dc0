use std::io::{Read, Write};

use super::ExportError;
use crate::model::{KnowledgeBase, TermKind, Triple};

pub const CSV_HEADER: [&str; 5] = ["subject", "predicate", "object", "object_kind", "layer"];

fn csv_err(e: csv::Error) -> ExportError {
    ExportError::Csv(e.to_string())
}

/// Header plus one row per triple, sorted by (subject, predicate, object).
pub fn to_csv<W: Write>(kb: &KnowledgeBase, out: W) -> Result<(), ExportError> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(out);
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for t in kb.sorted_triples() {
        let layer = t.layer.to_string();
        w.write_record([t.subject.as_str(), &t.predicate, &t.object, t.object_kind.code(), &layer])
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| ExportError::Csv(e.to_string()))?;
    Ok(())
}

pub fn parse_csv<R: Read>(input: R, run_id: &str) -> Result<KnowledgeBase, ExportError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = r.headers().map_err(csv_err)?.clone();
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(ExportError::Csv(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>())));
    }
    let mut kb = KnowledgeBase::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let bad = |what: &str| ExportError::Csv(format!("row {}: {what}", i + 1));
        let kind = TermKind::from_code(&rec[3]).ok_or_else(|| bad("unknown object_kind"))?;
        let layer: u32 = rec[4].parse().map_err(|_| bad("layer is not an integer"))?;
        kb.insert(Triple::new(&rec[0], &rec[1], &rec[2], kind, layer, run_id))?;
    }
    Ok(kb)
}
