use std::io::Write;

use percent_encoding::{utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use serde::{Deserialize, Serialize};

use super::ExportError;
use crate::model::{KnowledgeBase, TermKind, INSTANCE_OF};

pub const DEFAULT_BASE_NAMESPACE: &str = "http://example.org/kbforge/";

/// Everything except RFC 3986 unreserved characters is escaped, `%` included,
/// so distinct labels always give distinct IRIs.
const LABEL_ESCAPES: &AsciiSet = &NON_ALPHANUMERIC.remove(b'-').remove(b'.').remove(b'_').remove(b'~');

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IriPolicy {
    base_namespace: String,
}

impl Default for IriPolicy {
    fn default() -> Self {
        IriPolicy {
            base_namespace: DEFAULT_BASE_NAMESPACE.to_string(),
        }
    }
}

impl IriPolicy {
    pub fn new(base_namespace: &str) -> Result<Self, ExportError> {
        let bad = || ExportError::BadNamespace(base_namespace.to_string());
        let parsed = url::Url::parse(base_namespace).map_err(|_| bad())?;
        if parsed.cannot_be_a_base() || !(base_namespace.ends_with('/') || base_namespace.ends_with('#')) {
            return Err(bad());
        }
        if base_namespace.chars().any(|c| c.is_whitespace() || "<>\"{}|^`\\".contains(c)) {
            return Err(bad());
        }
        Ok(IriPolicy {
            base_namespace: base_namespace.to_string(),
        })
    }

    pub fn base_namespace(&self) -> &str {
        &self.base_namespace
    }

    pub fn entity_iri(&self, label: &str) -> String {
        format!("{}{}", self.base_namespace, utf8_percent_encode(label, LABEL_ESCAPES))
    }

    pub fn predicate_iri(&self, label: &str) -> String {
        format!("{}prop/{}", self.base_namespace, utf8_percent_encode(label, LABEL_ESCAPES))
    }
}

fn literal(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04X}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// One statement per triple. `instanceOf` becomes `a` and its object is
/// always an IRI (a class); other literal objects stay plain strings.
pub fn to_turtle<W: Write>(kb: &KnowledgeBase, policy: &IriPolicy, mut out: W) -> std::io::Result<()> {
    writeln!(out, "@prefix rdf: <http://www.w3.org/1999/02/22-rdf-syntax-ns#> .")?;
    writeln!(out)?;
    for t in kb.sorted_triples() {
        let subject = format!("<{}>", policy.entity_iri(&t.subject));
        let (predicate, object) = if t.predicate == INSTANCE_OF {
            ("a".to_string(), format!("<{}>", policy.entity_iri(&t.object)))
        } else {
            let o = match t.object_kind {
                TermKind::NamedEntity => format!("<{}>", policy.entity_iri(&t.object)),
                TermKind::Literal => literal(&t.object),
            };
            (format!("<{}>", policy.predicate_iri(&t.predicate)), o)
        };
        writeln!(out, "{subject} {predicate} {object} .")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Triple;

    #[test]
    fn single_type_triple() {
        let kb = KnowledgeBase::from_triples([Triple::new("Hammurabi", "instanceOf", "King", TermKind::NamedEntity, 0, "r")]).unwrap();
        let mut buf = Vec::new();
        to_turtle(&kb, &IriPolicy::new("http://ns.test/").unwrap(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().last().unwrap(), "<http://ns.test/Hammurabi> a <http://ns.test/King> .");
    }

    #[test]
    fn encoding() {
        let p = IriPolicy::default();
        assert_eq!(p.entity_iri("Temple of Marduk"), "http://example.org/kbforge/Temple%20of%20Marduk");
        assert_ne!(p.entity_iri("a b"), p.entity_iri("a%20b"));
        assert_ne!(p.entity_iri("prop/x"), p.predicate_iri("x"));
        assert_eq!(literal("say \"hi\"\\"), "\"say \\\"hi\\\"\\\\\"");
    }

    #[test]
    fn namespace_validation() {
        assert!(IriPolicy::new("http://ns.test/kb#").is_ok());
        assert!(IriPolicy::new("ns:").is_err());
        assert!(IriPolicy::new("http://ns.test/kb").is_err());
        assert!(IriPolicy::new("relative/").is_err());
    }
}
