use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{io_at, ExportError};
use crate::model::{KnowledgeBase, StructuralCategory, TermKind, Triple};

/// Entity pages live in this subdirectory, next to `index.html`.
pub const HTML_PAGE_DIR: &str = "entities";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HtmlSite {
    pub root: PathBuf,
    /// Entity label to page file name (relative to the page directory).
    pub pages: BTreeMap<String, String>,
}

fn slug(label: &str) -> String {
    let s: String = label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .take(80)
        .collect();
    if s.is_empty() {
        "_".to_string()
    } else {
        s
    }
}

/// File names unique even on case-insensitive file systems. Labels whose
/// slugs clash (ignoring case) all get a content hash suffix.
pub fn page_file_names<'a, I: IntoIterator<Item = &'a String>>(labels: I) -> BTreeMap<String, String> {
    let labels: BTreeSet<&String> = labels.into_iter().collect();
    let mut groups: BTreeMap<String, Vec<&String>> = BTreeMap::new();
    for l in &labels {
        groups.entry(slug(l).to_lowercase()).or_default().push(l);
    }
    let mut out = BTreeMap::new();
    for l in labels {
        let base = slug(l);
        let name = if groups[&base.to_lowercase()].len() > 1 {
            let h = hex::encode(Sha256::digest(l.as_bytes()));
            format!("{base}-{}.html", &h[..12])
        } else {
            format!("{base}.html")
        };
        out.insert(l.clone(), name);
    }
    out
}

fn esc(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

fn head(title: &str) -> String {
    format!(
        "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n<title>{}</title>\n\
         <style>body{{font-family:sans-serif;max-width:60em;margin:2em auto}}td{{padding:0 1em 0 0}}</style>\n\
         </head>\n<body>\n",
        esc(title)
    )
}

fn link_or_text(label: &str, kind: TermKind, pages: &BTreeMap<String, String>) -> String {
    match (kind, pages.get(label)) {
        (TermKind::NamedEntity, Some(file)) => format!("<a href=\"{}\">{}</a>", esc(file), esc(label)),
        _ => esc(label),
    }
}

/// One page per named entity plus an alphabetical `index.html`.
pub fn to_html(kb: &KnowledgeBase, out_dir: &Path) -> Result<HtmlSite, ExportError> {
    let entities = kb.categories().get(StructuralCategory::NamedEntities).clone();
    let pages = page_file_names(&entities);
    let page_dir = out_dir.join(HTML_PAGE_DIR);
    std::fs::create_dir_all(&page_dir).map_err(io_at(&page_dir))?;

    let mut outgoing: BTreeMap<&str, Vec<&Triple>> = BTreeMap::new();
    let mut incoming: BTreeMap<&str, Vec<&Triple>> = BTreeMap::new();
    for t in kb.sorted_triples() {
        outgoing.entry(&t.subject).or_default().push(t);
        if t.object_kind == TermKind::NamedEntity {
            incoming.entry(&t.object).or_default().push(t);
        }
    }

    for (label, file) in &pages {
        let mut html = head(label);
        let _ = writeln!(html, "<p><a href=\"../index.html\">All entities</a></p>\n<h1>{}</h1>", esc(label));
        match outgoing.get(label.as_str()) {
            None => html.push_str("<p class=\"empty\">No facts recorded.</p>\n"),
            Some(ts) => {
                html.push_str("<table>\n");
                for t in ts {
                    let _ = writeln!(
                        html,
                        "<tr><td>{}</td><td>{}</td></tr>",
                        esc(&t.predicate),
                        link_or_text(&t.object, t.object_kind, &pages)
                    );
                }
                html.push_str("</table>\n");
            }
        }
        if let Some(ts) = incoming.get(label.as_str()) {
            html.push_str("<h2>Referenced by</h2>\n<ul>\n");
            for t in ts {
                let _ = writeln!(
                    html,
                    "<li>{} ({})</li>",
                    link_or_text(&t.subject, TermKind::NamedEntity, &pages),
                    esc(&t.predicate)
                );
            }
            html.push_str("</ul>\n");
        }
        html.push_str("</body>\n</html>\n");
        let path = page_dir.join(file);
        std::fs::write(&path, html).map_err(io_at(&path))?;
    }

    let mut index = head("Entities");
    let _ = writeln!(index, "<h1>Entities ({})</h1>\n<ul>", pages.len());
    for (label, file) in &pages {
        let _ = writeln!(index, "<li><a href=\"{HTML_PAGE_DIR}/{}\">{}</a></li>", esc(file), esc(label));
    }
    index.push_str("</ul>\n</body>\n</html>\n");
    let path = out_dir.join("index.html");
    std::fs::write(&path, index).map_err(io_at(&path))?;

    Ok(HtmlSite {
        root: out_dir.to_path_buf(),
        pages,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn case_clashes_get_suffixes() {
        let labels: Vec<String> = ["Babylon", "babylon", "Ur", "Nabu's gate", "Nabu_s gate"].iter().map(|s| s.to_string()).collect();
        let names = page_file_names(&labels);
        let lowered: BTreeSet<String> = names.values().map(|n| n.to_lowercase()).collect();
        assert_eq!(lowered.len(), 5);
        assert_eq!(names["Ur"], "Ur.html");
        assert!(names["Babylon"].starts_with("Babylon-") && names["babylon"].starts_with("babylon-"));
    }

    #[test]
    fn links_and_empty_pages() {
        let kb = KnowledgeBase::from_triples([
            Triple::new("A", "knows", "B", TermKind::NamedEntity, 0, "r"),
            Triple::new("A", "note", "<b>bold</b>", TermKind::Literal, 0, "r"),
        ])
        .unwrap();
        let tmp = tempfile::tempdir().unwrap();
        let site = to_html(&kb, tmp.path()).unwrap();
        let a = std::fs::read_to_string(tmp.path().join(HTML_PAGE_DIR).join(&site.pages["A"])).unwrap();
        assert!(a.contains("<a href=\"B.html\">B</a>"));
        assert!(a.contains("&lt;b&gt;bold&lt;/b&gt;"));
        let b = std::fs::read_to_string(tmp.path().join(HTML_PAGE_DIR).join(&site.pages["B"])).unwrap();
        assert!(b.contains("No facts recorded."));
        assert!(b.contains("<a href=\"A.html\">A</a>"));
        let index = std::fs::read_to_string(tmp.path().join("index.html")).unwrap();
        assert!(index.find("A.html").unwrap() < index.find("B.html").unwrap());
    }
}
