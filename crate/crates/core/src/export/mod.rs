//! Release formats for a knowledge base: CSV, a SQL dump, Turtle and a
//! static HTML site. Every exporter sorts its output, so the same KB always
//! yields the same bytes.

mod csv_format;
mod html;
mod sql;
mod turtle;

use std::fmt;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::model::{KnowledgeBase, ModelError};

pub use csv_format::{parse_csv, to_csv, CSV_HEADER};
pub use html::{page_file_names, to_html, HtmlSite, HTML_PAGE_DIR};
pub use sql::to_sql_dump;
pub use turtle::{to_turtle, IriPolicy, DEFAULT_BASE_NAMESPACE};

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("export i/o on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(String),
    #[error("invalid base namespace '{0}': must be an absolute IRI ending in '/' or '#'")]
    BadNamespace(String),
    #[error("unknown export format '{0}' (expected csv, sql, ttl or html)")]
    UnknownFormat(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub(crate) fn io_at(path: &Path) -> impl FnOnce(std::io::Error) -> ExportError + '_ {
    move |source| ExportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ExportFormat {
    Csv,
    Sql,
    Turtle,
    Html,
}

impl ExportFormat {
    pub const ALL: [ExportFormat; 4] = [ExportFormat::Csv, ExportFormat::Sql, ExportFormat::Turtle, ExportFormat::Html];

    pub fn parse(s: &str) -> Result<Self, ExportError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(ExportFormat::Csv),
            "sql" => Ok(ExportFormat::Sql),
            "ttl" | "turtle" => Ok(ExportFormat::Turtle),
            "html" => Ok(ExportFormat::Html),
            other => Err(ExportError::UnknownFormat(other.to_string())),
        }
    }

    /// Comma-separated list, duplicates removed, in canonical order.
    pub fn parse_list(s: &str) -> Result<Vec<Self>, ExportError> {
        let mut out: Vec<Self> = s.split(',').filter(|p| !p.trim().is_empty()).map(Self::parse).collect::<Result<_, _>>()?;
        out.sort();
        out.dedup();
        Ok(out)
    }

    /// File (or directory, for HTML) written inside the output directory.
    pub fn artifact_name(self) -> &'static str {
        match self {
            ExportFormat::Csv => "kb.csv",
            ExportFormat::Sql => "kb.sql",
            ExportFormat::Turtle => "kb.ttl",
            ExportFormat::Html => "html",
        }
    }
}

impl fmt::Display for ExportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExportFormat::Csv => "csv",
            ExportFormat::Sql => "sql",
            ExportFormat::Turtle => "ttl",
            ExportFormat::Html => "html",
        })
    }
}

/// Writes each requested format under `out_dir`; returns the artifact paths.
pub fn export_all(
    kb: &KnowledgeBase,
    formats: &[ExportFormat],
    out_dir: &Path,
    policy: &IriPolicy,
) -> Result<Vec<PathBuf>, ExportError> {
    std::fs::create_dir_all(out_dir).map_err(io_at(out_dir))?;
    let mut written = Vec::new();
    for f in formats {
        let path = out_dir.join(f.artifact_name());
        match f {
            ExportFormat::Html => {
                to_html(kb, &path)?;
            }
            _ => {
                let file = std::fs::File::create(&path).map_err(io_at(&path))?;
                let mut w = std::io::BufWriter::new(file);
                match f {
                    ExportFormat::Csv => to_csv(kb, &mut w)?,
                    ExportFormat::Sql => to_sql_dump(kb, &mut w).map_err(io_at(&path))?,
                    ExportFormat::Turtle => to_turtle(kb, policy, &mut w).map_err(io_at(&path))?,
                    ExportFormat::Html => unreachable!(),
                }
                std::io::Write::flush(&mut w).map_err(io_at(&path))?;
            }
        }
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn format_lists() {
        assert_eq!(
            ExportFormat::parse_list("ttl,csv,html,sql,csv").unwrap(),
            ExportFormat::ALL.to_vec()
        );
        assert!(matches!(ExportFormat::parse_list("csv,xml"), Err(ExportError::UnknownFormat(f)) if f == "xml"));
    }
}
