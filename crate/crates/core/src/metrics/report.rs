use std::collections::BTreeSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_tau, mean_and_std, pair_metrics, MetricsError, DEFAULT_TAU};
use crate::embeddings::{Embedder, EmbeddingMatrix};
use crate::model::{RunRecord, StructuralCategory};
use crate::popularity::{Bucket, BucketAssignment};

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";

/// Maps a label produced in some prompt language to English before comparison.
pub trait Translator: Send + Sync {
    fn to_english(&self, label: &str, language: &str) -> String;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityTranslator;

impl Translator for IdentityTranslator {
    fn to_english(&self, label: &str, _language: &str) -> String {
        label.to_string()
    }
}

/// Square matrix of one metric over a list of runs.
///
/// Bucketed matrices are directed: cell (i, j) compares bucket of run i with
/// all entities of run j, and the diagonal is left empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseMatrix {
    pub metric_id: String,
    pub category: StructuralCategory,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bucket: Option<Bucket>,
    pub run_ids: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

impl PairwiseMatrix {
    fn new(metric_id: &str, category: StructuralCategory, bucket: Option<Bucket>, run_ids: &[String], diagonal: Option<f64>) -> Self {
        let n = run_ids.len();
        let values = (0..n).map(|i| (0..n).map(|j| if i == j { diagonal } else { None }).collect()).collect();
        PairwiseMatrix {
            metric_id: metric_id.to_string(),
            category,
            bucket,
            run_ids: run_ids.to_vec(),
            values,
        }
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values[i][j]
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.run_ids.len();
        (0..n).all(|i| (0..n).all(|j| self.values[i][j] == self.values[j][i]))
    }
}

/// One line of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub category: StructuralCategory,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bucket: Option<Bucket>,
    pub runs: usize,
    pub pairs: usize,
    pub yield_mean: f64,
    pub yield_std: f64,
    pub yield_cv: Option<f64>,
    pub ls: Option<f64>,
    pub ss1: Option<f64>,
    pub ss2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryReport {
    pub row: ReportRow,
    pub matrices: Vec<PairwiseMatrix>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub suite_id: Option<String>,
    pub tau: f64,
    pub provider_id: String,
    pub run_ids: Vec<String>,
    pub rows: Vec<ReportRow>,
    pub matrices: Vec<PairwiseMatrix>,
}

impl StabilityReport {
    pub fn new(suite_id: Option<String>, tau: f64, provider_id: &str, records: &[RunRecord]) -> Self {
        StabilityReport {
            suite_id,
            tau,
            provider_id: provider_id.to_string(),
            run_ids: records.iter().map(|r| r.run_id.clone()).collect(),
            rows: Vec::new(),
            matrices: Vec::new(),
        }
    }

    pub fn push(&mut self, part: CategoryReport) {
        self.rows.push(part.row);
        self.matrices.extend(part.matrices);
    }

    pub fn row(&self, category: StructuralCategory, bucket: Option<Bucket>) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.category == category && r.bucket == bucket)
    }

    pub fn write_json(&self, path: &Path) -> Result<(), MetricsError> {
        let mut text = serde_json::to_string_pretty(self).map_err(|e| MetricsError::Encode(e.to_string()))?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), MetricsError> {
        let mut w = csv::Writer::from_path(path).map_err(|e| MetricsError::Encode(e.to_string()))?;
        let enc = |e: csv::Error| MetricsError::Encode(e.to_string());
        w.write_record([
            "category", "bucket", "runs", "pairs", "yield_mean", "yield_std", "yield_cv", "ls", "ss1", "ss2_pct", "flag",
        ])
        .map_err(enc)?;
        let num = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.category.as_str().to_string(),
                r.bucket.map(|b| b.as_str().to_string()).unwrap_or_else(|| "all".into()),
                r.runs.to_string(),
                r.pairs.to_string(),
                num(Some(r.yield_mean)),
                num(Some(r.yield_std)),
                num(r.yield_cv),
                num(r.ls),
                num(r.ss1),
                num(r.ss2),
                r.flag.clone().unwrap_or_default(),
            ])
            .map_err(enc)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Metric settings shared by every comparison in one report.
pub struct Comparator<'a> {
    embedder: &'a Embedder,
    tau: f64,
    translator: &'a dyn Translator,
}

impl<'a> Comparator<'a> {
    pub fn new(embedder: &'a Embedder) -> Self {
        Comparator {
            embedder,
            tau: DEFAULT_TAU,
            translator: &IdentityTranslator,
        }
    }

    pub fn with_tau(mut self, tau: f64) -> Result<Self, MetricsError> {
        check_tau(tau)?;
        self.tau = tau;
        Ok(self)
    }

    pub fn with_translator(mut self, translator: &'a dyn Translator) -> Self {
        self.translator = translator;
        self
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn provider_id(&self) -> &str {
        self.embedder.provider_id()
    }

    fn translate(&self, set: &BTreeSet<String>, language: &str) -> BTreeSet<String> {
        set.iter().map(|l| self.translator.to_english(l, language)).collect()
    }

    fn embed(&self, set: &BTreeSet<String>) -> Result<Option<EmbeddingMatrix>, MetricsError> {
        if set.is_empty() {
            Ok(None)
        } else {
            Ok(Some(self.embedder.embed_set(set)?))
        }
    }

    /// Symmetric Jaccard / Hausdorff / match matrices for one category plus
    /// their off-diagonal averages.
    pub fn pairwise(&self, records: &[RunRecord], category: StructuralCategory) -> Result<CategoryReport, MetricsError> {
        let n = records.len();
        if n < 2 {
            return Err(MetricsError::TooFewSets(n));
        }
        let raw: Vec<BTreeSet<String>> = records.iter().map(|r| r.kb.categories().get(category).clone()).collect();
        let sets: Vec<BTreeSet<String>> = records
            .iter()
            .zip(&raw)
            .map(|(r, s)| self.translate(s, &r.config.prompt_language))
            .collect();
        let embedded = sets.iter().map(|s| self.embed(s)).collect::<Result<Vec<_>, _>>()?;
        let yields: Vec<f64> = raw.iter().map(|s| s.len() as f64).collect();

        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        let cells = pairs
            .par_iter()
            .map(|&(i, j)| pair_metrics(&sets[i], embedded[i].as_ref(), &sets[j], embedded[j].as_ref(), self.tau))
            .collect::<Result<Vec<_>, _>>()?;

        let run_ids: Vec<String> = records.iter().map(|r| r.run_id.clone()).collect();
        let mut ls = PairwiseMatrix::new("jaccard", category, None, &run_ids, Some(1.0));
        let mut ss1 = PairwiseMatrix::new("hausdorff_similarity", category, None, &run_ids, Some(1.0));
        let mut ss2 = PairwiseMatrix::new("semantic_match_pct", category, None, &run_ids, Some(100.0));
        for (&(i, j), &(l, h, m)) in pairs.iter().zip(&cells) {
            for (a, b) in [(i, j), (j, i)] {
                ls.values[a][b] = Some(l);
                ss1.values[a][b] = Some(h);
                ss2.values[a][b] = Some(m);
            }
        }
        Ok(CategoryReport {
            row: summarize(category, None, &yields, &cells, None)?,
            matrices: vec![ls, ss1, ss2],
        })
    }

    /// For each bucket and each ordered run pair (i, j), compares the bucket
    /// of run i with all named entities of run j.
    pub fn bucketed(&self, records: &[RunRecord], buckets: &[BucketAssignment]) -> Result<Vec<CategoryReport>, MetricsError> {
        let category = StructuralCategory::NamedEntities;
        let n = records.len();
        if n < 2 {
            return Err(MetricsError::TooFewSets(n));
        }
        if buckets.len() != n {
            return Err(MetricsError::BucketCount {
                runs: n,
                buckets: buckets.len(),
            });
        }
        let raw: Vec<BTreeSet<String>> = records.iter().map(|r| r.kb.categories().get(category).clone()).collect();
        for ((rec, assignment), ne) in records.iter().zip(buckets).zip(&raw) {
            check_partition(&rec.run_id, assignment, ne)?;
        }
        let langs: Vec<&str> = records.iter().map(|r| r.config.prompt_language.as_str()).collect();
        let full: Vec<BTreeSet<String>> = raw.iter().zip(&langs).map(|(s, l)| self.translate(s, l)).collect();
        let full_emb = full.iter().map(|s| self.embed(s)).collect::<Result<Vec<_>, _>>()?;
        let run_ids: Vec<String> = records.iter().map(|r| r.run_id.clone()).collect();

        let mut out = Vec::new();
        for bucket in Bucket::ALL {
            let part: Vec<BTreeSet<String>> = buckets
                .iter()
                .zip(&langs)
                .map(|(a, l)| self.translate(a.get(bucket), l))
                .collect();
            let part_emb = part.iter().map(|s| self.embed(s)).collect::<Result<Vec<_>, _>>()?;
            let yields: Vec<f64> = buckets.iter().map(|a| a.get(bucket).len() as f64).collect();
            let empty_runs: Vec<&str> = (0..n).filter(|i| part[*i].is_empty()).map(|i| run_ids[i].as_str()).collect();

            let pairs: Vec<(usize, usize)> = (0..n)
                .filter(|i| !part[*i].is_empty())
                .flat_map(|i| (0..n).filter(move |j| *j != i).map(move |j| (i, j)))
                .collect();
            let cells = pairs
                .par_iter()
                .map(|&(i, j)| pair_metrics(&part[i], part_emb[i].as_ref(), &full[j], full_emb[j].as_ref(), self.tau))
                .collect::<Result<Vec<_>, _>>()?;

            let mut ls = PairwiseMatrix::new("jaccard", category, Some(bucket), &run_ids, None);
            let mut ss1 = PairwiseMatrix::new("hausdorff_similarity", category, Some(bucket), &run_ids, None);
            let mut ss2 = PairwiseMatrix::new("semantic_match_pct", category, Some(bucket), &run_ids, None);
            for (&(i, j), &(l, h, m)) in pairs.iter().zip(&cells) {
                ls.values[i][j] = Some(l);
                ss1.values[i][j] = Some(h);
                ss2.values[i][j] = Some(m);
            }
            let flag = match empty_runs.len() {
                0 => None,
                k if k == n => Some("empty bucket in every run".to_string()),
                _ => Some(format!("empty bucket skipped for {}", empty_runs.join(" "))),
            };
            if flag.is_some() {
                log::warn!("bucket {bucket}: {}", flag.as_deref().unwrap_or_default());
            }
            out.push(CategoryReport {
                row: summarize(category, Some(bucket), &yields, &cells, flag)?,
                matrices: vec![ls, ss1, ss2],
            });
        }
        Ok(out)
    }

    /// Pairwise rows for each category, then bucketed rows if assignments are given.
    pub fn report(
        &self,
        suite_id: Option<String>,
        records: &[RunRecord],
        categories: &[StructuralCategory],
        buckets: Option<&[BucketAssignment]>,
    ) -> Result<StabilityReport, MetricsError> {
        let mut report = StabilityReport::new(suite_id, self.tau, self.provider_id(), records);
        for c in categories {
            report.push(self.pairwise(records, *c)?);
        }
        if let Some(b) = buckets {
            for part in self.bucketed(records, b)? {
                report.push(part);
            }
        }
        Ok(report)
    }
}

fn check_partition(run_id: &str, assignment: &BucketAssignment, ne: &BTreeSet<String>) -> Result<(), MetricsError> {
    let total: usize = assignment.buckets.values().map(|s| s.len()).sum();
    let labels = assignment.labels();
    if total != labels.len() {
        return Err(MetricsError::BucketCoverage {
            run_id: run_id.to_string(),
            detail: "an entity sits in more than one bucket".into(),
        });
    }
    if let Some(missing) = ne.difference(&labels).next() {
        return Err(MetricsError::BucketCoverage {
            run_id: run_id.to_string(),
            detail: format!("'{missing}' has no bucket"),
        });
    }
    if let Some(extra) = labels.difference(ne).next() {
        return Err(MetricsError::BucketCoverage {
            run_id: run_id.to_string(),
            detail: format!("'{extra}' is not a named entity of the run"),
        });
    }
    Ok(())
}

fn summarize(
    category: StructuralCategory,
    bucket: Option<Bucket>,
    yields: &[f64],
    cells: &[(f64, f64, f64)],
    flag: Option<String>,
) -> Result<ReportRow, MetricsError> {
    let (yield_mean, yield_std) = mean_and_std(yields)?;
    let yield_cv = (yield_mean != 0.0).then(|| yield_std / yield_mean);
    let avg = |f: fn(&(f64, f64, f64)) -> f64| {
        (!cells.is_empty()).then(|| cells.iter().map(f).sum::<f64>() / cells.len() as f64)
    };
    Ok(ReportRow {
        category,
        bucket,
        runs: yields.len(),
        pairs: cells.len(),
        yield_mean,
        yield_std,
        yield_cv,
        ls: avg(|c| c.0),
        ss1: avg(|c| c.1),
        ss2: avg(|c| c.2),
        flag,
    })
}

pub fn pairwise_report(
    records: &[RunRecord],
    category: StructuralCategory,
    tau: f64,
    embedder: &Embedder,
) -> Result<CategoryReport, MetricsError> {
    Comparator::new(embedder).with_tau(tau)?.pairwise(records, category)
}

pub fn bucketed_report(
    records: &[RunRecord],
    buckets: &[BucketAssignment],
    tau: f64,
    embedder: &Embedder,
) -> Result<Vec<CategoryReport>, MetricsError> {
    Comparator::new(embedder).with_tau(tau)?.bucketed(records, buckets)
}
