//! Run-to-run stability metrics: yield spread, exact-match Jaccard overlap,
//! and two embedding-based similarities.

mod report;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embeddings::{dot, norm, EmbeddingError, EmbeddingMatrix};
use crate::model::{RunRecord, StructuralCategory};

pub use report::{
    bucketed_report, pairwise_report, CategoryReport, Comparator, IdentityTranslator, PairwiseMatrix, ReportRow,
    StabilityReport, Translator, REPORT_CSV, REPORT_JSON,
};

/// Default similarity threshold for a semantic match.
pub const DEFAULT_TAU: f64 = 0.95;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("need at least 2 sets or runs, got {0}")]
    TooFewSets(usize),
    #[error("empty input")]
    EmptyInput,
    #[error("mean is zero; coefficient of variation undefined")]
    ZeroMean,
    #[error("threshold must be in (0, 1], got {0}")]
    InvalidTau(f64),
    #[error("bucket assignment for run {run_id} does not match its named entities: {detail}")]
    BucketCoverage { run_id: String, detail: String },
    #[error("got {buckets} bucket assignments for {runs} runs")]
    BucketCount { runs: usize, buckets: usize },
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("report i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("report encoding: {0}")]
    Encode(String),
}

pub fn yield_counts(record: &RunRecord) -> BTreeMap<StructuralCategory, usize> {
    record.kb.categories().counts()
}

/// Mean and population standard deviation.
pub fn mean_and_std(values: &[f64]) -> Result<(f64, f64), MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

/// Population sigma over mean.
pub fn coefficient_of_variation(values: &[f64]) -> Result<f64, MetricsError> {
    let (mean, std) = mean_and_std(values)?;
    if mean == 0.0 {
        return Err(MetricsError::ZeroMean);
    }
    Ok(std / mean)
}

/// |A ∩ B| / |A ∪ B|; two empty sets count as identical.
pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Mean Jaccard over all unordered pairs.
pub fn avg_jaccard(sets: &[BTreeSet<String>]) -> Result<f64, MetricsError> {
    let n = sets.len();
    if n < 2 {
        return Err(MetricsError::TooFewSets(n));
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            total += jaccard(&sets[i], &sets[j]);
        }
    }
    Ok(total / (n * (n - 1) / 2) as f64)
}

/// Best cosine similarity of every row of `a` into `b`, and of every row of
/// `b` into `a`, from one pass over the similarity matrix.
fn best_similarities(a: &EmbeddingMatrix, b: &EmbeddingMatrix) -> Result<(Vec<f64>, Vec<f64>), MetricsError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if a.provider_id() != b.provider_id() {
        return Err(EmbeddingError::ProviderMismatch(a.provider_id().into(), b.provider_id().into()).into());
    }
    if a.dimension() != b.dimension() {
        return Err(EmbeddingError::DimensionMismatch {
            expected: a.dimension(),
            got: b.dimension(),
        }
        .into());
    }
    let na: Vec<f64> = a.rows().map(norm).collect();
    let nb: Vec<f64> = b.rows().map(norm).collect();
    if na.iter().chain(&nb).any(|n| *n == 0.0) {
        return Err(EmbeddingError::ZeroNorm.into());
    }
    let mut row_best = vec![f64::NEG_INFINITY; a.len()];
    let mut col_best = vec![f64::NEG_INFINITY; b.len()];
    for (i, ra) in a.rows().enumerate() {
        for (j, rb) in b.rows().enumerate() {
            let s = (dot(ra, rb) / (na[i] * nb[j])).clamp(-1.0, 1.0);
            row_best[i] = row_best[i].max(s);
            col_best[j] = col_best[j].max(s);
        }
    }
    Ok((row_best, col_best))
}

/// One minus the mean of the two directed average nearest-neighbour cosine
/// distances. Ranges over [-1, 1].
pub fn hausdorff_similarity(a: &EmbeddingMatrix, b: &EmbeddingMatrix) -> Result<f64, MetricsError> {
    let (row_best, col_best) = best_similarities(a, b)?;
    Ok(hausdorff_from_best(&row_best, &col_best))
}

fn hausdorff_from_best(row_best: &[f64], col_best: &[f64]) -> f64 {
    let directed = |best: &[f64]| best.iter().map(|s| 1.0 - s).sum::<f64>() / best.len() as f64;
    1.0 - (directed(row_best) + directed(col_best)) / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchPercentages {
    pub a_to_b: f64,
    pub b_to_a: f64,
    pub average: f64,
}

pub fn semantic_match_pct(a: &EmbeddingMatrix, b: &EmbeddingMatrix, tau: f64) -> Result<MatchPercentages, MetricsError> {
    check_tau(tau)?;
    let (row_best, col_best) = best_similarities(a, b)?;
    Ok(match_from_best(&row_best, &col_best, tau))
}

fn match_from_best(row_best: &[f64], col_best: &[f64], tau: f64) -> MatchPercentages {
    let pct = |best: &[f64]| 100.0 * best.iter().filter(|s| **s >= tau).count() as f64 / best.len() as f64;
    let (a_to_b, b_to_a) = (pct(row_best), pct(col_best));
    MatchPercentages {
        a_to_b,
        b_to_a,
        average: (a_to_b + b_to_a) / 2.0,
    }
}

pub(crate) fn check_tau(tau: f64) -> Result<(), MetricsError> {
    if tau > 0.0 && tau <= 1.0 {
        Ok(())
    } else {
        Err(MetricsError::InvalidTau(tau))
    }
}

/// Jaccard, Hausdorff similarity and semantic-match average for one pair of
/// sets; `None` embeddings stand for empty sets.
pub(crate) fn pair_metrics(
    a: &BTreeSet<String>,
    ea: Option<&EmbeddingMatrix>,
    b: &BTreeSet<String>,
    eb: Option<&EmbeddingMatrix>,
    tau: f64,
) -> Result<(f64, f64, f64), MetricsError> {
    let ls = jaccard(a, b);
    match (ea, eb) {
        (None, None) => Ok((ls, 1.0, 100.0)),
        (Some(_), None) | (None, Some(_)) => Ok((ls, 0.0, 0.0)),
        (Some(ea), Some(eb)) => {
            let (row_best, col_best) = best_similarities(ea, eb)?;
            Ok((
                ls,
                hausdorff_from_best(&row_best, &col_best),
                match_from_best(&row_best, &col_best, tau).average,
            ))
        }
    }
}
