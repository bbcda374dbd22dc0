//! Text embeddings and cosine kernels.
//!
//! Providers turn strings into vectors; [`Embedder`] wraps one provider with a
//! content-addressed cache that can be persisted as append-only NDJSON.

mod cache;
mod offline;
mod remote;

use thiserror::Error;

pub use cache::{content_hash, CacheLine, Embedder, EmbeddingProvider};
pub use offline::{OfflineHashEmbedder, OFFLINE_DIM};
pub use remote::RemoteEmbedder;

/// Sentence-embedding model for English-only comparisons.
pub const DEFAULT_MONOLINGUAL_MODEL: &str = "sentence-transformers/all-MiniLM-L6-v2";
/// Sentence-embedding model for cross-language comparisons.
pub const DEFAULT_MULTILINGUAL_MODEL: &str = "sentence-transformers/paraphrase-multilingual-mpnet-base-v2";

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("nothing to embed (empty list or empty string)")]
    EmptyInput,
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("embeddings come from different providers ({0} vs {1})")]
    ProviderMismatch(String, String),
    #[error("zero-norm vector has no cosine")]
    ZeroNorm,
    #[error("embedding has no components or a non-finite component")]
    InvalidVector,
    #[error("provider returned {got} vectors for {expected} inputs")]
    CountMismatch { expected: usize, got: usize },
    #[error("environment variable {0} is not set")]
    MissingApiKey(&'static str),
    #[error("embedding transport error: {0}")]
    Transport(String),
    #[error("embedding cache error: {0}")]
    Cache(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f64>,
    provider_id: String,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>, provider_id: &str) -> Result<Self, EmbeddingError> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::InvalidVector);
        }
        Ok(EmbeddingVector {
            values,
            provider_id: provider_id.to_string(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn provider_id(&self) -> &str {
        &self.provider_id
    }
}

/// Row-major block of same-provider, same-dimension embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    provider_id: String,
    dim: usize,
    data: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn from_rows(rows: Vec<EmbeddingVector>) -> Result<Self, EmbeddingError> {
        let first = rows.first().ok_or(EmbeddingError::EmptyInput)?;
        let dim = first.dimension();
        let provider_id = first.provider_id.clone();
        let mut data = Vec::with_capacity(dim * rows.len());
        for r in &rows {
            if r.dimension() != dim {
                return Err(EmbeddingError::DimensionMismatch {
                    expected: dim,
                    got: r.dimension(),
                });
            }
            if r.provider_id != provider_id {
                return Err(EmbeddingError::ProviderMismatch(provider_id, r.provider_id.clone()));
            }
            data.extend_from_slice(&r.values);
        }
        Ok(EmbeddingMatrix { provider_id, dim, data })
    }

    pub(crate) fn from_raw(provider_id: &str, dim: usize, data: Vec<f64>) -> Self {
        debug_assert!(dim > 0 && data.len().is_multiple_of(dim));
        EmbeddingMatrix {
            provider_id: provider_id.to_string(),
            dim,
            data,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn provider_id(&self) -> &str {
        &self.provider_id
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn vector(&self, i: usize) -> EmbeddingVector {
        EmbeddingVector {
            values: self.row(i).to_vec(),
            provider_id: self.provider_id.clone(),
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine of two raw slices, clamped to [-1, 1].
pub fn cosine_slices(a: &[f64], b: &[f64]) -> Result<f64, EmbeddingError> {
    if a.len() != b.len() {
        return Err(EmbeddingError::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(EmbeddingError::ZeroNorm);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbeddingError> {
    cosine_slices(a.values(), b.values())
}

/// `1 - cosine_similarity`, in [0, 2].
pub fn cosine_distance(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbeddingError> {
    Ok(1.0 - cosine_similarity(a, b)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(x: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(x.to_vec(), "t").unwrap()
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine_similarity(&v(&[1.0, 2.0, 3.0]), &v(&[1.0, 2.0, 3.0])).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
        let c = cosine_similarity(&v(&[1.0, 2.0, 3.0]), &v(&[3.0, 2.0, 1.0])).unwrap();
        assert!((c - 10.0 / 14.0).abs() < 1e-12);
        assert!((c - 0.714286).abs() < 1e-6);
    }

    #[test]
    fn distance_examples() {
        assert!(cosine_distance(&v(&[2.0, 5.0]), &v(&[2.0, 5.0])).unwrap().abs() < 1e-15);
        assert_eq!(cosine_distance(&v(&[1.0, 0.0]), &v(&[0.0, 3.0])).unwrap(), 1.0);
        assert_eq!(cosine_distance(&v(&[1.0, 0.0]), &v(&[-4.0, 0.0])).unwrap(), 2.0);
        assert!((cosine_distance(&v(&[1.0, -2.0]), &v(&[-1.0, 2.0])).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        assert!(matches!(cosine_similarity(&v(&[0.0, 0.0]), &v(&[1.0, 0.0])), Err(EmbeddingError::ZeroNorm)));
        assert!(matches!(
            cosine_similarity(&v(&[1.0]), &v(&[1.0, 0.0])),
            Err(EmbeddingError::DimensionMismatch { .. })
        ));
        assert!(EmbeddingVector::new(vec![], "t").is_err());
        assert!(EmbeddingVector::new(vec![f64::NAN], "t").is_err());
    }

    #[test]
    fn matrix_checks_rows() {
        assert!(EmbeddingMatrix::from_rows(vec![]).is_err());
        assert!(EmbeddingMatrix::from_rows(vec![v(&[1.0]), v(&[1.0, 2.0])]).is_err());
        let other = EmbeddingVector::new(vec![1.0], "u").unwrap();
        assert!(EmbeddingMatrix::from_rows(vec![v(&[1.0]), other]).is_err());
        let m = EmbeddingMatrix::from_rows(vec![v(&[1.0, 2.0]), v(&[3.0, 4.0])]).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.row(1), &[3.0, 4.0]);
        assert_eq!(m.vector(0), v(&[1.0, 2.0]));
    }

    fn nonzero_vec() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0f64..10.0, 4).prop_filter("nonzero", |x| norm(x) > 1e-3)
    }

    proptest! {
        #[test]
        fn cosine_symmetric_and_scale_invariant(a in nonzero_vec(), b in nonzero_vec(), s in 0.01f64..100.0) {
            let ab = cosine_slices(&a, &b).unwrap();
            let ba = cosine_slices(&b, &a).unwrap();
            prop_assert!((ab - ba).abs() < 1e-12);
            let scaled: Vec<f64> = a.iter().map(|x| x * s).collect();
            prop_assert!((cosine_slices(&scaled, &b).unwrap() - ab).abs() < 1e-9);
            prop_assert!((-1.0..=1.0).contains(&ab));
        }
    }
}
