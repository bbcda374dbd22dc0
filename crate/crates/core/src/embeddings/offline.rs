use std::hash::Hasher;

use fnv::FnvHasher;

use super::cache::EmbeddingProvider;
use super::EmbeddingError;

pub const OFFLINE_DIM: usize = 384;

/// Character-trigram bag hashed into a fixed number of buckets, L2-normalized.
///
/// Deterministic and dependency-free. Similarity tracks lexical overlap, not
/// meaning.
#[derive(Debug, Clone)]
pub struct OfflineHashEmbedder {
    dim: usize,
    id: String,
}

impl Default for OfflineHashEmbedder {
    fn default() -> Self {
        Self::with_dimension(OFFLINE_DIM)
    }
}

impl OfflineHashEmbedder {
    pub fn with_dimension(dim: usize) -> Self {
        let dim = dim.max(1);
        OfflineHashEmbedder {
            dim,
            id: format!("offline-trigram-{dim}"),
        }
    }

    pub fn embed_one(&self, text: &str) -> Vec<f64> {
        let padded: Vec<char> = std::iter::once(' ')
            .chain(text.to_lowercase().chars())
            .chain(std::iter::once(' '))
            .collect();
        let mut v = vec![0.0; self.dim];
        let mut buf = [0u8; 12];
        for w in padded.windows(3) {
            let mut h = FnvHasher::default();
            for c in w {
                h.write(c.encode_utf8(&mut buf).as_bytes());
            }
            v[(h.finish() % self.dim as u64) as usize] += 1.0;
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.0 {
            v.iter_mut().for_each(|x| *x /= n);
        }
        v
    }
}

impl EmbeddingProvider for OfflineHashEmbedder {
    fn provider_id(&self) -> &str {
        &self.id
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}
