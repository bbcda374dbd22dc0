use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{EmbeddingError, EmbeddingMatrix};

/// Backend that maps strings to raw vectors, one per input, in order.
pub trait EmbeddingProvider: Send + Sync {
    fn provider_id(&self) -> &str;
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbeddingError>;
}

/// One line of the on-disk cache.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheLine {
    pub provider_id: String,
    pub sha256: String,
    pub dim: usize,
    pub values: Vec<f64>,
}

pub fn content_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// A provider plus a content-addressed cache of its raw output.
pub struct Embedder {
    provider: Box<dyn EmbeddingProvider>,
    cache: RwLock<HashMap<String, Vec<f64>>>,
    dim: RwLock<Option<usize>>,
    file: Option<Mutex<File>>,
    provider_calls: AtomicUsize,
}

impl Embedder {
    pub fn new<P: EmbeddingProvider + 'static>(provider: P) -> Self {
        Embedder {
            provider: Box::new(provider),
            cache: RwLock::new(HashMap::new()),
            dim: RwLock::new(None),
            file: None,
            provider_calls: AtomicUsize::new(0),
        }
    }

    /// Loads earlier entries for this provider from `path` and appends new ones to it.
    pub fn with_cache_file(mut self, path: &Path) -> Result<Self, EmbeddingError> {
        if path.exists() {
            let id = self.provider.provider_id().to_string();
            let mut cache = self.cache.write().unwrap_or_else(|e| e.into_inner());
            let mut dim = self.dim.write().unwrap_or_else(|e| e.into_inner());
            for line in BufReader::new(File::open(path)?).lines() {
                let line = line?;
                let Ok(entry) = serde_json::from_str::<CacheLine>(&line) else {
                    log::warn!("skipping unreadable embedding cache line");
                    continue;
                };
                if entry.provider_id != id || entry.values.len() != entry.dim {
                    continue;
                }
                match *dim {
                    Some(d) if d != entry.dim => {
                        return Err(EmbeddingError::DimensionMismatch {
                            expected: d,
                            got: entry.dim,
                        })
                    }
                    _ => *dim = Some(entry.dim),
                }
                cache.insert(entry.sha256, entry.values);
            }
        }
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        self.file = Some(Mutex::new(OpenOptions::new().create(true).append(true).open(path)?));
        Ok(self)
    }

    pub fn provider_id(&self) -> &str {
        self.provider.provider_id()
    }

    /// Number of times the underlying provider has been called.
    pub fn provider_calls(&self) -> usize {
        self.provider_calls.load(Ordering::SeqCst)
    }

    pub fn cached_len(&self) -> usize {
        self.cache.read().map(|c| c.len()).unwrap_or(0)
    }

    /// Row `i` embeds `strings[i]`; only cache misses reach the provider.
    pub fn embed_batch(&self, strings: &[String]) -> Result<EmbeddingMatrix, EmbeddingError> {
        if strings.is_empty() || strings.iter().any(|s| s.is_empty()) {
            return Err(EmbeddingError::EmptyInput);
        }
        let hashes: Vec<String> = strings.iter().map(|s| content_hash(s)).collect();

        let mut missing: Vec<String> = Vec::new();
        let mut missing_hashes: Vec<String> = Vec::new();
        {
            let cache = self.cache.read().unwrap_or_else(|e| e.into_inner());
            let mut seen = HashSet::new();
            for (s, h) in strings.iter().zip(&hashes) {
                if !cache.contains_key(h) && seen.insert(h.clone()) {
                    missing.push(s.clone());
                    missing_hashes.push(h.clone());
                }
            }
        }

        if !missing.is_empty() {
            self.provider_calls.fetch_add(1, Ordering::SeqCst);
            let vectors = self.provider.embed(&missing)?;
            if vectors.len() != missing.len() {
                return Err(EmbeddingError::CountMismatch {
                    expected: missing.len(),
                    got: vectors.len(),
                });
            }
            let mut dim = self.dim.write().unwrap_or_else(|e| e.into_inner());
            for v in &vectors {
                if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
                    return Err(EmbeddingError::InvalidVector);
                }
                match *dim {
                    Some(d) if d != v.len() => {
                        return Err(EmbeddingError::DimensionMismatch {
                            expected: d,
                            got: v.len(),
                        })
                    }
                    _ => *dim = Some(v.len()),
                }
            }
            drop(dim);
            if let Some(file) = &self.file {
                let mut f = file.lock().unwrap_or_else(|e| e.into_inner());
                for (h, v) in missing_hashes.iter().zip(&vectors) {
                    let line = CacheLine {
                        provider_id: self.provider_id().to_string(),
                        sha256: h.clone(),
                        dim: v.len(),
                        values: v.clone(),
                    };
                    let json = serde_json::to_string(&line).map_err(std::io::Error::other)?;
                    writeln!(f, "{json}")?;
                }
                f.flush()?;
            }
            let mut cache = self.cache.write().unwrap_or_else(|e| e.into_inner());
            for (h, v) in missing_hashes.into_iter().zip(vectors) {
                cache.insert(h, v);
            }
        }

        let cache = self.cache.read().unwrap_or_else(|e| e.into_inner());
        let dim = self
            .dim
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .ok_or(EmbeddingError::EmptyInput)?;
        let mut data = Vec::with_capacity(dim * strings.len());
        for h in &hashes {
            let v = cache.get(h).ok_or(EmbeddingError::EmptyInput)?;
            data.extend_from_slice(v);
        }
        Ok(EmbeddingMatrix::from_raw(self.provider_id(), dim, data))
    }

    /// Embeds the distinct members of a set in their sorted order.
    pub fn embed_set(&self, set: &BTreeSet<String>) -> Result<EmbeddingMatrix, EmbeddingError> {
        let items: Vec<String> = set.iter().cloned().collect();
        self.embed_batch(&items)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::OfflineHashEmbedder;

    struct Fixed(usize);
    impl EmbeddingProvider for Fixed {
        fn provider_id(&self) -> &str {
            "fixed"
        }
        fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
            Ok(texts.iter().map(|t| vec![t.len() as f64; self.0 + t.len() % 2]).collect())
        }
    }

    fn strings(items: &[&str]) -> Vec<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn second_call_is_served_from_cache() {
        let e = Embedder::new(OfflineHashEmbedder::default());
        let a = e.embed_batch(&strings(&["Hammurabi"])).unwrap();
        assert_eq!(e.provider_calls(), 1);
        let b = e.embed_batch(&strings(&["Hammurabi"])).unwrap();
        assert_eq!(e.provider_calls(), 1);
        assert_eq!(a, b);
    }

    #[test]
    fn duplicate_inputs_give_identical_rows() {
        let e = Embedder::new(OfflineHashEmbedder::default());
        let m = e.embed_batch(&strings(&["a", "a"])).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.row(0), m.row(1));
        assert_eq!(e.cached_len(), 1);
    }

    #[test]
    fn empty_inputs_rejected() {
        let e = Embedder::new(OfflineHashEmbedder::default());
        assert!(matches!(e.embed_batch(&[]), Err(EmbeddingError::EmptyInput)));
        assert!(matches!(e.embed_batch(&strings(&["a", ""])), Err(EmbeddingError::EmptyInput)));
    }

    #[test]
    fn inconsistent_provider_dimension_is_fatal() {
        let e = Embedder::new(Fixed(3));
        assert!(matches!(
            e.embed_batch(&strings(&["ab", "abc"])),
            Err(EmbeddingError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn cache_file_persists_across_instances() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("cache").join("embeddings.ndjson");
        let e = Embedder::new(OfflineHashEmbedder::default()).with_cache_file(&path).unwrap();
        let first = e.embed_batch(&strings(&["Marduk", "Ishtar Gate"])).unwrap();
        drop(e);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        let line: CacheLine = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(line.sha256, content_hash("Marduk"));
        assert_eq!(line.dim, 384);

        let e2 = Embedder::new(OfflineHashEmbedder::default()).with_cache_file(&path).unwrap();
        let again = e2.embed_batch(&strings(&["Ishtar Gate", "Marduk"])).unwrap();
        assert_eq!(e2.provider_calls(), 0);
        assert_eq!(again.row(0), first.row(1));
        // A different provider ignores foreign entries.
        let e3 = Embedder::new(OfflineHashEmbedder::with_dimension(16)).with_cache_file(&path).unwrap();
        assert_eq!(e3.cached_len(), 0);
    }

    #[test]
    fn partitioning_does_not_change_rows() {
        let items: Vec<String> = (0..100).map(|i| format!("entity number {i}")).collect();
        let whole = Embedder::new(OfflineHashEmbedder::default()).embed_batch(&items).unwrap();
        let split = Embedder::new(OfflineHashEmbedder::default());
        let a = split.embed_batch(&items[..50]).unwrap();
        let b = split.embed_batch(&items[50..]).unwrap();
        for i in 0..50 {
            assert_eq!(whole.row(i), a.row(i));
            assert_eq!(whole.row(50 + i), b.row(i));
        }
    }
}
