//! Text embeddings and cosine similarity.
//!
//! Providers map texts to fixed-dimension vectors. [`Embedder`] wraps a
//! provider with a content-addressed cache, trims input text and normalizes
//! vectors on ingest so that similarity reduces to a dot product.

mod cache;
mod hash_provider;
mod remote;
mod store;

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::{CompactionStats, EmbeddingCache};
pub use hash_provider::HashEmbedder;
pub use remote::{
    EmbedRequest, EmbedResponse, EmbeddingDatum, HttpTransport, RemoteConfig, RemoteEmbedder,
    Transport, TransportError,
};
pub use store::{text_hash, PrecomputedStore};

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("vector contains non-finite values")]
    NonFinite,
    #[error("empty vector")]
    Empty,
    #[error("text at index {index} is empty after trimming")]
    EmptyText { index: usize },
    #[error("precomputed store has no vector for text hash {hash}")]
    LookupMiss { hash: String },
    #[error("provider failed for inputs {indices:?}: {message}")]
    Provider {
        message: String,
        indices: Vec<usize>,
    },
    #[error("embedding API returned status {status} for inputs {indices:?}: {message}")]
    Api {
        status: u16,
        message: String,
        indices: Vec<usize>,
    },
    #[error("embedding API protocol violation for inputs {indices:?}: {message}")]
    Protocol {
        message: String,
        indices: Vec<usize>,
    },
    #[error("store format error at line {line}: {reason}")]
    StoreFormat { line: usize, reason: String },
    #[error("cache error: {0}")]
    Cache(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl EmbeddingError {
    /// Rewrites batch indices through `map` (provider-local → caller index).
    fn remap_indices(self, map: &[usize]) -> Self {
        let remap = |v: Vec<usize>| {
            v.into_iter()
                .map(|i| map.get(i).copied().unwrap_or(i))
                .collect()
        };
        match self {
            EmbeddingError::Provider { message, indices } => EmbeddingError::Provider {
                message,
                indices: remap(indices),
            },
            EmbeddingError::Api {
                status,
                message,
                indices,
            } => EmbeddingError::Api {
                status,
                message,
                indices: remap(indices),
            },
            EmbeddingError::Protocol { message, indices } => EmbeddingError::Protocol {
                message,
                indices: remap(indices),
            },
            other => other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f64>,
    normalized: bool,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, EmbeddingError> {
        if values.is_empty() {
            return Err(EmbeddingError::Empty);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite);
        }
        Ok(EmbeddingVector {
            values,
            normalized: false,
        })
    }

    /// Builds a unit-length vector pointing in the direction of `values`.
    pub fn normalized(values: Vec<f64>) -> Result<Self, EmbeddingError> {
        Self::new(values)?.into_normalized()
    }

    pub fn into_normalized(mut self) -> Result<Self, EmbeddingError> {
        if self.normalized {
            return Ok(self);
        }
        let norm = self.norm();
        if norm == 0.0 {
            return Err(EmbeddingError::ZeroVector);
        }
        if !norm.is_finite() {
            return Err(EmbeddingError::NonFinite);
        }
        for v in &mut self.values {
            *v /= norm;
        }
        self.normalized = true;
        Ok(self)
    }

    pub(crate) fn from_parts(values: Vec<f64>, normalized: bool) -> Self {
        EmbeddingVector { values, normalized }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn norm(&self) -> f64 {
        dot(&self.values, &self.values).sqrt()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine similarity clamped to `[-1, 1]`.
///
/// Symmetric bit-for-bit: every product is commutative and the summation
/// order is fixed by position. Two normalized vectors take the dot-product
/// path.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, EmbeddingError> {
    if a.dim() != b.dim() {
        return Err(EmbeddingError::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let d = dot(&a.values, &b.values);
    let sim = if a.normalized && b.normalized {
        d
    } else {
        let (na, nb) = (a.norm(), b.norm());
        if na == 0.0 || nb == 0.0 {
            return Err(EmbeddingError::ZeroVector);
        }
        d / (na * nb)
    };
    Ok(sim.clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderDescriptor {
    /// e.g. `remote:<model>`, `precomputed:<path>`, `test:hash`.
    pub provider_id: String,
    pub dim: usize,
    pub normalize_on_ingest: bool,
}

/// A source of raw embeddings. Implementations return one vector per input,
/// in input order. Batch indices in errors refer to positions in `texts`.
pub trait EmbeddingProvider: Send + Sync {
    fn descriptor(&self) -> &ProviderDescriptor;
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbeddingError>;
}

/// Counters over provider traffic, for cache-coherence checks.
#[derive(Debug, Default)]
pub struct ProviderStats {
    calls: AtomicU64,
    texts: AtomicU64,
    cache_hits: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StatsSnapshot {
    pub provider_calls: u64,
    pub texts_embedded: u64,
    pub cache_hits: u64,
}

impl ProviderStats {
    pub fn snapshot(&self) -> StatsSnapshot {
        StatsSnapshot {
            provider_calls: self.calls.load(Ordering::Relaxed),
            texts_embedded: self.texts.load(Ordering::Relaxed),
            cache_hits: self.cache_hits.load(Ordering::Relaxed),
        }
    }
}

/// Cache key: SHA-256 over the provider id, a NUL separator and the text bytes.
pub fn cache_key(provider_id: &str, text: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(provider_id.as_bytes());
    h.update([0u8]);
    h.update(text.as_bytes());
    h.finalize().into()
}

/// A provider plus its cache; the entry point for all embedding lookups.
pub struct Embedder {
    provider: Box<dyn EmbeddingProvider>,
    cache: EmbeddingCache,
    stats: ProviderStats,
}

impl Embedder {
    pub fn new(provider: Box<dyn EmbeddingProvider>, cache: EmbeddingCache) -> Self {
        Embedder {
            provider,
            cache,
            stats: ProviderStats::default(),
        }
    }

    /// Embedder with a process-local cache.
    pub fn in_memory(provider: Box<dyn EmbeddingProvider>) -> Self {
        let id = provider.descriptor().provider_id.clone();
        Self::new(provider, EmbeddingCache::in_memory(&id))
    }

    pub fn descriptor(&self) -> &ProviderDescriptor {
        self.provider.descriptor()
    }

    pub fn stats(&self) -> StatsSnapshot {
        self.stats.snapshot()
    }

    pub fn cache(&self) -> &EmbeddingCache {
        &self.cache
    }

    /// One vector per text, order-aligned with `texts`.
    ///
    /// Texts are trimmed; cached texts and repeats within the batch are not
    /// sent to the provider.
    pub fn embed_batch<S: AsRef<str>>(
        &self,
        texts: &[S],
    ) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        let desc = self.provider.descriptor();
        let trimmed: Vec<&str> = texts.iter().map(|t| t.as_ref().trim()).collect();
        if let Some(index) = trimmed.iter().position(|t| t.is_empty()) {
            return Err(EmbeddingError::EmptyText { index });
        }

        let mut out: Vec<Option<EmbeddingVector>> = vec![None; trimmed.len()];
        let mut miss_texts: Vec<&str> = Vec::new();
        let mut miss_first_index: Vec<usize> = Vec::new();
        let mut pending: std::collections::HashMap<&str, usize> = Default::default();
        let mut hits = 0u64;
        for (i, t) in trimmed.iter().enumerate() {
            if let Some(v) = self.cache.get(t) {
                if v.dim() != desc.dim {
                    return Err(EmbeddingError::DimensionMismatch {
                        expected: desc.dim,
                        got: v.dim(),
                    });
                }
                out[i] = Some(v);
                hits += 1;
            } else if !pending.contains_key(t) {
                pending.insert(t, miss_texts.len());
                miss_texts.push(t);
                miss_first_index.push(i);
            }
        }
        self.stats.cache_hits.fetch_add(hits, Ordering::Relaxed);

        if !miss_texts.is_empty() {
            self.stats.calls.fetch_add(1, Ordering::Relaxed);
            self.stats
                .texts
                .fetch_add(miss_texts.len() as u64, Ordering::Relaxed);
            let raw = self
                .provider
                .embed(&miss_texts)
                .map_err(|e| e.remap_indices(&miss_first_index))?;
            if raw.len() != miss_texts.len() {
                return Err(EmbeddingError::Protocol {
                    message: format!(
                        "provider returned {} vectors for {} texts",
                        raw.len(),
                        miss_texts.len()
                    ),
                    indices: miss_first_index.clone(),
                });
            }
            let mut fresh = Vec::with_capacity(raw.len());
            for (text, values) in miss_texts.iter().zip(raw) {
                if values.len() != desc.dim {
                    return Err(EmbeddingError::DimensionMismatch {
                        expected: desc.dim,
                        got: values.len(),
                    });
                }
                let v = EmbeddingVector::new(values)?;
                let v = if desc.normalize_on_ingest {
                    v.into_normalized()?
                } else {
                    v
                };
                fresh.push((*text, v));
            }
            self.cache.insert_many(&fresh)?;
            for (i, t) in trimmed.iter().enumerate() {
                if out[i].is_none() {
                    out[i] = Some(fresh[pending[t]].1.clone());
                }
            }
        }
        Ok(out
            .into_iter()
            .map(|v| v.expect("every slot filled"))
            .collect())
    }
}
