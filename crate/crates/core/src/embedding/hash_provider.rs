use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{EmbeddingError, EmbeddingProvider, ProviderDescriptor};

/// Deterministic embedder for offline use: SHA-256 of `(seed, text)` seeds a
/// ChaCha8 stream that yields `dim` uniform values in `[-1, 1)`.
///
/// Vectors carry no semantics; identical texts map to identical vectors.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    seed: u64,
    desc: ProviderDescriptor,
}

impl HashEmbedder {
    pub const DEFAULT_SEED: u64 = 0x005e_ed0f_e3b1;

    pub fn new(dim: usize) -> Self {
        Self::with_seed(dim, Self::DEFAULT_SEED)
    }

    /// Non-default seeds get their own provider id (`test:hash:seed=<n>`),
    /// so cached vectors never cross seeds.
    pub fn with_seed(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        let provider_id = if seed == Self::DEFAULT_SEED {
            "test:hash".to_string()
        } else {
            format!("test:hash:seed={seed}")
        };
        HashEmbedder {
            seed,
            desc: ProviderDescriptor {
                provider_id,
                dim,
                normalize_on_ingest: true,
            },
        }
    }

    pub fn raw(&self, text: &str) -> Vec<f64> {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(text.as_bytes());
        let mut rng = ChaCha8Rng::from_seed(h.finalize().into());
        (0..self.desc.dim)
            .map(|_| rng.gen::<f64>() * 2.0 - 1.0)
            .collect()
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn descriptor(&self) -> &ProviderDescriptor {
        &self.desc
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        Ok(texts.iter().map(|t| self.raw(t)).collect())
    }
}
