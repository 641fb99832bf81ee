//! Precomputed embedding store.
//!
//! File format: a `dim=<d>` header line, then one record per line,
//! `<text-hash-hex> <d space-separated floats>`, where the hash is the
//! SHA-256 of the trimmed text.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{EmbeddingError, EmbeddingProvider, ProviderDescriptor};

pub fn text_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.trim().as_bytes()))
}

#[derive(Debug, Clone)]
pub struct PrecomputedStore {
    desc: ProviderDescriptor,
    vectors: HashMap<String, Vec<f64>>,
}

impl PrecomputedStore {
    pub fn new(provider_id: impl Into<String>, dim: usize) -> Self {
        PrecomputedStore {
            desc: ProviderDescriptor {
                provider_id: provider_id.into(),
                dim,
                normalize_on_ingest: true,
            },
            vectors: HashMap::new(),
        }
    }

    pub fn insert_text(&mut self, text: &str, values: Vec<f64>) -> Result<(), EmbeddingError> {
        self.insert_hash(text_hash(text), values)
    }

    pub fn insert_hash(&mut self, hash: String, values: Vec<f64>) -> Result<(), EmbeddingError> {
        if values.len() != self.desc.dim {
            return Err(EmbeddingError::DimensionMismatch {
                expected: self.desc.dim,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite);
        }
        self.vectors.insert(hash, values);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn load(path: &Path) -> Result<Self, EmbeddingError> {
        let text = fs::read_to_string(path)?;
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(EmbeddingError::StoreFormat {
            line: 1,
            reason: "missing dim header".into(),
        })?;
        let dim: usize = header
            .trim()
            .strip_prefix("dim=")
            .and_then(|d| d.parse().ok())
            .filter(|&d| d > 0)
            .ok_or(EmbeddingError::StoreFormat {
                line: 1,
                reason: format!("bad header `{header}`"),
            })?;
        let mut store = PrecomputedStore::new(format!("precomputed:{}", path.display()), dim);
        for (i, line) in lines {
            let line_no = i + 1;
            let mut parts = line.split_whitespace();
            let hash = parts.next().unwrap_or_default().to_string();
            if hash.len() != 64 || !hash.bytes().all(|b| b.is_ascii_hexdigit()) {
                return Err(EmbeddingError::StoreFormat {
                    line: line_no,
                    reason: "bad text hash".into(),
                });
            }
            let values = parts
                .map(str::parse::<f64>)
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| EmbeddingError::StoreFormat {
                    line: line_no,
                    reason: e.to_string(),
                })?;
            if values.len() != dim {
                return Err(EmbeddingError::StoreFormat {
                    line: line_no,
                    reason: format!("header dim {dim}, record has {} values", values.len()),
                });
            }
            store
                .insert_hash(hash, values)
                .map_err(|e| EmbeddingError::StoreFormat {
                    line: line_no,
                    reason: e.to_string(),
                })?;
        }
        Ok(store)
    }

    /// Records are written sorted by hash so equal stores produce equal files.
    pub fn to_file_string(&self) -> String {
        let sorted: BTreeMap<&String, &Vec<f64>> = self.vectors.iter().collect();
        let mut s = format!("dim={}\n", self.desc.dim);
        for (hash, values) in sorted {
            s.push_str(hash);
            for v in values {
                let _ = write!(s, " {v}");
            }
            s.push('\n');
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<(), EmbeddingError> {
        fs::write(path, self.to_file_string())?;
        Ok(())
    }
}

impl EmbeddingProvider for PrecomputedStore {
    fn descriptor(&self) -> &ProviderDescriptor {
        &self.desc
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        texts
            .iter()
            .map(|t| {
                let hash = text_hash(t);
                self.vectors
                    .get(&hash)
                    .cloned()
                    .ok_or(EmbeddingError::LookupMiss { hash })
            })
            .collect()
    }
}
