//! Content-addressed embedding cache.
//!
//! On disk, each provider owns one append-only log in the cache directory.
//! The first line is `provider=<provider_id>`; every following line is
//! `<key-hex> <n|r> <v1> ... <vd>` where `n` marks a normalized vector.
//! Floats use Rust's shortest round-trip formatting, so reloads are
//! bit-identical. A torn final line from an interrupted run is dropped when
//! the log is reopened.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use sha2::{Digest, Sha256};

use super::{cache_key, EmbeddingError, EmbeddingVector};

pub struct EmbeddingCache {
    provider_id: String,
    entries: RwLock<HashMap<[u8; 32], EmbeddingVector>>,
    log: Option<Mutex<BufWriter<File>>>,
    path: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CompactionStats {
    pub lines_before: usize,
    pub entries_after: usize,
}

fn log_file_name(provider_id: &str) -> String {
    let safe: String = provider_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .take(48)
        .collect();
    let digest = hex::encode(Sha256::digest(provider_id.as_bytes()));
    format!("{safe}-{}.log", &digest[..12])
}

fn format_record(key: &[u8; 32], v: &EmbeddingVector) -> String {
    let mut line = hex::encode(key);
    line.push(' ');
    line.push(if v.is_normalized() { 'n' } else { 'r' });
    for x in v.values() {
        line.push(' ');
        line.push_str(&x.to_string());
    }
    line.push('\n');
    line
}

fn cache_err(path: &Path, line: usize, reason: &str) -> EmbeddingError {
    EmbeddingError::Cache(format!("{}:{line}: {reason}", path.display()))
}

fn parse_record(
    path: &Path,
    line_no: usize,
    line: &str,
) -> Result<([u8; 32], EmbeddingVector), EmbeddingError> {
    let mut parts = line.split(' ');
    let key_hex = parts.next().unwrap_or_default();
    let mut key = [0u8; 32];
    hex::decode_to_slice(key_hex, &mut key).map_err(|_| cache_err(path, line_no, "bad key"))?;
    let normalized = match parts.next() {
        Some("n") => true,
        Some("r") => false,
        _ => return Err(cache_err(path, line_no, "bad normalization flag")),
    };
    let values = parts
        .map(str::parse::<f64>)
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| cache_err(path, line_no, "bad float"))?;
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(cache_err(path, line_no, "bad vector"));
    }
    Ok((key, EmbeddingVector::from_parts(values, normalized)))
}

/// Reads a log, returning its records in file order. Truncates a torn tail.
fn read_log(
    path: &Path,
    provider_id: &str,
) -> Result<Vec<([u8; 32], EmbeddingVector)>, EmbeddingError> {
    let mut text = fs::read_to_string(path)?;
    if !text.is_empty() && !text.ends_with('\n') {
        let keep = text.rfind('\n').map_or(0, |i| i + 1);
        text.truncate(keep);
        OpenOptions::new()
            .write(true)
            .open(path)?
            .set_len(keep as u64)?;
    }
    let mut lines = text.lines().enumerate();
    let mut out = Vec::new();
    match lines.next() {
        None => return Ok(out),
        Some((_, header)) => {
            if header.strip_prefix("provider=") != Some(provider_id) {
                return Err(cache_err(path, 1, "log belongs to a different provider"));
            }
        }
    }
    for (i, line) in lines {
        out.push(parse_record(path, i + 1, line)?);
    }
    Ok(out)
}

impl EmbeddingCache {
    pub fn in_memory(provider_id: &str) -> Self {
        EmbeddingCache {
            provider_id: provider_id.to_string(),
            entries: RwLock::new(HashMap::new()),
            log: None,
            path: None,
        }
    }

    /// Opens (or creates) the log for `provider_id` under `dir`.
    pub fn open(dir: &Path, provider_id: &str) -> Result<Self, EmbeddingError> {
        fs::create_dir_all(dir)?;
        let path = dir.join(log_file_name(provider_id));
        let mut entries = HashMap::new();
        let fresh = !path.exists() || fs::metadata(&path)?.len() == 0;
        if !fresh {
            for (k, v) in read_log(&path, provider_id)? {
                entries.insert(k, v);
            }
        }
        let mut file = OpenOptions::new().create(true).append(true).open(&path)?;
        if fresh {
            writeln!(file, "provider={provider_id}")?;
        }
        Ok(EmbeddingCache {
            provider_id: provider_id.to_string(),
            entries: RwLock::new(entries),
            log: Some(Mutex::new(BufWriter::new(file))),
            path: Some(path),
        })
    }

    pub fn provider_id(&self) -> &str {
        &self.provider_id
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, text: &str) -> Option<EmbeddingVector> {
        let key = cache_key(&self.provider_id, text);
        self.entries.read().expect("cache lock").get(&key).cloned()
    }

    /// Adds entries and appends them to the log; existing keys are kept.
    pub fn insert_many(&self, items: &[(&str, EmbeddingVector)]) -> Result<(), EmbeddingError> {
        let mut entries = self.entries.write().expect("cache lock");
        let mut appended = String::new();
        for (text, v) in items {
            let key = cache_key(&self.provider_id, text);
            if let std::collections::hash_map::Entry::Vacant(slot) = entries.entry(key) {
                appended.push_str(&format_record(&key, v));
                slot.insert(v.clone());
            }
        }
        if let Some(log) = &self.log {
            if !appended.is_empty() {
                let mut w = log.lock().expect("log lock");
                w.write_all(appended.as_bytes())?;
                w.flush()?;
            }
        }
        Ok(())
    }

    /// Rewrites the provider's log with one line per key, sorted by key.
    pub fn compact(dir: &Path, provider_id: &str) -> Result<CompactionStats, EmbeddingError> {
        let path = dir.join(log_file_name(provider_id));
        if !path.exists() {
            return Ok(CompactionStats {
                lines_before: 0,
                entries_after: 0,
            });
        }
        let records = read_log(&path, provider_id)?;
        let lines_before = records.len();
        let mut unique: BTreeMap<[u8; 32], EmbeddingVector> = BTreeMap::new();
        for (k, v) in records {
            unique.entry(k).or_insert(v);
        }
        let tmp = path.with_extension("log.tmp");
        {
            let mut w = BufWriter::new(File::create(&tmp)?);
            writeln!(w, "provider={provider_id}")?;
            for (k, v) in &unique {
                w.write_all(format_record(k, v).as_bytes())?;
            }
            w.flush()?;
        }
        fs::rename(&tmp, &path)?;
        Ok(CompactionStats {
            lines_before,
            entries_after: unique.len(),
        })
    }
}
