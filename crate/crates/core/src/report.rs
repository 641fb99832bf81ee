//! CSV/JSON serialization of protocol outputs.
//!
//! CSV files are comma-separated with LF endings and a header row; floats
//! are printed with 6 significant digits (see [`fmt_float`]). JSON mirrors
//! keep full `f64` precision. Row order is fixed by explicit sort keys, so
//! identical inputs always give identical bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::benchmark_io::MAX_GRADE;
use crate::metrics::summarize_distribution;
use crate::protocols::{
    Correlation, CrossGradeResult, GradeConditionedScore, JudgmentFreeResult, Skip, SystemKind,
    SystemScore,
};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("nothing to report: {0}")]
    Empty(&'static str),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// `%g`-style formatting with 6 significant digits.
pub fn fmt_float(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    if (-4..6).contains(&exp) {
        let fixed = format!("{:.*}", (5 - exp) as usize, x);
        strip_zeros(&fixed).to_string()
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", strip_zeros(mantissa), exp.abs())
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn opt_float(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String, ReportError> {
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String, ReportError> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// One row per (query set, grade 0..=3); empty buckets get count 0 and
/// blank statistics.
pub fn emit_boxplot_csv(sets: &[(&str, &CrossGradeResult)]) -> Result<String, ReportError> {
    if sets
        .iter()
        .all(|(_, r)| r.buckets.values().all(Vec::is_empty))
    {
        return Err(ReportError::Empty("every grade bucket is empty"));
    }
    let mut sets: Vec<_> = sets.to_vec();
    sets.sort_by(|a, b| a.0.cmp(b.0));
    let mut w = csv_writer();
    w.write_record([
        "query_set",
        "grade",
        "count",
        "mean",
        "median",
        "q1",
        "q3",
        "min",
        "max",
    ])?;
    for (name, result) in sets {
        for g in 0..=MAX_GRADE {
            let values = result
                .buckets
                .get(&g)
                .map(Vec::as_slice)
                .unwrap_or_default();
            let mut row = vec![name.to_string(), g.to_string(), values.len().to_string()];
            match summarize_distribution(values) {
                Ok(s) => row.extend([s.mean, s.median, s.q1, s.q3, s.min, s.max].map(fmt_float)),
                Err(_) => row.extend(std::iter::repeat_n(String::new(), 6)),
            }
            w.write_record(&row)?;
        }
    }
    finish_csv(w)
}

/// Per-system, per-grade macro-averaged similarity.
pub fn emit_grade_conditioned_csv(scores: &[GradeConditionedScore]) -> Result<String, ReportError> {
    let mut scores: Vec<_> = scores.iter().collect();
    scores.sort_by(|a, b| a.system_id.cmp(&b.system_id));
    let mut w = csv_writer();
    w.write_record(["system_id", "grade", "mean", "queries"])?;
    for s in scores {
        for g in 0..=MAX_GRADE {
            let m = s.per_grade.get(&g);
            w.write_record([
                s.system_id.clone(),
                g.to_string(),
                opt_float(m.map(|m| m.mean)),
                m.map_or(0, |m| m.queries).to_string(),
            ])?;
        }
    }
    finish_csv(w)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Leaderboard {
    pub csv: String,
    pub json: String,
}

/// Rows sorted by similarity descending (systems with no covered query
/// last), ties by system id. The ndcg@10 column is left empty for
/// generated systems and for runs without an official value.
pub fn emit_leaderboard(
    scores: &[SystemScore],
    ndcg_at_10: &BTreeMap<String, f64>,
) -> Result<Leaderboard, ReportError> {
    if scores.is_empty() {
        return Err(ReportError::Empty("no systems"));
    }
    let mut rows: Vec<&SystemScore> = scores.iter().collect();
    rows.sort_by(|a, b| {
        let key = |s: &SystemScore| s.aggregate.unwrap_or(f64::NEG_INFINITY);
        key(b)
            .total_cmp(&key(a))
            .then_with(|| a.system_id.cmp(&b.system_id))
            .then_with(|| a.kind.to_string().cmp(&b.kind.to_string()))
    });
    let ndcg_for = |s: &SystemScore| match s.kind {
        SystemKind::Generated => None,
        SystemKind::Retrieved => ndcg_at_10.get(&s.system_id).copied(),
    };

    let mut w = csv_writer();
    w.write_record([
        "system_id",
        "kind",
        "similarity",
        "ndcg@10",
        "covered",
        "skipped",
    ])?;
    for s in &rows {
        w.write_record([
            s.system_id.clone(),
            s.kind.to_string(),
            opt_float(s.aggregate),
            opt_float(ndcg_for(s)),
            s.covered().to_string(),
            s.skipped.len().to_string(),
        ])?;
    }
    let json_rows: Vec<Value> = rows
        .iter()
        .map(|s| {
            json!({
                "system_id": s.system_id,
                "kind": s.kind,
                "similarity": s.aggregate,
                "ndcg@10": ndcg_for(s),
                "covered": s.covered(),
                "skipped": s.skipped.len(),
                "per_query": s.per_query,
                "skipped_queries": s.skipped,
                "notes": s.notes,
                "pairs": s.pairs,
            })
        })
        .collect();
    Ok(Leaderboard {
        csv: finish_csv(w)?,
        json: to_json(&json_rows)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scatter {
    pub csv: String,
    pub summary: String,
}

/// One row per run (sorted by tag) plus a `tau=… p=… n=…` summary line.
pub fn emit_scatter_and_tau(correlation: &Correlation) -> Result<Scatter, ReportError> {
    if correlation.pairs.is_empty() {
        return Err(ReportError::Empty("no (similarity, ndcg@10) pairs"));
    }
    let mut pairs: Vec<_> = correlation.pairs.iter().collect();
    pairs.sort_by(|a, b| a.run_tag.cmp(&b.run_tag));
    let mut w = csv_writer();
    w.write_record(["run_tag", "ndcg@10", "similarity"])?;
    for p in pairs {
        w.write_record([
            p.run_tag.clone(),
            fmt_float(p.ndcg_at_10),
            fmt_float(p.similarity),
        ])?;
    }
    let t = &correlation.tau;
    Ok(Scatter {
        csv: finish_csv(w)?,
        summary: format!(
            "kendall_tau_b={} p_value={} n={}\n",
            fmt_float(t.tau),
            fmt_float(t.p_value),
            t.n
        ),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub csv: String,
    pub coverage_csv: String,
}

/// Systems × (pipelines + cross-pipeline column) of aggregate similarities.
/// The cross-pipeline column is the mean over queries of the per-query
/// combined value, not the mean of the pipeline columns.
pub fn emit_judgment_free_matrix(result: &JudgmentFreeResult) -> Result<Matrix, ReportError> {
    if result.rows.is_empty() || result.pipelines.is_empty() {
        return Err(ReportError::Empty(
            "need at least one system and one pipeline",
        ));
    }
    let cross = result.variant.column_name();
    let mut rows: Vec<_> = result.rows.iter().collect();
    rows.sort_by(|a, b| a.system_id.cmp(&b.system_id));

    let mut header = vec!["system_id".to_string()];
    header.extend(result.pipelines.iter().cloned());
    header.push(cross.to_string());
    let mut w = csv_writer();
    w.write_record(&header)?;
    let mut cov = csv_writer();
    cov.write_record(["system_id", "column", "covered", "skipped"])?;
    for row in rows {
        let mut record = vec![row.system_id.clone()];
        let cells = result
            .pipelines
            .iter()
            .map(|p| (p.as_str(), &row.per_pipeline[p]))
            .chain(std::iter::once((cross, &row.cross_pipeline)));
        for (column, score) in cells {
            record.push(opt_float(score.aggregate));
            cov.write_record([
                row.system_id.clone(),
                column.to_string(),
                score.covered().to_string(),
                score.skipped.len().to_string(),
            ])?;
        }
        w.write_record(&record)?;
    }
    Ok(Matrix {
        csv: finish_csv(w)?,
        coverage_csv: finish_csv(cov)?,
    })
}

/// A skip tagged with where it happened.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct SkipRecord {
    pub section: String,
    pub system_id: String,
    pub skip: Skip,
}

impl SkipRecord {
    pub fn collect<'a>(
        section: &str,
        system_id: &str,
        skips: impl IntoIterator<Item = &'a Skip>,
    ) -> Vec<SkipRecord> {
        skips
            .into_iter()
            .map(|s| SkipRecord {
                section: section.to_string(),
                system_id: system_id.to_string(),
                skip: s.clone(),
            })
            .collect()
    }
}

pub fn emit_skips_csv(records: &[SkipRecord]) -> Result<String, ReportError> {
    let mut records = records.to_vec();
    records.sort();
    let mut w = csv_writer();
    w.write_record(["section", "system_id", "query_id", "reason"])?;
    for r in records {
        w.write_record([
            r.section,
            r.system_id,
            r.skip.query_id,
            r.skip.reason.to_string(),
        ])?;
    }
    finish_csv(w)
}

#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub command: String,
    pub provider_id: String,
    pub query_set: String,
    pub toolkit_version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
    /// Effective configuration.
    pub config: Value,
    /// Names of settings that differ from their defaults.
    pub non_default: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ManifestEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

/// Collects artifacts for an output directory and writes them together with
/// `metadata.json` and a `manifest.json` of SHA-256 hashes.
#[derive(Debug, Default)]
pub struct ReportSet {
    artifacts: BTreeMap<String, Vec<u8>>,
}

impl ReportSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, contents: impl Into<Vec<u8>>) {
        self.artifacts.insert(name.to_string(), contents.into());
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.artifacts.keys().map(String::as_str)
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.artifacts.get(name).map(Vec::as_slice)
    }

    pub fn manifest(&self) -> Vec<ManifestEntry> {
        self.artifacts
            .iter()
            .map(|(name, bytes)| ManifestEntry {
                name: name.clone(),
                sha256: hex::encode(Sha256::digest(bytes)),
                bytes: bytes.len(),
            })
            .collect()
    }

    /// Writes every artifact plus `metadata.json` and `manifest.json`;
    /// returns the paths written.
    pub fn write(mut self, dir: &Path, metadata: &Metadata) -> Result<Vec<PathBuf>, ReportError> {
        self.add("metadata.json", to_json(metadata)?);
        let manifest = to_json(&json!({ "artifacts": self.manifest() }))?;
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for (name, bytes) in &self.artifacts {
            let path = dir.join(name);
            fs::write(&path, bytes)?;
            written.push(path);
        }
        let path = dir.join("manifest.json");
        fs::write(&path, manifest)?;
        written.push(path);
        Ok(written)
    }
}
