//! Run configuration: command-line flags over a TOML file over defaults.
//!
//! The TOML file uses the flag names as keys (`runs-dir = "runs"`). API
//! tokens are never read from either; see [`TOKEN_ENV`].

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use simeval_core::embedding::HashEmbedder;
use simeval_core::protocols::{CrossPipelineVariant, TargetMode};

use crate::error::CliError;

pub const TOKEN_ENV: &str = "SIMEVAL_API_TOKEN";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetChoice {
    /// Smallest passage id at the top tier.
    Smallest,
    /// Seeded random pick at the top tier (see --target-seed).
    Seeded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AggregateChoice {
    /// Mean over pipelines of the per-query top-1 similarity.
    Mean,
    /// Maximum over pipelines of the per-query top-1 similarity.
    Max,
}

/// Every setting, all optional so that layers can be merged.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct Opts {
    /// TOML file with default settings; flags take precedence.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// Passage collection (`pid<TAB>text`).
    #[arg(long)]
    pub collection: Option<PathBuf>,
    /// Query file (`qid<TAB>text`); defines the evaluated query set.
    #[arg(long)]
    pub queries: Option<PathBuf>,
    /// Graded judgments in TREC qrels format.
    #[arg(long)]
    pub qrels: Option<PathBuf>,
    /// Directory of TREC run files, one run tag per file.
    #[arg(long)]
    pub runs_dir: Option<PathBuf>,
    /// Directory of JSONL answer files.
    #[arg(long)]
    pub answers_dir: Option<PathBuf>,
    /// Optional `run_tag,ndcg@10` file overriding in-toolkit ndcg@10.
    #[arg(long)]
    pub official: Option<PathBuf>,
    /// Texts to embed, one per line (embed-cache).
    #[arg(long)]
    pub texts: Option<PathBuf>,
    /// Write a precomputed store of the embedded texts (embed-cache).
    #[arg(long)]
    pub export: Option<PathBuf>,
    /// Directory for reports (default `simeval-out`).
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Persistent embedding cache; in-memory only when unset.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Name recorded for the query set in reports.
    #[arg(long)]
    pub query_set: Option<String>,

    /// `test:hash`, `precomputed:<path>` or `remote:<model>`.
    #[arg(long)]
    pub provider: Option<String>,
    /// Vector dimension for `test:hash` and `remote:` providers.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Seed for `test:hash`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Embedding endpoint URL for `remote:` providers.
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Texts per provider request (default 100).
    #[arg(long)]
    pub max_batch_size: Option<usize>,
    /// Retries on transient provider errors (default 5).
    #[arg(long)]
    pub max_retries: Option<u32>,
    /// Per-request timeout in seconds (default 60).
    #[arg(long)]
    pub timeout_secs: Option<u64>,
    /// Upper bound on concurrent provider requests.
    #[arg(long)]
    pub parallelism: Option<usize>,

    #[arg(long, value_enum)]
    pub target_mode: Option<TargetChoice>,
    /// Seed for `--target-mode seeded` (default 0).
    #[arg(long)]
    pub target_seed: Option<u64>,
    #[arg(long, value_enum)]
    pub aggregate: Option<AggregateChoice>,
    /// Minimum grade counted as relevant for MRR@10.
    #[arg(long)]
    pub threshold: Option<u8>,

    /// Timestamp recorded in metadata; falls back to SOURCE_DATE_EPOCH.
    #[arg(long)]
    #[serde(skip)]
    pub timestamp: Option<String>,
}

macro_rules! merge_fields {
    ($hi:ident, $lo:ident, $($f:ident),*) => {
        Opts { $($f: $hi.$f.or($lo.$f)),* }
    };
}

impl Opts {
    /// `self` wins over `lower` field by field.
    pub fn over(self, lower: Opts) -> Opts {
        let hi = self;
        let lo = lower;
        merge_fields!(
            hi,
            lo,
            config,
            collection,
            queries,
            qrels,
            runs_dir,
            answers_dir,
            official,
            texts,
            export,
            output_dir,
            cache_dir,
            query_set,
            provider,
            dim,
            seed,
            endpoint,
            max_batch_size,
            max_retries,
            timeout_secs,
            parallelism,
            target_mode,
            target_seed,
            aggregate,
            threshold,
            timestamp
        )
    }

    /// Applies the config file named by `--config`, if any.
    pub fn with_config_file(self) -> Result<Opts, CliError> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        let file: Opts = toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        Ok(self.over(file))
    }

    pub fn resolve(self) -> Effective {
        Effective {
            collection: self.collection,
            queries: self.queries,
            qrels: self.qrels,
            runs_dir: self.runs_dir,
            answers_dir: self.answers_dir,
            official: self.official,
            texts: self.texts,
            export: self.export,
            output_dir: self
                .output_dir
                .unwrap_or_else(|| PathBuf::from("simeval-out")),
            cache_dir: self.cache_dir,
            query_set: self.query_set,
            provider: self.provider.unwrap_or_else(|| "test:hash".into()),
            dim: self.dim.unwrap_or(64),
            seed: self.seed.unwrap_or(HashEmbedder::DEFAULT_SEED),
            endpoint: self.endpoint,
            max_batch_size: self.max_batch_size.unwrap_or(100),
            max_retries: self.max_retries.unwrap_or(5),
            timeout_secs: self.timeout_secs.unwrap_or(60),
            parallelism: self.parallelism.unwrap_or(4),
            target_mode: self.target_mode.unwrap_or(TargetChoice::Smallest),
            target_seed: self.target_seed.unwrap_or(0),
            aggregate: self.aggregate.unwrap_or(AggregateChoice::Mean),
            threshold: self.threshold.unwrap_or(2),
            timestamp: self
                .timestamp
                .or_else(|| std::env::var("SOURCE_DATE_EPOCH").ok()),
        }
    }
}

/// Settings after defaults are applied. Serialized into report metadata.
#[derive(Debug, Clone, Serialize)]
pub struct Effective {
    pub collection: Option<PathBuf>,
    pub queries: Option<PathBuf>,
    pub qrels: Option<PathBuf>,
    pub runs_dir: Option<PathBuf>,
    pub answers_dir: Option<PathBuf>,
    pub official: Option<PathBuf>,
    pub texts: Option<PathBuf>,
    pub export: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub cache_dir: Option<PathBuf>,
    pub query_set: Option<String>,
    pub provider: String,
    pub dim: usize,
    pub seed: u64,
    pub endpoint: Option<String>,
    pub max_batch_size: usize,
    pub max_retries: u32,
    pub timeout_secs: u64,
    pub parallelism: usize,
    pub target_mode: TargetChoice,
    pub target_seed: u64,
    pub aggregate: AggregateChoice,
    pub threshold: u8,
    #[serde(skip)]
    pub timestamp: Option<String>,
}

impl Effective {
    pub fn target_mode(&self) -> TargetMode {
        match self.target_mode {
            TargetChoice::Smallest => TargetMode::Single,
            TargetChoice::Seeded => TargetMode::SingleSeeded(self.target_seed),
        }
    }

    pub fn variant(&self) -> CrossPipelineVariant {
        match self.aggregate {
            AggregateChoice::Mean => CrossPipelineVariant::MeanOverPipelines,
            AggregateChoice::Max => CrossPipelineVariant::MaxOverPipelines,
        }
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// Settings whose value differs from the default.
    pub fn non_default(&self) -> Vec<String> {
        let defaults = Opts::default().resolve().to_json();
        let ours = self.to_json();
        let (Value::Object(d), Value::Object(o)) = (defaults, ours) else {
            unreachable!("config serializes to an object")
        };
        o.iter()
            .filter(|(k, v)| d.get(*k) != Some(*v))
            .map(|(k, _)| k.clone())
            .collect()
    }

    /// Name for the query set: explicit, else the stem of the queries or
    /// qrels file.
    pub fn query_set_name(&self) -> String {
        self.query_set.clone().unwrap_or_else(|| {
            self.queries
                .as_deref()
                .or(self.qrels.as_deref())
                .and_then(Path::file_stem)
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "queries".into())
        })
    }
}

/// A path that must be given and must exist.
pub fn require<'a>(value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
    let path = value
        .as_deref()
        .ok_or_else(|| CliError::Usage(format!("--{flag} is required")))?;
    if !path.exists() {
        return Err(CliError::Usage(format!(
            "--{flag}: {} does not exist",
            path.display()
        )));
    }
    Ok(path)
}

pub fn optional<'a>(value: &'a Option<PathBuf>, flag: &str) -> Result<Option<&'a Path>, CliError> {
    match value {
        None => Ok(None),
        Some(_) => require(value, flag).map(Some),
    }
}
