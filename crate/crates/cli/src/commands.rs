use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Duration;

use simeval_core::benchmark_io::{
    parse_answers, parse_collection, parse_qrels, parse_queries, parse_run, AnswerRecord,
    AnswerSet, Collection, Qrels, Run,
};
use simeval_core::embedding::{
    Embedder, EmbeddingCache, EmbeddingProvider, HashEmbedder, HttpTransport, PrecomputedStore,
    RemoteConfig, RemoteEmbedder,
};
use simeval_core::metrics::{mean_mrr_at_k, mean_ndcg_at_k};
use simeval_core::protocols::{
    correlate_with_official, cross_grade_validation, grade_conditioned_answer_similarity,
    judgment_free_scores, select_all_targets, target_score_generated, target_score_retrieved,
    Benchmark, SystemScore, TargetMode,
};
use simeval_core::report::{
    emit_boxplot_csv, emit_grade_conditioned_csv, emit_judgment_free_matrix, emit_leaderboard,
    emit_scatter_and_tau, emit_skips_csv, fmt_float, Metadata, ReportSet, SkipRecord,
};
use tracing::{info, warn};

use crate::config::{optional, require, Effective, TOKEN_ENV};
use crate::error::CliError;

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::data_in(path, e))
}

fn load_qrels(path: &Path) -> Result<Qrels, CliError> {
    let entries = parse_qrels(open(path)?).map_err(|e| CliError::data_in(path, e))?;
    Ok(Qrels::from_entries(&entries))
}

fn load_collection(path: &Path) -> Result<Collection, CliError> {
    parse_collection(open(path)?).map_err(|e| CliError::data_in(path, e))
}

fn load_query_ids(path: &Path) -> Result<BTreeSet<String>, CliError> {
    let queries = parse_queries(open(path)?).map_err(|e| CliError::data_in(path, e))?;
    Ok(queries.into_iter().map(|q| q.query_id).collect())
}

/// Regular, non-hidden files in `dir`, sorted by name.
fn dir_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| CliError::data_in(dir, e))? {
        let path = entry.map_err(|e| CliError::data_in(dir, e))?.path();
        let hidden = path
            .file_name()
            .is_some_and(|n| n.to_string_lossy().starts_with('.'));
        if path.is_file() && !hidden {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn load_runs(dir: &Path) -> Result<Vec<Run>, CliError> {
    let mut runs: Vec<Run> = Vec::new();
    for path in dir_files(dir)? {
        let entries = parse_run(open(&path)?).map_err(|e| CliError::data_in(&path, e))?;
        let (run, warnings) =
            Run::from_entries(&entries).map_err(|e| CliError::data_in(&path, e))?;
        for w in warnings {
            warn!("{}: {w:?}", path.display());
        }
        if runs.iter().any(|r| r.tag() == run.tag()) {
            return Err(CliError::data_in(
                &path,
                format!("run tag {} used twice", run.tag()),
            ));
        }
        runs.push(run);
    }
    if runs.is_empty() {
        return Err(CliError::Data(format!("{}: no run files", dir.display())));
    }
    runs.sort_by(|a, b| a.tag().cmp(b.tag()));
    Ok(runs)
}

fn load_answers(dir: &Path) -> Result<AnswerSet, CliError> {
    let mut records: Vec<AnswerRecord> = Vec::new();
    for path in dir_files(dir)? {
        records.extend(parse_answers(open(&path)?).map_err(|e| CliError::data_in(&path, e))?);
    }
    AnswerSet::from_records(&records).map_err(|(q, s)| {
        CliError::Data(format!(
            "{}: system {s} answers query {q} twice",
            dir.display()
        ))
    })
}

fn load_official(path: &Path) -> Result<BTreeMap<String, f64>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::data_in(path, e))?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (tag, value) = line.split_once(',').ok_or_else(|| {
            CliError::data_in(path, format!("line {}: expected run_tag,ndcg@10", i + 1))
        })?;
        match value.trim().parse::<f64>() {
            Ok(v) => {
                out.insert(tag.trim().to_string(), v);
            }
            Err(_) if i == 0 => {} // header
            Err(e) => return Err(CliError::data_in(path, format!("line {}: {e}", i + 1))),
        }
    }
    Ok(out)
}

fn build_provider(cfg: &Effective) -> Result<Box<dyn EmbeddingProvider>, CliError> {
    let p = cfg.provider.as_str();
    if p == "test:hash" {
        if cfg.dim == 0 {
            return Err(CliError::Usage("--dim must be positive".into()));
        }
        return Ok(Box::new(HashEmbedder::with_seed(cfg.dim, cfg.seed)));
    }
    if let Some(path) = p.strip_prefix("precomputed:") {
        let path = Path::new(path);
        if !path.exists() {
            return Err(CliError::Usage(format!(
                "--provider: {} does not exist",
                path.display()
            )));
        }
        return Ok(Box::new(PrecomputedStore::load(path)?));
    }
    if let Some(model) = p.strip_prefix("remote:") {
        let endpoint = cfg
            .endpoint
            .clone()
            .ok_or_else(|| CliError::Usage("--endpoint is required for remote providers".into()))?;
        let mut rc = RemoteConfig::new(endpoint, model, cfg.dim);
        rc.max_batch_size = cfg.max_batch_size;
        rc.max_retries = cfg.max_retries;
        rc.timeout = Duration::from_secs(cfg.timeout_secs);
        rc.parallelism = cfg.parallelism;
        let token = std::env::var(TOKEN_ENV).ok();
        let transport = HttpTransport::new(&rc, token.as_deref())?;
        return Ok(Box::new(RemoteEmbedder::new(rc, transport)));
    }
    Err(CliError::Usage(format!(
        "unknown provider `{p}`; expected test:hash, precomputed:<path> or remote:<model>"
    )))
}

fn build_embedder(cfg: &Effective) -> Result<Embedder, CliError> {
    let provider = build_provider(cfg)?;
    let id = provider.descriptor().provider_id.clone();
    let cache = match &cfg.cache_dir {
        Some(dir) => EmbeddingCache::open(dir, &id)?,
        None => EmbeddingCache::in_memory(&id),
    };
    Ok(Embedder::new(provider, cache))
}

fn report_stats(embedder: &Embedder) {
    let s = embedder.stats();
    eprintln!(
        "provider={} provider_calls={} texts_embedded={} cache_hits={}",
        embedder.descriptor().provider_id,
        s.provider_calls,
        s.texts_embedded,
        s.cache_hits
    );
}

fn metadata(command: &str, cfg: &Effective, embedder: &Embedder) -> Metadata {
    Metadata {
        command: command.to_string(),
        provider_id: embedder.descriptor().provider_id.clone(),
        query_set: cfg.query_set_name(),
        toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
        timestamp: cfg.timestamp.clone(),
        config: cfg.to_json(),
        non_default: cfg.non_default(),
    }
}

fn write_reports(
    set: ReportSet,
    command: &str,
    cfg: &Effective,
    embedder: &Embedder,
) -> Result<(), CliError> {
    let written = set.write(&cfg.output_dir, &metadata(command, cfg, embedder))?;
    info!(
        "wrote {} files to {}",
        written.len(),
        cfg.output_dir.display()
    );
    report_stats(embedder);
    Ok(())
}

fn to_json(value: &impl serde::Serialize) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn validate_grades(cfg: &Effective) -> Result<(), CliError> {
    let qrels_path = require(&cfg.qrels, "qrels")?;
    let collection_path = require(&cfg.collection, "collection")?;
    let queries_path = optional(&cfg.queries, "queries")?;

    let qrels = load_qrels(qrels_path)?;
    let collection = load_collection(collection_path)?;
    let queries = match queries_path {
        Some(p) => load_query_ids(p)?,
        None => qrels.query_ids().map(str::to_string).collect(),
    };
    let embedder = build_embedder(cfg)?;

    let bench = Benchmark {
        queries: &queries,
        qrels: &qrels,
        collection: &collection,
    };
    let result = cross_grade_validation(&bench, &embedder, cfg.target_mode())?;
    let name = cfg.query_set_name();

    let mut set = ReportSet::new();
    set.add("boxplot.csv", emit_boxplot_csv(&[(&name, &result)])?);
    set.add("cross_grade.json", to_json(&result)?);
    let mut skips = SkipRecord::collect("cross_grade", "", &result.skipped);
    skips.extend(SkipRecord::collect(
        "cross_grade_missing_passage",
        "",
        &result.missing_passages,
    ));
    set.add("skips.csv", emit_skips_csv(&skips)?);
    write_reports(set, "validate-grades", cfg, &embedder)
}

pub fn eval_with_qrels(cfg: &Effective) -> Result<(), CliError> {
    let qrels_path = require(&cfg.qrels, "qrels")?;
    let collection_path = require(&cfg.collection, "collection")?;
    let queries_path = optional(&cfg.queries, "queries")?;
    let runs_dir = optional(&cfg.runs_dir, "runs-dir")?;
    let answers_dir = optional(&cfg.answers_dir, "answers-dir")?;
    let official_path = optional(&cfg.official, "official")?;
    if runs_dir.is_none() && answers_dir.is_none() {
        return Err(CliError::Usage(
            "give --runs-dir, --answers-dir, or both".into(),
        ));
    }

    let qrels = load_qrels(qrels_path)?;
    let collection = load_collection(collection_path)?;
    let queries = match queries_path {
        Some(p) => load_query_ids(p)?,
        None => qrels.query_ids().map(str::to_string).collect(),
    };
    let runs = runs_dir.map(load_runs).transpose()?.unwrap_or_default();
    let answers = answers_dir
        .map(load_answers)
        .transpose()?
        .unwrap_or_default();
    let official = official_path.map(load_official).transpose()?;
    let embedder = build_embedder(cfg)?;

    let bench = Benchmark {
        queries: &queries,
        qrels: &qrels,
        collection: &collection,
    };
    let targets = select_all_targets(&bench, TargetMode::AllTopTier);
    let mut set = ReportSet::new();
    let mut skips = Vec::new();
    let mut scores: Vec<SystemScore> = Vec::new();

    if !answers.is_empty() {
        let conditioned = grade_conditioned_answer_similarity(&answers, &bench, &embedder)?;
        for c in &conditioned {
            skips.extend(SkipRecord::collect(
                "grade_conditioned",
                &c.system_id,
                &c.skipped,
            ));
        }
        set.add(
            "grade_conditioned.csv",
            emit_grade_conditioned_csv(&conditioned)?,
        );
        set.add("grade_conditioned.json", to_json(&conditioned)?);
        for system in answers.systems() {
            let s = target_score_generated(
                system,
                answers.answers(system),
                &targets,
                &collection,
                &embedder,
            )?;
            skips.extend(SkipRecord::collect("target_generated", system, &s.skipped));
            scores.push(s);
        }
    }

    let mut ndcg = BTreeMap::new();
    if !runs.is_empty() {
        let mut metrics_csv = String::from("run_tag,ndcg@10,mrr@10\n");
        for run in &runs {
            let s = target_score_retrieved(run, &targets, &collection, &embedder)?;
            skips.extend(SkipRecord::collect(
                "target_retrieved",
                run.tag(),
                &s.skipped,
            ));
            scores.push(s);
            let n = mean_ndcg_at_k(run, &qrels, 10)?;
            let m = mean_mrr_at_k(run, &qrels, 10, cfg.threshold);
            let fmt = |x: Option<f64>| x.map(fmt_float).unwrap_or_default();
            metrics_csv.push_str(&format!("{},{},{}\n", run.tag(), fmt(n.mean), fmt(m.mean)));
            if let Some(v) = n.mean {
                ndcg.insert(run.tag().to_string(), v);
            }
        }
        set.add("run_metrics.csv", metrics_csv);
    }
    if let Some(official) = official {
        ndcg = official;
    }

    let leaderboard = emit_leaderboard(&scores, &ndcg)?;
    set.add("leaderboard.csv", leaderboard.csv);
    set.add("leaderboard.json", leaderboard.json);

    match correlate_with_official(&scores, &ndcg) {
        Ok(correlation) => {
            let scatter = emit_scatter_and_tau(&correlation)?;
            print!("{}", scatter.summary);
            set.add("scatter.csv", scatter.csv);
            set.add("correlation.txt", scatter.summary);
        }
        Err(e) => warn!("no correlation: {e}"),
    }
    set.add("skips.csv", emit_skips_csv(&skips)?);
    write_reports(set, "eval-with-qrels", cfg, &embedder)
}

pub fn eval_no_qrels(cfg: &Effective) -> Result<(), CliError> {
    let collection_path = require(&cfg.collection, "collection")?;
    let runs_dir = require(&cfg.runs_dir, "runs-dir")?;
    let answers_dir = require(&cfg.answers_dir, "answers-dir")?;
    let queries_path = optional(&cfg.queries, "queries")?;

    let collection = load_collection(collection_path)?;
    let runs = load_runs(runs_dir)?;
    let answers = load_answers(answers_dir)?;
    if answers.is_empty() {
        return Err(CliError::Data(format!(
            "{}: no answers",
            answers_dir.display()
        )));
    }
    let queries: BTreeSet<String> = match queries_path {
        Some(p) => load_query_ids(p)?,
        None => answers
            .systems()
            .flat_map(|s| {
                answers
                    .answers(s)
                    .into_iter()
                    .flat_map(|m| m.keys().cloned())
            })
            .collect(),
    };
    let embedder = build_embedder(cfg)?;

    let result = judgment_free_scores(
        &answers,
        &runs,
        &queries,
        &collection,
        &embedder,
        cfg.variant(),
    )?;
    let matrix = emit_judgment_free_matrix(&result)?;
    let mut skips = Vec::new();
    for row in &result.rows {
        for (pipeline, score) in &row.per_pipeline {
            skips.extend(SkipRecord::collect(
                pipeline,
                &row.system_id,
                &score.skipped,
            ));
        }
        skips.extend(SkipRecord::collect(
            result.variant.column_name(),
            &row.system_id,
            &row.cross_pipeline.skipped,
        ));
    }
    let mut set = ReportSet::new();
    set.add("judgment_free_matrix.csv", matrix.csv);
    set.add("judgment_free_coverage.csv", matrix.coverage_csv);
    set.add("judgment_free.json", to_json(&result)?);
    set.add("skips.csv", emit_skips_csv(&skips)?);
    write_reports(set, "eval-no-qrels", cfg, &embedder)
}

pub fn embed_cache(cfg: &Effective) -> Result<(), CliError> {
    let texts_path = require(&cfg.texts, "texts")?;
    if cfg.cache_dir.is_none() && cfg.export.is_none() {
        return Err(CliError::Usage(
            "give --cache-dir, --export, or both".into(),
        ));
    }
    let text = fs::read_to_string(texts_path).map_err(|e| CliError::data_in(texts_path, e))?;
    let texts: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let embedder = build_embedder(cfg)?;
    let vectors = embedder.embed_batch(&texts)?;
    if let Some(path) = &cfg.export {
        let mut store = PrecomputedStore::new("precomputed:export", embedder.descriptor().dim);
        for (t, v) in texts.iter().zip(&vectors) {
            store.insert_text(t, v.values().to_vec())?;
        }
        store.save(path).map_err(|e| CliError::data_in(path, e))?;
        info!("exported {} vectors to {}", store.len(), path.display());
    }
    report_stats(&embedder);
    Ok(())
}
