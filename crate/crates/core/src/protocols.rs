//! Evaluation procedures over a benchmark and an embedder.
//!
//! - [`cross_grade_validation`]: similarity of one target qrel per query to
//!   every other judged passage, bucketed by grade.
//! - [`grade_conditioned_answer_similarity`]: mean similarity of each
//!   system's answers to judged passages of each grade.
//! - [`target_score_generated`] / [`target_score_retrieved`]: similarity to
//!   the top-tier qrels, putting generated answers and retrieval runs on one
//!   scale; [`correlate_with_official`] relates the run scores to nDCG@10.
//! - [`judgment_free_scores`]: similarity to the top-1 passage of each
//!   retrieval pipeline, with no judgments at all.
//!
//! Every per-query loop runs in sorted query-id order, so sums are
//! reproducible bit-for-bit. Empty answers score 0 and are never embedded.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::benchmark_io::{AnswerSet, Collection, Qrels, Run};
use crate::embedding::{cosine_similarity, Embedder, EmbeddingError, EmbeddingVector};
use crate::metrics::{
    kendall_tau_b, summarize_distribution, DistributionSummary, KendallTau, MetricError,
};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum SkipReason {
    NotInQrels,
    NoTopTierQrels,
    NotAnswered,
    MissingFromRun,
    MissingPassageText { passage_id: String },
    EmptyPassageText { passage_id: String },
    OnlyTargetRetrieved { target: String },
    NoScorableTarget,
    NoAnchors,
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SkipReason::NotInQrels => write!(f, "query has no judgments"),
            SkipReason::NoTopTierQrels => write!(f, "no judgment with grade >= 2"),
            SkipReason::NotAnswered => write!(f, "system did not answer"),
            SkipReason::MissingFromRun => write!(f, "query missing from run"),
            SkipReason::MissingPassageText { passage_id } => {
                write!(f, "passage {passage_id} missing from collection")
            }
            SkipReason::EmptyPassageText { passage_id } => {
                write!(f, "passage {passage_id} has empty text")
            }
            SkipReason::OnlyTargetRetrieved { target } => {
                write!(f, "run retrieved only target {target}")
            }
            SkipReason::NoScorableTarget => write!(f, "no target could be scored"),
            SkipReason::NoAnchors => write!(f, "no pipeline provided an anchor"),
        }
    }
}

impl Serialize for SkipReason {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Skip {
    pub query_id: String,
    pub reason: SkipReason,
}

impl Skip {
    fn new(query_id: &str, reason: SkipReason) -> Self {
        Skip {
            query_id: query_id.to_string(),
            reason,
        }
    }
}

/// The judged benchmark a protocol runs over.
///
/// `queries` is the evaluated query set; every per-system score accounts
/// for each of these queries as either covered or skipped.
#[derive(Debug, Clone, Copy)]
pub struct Benchmark<'a> {
    pub queries: &'a BTreeSet<String>,
    pub qrels: &'a Qrels,
    pub collection: &'a Collection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetMode {
    /// One target: the smallest passage id at the top tier.
    Single,
    /// One target drawn per query from the top tier with a seeded RNG.
    SingleSeeded(u64),
    /// Every passage at the top tier.
    AllTopTier,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TargetQrelSet {
    pub query_id: String,
    pub tier: u8,
    pub targets: Vec<String>,
}

/// Picks the anchor passages for one query: tier 3 if the query has any
/// grade-3 judgment, else tier 2; below that the query is skipped.
pub fn select_target_qrels(
    judgments: Option<&BTreeMap<String, u8>>,
    query_id: &str,
    mode: TargetMode,
) -> Result<TargetQrelSet, SkipReason> {
    let judgments = judgments.ok_or(SkipReason::NotInQrels)?;
    let tier = judgments
        .values()
        .copied()
        .filter(|&g| g >= 2)
        .max()
        .ok_or(SkipReason::NoTopTierQrels)?;
    // BTreeMap keys are sorted, so this is lexicographic order.
    let at_tier: Vec<String> = judgments
        .iter()
        .filter(|(_, &g)| g == tier)
        .map(|(p, _)| p.clone())
        .collect();
    let targets = match mode {
        TargetMode::AllTopTier => at_tier,
        TargetMode::Single => vec![at_tier[0].clone()],
        TargetMode::SingleSeeded(seed) => {
            let mut h = Sha256::new();
            h.update(seed.to_le_bytes());
            h.update(query_id.as_bytes());
            let mut rng = ChaCha8Rng::from_seed(h.finalize().into());
            vec![at_tier[rng.gen_range(0..at_tier.len())].clone()]
        }
    };
    Ok(TargetQrelSet {
        query_id: query_id.to_string(),
        tier,
        targets,
    })
}

pub type Targets = BTreeMap<String, Result<TargetQrelSet, SkipReason>>;

/// Targets for every query in the evaluated set.
pub fn select_all_targets(bench: &Benchmark<'_>, mode: TargetMode) -> Targets {
    bench
        .queries
        .iter()
        .map(|q| {
            (
                q.clone(),
                select_target_qrels(bench.qrels.for_query(q), q, mode),
            )
        })
        .collect()
}

/// Embeddings for a set of texts, keyed by trimmed text.
struct TextVectors {
    by_text: HashMap<String, EmbeddingVector>,
}

impl TextVectors {
    fn embed<'t>(
        embedder: &Embedder,
        texts: impl IntoIterator<Item = &'t str>,
    ) -> Result<Self, EmbeddingError> {
        let unique: BTreeSet<&str> = texts
            .into_iter()
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .collect();
        let unique: Vec<&str> = unique.into_iter().collect();
        let vectors = if unique.is_empty() {
            Vec::new()
        } else {
            embedder.embed_batch(&unique)?
        };
        Ok(TextVectors {
            by_text: unique
                .into_iter()
                .map(str::to_string)
                .zip(vectors)
                .collect(),
        })
    }

    /// Similarity of two texts; 0 when either is empty.
    fn sim(&self, a: &str, b: &str) -> Result<f64, EmbeddingError> {
        let (a, b) = (a.trim(), b.trim());
        if a.is_empty() || b.is_empty() {
            return Ok(0.0);
        }
        cosine_similarity(&self.by_text[a], &self.by_text[b])
    }
}

/// Passage text, or the reason it cannot be used.
fn passage_text<'c>(collection: &'c Collection, passage_id: &str) -> Result<&'c str, SkipReason> {
    match collection.get(passage_id) {
        None => Err(SkipReason::MissingPassageText {
            passage_id: passage_id.to_string(),
        }),
        Some(t) if t.trim().is_empty() => Err(SkipReason::EmptyPassageText {
            passage_id: passage_id.to_string(),
        }),
        Some(t) => Ok(t),
    }
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values
        .into_iter()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    Generated,
    Retrieved,
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SystemKind::Generated => "generated",
            SystemKind::Retrieved => "retrieved",
        })
    }
}

/// One anchor comparison behind a per-query score.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredPair {
    pub query_id: String,
    /// Target qrel or pipeline anchor passage.
    pub anchor_id: String,
    /// Retrieved passage compared to the anchor; `None` for a generated answer.
    pub compared_id: Option<String>,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemScore {
    pub system_id: String,
    pub kind: SystemKind,
    pub per_query: BTreeMap<String, f64>,
    /// Mean of `per_query`; `None` when no query was covered.
    pub aggregate: Option<f64>,
    pub skipped: Vec<Skip>,
    /// Issues inside covered queries (e.g. one of several targets unusable,
    /// empty answers scored as 0).
    pub notes: Vec<Skip>,
    pub pairs: Vec<ScoredPair>,
}

impl SystemScore {
    fn new(system_id: &str, kind: SystemKind) -> Self {
        SystemScore {
            system_id: system_id.to_string(),
            kind,
            per_query: BTreeMap::new(),
            aggregate: None,
            skipped: Vec::new(),
            notes: Vec::new(),
            pairs: Vec::new(),
        }
    }

    fn finish(mut self) -> Self {
        self.aggregate = mean(self.per_query.values().copied());
        self
    }

    pub fn covered(&self) -> usize {
        self.per_query.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossGradeResult {
    /// Similarities to the target, pooled across queries; keys 0..=3.
    pub buckets: BTreeMap<u8, Vec<f64>>,
    pub targets: BTreeMap<String, String>,
    pub skipped: Vec<Skip>,
    /// Judged passages left out because their text is unavailable.
    pub missing_passages: Vec<Skip>,
}

impl CrossGradeResult {
    /// Summary per grade; `None` for an empty bucket.
    pub fn summaries(&self) -> BTreeMap<u8, Option<DistributionSummary>> {
        self.buckets
            .iter()
            .map(|(&g, v)| (g, summarize_distribution(v).ok()))
            .collect()
    }
}

/// Similarity of one target qrel per query to each other judged passage,
/// bucketed by that passage's grade. The target is excluded from its own
/// bucket.
pub fn cross_grade_validation(
    bench: &Benchmark<'_>,
    embedder: &Embedder,
    mode: TargetMode,
) -> Result<CrossGradeResult, ProtocolError> {
    let mode = match mode {
        TargetMode::AllTopTier => TargetMode::Single,
        m => m,
    };
    let mut result = CrossGradeResult {
        buckets: (0..=crate::benchmark_io::MAX_GRADE)
            .map(|g| (g, Vec::new()))
            .collect(),
        targets: BTreeMap::new(),
        skipped: Vec::new(),
        missing_passages: Vec::new(),
    };
    // (target text, [(grade, passage text)]) per query
    let mut work: Vec<(&str, Vec<(u8, &str)>)> = Vec::new();
    for q in bench.queries {
        let target = match select_target_qrels(bench.qrels.for_query(q), q, mode) {
            Ok(t) => t.targets[0].clone(),
            Err(reason) => {
                result.skipped.push(Skip::new(q, reason));
                continue;
            }
        };
        let target_text = match passage_text(bench.collection, &target) {
            Ok(t) => t,
            Err(reason) => {
                result.skipped.push(Skip::new(q, reason));
                continue;
            }
        };
        let mut others = Vec::new();
        for (p, &g) in bench.qrels.for_query(q).into_iter().flatten() {
            if *p == target {
                continue;
            }
            match passage_text(bench.collection, p) {
                Ok(t) => others.push((g, t)),
                Err(reason) => result.missing_passages.push(Skip::new(q, reason)),
            }
        }
        result.targets.insert(q.clone(), target);
        work.push((target_text, others));
    }

    let vectors = TextVectors::embed(
        embedder,
        work.iter()
            .flat_map(|(t, others)| std::iter::once(*t).chain(others.iter().map(|(_, p)| *p))),
    )?;
    for (target_text, others) in &work {
        for (g, p) in others {
            let s = vectors.sim(target_text, p)?;
            result.buckets.get_mut(g).expect("grade bucket").push(s);
        }
    }
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradeMean {
    pub mean: f64,
    /// Queries contributing to the mean.
    pub queries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradeConditionedScore {
    pub system_id: String,
    /// Macro-average over queries of the per-query mean at each grade.
    pub per_grade: BTreeMap<u8, GradeMean>,
    pub per_query: BTreeMap<String, BTreeMap<u8, f64>>,
    pub skipped: Vec<Skip>,
    pub notes: Vec<Skip>,
}

/// Mean similarity of each system's answers to the judged passages at each
/// grade. Per-query means are taken first, then averaged over the queries
/// that have judgments at that grade.
pub fn grade_conditioned_answer_similarity(
    answers: &AnswerSet,
    bench: &Benchmark<'_>,
    embedder: &Embedder,
) -> Result<Vec<GradeConditionedScore>, ProtocolError> {
    let mut texts: Vec<&str> = Vec::new();
    for system in answers.systems() {
        texts.extend(
            answers
                .answers(system)
                .into_iter()
                .flat_map(|m| m.values().map(String::as_str)),
        );
    }
    for q in bench.queries {
        for p in bench.qrels.for_query(q).into_iter().flat_map(|m| m.keys()) {
            if let Ok(t) = passage_text(bench.collection, p) {
                texts.push(t);
            }
        }
    }
    let vectors = TextVectors::embed(embedder, texts)?;

    let mut out = Vec::new();
    for system in answers.systems() {
        let mut score = GradeConditionedScore {
            system_id: system.to_string(),
            per_grade: BTreeMap::new(),
            per_query: BTreeMap::new(),
            skipped: Vec::new(),
            notes: Vec::new(),
        };
        for q in bench.queries {
            let Some(judgments) = bench.qrels.for_query(q) else {
                score.skipped.push(Skip::new(q, SkipReason::NotInQrels));
                continue;
            };
            let Some(answer) = answers.answer(system, q) else {
                score.skipped.push(Skip::new(q, SkipReason::NotAnswered));
                continue;
            };
            let mut by_grade: BTreeMap<u8, Vec<f64>> = BTreeMap::new();
            for (p, &g) in judgments {
                match passage_text(bench.collection, p) {
                    Ok(t) => by_grade.entry(g).or_default().push(vectors.sim(answer, t)?),
                    Err(reason) => score.notes.push(Skip::new(q, reason)),
                }
            }
            let means: BTreeMap<u8, f64> = by_grade
                .into_iter()
                .filter_map(|(g, v)| mean(v).map(|m| (g, m)))
                .collect();
            score.per_query.insert(q.clone(), means);
        }
        for g in 0..=crate::benchmark_io::MAX_GRADE {
            let vals: Vec<f64> = score
                .per_query
                .values()
                .filter_map(|m| m.get(&g).copied())
                .collect();
            if let Some(m) = mean(vals.iter().copied()) {
                score.per_grade.insert(
                    g,
                    GradeMean {
                        mean: m,
                        queries: vals.len(),
                    },
                );
            }
        }
        out.push(score);
    }
    Ok(out)
}

fn target_texts<'a>(
    targets: &'a Targets,
    collection: &'a Collection,
) -> impl Iterator<Item = &'a str> {
    targets
        .values()
        .filter_map(|t| t.as_ref().ok())
        .flat_map(|t| t.targets.iter())
        .filter_map(|p| passage_text(collection, p).ok())
}

/// Per query: mean similarity of the answer to each target qrel.
///
/// A perfect score requires the answer to reproduce the target text.
pub fn target_score_generated(
    system_id: &str,
    answers: Option<&BTreeMap<String, String>>,
    targets: &Targets,
    collection: &Collection,
    embedder: &Embedder,
) -> Result<SystemScore, ProtocolError> {
    let texts = answers
        .into_iter()
        .flat_map(|m| m.values().map(String::as_str))
        .chain(target_texts(targets, collection));
    let vectors = TextVectors::embed(embedder, texts)?;

    let mut score = SystemScore::new(system_id, SystemKind::Generated);
    for (q, target_set) in targets {
        let target_set = match target_set {
            Ok(t) => t,
            Err(reason) => {
                score.skipped.push(Skip::new(q, reason.clone()));
                continue;
            }
        };
        let Some(answer) = answers.and_then(|m| m.get(q)) else {
            score.skipped.push(Skip::new(q, SkipReason::NotAnswered));
            continue;
        };
        if answer.trim().is_empty() {
            score.notes.push(Skip::new(q, SkipReason::NotAnswered));
        }
        let mut sims = Vec::new();
        for t in &target_set.targets {
            match passage_text(collection, t) {
                Ok(text) => {
                    let s = vectors.sim(answer, text)?;
                    sims.push(s);
                    score.pairs.push(ScoredPair {
                        query_id: q.clone(),
                        anchor_id: t.clone(),
                        compared_id: None,
                        similarity: s,
                    });
                }
                Err(reason) => score.notes.push(Skip::new(q, reason)),
            }
        }
        match mean(sims) {
            Some(m) => {
                score.per_query.insert(q.clone(), m);
            }
            None => score
                .skipped
                .push(Skip::new(q, SkipReason::NoScorableTarget)),
        }
    }
    Ok(score.finish())
}

/// Per query and target: similarity of the target to the first retrieved
/// passage whose id differs from the target's. Other relevant passages are
/// not excluded; only the identical id is.
pub fn target_score_retrieved(
    run: &Run,
    targets: &Targets,
    collection: &Collection,
    embedder: &Embedder,
) -> Result<SystemScore, ProtocolError> {
    let mut score = SystemScore::new(run.tag(), SystemKind::Retrieved);
    // (query, target id, target text, compared id, compared text)
    let mut plan: BTreeMap<&str, Vec<(&str, &str, &str, &str)>> = BTreeMap::new();
    for (q, target_set) in targets {
        let target_set = match target_set {
            Ok(t) => t,
            Err(reason) => {
                score.skipped.push(Skip::new(q, reason.clone()));
                continue;
            }
        };
        let Some(ranking) = run.ranking(q) else {
            score.skipped.push(Skip::new(q, SkipReason::MissingFromRun));
            continue;
        };
        let mut items = Vec::new();
        for t in &target_set.targets {
            let Some(first) = ranking.iter().find(|p| p.passage_id != *t) else {
                score.notes.push(Skip::new(
                    q,
                    SkipReason::OnlyTargetRetrieved { target: t.clone() },
                ));
                continue;
            };
            let texts = passage_text(collection, t)
                .and_then(|tt| passage_text(collection, &first.passage_id).map(|ct| (tt, ct)));
            match texts {
                Ok((tt, ct)) => items.push((t.as_str(), tt, first.passage_id.as_str(), ct)),
                Err(reason) => score.notes.push(Skip::new(q, reason)),
            }
        }
        if items.is_empty() {
            score
                .skipped
                .push(Skip::new(q, SkipReason::NoScorableTarget));
        } else {
            plan.insert(q, items);
        }
    }

    let vectors = TextVectors::embed(
        embedder,
        plan.values()
            .flatten()
            .flat_map(|(_, tt, _, ct)| [*tt, *ct]),
    )?;
    for (q, items) in plan {
        let mut sims = Vec::with_capacity(items.len());
        for (t, tt, c, ct) in items {
            debug_assert_ne!(t, c);
            let s = vectors.sim(tt, ct)?;
            sims.push(s);
            score.pairs.push(ScoredPair {
                query_id: q.to_string(),
                anchor_id: t.to_string(),
                compared_id: Some(c.to_string()),
                similarity: s,
            });
        }
        score
            .per_query
            .insert(q.to_string(), mean(sims).expect("non-empty plan"));
    }
    score.skipped.sort();
    Ok(score.finish())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossPipelineVariant {
    /// Mean over pipelines of the similarity to each top-1 passage.
    MeanOverPipelines,
    /// Similarity to the best-matching top-1 passage among pipelines.
    MaxOverPipelines,
}

impl CrossPipelineVariant {
    pub fn column_name(self) -> &'static str {
        match self {
            CrossPipelineVariant::MeanOverPipelines => "cross_pipeline_mean",
            CrossPipelineVariant::MaxOverPipelines => "cross_pipeline_max",
        }
    }
}

/// Top-1 passage id and text, or why the pipeline has none.
type Anchor<'a> = Result<(&'a str, &'a str), SkipReason>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JudgmentFreeRow {
    pub system_id: String,
    pub per_pipeline: BTreeMap<String, SystemScore>,
    pub cross_pipeline: SystemScore,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JudgmentFreeResult {
    pub variant: CrossPipelineVariant,
    pub pipelines: Vec<String>,
    pub rows: Vec<JudgmentFreeRow>,
}

/// Scores every system against the top-1 passage of every pipeline, plus a
/// cross-pipeline score per query that combines the available pipelines.
pub fn judgment_free_scores(
    answers: &AnswerSet,
    runs: &[Run],
    queries: &BTreeSet<String>,
    collection: &Collection,
    embedder: &Embedder,
    variant: CrossPipelineVariant,
) -> Result<JudgmentFreeResult, ProtocolError> {
    let mut runs: Vec<&Run> = runs.iter().collect();
    runs.sort_by(|a, b| a.tag().cmp(b.tag()));

    let mut anchors: BTreeMap<(&str, &str), Anchor<'_>> = BTreeMap::new();
    for run in &runs {
        for q in queries {
            let anchor = match run.ranking(q).and_then(|r| r.first()) {
                None => Err(SkipReason::MissingFromRun),
                Some(top) => {
                    passage_text(collection, &top.passage_id).map(|t| (top.passage_id.as_str(), t))
                }
            };
            anchors.insert((run.tag(), q.as_str()), anchor);
        }
    }

    let texts = answers
        .systems()
        .flat_map(|s| {
            answers
                .answers(s)
                .into_iter()
                .flat_map(|m| m.values().map(String::as_str))
        })
        .chain(
            anchors
                .values()
                .filter_map(|a| a.as_ref().ok().map(|(_, t)| *t)),
        );
    let vectors = TextVectors::embed(embedder, texts)?;

    let mut rows = Vec::new();
    for system in answers.systems() {
        let mut per_pipeline: BTreeMap<String, SystemScore> = runs
            .iter()
            .map(|r| {
                (
                    r.tag().to_string(),
                    SystemScore::new(system, SystemKind::Generated),
                )
            })
            .collect();
        let mut cross = SystemScore::new(system, SystemKind::Generated);
        for q in queries {
            let Some(answer) = answers.answer(system, q) else {
                for s in per_pipeline.values_mut() {
                    s.skipped.push(Skip::new(q, SkipReason::NotAnswered));
                }
                cross.skipped.push(Skip::new(q, SkipReason::NotAnswered));
                continue;
            };
            let mut cell_values = Vec::new();
            for run in &runs {
                let cell = per_pipeline.get_mut(run.tag()).expect("pipeline row");
                match &anchors[&(run.tag(), q.as_str())] {
                    Ok((pid, text)) => {
                        let s = vectors.sim(answer, text)?;
                        cell.per_query.insert(q.clone(), s);
                        cell.pairs.push(ScoredPair {
                            query_id: q.clone(),
                            anchor_id: pid.to_string(),
                            compared_id: None,
                            similarity: s,
                        });
                        cell_values.push(s);
                    }
                    Err(reason) => cell.skipped.push(Skip::new(q, reason.clone())),
                }
            }
            let combined = match variant {
                CrossPipelineVariant::MeanOverPipelines => mean(cell_values),
                CrossPipelineVariant::MaxOverPipelines => cell_values.into_iter().reduce(f64::max),
            };
            match combined {
                Some(v) => {
                    cross.per_query.insert(q.clone(), v);
                }
                None => cross.skipped.push(Skip::new(q, SkipReason::NoAnchors)),
            }
        }
        rows.push(JudgmentFreeRow {
            system_id: system.to_string(),
            per_pipeline: per_pipeline
                .into_iter()
                .map(|(k, v)| (k, v.finish()))
                .collect(),
            cross_pipeline: cross.finish(),
        });
    }
    Ok(JudgmentFreeResult {
        variant,
        pipelines: runs.iter().map(|r| r.tag().to_string()).collect(),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScatterPair {
    pub run_tag: String,
    pub ndcg_at_10: f64,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Correlation {
    pub pairs: Vec<ScatterPair>,
    pub tau: KendallTau,
}

/// Kendall's tau-b between run similarity aggregates and official nDCG@10.
/// Runs lacking either value are left out of the pairing.
pub fn correlate_with_official(
    retrieved: &[SystemScore],
    official_ndcg: &BTreeMap<String, f64>,
) -> Result<Correlation, MetricError> {
    let mut pairs: Vec<ScatterPair> = retrieved
        .iter()
        .filter(|s| s.kind == SystemKind::Retrieved)
        .filter_map(|s| {
            let sim = s.aggregate?;
            let ndcg = *official_ndcg.get(&s.system_id)?;
            Some(ScatterPair {
                run_tag: s.system_id.clone(),
                ndcg_at_10: ndcg,
                similarity: sim,
            })
        })
        .collect();
    pairs.sort_by(|a, b| a.run_tag.cmp(&b.run_tag));
    if pairs.len() < 2 {
        return Err(MetricError::Undefined(format!(
            "{} complete (similarity, ndcg@10) pairs; need 2",
            pairs.len()
        )));
    }
    let sims: Vec<f64> = pairs.iter().map(|p| p.similarity).collect();
    let ndcg: Vec<f64> = pairs.iter().map(|p| p.ndcg_at_10).collect();
    let tau = kendall_tau_b(&sims, &ndcg)?;
    Ok(Correlation { pairs, tau })
}
