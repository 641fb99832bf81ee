//! Readers and writers for benchmark artifacts.
//!
//! Supported inputs:
//! - TREC qrels: `query_id <ignored> passage_id grade`
//! - TREC runs: `query_id Q0 passage_id rank score run_tag`
//! - collections and query sets: `id<TAB>text`
//! - answers: one JSON object per line with `query_id`, `system_id`, `answer_text`
//!
//! Whitespace-separated formats accept any run of spaces or tabs between
//! fields. Every input must be valid UTF-8.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: invalid UTF-8")]
    InvalidUtf8 { line: usize },
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: missing field `{field}`")]
    MissingField { line: usize, field: &'static str },
    #[error("line {line}: duplicate {what}")]
    Duplicate { line: usize, what: String },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ValidationError {
    #[error("query {query_id}: rank {rank} appears more than once")]
    DuplicateRank { query_id: String, rank: u32 },
    #[error(
        "query {query_id}: ranks are not contiguous from 1 (expected {expected}, found {found})"
    )]
    RankGap {
        query_id: String,
        expected: u32,
        found: u32,
    },
    #[error("query {query_id}: passage {passage_id} retrieved more than once")]
    DuplicatePassage {
        query_id: String,
        passage_id: String,
    },
    #[error("run mixes tags `{first}` and `{other}`")]
    MixedRunTags { first: String, other: String },
    #[error("run is empty")]
    EmptyRun,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub query_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub passage_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QrelEntry {
    pub query_id: String,
    pub passage_id: String,
    pub grade: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub query_id: String,
    pub passage_id: String,
    pub rank: u32,
    pub score: f64,
    pub run_tag: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub query_id: String,
    pub system_id: String,
    pub answer_text: String,
}

/// Highest grade on the graded relevance scale.
pub const MAX_GRADE: u8 = 3;

/// Yields `(1-based line number, line)` for every non-blank line.
fn lines(source: impl Read) -> Result<Vec<(usize, String)>, ParseError> {
    let mut source = source;
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    let mut out = Vec::new();
    for (idx, raw) in bytes.split(|&b| b == b'\n').enumerate() {
        let raw = raw.strip_suffix(b"\r").unwrap_or(raw);
        let line =
            std::str::from_utf8(raw).map_err(|_| ParseError::InvalidUtf8 { line: idx + 1 })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push((idx + 1, line.to_string()));
    }
    Ok(out)
}

fn fields(line: &str) -> Vec<&str> {
    line.split([' ', '\t']).filter(|f| !f.is_empty()).collect()
}

pub fn parse_qrels(source: impl Read) -> Result<Vec<QrelEntry>, ParseError> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (line, text) in lines(source)? {
        let f = fields(&text);
        if f.len() < 4 {
            return Err(ParseError::Malformed {
                line,
                reason: format!("expected 4 fields, found {}", f.len()),
            });
        }
        let grade: i64 = f[3].parse().map_err(|_| ParseError::Malformed {
            line,
            reason: format!("non-integer grade `{}`", f[3]),
        })?;
        if !(0..=i64::from(MAX_GRADE)).contains(&grade) {
            return Err(ParseError::Malformed {
                line,
                reason: format!("grade {grade} outside 0..={MAX_GRADE}"),
            });
        }
        let entry = QrelEntry {
            query_id: f[0].to_string(),
            passage_id: f[2].to_string(),
            grade: grade as u8,
        };
        if !seen.insert((entry.query_id.clone(), entry.passage_id.clone())) {
            return Err(ParseError::Duplicate {
                line,
                what: format!("judgment for ({}, {})", entry.query_id, entry.passage_id),
            });
        }
        out.push(entry);
    }
    Ok(out)
}

pub fn parse_run(source: impl Read) -> Result<Vec<RunEntry>, ParseError> {
    let mut out = Vec::new();
    for (line, text) in lines(source)? {
        let f = fields(&text);
        if f.len() != 6 {
            return Err(ParseError::Malformed {
                line,
                reason: format!("expected 6 fields, found {}", f.len()),
            });
        }
        let rank: u32 = f[3].parse().map_err(|_| ParseError::Malformed {
            line,
            reason: format!("non-integer rank `{}`", f[3]),
        })?;
        if rank == 0 {
            return Err(ParseError::Malformed {
                line,
                reason: "rank must be positive".into(),
            });
        }
        let score: f64 = f[4].parse().map_err(|_| ParseError::Malformed {
            line,
            reason: format!("non-numeric score `{}`", f[4]),
        })?;
        if score.is_nan() {
            return Err(ParseError::Malformed {
                line,
                reason: "score is NaN".into(),
            });
        }
        out.push(RunEntry {
            query_id: f[0].to_string(),
            passage_id: f[2].to_string(),
            rank,
            score,
            run_tag: f[5].to_string(),
        });
    }
    Ok(out)
}

fn parse_tab_separated(
    source: impl Read,
    what: &str,
) -> Result<Vec<(usize, String, String)>, ParseError> {
    let mut out = Vec::new();
    for (line, text) in lines(source)? {
        let mut parts = text.split('\t');
        let (Some(id), Some(body), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(ParseError::Malformed {
                line,
                reason: format!("{what} line must contain exactly one tab"),
            });
        };
        if id.trim().is_empty() {
            return Err(ParseError::Malformed {
                line,
                reason: format!("empty {what} id"),
            });
        }
        out.push((line, id.trim().to_string(), body.to_string()));
    }
    Ok(out)
}

/// Passage texts keyed by passage id.
#[derive(Debug, Clone, Default)]
pub struct Collection {
    passages: HashMap<String, String>,
}

impl Collection {
    pub fn get(&self, passage_id: &str) -> Option<&str> {
        self.passages.get(passage_id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.passages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.passages.is_empty()
    }

    pub fn insert(&mut self, passage: Passage) -> Option<String> {
        self.passages.insert(passage.passage_id, passage.text)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.passages.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

impl FromIterator<Passage> for Collection {
    fn from_iter<I: IntoIterator<Item = Passage>>(iter: I) -> Self {
        let mut c = Collection::default();
        for p in iter {
            c.insert(p);
        }
        c
    }
}

pub fn parse_collection(source: impl Read) -> Result<Collection, ParseError> {
    let mut passages = HashMap::new();
    for (line, id, text) in parse_tab_separated(source, "passage")? {
        if passages.contains_key(&id) {
            return Err(ParseError::Duplicate {
                line,
                what: format!("passage id {id}"),
            });
        }
        passages.insert(id, text);
    }
    Ok(Collection { passages })
}

pub fn parse_queries(source: impl Read) -> Result<Vec<Query>, ParseError> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (line, id, text) in parse_tab_separated(source, "query")? {
        if text.trim().is_empty() {
            return Err(ParseError::Malformed {
                line,
                reason: format!("query {id} has empty text"),
            });
        }
        if !seen.insert(id.clone()) {
            return Err(ParseError::Duplicate {
                line,
                what: format!("query id {id}"),
            });
        }
        out.push(Query { query_id: id, text });
    }
    Ok(out)
}

pub fn parse_answers(source: impl Read) -> Result<Vec<AnswerRecord>, ParseError> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (line, text) in lines(source)? {
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| ParseError::Malformed {
                line,
                reason: e.to_string(),
            })?;
        let obj = value.as_object().ok_or_else(|| ParseError::Malformed {
            line,
            reason: "record is not an object".into(),
        })?;
        let field = |name: &'static str| -> Result<String, ParseError> {
            match obj.get(name) {
                None | Some(serde_json::Value::Null) => {
                    Err(ParseError::MissingField { line, field: name })
                }
                Some(serde_json::Value::String(s)) => Ok(s.clone()),
                Some(_) => Err(ParseError::Malformed {
                    line,
                    reason: format!("field `{name}` must be a string"),
                }),
            }
        };
        let record = AnswerRecord {
            query_id: field("query_id")?,
            system_id: field("system_id")?,
            answer_text: field("answer_text")?,
        };
        if record.query_id.is_empty() || record.system_id.is_empty() {
            return Err(ParseError::Malformed {
                line,
                reason: "empty query_id or system_id".into(),
            });
        }
        if !seen.insert((record.query_id.clone(), record.system_id.clone())) {
            return Err(ParseError::Duplicate {
                line,
                what: format!("answer for ({}, {})", record.query_id, record.system_id),
            });
        }
        out.push(record);
    }
    Ok(out)
}

pub fn write_qrels(entries: &[QrelEntry]) -> String {
    let mut s = String::new();
    for e in entries {
        let _ = writeln!(s, "{} 0 {} {}", e.query_id, e.passage_id, e.grade);
    }
    s
}

pub fn write_run(entries: &[RunEntry]) -> String {
    let mut s = String::new();
    for e in entries {
        let _ = writeln!(
            s,
            "{} Q0 {} {} {} {}",
            e.query_id, e.passage_id, e.rank, e.score, e.run_tag
        );
    }
    s
}

pub fn write_answers(records: &[AnswerRecord]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r).expect("answer records serialize"));
        s.push('\n');
    }
    s
}

pub fn write_collection<'a>(passages: impl IntoIterator<Item = &'a Passage>) -> String {
    let mut s = String::new();
    for p in passages {
        let _ = writeln!(s, "{}\t{}", p.passage_id, p.text);
    }
    s
}

pub fn write_queries(queries: &[Query]) -> String {
    let mut s = String::new();
    for q in queries {
        let _ = writeln!(s, "{}\t{}", q.query_id, q.text);
    }
    s
}

/// Graded judgments grouped by query.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    by_query: BTreeMap<String, BTreeMap<String, u8>>,
}

impl Qrels {
    pub fn from_entries(entries: &[QrelEntry]) -> Self {
        let mut by_query: BTreeMap<String, BTreeMap<String, u8>> = BTreeMap::new();
        for e in entries {
            by_query
                .entry(e.query_id.clone())
                .or_default()
                .insert(e.passage_id.clone(), e.grade);
        }
        Qrels { by_query }
    }

    pub fn for_query(&self, query_id: &str) -> Option<&BTreeMap<String, u8>> {
        self.by_query.get(query_id)
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.by_query.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &BTreeMap<String, u8>)> {
        self.by_query.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.by_query.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_query.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedPassage {
    pub passage_id: String,
    pub rank: u32,
    pub score: f64,
}

/// A non-fatal issue found while validating a run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunWarning {
    pub query_id: String,
    pub message: String,
}

/// A validated run: one tag, per-query lists sorted by rank with ranks `1..=m`.
#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    tag: String,
    by_query: BTreeMap<String, Vec<RankedPassage>>,
}

impl Run {
    pub fn from_entries(entries: &[RunEntry]) -> Result<(Run, Vec<RunWarning>), ValidationError> {
        let first = entries.first().ok_or(ValidationError::EmptyRun)?;
        let tag = first.run_tag.clone();
        let mut by_query: BTreeMap<String, Vec<RankedPassage>> = BTreeMap::new();
        for e in entries {
            if e.run_tag != tag {
                return Err(ValidationError::MixedRunTags {
                    first: tag,
                    other: e.run_tag.clone(),
                });
            }
            by_query
                .entry(e.query_id.clone())
                .or_default()
                .push(RankedPassage {
                    passage_id: e.passage_id.clone(),
                    rank: e.rank,
                    score: e.score,
                });
        }
        let mut warnings = Vec::new();
        for (query_id, list) in by_query.iter_mut() {
            list.sort_by_key(|p| p.rank);
            let mut seen = BTreeSet::new();
            for (i, p) in list.iter().enumerate() {
                let expected = i as u32 + 1;
                if i > 0 && list[i - 1].rank == p.rank {
                    return Err(ValidationError::DuplicateRank {
                        query_id: query_id.clone(),
                        rank: p.rank,
                    });
                }
                if p.rank != expected {
                    return Err(ValidationError::RankGap {
                        query_id: query_id.clone(),
                        expected,
                        found: p.rank,
                    });
                }
                if !seen.insert(p.passage_id.as_str()) {
                    return Err(ValidationError::DuplicatePassage {
                        query_id: query_id.clone(),
                        passage_id: p.passage_id.clone(),
                    });
                }
            }
            if let Some(w) = list.windows(2).find(|w| w[1].score > w[0].score) {
                warnings.push(RunWarning {
                    query_id: query_id.clone(),
                    message: format!(
                        "score increases from rank {} to rank {}",
                        w[0].rank, w[1].rank
                    ),
                });
            }
        }
        Ok((Run { tag, by_query }, warnings))
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn ranking(&self, query_id: &str) -> Option<&[RankedPassage]> {
        self.by_query.get(query_id).map(Vec::as_slice)
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.by_query.keys().map(String::as_str)
    }

    pub fn entries(&self) -> Vec<RunEntry> {
        self.by_query
            .iter()
            .flat_map(|(q, list)| {
                list.iter().map(move |p| RunEntry {
                    query_id: q.clone(),
                    passage_id: p.passage_id.clone(),
                    rank: p.rank,
                    score: p.score,
                    run_tag: self.tag.clone(),
                })
            })
            .collect()
    }
}

/// Answers grouped by system, then query.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnswerSet {
    by_system: BTreeMap<String, BTreeMap<String, String>>,
}

impl AnswerSet {
    /// Fails with the offending pair if `(query_id, system_id)` repeats.
    pub fn from_records(records: &[AnswerRecord]) -> Result<Self, (String, String)> {
        let mut by_system: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        for r in records {
            let prev = by_system
                .entry(r.system_id.clone())
                .or_default()
                .insert(r.query_id.clone(), r.answer_text.clone());
            if prev.is_some() {
                return Err((r.query_id.clone(), r.system_id.clone()));
            }
        }
        Ok(AnswerSet { by_system })
    }

    pub fn systems(&self) -> impl Iterator<Item = &str> {
        self.by_system.keys().map(String::as_str)
    }

    pub fn answers(&self, system_id: &str) -> Option<&BTreeMap<String, String>> {
        self.by_system.get(system_id)
    }

    pub fn answer(&self, system_id: &str, query_id: &str) -> Option<&str> {
        self.by_system
            .get(system_id)
            .and_then(|m| m.get(query_id))
            .map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.by_system.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct QueryCoverage {
    pub in_query_set: bool,
    pub has_grade_3: bool,
    pub has_grade_2: bool,
    pub in_run: BTreeMap<String, bool>,
    pub answered_by: BTreeMap<String, bool>,
    pub empty_answer_from: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CoverageReport {
    pub queries: BTreeMap<String, QueryCoverage>,
}

impl CoverageReport {
    /// Query ids referenced by some input but missing from the query set.
    pub fn unknown_queries(&self) -> Vec<&str> {
        self.queries
            .iter()
            .filter(|(_, c)| !c.in_query_set)
            .map(|(q, _)| q.as_str())
            .collect()
    }
}

/// Per-query availability flags across every input. Queries mentioned by any
/// input are listed; those absent from `queries` are flagged, not dropped.
pub fn join_coverage(
    qrels: &Qrels,
    runs: &[Run],
    answers: &AnswerSet,
    queries: &[Query],
) -> CoverageReport {
    let known: BTreeSet<&str> = queries.iter().map(|q| q.query_id.as_str()).collect();
    let mut all: BTreeSet<&str> = known.clone();
    all.extend(qrels.query_ids());
    for run in runs {
        all.extend(run.query_ids());
    }
    for system in answers.systems() {
        if let Some(m) = answers.answers(system) {
            all.extend(m.keys().map(String::as_str));
        }
    }
    let mut report = CoverageReport::default();
    for q in all {
        let grades = qrels.for_query(q);
        let has = |g: u8| grades.is_some_and(|m| m.values().any(|&x| x == g));
        let mut cov = QueryCoverage {
            in_query_set: known.contains(q),
            has_grade_3: has(3),
            has_grade_2: has(2),
            ..Default::default()
        };
        for run in runs {
            cov.in_run
                .insert(run.tag().to_string(), run.ranking(q).is_some());
        }
        for system in answers.systems() {
            let answer = answers.answer(system, q);
            cov.answered_by.insert(system.to_string(), answer.is_some());
            if answer.is_some_and(|a| a.trim().is_empty()) {
                cov.empty_answer_from.push(system.to_string());
            }
        }
        report.queries.insert(q.to_string(), cov);
    }
    report
}
