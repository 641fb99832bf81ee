//! Ranking metrics, rank correlation and distribution summaries.
//!
//! nDCG follows the trec_eval convention: the gain of a passage is its raw
//! grade and the discount at rank `r` is `1 / log2(r + 1)`. Unjudged
//! passages have grade 0.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::benchmark_io::{Qrels, Run};

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    /// The metric has no defined value for this input.
    #[error("undefined metric: {0}")]
    Undefined(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} values, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("non-finite input value")]
    NonFinite,
    #[error("cutoff must be at least 1")]
    ZeroCutoff,
}

fn discount(rank: usize) -> f64 {
    1.0 / ((rank + 1) as f64).log2()
}

/// nDCG@k for one query.
///
/// `ranked` is the retrieved list in rank order. Fails with
/// [`MetricError::Undefined`] when no judged passage has a positive grade.
pub fn ndcg_at_k<S: AsRef<str>>(
    ranked: &[S],
    judgments: &BTreeMap<String, u8>,
    k: usize,
) -> Result<f64, MetricError> {
    if k == 0 {
        return Err(MetricError::ZeroCutoff);
    }
    let mut ideal: Vec<u8> = judgments.values().copied().filter(|&g| g > 0).collect();
    if ideal.is_empty() {
        return Err(MetricError::Undefined("no positive judgments".into()));
    }
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| f64::from(g) * discount(i + 1))
        .sum();
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, id)| {
            let g = judgments.get(id.as_ref()).copied().unwrap_or(0);
            f64::from(g) * discount(i + 1)
        })
        .sum();
    Ok(dcg / idcg)
}

/// Reciprocal rank of the first relevant passage within the top `k`, else 0.
pub fn mrr_at_k<S: AsRef<str>>(ranked: &[S], relevant: &BTreeSet<String>, k: usize) -> f64 {
    ranked
        .iter()
        .take(k)
        .position(|id| relevant.contains(id.as_ref()))
        .map_or(0.0, |i| 1.0 / (i + 1) as f64)
}

/// Passages whose grade meets `threshold`.
pub fn relevant_set(judgments: &BTreeMap<String, u8>, threshold: u8) -> BTreeSet<String> {
    judgments
        .iter()
        .filter(|(_, &g)| g >= threshold)
        .map(|(p, _)| p.clone())
        .collect()
}

/// Macro-averaged metric over a run, with the queries that were left out.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetric {
    pub mean: Option<f64>,
    pub per_query: BTreeMap<String, f64>,
    /// Queries without a defined value (no positive judgments).
    pub undefined: Vec<String>,
}

fn macro_average(per_query: &BTreeMap<String, f64>) -> Option<f64> {
    if per_query.is_empty() {
        None
    } else {
        Some(per_query.values().sum::<f64>() / per_query.len() as f64)
    }
}

fn ranked_ids<'a>(run: &'a Run, query_id: &str) -> Vec<&'a str> {
    run.ranking(query_id)
        .map(|r| r.iter().map(|p| p.passage_id.as_str()).collect())
        .unwrap_or_default()
}

/// Mean nDCG@k of `run` over every judged query. Queries absent from the
/// run score 0; queries without positive judgments are excluded.
pub fn mean_ndcg_at_k(run: &Run, qrels: &Qrels, k: usize) -> Result<RunMetric, MetricError> {
    let mut per_query = BTreeMap::new();
    let mut undefined = Vec::new();
    for (q, judgments) in qrels.iter() {
        match ndcg_at_k(&ranked_ids(run, q), judgments, k) {
            Ok(v) => {
                per_query.insert(q.to_string(), v);
            }
            Err(MetricError::Undefined(_)) => undefined.push(q.to_string()),
            Err(e) => return Err(e),
        }
    }
    Ok(RunMetric {
        mean: macro_average(&per_query),
        per_query,
        undefined,
    })
}

/// Mean MRR@k of `run` with passages graded `>= threshold` counted relevant.
pub fn mean_mrr_at_k(run: &Run, qrels: &Qrels, k: usize, threshold: u8) -> RunMetric {
    let mut per_query = BTreeMap::new();
    let mut undefined = Vec::new();
    for (q, judgments) in qrels.iter() {
        let relevant = relevant_set(judgments, threshold);
        if relevant.is_empty() {
            undefined.push(q.to_string());
            continue;
        }
        per_query.insert(q.to_string(), mrr_at_k(&ranked_ids(run, q), &relevant, k));
    }
    RunMetric {
        mean: macro_average(&per_query),
        per_query,
        undefined,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KendallTau {
    pub tau: f64,
    /// Two-sided p-value from the tie-corrected normal approximation.
    pub p_value: f64,
    pub n: usize,
    pub concordant: u64,
    pub discordant: u64,
}

/// Sum over tie groups of a sorted slice, reported as
/// `(Σ t(t-1)/2, Σ t(t-1)(2t+5), Σ t(t-1), Σ t(t-1)(t-2))`.
fn tie_sums<T>(sorted: &[T], eq: impl Fn(&T, &T) -> bool) -> (u64, f64, f64, f64) {
    let (mut pairs, mut v0, mut v1, mut v2) = (0u64, 0f64, 0f64, 0f64);
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && eq(&sorted[i], &sorted[j]) {
            j += 1;
        }
        let t = (j - i) as u64;
        pairs += t * (t - 1) / 2;
        let tf = t as f64;
        v0 += tf * (tf - 1.0) * (2.0 * tf + 5.0);
        v1 += tf * (tf - 1.0);
        v2 += tf * (tf - 1.0) * (tf - 2.0);
        i = j;
    }
    (pairs, v0, v1, v2)
}

/// Counts inversions of the `y` component while merge-sorting `items` by it.
fn sort_counting_swaps(items: &mut Vec<(f64, f64)>) -> u64 {
    let n = items.len();
    let mut buf = items.clone();
    let mut swaps = 0u64;
    let mut width = 1;
    while width < n {
        let mut start = 0;
        while start < n {
            let mid = (start + width).min(n);
            let end = (start + 2 * width).min(n);
            let (mut i, mut j, mut out) = (start, mid, start);
            while i < mid && j < end {
                if items[j].1 < items[i].1 {
                    buf[out] = items[j];
                    swaps += (mid - i) as u64;
                    j += 1;
                } else {
                    buf[out] = items[i];
                    i += 1;
                }
                out += 1;
            }
            buf[out..out + (mid - i)].copy_from_slice(&items[i..mid]);
            out += mid - i;
            buf[out..out + (end - j)].copy_from_slice(&items[j..end]);
            start = end;
        }
        std::mem::swap(items, &mut buf);
        width *= 2;
    }
    swaps
}

/// Kendall's tau-b with tie correction, computed in O(n log n).
///
/// `tau = (C - D) / sqrt((C + D + Tx) * (C + D + Ty))` where `Tx` and `Ty`
/// count pairs tied only in `x` or only in `y`.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<KendallTau, MetricError> {
    if x.len() != y.len() {
        return Err(MetricError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 2 {
        return Err(MetricError::TooShort { needed: 2, got: n });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(MetricError::NonFinite);
    }
    let cmp = |a: &f64, b: &f64| a.partial_cmp(b).unwrap_or(Ordering::Equal);
    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| cmp(&a.0, &b.0).then_with(|| cmp(&a.1, &b.1)));

    let total = (n as u64) * (n as u64 - 1) / 2;
    let (x_tied, xv0, xv1, xv2) = tie_sums(&pairs, |a, b| a.0 == b.0);
    let (xy_tied, ..) = tie_sums(&pairs, |a, b| a.0 == b.0 && a.1 == b.1);
    let swaps = sort_counting_swaps(&mut pairs);
    let (y_tied, yv0, yv1, yv2) = tie_sums(&pairs, |a, b| a.1 == b.1);

    if x_tied == total || y_tied == total {
        return Err(MetricError::Undefined("all values tied".into()));
    }

    // C + D = pairs untied in both; C - D follows from the inversion count.
    let untied = total - x_tied - y_tied + xy_tied;
    let diff = untied as i64 - 2 * swaps as i64;
    let concordant = ((untied as i64 + diff) / 2) as u64;
    let discordant = untied - concordant;
    let denom = ((total - x_tied) as f64 * (total - y_tied) as f64).sqrt();
    let tau = (diff as f64 / denom).clamp(-1.0, 1.0);

    let nf = n as f64;
    let mut var = (nf * (nf - 1.0) * (2.0 * nf + 5.0) - xv0 - yv0) / 18.0
        + (xv1 * yv1) / (2.0 * nf * (nf - 1.0));
    if n > 2 {
        var += (xv2 * yv2) / (9.0 * nf * (nf - 1.0) * (nf - 2.0));
    }
    let p_value = if var > 0.0 {
        let z = diff as f64 / var.sqrt();
        erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0)
    } else {
        1.0
    };

    Ok(KendallTau {
        tau,
        p_value,
        n,
        concordant,
        discordant,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DistributionSummary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Five-number summary plus mean.
///
/// Quartiles use the median-of-halves rule: `q1` is the median of the lower
/// half and `q3` of the upper half, where for an odd count both halves
/// include the overall median (Tukey's hinges).
pub fn summarize_distribution(values: &[f64]) -> Result<DistributionSummary, MetricError> {
    if values.is_empty() {
        return Err(MetricError::TooShort { needed: 1, got: 0 });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(MetricError::NonFinite);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let half = n.div_ceil(2);
    Ok(DistributionSummary {
        count: n,
        mean: v.iter().sum::<f64>() / n as f64,
        median: median_sorted(&v),
        q1: median_sorted(&v[..half]),
        q3: median_sorted(&v[n - half..]),
        min: v[0],
        max: v[n - 1],
    })
}
