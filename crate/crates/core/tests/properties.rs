use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use simeval_core::benchmark_io::{
    AnswerRecord, AnswerSet, Collection, Passage, QrelEntry, Qrels, Run, RunEntry,
};
use simeval_core::embedding::{
    cosine_similarity, Embedder, EmbeddingError, EmbeddingProvider, EmbeddingVector, HashEmbedder,
    ProviderDescriptor,
};
use simeval_core::metrics::{kendall_tau_b, mrr_at_k, ndcg_at_k, summarize_distribution};
use simeval_core::protocols::{
    judgment_free_scores, select_all_targets, target_score_generated, target_score_retrieved,
    Benchmark, CrossPipelineVariant, SystemScore, TargetMode,
};
use simeval_core::synthetic::SyntheticSpace;

struct World {
    collection: Collection,
    qrels: Qrels,
    queries: BTreeSet<String>,
    runs: Vec<Run>,
    answers: AnswerSet,
}

/// Random benchmark with gaps: unjudged queries, queries without top-tier
/// judgments, missing passages, unanswered queries and runs missing queries.
fn world(seed: u64, n_queries: usize) -> World {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut collection = Collection::default();
    let mut qrels = Vec::new();
    let mut queries = BTreeSet::new();
    let mut run_entries: Vec<Vec<RunEntry>> = vec![Vec::new(); 3];
    let mut answers = Vec::new();
    for qi in 0..n_queries {
        let q = format!("q{qi}");
        queries.insert(q.clone());
        let ids: Vec<String> = (0..6).map(|i| format!("{q}-p{i}")).collect();
        for id in &ids {
            if rng.gen_bool(0.9) {
                collection.insert(Passage {
                    passage_id: id.clone(),
                    text: format!("text {id} {}", rng.gen::<u16>()),
                });
            }
            if rng.gen_bool(0.6) {
                qrels.push(QrelEntry {
                    query_id: q.clone(),
                    passage_id: id.clone(),
                    grade: rng.gen_range(0..=3),
                });
            }
        }
        for (r, entries) in run_entries.iter_mut().enumerate() {
            if rng.gen_bool(0.2) {
                continue;
            }
            let mut order = ids.clone();
            for i in (1..order.len()).rev() {
                order.swap(i, rng.gen_range(0..=i));
            }
            for (rank, p) in order.iter().take(rng.gen_range(1..=6)).enumerate() {
                entries.push(RunEntry {
                    query_id: q.clone(),
                    passage_id: p.clone(),
                    rank: rank as u32 + 1,
                    score: -(rank as f64),
                    run_tag: format!("run{r}"),
                });
            }
        }
        for sys in ["s1", "s2"] {
            if rng.gen_bool(0.8) {
                let text = if rng.gen_bool(0.1) {
                    String::new()
                } else {
                    format!("{sys} {q} {}", rng.gen::<u16>())
                };
                answers.push(AnswerRecord {
                    query_id: q.clone(),
                    system_id: sys.into(),
                    answer_text: text,
                });
            }
        }
    }
    World {
        collection,
        qrels: Qrels::from_entries(&qrels),
        queries,
        runs: run_entries
            .iter()
            .filter(|e| !e.is_empty())
            .map(|e| Run::from_entries(e).unwrap().0)
            .collect(),
        answers: AnswerSet::from_records(&answers).unwrap(),
    }
}

/// A provider returning another provider's raw vectors times `scale`.
struct Scaled {
    inner: HashEmbedder,
    scale: f64,
}

impl EmbeddingProvider for Scaled {
    fn descriptor(&self) -> &ProviderDescriptor {
        self.inner.descriptor()
    }
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        Ok(self
            .inner
            .embed(texts)?
            .into_iter()
            .map(|v| v.into_iter().map(|x| x * self.scale).collect())
            .collect())
    }
}

fn all_scores(w: &World, embedder: &Embedder) -> Vec<SystemScore> {
    let bench = Benchmark {
        queries: &w.queries,
        qrels: &w.qrels,
        collection: &w.collection,
    };
    let targets = select_all_targets(&bench, TargetMode::AllTopTier);
    let mut out = Vec::new();
    for s in w.answers.systems() {
        out.push(
            target_score_generated(s, w.answers.answers(s), &targets, &w.collection, embedder)
                .unwrap(),
        );
    }
    for r in &w.runs {
        out.push(target_score_retrieved(r, &targets, &w.collection, embedder).unwrap());
    }
    if !w.runs.is_empty() {
        let jf = judgment_free_scores(
            &w.answers,
            &w.runs,
            &w.queries,
            &w.collection,
            embedder,
            CrossPipelineVariant::MeanOverPipelines,
        )
        .unwrap();
        for row in jf.rows {
            out.extend(row.per_pipeline.into_values());
            out.push(row.cross_pipeline);
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn system_score_invariants(seed in any::<u64>(), n in 1usize..8) {
        let w = world(seed, n);
        let embedder = Embedder::in_memory(Box::new(HashEmbedder::new(16)));
        for s in all_scores(&w, &embedder) {
            prop_assert_eq!(s.per_query.len() + s.skipped.len(), w.queries.len());
            let skipped: BTreeSet<&str> = s.skipped.iter().map(|k| k.query_id.as_str()).collect();
            prop_assert!(s.per_query.keys().all(|q| !skipped.contains(q.as_str())));
            for v in s.per_query.values() {
                prop_assert!((-1.0..=1.0).contains(v));
            }
            match s.aggregate {
                None => prop_assert!(s.per_query.is_empty()),
                Some(a) => {
                    let mean = s.per_query.values().sum::<f64>() / s.per_query.len() as f64;
                    prop_assert!((a - mean).abs() <= 1e-12);
                }
            }
            for p in &s.pairs {
                prop_assert_ne!(p.compared_id.as_deref(), Some(p.anchor_id.as_str()));
            }
        }
    }

    #[test]
    fn power_of_two_scaling_changes_nothing(seed in any::<u64>(), n in 1usize..6, k in -30i32..30) {
        let w = world(seed, n);
        let base = Embedder::in_memory(Box::new(HashEmbedder::new(16)));
        let scaled = Embedder::in_memory(Box::new(Scaled { inner: HashEmbedder::new(16), scale: 2f64.powi(k) }));
        prop_assert_eq!(all_scores(&w, &base), all_scores(&w, &scaled));
    }

    #[test]
    fn arbitrary_scaling_moves_scores_by_ulps(seed in any::<u64>(), n in 1usize..6, c in 1e-3f64..1e3) {
        let w = world(seed, n);
        let base = all_scores(&w, &Embedder::in_memory(Box::new(HashEmbedder::new(16))));
        let scaled = all_scores(&w, &Embedder::in_memory(Box::new(Scaled { inner: HashEmbedder::new(16), scale: c })));
        for (a, b) in base.iter().zip(&scaled) {
            prop_assert_eq!(a.per_query.keys().collect::<Vec<_>>(), b.per_query.keys().collect::<Vec<_>>());
            for (x, y) in a.per_query.values().zip(b.per_query.values()) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn dominating_system_wins_every_anchor(
        seed in any::<u64>(),
        n in 1usize..6,
        pipelines in 1usize..5,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut space = SyntheticSpace::new("synthetic", 512);
        let mut collection = Collection::default();
        let mut answers = Vec::new();
        let mut entries: Vec<Vec<RunEntry>> = vec![Vec::new(); pipelines];
        let mut queries = BTreeSet::new();
        for qi in 0..n {
            let q = format!("q{qi}");
            queries.insert(q.clone());
            let topic = space.topic();
            for (p, e) in entries.iter_mut().enumerate() {
                let id = format!("{q}-top{p}");
                space.place(&id, topic, rng.gen_range(0.05..1.0)).unwrap();
                collection.insert(Passage { passage_id: id.clone(), text: id.clone() });
                e.push(RunEntry { query_id: q.clone(), passage_id: id, rank: 1, score: 1.0, run_tag: format!("p{p}") });
            }
            let low: f64 = rng.gen_range(0.0..0.9);
            let high = rng.gen_range(low + 0.01..=1.0);
            for (sys, cos) in [("a", high), ("b", low)] {
                let text = format!("{sys} {q}");
                space.place(&text, topic, cos).unwrap();
                answers.push(AnswerRecord { query_id: q.clone(), system_id: sys.into(), answer_text: text });
            }
        }
        let embedder = Embedder::in_memory(Box::new(space.into_store()));
        let runs: Vec<Run> = entries.iter().map(|e| Run::from_entries(e).unwrap().0).collect();
        let answers = AnswerSet::from_records(&answers).unwrap();
        for variant in [CrossPipelineVariant::MeanOverPipelines, CrossPipelineVariant::MaxOverPipelines] {
            let res = judgment_free_scores(&answers, &runs, &queries, &collection, &embedder, variant).unwrap();
            let (a, b) = (&res.rows[0], &res.rows[1]);
            for p in &res.pipelines {
                prop_assert!(a.per_pipeline[p].aggregate > b.per_pipeline[p].aggregate);
            }
            prop_assert!(a.cross_pipeline.aggregate > b.cross_pipeline.aggregate);
        }
    }

    #[test]
    fn cosine_bounds_and_symmetry(
        a in prop::collection::vec(-1e3f64..1e3, 1..32),
        seed in any::<u64>(),
    ) {
        prop_assume!(a.iter().any(|x| *x != 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<f64> = a.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
        prop_assume!(b.iter().any(|x| *x != 0.0));
        let (va, vb) = (EmbeddingVector::normalized(a).unwrap(), EmbeddingVector::normalized(b).unwrap());
        let ab = cosine_similarity(&va, &vb).unwrap();
        prop_assert!((-1.0..=1.0).contains(&ab));
        prop_assert_eq!(ab, cosine_similarity(&vb, &va).unwrap());
        prop_assert!((cosine_similarity(&va, &va).unwrap() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn tau_symmetries(xy in prop::collection::vec((0u8..5, 0u8..5), 2..40)) {
        let x: Vec<f64> = xy.iter().map(|p| p.0 as f64).collect();
        let y: Vec<f64> = xy.iter().map(|p| p.1 as f64).collect();
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        if let Ok(t) = kendall_tau_b(&x, &y) {
            prop_assert!((-1.0..=1.0).contains(&t.tau));
            prop_assert!((0.0..=1.0).contains(&t.p_value));
            prop_assert_eq!(t.tau, kendall_tau_b(&y, &x).unwrap().tau);
            prop_assert_eq!(-t.tau, kendall_tau_b(&x, &neg).unwrap().tau);
        }
        if x.iter().any(|v| *v != x[0]) {
            prop_assert_eq!(kendall_tau_b(&x, &x).unwrap().tau, 1.0);
        }
    }

    #[test]
    fn ranking_metrics_are_bounded(
        grades in prop::collection::vec(0u8..4, 1..12),
        perm_seed in any::<u64>(),
        k in 1usize..15,
    ) {
        let judgments: BTreeMap<String, u8> =
            grades.iter().enumerate().map(|(i, g)| (format!("p{i}"), *g)).collect();
        let mut ranked: Vec<String> = judgments.keys().cloned().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(perm_seed);
        for i in (1..ranked.len()).rev() {
            ranked.swap(i, rng.gen_range(0..=i));
        }
        if let Ok(v) = ndcg_at_k(&ranked, &judgments, k) {
            prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
            let mut ideal = ranked.clone();
            ideal.sort_by_key(|p| std::cmp::Reverse(judgments[p]));
            prop_assert!((ndcg_at_k(&ideal, &judgments, k).unwrap() - 1.0).abs() <= 1e-12);
        }
        let relevant: BTreeSet<String> = judgments.iter().filter(|(_, g)| **g >= 2).map(|(p, _)| p.clone()).collect();
        let rr = mrr_at_k(&ranked, &relevant, k);
        prop_assert!(rr == 0.0 || (1..=k).any(|r| rr == 1.0 / r as f64));
    }

    #[test]
    fn summary_is_ordered(values in prop::collection::vec(-1.0f64..1.0, 1..50)) {
        let s = summarize_distribution(&values).unwrap();
        prop_assert!(s.min <= s.q1 && s.q1 <= s.median && s.median <= s.q3 && s.q3 <= s.max);
        prop_assert!(s.min <= s.mean && s.mean <= s.max);
        prop_assert_eq!(s.count, values.len());
    }
}
