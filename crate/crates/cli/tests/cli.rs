mod common;

use std::fs;

use common::{path, provider_calls, simeval, snapshot, stat, write_benchmark};
use serde_json::Value;

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

#[test]
fn validate_grades_writes_four_grade_rows() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_benchmark(dir.path(), 5);
    let out = dir.path().join("out");
    let o = simeval(&[
        "validate-grades",
        "--qrels",
        path(&p.qrels),
        "--collection",
        path(&p.collection),
        "--output-dir",
        path(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&fs::read_to_string(out.join("boxplot.csv")).unwrap());
    assert_eq!(
        rows[0],
        [
            "query_set",
            "grade",
            "count",
            "mean",
            "median",
            "q1",
            "q3",
            "min",
            "max"
        ]
    );
    let grades: Vec<&str> = rows[1..].iter().map(|r| r[1].as_str()).collect();
    assert_eq!(grades, ["0", "1", "2", "3"]);
    // Per query: two grade-0, one grade-1, one grade-2 and one other grade-3.
    let counts: Vec<&str> = rows[1..].iter().map(|r| r[2].as_str()).collect();
    assert_eq!(counts, ["10", "5", "5", "5"]);

    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let names: Vec<&str> = manifest["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| a["name"].as_str().unwrap())
        .collect();
    assert!(names.contains(&"boxplot.csv") && names.contains(&"metadata.json"));
}

#[test]
fn missing_collection_is_a_usage_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_benchmark(dir.path(), 2);
    let missing = dir.path().join("nowhere.tsv");
    let o = simeval(&[
        "validate-grades",
        "--qrels",
        path(&p.qrels),
        "--collection",
        path(&missing),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nowhere.tsv"));
}

#[test]
fn warm_cache_makes_no_provider_calls() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_benchmark(dir.path(), 4);
    let cache = dir.path().join("cache");
    let out = dir.path().join("out");
    let args = [
        "validate-grades",
        "--qrels",
        path(&p.qrels),
        "--collection",
        path(&p.collection),
        "--cache-dir",
        path(&cache),
        "--output-dir",
        path(&out),
    ];
    let first = simeval(&args);
    assert!(provider_calls(&first).unwrap() > 0);
    let second = simeval(&args);
    assert_eq!(provider_calls(&second), Some(0));
}

#[test]
fn leaderboard_has_ndcg_only_for_runs() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_benchmark(dir.path(), 6);
    // Keep one answering system: 1 generated + 2 retrieved.
    let answers = fs::read_to_string(p.answers.join("answers.jsonl")).unwrap();
    let alpha: String = answers
        .lines()
        .filter(|l| l.contains("\"alpha\""))
        .map(|l| format!("{l}\n"))
        .collect();
    fs::write(p.answers.join("answers.jsonl"), alpha).unwrap();
    let out = dir.path().join("out");
    let o = simeval(&[
        "eval-with-qrels",
        "--qrels",
        path(&p.qrels),
        "--collection",
        path(&p.collection),
        "--runs-dir",
        path(&p.runs),
        "--answers-dir",
        path(&p.answers),
        "--output-dir",
        path(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&fs::read_to_string(out.join("leaderboard.csv")).unwrap());
    assert_eq!(rows.len(), 4);
    for r in &rows[1..] {
        assert_eq!(r[3].is_empty(), r[1] == "generated", "{r:?}");
    }
    let sims: Vec<f64> = rows[1..].iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(sims.windows(2).all(|w| w[0] >= w[1]));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("kendall_tau_b="));
}

#[test]
fn ideal_run_has_unit_ndcg_in_scatter() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_benchmark(dir.path(), 3);
    // Ideal order for the fixture's grades 3,3,2,1,0,0 is p0..p5.
    let mut ideal = String::new();
    for q in 0..3 {
        for i in 0..6 {
            ideal.push_str(&format!(
                "q{q:03} Q0 q{q:03}-p{i} {} {} ideal\n",
                i + 1,
                10 - i
            ));
        }
    }
    fs::write(p.runs.join("ideal.run"), ideal).unwrap();
    let out = dir.path().join("out");
    let o = simeval(&[
        "eval-with-qrels",
        "--qrels",
        path(&p.qrels),
        "--collection",
        path(&p.collection),
        "--runs-dir",
        path(&p.runs),
        "--output-dir",
        path(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let scatter = fs::read_to_string(out.join("scatter.csv")).unwrap();
    assert!(
        scatter.lines().any(|l| l.starts_with("ideal,1,")),
        "{scatter}"
    );
    assert!(fs::read_to_string(out.join("correlation.txt"))
        .unwrap()
        .contains("n=3"));
}

#[test]
fn official_metrics_file_overrides_ndcg() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_benchmark(dir.path(), 3);
    let official = dir.path().join("official.csv");
    fs::write(&official, "run_tag,ndcg@10\nbm25,0.25\ndense,0.75\n").unwrap();
    let out = dir.path().join("out");
    let o = simeval(&[
        "eval-with-qrels",
        "--qrels",
        path(&p.qrels),
        "--collection",
        path(&p.collection),
        "--runs-dir",
        path(&p.runs),
        "--official",
        path(&official),
        "--output-dir",
        path(&out),
    ]);
    assert!(o.status.success());
    let scatter = fs::read_to_string(out.join("scatter.csv")).unwrap();
    assert!(scatter.contains("bm25,0.25,") && scatter.contains("dense,0.75,"));
}

/// Twelve single-passage runs; answers copy pipeline 0's top-1 text.
fn twelve_pipelines(
    dir: &std::path::Path,
    skip_query_in_last: bool,
) -> (common::Paths, std::path::PathBuf) {
    let p = write_benchmark(dir, 4);
    for f in fs::read_dir(&p.runs).unwrap() {
        fs::remove_file(f.unwrap().path()).unwrap();
    }
    let mut answers = String::new();
    for r in 0..12 {
        let mut body = String::new();
        for q in 0..4 {
            if skip_query_in_last && r == 11 && q == 0 {
                continue;
            }
            body.push_str(&format!(
                "q{q:03} Q0 q{q:03}-p{} 1 1 pipe{r:02}\n",
                (r + q) % 10
            ));
        }
        fs::write(p.runs.join(format!("pipe{r:02}.run")), body).unwrap();
    }
    for q in 0..4 {
        let top = format!("topic {q} passage {} words {}", q % 10, q * 31 + q % 10);
        answers.push_str(&format!(
            "{{\"query_id\":\"q{q:03}\",\"system_id\":\"copycat\",\"answer_text\":\"{top}\"}}\n"
        ));
        answers.push_str(&format!(
            "{{\"query_id\":\"q{q:03}\",\"system_id\":\"other\",\"answer_text\":\"other {q}\"}}\n"
        ));
    }
    fs::write(p.answers.join("answers.jsonl"), answers).unwrap();
    let out = dir.join("out");
    (p, out)
}

#[test]
fn judgment_free_matrix_shape_and_copy_column() {
    let dir = tempfile::tempdir().unwrap();
    let (p, out) = twelve_pipelines(dir.path(), false);
    let o = simeval(&[
        "eval-no-qrels",
        "--collection",
        path(&p.collection),
        "--runs-dir",
        path(&p.runs),
        "--answers-dir",
        path(&p.answers),
        "--output-dir",
        path(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&fs::read_to_string(out.join("judgment_free_matrix.csv")).unwrap());
    assert_eq!(rows[0].len(), 14);
    assert_eq!(rows[0][13], "cross_pipeline_mean");
    let copycat = rows.iter().find(|r| r[0] == "copycat").unwrap();
    assert_eq!(copycat[1], "1");
}

#[test]
fn run_missing_a_query_is_logged() {
    let dir = tempfile::tempdir().unwrap();
    let (p, out) = twelve_pipelines(dir.path(), true);
    let o = simeval(&[
        "eval-no-qrels",
        "--collection",
        path(&p.collection),
        "--runs-dir",
        path(&p.runs),
        "--answers-dir",
        path(&p.answers),
        "--output-dir",
        path(&out),
        "--aggregate",
        "max",
    ]);
    assert!(o.status.success());
    let skips = fs::read_to_string(out.join("skips.csv")).unwrap();
    assert!(
        skips.contains("pipe11,copycat,q000,query missing from run"),
        "{skips}"
    );
    let coverage = fs::read_to_string(out.join("judgment_free_coverage.csv")).unwrap();
    assert!(coverage.contains("copycat,pipe11,3,1"));
    assert!(fs::read_to_string(out.join("judgment_free_matrix.csv"))
        .unwrap()
        .contains("cross_pipeline_max"));
    let meta: Value =
        serde_json::from_str(&fs::read_to_string(out.join("metadata.json")).unwrap()).unwrap();
    assert!(meta["non_default"]
        .as_array()
        .unwrap()
        .iter()
        .any(|v| v == "aggregate"));
}

#[test]
fn embed_cache_dedups_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let texts: Vec<String> = (0..100)
        .map(|i| format!("text number {}", i % 60))
        .collect();
    let all = dir.path().join("all.txt");
    fs::write(&all, texts.join("\n")).unwrap();
    let half = dir.path().join("half.txt");
    fs::write(&half, texts[..30].join("\n")).unwrap();

    let o = simeval(&[
        "embed-cache",
        "--texts",
        path(&half),
        "--cache-dir",
        path(&cache),
    ]);
    assert_eq!(stat(&o, "texts_embedded"), Some(30));
    let o = simeval(&[
        "embed-cache",
        "--texts",
        path(&all),
        "--cache-dir",
        path(&cache),
    ]);
    assert!(o.status.success());
    assert_eq!(stat(&o, "texts_embedded"), Some(30));

    let fresh = dir.path().join("fresh");
    let o = simeval(&[
        "embed-cache",
        "--texts",
        path(&all),
        "--cache-dir",
        path(&fresh),
    ]);
    assert_eq!(stat(&o, "texts_embedded"), Some(60));
}

#[test]
fn exported_store_reproduces_reports() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_benchmark(dir.path(), 5);
    let mut texts: Vec<String> = fs::read_to_string(&p.collection)
        .unwrap()
        .lines()
        .map(|l| l.split_once('\t').unwrap().1.to_string())
        .collect();
    for l in fs::read_to_string(p.answers.join("answers.jsonl"))
        .unwrap()
        .lines()
    {
        let v: Value = serde_json::from_str(l).unwrap();
        texts.push(v["answer_text"].as_str().unwrap().to_string());
    }
    let texts_file = dir.path().join("texts.txt");
    fs::write(&texts_file, texts.join("\n")).unwrap();
    let store = dir.path().join("store.txt");
    let o = simeval(&[
        "embed-cache",
        "--texts",
        path(&texts_file),
        "--export",
        path(&store),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let run = |provider: &str, out: &std::path::Path| {
        let o = simeval(&[
            "eval-with-qrels",
            "--qrels",
            path(&p.qrels),
            "--collection",
            path(&p.collection),
            "--runs-dir",
            path(&p.runs),
            "--answers-dir",
            path(&p.answers),
            "--output-dir",
            path(out),
            "--provider",
            provider,
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let mut snap = snapshot(out);
        snap.remove("metadata.json");
        snap.remove("manifest.json");
        snap
    };
    let a = run("test:hash", &dir.path().join("a"));
    let b = run(
        &format!("precomputed:{}", store.display()),
        &dir.path().join("b"),
    );
    for name in [
        "leaderboard.csv",
        "scatter.csv",
        "grade_conditioned.csv",
        "run_metrics.csv",
        "skips.csv",
    ] {
        assert_eq!(a[name], b[name], "{name}");
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_benchmark(dir.path(), 2);
    assert_eq!(simeval(&["--help"]).status.code(), Some(0));
    assert_eq!(simeval(&["--version"]).status.code(), Some(0));
    assert_eq!(
        simeval(&["validate-grades", "--no-such-flag"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        simeval(&[
            "validate-grades",
            "--qrels",
            path(&p.qrels),
            "--collection",
            path(&p.collection),
            "--provider",
            "nope"
        ])
        .status
        .code(),
        Some(1)
    );

    let bad = dir.path().join("bad.qrels");
    fs::write(&bad, "q 0 p 7\n").unwrap();
    let o = simeval(&[
        "validate-grades",
        "--qrels",
        path(&bad),
        "--collection",
        path(&p.collection),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.qrels"));

    let empty_store = dir.path().join("empty.store");
    fs::write(&empty_store, "dim=4\n").unwrap();
    let o = simeval(&[
        "validate-grades",
        "--qrels",
        path(&p.qrels),
        "--collection",
        path(&p.collection),
        "--provider",
        &format!("precomputed:{}", empty_store.display()),
        "--output-dir",
        path(&dir.path().join("out")),
    ]);
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn config_file_sits_between_flags_and_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_benchmark(dir.path(), 2);
    let out = dir.path().join("out");
    let cfg = dir.path().join("simeval.toml");
    fs::write(
        &cfg,
        format!(
            "qrels = {:?}\ncollection = {:?}\ndim = 8\nthreshold = 3\n",
            path(&p.qrels),
            path(&p.collection)
        ),
    )
    .unwrap();
    let o = simeval(&[
        "validate-grades",
        "--config",
        path(&cfg),
        "--dim",
        "12",
        "--output-dir",
        path(&out),
        "--timestamp",
        "2024-01-01T00:00:00Z",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let meta: Value =
        serde_json::from_str(&fs::read_to_string(out.join("metadata.json")).unwrap()).unwrap();
    assert_eq!(meta["config"]["dim"], 12);
    assert_eq!(meta["config"]["threshold"], 3);
    assert_eq!(meta["timestamp"], "2024-01-01T00:00:00Z");
    assert!(!fs::read_to_string(out.join("metadata.json"))
        .unwrap()
        .contains("SIMEVAL_API_TOKEN"));

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "api-token = \"x\"\n").unwrap();
    assert_eq!(
        simeval(&["validate-grades", "--config", path(&bad)])
            .status
            .code(),
        Some(1)
    );
}
