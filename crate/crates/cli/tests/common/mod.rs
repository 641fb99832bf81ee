#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub struct Paths {
    pub root: PathBuf,
    pub collection: PathBuf,
    pub queries: PathBuf,
    pub qrels: PathBuf,
    pub runs: PathBuf,
    pub answers: PathBuf,
}

/// A small judged benchmark: per query, passages with grades
/// 3, 3, 2, 1, 0, 0 plus four unjudged ones; two runs and two answering
/// systems, with every text distinct.
pub fn write_benchmark(root: &Path, n_queries: usize) -> Paths {
    let p = Paths {
        root: root.to_path_buf(),
        collection: root.join("collection.tsv"),
        queries: root.join("queries.tsv"),
        qrels: root.join("qrels.txt"),
        runs: root.join("runs"),
        answers: root.join("answers"),
    };
    fs::create_dir_all(&p.runs).unwrap();
    fs::create_dir_all(&p.answers).unwrap();
    let grades = [3, 3, 2, 1, 0, 0];
    let (mut coll, mut queries, mut qrels) = (String::new(), String::new(), String::new());
    let mut runs: BTreeMap<&str, String> = BTreeMap::new();
    let mut answers = String::new();
    for q in 0..n_queries {
        let qid = format!("q{q:03}");
        queries.push_str(&format!("{qid}\twhat is topic {q}\n"));
        for i in 0..10 {
            coll.push_str(&format!(
                "{qid}-p{i}\ttopic {q} passage {i} words {}\n",
                q * 31 + i
            ));
            if let Some(g) = grades.get(i) {
                qrels.push_str(&format!("{qid} 0 {qid}-p{i} {g}\n"));
            }
        }
        let orders: [(&str, [usize; 6]); 2] =
            [("bm25", [4, 2, 0, 6, 1, 7]), ("dense", [0, 1, 2, 3, 8, 9])];
        for (tag, order) in orders {
            let run = runs.entry(tag).or_default();
            for (rank, i) in order.iter().enumerate() {
                run.push_str(&format!(
                    "{qid} Q0 {qid}-p{i} {} {} {tag}\n",
                    rank + 1,
                    20 - rank
                ));
            }
        }
        for sys in ["alpha", "beta"] {
            answers.push_str(&format!(
                "{{\"query_id\":\"{qid}\",\"system_id\":\"{sys}\",\"answer_text\":\"{sys} says topic {q}\"}}\n"
            ));
        }
    }
    fs::write(&p.collection, coll).unwrap();
    fs::write(&p.queries, queries).unwrap();
    fs::write(&p.qrels, qrels).unwrap();
    for (tag, body) in runs {
        fs::write(p.runs.join(format!("{tag}.run")), body).unwrap();
    }
    fs::write(p.answers.join("answers.jsonl"), answers).unwrap();
    p
}

pub fn simeval(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_simeval"))
        .args(args)
        .env_remove("SOURCE_DATE_EPOCH")
        .env_remove("SIMEVAL_API_TOKEN")
        .output()
        .expect("spawn simeval")
}

pub fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// `provider_calls=N` from the stats line on stderr.
pub fn provider_calls(out: &Output) -> Option<u64> {
    stat(out, "provider_calls")
}

pub fn stat(out: &Output, key: &str) -> Option<u64> {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let prefix = format!("{key}=");
    stderr
        .split_whitespace()
        .find_map(|w| w.strip_prefix(prefix.as_str()))
        .and_then(|v| v.parse().ok())
}

/// Every file in `dir` by name.
pub fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}
