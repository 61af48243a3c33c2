//! Shared fixtures: a synthetic corpus and the full mock-backend pipeline.

#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{Duration, TimeZone, Utc};
use ifjudge_core::dataset::Record;
use ifjudge_core::{load_dataset, HumanRating};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

const WORDS: &[&str] = &[
    "council", "budget", "river", "school", "vendor", "contract", "meeting", "report", "bridge", "survey",
    "patients", "library", "storm", "festival", "harbor", "grant", "shipment", "policy", "museum", "server",
];

pub fn cli(args: &[&str]) -> i32 {
    ifjudge_cli::run(std::iter::once("ifjudge").chain(args.iter().copied()))
}

fn sentence(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(6..14);
    let words: Vec<&str> = (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect();
    let mut s = words.join(" ");
    s[..1].make_ascii_uppercase();
    s.push('.');
    s
}

/// `n` texts of 4–9 sentences in JSONL corpus form.
pub fn write_corpus(path: &Path, n: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::new();
    for _ in 0..n {
        let k = rng.random_range(4..10);
        let text: Vec<String> = (0..k).map(|_| sentence(&mut rng)).collect();
        out.push_str(&json!({"source": "synthetic", "text": text.join(" ")}).to_string());
        out.push('\n');
    }
    fs::write(path, out).unwrap();
}

pub fn write_config(path: &Path) {
    let config = json!({
        "seed": 7,
        "parallelism": 4,
        "runs": 2000,
        "backends": [
            {"backend_id": "instructor", "lm_family": "mock", "kind": "mock_scripted", "rules": [{
                "prompt_substring_match": "Instructions:",
                "response": "1. Summarize the document in two sentences.\n2. List the places mentioned.\n3. Write a short title for the document."
            }]},
            {"backend_id": "alpha", "lm_family": "family-a", "kind": "mock_seeded", "seed": 1},
            {"backend_id": "beta", "lm_family": "family-b", "kind": "mock_seeded", "seed": 2},
            {"backend_id": "gamma", "lm_family": "family-a", "kind": "mock_seeded", "seed": 3},
            {"backend_id": "judge", "lm_family": "family-b", "kind": "mock_seeded", "seed": 4}
        ],
        "reference_generators": ["alpha", "beta", "gamma"]
    });
    fs::write(path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
}

/// Three seeded ratings per answer with fixed timestamps, as an annotation log.
pub fn write_ratings(dataset: &Path, log: &Path, seed: u64) {
    let ds = load_dataset(dataset).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = Utc.with_ymd_and_hms(2024, 3, 1, 9, 0, 0).unwrap();
    let mut out = String::new();
    for (k, a) in ds.answers().enumerate() {
        for ann in ["ann1", "ann2", "ann3"] {
            let how_well = rng.random_range(1..=5u8);
            let r = HumanRating {
                answer_id: a.id.clone(),
                annotator_id: ann.into(),
                follows_instruction: u8::from(how_well >= 3 || rng.random_bool(0.2)),
                how_well,
                timestamp: start + Duration::minutes(k as i64),
            };
            out.push_str(&serde_json::to_string(&Record::Rating(r)).unwrap());
            out.push('\n');
        }
    }
    fs::write(log, out).unwrap();
}

pub struct PipelineOutputs {
    pub dataset: PathBuf,
    pub scores: PathBuf,
    pub report: PathBuf,
    pub table: PathBuf,
}

pub const ALL_METHODS: &[&str] = &[
    "word_count",
    "sentence_count",
    "rouge_avg",
    "constrained_softmax",
    "self_agreement",
    "multi_llm",
];

/// Corpus → 10 documents → 3 instructions each → 3 answers each → seeded
/// ratings → every method → meta-evaluation → markdown report.
pub fn run_pipeline(dir: &Path) -> PipelineOutputs {
    let p = |name: &str| dir.join(name);
    let s = |path: &PathBuf| path.to_str().unwrap().to_owned();
    write_corpus(&p("corpus.jsonl"), 25, 11);
    write_config(&p("config.json"));
    let config = s(&p("config.json"));
    let step = |args: &[&str]| {
        let mut full = vec!["--config", config.as_str()];
        full.extend_from_slice(args);
        assert_eq!(cli(&full), 0, "step failed: {args:?}");
    };
    step(&["ingest", "--corpus", &s(&p("corpus.jsonl")), "--n", "10", "--out", &s(&p("docs.jsonl"))]);
    step(&["gen-instructions", "--dataset", &s(&p("docs.jsonl")), "--backend", "instructor", "--out", &s(&p("instr.jsonl"))]);
    step(&[
        "gen-answers", "--dataset", &s(&p("instr.jsonl")),
        "--backend", "alpha", "--backend", "beta", "--backend", "gamma",
        "--out", &s(&p("answers.jsonl")),
    ]);
    write_ratings(&p("answers.jsonl"), &p("ratings.jsonl"), 5);
    step(&["ingest", "--dataset", &s(&p("answers.jsonl")), "--ratings", &s(&p("ratings.jsonl")), "--out", &s(&p("dataset.jsonl"))]);
    let mut score = vec!["score".to_owned(), "--dataset".into(), s(&p("dataset.jsonl")), "--backend".into(), "judge".into()];
    for m in ALL_METHODS {
        score.push("--method".into());
        score.push((*m).into());
    }
    score.push("--out".into());
    score.push(s(&p("scores.jsonl")));
    step(&score.iter().map(String::as_str).collect::<Vec<_>>());
    step(&["meta-eval", "--dataset", &s(&p("dataset.jsonl")), "--scores", &s(&p("scores.jsonl")), "--out", &s(&p("report.json"))]);
    step(&["report", &s(&p("report.json")), "--format", "markdown", "--out", &s(&p("report.md"))]);
    PipelineOutputs {
        dataset: p("dataset.jsonl"),
        scores: p("scores.jsonl"),
        report: p("report.json"),
        table: p("report.md"),
    }
}
