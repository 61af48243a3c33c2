mod common;

use std::fs;
use std::process::Command;

use common::{cli, run_pipeline};
use ifjudge_core::meta::MetaEvalReport;
use ifjudge_core::{save_dataset, Answer, Dataset, Document, Instruction};
use serde_json::json;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ifjudge"))
}

/// 100 documents × 3 instructions × 3 answers.
fn big_dataset() -> Dataset {
    let mut b = Dataset::builder();
    for d in 0..100 {
        let doc = Document::with_id(format!("d{d:03}"), "synthetic", format!("Document number {d}. It has two sentences."));
        for i in 0..3 {
            let instr = Instruction {
                id: format!("d{d:03}:i{i}"),
                document_id: doc.id.clone(),
                text: "Summarize.".into(),
                generator_id: "gen".into(),
            };
            for m in ["x", "y", "z"] {
                b = b.answer(Answer {
                    id: format!("{}:{m}", instr.id),
                    document_id: doc.id.clone(),
                    instruction_id: instr.id.clone(),
                    text: format!("Answer {m} to {d}/{i}. ").repeat(1 + (d + i) % 3),
                    generator_id: m.into(),
                    lm_family: "f".into(),
                });
            }
            b = b.instruction(instr);
        }
        b = b.document(doc);
    }
    b.build().unwrap()
}

#[test]
fn validate_reports_line_of_corrupt_record() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.jsonl");
    save_dataset(&big_dataset(), &good).unwrap();
    let out = bin().args(["validate", good.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("900 answers"));

    let text = fs::read_to_string(&good).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines[4] = "{\"kind\": \"answer\", \"id\": ";
    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, lines.join("\n")).unwrap();
    let out = bin().args(["validate", bad.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 5"), "{err}");
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("d.jsonl");
    save_dataset(&big_dataset(), &ds).unwrap();
    let ds = ds.to_str().unwrap();
    let out = dir.path().join("s.jsonl");
    let out = out.to_str().unwrap();
    assert_eq!(cli(&["frobnicate"]), 2);
    assert_eq!(cli(&["score", "--dataset", ds, "--out", out, "--method", "bogus"]), 2);
    assert_eq!(cli(&["score", "--dataset", ds, "--method", "word_count"]), 2);
    // LLM methods need a backend and a seed
    assert_eq!(cli(&["score", "--dataset", ds, "--out", out, "--method", "multi_llm"]), 2);
    assert_eq!(cli(&["ingest", "--out", out]), 2);
    assert_eq!(cli(&["validate", "--dataset", "/nonexistent/file.jsonl"]), 1);
}

#[test]
fn word_count_cardinality_and_resume() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("d.jsonl");
    save_dataset(&big_dataset(), &ds).unwrap();
    let full = dir.path().join("full.jsonl");
    let args = |out: &std::path::Path| {
        vec![
            "score".to_owned(),
            "--dataset".into(),
            ds.to_str().unwrap().into(),
            "--method".into(),
            "word_count".into(),
            "--out".into(),
            out.to_str().unwrap().into(),
        ]
    };
    let run = |out: &std::path::Path| cli(&args(out).iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(run(&full), 0);
    let text = fs::read_to_string(&full).unwrap();
    assert_eq!(text.lines().count(), 900);

    // rerunning a finished file writes nothing
    assert_eq!(run(&full), 0);
    assert_eq!(fs::read_to_string(&full).unwrap(), text);

    // a file cut mid-line is completed without duplicates
    let partial = dir.path().join("partial.jsonl");
    let mut cut: String = text.lines().take(400).map(|l| format!("{l}\n")).collect();
    cut.push_str(&text.lines().nth(400).unwrap()[..20]);
    fs::write(&partial, &cut).unwrap();
    assert_eq!(run(&partial), 0);
    assert_eq!(fs::read_to_string(&partial).unwrap(), text);
}

#[test]
fn failing_backend_keeps_other_answers() {
    let dir = tempfile::tempdir().unwrap();
    let ds = Dataset::builder()
        .document(Document::with_id("d1", "s", "Some text here."))
        .instruction(Instruction {
            id: "d1:i1".into(),
            document_id: "d1".into(),
            text: "Summarize.".into(),
            generator_id: "g".into(),
        })
        .build()
        .unwrap();
    let path = dir.path().join("d.jsonl");
    save_dataset(&ds, &path).unwrap();
    let config = dir.path().join("c.json");
    fs::write(
        &config,
        json!({"backends": [
            {"backend_id": "ok", "lm_family": "a", "kind": "mock_seeded", "seed": 1},
            {"backend_id": "down", "lm_family": "b", "kind": "mock_scripted", "rules": [{"error": "unavailable"}]}
        ]})
        .to_string(),
    )
    .unwrap();
    let out = dir.path().join("out.jsonl");
    let args = [
        "--config",
        config.to_str().unwrap(),
        "gen-answers",
        "--dataset",
        path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    assert_eq!(cli(&args), 1);
    let got = ifjudge_core::load_dataset(&out).unwrap();
    assert_eq!(got.counts().2, 1);
    assert_eq!(got.answer("d1:i1:ok").unwrap().lm_family, "a");
}

#[test]
fn pipeline_reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let x = run_pipeline(a.path());
    let y = run_pipeline(b.path());
    for (p, q) in [(&x.dataset, &y.dataset), (&x.scores, &y.scores), (&x.report, &y.report), (&x.table, &y.table)] {
        assert_eq!(fs::read(p).unwrap(), fs::read(q).unwrap(), "{}", p.display());
    }
    let report: MetaEvalReport = serde_json::from_str(&fs::read_to_string(&x.report).unwrap()).unwrap();
    assert_eq!(report.answers, 90);
    assert_eq!(report.pairs, 30);
    assert!(report.model_table.is_some());
    let text = bin()
        .args(["report", x.report.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(text.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&text.stdout).contains("multi_llm@judge"));
}
