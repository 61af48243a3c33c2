use chrono::{TimeZone, Utc};
use ifjudge_annotate::{task_id, AnnotateError, AnnotationService};
use ifjudge_core::{Answer, Dataset, Document, HumanRating, Instruction};
use proptest::prelude::*;

fn dataset(answers: usize, ratings: &[(usize, &str)]) -> Dataset {
    let mut b = Dataset::builder()
        .document(Document::with_id("d1", "test", "A short memo about the budget."))
        .instruction(Instruction {
            id: "i1".into(),
            document_id: "d1".into(),
            text: "Summarize the memo.".into(),
            generator_id: "g".into(),
        });
    for k in 0..answers {
        b = b.answer(Answer {
            id: format!("a{k}"),
            document_id: "d1".into(),
            instruction_id: "i1".into(),
            text: format!("Answer number {k}."),
            generator_id: format!("m{k}"),
            lm_family: "f".into(),
        });
    }
    for (k, who) in ratings {
        b = b.rating(HumanRating {
            answer_id: format!("a{k}"),
            annotator_id: (*who).into(),
            follows_instruction: 1,
            how_well: 4,
            timestamp: Utc.timestamp_opt(0, 0).unwrap(),
        });
    }
    b.build().unwrap()
}

fn lines(path: &std::path::Path) -> usize {
    std::fs::read_to_string(path).map(|s| s.lines().count()).unwrap_or(0)
}

#[test]
fn least_rated_first() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dataset(3, &[(0, "p"), (2, "p"), (2, "q"), (2, "r")]);
    let svc = AnnotationService::open(ds, dir.path().join("log.jsonl")).unwrap();
    let t = svc.next_task("x").unwrap().unwrap();
    assert_eq!(t.answer_id, "a1");
    assert_eq!(t.task_id, task_id("a1", "x"));
    assert_eq!(t.instruction, "Summarize the memo.");
    assert_eq!(t.document, "A short memo about the budget.");
}

#[test]
fn fresh_dataset_and_exhausted_annotator() {
    let dir = tempfile::tempdir().unwrap();
    let svc = AnnotationService::open(dataset(2, &[]), dir.path().join("log.jsonl")).unwrap();
    for _ in 0..2 {
        let t = svc.next_task("x").unwrap().unwrap();
        svc.submit(&t.task_id, "x", 1, 3).unwrap();
    }
    assert_eq!(svc.next_task("x").unwrap(), None);
    assert!(svc.next_task("y").unwrap().is_some());
    assert!(matches!(svc.next_task(""), Err(AnnotateError::BadAnnotator(_))));
}

#[test]
fn submission_validation() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("log.jsonl");
    let svc = AnnotationService::open(dataset(2, &[]), &log).unwrap();
    let t = svc.next_task("x").unwrap().unwrap();
    assert!(matches!(svc.submit(&t.task_id, "x", 1, 6), Err(AnnotateError::Invalid(_))));
    assert!(matches!(svc.submit(&t.task_id, "x", 2, 3), Err(AnnotateError::Invalid(_))));
    assert_eq!(lines(&log), 0);
    assert!(matches!(svc.submit("task-nope", "x", 1, 3), Err(AnnotateError::UnknownTask(_))));
    // a task issued to x is unknown to y
    assert!(matches!(svc.submit(&t.task_id, "y", 1, 3), Err(AnnotateError::UnknownTask(_))));
    svc.submit(&t.task_id, "x", 1, 3).unwrap();
    assert_eq!(lines(&log), 1);
    assert!(matches!(svc.submit(&t.task_id, "x", 0, 2), Err(AnnotateError::Duplicate { .. })));
    assert_eq!(lines(&log), 1);
}

#[test]
fn progress_counts() {
    let dir = tempfile::tempdir().unwrap();
    let svc = AnnotationService::open(dataset(3, &[]), dir.path().join("log.jsonl")).unwrap();
    let p = svc.progress();
    assert_eq!((p.total_answers, p.answers_with_target, p.total_ratings), (3, 0, 0));
    assert!(p.ratings_per_annotator.is_empty());
    for who in ["a", "b", "c"] {
        while let Some(t) = svc.next_task(who).unwrap() {
            svc.submit(&t.task_id, who, 0, 2).unwrap();
        }
    }
    let p = svc.progress();
    assert_eq!((p.answers_with_target, p.total_ratings), (3, 9));
    assert_eq!(p.ratings_per_annotator.values().sum::<usize>(), p.total_ratings);
}

#[test]
fn restart_replays_log_and_drops_partial_line() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("log.jsonl");
    {
        let svc = AnnotationService::open(dataset(3, &[]), &log).unwrap();
        for who in ["a", "b"] {
            let t = svc.next_task(who).unwrap().unwrap();
            svc.submit(&t.task_id, who, 1, 5).unwrap();
        }
    }
    let full = std::fs::read(&log).unwrap();
    for cut in 0..=full.len() {
        std::fs::write(&log, &full[..cut]).unwrap();
        let complete_lines = full[..cut].iter().filter(|&&b| b == b'\n').count();
        let svc = AnnotationService::open(dataset(3, &[]), &log).unwrap();
        assert_eq!(svc.progress().total_ratings, complete_lines, "cut at {cut}");
        assert_eq!(lines(&log), complete_lines);
        // the next rating still lands on its own line
        let t = svc.next_task("z").unwrap().unwrap();
        svc.submit(&t.task_id, "z", 1, 1).unwrap();
        drop(svc);
        let again = AnnotationService::open(dataset(3, &[]), &log).unwrap();
        assert_eq!(again.progress().total_ratings, complete_lines + 1);
    }
}

#[test]
fn garbage_log_line_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("log.jsonl");
    std::fs::write(&log, "{\"kind\":\"rating\"}\n").unwrap();
    assert!(matches!(
        AnnotationService::open(dataset(1, &[]), &log),
        Err(AnnotateError::Log { line: 1, .. })
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn minimum_coverage_never_decreases(order in proptest::collection::vec(0usize..4, 1..60)) {
        let dir = tempfile::tempdir().unwrap();
        let svc = AnnotationService::open(dataset(5, &[]), dir.path().join("log.jsonl")).unwrap();
        let annotators = ["a", "b", "c", "d"];
        let mut min_seen = 0;
        for k in order {
            let who = annotators[k];
            if let Some(t) = svc.next_task(who).unwrap() {
                svc.submit(&t.task_id, who, 1, 3).unwrap();
            }
            let min = *svc.coverage().values().min().unwrap();
            prop_assert!(min >= min_seen);
            min_seen = min;
        }
    }
}
