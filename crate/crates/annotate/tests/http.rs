use std::sync::Arc;

use ifjudge_annotate::{router, AnnotationService};
use ifjudge_core::{Answer, Dataset, Document, Instruction};
use serde_json::{json, Value};

fn dataset() -> Dataset {
    Dataset::builder()
        .document(Document::with_id("d1", "test", "TurboPark equipment moves to CAED I."))
        .instruction(Instruction {
            id: "i1".into(),
            document_id: "d1".into(),
            text: "What moves where?".into(),
            generator_id: "g".into(),
        })
        .answers((0..2).map(|k| Answer {
            id: format!("a{k}"),
            document_id: "d1".into(),
            instruction_id: "i1".into(),
            text: format!("Equipment moves, version {k}."),
            generator_id: format!("m{k}"),
            lm_family: "f".into(),
        }))
        .build()
        .unwrap()
}

async fn start(ui: Option<std::path::PathBuf>) -> (String, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let svc = Arc::new(AnnotationService::open(dataset(), dir.path().join("log.jsonl")).unwrap());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, router(svc, ui)).await.unwrap() });
    (format!("http://{addr}"), dir)
}

#[tokio::test]
async fn task_rating_progress_round_trip() {
    let (base, dir) = start(None).await;
    let client = reqwest::Client::new();

    let next: Value = client
        .get(format!("{base}/api/tasks/next?annotator_id=ann1"))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(next["status"], "ok");
    let task = &next["task"];
    assert_eq!(task["answer_id"], "a0");
    assert_eq!(task["instruction"], "What moves where?");

    let post = |body: Value| {
        let client = client.clone();
        let url = format!("{base}/api/ratings");
        async move { client.post(url).json(&body).send().await.unwrap() }
    };
    let bad = post(json!({"task_id": task["task_id"], "annotator_id": "ann1", "follows_instruction": "yes", "how_well": 6})).await;
    assert_eq!(bad.status(), 422);
    let bad = post(json!({"task_id": task["task_id"], "annotator_id": "ann1", "follows_instruction": "maybe", "how_well": 3})).await;
    assert_eq!(bad.status(), 422);
    let unknown = post(json!({"task_id": "task-0000", "annotator_id": "ann1", "follows_instruction": "no", "how_well": 3})).await;
    assert_eq!(unknown.status(), 404);
    let anon = post(json!({"task_id": task["task_id"], "annotator_id": "", "follows_instruction": "no", "how_well": 3})).await;
    assert_eq!(anon.status(), 400);

    let ok = post(json!({"task_id": task["task_id"], "annotator_id": "ann1", "follows_instruction": "yes", "how_well": 4})).await;
    assert_eq!(ok.status(), 200);
    let log = std::fs::read_to_string(dir.path().join("log.jsonl")).unwrap();
    let line: Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    assert_eq!(line["kind"], "rating");
    assert_eq!((line["follows_instruction"].as_u64(), line["how_well"].as_u64()), (Some(1), Some(4)));

    let dup = post(json!({"task_id": task["task_id"], "annotator_id": "ann1", "follows_instruction": "yes", "how_well": 4})).await;
    assert_eq!(dup.status(), 409);

    let progress: Value = client.get(format!("{base}/api/progress")).send().await.unwrap().json().await.unwrap();
    assert_eq!(progress["total_answers"], 2);
    assert_eq!(progress["total_ratings"], 1);
    assert_eq!(progress["ratings_per_annotator"]["ann1"], 1);

    let next = client
        .get(format!("{base}/api/tasks/next?annotator_id=ann1"))
        .send()
        .await
        .unwrap()
        .json::<Value>()
        .await
        .unwrap();
    assert_eq!(next["task"]["answer_id"], "a1");
    let bad_id = client.get(format!("{base}/api/tasks/next")).send().await.unwrap();
    assert_eq!(bad_id.status(), 400);
}

#[tokio::test]
async fn no_task_when_done() {
    let (base, _dir) = start(None).await;
    let client = reqwest::Client::new();
    for _ in 0..2 {
        let next: Value = client
            .get(format!("{base}/api/tasks/next?annotator_id=solo"))
            .send()
            .await
            .unwrap()
            .json()
            .await
            .unwrap();
        let r = client
            .post(format!("{base}/api/ratings"))
            .json(&json!({"task_id": next["task"]["task_id"], "annotator_id": "solo", "follows_instruction": "no", "how_well": 2}))
            .send()
            .await
            .unwrap();
        assert_eq!(r.status(), 200);
    }
    let next: Value = client
        .get(format!("{base}/api/tasks/next?annotator_id=solo"))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(next, json!({"status": "no_task"}));
}

#[tokio::test]
async fn serves_static_client() {
    let ui = tempfile::tempdir().unwrap();
    std::fs::write(ui.path().join("index.html"), "<html>rater</html>").unwrap();
    let (base, _dir) = start(Some(ui.path().to_path_buf())).await;
    let body = reqwest::get(format!("{base}/ui/")).await.unwrap().text().await.unwrap();
    assert_eq!(body, "<html>rater</html>");
}
