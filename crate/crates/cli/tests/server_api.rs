mod common;

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::process::Stdio;

use common::instance;
use forge_cli::server::{self, ServerOptions};
use forge_core::annotate::{self, AggregateReport, AnnotationStore, Choice, Hit, HitView};
use forge_core::synthesis::{DatasetInstance, Split};
use serde_json::json;

const TOKEN: &str = "s3cret";

/// Twenty test documents (every fourth one coherent) plus three easy controls.
fn fixture() -> Vec<DatasetInstance> {
    let mut ds = Vec::new();
    for i in 0..20 {
        let n = 3 + i % 6;
        let intruder = (i % 4 != 0).then_some(2 + i % (n - 1));
        ds.push(instance(&format!("doc-{i:02}"), n, intruder, Split::Test));
    }
    for i in 0..3 {
        ds.push(instance(&format!("ctl-{i}"), 5, Some(4), Split::Train));
    }
    ds
}

fn hits_for(ds: &[DatasetInstance]) -> Vec<Hit> {
    let test: Vec<_> = ds.iter().filter(|d| d.split == Split::Test).cloned().collect();
    annotate::build_hits(&test, &annotate::easy_controls(ds, 0.5), 7).unwrap()
}

fn agent() -> ureq::Agent {
    ureq::AgentBuilder::new().build()
}

fn get_hit(base: &str, worker: &str) -> Result<HitView, u16> {
    match agent().get(&format!("{base}/api/hit?worker={worker}")).call() {
        Ok(r) => Ok(r.into_json().unwrap()),
        Err(ureq::Error::Status(code, _)) => Err(code),
        Err(e) => panic!("{e}"),
    }
}

fn post(base: &str, body: serde_json::Value) -> u16 {
    match agent().post(&format!("{base}/api/annotation")).send_json(body) {
        Ok(r) => r.status(),
        Err(ureq::Error::Status(code, _)) => code,
        Err(e) => panic!("{e}"),
    }
}

fn choice_json(c: Choice) -> serde_json::Value {
    serde_json::to_value(c).unwrap()
}

/// Workers 0-2 answer gold, workers 3-4 always answer "none".
fn answer(worker: usize, gold: Choice) -> Choice {
    if worker < 3 {
        gold
    } else {
        Choice::None
    }
}

#[test]
fn five_workers_complete_every_hit() {
    let ds = fixture();
    let gold: BTreeMap<String, Choice> = ds.iter().map(|d| (d.instance_id.clone(), Choice::gold(d))).collect();
    let hits = hits_for(&ds);
    assert_eq!(hits.len(), 5);
    let state = tempfile::tempdir().unwrap();
    let store = AnnotationStore::open(state.path(), hits.clone(), &ds, 7).unwrap();
    let running = server::start(
        "127.0.0.1:0",
        store,
        ServerOptions { static_dir: None, export_token: Some(TOKEN.into()), min_agreement: 3 },
    )
    .unwrap();
    let base = running.url();

    for w in 0..5 {
        let worker = format!("w{w}");
        let mut done = 0;
        while let Ok(view) = get_hit(&base, &worker) {
            assert_eq!(view.documents.len(), 5);
            assert!(view.completed.is_empty());
            for d in &view.documents {
                let c = answer(w, gold[&d.document_id]);
                let body = json!({"hit_id": view.hit_id, "document_id": d.document_id, "worker_id": worker, "choice": choice_json(c)});
                assert_eq!(post(&base, body.clone()), 200, "{body}");
                assert_eq!(post(&base, body), 409, "duplicates are rejected");
            }
            done += 1;
        }
        assert_eq!(done, 5, "worker {worker} saw every HIT once");
        assert_eq!(get_hit(&base, &worker), Err(404));
    }
    assert_eq!(get_hit(&base, "late-worker"), Err(404), "all assignments are used up");

    let report: AggregateReport = agent().get(&format!("{base}/api/aggregate")).call().unwrap().into_json().unwrap();
    assert_eq!(report.labels.len(), 20);
    for l in &report.labels {
        let expected_agreement = if gold[&l.document_id] == Choice::None { 5 } else { 3 };
        assert!(l.retained && l.matches_gold && l.votes == 5, "{l:?}");
        assert_eq!(l.agreement_count, expected_agreement, "{l:?}");
    }
    assert_eq!(report.retained_fraction, 1.0);
    assert_eq!(report.retained_matching_gold_fraction, 1.0);
    for wq in &report.workers {
        let expected = if wq.worker_id.as_str() < "w3" { 1.0 } else { 0.0 };
        assert_eq!(wq.control_accuracy, expected, "{}", wq.worker_id);
    }

    let unauth = agent().get(&format!("{base}/api/export")).call();
    assert!(matches!(unauth, Err(ureq::Error::Status(401, _))));
    let export = agent()
        .get(&format!("{base}/api/export"))
        .set("Authorization", &format!("Bearer {TOKEN}"))
        .call()
        .unwrap()
        .into_string()
        .unwrap();
    let annotations = annotate::parse_export(&export).unwrap();
    assert_eq!(annotations.len(), 5 * 5 * 5);
    running.shutdown();

    // Offline aggregation of the export reproduces the live report, twice over.
    let again = annotate::aggregate(&hits, &annotations, &gold, 3);
    assert_eq!(again, report);
    let mut reversed = annotations.clone();
    reversed.reverse();
    assert_eq!(annotate::aggregate(&hits, &reversed, &gold, 3), report);

    // The CLI aggregate command agrees as well.
    let dir = tempfile::tempdir().unwrap();
    let (ds_path, hits_path, ann_path, out_path) =
        (dir.path().join("ds.jsonl"), dir.path().join("hits.json"), dir.path().join("ann.jsonl"), dir.path().join("agg.json"));
    common::write_jsonl(&ds_path, &ds);
    std::fs::write(&hits_path, serde_json::to_string(&hits).unwrap()).unwrap();
    std::fs::write(&ann_path, &export).unwrap();
    let args = [
        "aggregate", "--dataset", ds_path.to_str().unwrap(), "--hits", hits_path.to_str().unwrap(), "--annotations",
        ann_path.to_str().unwrap(), "--out", out_path.to_str().unwrap(),
    ];
    let out = common::run(&args);
    assert!(out.status.success(), "{}", common::stderr(&out));
    assert!(common::stdout(&out).contains("retained_fraction=1.0000"));
    let cli_report: AggregateReport = serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(cli_report, report);

    // State survives a restart.
    let reopened = AnnotationStore::open(state.path(), hits, &ds, 7).unwrap();
    assert_eq!(reopened.annotations().len(), 125);
}

#[test]
fn bad_requests_get_client_errors() {
    let ds = fixture();
    let hits = hits_for(&ds);
    let store = AnnotationStore::in_memory(hits, &ds).unwrap();
    let running = server::start("127.0.0.1:0", store, ServerOptions { min_agreement: 3, ..Default::default() }).unwrap();
    let base = running.url();

    assert_eq!(get_hit(&base, ""), Err(400));
    let view = get_hit(&base, "w").unwrap();
    let doc = &view.documents[0].document_id;
    let n = view.documents[0].sentences.len();
    let mk = |choice: serde_json::Value| json!({"hit_id": view.hit_id, "document_id": doc, "worker_id": "w", "choice": choice});
    assert_eq!(post(&base, mk(json!(1))), 400, "opening sentence");
    assert_eq!(post(&base, mk(json!(n + 1))), 400, "past the end");
    assert_eq!(post(&base, mk(json!("maybe"))), 400, "not a choice");
    assert_eq!(post(&base, json!({"hit_id": "hit-9999", "document_id": doc, "worker_id": "w", "choice": "NONE"})), 400);
    assert_eq!(post(&base, json!({"hit_id": view.hit_id, "document_id": doc, "worker_id": "stranger", "choice": "NONE"})), 400);
    assert_eq!(post(&base, mk(json!("NONE"))), 200);

    // A revisit shows progress without reassigning.
    let again = get_hit(&base, "w").unwrap();
    assert_eq!(again.hit_id, view.hit_id);
    assert_eq!(again.completed, vec![doc.clone()]);

    let export = agent().get(&format!("{base}/api/export")).set("Authorization", "Bearer x").call();
    assert!(matches!(export, Err(ureq::Error::Status(403, _))), "export is off without a token");
    assert!(matches!(agent().get(&format!("{base}/api/nope")).call(), Err(ureq::Error::Status(404, _))));
}

#[test]
fn documents_in_views_carry_no_labels() {
    let ds = fixture();
    let store = AnnotationStore::in_memory(hits_for(&ds), &ds).unwrap();
    let running = server::start("127.0.0.1:0", store, ServerOptions::default()).unwrap();
    let raw = agent().get(&format!("{}/api/hit?worker=w", running.url())).call().unwrap().into_string().unwrap();
    for leak in ["intruder_index", "label", "control", "filler", "provenance"] {
        assert!(!raw.contains(&format!("\"{leak}")), "{leak} leaked: {raw}");
    }
}

#[test]
fn serves_static_files_without_escaping_the_root() {
    let ui = tempfile::tempdir().unwrap();
    std::fs::write(ui.path().join("index.html"), "<h1>annotate</h1>").unwrap();
    let ds = fixture();
    let store = AnnotationStore::in_memory(hits_for(&ds), &ds).unwrap();
    let running = server::start(
        "127.0.0.1:0",
        store,
        ServerOptions { static_dir: Some(ui.path().to_path_buf()), ..Default::default() },
    )
    .unwrap();
    let body = agent().get(&format!("{}/", running.url())).call().unwrap().into_string().unwrap();
    assert!(body.contains("annotate"));
    assert!(agent().get(&format!("{}/%2e%2e/%2e%2e/etc/passwd", running.url())).call().is_err());
}

#[test]
fn serve_command_starts_and_persists_hits() {
    let dir = tempfile::tempdir().unwrap();
    let ds_path = dir.path().join("ds.jsonl");
    common::write_jsonl(&ds_path, &fixture());
    let state = dir.path().join("state");
    let mut child = common::forge()
        .args(["serve", "--dataset", ds_path.to_str().unwrap(), "--state-dir", state.to_str().unwrap()])
        .args(["--bind", "127.0.0.1:0", "--export-token", TOKEN, "--seed", "3"])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut lines = BufReader::new(child.stderr.take().unwrap()).lines();
    let url = loop {
        let line = lines.next().expect("server output").unwrap();
        if let Some(u) = line.strip_prefix("listening on ") {
            break u.to_string();
        }
    };
    let view = get_hit(&url, "w1").unwrap();
    assert_eq!(view.documents.len(), 5);
    child.kill().unwrap();
    child.wait().unwrap();
    let hits: Vec<Hit> = serde_json::from_str(&std::fs::read_to_string(state.join("hits.json")).unwrap()).unwrap();
    assert_eq!(hits.len(), 5);
    assert!(state.join("events.jsonl").exists());
}
