mod common;

use std::time::Duration;

use common::instance;
use forge_cli::adapters::{scorer_from_spec, ExecScorer, HttpScorer};
use forge_core::evaluation::{evaluate, run_adapter, AdapterConfig, ScoreRequest, ScoreResponse, SentenceScorer};
use forge_core::synthesis::{DatasetInstance, Split};

const MARKER_SCORER: &str = r#"
import json, sys
for line in sys.stdin:
    req = json.loads(line)
    s = req["sentences"][req["candidate_index"] - 1]
    print(json.dumps({"instance_id": req["instance_id"], "candidate_index": req["candidate_index"],
                      "score": 0.95 if "intruder" in s else 0.05}), flush=True)
"#;

fn script(dir: &std::path::Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    format!("python3 {}", path.display())
}

fn dataset() -> Vec<DatasetInstance> {
    vec![
        instance("a", 5, Some(3), Split::Test),
        instance("b", 4, None, Split::Test),
        instance("c", 6, Some(6), Split::Test),
        instance("d", 3, Some(2), Split::Test),
    ]
}

#[test]
fn exec_adapter_scores_every_candidate() {
    let dir = tempfile::tempdir().unwrap();
    let cmd = script(dir.path(), "marker.py", MARKER_SCORER);
    let mut scorer = ExecScorer::new(&cmd);
    let ds = dataset();
    let preds = run_adapter(&ds, &mut scorer, &AdapterConfig { batch_size: 3, ..AdapterConfig::default() }).unwrap();
    let m = evaluate(&ds, &preds).unwrap();
    assert_eq!(m.sentence_f1, 100.0);
    assert_eq!(m.doc_accuracy, 100.0);
}

#[test]
fn exec_adapter_restarts_after_a_crash() {
    let dir = tempfile::tempdir().unwrap();
    let flag = dir.path().join("crashed");
    let body = format!(
        "import os, sys\nflag = {flag:?}\nif not os.path.exists(flag):\n    open(flag, 'w').close()\n    sys.exit(3)\n{MARKER_SCORER}",
        flag = flag.display().to_string()
    );
    let cmd = script(dir.path(), "flaky.py", &body);
    let mut scorer = ExecScorer::new(&cmd).with_timeout(Duration::from_secs(10), 1);
    let ds = dataset();
    let preds = run_adapter(&ds, &mut scorer, &AdapterConfig::default()).unwrap();
    assert_eq!(evaluate(&ds, &preds).unwrap().sentence_f1, 100.0);
    assert!(flag.exists());
}

#[test]
fn exec_adapter_times_out_and_names_the_request() {
    let dir = tempfile::tempdir().unwrap();
    let cmd = script(dir.path(), "slow.py", "import time, sys\nfor line in sys.stdin:\n    time.sleep(30)\n");
    let mut scorer = ExecScorer::new(&cmd).with_timeout(Duration::from_millis(300), 0);
    let err = run_adapter(&dataset(), &mut scorer, &AdapterConfig::default()).unwrap_err();
    let text = err.to_string();
    assert!(text.contains("no response"), "{text}");
    assert!(text.contains("\"instance_id\":\"a\""), "{text}");
}

#[test]
fn out_of_range_scores_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let body = MARKER_SCORER.replace("0.95", "1.5");
    let cmd = script(dir.path(), "bad.py", &body);
    let mut scorer = ExecScorer::new(&cmd);
    let err = run_adapter(&dataset(), &mut scorer, &AdapterConfig::default()).unwrap_err();
    assert!(err.to_string().contains("not a probability"), "{err}");
}

#[test]
fn malformed_output_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cmd = script(dir.path(), "junk.py", "import os, sys\nsys.stderr = open(os.devnull, 'w')\nfor line in sys.stdin:\n    print('hello', flush=True)\n");
    let mut scorer = ExecScorer::new(&cmd).with_timeout(Duration::from_secs(5), 0);
    let err = run_adapter(&dataset(), &mut scorer, &AdapterConfig::default()).unwrap_err();
    assert!(err.to_string().contains("malformed"), "{err}");
}

/// Minimal scoring endpoint on an ephemeral port.
fn mock_http() -> (String, std::thread::JoinHandle<usize>) {
    let server = tiny_http::Server::http("127.0.0.1:0").unwrap();
    let url = format!("http://{}", server.server_addr().to_ip().unwrap());
    let handle = std::thread::spawn(move || {
        let mut served = 0;
        while let Ok(Some(mut req)) = server.recv_timeout(Duration::from_secs(5)) {
            let mut body = String::new();
            req.as_reader().read_to_string(&mut body).unwrap();
            assert_eq!(req.url(), "/score");
            let r: ScoreRequest = serde_json::from_str(&body).unwrap();
            let s = &r.sentences[r.candidate_index - 1];
            let resp = ScoreResponse {
                instance_id: r.instance_id.clone(),
                candidate_index: r.candidate_index,
                score: if s.contains("intruder") { 0.8 } else { 0.1 },
            };
            req.respond(tiny_http::Response::from_string(serde_json::to_string(&resp).unwrap())).unwrap();
            served += 1;
        }
        served
    });
    (url, handle)
}

#[test]
fn http_adapter_posts_each_request() {
    let (url, handle) = mock_http();
    let ds = dataset();
    {
        let mut scorer = HttpScorer::new(&url);
        let preds = run_adapter(&ds, &mut scorer, &AdapterConfig::default()).unwrap();
        assert_eq!(evaluate(&ds, &preds).unwrap().sentence_f1, 100.0);
    }
    let expected: usize = ds.iter().map(|d| d.sentences.len() - 1).sum();
    assert_eq!(handle.join().unwrap(), expected);
}

#[test]
fn spec_parsing() {
    let ds = dataset();
    for ok in ["majority", "oracle", "random:0.3", "exec:cat", "http:localhost:1", "http://localhost:1"] {
        assert!(scorer_from_spec(ok, &ds, 1).is_ok(), "{ok}");
    }
    for bad in ["", "exec:", "random:2", "random:x", "gpt"] {
        assert!(scorer_from_spec(bad, &ds, 1).is_err(), "{bad}");
    }
    let mut oracle = scorer_from_spec("oracle", &ds, 1).unwrap();
    let preds = run_adapter(&ds, oracle.as_mut(), &AdapterConfig::default()).unwrap();
    assert_eq!(evaluate(&ds, &preds).unwrap().sentence_f1, 100.0);
}

#[test]
fn unreachable_http_endpoint_fails_cleanly() {
    let mut scorer = HttpScorer::new("127.0.0.1:9");
    let req = ScoreRequest { instance_id: "x".into(), sentences: vec!["a".into(), "b".into(), "c".into()], candidate_index: 2 };
    assert!(scorer.score_batch(&[req]).is_err());
}
