mod common;

use std::path::Path;

use common::{run, stderr, stdout};
use forge_core::report::KvDocument;
use forge_core::synthesis::DatasetInstance;

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn report(text: &str) -> KvDocument {
    KvDocument::parse(text).unwrap()
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let work = format!("work_dir={}", dir.path().join("w").display());
    let cases: Vec<Vec<&str>> = vec![
        vec![],
        vec!["frobnicate"],
        vec!["pipeline", "--set", "nope=1"],
        vec!["pipeline", "--set", "similarity_cap=3"],
        vec!["pipeline", "--stages", "ingest,frobnicate", "--set", "work_dir=x"],
        vec!["pipeline", "--stages", "ingest", "--set", &work],
        vec!["ingest", "--input", "demo:lots", "--out", "x.jsonl"],
        vec!["ingest", "--input", "records.xml", "--format", "xml", "--out", "x.jsonl"],
        vec!["--threads", "0", "demo-corpus", "--out", "x.jsonl"],
    ];
    for args in cases {
        let out = run(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", stderr(&out));
    }
}

#[test]
fn runtime_failures_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.jsonl");
    let out = run(&["ingest", "--input", p(&missing), "--out", p(&dir.path().join("c.jsonl"))]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
    assert!(stderr(&out).contains("missing.jsonl"));

    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"instance_id\": 3}\n").unwrap();
    let out = run(&["eval", "--dataset", p(&bad)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn stage_commands_chain_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = |n: &str| dir.path().join(n);
    let steps: Vec<Vec<String>> = vec![
        vec!["demo-corpus".into(), "--docs".into(), "300".into(), "--seed".into(), "5".into(), "--out".into(), p(&d("raw.jsonl")).into()],
        vec!["ingest".into(), "--input".into(), p(&d("raw.jsonl")).into(), "--out".into(), p(&d("docs.jsonl")).into(), "--seed".into(), "5".into()],
        vec!["index".into(), "--corpus".into(), p(&d("docs.jsonl")).into(), "--out".into(), p(&d("index.jsonl")).into(), "--log2-bins".into(), "20".into()],
        vec![
            "synthesize".into(), "--corpus".into(), p(&d("docs.jsonl")).into(), "--index".into(), p(&d("index.jsonl")).into(),
            "--out".into(), p(&d("ds.jsonl")).into(), "--seed".into(), "5".into(), "--test-fraction".into(), "0.3".into(),
        ],
        vec!["audit".into(), "--dataset".into(), p(&d("ds.jsonl")).into(), "--report".into(), p(&d("audit.report")).into()],
        vec!["probe".into(), "--dataset".into(), p(&d("ds.jsonl")).into(), "--out".into(), p(&d("probes.jsonl")).into(), "--n".into(), "5".into(), "--split".into(), "all".into()],
        vec![
            "eval".into(), "--dataset".into(), p(&d("ds.jsonl")).into(), "--probes".into(), p(&d("probes.jsonl")).into(),
            "--adapter".into(), "oracle".into(), "--split".into(), "all".into(), "--predictions".into(), p(&d("preds.json")).into(),
        ],
    ];
    let mut outputs = Vec::new();
    for args in &steps {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let out = run(&args);
        assert!(out.status.success(), "{args:?}: {}", stderr(&out));
        outputs.push(stdout(&out));
    }
    let ingest = report(&outputs[1]);
    assert_eq!(ingest.get("stage"), Some("ingest"));
    assert_eq!(ingest.get("kept"), Some("300"));

    let synth = report(&outputs[3]);
    assert_eq!(synth.get("documents"), Some("300"));
    assert_eq!(synth.get("designated_without_candidate"), Some("0"));
    let dataset: Vec<DatasetInstance> = common_read(&d("ds.jsonl"));
    assert_eq!(dataset.len(), 300);
    assert!(dataset.iter().all(|i| i.validate().is_ok()));

    let audit = report(&std::fs::read_to_string(d("audit.report")).unwrap());
    assert!(matches!(audit.get("verdict"), Some("clean") | Some("suspect")));

    let eval = report(&outputs[6]);
    assert_eq!(eval.get("sentence_f1"), Some("100.0000"));
    assert_eq!(eval.get("doc_accuracy"), Some("100.0000"));
    assert_eq!(eval.get("delta.negation.delta_f1"), Some("0.0000"));
    assert!(d("preds.json").exists());

    for entry in std::fs::read_dir(dir.path()).unwrap() {
        let name = entry.unwrap().file_name();
        assert!(!name.to_string_lossy().ends_with(".partial"), "{name:?} left behind");
    }
}

fn common_read<T: serde::de::DeserializeOwned>(path: &Path) -> Vec<T> {
    std::fs::read_to_string(path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn pipeline_reads_a_config_file_and_records_it() {
    let dir = tempfile::tempdir().unwrap();
    let work = dir.path().join("work");
    let config = dir.path().join("forge.conf");
    std::fs::write(
        &config,
        format!(
            "# demo run\nseed=11\ninput=demo:150\nwork_dir={}\nlog2_bins=18\nprobe_n=3\nprobe_split=all\nadapter=random:0.3\n",
            work.display()
        ),
    )
    .unwrap();
    let out = run(&["pipeline", "--config", p(&config), "--set", "test_fraction=0.4"]);
    assert!(out.status.success(), "{}", stderr(&out));
    for f in ["config.kv", "corpus.jsonl", "index.jsonl", "dataset.jsonl", "probes.jsonl"] {
        assert!(work.join(f).exists(), "{f}");
    }
    let recorded = report(&std::fs::read_to_string(work.join("config.kv")).unwrap());
    assert_eq!(recorded.get("seed"), Some("11"));
    assert_eq!(recorded.get("test_fraction"), Some("0.4"));
    let hash = forge_core::report::config_hash(&recorded.to_map());
    for stage in ["ingest", "index", "synthesize", "audit", "probe", "eval"] {
        let r = report(&std::fs::read_to_string(work.join(format!("{stage}.report"))).unwrap());
        assert_eq!(r.get("stage"), Some(stage));
        assert_eq!(r.get("config_hash"), Some(hash.as_str()), "{stage}");
        assert_eq!(r.get("seed"), Some("11"));
    }

    // Running a later stage alone reuses the earlier outputs.
    let before = std::fs::read(work.join("eval.report")).unwrap();
    let out = run(&["pipeline", "--config", p(&config), "--set", "test_fraction=0.4", "--stages", "eval"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(std::fs::read(work.join("eval.report")).unwrap(), before);
}

#[test]
fn standalone_mode_and_thresholds_change_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("ds.jsonl");
    common::write_jsonl(&ds, &common::demo_dataset(3, 120));
    let low = run(&["eval", "--dataset", p(&ds), "--adapter", "random:0.5", "--threshold", "0.0"]);
    assert!(low.status.success(), "{}", stderr(&low));
    assert_eq!(report(&stdout(&low)).get("sentence_recall"), Some("100.0000"));
    let standalone = run(&["eval", "--dataset", p(&ds), "--adapter", "majority", "--mode", "standalone"]);
    assert!(standalone.status.success());
    assert_eq!(report(&stdout(&standalone)).get("sentence_f1"), Some("0.0000"));
    let bad_mode = run(&["eval", "--dataset", p(&ds), "--mode", "sideways"]);
    assert_eq!(bad_mode.status.code(), Some(2));
}
