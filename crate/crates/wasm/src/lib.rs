use std::cell::OnceCell;

use forge_core::corpus::{ingest, segment_sentences, Source};
use forge_core::demo::demo_corpus;
use forge_core::evaluation::{evaluate, MetricsReport, PredictionSet};
use forge_core::probes::{apply_probe, Phenomenon, ProbeInstance};
use forge_core::retrieval::{Hasher, IdfSource, IdfTable};
use forge_core::synthesis::{DatasetInstance, Label, Split};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

const BACKGROUND_DOCS: usize = 300;

thread_local! {
    static BACKGROUND: OnceCell<Vec<String>> = const { OnceCell::new() };
}

/// Document texts from the bundled demo corpus, used for IDF statistics.
fn background() -> Vec<String> {
    BACKGROUND.with(|cell| {
        cell.get_or_init(|| {
            let (docs, _) = ingest(&demo_corpus(0, BACKGROUND_DOCS), Source::Wiki, 0).expect("demo corpus ingests");
            docs.iter().map(|d| d.text()).collect()
        })
        .clone()
    })
}

pub fn probe_json(sentence: &str, phenomenon: &str, seed: u64) -> Result<String, String> {
    let chosen: Vec<Phenomenon> = if phenomenon == "all" {
        Phenomenon::ALL.to_vec()
    } else {
        vec![phenomenon.parse().map_err(|e| format!("{e}"))?]
    };
    let out: Vec<ProbeInstance> =
        chosen.into_iter().map(|p| apply_probe(sentence, p, &mut ChaCha8Rng::seed_from_u64(seed))).collect();
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[derive(Debug, Serialize, PartialEq)]
pub struct SentenceScore {
    pub index: usize,
    pub text: String,
    /// Mean TF-IDF cosine to every other sentence of the document.
    pub mean_similarity: f64,
    pub max_similarity: f64,
    pub most_similar: usize,
}

#[derive(Debug, Serialize, PartialEq)]
pub struct Intrusion {
    pub sentences: Vec<SentenceScore>,
    /// Non-opening sentence least similar to the rest.
    pub likely_intruder: Option<usize>,
}

pub fn intrusion_report(text: &str) -> Result<Intrusion, String> {
    let sentences: Vec<String> = segment_sentences(text).into_iter().map(|s| s.text).collect();
    if sentences.len() < 2 {
        return Err("need at least two sentences".into());
    }
    let mut texts = background();
    texts.extend(sentences.iter().cloned());
    let idf = IdfTable::from_texts(Hasher::default(), texts.iter().map(String::as_str));
    let n = sentences.len();
    let mut scores = Vec::with_capacity(n);
    for (i, s) in sentences.iter().enumerate() {
        let sims: Vec<(usize, f64)> =
            (0..n).filter(|&j| j != i).map(|j| (j + 1, idf.text_similarity(s, &sentences[j]))).collect();
        let (most_similar, max_similarity) =
            sims.iter().copied().fold((0, -1.0), |best, x| if x.1 > best.1 { x } else { best });
        scores.push(SentenceScore {
            index: i + 1,
            text: s.clone(),
            mean_similarity: sims.iter().map(|x| x.1).sum::<f64>() / sims.len() as f64,
            max_similarity,
            most_similar,
        });
    }
    let likely_intruder =
        scores.iter().skip(1).min_by(|a, b| a.mean_similarity.total_cmp(&b.mean_similarity)).map(|s| s.index);
    Ok(Intrusion { sentences: scores, likely_intruder })
}

pub fn similarity_score(a: &str, b: &str) -> f64 {
    let texts = background();
    let idf = IdfTable::from_texts(Hasher::default(), texts.iter().map(String::as_str).chain([a, b]));
    idf.text_similarity(a, b)
}

/// Parses one document per line: `<sentences> <gold> <flagged>`, where gold
/// is an intruder index or `-`, and flagged is a comma list or `-`.
pub fn metrics_from_table(table: &str) -> Result<MetricsReport, String> {
    let mut dataset = Vec::new();
    let mut preds = PredictionSet::new();
    for (n, raw) in table.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: &str| format!("line {}: {msg}: {raw:?}", n + 1);
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 3 {
            return Err(err("expected three columns"));
        }
        let len: usize = cols[0].parse().map_err(|_| err("bad sentence count"))?;
        if !(2..=64).contains(&len) {
            return Err(err("sentence count must be 2..=64"));
        }
        let parse_index = |s: &str| -> Result<usize, String> {
            let i: usize = s.parse().map_err(|_| err("bad index"))?;
            if (2..=len).contains(&i) {
                Ok(i)
            } else {
                Err(err("index must be between 2 and the sentence count"))
            }
        };
        let gold = if cols[1] == "-" { None } else { Some(parse_index(cols[1])?) };
        let flagged: Vec<usize> =
            if cols[2] == "-" { Vec::new() } else { cols[2].split(',').map(parse_index).collect::<Result<_, _>>()? };
        let id = format!("doc-{:04}", dataset.len() + 1);
        for i in 2..=len {
            preds.insert(&id, i, flagged.contains(&i));
        }
        dataset.push(DatasetInstance {
            instance_id: id,
            source: "demo".into(),
            sentences: (1..=len).map(|i| format!("sentence {i}")).collect(),
            label: if gold.is_some() { Label::Incoherent } else { Label::Coherent },
            intruder_index: gold,
            provenance: None,
            split: Split::Test,
            probe: None,
        });
    }
    if dataset.is_empty() {
        return Err("no documents".into());
    }
    evaluate(&dataset, &preds).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn probe(sentence: &str, phenomenon: &str, seed: u32) -> Result<String, JsValue> {
    probe_json(sentence, phenomenon, u64::from(seed)).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn intrusion(text: &str) -> Result<String, JsValue> {
    intrusion_report(text)
        .and_then(|r| serde_json::to_string(&r).map_err(|e| e.to_string()))
        .map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn similarity(a: &str, b: &str) -> f64 {
    similarity_score(a, b)
}

#[wasm_bindgen]
pub fn metrics(table: &str) -> Result<String, JsValue> {
    metrics_from_table(table)
        .and_then(|m| serde_json::to_string(&m).map_err(|e| e.to_string()))
        .map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probes_every_phenomenon() {
        let out: Vec<serde_json::Value> =
            serde_json::from_str(&probe_json("She was in this city.", "all", 1).unwrap()).unwrap();
        assert_eq!(out.len(), 8);
        let one: Vec<ProbeInstance> = serde_json::from_str(&probe_json("She left.", "gender", 1).unwrap()).unwrap();
        assert_eq!(one[0].probed_sentence, "He left.");
        assert!(probe_json("x", "weather", 0).is_err());
    }

    #[test]
    fn off_topic_sentence_stands_out() {
        let text = "The river rises in the northern hills. The river flows past the old mill town. \
                    The committee approved the annual budget. The river reaches the sea near the harbour.";
        let r = intrusion_report(text).unwrap();
        assert_eq!(r.sentences.len(), 4);
        assert_eq!(r.likely_intruder, Some(3));
        assert!(intrusion_report("Only one sentence.").is_err());
    }

    #[test]
    fn similarity_is_one_for_identical_text() {
        assert!((similarity_score("The mill closed.", "The mill closed.") - 1.0).abs() < 1e-12);
        assert!(similarity_score("The mill closed.", "Budgets were approved.") < 0.1);
    }

    #[test]
    fn metrics_table() {
        let m = metrics_from_table("# n gold flagged\n5 3 3\n4 - -\n6 2 4\n3 - 2\n").unwrap();
        assert_eq!(m.sentence.tp, 1);
        assert_eq!(m.sentence.fp, 2);
        assert_eq!(m.sentence.fn_, 1);
        assert_eq!(m.documents_correct, 3);
        assert_eq!(m.doc_accuracy, 75.0);
        assert!(metrics_from_table("5 1 -").is_err());
        assert!(metrics_from_table("").is_err());
    }
}
