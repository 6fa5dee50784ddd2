#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use forge_core::corpus::{self, Corpus, Source};
use forge_core::retrieval::{build_index, Hasher};
use forge_core::synthesis::{self, DatasetInstance, Label, Provenance, Split, SynthesisConfig};
use forge_core::demo;

pub fn forge() -> Command {
    Command::new(env!("CARGO_BIN_EXE_forge"))
}

pub fn run(args: &[&str]) -> Output {
    forge().args(args).output().expect("spawn forge")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// A synthesized dataset over `docs` demo documents.
pub fn demo_dataset(seed: u64, docs: usize) -> Vec<DatasetInstance> {
    let records = demo::demo_corpus(seed, docs);
    let (documents, _) = corpus::ingest(&records, Source::Wiki, seed).unwrap();
    let index = build_index(&documents, Hasher::with_log2_bins(18).unwrap()).unwrap();
    let corpus = Corpus::new(documents).unwrap();
    let config = SynthesisConfig { seed, test_fraction: 0.5, ..SynthesisConfig::for_source(Source::Wiki) };
    synthesis::synthesize_dataset(&corpus, &index, None, "none", &config, None).unwrap().0
}

/// Hand-built instance. `intruder` is 1-based; the intruder sentence contains
/// the word "intruder" so mock adapters can find it.
pub fn instance(id: &str, n: usize, intruder: Option<usize>, split: Split) -> DatasetInstance {
    let sentences = (1..=n)
        .map(|i| if Some(i) == intruder { format!("Sentence {i} is the intruder.") } else { format!("Sentence {i} is fine.") })
        .collect();
    DatasetInstance {
        instance_id: id.to_string(),
        source: "wiki".into(),
        sentences,
        label: if intruder.is_some() { Label::Incoherent } else { Label::Coherent },
        intruder_index: intruder,
        provenance: intruder.map(|i| Provenance {
            source_doc_id: id.to_string(),
            replaced_sentence_index: i,
            replaced_text: format!("Sentence {i} is fine."),
            donor_doc_id: format!("{id}-donor"),
            donor_sentence_index: 2,
            donor_text: format!("Sentence {i} is the intruder."),
            similarity_to_replaced: 0.1,
            difficulty: Some(0.9),
            filter_mode: synthesis::FilterMode::AllPool,
        }),
        split,
        probe: None,
    }
}

pub fn write_jsonl<T: serde::Serialize>(path: &Path, items: &[T]) {
    let mut text = String::new();
    for i in items {
        text.push_str(&serde_json::to_string(i).unwrap());
        text.push('\n');
    }
    std::fs::write(path, text).unwrap();
}
