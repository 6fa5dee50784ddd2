//! Artefact audit: can a sentence be recognised as an intruder without its
//! document?
//!
//! A bag-of-words logistic classifier is trained on isolated non-opening
//! sentences from the train split and scored on the test split with the same
//! document-level and sentence-level metrics used for real detectors. A clean
//! dataset leaves it no better than predicting "coherent" everywhere.

use serde::{Deserialize, Serialize};

use crate::evaluation::{evaluate, EvaluationError, MetricsReport, PredictionSet};
use crate::logistic::{self, LogisticConfig};
use crate::par;
use crate::retrieval::{Hasher, IdfSource, IdfTable, RetrievalError, SparseVector};
use crate::synthesis::{DatasetInstance, Split};

#[derive(Debug, thiserror::Error)]
pub enum AuditError {
    #[error("dataset has no {0:?} instances")]
    MissingSplit(Split),
    #[error(transparent)]
    Evaluation(#[from] EvaluationError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StandaloneExample {
    pub instance_id: String,
    /// 1-based, always ≥ 2.
    pub sentence_index: usize,
    pub sentence: String,
    pub is_intruder: bool,
}

#[derive(Debug, Clone, Default)]
pub struct StandaloneSets {
    pub train: Vec<StandaloneExample>,
    pub test: Vec<StandaloneExample>,
}

fn standalone(inst: &DatasetInstance) -> impl Iterator<Item = StandaloneExample> + '_ {
    inst.sentences.iter().enumerate().skip(1).map(move |(i, s)| StandaloneExample {
        instance_id: inst.instance_id.clone(),
        sentence_index: i + 1,
        sentence: s.clone(),
        is_intruder: inst.intruder_index == Some(i + 1),
    })
}

pub fn extract_standalone(dataset: &[DatasetInstance]) -> Result<StandaloneSets, AuditError> {
    let mut sets = StandaloneSets::default();
    for inst in dataset {
        let target = match inst.split {
            Split::Train => &mut sets.train,
            Split::Test => &mut sets.test,
        };
        target.extend(standalone(inst));
    }
    for (split, examples) in [(Split::Train, &sets.train), (Split::Test, &sets.test)] {
        if !dataset.iter().any(|d| d.split == split) || examples.is_empty() {
            return Err(AuditError::MissingSplit(split));
        }
    }
    Ok(sets)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditConfig {
    /// Maximum classifier-over-majority accuracy gain (points) for a clean verdict.
    pub acc_margin: f64,
    /// Maximum classifier sentence F1 (points) for a clean verdict.
    pub f1_margin: f64,
    pub log2_bins: u32,
    pub threshold: f64,
    pub logistic: LogisticConfig,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            acc_margin: 2.0,
            f1_margin: 10.0,
            log2_bins: 18,
            threshold: 0.5,
            logistic: LogisticConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Clean,
    Suspect,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Clean => "clean",
            Verdict::Suspect => "suspect",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub majority_acc: f64,
    pub classifier_acc: f64,
    pub majority_f1: f64,
    pub classifier_f1: f64,
    /// Plain per-sentence accuracy, for reference.
    pub majority_sentence_acc: f64,
    pub classifier_sentence_acc: f64,
    pub verdict: Verdict,
    pub acc_margin: f64,
    pub f1_margin: f64,
    pub train_examples: usize,
    pub train_positives: usize,
    pub test_examples: usize,
    pub test_positives: usize,
    pub config: AuditConfig,
    pub warning: Option<String>,
}

fn sentence_accuracy(m: &MetricsReport) -> f64 {
    let c = m.sentence;
    let total = c.tp + c.fp + c.fn_ + c.tn;
    if total == 0 {
        0.0
    } else {
        100.0 * (c.tp + c.tn) as f64 / total as f64
    }
}

pub fn run_audit(dataset: &[DatasetInstance], config: &AuditConfig) -> Result<AuditReport, AuditError> {
    let sets = extract_standalone(dataset)?;
    let test_instances: Vec<DatasetInstance> = dataset.iter().filter(|d| d.split == Split::Test).cloned().collect();

    let hasher = Hasher::with_log2_bins(config.log2_bins)?;
    let idf = IdfTable::from_texts(hasher, sets.train.iter().map(|e| e.sentence.as_str()));
    let featurize = |e: &StandaloneExample| idf.weighted_vector(&e.sentence).normalized();

    let train_positives = sets.train.iter().filter(|e| e.is_intruder).count();
    let mut warning = None;
    let model = if train_positives == 0 || train_positives == sets.train.len() {
        warning = Some("training set has a single class; classifier reduces to the majority baseline".to_string());
        logistic::LogisticModel::constant(if train_positives == 0 { 0.0 } else { 1.0 })
    } else {
        let train: Vec<(SparseVector, bool)> = par::map(&sets.train, |e| (featurize(e), e.is_intruder));
        logistic::train(&train, hasher.num_bins() as usize, &config.logistic)
    };

    let scores: Vec<f64> = par::map(&sets.test, |e| model.predict_proba(&featurize(e)));
    let mut predictions = PredictionSet::new();
    for (e, p) in sets.test.iter().zip(scores) {
        predictions.insert(&e.instance_id, e.sentence_index, p >= config.threshold);
    }
    let classifier = evaluate(&test_instances, &predictions)?;
    let majority = evaluate(&test_instances, &PredictionSet::all_negative(&test_instances))?;

    let gain = classifier.doc_accuracy - majority.doc_accuracy;
    let verdict = if gain > config.acc_margin || classifier.sentence_f1 > config.f1_margin {
        Verdict::Suspect
    } else {
        Verdict::Clean
    };
    Ok(AuditReport {
        majority_acc: majority.doc_accuracy,
        classifier_acc: classifier.doc_accuracy,
        majority_f1: majority.sentence_f1,
        classifier_f1: classifier.sentence_f1,
        majority_sentence_acc: sentence_accuracy(&majority),
        classifier_sentence_acc: sentence_accuracy(&classifier),
        verdict,
        acc_margin: config.acc_margin,
        f1_margin: config.f1_margin,
        train_examples: sets.train.len(),
        train_positives,
        test_examples: sets.test.len(),
        test_positives: sets.test.iter().filter(|e| e.is_intruder).count(),
        config: *config,
        warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthesis::Label;

    fn inst(id: &str, split: Split, n: usize, intruder: Option<usize>) -> DatasetInstance {
        DatasetInstance {
            instance_id: id.into(),
            source: "wiki".into(),
            sentences: (1..=n).map(|i| format!("Sentence {i} of {id}.")).collect(),
            label: if intruder.is_some() { Label::Incoherent } else { Label::Coherent },
            intruder_index: intruder,
            provenance: None,
            split,
            probe: None,
        }
    }

    #[test]
    fn standalone_extraction() {
        let data = vec![inst("a", Split::Train, 5, Some(3)), inst("b", Split::Test, 4, None)];
        let sets = extract_standalone(&data).unwrap();
        assert_eq!(sets.train.len(), 4);
        assert_eq!(sets.train.iter().filter(|e| e.is_intruder).count(), 1);
        assert!(sets.train.iter().all(|e| e.sentence_index >= 2));
        assert!(sets.test.iter().all(|e| !e.is_intruder));
    }

    #[test]
    fn missing_split_is_an_error() {
        let data = vec![inst("a", Split::Train, 5, Some(3))];
        assert!(matches!(extract_standalone(&data), Err(AuditError::MissingSplit(Split::Test))));
    }

    #[test]
    fn all_coherent_matches_majority() {
        let data: Vec<_> = (0..10)
            .map(|i| inst(&format!("d{i}"), if i < 7 { Split::Train } else { Split::Test }, 4, None))
            .collect();
        let r = run_audit(&data, &AuditConfig::default()).unwrap();
        assert_eq!(r.classifier_acc, r.majority_acc);
        assert_eq!(r.verdict, Verdict::Clean);
        assert!(r.warning.is_some());
    }
}
