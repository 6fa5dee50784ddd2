//! Two-level metrics, the scoring adapter harness and probe ΔF1.
//!
//! Sentence indices are 1-based; only non-opening sentences (index ≥ 2) are
//! ever predicted.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::seed;
use crate::synthesis::{DatasetInstance, Label};
use rand::Rng;

#[derive(Debug, thiserror::Error)]
pub enum EvaluationError {
    #[error("predictions do not cover {} sentence(s), first: {}", .missing.len(), fmt_pairs(.missing))]
    Coverage { missing: Vec<(String, usize)> },
    #[error("prediction for opening sentence of `{0}`")]
    OpeningSentence(String),
    #[error("prediction for unknown sentence {1} of `{0}`")]
    Unknown(String, usize),
    #[error("probe mapping mismatch: {0}")]
    Mapping(String),
    #[error("adapter error: {message} (request {request})")]
    Adapter { message: String, request: String },
}

fn fmt_pairs(pairs: &[(String, usize)]) -> String {
    pairs
        .iter()
        .take(5)
        .map(|(id, i)| format!("{id}:{i}"))
        .collect::<Vec<_>>()
        .join(", ")
}

/// instance_id → sentence index → predicted intruder.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PredictionSet(pub BTreeMap<String, BTreeMap<usize, bool>>);

impl PredictionSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, instance_id: &str, index: usize, positive: bool) {
        self.0.entry(instance_id.to_string()).or_default().insert(index, positive);
    }

    pub fn get(&self, instance_id: &str, index: usize) -> Option<bool> {
        self.0.get(instance_id)?.get(&index).copied()
    }

    /// All-negative predictions for every non-opening sentence.
    pub fn all_negative(dataset: &[DatasetInstance]) -> Self {
        let mut p = Self::new();
        for inst in dataset {
            for i in 2..=inst.sentences.len() {
                p.insert(&inst.instance_id, i, false);
            }
        }
        p
    }

    /// Positive exactly at each intruder.
    pub fn oracle(dataset: &[DatasetInstance]) -> Self {
        let mut p = Self::new();
        for inst in dataset {
            for i in 2..=inst.sentences.len() {
                p.insert(&inst.instance_id, i, inst.intruder_index == Some(i));
            }
        }
        p
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Percentages in [0, 100].
    pub doc_accuracy: f64,
    pub sentence_precision: f64,
    pub sentence_recall: f64,
    pub sentence_f1: f64,
    pub sentence: Confusion,
    pub documents: u64,
    pub documents_correct: u64,
    pub documents_predicted_incoherent: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

impl MetricsReport {
    fn from_counts(sentence: Confusion, documents: u64, correct: u64, predicted_incoherent: u64) -> Self {
        let p = ratio(sentence.tp, sentence.tp + sentence.fp);
        let r = ratio(sentence.tp, sentence.tp + sentence.fn_);
        MetricsReport {
            doc_accuracy: ratio(correct, documents),
            sentence_precision: p,
            sentence_recall: r,
            sentence_f1: f1(p, r),
            sentence,
            documents,
            documents_correct: correct,
            documents_predicted_incoherent: predicted_incoherent,
        }
    }
}

/// Scores `predictions` against `dataset`. Every non-opening sentence must be
/// covered and nothing else may be.
pub fn evaluate(dataset: &[DatasetInstance], predictions: &PredictionSet) -> Result<MetricsReport, EvaluationError> {
    let mut missing = Vec::new();
    let mut confusion = Confusion::default();
    let (mut correct, mut predicted_incoherent) = (0, 0);
    let known: BTreeMap<&str, usize> = dataset.iter().map(|d| (d.instance_id.as_str(), d.sentences.len())).collect();
    for (id, preds) in &predictions.0 {
        let Some(&n) = known.get(id.as_str()) else {
            let first = preds.keys().next().copied().unwrap_or(0);
            return Err(EvaluationError::Unknown(id.clone(), first));
        };
        for &i in preds.keys() {
            if i == 1 {
                return Err(EvaluationError::OpeningSentence(id.clone()));
            }
            if i == 0 || i > n {
                return Err(EvaluationError::Unknown(id.clone(), i));
            }
        }
    }
    for inst in dataset {
        let mut any_positive = false;
        for i in 2..=inst.sentences.len() {
            let Some(pred) = predictions.get(&inst.instance_id, i) else {
                missing.push((inst.instance_id.clone(), i));
                continue;
            };
            let gold = inst.intruder_index == Some(i);
            any_positive |= pred;
            match (pred, gold) {
                (true, true) => confusion.tp += 1,
                (true, false) => confusion.fp += 1,
                (false, true) => confusion.fn_ += 1,
                (false, false) => confusion.tn += 1,
            }
        }
        predicted_incoherent += u64::from(any_positive);
        if any_positive == (inst.label == Label::Incoherent) {
            correct += 1;
        }
    }
    if !missing.is_empty() {
        return Err(EvaluationError::Coverage { missing });
    }
    Ok(MetricsReport::from_counts(confusion, dataset.len() as u64, correct, predicted_incoherent))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaReport {
    pub base_f1: f64,
    pub probed_f1: f64,
    pub delta_f1: f64,
    pub instances: usize,
}

/// Sentence F1 on probed instances minus F1 on their unprobed bases.
/// Probed instances carry `probe.base_instance_id`; the base subset is exactly
/// the set of those ids.
pub fn delta_f1(
    base: &[DatasetInstance],
    probed: &[DatasetInstance],
    base_predictions: &PredictionSet,
    probed_predictions: &PredictionSet,
) -> Result<DeltaReport, EvaluationError> {
    let by_id: BTreeMap<&str, &DatasetInstance> = base.iter().map(|d| (d.instance_id.as_str(), d)).collect();
    let mut subset = Vec::with_capacity(probed.len());
    let mut seen = std::collections::BTreeSet::new();
    for p in probed {
        let Some(tag) = &p.probe else {
            return Err(EvaluationError::Mapping(format!("`{}` has no probe tag", p.instance_id)));
        };
        let Some(b) = by_id.get(tag.base_instance_id.as_str()) else {
            return Err(EvaluationError::Mapping(format!("base `{}` not found", tag.base_instance_id)));
        };
        if !seen.insert(tag.base_instance_id.as_str()) {
            return Err(EvaluationError::Mapping(format!("base `{}` probed twice", tag.base_instance_id)));
        }
        if b.intruder_index != p.intruder_index || b.label != p.label || b.sentences.len() != p.sentences.len() {
            return Err(EvaluationError::Mapping(format!("`{}` disagrees with its base", p.instance_id)));
        }
        subset.push((*b).clone());
    }
    let mut base_preds = PredictionSet::new();
    for b in &subset {
        for i in 2..=b.sentences.len() {
            if let Some(v) = base_predictions.get(&b.instance_id, i) {
                base_preds.insert(&b.instance_id, i, v);
            }
        }
    }
    let base_f1 = evaluate(&subset, &base_preds)?.sentence_f1;
    let probed_f1 = evaluate(probed, probed_predictions)?.sentence_f1;
    Ok(DeltaReport {
        base_f1,
        probed_f1,
        delta_f1: probed_f1 - base_f1,
        instances: probed.len(),
    })
}

// ---------------------------------------------------------------------------
// Adapter protocol

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub instance_id: String,
    pub sentences: Vec<String>,
    pub candidate_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub instance_id: String,
    pub candidate_index: usize,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdapterMode {
    /// Whole document with the candidate index.
    Context,
    /// The candidate sentence alone.
    Standalone,
}

impl std::str::FromStr for AdapterMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "context" | "in-context" => Ok(AdapterMode::Context),
            "standalone" => Ok(AdapterMode::Standalone),
            other => Err(format!("unknown adapter mode `{other}`")),
        }
    }
}

/// Anything that turns scoring requests into probabilities. Implementations
/// must return one response per request; order does not matter.
pub trait SentenceScorer {
    fn score_batch(&mut self, requests: &[ScoreRequest]) -> Result<Vec<ScoreResponse>, EvaluationError>;
}

#[derive(Debug, Clone, Copy)]
pub struct AdapterConfig {
    pub mode: AdapterMode,
    pub threshold: f64,
    pub batch_size: usize,
}

impl Default for AdapterConfig {
    fn default() -> Self {
        AdapterConfig {
            mode: AdapterMode::Context,
            threshold: 0.5,
            batch_size: 64,
        }
    }
}

/// Requests in deterministic (instance_id, index) order.
pub fn build_requests(dataset: &[DatasetInstance], mode: AdapterMode) -> Vec<ScoreRequest> {
    let mut ordered: Vec<&DatasetInstance> = dataset.iter().collect();
    ordered.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
    let mut out = Vec::new();
    for inst in ordered {
        for i in 2..=inst.sentences.len() {
            let sentences = match mode {
                AdapterMode::Context => inst.sentences.clone(),
                AdapterMode::Standalone => vec![inst.sentences[i - 1].clone()],
            };
            out.push(ScoreRequest {
                instance_id: inst.instance_id.clone(),
                sentences,
                candidate_index: i,
            });
        }
    }
    out
}

pub fn run_adapter(
    dataset: &[DatasetInstance],
    scorer: &mut dyn SentenceScorer,
    config: &AdapterConfig,
) -> Result<PredictionSet, EvaluationError> {
    let requests = build_requests(dataset, config.mode);
    let mut predictions = PredictionSet::new();
    for batch in requests.chunks(config.batch_size.max(1)) {
        let responses = scorer.score_batch(batch)?;
        let mut pending: BTreeMap<(&str, usize), &ScoreRequest> =
            batch.iter().map(|r| ((r.instance_id.as_str(), r.candidate_index), r)).collect();
        for resp in &responses {
            let key = (resp.instance_id.as_str(), resp.candidate_index);
            let Some(req) = pending.remove(&key) else {
                return Err(EvaluationError::Adapter {
                    message: "response does not match an outstanding request".into(),
                    request: serde_json::to_string(resp).unwrap_or_default(),
                });
            };
            if !(0.0..=1.0).contains(&resp.score) {
                return Err(EvaluationError::Adapter {
                    message: format!("score {} is not a probability", resp.score),
                    request: serde_json::to_string(req).unwrap_or_default(),
                });
            }
            predictions.insert(&resp.instance_id, resp.candidate_index, resp.score >= config.threshold);
        }
        if let Some(req) = pending.values().next() {
            return Err(EvaluationError::Adapter {
                message: "no response".into(),
                request: serde_json::to_string(req).unwrap_or_default(),
            });
        }
    }
    Ok(predictions)
}

/// Scores every request with a fixed value.
pub struct ConstantScorer(pub f64);

impl SentenceScorer for ConstantScorer {
    fn score_batch(&mut self, requests: &[ScoreRequest]) -> Result<Vec<ScoreResponse>, EvaluationError> {
        Ok(requests
            .iter()
            .map(|r| ScoreResponse {
                instance_id: r.instance_id.clone(),
                candidate_index: r.candidate_index,
                score: self.0,
            })
            .collect())
    }
}

/// Reads gold intruder positions; an upper bound for the harness.
pub struct OracleScorer {
    gold: BTreeMap<String, Option<usize>>,
}

impl OracleScorer {
    pub fn new(dataset: &[DatasetInstance]) -> Self {
        OracleScorer {
            gold: dataset.iter().map(|d| (d.instance_id.clone(), d.intruder_index)).collect(),
        }
    }
}

impl SentenceScorer for OracleScorer {
    fn score_batch(&mut self, requests: &[ScoreRequest]) -> Result<Vec<ScoreResponse>, EvaluationError> {
        Ok(requests
            .iter()
            .map(|r| {
                let hit = self.gold.get(&r.instance_id).copied().flatten() == Some(r.candidate_index);
                ScoreResponse {
                    instance_id: r.instance_id.clone(),
                    candidate_index: r.candidate_index,
                    score: if hit { 1.0 } else { 0.0 },
                }
            })
            .collect())
    }
}

/// Positive with probability `rate`, keyed by (seed, instance, index) so the
/// outcome is independent of batching.
pub struct UniformRandomScorer {
    pub seed: u64,
    pub rate: f64,
}

impl SentenceScorer for UniformRandomScorer {
    fn score_batch(&mut self, requests: &[ScoreRequest]) -> Result<Vec<ScoreResponse>, EvaluationError> {
        Ok(requests
            .iter()
            .map(|r| {
                let mut rng = seed::stream(self.seed, &["random-scorer", &r.instance_id, &r.candidate_index.to_string()]);
                let positive = rng.gen_bool(self.rate.clamp(0.0, 1.0));
                ScoreResponse {
                    instance_id: r.instance_id.clone(),
                    candidate_index: r.candidate_index,
                    score: if positive { 1.0 } else { 0.0 },
                }
            })
            .collect())
    }
}

/// Expected sentence F1 (percent) of a scorer that flags each candidate
/// independently with probability `rate`, when a fraction `pi` of candidates
/// are intruders.
pub fn expected_random_f1(pi: f64, rate: f64) -> f64 {
    if pi + rate == 0.0 {
        0.0
    } else {
        100.0 * 2.0 * pi * rate / (pi + rate)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthesis::Split;

    fn inst(id: &str, n: usize, intruder: Option<usize>) -> DatasetInstance {
        DatasetInstance {
            instance_id: id.into(),
            source: "wiki".into(),
            sentences: (1..=n).map(|i| format!("S{i}.")).collect(),
            label: if intruder.is_some() { Label::Incoherent } else { Label::Coherent },
            intruder_index: intruder,
            provenance: None,
            split: Split::Test,
            probe: None,
        }
    }

    #[test]
    fn wrong_position_still_counts_at_document_level() {
        let data = vec![inst("a", 4, Some(3))];
        let mut p = PredictionSet::all_negative(&data);
        p.insert("a", 2, true);
        let m = evaluate(&data, &p).unwrap();
        assert_eq!(m.doc_accuracy, 100.0);
        assert_eq!(m.sentence, Confusion { tp: 0, fp: 1, fn_: 1, tn: 1 });
        assert_eq!(m.sentence_f1, 0.0);
    }

    #[test]
    fn coverage_and_opening_errors() {
        let data = vec![inst("a", 3, None)];
        let mut p = PredictionSet::new();
        p.insert("a", 2, false);
        assert!(matches!(evaluate(&data, &p), Err(EvaluationError::Coverage { ref missing }) if missing == &[("a".to_string(), 3)]));
        p.insert("a", 3, false);
        p.insert("a", 1, false);
        assert!(matches!(evaluate(&data, &p), Err(EvaluationError::OpeningSentence(_))));
    }

    #[test]
    fn majority_and_oracle() {
        let data = vec![inst("a", 3, None), inst("b", 5, Some(4)), inst("c", 4, None)];
        let m = evaluate(&data, &PredictionSet::all_negative(&data)).unwrap();
        assert!((m.doc_accuracy - 200.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.sentence_f1, 0.0);
        let o = evaluate(&data, &PredictionSet::oracle(&data)).unwrap();
        assert_eq!((o.doc_accuracy, o.sentence_f1), (100.0, 100.0));
    }

    #[test]
    fn adapter_rejects_bad_scores() {
        struct Bad;
        impl SentenceScorer for Bad {
            fn score_batch(&mut self, r: &[ScoreRequest]) -> Result<Vec<ScoreResponse>, EvaluationError> {
                Ok(r.iter()
                    .map(|q| ScoreResponse { instance_id: q.instance_id.clone(), candidate_index: q.candidate_index, score: 1.5 })
                    .collect())
            }
        }
        let data = vec![inst("a", 3, None)];
        let err = run_adapter(&data, &mut Bad, &AdapterConfig::default()).unwrap_err();
        assert!(err.to_string().contains("\"instance_id\":\"a\""));
    }

    #[test]
    fn standalone_requests_carry_one_sentence() {
        let data = vec![inst("b", 3, None), inst("a", 3, Some(2))];
        let reqs = build_requests(&data, AdapterMode::Standalone);
        let keys: Vec<_> = reqs.iter().map(|r| (r.instance_id.as_str(), r.candidate_index)).collect();
        assert_eq!(keys, [("a", 2), ("a", 3), ("b", 2), ("b", 3)]);
        assert_eq!(reqs[0].sentences, ["S2."]);
    }

    #[test]
    fn random_f1_formula() {
        assert_eq!(expected_random_f1(0.0, 0.0), 0.0);
        assert!((expected_random_f1(0.5, 0.5) - 50.0).abs() < 1e-12);
    }
}
