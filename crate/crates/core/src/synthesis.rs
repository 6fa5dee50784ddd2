//! Incoherent-document generation.
//!
//! For a document `D`: retrieve its nearest neighbours, pick one
//! non-opening position of `D` to replace, take one random non-opening
//! sentence from each neighbour, drop candidates whose TF-IDF similarity to
//! the replaced sentence reaches the cap, then prefer candidates a detector
//! fails to flag. Half of the documents are designated for intrusion; those
//! left without any candidate stay coherent.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Document, Source};
use crate::logistic::{self, LogisticConfig, LogisticModel};
use crate::probes::ProbeTag;
use crate::retrieval::{cosine, IdfSource, RetrievalIndex, RetrievalResult, SparseVector};
use crate::seed;

pub const DEFAULT_SIMILARITY_CAP: f64 = 0.6;
pub const DEFAULT_EASY_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("document {0} has fewer than 3 sentences")]
    TooShort(String),
    #[error("scorer failed on {instance_id}: {message}")]
    Scorer { instance_id: String, message: String },
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{0}")]
pub struct ScorerError(pub String);

/// Probability that a detector flags `candidate_index` as the intruder of
/// `sentences`. Implementations must be pure and return values in `[0, 1]`.
pub trait DifficultyScorer: Sync {
    fn score(&self, instance_id: &str, sentences: &[String], candidate_index: usize) -> Result<f64, ScorerError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Coherent,
    Incoherent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Which pool the chosen intruder was sampled from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterMode {
    DifficultPool,
    AllPool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Query with the whole document (default).
    DocumentQuery,
    /// Query with the sentence being replaced.
    SentenceQuery,
    /// Query with the document, then with its best neighbour.
    TwoHop,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::DocumentQuery => "document-query",
            Strategy::SentenceQuery => "sentence-query",
            Strategy::TwoHop => "two-hop",
        })
    }
}

impl FromStr for Strategy {
    type Err = SynthesisError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "document-query" | "document" => Ok(Strategy::DocumentQuery),
            "sentence-query" | "sentence" => Ok(Strategy::SentenceQuery),
            "two-hop" => Ok(Strategy::TwoHop),
            other => Err(SynthesisError::Config(format!("unknown strategy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntruderCandidate {
    pub donor_doc_id: String,
    pub donor_sentence_index: usize,
    pub text: String,
    pub similarity_to_replaced: f64,
    /// Detector probability of flagging this candidate once substituted.
    pub difficulty: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source_doc_id: String,
    pub replaced_sentence_index: usize,
    pub replaced_text: String,
    pub donor_doc_id: String,
    pub donor_sentence_index: usize,
    pub donor_text: String,
    pub similarity_to_replaced: f64,
    pub difficulty: Option<f64>,
    pub filter_mode: FilterMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInstance {
    pub instance_id: String,
    pub source: String,
    pub sentences: Vec<String>,
    pub label: Label,
    pub intruder_index: Option<usize>,
    pub provenance: Option<Provenance>,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe: Option<ProbeTag>,
}

impl DatasetInstance {
    pub fn coherent(doc: &Document, split: Split) -> Self {
        DatasetInstance {
            instance_id: doc.id.clone(),
            source: doc.source.to_string(),
            sentences: doc.texts(),
            label: Label::Coherent,
            intruder_index: None,
            provenance: None,
            split,
            probe: None,
        }
    }

    /// Checks the label/index/provenance invariants and the length bounds.
    pub fn validate(&self) -> Result<(), String> {
        let n = self.sentences.len();
        if !(3..=8).contains(&n) {
            return Err(format!("{}: {} sentences", self.instance_id, n));
        }
        match (self.label, self.intruder_index, &self.provenance) {
            (Label::Coherent, None, None) => Ok(()),
            (Label::Incoherent, Some(i), Some(p)) => {
                if i < 2 || i > n {
                    return Err(format!("{}: intruder index {i} out of range", self.instance_id));
                }
                if p.replaced_sentence_index != i || p.donor_sentence_index < 2 {
                    return Err(format!("{}: provenance disagrees with index", self.instance_id));
                }
                Ok(())
            }
            _ => Err(format!(
                "{}: label, intruder_index and provenance disagree",
                self.instance_id
            )),
        }
    }

    pub fn is_incoherent(&self) -> bool {
        self.label == Label::Incoherent
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisConfig {
    pub seed: u64,
    pub top_k: usize,
    pub similarity_cap: f64,
    pub easy_threshold: f64,
    pub test_fraction: f64,
    pub version_threshold: f64,
    pub strategy: Strategy,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig {
            seed: 0,
            top_k: crate::retrieval::DEFAULT_TOP_K,
            similarity_cap: DEFAULT_SIMILARITY_CAP,
            easy_threshold: DEFAULT_EASY_THRESHOLD,
            test_fraction: 0.2,
            version_threshold: crate::corpus::DEFAULT_VERSION_THRESHOLD,
            strategy: Strategy::DocumentQuery,
        }
    }
}

impl SynthesisConfig {
    /// Defaults with the test fraction used for each source (8% wiki, 20%
    /// news).
    pub fn for_source(source: Source) -> Self {
        SynthesisConfig {
            test_fraction: match source {
                Source::Wiki => 0.08,
                Source::News | Source::Other => 0.2,
            },
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), SynthesisError> {
        if self.top_k == 0 {
            return Err(SynthesisError::Config("top_k must be at least 1".into()));
        }
        if !(self.similarity_cap > 0.0 && self.similarity_cap <= 1.0) {
            return Err(SynthesisError::Config("similarity_cap must be in (0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.test_fraction) {
            return Err(SynthesisError::Config("test_fraction must be in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.easy_threshold) {
            return Err(SynthesisError::Config("easy_threshold must be in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Candidates for one document, plus the position they would replace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub replaced_index: usize,
    pub replaced_text: String,
    pub retrieved: usize,
    pub candidates: Vec<IntruderCandidate>,
}

fn retrieve(
    doc: &Document,
    replaced_text: &str,
    index: &RetrievalIndex,
    corpus: &Corpus,
    strategy: Strategy,
    k: usize,
) -> Vec<RetrievalResult> {
    match strategy {
        Strategy::DocumentQuery => index.query_top_k(doc, k),
        Strategy::SentenceQuery => index.query_text(replaced_text, Some(&doc.id), k),
        Strategy::TwoHop => {
            let hop = index
                .query_top_k(doc, 1)
                .first()
                .and_then(|r| corpus.get(&r.doc_id));
            let Some(hop) = hop else {
                return Vec::new();
            };
            let mut out = index.query_top_k(hop, k + 1);
            out.retain(|r| r.doc_id != doc.id);
            out.truncate(k);
            out
        }
    }
}

/// Steps one to four: retrieval, replaced position, one donor sentence per
/// neighbour, similarity cap.
pub fn generate_candidates<R: Rng + ?Sized>(
    doc: &Document,
    index: &RetrievalIndex,
    corpus: &Corpus,
    config: &SynthesisConfig,
    rng: &mut R,
) -> Result<CandidateSet, SynthesisError> {
    if doc.len() < 3 {
        return Err(SynthesisError::TooShort(doc.id.clone()));
    }
    let replaced_index = rng.gen_range(2..=doc.len());
    let replaced_text = doc.sentences[replaced_index - 1].text.clone();
    let neighbours = retrieve(doc, &replaced_text, index, corpus, config.strategy, config.top_k);
    let mut candidates = Vec::with_capacity(neighbours.len());
    for hit in &neighbours {
        let donor = corpus.get(&hit.doc_id).ok_or_else(|| {
            SynthesisError::Config(format!("index document {} is not in the corpus", hit.doc_id))
        })?;
        if donor.len() < 2 {
            continue;
        }
        let donor_index = rng.gen_range(2..=donor.len());
        let text = donor.sentences[donor_index - 1].text.clone();
        let similarity = index.sentence_similarity(&replaced_text, &text);
        if similarity < config.similarity_cap {
            candidates.push(IntruderCandidate {
                donor_doc_id: donor.id.clone(),
                donor_sentence_index: donor_index,
                text,
                similarity_to_replaced: similarity,
                difficulty: None,
            });
        }
    }
    Ok(CandidateSet {
        replaced_index,
        replaced_text,
        retrieved: neighbours.len(),
        candidates,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub candidate: IntruderCandidate,
    pub mode: FilterMode,
}

/// Step five. A candidate is easy when the scorer gives the intruded
/// document a score of at least `easy_threshold` at the replaced position.
/// Samples from the non-easy candidates when any exist, otherwise from all.
/// Without a scorer every candidate is eligible.
pub fn select_intruder<R: Rng + ?Sized>(
    instance_id: &str,
    sentences: &[String],
    set: &CandidateSet,
    scorer: Option<&dyn DifficultyScorer>,
    easy_threshold: f64,
    rng: &mut R,
) -> Result<Option<Selection>, SynthesisError> {
    if set.candidates.is_empty() {
        return Ok(None);
    }
    let Some(scorer) = scorer else {
        let candidate = set.candidates.choose(rng).cloned().expect("non-empty");
        return Ok(Some(Selection {
            candidate,
            mode: FilterMode::AllPool,
        }));
    };
    let mut scored = Vec::with_capacity(set.candidates.len());
    let mut intruded = sentences.to_vec();
    for c in &set.candidates {
        intruded[set.replaced_index - 1] = c.text.clone();
        let s = scorer
            .score(instance_id, &intruded, set.replaced_index)
            .map_err(|e| SynthesisError::Scorer {
                instance_id: instance_id.to_string(),
                message: e.0,
            })?;
        if !(0.0..=1.0).contains(&s) {
            return Err(SynthesisError::Scorer {
                instance_id: instance_id.to_string(),
                message: format!("score {s} outside [0, 1]"),
            });
        }
        scored.push(IntruderCandidate {
            difficulty: Some(s),
            ..c.clone()
        });
    }
    let difficult: Vec<&IntruderCandidate> = scored
        .iter()
        .filter(|c| c.difficulty.unwrap_or(0.0) < easy_threshold)
        .collect();
    let (candidate, mode) = if difficult.is_empty() {
        (scored.choose(rng).expect("non-empty").clone(), FilterMode::AllPool)
    } else {
        ((*difficult.choose(rng).expect("non-empty")).clone(), FilterMode::DifficultPool)
    };
    Ok(Some(Selection { candidate, mode }))
}

/// Split assignment, version filtering and candidate generation for every
/// document, shared between the filtering passes.
#[derive(Debug, Clone)]
pub struct SynthesisPlan {
    pub entries: Vec<PlanEntry>,
    pub version_filtered: usize,
    pub config: SynthesisConfig,
}

#[derive(Debug, Clone)]
pub struct PlanEntry {
    pub doc: Document,
    pub split: Split,
    pub candidates: Option<CandidateSet>,
}

impl PlanEntry {
    pub fn designated(&self) -> bool {
        self.candidates.is_some()
    }
}

fn check_domain(corpus: &Corpus, index: &RetrievalIndex) -> Result<(), SynthesisError> {
    if corpus.is_empty() {
        return Err(SynthesisError::Config("corpus is empty".into()));
    }
    let sources: std::collections::BTreeSet<Source> = corpus.iter().map(|d| d.source).collect();
    if let Some(src) = index.source() {
        if sources.len() != 1 || !sources.contains(&src) {
            return Err(SynthesisError::Config(format!(
                "index built over {src} documents but the corpus holds {sources:?}"
            )));
        }
    }
    if let Some(missing) = index.doc_ids().iter().find(|id| corpus.get(id).is_none()) {
        return Err(SynthesisError::Config(format!(
            "index document {missing} is not in the corpus"
        )));
    }
    Ok(())
}

pub fn plan(
    corpus: &Corpus,
    index: &RetrievalIndex,
    config: &SynthesisConfig,
    references: Option<&BTreeMap<String, Document>>,
) -> Result<SynthesisPlan, SynthesisError> {
    config.validate()?;
    check_domain(corpus, index)?;
    let docs = corpus.documents();
    let n = docs.len();

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::stream(config.seed, &["split"]));
    let n_test = (config.test_fraction * n as f64).round() as usize;
    let mut split = vec![Split::Train; n];
    for &i in &order[..n_test] {
        split[i] = Split::Test;
    }

    let mut kept: Vec<usize> = Vec::with_capacity(n);
    let mut version_filtered = 0;
    for i in 0..n {
        if split[i] == Split::Test {
            if let Some(refs) = references {
                let decision = crate::corpus::version_filter_with_index(
                    docs[i],
                    refs.get(&docs[i].id),
                    config.version_threshold,
                    index,
                )?;
                if !decision.keep {
                    version_filtered += 1;
                    continue;
                }
            }
        }
        kept.push(i);
    }

    let mut designation = kept.clone();
    designation.shuffle(&mut seed::stream(config.seed, &["designate"]));
    let mut designated = vec![false; n];
    for &i in &designation[..kept.len() / 2] {
        designated[i] = true;
    }

    let entries = crate::par::map(&kept, |&i| {
        let doc = docs[i];
        let candidates = if designated[i] {
            let mut rng = seed::stream(config.seed, &["candidates", &doc.id]);
            Some(generate_candidates(doc, index, corpus, config, &mut rng))
        } else {
            None
        };
        (i, candidates)
    });
    let mut out = Vec::with_capacity(entries.len());
    for (i, candidates) in entries {
        out.push(PlanEntry {
            doc: docs[i].clone(),
            split: split[i],
            candidates: candidates.transpose()?,
        });
    }
    Ok(SynthesisPlan {
        entries: out,
        version_filtered,
        config: config.clone(),
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SynthesisReport {
    pub documents: usize,
    pub version_filtered: usize,
    pub instances: usize,
    pub train: usize,
    pub test: usize,
    pub designated: usize,
    pub incoherent: usize,
    pub coherent: usize,
    pub designated_without_candidate: usize,
    pub incoherent_fraction: f64,
    pub mean_sentences: f64,
    pub sd_sentences: f64,
    pub mean_tokens: f64,
    pub sd_tokens: f64,
    pub mean_candidates: f64,
    pub difficult_pool_choices: usize,
    pub all_pool_choices: usize,
    pub scorer: String,
}

fn mean_sd(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}

/// Builds instances from a plan with the given scorer.
pub fn realize(
    plan: &SynthesisPlan,
    scorer: Option<&dyn DifficultyScorer>,
    scorer_name: &str,
) -> Result<(Vec<DatasetInstance>, SynthesisReport), SynthesisError> {
    let config = &plan.config;
    let results = crate::par::map(&plan.entries, |entry| -> Result<_, SynthesisError> {
        let base = DatasetInstance::coherent(&entry.doc, entry.split);
        let Some(set) = &entry.candidates else {
            return Ok((base, None));
        };
        let mut rng = seed::stream(config.seed, &["select", &entry.doc.id]);
        let chosen = select_intruder(
            &entry.doc.id,
            &base.sentences,
            set,
            scorer,
            config.easy_threshold,
            &mut rng,
        )?;
        let Some(Selection { candidate, mode }) = chosen else {
            return Ok((base, None));
        };
        let mut sentences = base.sentences.clone();
        sentences[set.replaced_index - 1] = candidate.text.clone();
        let instance = DatasetInstance {
            sentences,
            label: Label::Incoherent,
            intruder_index: Some(set.replaced_index),
            provenance: Some(Provenance {
                source_doc_id: entry.doc.id.clone(),
                replaced_sentence_index: set.replaced_index,
                replaced_text: set.replaced_text.clone(),
                donor_doc_id: candidate.donor_doc_id,
                donor_sentence_index: candidate.donor_sentence_index,
                donor_text: candidate.text,
                similarity_to_replaced: candidate.similarity_to_replaced,
                difficulty: candidate.difficulty,
                filter_mode: mode,
            }),
            ..base
        };
        Ok((instance, Some(mode)))
    });

    let mut instances = Vec::with_capacity(results.len());
    let mut report = SynthesisReport {
        documents: plan.entries.len() + plan.version_filtered,
        version_filtered: plan.version_filtered,
        scorer: scorer_name.to_string(),
        ..Default::default()
    };
    for (entry, r) in plan.entries.iter().zip(results) {
        let (instance, mode) = r?;
        if let Some(set) = &entry.candidates {
            report.designated += 1;
            report.mean_candidates += set.candidates.len() as f64;
            if mode.is_none() {
                report.designated_without_candidate += 1;
            }
        }
        match mode {
            Some(FilterMode::DifficultPool) => report.difficult_pool_choices += 1,
            Some(FilterMode::AllPool) => report.all_pool_choices += 1,
            None => {}
        }
        instances.push(instance);
    }
    report.instances = instances.len();
    report.train = instances.iter().filter(|i| i.split == Split::Train).count();
    report.test = report.instances - report.train;
    report.incoherent = instances.iter().filter(|i| i.is_incoherent()).count();
    report.coherent = report.instances - report.incoherent;
    if report.instances > 0 {
        report.incoherent_fraction = report.incoherent as f64 / report.instances as f64;
    }
    if report.designated > 0 {
        report.mean_candidates /= report.designated as f64;
    }
    (report.mean_sentences, report.sd_sentences) =
        mean_sd(plan.entries.iter().map(|e| e.doc.len() as f64));
    (report.mean_tokens, report.sd_tokens) =
        mean_sd(instances.iter().map(|i| crate::text::token_count(&i.sentences.join(" ")) as f64));
    Ok((instances, report))
}

/// Plans and realizes in one call.
pub fn synthesize_dataset(
    corpus: &Corpus,
    index: &RetrievalIndex,
    scorer: Option<&dyn DifficultyScorer>,
    scorer_name: &str,
    config: &SynthesisConfig,
    references: Option<&BTreeMap<String, Document>>,
) -> Result<(Vec<DatasetInstance>, SynthesisReport), SynthesisError> {
    let plan = plan(corpus, index, config, references)?;
    realize(&plan, scorer, scorer_name)
}

/// Two-pass synthesis: an unfiltered pass trains a [`PairScorer`], which
/// then drives the difficulty filter of the second pass.
pub fn synthesize_bootstrap(
    corpus: &Corpus,
    index: &RetrievalIndex,
    config: &SynthesisConfig,
    references: Option<&BTreeMap<String, Document>>,
) -> Result<(Vec<DatasetInstance>, SynthesisReport), SynthesisError> {
    let plan = plan(corpus, index, config, references)?;
    let (first_pass, _) = realize(&plan, None, "none")?;
    let scorer = PairScorer::train(index, &first_pass, config.seed);
    realize(&plan, Some(&scorer), "bootstrap")
}

/// Bag-of-words detector over (candidate sentence, rest of document) pairs.
///
/// Features: the candidate's unit TF-IDF vector, the unit TF-IDF vector of
/// the other sentences in a second block, and two similarity scalars (to
/// the rest of the document and to the adjacent sentences).
pub struct PairScorer<'a> {
    index: &'a RetrievalIndex,
    model: LogisticModel,
}

const PAIR_BLOCK_BITS: u32 = 18;

impl<'a> PairScorer<'a> {
    pub fn train(index: &'a RetrievalIndex, instances: &[DatasetInstance], seed: u64) -> Self {
        let pool: Vec<&DatasetInstance> = {
            let train: Vec<_> = instances.iter().filter(|i| i.split == Split::Train).collect();
            if train.iter().any(|i| i.is_incoherent()) {
                train
            } else {
                instances.iter().collect()
            }
        };
        let mut examples = Vec::new();
        for inst in &pool {
            for idx in 2..=inst.sentences.len() {
                examples.push((
                    pair_features(index, &inst.sentences, idx),
                    inst.intruder_index == Some(idx),
                ));
            }
        }
        let positives = examples.iter().filter(|(_, y)| *y).count();
        let negatives = examples.len() - positives;
        let model = if positives == 0 || negatives == 0 {
            LogisticModel::constant(if positives > 0 { 1.0 } else { 0.0 })
        } else {
            let config = LogisticConfig {
                positive_weight: negatives as f64 / positives as f64,
                seed: seed::derive_seed(seed, &["pair-scorer"]),
                ..Default::default()
            };
            logistic::train(&examples, pair_dim(), &config)
        };
        PairScorer { index, model }
    }
}

fn pair_dim() -> usize {
    (2usize << PAIR_BLOCK_BITS) + 2
}

fn pair_features(index: &RetrievalIndex, sentences: &[String], candidate_index: usize) -> SparseVector {
    let block = 1u32 << PAIR_BLOCK_BITS;
    let mask = block - 1;
    let candidate = index.weighted_vector(&sentences[candidate_index - 1]);
    let context_text: Vec<&str> = sentences
        .iter()
        .enumerate()
        .filter(|&(i, _)| i + 1 != candidate_index)
        .map(|(_, s)| s.as_str())
        .collect();
    let context = index.weighted_vector(&context_text.join(" "));
    let neighbours = [candidate_index.checked_sub(2), Some(candidate_index)]
        .into_iter()
        .flatten()
        .filter_map(|i| sentences.get(i))
        .map(|s| cosine(&candidate, &index.weighted_vector(s)))
        .fold(0.0f64, f64::max);
    let mut entries: Vec<(u32, f64)> = Vec::new();
    entries.extend(candidate.normalized().entries().iter().map(|&(b, w)| (b & mask, w)));
    entries.extend(context.normalized().entries().iter().map(|&(b, w)| (block + (b & mask), w)));
    entries.push((2 * block, cosine(&candidate, &context)));
    entries.push((2 * block + 1, neighbours));
    SparseVector::from_entries(entries)
}

impl DifficultyScorer for PairScorer<'_> {
    fn score(&self, _instance_id: &str, sentences: &[String], candidate_index: usize) -> Result<f64, ScorerError> {
        if candidate_index < 2 || candidate_index > sentences.len() {
            return Err(ScorerError(format!("candidate index {candidate_index} out of range")));
        }
        Ok(self
            .model
            .predict_proba(&pair_features(self.index, sentences, candidate_index)))
    }
}

/// Scorer that returns fixed values keyed by candidate text; unknown text
/// scores 0.
#[derive(Debug, Clone, Default)]
pub struct TableScorer(pub BTreeMap<String, f64>);

impl DifficultyScorer for TableScorer {
    fn score(&self, _: &str, sentences: &[String], candidate_index: usize) -> Result<f64, ScorerError> {
        Ok(self.0.get(&sentences[candidate_index - 1]).copied().unwrap_or(0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieval::{build_index, Hasher};

    fn set_with(texts: &[&str]) -> CandidateSet {
        CandidateSet {
            replaced_index: 2,
            replaced_text: "orig".into(),
            retrieved: texts.len(),
            candidates: texts
                .iter()
                .enumerate()
                .map(|(i, t)| IntruderCandidate {
                    donor_doc_id: format!("d{i}"),
                    donor_sentence_index: 2,
                    text: t.to_string(),
                    similarity_to_replaced: 0.1,
                    difficulty: None,
                })
                .collect(),
        }
    }

    fn sentences() -> Vec<String> {
        vec!["one".into(), "orig".into(), "three".into()]
    }

    #[test]
    fn only_difficult_candidate_is_chosen() {
        let scorer = TableScorer(
            [("a", 0.9), ("b", 0.9), ("c", 0.1)].into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        );
        let set = set_with(&["a", "b", "c"]);
        for s in 0..20 {
            let mut rng = seed::stream(s, &["t"]);
            let sel = select_intruder("x", &sentences(), &set, Some(&scorer), 0.5, &mut rng)
                .unwrap()
                .unwrap();
            assert_eq!(sel.candidate.text, "c");
            assert_eq!(sel.mode, FilterMode::DifficultPool);
            assert_eq!(sel.candidate.difficulty, Some(0.1));
        }
    }

    #[test]
    fn all_easy_falls_back_to_every_candidate() {
        let scorer = TableScorer(
            [("a", 0.9), ("b", 0.5), ("c", 1.0)].into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        );
        let set = set_with(&["a", "b", "c"]);
        let mut seen = std::collections::BTreeSet::new();
        for s in 0..60 {
            let pick = |s| {
                let mut rng = seed::stream(s, &["t"]);
                select_intruder("x", &sentences(), &set, Some(&scorer), 0.5, &mut rng).unwrap().unwrap()
            };
            let a = pick(s);
            assert_eq!(a, pick(s));
            assert_eq!(a.mode, FilterMode::AllPool);
            seen.insert(a.candidate.text);
        }
        assert_eq!(seen.len(), 3);
    }

    #[test]
    fn empty_candidates_select_nothing() {
        let set = set_with(&[]);
        let mut rng = seed::stream(0, &["t"]);
        assert!(select_intruder("x", &sentences(), &set, None, 0.5, &mut rng).unwrap().is_none());
    }

    struct Broken;
    impl DifficultyScorer for Broken {
        fn score(&self, _: &str, _: &[String], _: usize) -> Result<f64, ScorerError> {
            Err(ScorerError("boom".into()))
        }
    }

    #[test]
    fn scorer_failure_names_the_instance() {
        let set = set_with(&["a"]);
        let mut rng = seed::stream(0, &["t"]);
        let err = select_intruder("inst-7", &sentences(), &set, Some(&Broken), 0.5, &mut rng).unwrap_err();
        assert!(matches!(err, SynthesisError::Scorer { ref instance_id, .. } if instance_id == "inst-7"));
    }

    fn toy_corpus() -> Vec<Document> {
        vec![
            Document::from_sentences("a", Source::Wiki, ["Alpha one.", "The cat sat on the mat.", "Birds fly south."]),
            Document::from_sentences("b", Source::Wiki, ["Beta two.", "The cat sat on the mat.", "The cat sat on the mat."]),
            Document::from_sentences("c", Source::Wiki, ["Gamma three.", "Rivers run deep.", "Stones are grey."]),
            Document::from_sentences("d", Source::Wiki, ["Delta four.", "Clouds drift slowly.", "Wind blows hard."]),
        ]
    }

    #[test]
    fn identical_donor_sentence_is_removed() {
        let docs = toy_corpus();
        let corpus = Corpus::new(docs.clone()).unwrap();
        let index = build_index(&docs, Hasher::default()).unwrap();
        let config = SynthesisConfig::default();
        // find a seed that replaces position 2 of "a" (the cat sentence)
        for s in 0..100 {
            let mut rng = seed::stream(s, &["c"]);
            let set = generate_candidates(&docs[0], &index, &corpus, &config, &mut rng).unwrap();
            assert!(set.candidates.len() <= 3);
            for c in &set.candidates {
                assert!(c.donor_sentence_index >= 2);
                assert!(c.similarity_to_replaced < 0.6);
                assert_ne!(c.text, set.replaced_text);
            }
        }
    }

    #[test]
    fn too_short_documents_are_refused() {
        let docs = toy_corpus();
        let corpus = Corpus::new(docs.clone()).unwrap();
        let index = build_index(&docs, Hasher::default()).unwrap();
        let short = Document::from_sentences("s", Source::Wiki, ["One.", "Two."]);
        let mut rng = seed::stream(0, &["c"]);
        assert!(matches!(
            generate_candidates(&short, &index, &corpus, &SynthesisConfig::default(), &mut rng),
            Err(SynthesisError::TooShort(_))
        ));
    }

    #[test]
    fn domain_mismatch_is_a_configuration_error() {
        let docs = toy_corpus();
        let index = build_index(&docs, Hasher::default()).unwrap();
        let corpus = Corpus::new(docs[..2].to_vec()).unwrap();
        let err = synthesize_dataset(&corpus, &index, None, "none", &SynthesisConfig::default(), None).unwrap_err();
        assert!(matches!(err, SynthesisError::Config(_)));
        let news: Vec<_> = docs.iter().cloned().map(|mut d| { d.source = Source::News; d }).collect();
        let corpus = Corpus::new(news).unwrap();
        assert!(matches!(
            synthesize_dataset(&corpus, &index, None, "none", &SynthesisConfig::default(), None),
            Err(SynthesisError::Config(_))
        ));
    }

    #[test]
    fn invalid_config_is_rejected() {
        for cfg in [
            SynthesisConfig { top_k: 0, ..Default::default() },
            SynthesisConfig { similarity_cap: 0.0, ..Default::default() },
            SynthesisConfig { test_fraction: 1.5, ..Default::default() },
        ] {
            assert!(cfg.validate().is_err());
        }
    }

    #[test]
    fn validate_catches_inconsistent_instances() {
        let doc = Document::from_sentences("x", Source::Wiki, ["A.", "B.", "C."]);
        let mut inst = DatasetInstance::coherent(&doc, Split::Train);
        assert!(inst.validate().is_ok());
        inst.intruder_index = Some(2);
        assert!(inst.validate().is_err());
    }

    #[test]
    fn strategies_parse() {
        assert_eq!("two-hop".parse::<Strategy>().unwrap(), Strategy::TwoHop);
        assert_eq!(Strategy::SentenceQuery.to_string(), "sentence-query");
        assert!("bogus".parse::<Strategy>().is_err());
    }
}
