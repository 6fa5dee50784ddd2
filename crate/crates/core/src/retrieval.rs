//! Hashed unigram+bigram TF-IDF retrieval.
//!
//! Features are lowercased unigrams and adjacent-token bigrams, hashed with
//! XXH64 under a fixed seed and masked into `num_bins` (a power of two).
//! Term frequency is log-scaled as `1 + ln(tf)`; inverse document frequency
//! is `max(0, ln((N - df + 0.5) / (df + 0.5)))`. Scores are cosines of the
//! weighted vectors, so they fall in `[0, 1]`.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use xxhash_rust::xxh64::xxh64;

use crate::corpus::{Document, Source};
use crate::text;

pub const DEFAULT_HASH_SEED: u64 = 0x0c0f_fee5_eed0_2021;
pub const DEFAULT_LOG2_BINS: u32 = 24;
pub const DEFAULT_NUM_BINS: u32 = 1 << DEFAULT_LOG2_BINS;
pub const DEFAULT_TOP_K: usize = 10;

const INDEX_FORMAT: &str = "forge-index";
const INDEX_VERSION: u32 = 1;
const TF_FORMULA: &str = "1+ln(tf)";
const IDF_FORMULA: &str = "max(0,ln((N-df+0.5)/(df+0.5)))";

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("num_bins must be a power of two, got {0}")]
    BinsNotPowerOfTwo(u64),
    #[error("duplicate document id {0}")]
    DuplicateId(String),
    #[error("index file: {0}")]
    Format(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Feature hasher: string feature to bin id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hasher {
    num_bins: u32,
    seed: u64,
}

impl Default for Hasher {
    fn default() -> Self {
        Hasher {
            num_bins: DEFAULT_NUM_BINS,
            seed: DEFAULT_HASH_SEED,
        }
    }
}

impl Hasher {
    pub fn new(num_bins: u32, seed: u64) -> Result<Self, RetrievalError> {
        if num_bins == 0 || !num_bins.is_power_of_two() {
            return Err(RetrievalError::BinsNotPowerOfTwo(num_bins as u64));
        }
        Ok(Hasher { num_bins, seed })
    }

    pub fn with_log2_bins(bits: u32) -> Result<Self, RetrievalError> {
        if bits > 31 {
            return Err(RetrievalError::BinsNotPowerOfTwo(1u64 << bits.min(63)));
        }
        Hasher::new(1 << bits, DEFAULT_HASH_SEED)
    }

    pub fn num_bins(&self) -> u32 {
        self.num_bins
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn bin(&self, feature: &str) -> u32 {
        (xxh64(feature.as_bytes(), self.seed) & (self.num_bins as u64 - 1)) as u32
    }

    /// Raw counts per bin, sorted by bin.
    pub fn term_counts(&self, text: &str) -> Vec<(u32, u32)> {
        let mut counts: HashMap<u32, u32> = HashMap::new();
        for feature in features(text) {
            *counts.entry(self.bin(&feature)).or_default() += 1;
        }
        let mut out: Vec<_> = counts.into_iter().collect();
        out.sort_unstable();
        out
    }

    /// Log-scaled term-frequency vector; IDF is applied separately.
    pub fn vectorize(&self, text: &str) -> SparseVector {
        tf_vector(&self.term_counts(text))
    }
}

/// Unigram and bigram features of `text`, in order of appearance.
pub fn features(text: &str) -> Vec<String> {
    let terms = text::terms(text);
    let mut out = Vec::with_capacity(terms.len() * 2);
    for (i, t) in terms.iter().enumerate() {
        out.push(t.clone());
        if let Some(next) = terms.get(i + 1) {
            out.push(format!("{t} {next}"));
        }
    }
    out
}

/// Hashes `text` into `num_bins` bins with the default seed.
pub fn vectorize(text: &str, num_bins: u32) -> Result<SparseVector, RetrievalError> {
    Ok(Hasher::new(num_bins, DEFAULT_HASH_SEED)?.vectorize(text))
}

pub fn tf_weight(count: u32) -> f64 {
    1.0 + (count as f64).ln()
}

pub fn idf(doc_count: usize, doc_freq: usize) -> f64 {
    let n = doc_count as f64;
    let df = doc_freq as f64;
    ((n - df + 0.5) / (df + 0.5)).ln().max(0.0)
}

fn tf_vector(counts: &[(u32, u32)]) -> SparseVector {
    SparseVector {
        entries: counts.iter().map(|&(b, c)| (b, tf_weight(c))).collect(),
    }
}

/// Sparse non-negative vector keyed by bin; entries sorted, zeros never stored.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    entries: Vec<(u32, f64)>,
}

impl SparseVector {
    /// Builds a vector from arbitrary entries, summing duplicates and
    /// dropping zeros.
    pub fn from_entries(entries: impl IntoIterator<Item = (u32, f64)>) -> Self {
        let mut map: HashMap<u32, f64> = HashMap::new();
        for (b, w) in entries {
            *map.entry(b).or_default() += w;
        }
        let mut entries: Vec<_> = map.into_iter().filter(|&(_, w)| w != 0.0).collect();
        entries.sort_unstable_by_key(|&(b, _)| b);
        SparseVector { entries }
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, bin: u32) -> f64 {
        self.entries
            .binary_search_by_key(&bin, |&(b, _)| b)
            .map_or(0.0, |i| self.entries[i].1)
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|&(_, w)| w * w).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        while i < self.entries.len() && j < other.entries.len() {
            let (a, wa) = self.entries[i];
            let (b, wb) = other.entries[j];
            match a.cmp(&b) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += wa * wb;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    /// Unit-length copy; empty stays empty.
    pub fn normalized(&self) -> SparseVector {
        let n = self.norm();
        if n == 0.0 {
            return SparseVector::default();
        }
        SparseVector {
            entries: self.entries.iter().map(|&(b, w)| (b, w / n)).collect(),
        }
    }
}

/// Cosine of two non-negative vectors; 0 when either is empty.
pub fn cosine(a: &SparseVector, b: &SparseVector) -> f64 {
    let denom = a.norm() * b.norm();
    if denom == 0.0 {
        return 0.0;
    }
    (a.dot(b) / denom).clamp(0.0, 1.0)
}

/// A source of inverse document frequencies over a fixed hasher.
pub trait IdfSource {
    fn hasher(&self) -> Hasher;
    fn idf(&self, bin: u32) -> f64;

    /// Applies IDF to a term-frequency vector, dropping zero weights.
    fn weigh(&self, tf: &SparseVector) -> SparseVector {
        SparseVector {
            entries: tf
                .entries()
                .iter()
                .map(|&(b, w)| (b, w * self.idf(b)))
                .filter(|&(_, w)| w > 0.0)
                .collect(),
        }
    }

    fn weighted_vector(&self, text: &str) -> SparseVector {
        self.weigh(&self.hasher().vectorize(text))
    }

    /// TF-IDF cosine between two texts. Two texts with no weighted terms
    /// score 0.
    /// Identical non-empty term sequences score 1 even when every feature has
    /// zero idf.
    fn text_similarity(&self, a: &str, b: &str) -> f64 {
        let (ta, tb) = (crate::text::terms(a), crate::text::terms(b));
        if !ta.is_empty() && ta == tb {
            return 1.0;
        }
        cosine(&self.weighted_vector(a), &self.weighted_vector(b))
    }
}

/// Document frequencies over an arbitrary text collection.
#[derive(Debug, Clone)]
pub struct IdfTable {
    hasher: Hasher,
    doc_count: usize,
    doc_freq: HashMap<u32, u32>,
}

impl IdfTable {
    pub fn from_texts<'a>(hasher: Hasher, texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut doc_freq: HashMap<u32, u32> = HashMap::new();
        let mut doc_count = 0;
        for t in texts {
            doc_count += 1;
            for (b, _) in hasher.term_counts(t) {
                *doc_freq.entry(b).or_default() += 1;
            }
        }
        IdfTable {
            hasher,
            doc_count,
            doc_freq,
        }
    }
}

impl IdfSource for IdfTable {
    fn hasher(&self) -> Hasher {
        self.hasher
    }
    fn idf(&self, bin: u32) -> f64 {
        idf(
            self.doc_count,
            self.doc_freq.get(&bin).copied().unwrap_or(0) as usize,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub doc_id: String,
    pub score: f64,
}

/// Immutable inverted index over hashed TF-IDF document vectors.
///
/// Documents are stored in ascending id order; internal document numbers
/// follow that order, which makes "ties broken by ascending id" a tie-break
/// on document number.
#[derive(Debug, Clone)]
pub struct RetrievalIndex {
    hasher: Hasher,
    source: Option<Source>,
    ids: Vec<String>,
    positions: HashMap<String, u32>,
    counts: Vec<Vec<(u32, u32)>>,
    doc_freq: HashMap<u32, u32>,
    postings: HashMap<u32, Vec<(u32, f64)>>,
    norms: Vec<f64>,
}

pub fn build_index(docs: &[Document], hasher: Hasher) -> Result<RetrievalIndex, RetrievalError> {
    let mut order: Vec<&Document> = docs.iter().collect();
    order.sort_by(|a, b| a.id.cmp(&b.id));
    for w in order.windows(2) {
        if w[0].id == w[1].id {
            return Err(RetrievalError::DuplicateId(w[0].id.clone()));
        }
    }
    let source = match order.first() {
        Some(first) if order.iter().all(|d| d.source == first.source) => Some(first.source),
        _ => None,
    };
    let counts = crate::par::map(&order, |d| hasher.term_counts(&d.text()));
    let ids = order.iter().map(|d| d.id.clone()).collect();
    Ok(RetrievalIndex::assemble(hasher, source, ids, counts))
}

#[derive(Serialize, Deserialize)]
struct IndexHeader {
    format: String,
    version: u32,
    num_bins: u32,
    hash_seed: u64,
    tf: String,
    idf: String,
    doc_count: usize,
    source: Option<Source>,
}

#[derive(Serialize, Deserialize)]
struct IndexRow {
    id: String,
    bins: Vec<u32>,
    counts: Vec<u32>,
}

impl RetrievalIndex {
    fn assemble(
        hasher: Hasher,
        source: Option<Source>,
        ids: Vec<String>,
        counts: Vec<Vec<(u32, u32)>>,
    ) -> Self {
        let mut doc_freq: HashMap<u32, u32> = HashMap::new();
        for doc in &counts {
            for &(b, _) in doc {
                *doc_freq.entry(b).or_default() += 1;
            }
        }
        let n = ids.len();
        let mut postings: HashMap<u32, Vec<(u32, f64)>> = HashMap::new();
        let mut norms = Vec::with_capacity(n);
        for (doc, terms) in counts.iter().enumerate() {
            let mut sq = 0.0;
            for &(b, c) in terms {
                let w = tf_weight(c) * idf(n, doc_freq[&b] as usize);
                if w > 0.0 {
                    postings.entry(b).or_default().push((doc as u32, w));
                    sq += w * w;
                }
            }
            norms.push(sq.sqrt());
        }
        let positions = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i as u32))
            .collect();
        RetrievalIndex {
            hasher,
            source,
            ids,
            positions,
            counts,
            doc_freq,
            postings,
            norms,
        }
    }

    pub fn doc_count(&self) -> usize {
        self.ids.len()
    }

    pub fn num_bins(&self) -> u32 {
        self.hasher.num_bins
    }

    /// The source shared by every indexed document, if they agree.
    pub fn source(&self) -> Option<Source> {
        self.source
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.ids
    }

    pub fn contains(&self, id: &str) -> bool {
        self.positions.contains_key(id)
    }

    pub fn doc_freq(&self, bin: u32) -> u32 {
        self.doc_freq.get(&bin).copied().unwrap_or(0)
    }

    /// Document frequency of every bin with at least one document.
    pub fn bin_doc_freq(&self) -> &HashMap<u32, u32> {
        &self.doc_freq
    }

    pub fn postings(&self, bin: u32) -> impl Iterator<Item = (&str, f64)> {
        self.postings
            .get(&bin)
            .into_iter()
            .flatten()
            .map(|&(d, w)| (self.ids[d as usize].as_str(), w))
    }

    pub fn doc_norm(&self, id: &str) -> Option<f64> {
        self.positions.get(id).map(|&i| self.norms[i as usize])
    }

    /// Top `k` documents by cosine with `query`, excluding `query.id`.
    pub fn query_top_k(&self, query: &Document, k: usize) -> Vec<RetrievalResult> {
        self.query_text(&query.text(), Some(&query.id), k)
    }

    /// Top `k` documents by cosine with `text`. Always returns
    /// `min(k, eligible documents)` results, zero scores included, ordered by
    /// descending score then ascending id.
    pub fn query_text(&self, text: &str, exclude: Option<&str>, k: usize) -> Vec<RetrievalResult> {
        let excluded = exclude.and_then(|id| self.positions.get(id).copied());
        let q = self.weighted_vector(text);
        let q_norm = q.norm();
        let mut acc = vec![0.0f64; self.ids.len()];
        if q_norm > 0.0 {
            for &(b, qw) in q.entries() {
                if let Some(list) = self.postings.get(&b) {
                    for &(d, dw) in list {
                        acc[d as usize] += qw * dw;
                    }
                }
            }
        }
        let mut scored: Vec<(u32, f64)> = acc
            .into_iter()
            .enumerate()
            .filter(|&(d, _)| Some(d as u32) != excluded)
            .map(|(d, dot)| {
                let denom = q_norm * self.norms[d];
                let s = if denom > 0.0 { (dot / denom).clamp(0.0, 1.0) } else { 0.0 };
                (d as u32, s)
            })
            .collect();
        let cmp = |a: &(u32, f64), b: &(u32, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
        let k = k.min(scored.len());
        if k == 0 {
            return Vec::new();
        }
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, cmp);
            scored.truncate(k);
        }
        scored.sort_unstable_by(cmp);
        scored
            .into_iter()
            .map(|(d, score)| RetrievalResult {
                doc_id: self.ids[d as usize].clone(),
                score,
            })
            .collect()
    }

    /// TF-IDF cosine between two sentences under this index's IDF.
    pub fn sentence_similarity(&self, a: &str, b: &str) -> f64 {
        self.text_similarity(a, b)
    }

    pub fn save(&self, mut out: impl Write) -> Result<(), RetrievalError> {
        let header = IndexHeader {
            format: INDEX_FORMAT.into(),
            version: INDEX_VERSION,
            num_bins: self.hasher.num_bins,
            hash_seed: self.hasher.seed,
            tf: TF_FORMULA.into(),
            idf: IDF_FORMULA.into(),
            doc_count: self.ids.len(),
            source: self.source,
        };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        for (id, counts) in self.ids.iter().zip(&self.counts) {
            let row = IndexRow {
                id: id.clone(),
                bins: counts.iter().map(|&(b, _)| b).collect(),
                counts: counts.iter().map(|&(_, c)| c).collect(),
            };
            serde_json::to_writer(&mut out, &row)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn load(input: impl BufRead) -> Result<Self, RetrievalError> {
        let mut lines = input.lines();
        let header_line = lines
            .next()
            .ok_or_else(|| RetrievalError::Format("empty file".into()))??;
        let header: IndexHeader = serde_json::from_str(&header_line)?;
        if header.format != INDEX_FORMAT || header.version != INDEX_VERSION {
            return Err(RetrievalError::Format(format!(
                "unsupported header {}/{}",
                header.format, header.version
            )));
        }
        if header.tf != TF_FORMULA || header.idf != IDF_FORMULA {
            return Err(RetrievalError::Format("weighting constants differ".into()));
        }
        let hasher = Hasher::new(header.num_bins, header.hash_seed)?;
        let mut ids = Vec::with_capacity(header.doc_count);
        let mut counts = Vec::with_capacity(header.doc_count);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row: IndexRow = serde_json::from_str(&line)?;
            if row.bins.len() != row.counts.len() {
                return Err(RetrievalError::Format(format!("row {} is ragged", row.id)));
            }
            if ids.last().is_some_and(|prev: &String| prev >= &row.id) {
                return Err(RetrievalError::Format(format!("row {} out of order", row.id)));
            }
            ids.push(row.id);
            counts.push(row.bins.into_iter().zip(row.counts).collect());
        }
        if ids.len() != header.doc_count {
            return Err(RetrievalError::Format(format!(
                "header says {} documents, found {}",
                header.doc_count,
                ids.len()
            )));
        }
        Ok(RetrievalIndex::assemble(hasher, header.source, ids, counts))
    }
}

impl IdfSource for RetrievalIndex {
    fn hasher(&self) -> Hasher {
        self.hasher
    }
    fn idf(&self, bin: u32) -> f64 {
        idf(self.ids.len(), self.doc_freq(bin) as usize)
    }
}

/// Pairs of distinct features that share a bin.
pub fn collisions<'a>(hasher: &Hasher, features: impl IntoIterator<Item = &'a str>) -> Vec<(String, String)> {
    let mut seen: HashMap<u32, &str> = HashMap::new();
    let mut out = Vec::new();
    for f in features {
        let b = hasher.bin(f);
        match seen.get(&b) {
            Some(&other) if other != f => out.push((other.to_string(), f.to_string())),
            Some(_) => {}
            None => {
                seen.insert(b, f);
            }
        }
    }
    out
}
