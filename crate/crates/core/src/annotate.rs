//! Human verification: HIT layout, an append-only annotation store and
//! majority aggregation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::seed;
use crate::synthesis::{DatasetInstance, Split};

pub const DOCS_PER_HIT: usize = 5;
pub const DEFAULT_ASSIGNMENTS: usize = 5;
pub const DEFAULT_MIN_AGREEMENT: usize = 3;
pub const DEFAULT_SNAPSHOT_EVERY: u64 = 100;

#[derive(Debug, thiserror::Error)]
pub enum AnnotateError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("validation: {0}")]
    Validation(String),
    #[error("worker `{worker}` already annotated `{document}` in `{hit}`")]
    Duplicate { worker: String, hit: String, document: String },
    #[error("state file {path}: {message}")]
    State { path: PathBuf, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A worker's answer: a 1-based sentence index (never 1) or "none of the above".
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Choice {
    Sentence(usize),
    None,
}

impl fmt::Display for Choice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Choice::Sentence(i) => write!(f, "{i}"),
            Choice::None => f.write_str("NONE"),
        }
    }
}

impl Serialize for Choice {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Choice::Sentence(i) => s.serialize_u64(*i as u64),
            Choice::None => s.serialize_str("NONE"),
        }
    }
}

impl<'de> Deserialize<'de> for Choice {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Choice;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a sentence index or \"NONE\"")
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Choice, E> {
                Ok(Choice::Sentence(v as usize))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Choice, E> {
                usize::try_from(v).map(Choice::Sentence).map_err(|_| E::custom("negative sentence index"))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Choice, E> {
                if v == "NONE" {
                    Ok(Choice::None)
                } else {
                    Err(E::custom(format!("expected \"NONE\", got {v:?}")))
                }
            }
        }
        d.deserialize_any(V)
    }
}

impl Choice {
    pub fn gold(instance: &DatasetInstance) -> Choice {
        instance.intruder_index.map_or(Choice::None, Choice::Sentence)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HitDocument {
    pub document_id: String,
    /// Padding repeat of a document annotated elsewhere; ignored when aggregating.
    #[serde(default)]
    pub filler: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hit {
    pub hit_id: String,
    pub documents: Vec<HitDocument>,
    pub control_doc_id: String,
    pub assignments: usize,
}

impl Hit {
    pub fn contains(&self, document_id: &str) -> bool {
        self.documents.iter().any(|d| d.document_id == document_id)
    }

    /// Documents whose votes count towards aggregation.
    pub fn scored_documents(&self) -> impl Iterator<Item = &str> {
        self.documents
            .iter()
            .filter(|d| !d.filler && d.document_id != self.control_doc_id)
            .map(|d| d.document_id.as_str())
    }
}

/// Lays out every test instance in exactly one HIT: four test documents plus
/// one control from `control_pool`, the control at a random position. A short
/// final group is padded with other test documents marked as fillers.
pub fn build_hits(test: &[DatasetInstance], control_pool: &[DatasetInstance], global_seed: u64) -> Result<Vec<Hit>, AnnotateError> {
    if control_pool.is_empty() {
        return Err(AnnotateError::Config("control pool is empty".into()));
    }
    if let Some(bad) = control_pool.iter().find(|c| !c.is_incoherent()) {
        return Err(AnnotateError::Config(format!("control `{}` has no gold intruder", bad.instance_id)));
    }
    let per_hit = DOCS_PER_HIT - 1;
    let mut ids: Vec<&str> = test.iter().map(|d| d.instance_id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    if ids.is_empty() {
        return Ok(Vec::new());
    }
    let mut rng = seed::stream(global_seed, &["hits"]);
    ids.shuffle(&mut rng);
    let mut controls: Vec<&str> = control_pool.iter().map(|d| d.instance_id.as_str()).collect();
    controls.sort_unstable();

    let mut hits = Vec::new();
    for (n, group) in ids.chunks(per_hit).enumerate() {
        let mut documents: Vec<HitDocument> = group
            .iter()
            .map(|id| HitDocument { document_id: id.to_string(), filler: false })
            .collect();
        let others: Vec<&str> = ids.iter().copied().filter(|id| !group.contains(id)).collect();
        while documents.len() < per_hit {
            // with fewer than four distinct test documents overall, repeats come from the group itself
            let pool = if others.is_empty() { group } else { &others[..] };
            let pick = pool[rng.gen_range(0..pool.len())];
            documents.push(HitDocument { document_id: pick.to_string(), filler: true });
        }
        let control = controls[rng.gen_range(0..controls.len())];
        let at = rng.gen_range(0..=documents.len());
        documents.insert(at, HitDocument { document_id: control.to_string(), filler: false });
        hits.push(Hit {
            hit_id: format!("hit-{:04}", n + 1),
            documents,
            control_doc_id: control.to_string(),
            assignments: DEFAULT_ASSIGNMENTS,
        });
    }
    Ok(hits)
}

/// Incoherent train instances whose intruder was labelled easy at synthesis.
pub fn easy_controls(dataset: &[DatasetInstance], easy_threshold: f64) -> Vec<DatasetInstance> {
    dataset
        .iter()
        .filter(|d| d.split == Split::Train && d.is_incoherent() && d.probe.is_none())
        .filter(|d| d.provenance.as_ref().is_some_and(|p| p.difficulty.is_none_or(|s| s >= easy_threshold)))
        .cloned()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub hit_id: String,
    pub document_id: String,
    pub worker_id: String,
    pub choice: Choice,
    pub timestamp: u64,
}

/// Client-visible document: text only, no labels or control marker.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentView {
    pub document_id: String,
    pub sentences: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HitView {
    pub hit_id: String,
    pub documents: Vec<DocumentView>,
    /// Documents this worker has already answered in this HIT.
    pub completed: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "lowercase")]
enum Event {
    Assign { worker_id: String, hit_id: String },
    Annotation(Annotation),
}

#[derive(Debug, Serialize, Deserialize)]
struct Snapshot {
    /// Number of log lines folded into this snapshot.
    events: u64,
    assignments: BTreeMap<String, Vec<String>>,
    annotations: Vec<Annotation>,
}

struct Persistence {
    dir: PathBuf,
    log: File,
    events: u64,
    snapshot_every: u64,
}

/// HIT state with single-writer semantics. When opened on a directory every
/// change is appended to `events.jsonl` before it is applied, and the whole
/// state is snapshotted every `snapshot_every` events.
pub struct AnnotationStore {
    hits: Vec<Hit>,
    hit_pos: BTreeMap<String, usize>,
    documents: BTreeMap<String, DatasetInstance>,
    /// worker → HIT ids in assignment order
    assignments: BTreeMap<String, Vec<String>>,
    annotations: Vec<Annotation>,
    answered: BTreeSet<(String, String, String)>,
    persistence: Option<Persistence>,
}

const LOG_FILE: &str = "events.jsonl";
const SNAPSHOT_FILE: &str = "snapshot.json";

impl AnnotationStore {
    pub fn in_memory(hits: Vec<Hit>, documents: &[DatasetInstance]) -> Result<Self, AnnotateError> {
        let hit_pos = hits.iter().enumerate().map(|(i, h)| (h.hit_id.clone(), i)).collect();
        let documents: BTreeMap<String, DatasetInstance> =
            documents.iter().map(|d| (d.instance_id.clone(), d.clone())).collect();
        for hit in &hits {
            for d in &hit.documents {
                if !documents.contains_key(&d.document_id) {
                    return Err(AnnotateError::Config(format!("{} references unknown document `{}`", hit.hit_id, d.document_id)));
                }
            }
        }
        Ok(AnnotationStore {
            hits,
            hit_pos,
            documents,
            assignments: BTreeMap::new(),
            annotations: Vec::new(),
            answered: BTreeSet::new(),
            persistence: None,
        })
    }

    /// Opens (or creates) a persistent store in `dir`, recovering from the
    /// latest snapshot plus any log lines written after it. A torn final log
    /// line from an interrupted write is discarded.
    pub fn open(dir: &Path, hits: Vec<Hit>, documents: &[DatasetInstance], snapshot_every: u64) -> Result<Self, AnnotateError> {
        fs::create_dir_all(dir)?;
        let mut store = Self::in_memory(hits, documents)?;
        let snap_path = dir.join(SNAPSHOT_FILE);
        let mut folded = 0;
        if snap_path.exists() {
            let snap: Snapshot = serde_json::from_slice(&fs::read(&snap_path)?).map_err(|e| AnnotateError::State {
                path: snap_path.clone(),
                message: e.to_string(),
            })?;
            folded = snap.events;
            for (worker, hits) in snap.assignments {
                for hit in hits {
                    store.apply(Event::Assign { worker_id: worker.clone(), hit_id: hit });
                }
            }
            for a in snap.annotations {
                store.apply(Event::Annotation(a));
            }
        }
        let log_path = dir.join(LOG_FILE);
        let mut events = 0u64;
        let mut valid_len = 0u64;
        if log_path.exists() {
            let mut reader = BufReader::new(File::open(&log_path)?);
            let mut line = String::new();
            loop {
                line.clear();
                let n = reader.read_line(&mut line)?;
                if n == 0 || !line.ends_with('\n') {
                    break;
                }
                let event: Event = serde_json::from_str(line.trim_end()).map_err(|e| AnnotateError::State {
                    path: log_path.clone(),
                    message: format!("line {}: {e}", events + 1),
                })?;
                if events >= folded {
                    store.apply(event);
                }
                events += 1;
                valid_len += n as u64;
            }
        }
        let log = OpenOptions::new().create(true).append(true).open(&log_path)?;
        log.set_len(valid_len)?;
        store.persistence = Some(Persistence {
            dir: dir.to_path_buf(),
            log,
            events,
            snapshot_every: snapshot_every.max(1),
        });
        Ok(store)
    }

    fn apply(&mut self, event: Event) {
        match event {
            Event::Assign { worker_id, hit_id } => {
                let list = self.assignments.entry(worker_id).or_default();
                if !list.contains(&hit_id) {
                    list.push(hit_id);
                }
            }
            Event::Annotation(a) => {
                self.answered.insert((a.worker_id.clone(), a.hit_id.clone(), a.document_id.clone()));
                self.annotations.push(a);
            }
        }
    }

    fn record(&mut self, event: Event) -> Result<(), AnnotateError> {
        if let Some(p) = &mut self.persistence {
            let mut line = serde_json::to_string(&event).expect("event serializes");
            line.push('\n');
            p.log.write_all(line.as_bytes())?;
            p.log.sync_data()?;
            p.events += 1;
        }
        self.apply(event);
        let due = self.persistence.as_ref().is_some_and(|p| p.events % p.snapshot_every == 0);
        if due {
            self.snapshot()?;
        }
        Ok(())
    }

    /// Writes the full state atomically (temp file + rename).
    pub fn snapshot(&self) -> Result<(), AnnotateError> {
        let Some(p) = &self.persistence else { return Ok(()) };
        let snap = Snapshot {
            events: p.events,
            assignments: self.assignments.clone(),
            annotations: self.annotations.clone(),
        };
        let tmp = p.dir.join(format!("{SNAPSHOT_FILE}.partial"));
        fs::write(&tmp, serde_json::to_vec(&snap).expect("snapshot serializes"))?;
        File::open(&tmp)?.sync_all()?;
        fs::rename(&tmp, p.dir.join(SNAPSHOT_FILE))?;
        Ok(())
    }

    pub fn hits(&self) -> &[Hit] {
        &self.hits
    }

    pub fn annotations(&self) -> &[Annotation] {
        &self.annotations
    }

    fn hit_done_by(&self, worker: &str, hit: &Hit) -> bool {
        hit.documents
            .iter()
            .all(|d| self.answered.contains(&(worker.to_string(), hit.hit_id.clone(), d.document_id.clone())))
    }

    fn workers_on(&self, hit_id: &str) -> usize {
        self.assignments.values().filter(|h| h.iter().any(|x| x == hit_id)).count()
    }

    /// The worker's unfinished HIT if any, otherwise the first HIT that still
    /// needs workers and that this worker has not taken.
    pub fn next_hit(&mut self, worker: &str) -> Result<Option<HitView>, AnnotateError> {
        if worker.trim().is_empty() {
            return Err(AnnotateError::Validation("worker id is empty".into()));
        }
        let mine = self.assignments.get(worker).cloned().unwrap_or_default();
        let open = mine.iter().find(|id| !self.hit_done_by(worker, &self.hits[self.hit_pos[*id]]));
        let hit_id = match open {
            Some(id) => id.clone(),
            None => {
                let Some(hit) = self
                    .hits
                    .iter()
                    .find(|h| !mine.contains(&h.hit_id) && self.workers_on(&h.hit_id) < h.assignments)
                else {
                    return Ok(None);
                };
                let id = hit.hit_id.clone();
                self.record(Event::Assign { worker_id: worker.to_string(), hit_id: id.clone() })?;
                id
            }
        };
        Ok(Some(self.view(worker, &hit_id)))
    }

    fn view(&self, worker: &str, hit_id: &str) -> HitView {
        let hit = &self.hits[self.hit_pos[hit_id]];
        HitView {
            hit_id: hit.hit_id.clone(),
            documents: hit
                .documents
                .iter()
                .map(|d| DocumentView {
                    document_id: d.document_id.clone(),
                    sentences: self.documents[&d.document_id].sentences.clone(),
                })
                .collect(),
            completed: hit
                .documents
                .iter()
                .filter(|d| self.answered.contains(&(worker.to_string(), hit.hit_id.clone(), d.document_id.clone())))
                .map(|d| d.document_id.clone())
                .collect(),
        }
    }

    pub fn submit(&mut self, annotation: Annotation) -> Result<(), AnnotateError> {
        let Some(&pos) = self.hit_pos.get(&annotation.hit_id) else {
            return Err(AnnotateError::Validation(format!("unknown hit `{}`", annotation.hit_id)));
        };
        let hit = &self.hits[pos];
        if !self.assignments.get(&annotation.worker_id).is_some_and(|h| h.contains(&annotation.hit_id)) {
            return Err(AnnotateError::Validation(format!(
                "worker `{}` is not assigned to `{}`",
                annotation.worker_id, annotation.hit_id
            )));
        }
        if !hit.contains(&annotation.document_id) {
            return Err(AnnotateError::Validation(format!(
                "document `{}` is not part of `{}`",
                annotation.document_id, annotation.hit_id
            )));
        }
        let n = self.documents[&annotation.document_id].sentences.len();
        if let Choice::Sentence(i) = annotation.choice {
            if i == 1 {
                return Err(AnnotateError::Validation("the opening sentence cannot be selected".into()));
            }
            if i < 2 || i > n {
                return Err(AnnotateError::Validation(format!("choice {i} is outside 2..={n}")));
            }
        }
        let key = (annotation.worker_id.clone(), annotation.hit_id.clone(), annotation.document_id.clone());
        if self.answered.contains(&key) {
            let (worker, hit, document) = key;
            return Err(AnnotateError::Duplicate { worker, hit, document });
        }
        self.record(Event::Annotation(annotation))
    }

    /// Line-delimited JSON export of every annotation in arrival order.
    pub fn export(&self) -> String {
        let mut out = String::new();
        for a in &self.annotations {
            out.push_str(&serde_json::to_string(a).expect("annotation serializes"));
            out.push('\n');
        }
        out
    }

    pub fn gold(&self) -> BTreeMap<String, Choice> {
        self.documents.iter().map(|(id, d)| (id.clone(), Choice::gold(d))).collect()
    }

    pub fn aggregate(&self, min_agreement: usize) -> AggregateReport {
        aggregate(&self.hits, &self.annotations, &self.gold(), min_agreement)
    }
}

pub fn parse_export(text: &str) -> Result<Vec<Annotation>, serde_json::Error> {
    text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedLabel {
    pub document_id: String,
    /// `None` when nobody voted or the top choices tie.
    pub majority_choice: Option<Choice>,
    pub agreement_count: usize,
    pub votes: usize,
    pub tied: bool,
    pub retained: bool,
    pub matches_gold: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerQuality {
    pub worker_id: String,
    pub control_answers: usize,
    pub control_correct: usize,
    pub control_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub labels: Vec<AggregatedLabel>,
    pub workers: Vec<WorkerQuality>,
    pub under_annotated: Vec<String>,
    pub retained_fraction: f64,
    /// Retained and equal to the dataset label.
    pub retained_matching_gold_fraction: f64,
    pub min_agreement: usize,
}

/// Majority vote per scored document. Pure in the annotation multiset:
/// annotation order and timestamps do not matter.
pub fn aggregate(hits: &[Hit], annotations: &[Annotation], gold: &BTreeMap<String, Choice>, min_agreement: usize) -> AggregateReport {
    let scored: BTreeSet<(&str, &str)> = hits
        .iter()
        .flat_map(|h| h.scored_documents().map(move |d| (h.hit_id.as_str(), d)))
        .collect();
    let controls: BTreeSet<(&str, &str)> = hits.iter().map(|h| (h.hit_id.as_str(), h.control_doc_id.as_str())).collect();

    let mut votes: BTreeMap<&str, BTreeMap<Choice, usize>> = scored.iter().map(|(_, d)| (*d, BTreeMap::new())).collect();
    let mut control_stats: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for a in annotations {
        let key = (a.hit_id.as_str(), a.document_id.as_str());
        if scored.contains(&key) {
            *votes.get_mut(a.document_id.as_str()).unwrap().entry(a.choice).or_default() += 1;
        }
        if controls.contains(&key) {
            let e = control_stats.entry(a.worker_id.as_str()).or_default();
            e.0 += 1;
            if gold.get(&a.document_id) == Some(&a.choice) {
                e.1 += 1;
            }
        }
    }

    let mut labels = Vec::new();
    let mut under_annotated = Vec::new();
    for (doc, counts) in &votes {
        let total: usize = counts.values().sum();
        if total < min_agreement {
            under_annotated.push(doc.to_string());
        }
        let best = counts.values().copied().max().unwrap_or(0);
        let leaders: Vec<Choice> = counts.iter().filter(|(_, &c)| c == best).map(|(&k, _)| k).collect();
        let tied = leaders.len() > 1;
        let majority_choice = if leaders.len() == 1 { Some(leaders[0]) } else { None };
        let retained = !tied && majority_choice.is_some() && best >= min_agreement;
        labels.push(AggregatedLabel {
            document_id: doc.to_string(),
            majority_choice,
            agreement_count: best,
            votes: total,
            tied,
            retained,
            matches_gold: retained && majority_choice.as_ref() == gold.get(*doc),
        });
    }
    let workers = control_stats
        .into_iter()
        .map(|(w, (n, ok))| WorkerQuality {
            worker_id: w.to_string(),
            control_answers: n,
            control_correct: ok,
            control_accuracy: ok as f64 / n as f64,
        })
        .collect();
    let frac = |k: usize| if labels.is_empty() { 0.0 } else { k as f64 / labels.len() as f64 };
    AggregateReport {
        retained_fraction: frac(labels.iter().filter(|l| l.retained).count()),
        retained_matching_gold_fraction: frac(labels.iter().filter(|l| l.matches_gold).count()),
        labels,
        workers,
        under_annotated,
        min_agreement,
    }
}
