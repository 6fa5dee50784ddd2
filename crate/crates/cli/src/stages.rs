use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use forge_core::annotate::{self, AggregateReport, Annotation, Choice, Hit};
use forge_core::audit::{run_audit, AuditConfig, AuditReport, Verdict};
use forge_core::corpus::{self, Corpus, Document, RawRecord};
use forge_core::demo;
use forge_core::evaluation::{delta_f1, evaluate, run_adapter, AdapterConfig, AdapterMode, MetricsReport, PredictionSet};
use forge_core::logistic::LogisticConfig;
use forge_core::probes::{build_probe_suite, Phenomenon};
use forge_core::report::{pct, KvDocument};
use forge_core::retrieval::{build_index, Hasher, RetrievalIndex};
use forge_core::synthesis::{self, DatasetInstance, Split};
use serde::Serialize;
use serde_json::Value;

use crate::adapters::{scorer_from_spec, AdapterDifficulty};
use crate::config::PipelineConfig;
use crate::files;

/// Marks errors that should exit with the usage status.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

pub const STAGE_ORDER: &[&str] = &["ingest", "index", "synthesize", "audit", "probe", "eval"];

pub fn header(stage: &str, cfg: &PipelineConfig) -> KvDocument {
    let mut doc = KvDocument::new();
    doc.set("stage", stage).set("config_hash", cfg.hash()).set("seed", cfg.seed);
    doc
}

/// Flattens a serializable value into dotted keys.
pub fn flatten(doc: &mut KvDocument, prefix: &str, value: &impl Serialize) {
    fn walk(doc: &mut KvDocument, key: &str, v: &Value) {
        match v {
            Value::Object(map) => {
                for (k, v) in map {
                    let key = if key.is_empty() { k.clone() } else { format!("{key}.{k}") };
                    walk(doc, &key, v);
                }
            }
            Value::Null => {
                doc.set(key, "");
            }
            Value::String(s) => {
                doc.set(key, s);
            }
            Value::Number(n) => match n.as_f64() {
                Some(f) if n.is_f64() => {
                    doc.set(key, pct(f));
                }
                _ => {
                    doc.set(key, n);
                }
            },
            other => {
                doc.set(key, other);
            }
        }
    }
    walk(doc, prefix, &serde_json::to_value(value).expect("report serializes"));
}

pub fn write_report(path: Option<&Path>, doc: &KvDocument) -> Result<()> {
    match path {
        Some(p) => files::write_text(p, &doc.render()),
        None => {
            print!("{}", doc.render());
            Ok(())
        }
    }
}

// ---------------------------------------------------------------------------

pub fn load_records(input: &str, format: &str, seed: u64) -> Result<Vec<RawRecord>> {
    if let Some(n) = input.strip_prefix("demo:") {
        let n: usize = n.parse().map_err(|_| usage(format!("bad demo size in `{input}`")))?;
        return Ok(demo::demo_corpus(seed, n));
    }
    let path = Path::new(input);
    match format {
        "jsonl" => Ok(corpus::read_jsonl_records(files::open(path)?)?),
        "stories" => Ok(corpus::read_story_dir(path).with_context(|| format!("reading stories from {}", path.display()))?),
        other => Err(usage(format!("unknown input format `{other}` (expected jsonl or stories)"))),
    }
}

pub fn ingest(cfg: &PipelineConfig, input: &str, format: &str, out: &Path) -> Result<KvDocument> {
    let records = load_records(input, format, cfg.seed)?;
    let (docs, report) = corpus::ingest(&records, cfg.source, cfg.seed)?;
    if docs.is_empty() {
        bail!("no document survived ingestion ({} records)", records.len());
    }
    files::write_jsonl(out, &docs)?;
    let mut doc = header("ingest", cfg);
    doc.set("source", cfg.source).set("output", out.display());
    flatten(&mut doc, "", &report);
    Ok(doc)
}

pub fn read_documents(path: &Path) -> Result<Vec<Document>> {
    files::read_jsonl(path)
}

pub fn index(cfg: &PipelineConfig, corpus_path: &Path, out: &Path) -> Result<KvDocument> {
    let docs = read_documents(corpus_path)?;
    let hasher = Hasher::with_log2_bins(cfg.log2_bins)?;
    let index = build_index(&docs, hasher)?;
    files::write_atomic(out, |w| Ok(index.save(w)?))?;
    let mut doc = header("index", cfg);
    doc.set("output", out.display())
        .set("documents", index.doc_count())
        .set("num_bins", index.num_bins())
        .set("hash_seed", hasher.seed())
        .set("occupied_bins", index.bin_doc_freq().len());
    Ok(doc)
}

pub fn load_index(path: &Path) -> Result<RetrievalIndex> {
    RetrievalIndex::load(files::open(path)?).with_context(|| format!("loading index {}", path.display()))
}

pub fn synthesize(cfg: &PipelineConfig, corpus_path: &Path, index_path: &Path, out: &Path) -> Result<KvDocument> {
    let docs = read_documents(corpus_path)?;
    let index = load_index(index_path)?;
    let corpus = Corpus::new(docs)?;
    let references = match &cfg.reference {
        Some(path) => {
            let records = corpus::read_jsonl_records(files::open(path)?)?;
            let (refs, _) = corpus::ingest(&records, cfg.source, cfg.seed)?;
            Some(corpus::reference_map(refs))
        }
        None => None,
    };
    let config = cfg.synthesis();
    let (dataset, report) = match cfg.scorer.as_str() {
        "bootstrap" => synthesis::synthesize_bootstrap(&corpus, &index, &config, references.as_ref())?,
        "none" => synthesis::synthesize_dataset(&corpus, &index, None, "none", &config, references.as_ref())?,
        spec => {
            let Some(adapter) = spec.strip_prefix("adapter:") else {
                return Err(usage(format!("unknown scorer `{spec}` (expected bootstrap, none or adapter:<spec>)")));
            };
            let scorer = AdapterDifficulty::new(adapter)?;
            synthesis::synthesize_dataset(&corpus, &index, Some(&scorer), spec, &config, references.as_ref())?
        }
    };
    for inst in &dataset {
        inst.validate().map_err(|e| anyhow!("invalid instance: {e}"))?;
    }
    files::write_jsonl(out, &dataset)?;
    let mut doc = header("synthesize", cfg);
    doc.set("output", out.display()).set("strategy", cfg.strategy);
    flatten(&mut doc, "", &report);
    Ok(doc)
}

pub fn read_dataset(path: &Path) -> Result<Vec<DatasetInstance>> {
    files::read_jsonl(path)
}

pub fn filter_split(dataset: Vec<DatasetInstance>, split: &str) -> Result<Vec<DatasetInstance>> {
    let keep: Option<Split> = match split {
        "all" => None,
        "train" => Some(Split::Train),
        "test" => Some(Split::Test),
        other => return Err(usage(format!("unknown split `{other}` (expected train, test or all)"))),
    };
    Ok(dataset.into_iter().filter(|d| keep.is_none_or(|s| d.split == s)).collect())
}

pub fn audit_config(cfg: &PipelineConfig) -> AuditConfig {
    AuditConfig {
        acc_margin: cfg.audit_acc_margin,
        f1_margin: cfg.audit_f1_margin,
        logistic: LogisticConfig { seed: cfg.seed, ..LogisticConfig::default() },
        ..AuditConfig::default()
    }
}

pub fn audit(cfg: &PipelineConfig, dataset_path: &Path) -> Result<(KvDocument, AuditReport)> {
    let dataset = read_dataset(dataset_path)?;
    let report = run_audit(&dataset, &audit_config(cfg))?;
    let mut doc = header("audit", cfg);
    doc.set("dataset", dataset_path.display());
    flatten(&mut doc, "", &report);
    Ok((doc, report))
}

pub fn parse_phenomena(spec: &str) -> Result<Vec<Phenomenon>> {
    if spec == "all" {
        return Ok(Phenomenon::ALL.to_vec());
    }
    spec.split(',')
        .map(|p| p.trim().parse::<Phenomenon>().map_err(|e| usage(e.to_string())))
        .collect()
}

pub fn probe(cfg: &PipelineConfig, dataset_path: &Path, out: &Path) -> Result<(KvDocument, Vec<String>)> {
    let dataset = filter_split(read_dataset(dataset_path)?, &cfg.probe_split)?;
    let phenomena = parse_phenomena(&cfg.phenomena)?;
    let mut doc = header("probe", cfg);
    doc.set("dataset", dataset_path.display()).set("output", out.display()).set("split", &cfg.probe_split);
    let mut all = Vec::new();
    let mut warnings = Vec::new();
    for p in phenomena {
        let suite = build_probe_suite(&dataset, p, cfg.probe_n, cfg.seed);
        doc.set(&format!("{p}.probes"), suite.probes.len())
            .set(&format!("{p}.applicable_pool"), suite.applicable_pool)
            .set(&format!("{p}.shortfall"), suite.shortfall);
        if let Some(w) = suite.warning {
            warnings.push(w);
        }
        all.extend(suite.instances);
    }
    doc.set("total", all.len());
    files::write_jsonl(out, &all)?;
    Ok((doc, warnings))
}

fn metrics_into(doc: &mut KvDocument, prefix: &str, m: &MetricsReport) {
    flatten(doc, prefix, m);
}

pub struct EvalArgs<'a> {
    pub dataset: &'a Path,
    pub probes: Option<&'a Path>,
    pub predictions_out: Option<&'a Path>,
}

pub fn eval(cfg: &PipelineConfig, args: &EvalArgs<'_>) -> Result<KvDocument> {
    let dataset = filter_split(read_dataset(args.dataset)?, &cfg.eval_split)?;
    if dataset.is_empty() {
        bail!("no instances in split `{}`", cfg.eval_split);
    }
    let mode: AdapterMode = cfg.mode.parse().map_err(usage)?;
    let adapter_cfg = AdapterConfig { mode, threshold: cfg.threshold, batch_size: cfg.batch_size };
    let mut scorer = scorer_from_spec(&cfg.adapter, &dataset, cfg.seed).map_err(|e| usage(e.to_string()))?;
    let predictions = run_adapter(&dataset, scorer.as_mut(), &adapter_cfg)?;
    let metrics = evaluate(&dataset, &predictions)?;
    if let Some(path) = args.predictions_out {
        files::write_text(path, &(serde_json::to_string(&predictions)? + "\n"))?;
    }
    let mut doc = header("eval", cfg);
    doc.set("dataset", args.dataset.display())
        .set("split", &cfg.eval_split)
        .set("adapter", &cfg.adapter)
        .set("mode", &cfg.mode)
        .set("threshold", cfg.threshold)
        .set("instances", dataset.len());
    metrics_into(&mut doc, "", &metrics);

    if let Some(probe_path) = args.probes {
        let in_split: std::collections::BTreeSet<&str> = dataset.iter().map(|d| d.instance_id.as_str()).collect();
        let probed: Vec<DatasetInstance> = read_dataset(probe_path)?
            .into_iter()
            .filter(|p| p.probe.as_ref().is_some_and(|t| in_split.contains(t.base_instance_id.as_str())))
            .collect();
        let mut by_phenomenon: BTreeMap<Phenomenon, Vec<DatasetInstance>> = BTreeMap::new();
        for p in probed {
            let phen = p.probe.as_ref().expect("filtered").phenomenon;
            by_phenomenon.entry(phen).or_default().push(p);
        }
        for (phen, instances) in &by_phenomenon {
            let probed_preds = probe_predictions(scorer.as_mut(), instances, &adapter_cfg, &cfg.adapter)?;
            let delta = delta_f1(&dataset, instances, &predictions, &probed_preds)?;
            flatten(&mut doc, &format!("delta.{phen}"), &delta);
        }
    }
    Ok(doc)
}

/// The oracle reads gold positions from the instances it is asked about, so
/// it is rebuilt for the probed set.
fn probe_predictions(
    scorer: &mut dyn forge_core::evaluation::SentenceScorer,
    instances: &[DatasetInstance],
    adapter_cfg: &AdapterConfig,
    spec: &str,
) -> Result<PredictionSet> {
    if spec == "oracle" {
        let mut oracle = forge_core::evaluation::OracleScorer::new(instances);
        return Ok(run_adapter(instances, &mut oracle, adapter_cfg)?);
    }
    Ok(run_adapter(instances, scorer, adapter_cfg)?)
}

pub fn aggregate(
    cfg: &PipelineConfig,
    hits: &[Hit],
    annotations: &[Annotation],
    dataset: &[DatasetInstance],
) -> (KvDocument, AggregateReport) {
    let gold: BTreeMap<String, Choice> = dataset.iter().map(|d| (d.instance_id.clone(), Choice::gold(d))).collect();
    let report = annotate::aggregate(hits, annotations, &gold, cfg.min_agreement);
    let mut doc = header("aggregate", cfg);
    doc.set("documents", report.labels.len())
        .set("retained", report.labels.iter().filter(|l| l.retained).count())
        .set("tied", report.labels.iter().filter(|l| l.tied).count())
        .set("retained_fraction", pct(report.retained_fraction))
        .set("retained_matching_gold_fraction", pct(report.retained_matching_gold_fraction))
        .set("under_annotated", report.under_annotated.len())
        .set("workers", report.workers.len())
        .set("min_agreement", cfg.min_agreement);
    (doc, report)
}

pub struct PipelinePaths {
    pub corpus: PathBuf,
    pub index: PathBuf,
    pub dataset: PathBuf,
    pub probes: PathBuf,
}

impl PipelinePaths {
    pub fn new(dir: &Path) -> Self {
        PipelinePaths {
            corpus: dir.join("corpus.jsonl"),
            index: dir.join("index.jsonl"),
            dataset: dir.join("dataset.jsonl"),
            probes: dir.join("probes.jsonl"),
        }
    }
}

pub fn parse_stages(csv: &str) -> Result<Vec<&'static str>> {
    let mut wanted = Vec::new();
    for s in csv.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if s == "all" {
            wanted.extend(STAGE_ORDER.iter().copied());
            continue;
        }
        match STAGE_ORDER.iter().find(|k| **k == s) {
            Some(k) => wanted.push(*k),
            None => return Err(usage(format!("unknown stage `{s}` (expected one of {})", STAGE_ORDER.join(", ")))),
        }
    }
    if wanted.is_empty() {
        return Err(usage("no stages given"));
    }
    Ok(STAGE_ORDER.iter().copied().filter(|s| wanted.contains(s)).collect())
}

/// Runs the requested stages in dependency order inside `cfg.work_dir`.
/// Returns the stage reports; the first failing stage aborts the run.
pub fn run_pipeline(cfg: &PipelineConfig, stages: &[&str], log: &mut dyn FnMut(&str)) -> Result<Vec<(String, KvDocument)>> {
    let dir = &cfg.work_dir;
    std::fs::create_dir_all(dir)?;
    let paths = PipelinePaths::new(dir);
    files::write_text(&dir.join("config.kv"), &cfg.render())?;
    let mut reports = Vec::new();
    for &stage in stages {
        log(&format!("stage {stage}"));
        let result = match stage {
            "ingest" => {
                if cfg.input.is_empty() {
                    return Err(usage("config key `input` is required for the ingest stage"));
                }
                ingest(cfg, &cfg.input, &cfg.input_format, &paths.corpus)
            }
            "index" => index(cfg, &paths.corpus, &paths.index),
            "synthesize" => synthesize(cfg, &paths.corpus, &paths.index, &paths.dataset),
            "audit" => audit(cfg, &paths.dataset).map(|(doc, report)| {
                if report.verdict == Verdict::Suspect {
                    log("audit verdict: suspect");
                }
                doc
            }),
            "probe" => probe(cfg, &paths.dataset, &paths.probes).map(|(doc, warnings)| {
                for w in warnings {
                    log(&format!("warning: {w}"));
                }
                doc
            }),
            "eval" => {
                let probes = paths.probes.exists().then_some(paths.probes.as_path());
                eval(cfg, &EvalArgs { dataset: &paths.dataset, probes, predictions_out: None })
            }
            other => unreachable!("unvalidated stage {other}"),
        };
        let doc = result.with_context(|| format!("stage `{stage}` failed"))?;
        files::write_text(&dir.join(format!("{stage}.report")), &doc.render())?;
        reports.push((stage.to_string(), doc));
    }
    Ok(reports)
}
