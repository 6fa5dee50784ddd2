//! Pipeline configuration: a flat `key=value` file, overridable per key.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use forge_core::corpus::Source;
use forge_core::report::{config_hash, KvDocument};
use forge_core::synthesis::{Strategy, SynthesisConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub source: Source,
    pub input: String,
    pub input_format: String,
    pub reference: Option<PathBuf>,
    pub work_dir: PathBuf,
    pub log2_bins: u32,
    pub top_k: usize,
    pub similarity_cap: f64,
    pub version_threshold: f64,
    pub easy_threshold: f64,
    pub test_fraction: Option<f64>,
    pub strategy: Strategy,
    pub scorer: String,
    pub probe_n: usize,
    pub phenomena: String,
    pub probe_split: String,
    pub adapter: String,
    pub mode: String,
    pub threshold: f64,
    pub batch_size: usize,
    pub eval_split: String,
    pub min_agreement: usize,
    pub audit_acc_margin: f64,
    pub audit_f1_margin: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            source: Source::Wiki,
            input: String::new(),
            input_format: "jsonl".into(),
            reference: None,
            work_dir: PathBuf::from("forge-out"),
            log2_bins: forge_core::retrieval::DEFAULT_LOG2_BINS,
            top_k: 10,
            similarity_cap: 0.6,
            version_threshold: 0.72,
            easy_threshold: 0.5,
            test_fraction: None,
            strategy: Strategy::DocumentQuery,
            scorer: "bootstrap".into(),
            probe_n: 100,
            phenomena: "all".into(),
            probe_split: "test".into(),
            adapter: "majority".into(),
            mode: "context".into(),
            threshold: 0.5,
            batch_size: 64,
            eval_split: "test".into(),
            min_agreement: 3,
            audit_acc_margin: 2.0,
            audit_f1_margin: 10.0,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| anyhow!("{key}: invalid value `{value}`: {e}"))
}

impl PipelineConfig {
    pub const KEYS: &'static [&'static str] = &[
        "seed", "source", "input", "input_format", "reference", "work_dir", "log2_bins", "top_k",
        "similarity_cap", "version_threshold", "easy_threshold", "test_fraction", "strategy", "scorer",
        "probe_n", "phenomena", "probe_split", "adapter", "mode", "threshold", "batch_size", "eval_split",
        "min_agreement", "audit_acc_margin", "audit_f1_margin",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "seed" => self.seed = parse(key, v)?,
            "source" => self.source = v.parse().map_err(|_| anyhow!("source: unknown source `{v}`"))?,
            "input" => self.input = v.into(),
            "input_format" => self.input_format = v.into(),
            "reference" => self.reference = (!v.is_empty()).then(|| PathBuf::from(v)),
            "work_dir" => self.work_dir = PathBuf::from(v),
            "log2_bins" => self.log2_bins = parse(key, v)?,
            "top_k" => self.top_k = parse(key, v)?,
            "similarity_cap" => self.similarity_cap = parse(key, v)?,
            "version_threshold" => self.version_threshold = parse(key, v)?,
            "easy_threshold" => self.easy_threshold = parse(key, v)?,
            "test_fraction" => self.test_fraction = if v.is_empty() || v == "auto" { None } else { Some(parse(key, v)?) },
            "strategy" => self.strategy = v.parse().map_err(|e| anyhow!("strategy: {e}"))?,
            "scorer" => self.scorer = v.into(),
            "probe_n" => self.probe_n = parse(key, v)?,
            "phenomena" => self.phenomena = v.into(),
            "probe_split" => self.probe_split = v.into(),
            "adapter" => self.adapter = v.into(),
            "mode" => self.mode = v.into(),
            "threshold" => self.threshold = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "eval_split" => self.eval_split = v.into(),
            "min_agreement" => self.min_agreement = parse(key, v)?,
            "audit_acc_margin" => self.audit_acc_margin = parse(key, v)?,
            "audit_f1_margin" => self.audit_f1_margin = parse(key, v)?,
            other => bail!("unknown config key `{other}`"),
        }
        Ok(())
    }

    pub fn from_kv(doc: &KvDocument) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        for (k, v) in doc.entries() {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let doc = KvDocument::parse(&text).with_context(|| format!("parsing {}", path.display()))?;
        Self::from_kv(&doc)
    }

    /// Applies `key=value` overrides on top of the current values.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        for o in overrides {
            let (k, v) = o.split_once('=').ok_or_else(|| anyhow!("override `{o}` is not key=value"))?;
            self.set(k.trim(), v)?;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        self.synthesis().validate().map_err(|e| anyhow!("{e}"))?;
        if !(1..=31).contains(&self.log2_bins) {
            bail!("log2_bins must be in 1..=31");
        }
        if self.min_agreement == 0 {
            bail!("min_agreement must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            bail!("threshold must be in [0, 1]");
        }
        if self.batch_size == 0 {
            bail!("batch_size must be at least 1");
        }
        Ok(())
    }

    pub fn test_fraction(&self) -> f64 {
        self.test_fraction.unwrap_or_else(|| SynthesisConfig::for_source(self.source).test_fraction)
    }

    pub fn synthesis(&self) -> SynthesisConfig {
        SynthesisConfig {
            seed: self.seed,
            top_k: self.top_k,
            similarity_cap: self.similarity_cap,
            easy_threshold: self.easy_threshold,
            test_fraction: self.test_fraction(),
            version_threshold: self.version_threshold,
            strategy: self.strategy,
        }
    }

    pub fn to_map(&self) -> BTreeMap<String, String> {
        let opt = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let pairs: [(&str, String); 25] = [
            ("seed", self.seed.to_string()),
            ("source", self.source.to_string()),
            ("input", self.input.clone()),
            ("input_format", self.input_format.clone()),
            ("reference", opt(&self.reference)),
            ("work_dir", self.work_dir.display().to_string()),
            ("log2_bins", self.log2_bins.to_string()),
            ("top_k", self.top_k.to_string()),
            ("similarity_cap", self.similarity_cap.to_string()),
            ("version_threshold", self.version_threshold.to_string()),
            ("easy_threshold", self.easy_threshold.to_string()),
            ("test_fraction", self.test_fraction().to_string()),
            ("strategy", self.strategy.to_string()),
            ("scorer", self.scorer.clone()),
            ("probe_n", self.probe_n.to_string()),
            ("phenomena", self.phenomena.clone()),
            ("probe_split", self.probe_split.clone()),
            ("adapter", self.adapter.clone()),
            ("mode", self.mode.clone()),
            ("threshold", self.threshold.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("eval_split", self.eval_split.clone()),
            ("min_agreement", self.min_agreement.to_string()),
            ("audit_acc_margin", self.audit_acc_margin.to_string()),
            ("audit_f1_margin", self.audit_f1_margin.to_string()),
        ];
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    pub fn hash(&self) -> String {
        config_hash(&self.to_map())
    }

    pub fn render(&self) -> String {
        let mut doc = KvDocument::new();
        for (k, v) in self.to_map() {
            doc.set(&k, v);
        }
        doc.render()
    }
}
