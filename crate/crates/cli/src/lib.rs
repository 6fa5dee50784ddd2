//! Command-line driver: argument parsing and the glue between files on disk
//! and the core pipeline stages.

pub mod adapters;
pub mod config;
pub mod files;
pub mod server;
pub mod stages;

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use forge_core::annotate::{self, AnnotationStore, Hit, DEFAULT_SNAPSHOT_EVERY};
use forge_core::audit::Verdict;
use forge_core::demo;

use crate::config::PipelineConfig;
use crate::stages::{usage, UsageError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "forge", version, about = "Builds and evaluates intruder-sentence detection benchmarks")]
pub struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

/// Options shared by every stage command.
#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    /// key=value config file; command-line flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Extra config override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Where to write the stage report (default: stdout).
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Segment raw records into 3-8 sentence documents.
    Ingest {
        #[command(flatten)]
        common: Common,
        /// JSONL records, a story directory, or `demo:<docs>`.
        #[arg(long)]
        input: String,
        /// jsonl or stories.
        #[arg(long)]
        format: Option<String>,
        /// wiki or news.
        #[arg(long)]
        source: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the hashed TF-IDF retrieval index.
    Index {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        log2_bins: Option<u32>,
    },
    /// Generate the labelled dataset.
    Synthesize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// bootstrap, none, or adapter:<spec>.
        #[arg(long)]
        scorer: Option<String>,
        #[arg(long)]
        strategy: Option<String>,
        #[arg(long)]
        source: Option<String>,
        #[arg(long)]
        test_fraction: Option<f64>,
        /// JSONL records holding the reference version of each document.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Check whether standalone sentences already give the intruder away.
    Audit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        /// Exit with status 1 when the verdict is suspect.
        #[arg(long)]
        fail_on_suspect: bool,
    },
    /// Build linguistic probe suites from incoherent instances.
    Probe {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Probes per phenomenon.
        #[arg(long)]
        n: Option<usize>,
        /// `all` or a comma-separated list.
        #[arg(long)]
        phenomena: Option<String>,
        /// train, test or all.
        #[arg(long)]
        split: Option<String>,
    },
    /// Score a dataset with an adapter and report metrics.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        /// Probed instances; adds per-phenomenon F1 deltas.
        #[arg(long)]
        probes: Option<PathBuf>,
        /// exec:<cmd>, http:<url>, majority, oracle or random:<rate>.
        #[arg(long)]
        adapter: Option<String>,
        /// context or standalone.
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        split: Option<String>,
        /// Write the binarised predictions as JSON.
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Serve the annotation API (and optionally the UI files).
    Serve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        state_dir: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
        #[arg(long)]
        static_dir: Option<PathBuf>,
        /// Bearer token for /api/export (falls back to FORGE_EXPORT_TOKEN).
        #[arg(long)]
        export_token: Option<String>,
        #[arg(long, default_value_t = DEFAULT_SNAPSHOT_EVERY)]
        snapshot_every: u64,
        #[arg(long)]
        min_agreement: Option<usize>,
    },
    /// Majority-vote exported annotations.
    Aggregate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        /// Annotation export (JSON lines).
        #[arg(long)]
        annotations: PathBuf,
        /// HIT layout written by `serve` (hits.json in its state directory).
        #[arg(long)]
        hits: PathBuf,
        /// Full aggregate report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        min_agreement: Option<usize>,
    },
    /// Run several stages in a work directory from one config.
    Pipeline {
        #[command(flatten)]
        common: Common,
        /// Comma-separated stages, or `all`.
        #[arg(long, default_value = "all")]
        stages: String,
    },
    /// Write the built-in demo corpus as JSONL records.
    DemoCorpus {
        #[arg(long, default_value_t = demo::DEFAULT_DEMO_DOCS)]
        docs: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(common: &Common, flags: &[(&str, Option<String>)]) -> Result<PipelineConfig> {
    let mut cfg = match &common.config {
        Some(p) => PipelineConfig::load(p).map_err(|e| usage(format!("{e:#}")))?,
        None => PipelineConfig::default(),
    };
    let mut overrides = Vec::new();
    if let Some(seed) = common.seed {
        overrides.push(format!("seed={seed}"));
    }
    for (k, v) in flags {
        if let Some(v) = v {
            overrides.push(format!("{k}={v}"));
        }
    }
    overrides.extend(common.set.iter().cloned());
    cfg.apply_overrides(&overrides).map_err(|e| usage(format!("{e:#}")))?;
    Ok(cfg)
}

fn s<T: ToString>(v: &Option<T>) -> Option<String> {
    v.as_ref().map(ToString::to_string)
}

fn load_or_build_hits(state_dir: &Path, dataset: &[forge_core::DatasetInstance], cfg: &PipelineConfig) -> Result<Vec<Hit>> {
    let path = state_dir.join("hits.json");
    if path.exists() {
        let text = std::fs::read_to_string(&path)?;
        return serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()));
    }
    let test: Vec<_> = dataset.iter().filter(|d| d.split == forge_core::Split::Test).cloned().collect();
    let controls = annotate::easy_controls(dataset, cfg.easy_threshold);
    let hits = annotate::build_hits(&test, &controls, cfg.seed)?;
    std::fs::create_dir_all(state_dir)?;
    files::write_text(&path, &serde_json::to_string_pretty(&hits)?)?;
    Ok(hits)
}

/// Runs a parsed command. Errors wrapping [`UsageError`] map to exit code 2.
pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Ingest { common, input, format, source, out } => {
            let cfg = load_config(&common, &[("input_format", format), ("source", source)])?;
            let doc = stages::ingest(&cfg, &input, &cfg.input_format, &out)?;
            stages::write_report(common.report.as_deref(), &doc)
        }
        Command::Index { common, corpus, out, log2_bins } => {
            let cfg = load_config(&common, &[("log2_bins", s(&log2_bins))])?;
            let doc = stages::index(&cfg, &corpus, &out)?;
            stages::write_report(common.report.as_deref(), &doc)
        }
        Command::Synthesize { common, corpus, index, out, scorer, strategy, source, test_fraction, reference } => {
            let cfg = load_config(
                &common,
                &[
                    ("scorer", scorer),
                    ("strategy", strategy),
                    ("source", source),
                    ("test_fraction", s(&test_fraction)),
                    ("reference", reference.map(|p| p.display().to_string())),
                ],
            )?;
            let doc = stages::synthesize(&cfg, &corpus, &index, &out)?;
            stages::write_report(common.report.as_deref(), &doc)
        }
        Command::Audit { common, dataset, fail_on_suspect } => {
            let cfg = load_config(&common, &[])?;
            let (doc, report) = stages::audit(&cfg, &dataset)?;
            stages::write_report(common.report.as_deref(), &doc)?;
            if fail_on_suspect && report.verdict == Verdict::Suspect {
                anyhow::bail!("audit verdict is suspect");
            }
            Ok(())
        }
        Command::Probe { common, dataset, out, n, phenomena, split } => {
            let cfg = load_config(&common, &[("probe_n", s(&n)), ("phenomena", phenomena), ("probe_split", split)])?;
            let (doc, warnings) = stages::probe(&cfg, &dataset, &out)?;
            for w in warnings {
                eprintln!("warning: {w}");
            }
            stages::write_report(common.report.as_deref(), &doc)
        }
        Command::Eval { common, dataset, probes, adapter, mode, threshold, batch_size, split, predictions } => {
            let cfg = load_config(
                &common,
                &[
                    ("adapter", adapter),
                    ("mode", mode),
                    ("threshold", s(&threshold)),
                    ("batch_size", s(&batch_size)),
                    ("eval_split", split),
                ],
            )?;
            let args = stages::EvalArgs {
                dataset: &dataset,
                probes: probes.as_deref(),
                predictions_out: predictions.as_deref(),
            };
            let doc = stages::eval(&cfg, &args)?;
            stages::write_report(common.report.as_deref(), &doc)
        }
        Command::Serve { common, dataset, state_dir, bind, static_dir, export_token, snapshot_every, min_agreement } => {
            let cfg = load_config(&common, &[("min_agreement", s(&min_agreement))])?;
            let dataset = stages::read_dataset(&dataset)?;
            let hits = load_or_build_hits(&state_dir, &dataset, &cfg)?;
            let store = AnnotationStore::open(&state_dir, hits, &dataset, snapshot_every.max(1))?;
            let export_token = export_token.or_else(|| std::env::var("FORGE_EXPORT_TOKEN").ok()).filter(|t| !t.is_empty());
            if export_token.is_none() {
                eprintln!("warning: no export token configured; /api/export is disabled");
            }
            let options = server::ServerOptions { static_dir, export_token, min_agreement: cfg.min_agreement };
            let running = server::start(&bind, store, options)?;
            eprintln!("listening on {}", running.url());
            running.join();
            Ok(())
        }
        Command::Aggregate { common, dataset, annotations, hits, out, min_agreement } => {
            let cfg = load_config(&common, &[("min_agreement", s(&min_agreement))])?;
            let dataset = stages::read_dataset(&dataset)?;
            let hits: Vec<Hit> = serde_json::from_str(&std::fs::read_to_string(&hits)?)
                .with_context(|| format!("parsing {}", hits.display()))?;
            let text = std::fs::read_to_string(&annotations).with_context(|| format!("reading {}", annotations.display()))?;
            let annotations = annotate::parse_export(&text).context("parsing annotations")?;
            let (doc, report) = stages::aggregate(&cfg, &hits, &annotations, &dataset);
            if let Some(out) = out {
                files::write_text(&out, &(serde_json::to_string_pretty(&report)? + "\n"))?;
            }
            stages::write_report(common.report.as_deref(), &doc)
        }
        Command::Pipeline { common, stages: list } => {
            let cfg = load_config(&common, &[])?;
            let list = stages::parse_stages(&list)?;
            let reports = stages::run_pipeline(&cfg, &list, &mut |msg| eprintln!("{msg}"))?;
            if let Some(path) = &common.report {
                let mut all = String::new();
                for (_, doc) in &reports {
                    all.push_str(&doc.render());
                    all.push('\n');
                }
                files::write_text(path, &all)?;
            }
            Ok(())
        }
        Command::DemoCorpus { docs, seed, out } => {
            let records = demo::demo_corpus(seed, docs);
            files::write_jsonl(&out, &records)
        }
    }
}

/// Maps an error to the process exit status.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.chain().any(|e| e.downcast_ref::<UsageError>().is_some()) {
        EXIT_USAGE
    } else {
        EXIT_FAILURE
    }
}
