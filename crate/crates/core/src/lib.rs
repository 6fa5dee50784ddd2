//! Building blocks for intruder-sentence detection benchmarks.
//!
//! The pipeline runs in stages: [`corpus`] turns raw records into bounded
//! documents, [`retrieval`] indexes them with hashed unigram+bigram TF-IDF,
//! [`synthesis`] replaces one non-opening sentence of half the documents with
//! a low-similarity sentence taken from a retrieved neighbour, [`audit`]
//! checks the result for sentence-level artefacts, [`probes`] applies minimal
//! linguistic edits to intruder sentences and [`evaluation`] scores external
//! detectors. [`annotate`] holds the human-verification task model.

pub mod annotate;
pub mod audit;
pub mod corpus;
pub mod demo;
pub mod evaluation;
pub mod logistic;
pub mod par;
pub mod probes;
pub mod report;
pub mod retrieval;
pub mod seed;
pub mod synthesis;
pub mod text;

pub use corpus::{Document, RawRecord, Sentence, Source};
pub use evaluation::{MetricsReport, PredictionSet};
pub use retrieval::{RetrievalIndex, SparseVector};
pub use synthesis::{DatasetInstance, Label, Split};

