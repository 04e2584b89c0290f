//! Named-entity tagging for short search queries.
//!
//! Queries are tagged with brand (`BRD`) and product type (`PRD`) spans in
//! BIO form by a character-BiLSTM, word-BiGRU and CRF tagger. The
//! [`triplelearn`] module trains it iteratively from a small golden set, a
//! large catalog-matched noisy set and a synthetic set that covers every
//! catalog entry.

pub mod crf;
pub mod datagen;
pub mod dataset;
pub mod embeddings;
pub mod error;
pub mod exec;
pub mod label;
pub mod model_io;
pub mod net;
pub mod preprocess;
pub mod rng;
pub mod train;
pub mod triplelearn;

pub use dataset::{Catalog, Dataset, GoldenSplit, Source, TaggedQuery};
pub use error::{Error, Result};
pub use exec::ExecMode;
pub use label::{EntitySpan, EntityType, LabelTag, SeqPattern};
