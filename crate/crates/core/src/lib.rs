//! Core algorithms for semantically-close patent search.
//!
//! Everything here is `no_std` + `alloc`: text normalization, the
//! skip-gram trainer, keyed-vector queries, analog ranking and the
//! service/function registry. File formats, storage, HTTP and the CLI
//! live in the `patsim` companion crate.

#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

pub mod clp;
pub mod coordinator;
pub mod ingest;
pub mod search;
pub mod trainer;
pub mod vectors;

mod num;

pub use clp::{NormalizedCorpus, PhraseConfig, Pos, Resources, Token};
pub use coordinator::{FunctionDef, FunctionId, ServiceId, ServiceRegistry, ServiceStatus};
pub use ingest::{DocFormat, Encoding, ExtractedText, Language, RawDocument};
pub use search::{PatentRecord, RankedAnalog, Verdict};
pub use trainer::{TrainingConfig, Vocabulary};
pub use vectors::{KeyedVectors, SimilarityScore};
