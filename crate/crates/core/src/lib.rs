//! Desk-scale benchmark for antibody–antigen activity prediction.
//!
//! The crate covers the whole evaluation protocol: assay ingestion and
//! binarization ([`dataset`]), sequence identity and clustering
//! ([`identity`]), leakage-aware cross-validation ([`split`]), a small
//! transformer pair classifier with masked-token pretraining ([`model`]),
//! metrics ([`metrics`]), breadth-of-protection scoring ([`breadth`]),
//! synthetic oracle-labelled data ([`synth`]) and experiment orchestration
//! ([`harness`]).

pub mod breadth;
mod config_file;
pub mod dataset;
mod error;
pub mod harness;
pub mod identity;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod split;
pub mod synth;

pub use dataset::{Antibody, Antigen, AminoAcidSequence, AssayRecord, Dataset, LabeledPair, Task};
pub use error::{Error, Result};
pub use rng::SplitMix64;
