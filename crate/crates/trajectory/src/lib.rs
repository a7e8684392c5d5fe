//! Models of patient trajectories built from hospital admission records.
//!
//! The crate covers the full path from raw admission tables to evaluated
//! models: ICD-9/CCS/CUI code handling, temporal feature extraction and
//! 30-day readmission labelling, patient-level stratified cross-validation,
//! a small reverse-mode differentiable core, a feature-flexible admission
//! encoder, recurrent models over sliding windows of admissions, ranking and
//! threshold metrics, and a synthetic cohort generator for end-to-end runs
//! without access to restricted clinical data.

pub mod admission;
pub mod checkpoint;
pub mod codes;
pub mod config;
pub mod error;
pub mod eval;
pub mod folds;
pub mod ingest;
pub mod nn;
pub mod rng;
pub mod run;
pub mod sequence;
pub mod store;
pub mod synth;

pub use error::{Error, Result};
