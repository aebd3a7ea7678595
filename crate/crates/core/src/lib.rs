//! Expectation probing for multiple-choice QA models.
//!
//! The crate generates zero-information perturbations of MCQA datasets
//! (question-echoing distractors, emptied options/questions/contexts),
//! trains a reference lexical scorer under a multiclass or per-option
//! binary objective with optional in-place augmentation, and reports how a
//! scorer's accuracy moves across the settings relative to what one would
//! expect from a model that actually reads its inputs.
//!
//! Everything is deterministic given explicit seeds: per-item PRNG streams
//! are derived from `(seed, indices...)`, so the rayon-parallel paths (the
//! default) and the sequential fallback (`--no-default-features`) produce
//! byte-identical outputs.

pub mod augment;
pub mod dataset;
pub mod error;
pub mod evalreport;
pub mod perturb;
pub mod rng;
pub mod scorer;
pub mod train;

pub use error::{Error, Result};
