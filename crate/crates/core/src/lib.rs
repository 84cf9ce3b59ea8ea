//! Write-missing diagnosis detection.
//!
//! Finds diseases that a full medical record clearly confirms but that are
//! absent from the record's discharge-diagnosis list, and estimates how much
//! recovering them changes the record's DRG grouping and reimbursement.
//!
//! The pipeline runs in three stages:
//!
//! 1. [`recall`]: lexicon matching over every section of the record, one
//!    [`recall::DiseaseMention`] per distinct disease with a merged context
//!    window.
//! 2. [`classifier`]: a gated feature-fusion head that labels each
//!    (disease, context) pair as confirmed, non-current or unknown, using the
//!    feature tracks built in [`features`].
//! 3. [`relation`]: a disease-name comparator deciding whether a confirmed
//!    candidate is already covered by one of the discharge diagnoses.
//!
//! [`pipeline`] wires the stages together, [`drg`] estimates cost impact and
//! [`eval`] holds the synthetic corpus generator, scoring and ablations.

pub mod classifier;
pub mod corpus;
pub mod data;
pub mod drg;
pub mod error;
pub mod eval;
pub mod features;
pub mod icd;
pub mod lexicon;
pub mod matching;
pub mod normalize;
pub mod pipeline;
pub mod recall;
pub mod relation;
pub mod rng;
pub mod types;
pub mod vocab;
pub mod workflow;

pub use error::{Error, Result};
pub use types::{CcLevel, ContextLabel, DrgAssignment, MedicalRecord, Money, Relation, Section, Tier};
