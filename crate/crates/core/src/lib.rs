//! Detection of dataset references in scientific full texts and linking of
//! those references to the records of a dataset registry.
//!
//! The crate is organised as a chain of stages, each of which reads and
//! writes plain files so that it can be run and inspected on its own:
//!
//! * [`registry`] harvests registry metadata over OAI-PMH and keeps it in a
//!   line-delimited record store.
//! * [`dictionary`] induces abbreviations and special phrases from the
//!   registry titles.
//! * [`text`] splits a paper into sentences and extracts year tokens.
//! * [`detect`] finds dictionary features in a paper.
//! * [`rank`] orders the registry records that share a feature with a
//!   mention by tf-idf/cosine similarity and a year heuristic.
//! * [`review`] builds the expert review sessions and exports the resolved
//!   links.
//! * [`eval`] scores detection and matching against a gold standard.
//! * [`pipeline`] wires the stages together for a batch of papers.

pub mod detect;
pub mod dictionary;
pub mod error;
pub mod eval;
pub mod matcher;
pub mod pipeline;
pub mod rank;
pub mod registry;
pub mod review;
pub mod synthetic;
pub mod text;

pub use detect::{detect_references, group_by_feature, PaperText, ReferenceMention};
pub use dictionary::{Dictionary, DictionaryEntry, FeatureKind, WordLists};
pub use error::{Error, Result};
pub use eval::{EvalReport, GoldStandard, Phase};
pub use rank::{RankedCandidate, TermVector, TfidfModel};
pub use registry::{DatasetRecord, PatternStats, ResourceType};
pub use review::{Choice, MatchDecision, ReviewItem, ReviewSession, Workflow};
