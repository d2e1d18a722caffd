//! Cross-version differential mutation fuzzing for tensor engines.
//!
//! The crate bundles a small deterministic tensor engine, a registry of
//! fault-injected engine versions, a seed-test DSL, five tensor mutation
//! operators, a tolerance-based differential oracle with majority voting, the
//! fuzzing loop itself, and the analytics used to triage bug datasets
//! (keyword filtering, Cohen's kappa, Spearman correlation, distributions) and
//! to measure per-component coverage.

pub mod arch;
pub mod campaign;
pub mod coverage;
pub mod demo;
pub mod dsl;
pub mod mutation;
pub mod oracle;
pub mod registry;
pub mod tensor;
pub mod triage;

pub use arch::ArchLevel;
pub use campaign::{Campaign, CampaignConfig, CampaignError, CampaignEvent, CampaignSummary};
pub use dsl::{parse, print, validate, CanonicalHash, Program, TypedProgram};
pub use mutation::{MutationOperator, MutationSite, Mutant};
pub use oracle::{compare, run_all, vote, OracleConfig, Outcome, Verdict};
pub use registry::{EngineVersion, Fault, Registry};
pub use tensor::{DType, OpKind, Shape, TensorValue};
