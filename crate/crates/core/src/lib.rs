//! Recursive knowledge crawling out of chat models, plus the tooling to judge
//! how stable the resulting knowledge bases are across repeated runs.

pub mod crawler;
pub mod embeddings;
pub mod ensemble;
pub mod export;
pub mod gateway;
pub mod metrics;
pub mod model;
pub mod popularity;
pub mod retry;
pub mod store;

pub use model::{
    derive_categories, normalize_label, Caps, CategorySets, KnowledgeBase, RunConfig, RunRecord,
    StructuralCategory, TermKind, Termination, Triple, TripleKey,
};
