//! Relevance-gated pseudonymization of LLM prompts: entity detection,
//! pseudonymization, response restoration, and the evaluation and corpus
//! tooling used to measure them.

pub mod backend;
pub mod bundled;
pub mod corpus;
pub mod detector;
pub mod evaluator;
pub mod model;
pub mod pseudonymizer;
pub mod relevance;
pub mod substituter;
pub mod text;

pub use backend::BackendError;
pub use corpus::AnnotatedPrompt;
pub use detector::{detect_entities, Detection, Detector, DetectorConfig, Gazetteer};
pub use evaluator::{EvalRecord, EvalReport};
pub use model::{EntityClass, EntityMapping, EntitySpan, MappingPair, RelevanceLabel, SessionRecord};
pub use pseudonymizer::{
    generate_pseudonym, PoolSet, PseudonymPool, PseudonymizationResult, Pseudonymizer, ReplacementMode, Seed,
};
pub use relevance::{classify_relevance, RelevanceConfig};
pub use substituter::{restore, restore_stream, RestorePlan, StreamRestorer};
