//! Wire contract for a learned pseudonymization backend. The backend receives
//! `{"prompt"}` and answers with the changed entities and the modified prompt.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::BackendError;
use crate::model::{EntityClass, EntityMapping, EntitySpan, MappingPair, RelevanceLabel};
use crate::substituter::{restore, RestorePlan};
use crate::text;

use super::{PseudonymizationResult, PseudonymizerKind};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudonymizeRequest {
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangedEntity {
    #[serde(default)]
    pub explanation: String,
    pub original_entity: String,
    pub new_entity: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExternalPseudonymization {
    pub changed_entities: Vec<ChangedEntity>,
    pub modified_prompt: String,
}

/// Transport for the backend; returns the raw response body.
pub trait PseudonymizerBackend: Send + Sync {
    fn pseudonymize(&self, request: &PseudonymizeRequest) -> Result<String, BackendError>;
}

#[derive(Debug, Error)]
pub enum ExternalError {
    #[error(transparent)]
    Transport(#[from] BackendError),
    #[error("malformed pseudonymizer response: {0}")]
    MalformedJson(String),
    #[error("pseudonymizer response violates invariants: {0}")]
    InvariantViolation(String),
}

impl ExternalError {
    pub fn is_timeout(&self) -> bool {
        matches!(self, ExternalError::Transport(BackendError::Timeout(_)))
    }
}

/// Calls the backend and validates its answer. `spans`, when available, supply
/// classes for changed entities and record unchanged ones as kept.
pub fn call_external_pseudonymizer(
    prompt: &str,
    backend: &dyn PseudonymizerBackend,
    spans: &[EntitySpan],
) -> Result<PseudonymizationResult, ExternalError> {
    let body = backend.pseudonymize(&PseudonymizeRequest { prompt: prompt.to_string() })?;
    let parsed: ExternalPseudonymization =
        serde_json::from_str(&body).map_err(|e| ExternalError::MalformedJson(e.to_string()))?;
    validate(prompt, parsed, spans)
}

fn class_for(surface: &str, spans: &[EntitySpan]) -> EntityClass {
    spans
        .iter()
        .find(|s| text::eq_ci(&s.text, surface))
        .map(|s| s.class.clone())
        .unwrap_or_else(|| EntityClass::Other("UNSPECIFIED".into()))
}

pub(crate) fn validate(
    prompt: &str,
    parsed: ExternalPseudonymization,
    spans: &[EntitySpan],
) -> Result<PseudonymizationResult, ExternalError> {
    let violation = |msg: String| Err(ExternalError::InvariantViolation(msg));
    let mut mapping = EntityMapping::new();
    let modified: Vec<char> = parsed.modified_prompt.chars().collect();

    for change in &parsed.changed_entities {
        log::debug!("external pseudonymizer: {:?} -> {:?}: {}", change.original_entity, change.new_entity, change.explanation);
        if change.original_entity.is_empty() || change.new_entity.is_empty() {
            return violation("empty entity in changed_entities".into());
        }
        if text::eq_ci(&change.original_entity, &change.new_entity) {
            return violation(format!("new_entity for {:?} equals the original", change.original_entity));
        }
        if text::contains_ci(prompt, &change.new_entity) {
            return violation(format!("new_entity {:?} already occurs in the prompt", change.new_entity));
        }
        if text::find_word_bounded_ci(&modified, &change.new_entity).is_empty() {
            return violation(format!("modified_prompt does not contain declared new_entity {:?}", change.new_entity));
        }
        let class = class_for(&change.original_entity, spans);
        mapping.pairs.push(MappingPair::replaced(change.original_entity.clone(), change.new_entity.clone(), class));
    }
    mapping.validate().map_err(|e| ExternalError::InvariantViolation(e.to_string()))?;

    if restore(&parsed.modified_prompt, &RestorePlan::from_mapping(&mapping)) != prompt {
        return violation("modified_prompt does not reduce to the original under reverse substitution".into());
    }

    for span in spans {
        let changed = parsed.changed_entities.iter().any(|c| text::eq_ci(&c.original_entity, &span.text));
        let recorded = mapping.pairs.iter().any(|p| text::eq_ci(&p.original, &span.text));
        if !changed && !recorded {
            mapping.pairs.push(MappingPair::kept(span.text.clone(), span.class.clone(), RelevanceLabel::Relevant));
        }
    }

    let mut out_spans = Vec::new();
    for pair in mapping.replaced_pairs() {
        let len = text::char_len(&pair.pseudonym);
        for at in text::find_word_bounded_ci(&modified, &pair.pseudonym) {
            out_spans.push(EntitySpan::new(
                modified[at..at + len].iter().collect::<String>(),
                pair.class.clone(),
                at,
                at + len,
            ));
        }
    }
    out_spans.sort_by_key(|s| s.start);

    Ok(PseudonymizationResult {
        modified_prompt: parsed.modified_prompt,
        mapping,
        backend: PseudonymizerKind::External,
        degraded: false,
        spans: out_spans,
    })
}
