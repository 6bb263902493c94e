//! Privacy and utility error rates against majority-vote gold labels.
//!
//! privacy error = gold-irrelevant entities left unreplaced / gold-irrelevant
//! utility error = gold-relevant entities replaced / gold-relevant

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::AnnotatedPrompt;
use crate::model::{EntityMapping, MappingPair, RelevanceLabel};
use crate::text;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorCounts {
    pub irrelevant_total: u64,
    pub irrelevant_unreplaced: u64,
    pub relevant_total: u64,
    pub relevant_replaced: u64,
}

impl ErrorCounts {
    /// `None` when there are no gold-irrelevant entities.
    pub fn privacy_error(&self) -> Option<f64> {
        ratio(self.irrelevant_unreplaced, self.irrelevant_total)
    }

    /// `None` when there are no gold-relevant entities.
    pub fn utility_error(&self) -> Option<f64> {
        ratio(self.relevant_replaced, self.relevant_total)
    }

    pub fn add(&mut self, other: &ErrorCounts) {
        self.irrelevant_total += other.irrelevant_total;
        self.irrelevant_unreplaced += other.irrelevant_unreplaced;
        self.relevant_total += other.relevant_total;
        self.relevant_replaced += other.relevant_replaced;
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("gold entities and mapping do not align: missing from mapping {missing:?}, not in gold {unexpected:?}")]
pub struct AlignmentError {
    pub missing: Vec<String>,
    pub unexpected: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRates {
    pub privacy_error: Option<f64>,
    pub utility_error: Option<f64>,
    pub counts: ErrorCounts,
}

impl From<ErrorCounts> for ErrorRates {
    fn from(counts: ErrorCounts) -> Self {
        Self { privacy_error: counts.privacy_error(), utility_error: counts.utility_error(), counts }
    }
}

fn find_pair<'a>(mapping: &'a EntityMapping, surface: &str) -> Option<&'a MappingPair> {
    mapping
        .pairs
        .iter()
        .find(|p| p.original == surface)
        .or_else(|| mapping.pairs.iter().find(|p| text::eq_ci(&p.original, surface)))
}

/// Compares one prompt's mapping with its gold labels. Entities whose gold
/// label is absent (no majority) are skipped.
pub fn privacy_utility_errors(gold: &AnnotatedPrompt, mapping: &EntityMapping) -> Result<ErrorRates, AlignmentError> {
    let gold_labels = gold.gold.as_deref().unwrap_or(&[]);
    let mut counts = ErrorCounts::default();
    let mut missing = Vec::new();

    for (idx, span) in gold.entities.iter().enumerate() {
        let Some(Some(label)) = gold_labels.get(idx) else {
            continue;
        };
        let Some(pair) = find_pair(mapping, &span.text) else {
            missing.push(span.text.clone());
            continue;
        };
        match label {
            RelevanceLabel::Irrelevant => {
                counts.irrelevant_total += 1;
                if !pair.replaced {
                    counts.irrelevant_unreplaced += 1;
                }
            }
            RelevanceLabel::Relevant => {
                counts.relevant_total += 1;
                if pair.replaced {
                    counts.relevant_replaced += 1;
                }
            }
        }
    }

    let unexpected: Vec<String> = mapping
        .pairs
        .iter()
        .filter(|p| !gold.entities.iter().any(|s| text::eq_ci(&s.text, &p.original)))
        .map(|p| p.original.clone())
        .collect();

    if !missing.is_empty() || !unexpected.is_empty() {
        return Err(AlignmentError { missing, unexpected });
    }
    Ok(counts.into())
}
