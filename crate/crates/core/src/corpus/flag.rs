use serde::{Deserialize, Serialize};

use crate::detector::Detector;

use super::{AnnotatedPrompt, PromptRecord};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlagReport {
    pub flagged: Vec<AnnotatedPrompt>,
    pub total: usize,
    /// Prompts for which the external detection layer failed.
    pub degraded: usize,
}

impl FlagReport {
    pub fn flagged_count(&self) -> usize {
        self.flagged.len()
    }
}

/// Keeps the prompts with at least one detected entity, carrying their spans.
pub fn flag_pii(prompts: &[PromptRecord], detector: &Detector) -> FlagReport {
    let mut flagged = Vec::new();
    let mut degraded = 0;
    for p in prompts {
        let detection = detector.detect_entities(&p.prompt);
        if detection.degraded {
            degraded += 1;
        }
        if !detection.spans.is_empty() {
            flagged.push(AnnotatedPrompt::new(p.id.clone(), p.prompt.clone(), detection.spans));
        }
    }
    FlagReport { flagged, total: prompts.len(), degraded }
}
