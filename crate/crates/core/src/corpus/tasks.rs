use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::backend::BackendError;
use crate::model::{EntityClass, EntityMapping};
use crate::pseudonymizer::{PseudonymError, Pseudonymizer, Seed};

use super::{AnnotatedPrompt, PromptFlags};

/// Produces a model response for a prompt: a live upstream or recorded fixtures.
pub trait ResponseSource {
    fn respond(&self, prompt: &str) -> Result<String, BackendError>;
}

/// Responses keyed by exact prompt text.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureResponses(pub HashMap<String, String>);

impl ResponseSource for FixtureResponses {
    fn respond(&self, prompt: &str) -> Result<String, BackendError> {
        self.0.get(prompt).cloned().ok_or_else(|| BackendError::Unavailable("no recorded response".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpan {
    pub index: usize,
    pub text: String,
    pub class: EntityClass,
    pub start: usize,
    pub end: usize,
}

/// One unit of annotation work: the prompt with labelable spans and the two
/// responses to compare.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationTask {
    pub id: String,
    pub prompt: String,
    pub spans: Vec<TaskSpan>,
    pub replaced_prompt: String,
    pub mapping: EntityMapping,
    pub original_response: Option<String>,
    pub replaced_response: Option<String>,
    /// Set when either response could not be obtained.
    pub response_less: bool,
    #[serde(default)]
    pub flags: PromptFlags,
}

/// One task per prompt, sorted by id. `pseudonymizer` should normally run in
/// strict mode so every entity is shown replaced.
pub fn build_annotation_tasks(
    prompts: &[AnnotatedPrompt],
    pseudonymizer: &Pseudonymizer,
    responses: Option<&dyn ResponseSource>,
    seed: Seed,
) -> Result<Vec<AnnotationTask>, PseudonymError> {
    let mut ordered: Vec<&AnnotatedPrompt> = prompts.iter().collect();
    ordered.sort_by(|a, b| a.id.cmp(&b.id));
    let mut tasks = Vec::with_capacity(ordered.len());
    for p in ordered {
        let result = pseudonymizer.pseudonymize(&p.prompt, &p.entities, seed, &EntityMapping::new())?;
        let fetch = |text: &str| match responses {
            Some(src) => src
                .respond(text)
                .map_err(|e| log::warn!("task {}: no response: {e}", p.id))
                .ok(),
            None => None,
        };
        let original_response = fetch(&p.prompt);
        let replaced_response = fetch(&result.modified_prompt);
        tasks.push(AnnotationTask {
            id: p.id.clone(),
            prompt: p.prompt.clone(),
            spans: p
                .entities
                .iter()
                .enumerate()
                .map(|(index, s)| TaskSpan { index, text: s.text.clone(), class: s.class.clone(), start: s.start, end: s.end })
                .collect(),
            replaced_prompt: result.modified_prompt,
            mapping: result.mapping,
            response_less: original_response.is_none() || replaced_response.is_none(),
            original_response,
            replaced_response,
            flags: p.flags,
        });
    }
    Ok(tasks)
}
