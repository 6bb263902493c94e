//! Dataset tooling: first-turn extraction, PII flagging, annotation tasks,
//! corpus statistics and train/test split.

mod extract;
mod flag;
mod split;
mod stats;
mod tasks;

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{EntitySpan, RelevanceLabel};

pub use extract::{extract_first_turns, parse_conversations, Conversation, Extraction, Message, PromptRecord};
pub use flag::{flag_pii, FlagReport};
pub use split::{split_dataset, Split};
pub use stats::{corpus_stats, ClassCounts, CorpusStats, StatsSummary};
pub use tasks::{build_annotation_tasks, AnnotationTask, FixtureResponses, ResponseSource, TaskSpan};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("prompt {id}: annotator {annotator} has {got} labels for {expected} entities")]
    LabelLength { id: String, annotator: String, expected: usize, got: usize },
    #[error("prompt {id}: gold has {got} labels for {expected} entities")]
    GoldLength { id: String, expected: usize, got: usize },
    #[error("line {line}: {message}")]
    Jsonl { line: usize, message: String },
    #[error("invalid conversation file: {0}")]
    Conversations(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptFlags {
    #[serde(default)]
    pub needs_review: bool,
    #[serde(default)]
    pub rejected: bool,
}

/// A prompt with detected entities and per-annotator relevance labels. Each
/// label list is aligned with `entities`; `None` means the annotator left the
/// entity unset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedPrompt {
    pub id: String,
    pub prompt: String,
    pub entities: Vec<EntitySpan>,
    #[serde(default)]
    pub labels: BTreeMap<String, Vec<Option<RelevanceLabel>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<Vec<Option<RelevanceLabel>>>,
    #[serde(default)]
    pub flags: PromptFlags,
}

impl AnnotatedPrompt {
    pub fn new(id: impl Into<String>, prompt: impl Into<String>, entities: Vec<EntitySpan>) -> Self {
        Self {
            id: id.into(),
            prompt: prompt.into(),
            entities,
            labels: BTreeMap::new(),
            gold: None,
            flags: PromptFlags::default(),
        }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let expected = self.entities.len();
        for (annotator, list) in &self.labels {
            if list.len() != expected {
                return Err(CorpusError::LabelLength {
                    id: self.id.clone(),
                    annotator: annotator.clone(),
                    expected,
                    got: list.len(),
                });
            }
        }
        if let Some(gold) = &self.gold {
            if gold.len() != expected {
                return Err(CorpusError::GoldLength { id: self.id.clone(), expected, got: gold.len() });
            }
        }
        Ok(())
    }

    /// Replaces one annotator's labels (last write wins).
    pub fn set_labels(&mut self, annotator: &str, labels: Vec<Option<RelevanceLabel>>) -> Result<(), CorpusError> {
        if labels.len() != self.entities.len() {
            return Err(CorpusError::LabelLength {
                id: self.id.clone(),
                annotator: annotator.to_string(),
                expected: self.entities.len(),
                got: labels.len(),
            });
        }
        self.labels.insert(annotator.to_string(), labels);
        Ok(())
    }
}

/// Reads one JSON value per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(reader: impl BufRead) -> Result<Vec<T>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| CorpusError::Jsonl { line: i + 1, message: e.to_string() })?;
        out.push(value);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(mut writer: impl Write, items: &[T]) -> Result<(), CorpusError> {
    for item in items {
        serde_json::to_writer(&mut writer, item).map_err(|e| CorpusError::Io(e.into()))?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}
