//! Backing store for the annotation UI: annotation tasks plus per-annotator
//! labels, last write wins.

use std::collections::BTreeMap;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use pseudogate_core::corpus::{read_jsonl, write_jsonl, AnnotationTask, CorpusError, PromptFlags};
use pseudogate_core::{AnnotatedPrompt, EntitySpan, RelevanceLabel};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReviewError {
    #[error("no exchange with id {0:?}")]
    UnknownExchange(String),
    #[error("exchange {id:?} has {count} entities, no index {index}")]
    UnknownEntity { id: String, index: usize, count: usize },
    #[error("annotator must be a non-empty name")]
    EmptyAnnotator,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: CorpusError },
    #[error("duplicate exchange id {0:?}")]
    DuplicateId(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExchangeSummary {
    pub id: String,
    pub entities: usize,
    pub annotators: Vec<String>,
    pub flags: PromptFlags,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExchangeView {
    #[serde(flatten)]
    pub task: AnnotationTask,
    pub labels: BTreeMap<String, Vec<Option<RelevanceLabel>>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSubmission {
    pub entity_index: usize,
    /// `null` clears the annotator's label for this entity.
    pub label: Option<RelevanceLabel>,
    pub annotator: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelAck {
    pub id: String,
    pub entity_index: usize,
    pub annotator: String,
    pub label: Option<RelevanceLabel>,
}

#[derive(Debug, Clone)]
struct Exchange {
    task: AnnotationTask,
    annotated: AnnotatedPrompt,
}

#[derive(Debug, Default)]
pub struct ReviewStore {
    exchanges: RwLock<BTreeMap<String, Exchange>>,
    labels_path: Option<PathBuf>,
}

fn read_file<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, StoreError> {
    let file = std::fs::File::open(path).map_err(|e| StoreError::Read { path: path.into(), source: e.into() })?;
    read_jsonl(BufReader::new(file)).map_err(|source| StoreError::Read { path: path.into(), source })
}

impl ReviewStore {
    pub fn from_tasks(tasks: Vec<AnnotationTask>) -> Result<Self, StoreError> {
        let mut exchanges = BTreeMap::new();
        for task in tasks {
            let entities =
                task.spans.iter().map(|s| EntitySpan::new(s.text.clone(), s.class.clone(), s.start, s.end)).collect();
            let mut annotated = AnnotatedPrompt::new(task.id.clone(), task.prompt.clone(), entities);
            annotated.flags = task.flags;
            let id = task.id.clone();
            if exchanges.insert(id.clone(), Exchange { task, annotated }).is_some() {
                return Err(StoreError::DuplicateId(id));
            }
        }
        Ok(Self { exchanges: RwLock::new(exchanges), labels_path: None })
    }

    /// Tasks from `tasks_path`; labels previously saved to `labels_path` are
    /// merged back in and later submissions are written there.
    pub fn load(tasks_path: &Path, labels_path: Option<&Path>) -> Result<Self, StoreError> {
        let mut store = Self::from_tasks(read_file(tasks_path)?)?;
        if let Some(path) = labels_path {
            if path.exists() {
                let saved: Vec<AnnotatedPrompt> = read_file(path)?;
                let map = store.exchanges.get_mut().unwrap();
                for prompt in saved {
                    match map.get_mut(&prompt.id) {
                        Some(ex) if prompt.entities.len() == ex.annotated.entities.len() => {
                            ex.annotated.labels = prompt.labels;
                            ex.annotated.flags = prompt.flags;
                        }
                        _ => log::warn!("ignoring saved labels for unknown or changed exchange {}", prompt.id),
                    }
                }
            }
            store.labels_path = Some(path.to_path_buf());
        }
        Ok(store)
    }

    pub fn list(&self) -> Vec<ExchangeSummary> {
        self.exchanges
            .read()
            .unwrap()
            .values()
            .map(|ex| ExchangeSummary {
                id: ex.task.id.clone(),
                entities: ex.annotated.entities.len(),
                annotators: ex.annotated.labels.keys().cloned().collect(),
                flags: ex.annotated.flags,
            })
            .collect()
    }

    pub fn get(&self, id: &str) -> Result<ExchangeView, ReviewError> {
        let map = self.exchanges.read().unwrap();
        let ex = map.get(id).ok_or_else(|| ReviewError::UnknownExchange(id.to_string()))?;
        let mut task = ex.task.clone();
        task.flags = ex.annotated.flags;
        Ok(ExchangeView { task, labels: ex.annotated.labels.clone() })
    }

    pub fn submit_label(&self, id: &str, submission: LabelSubmission) -> Result<LabelAck, ReviewError> {
        let annotator = submission.annotator.trim();
        if annotator.is_empty() {
            return Err(ReviewError::EmptyAnnotator);
        }
        {
            let mut map = self.exchanges.write().unwrap();
            let ex = map.get_mut(id).ok_or_else(|| ReviewError::UnknownExchange(id.to_string()))?;
            let count = ex.annotated.entities.len();
            if submission.entity_index >= count {
                return Err(ReviewError::UnknownEntity { id: id.to_string(), index: submission.entity_index, count });
            }
            let labels = ex.annotated.labels.entry(annotator.to_string()).or_insert_with(|| vec![None; count]);
            labels[submission.entity_index] = submission.label;
        }
        self.persist();
        Ok(LabelAck {
            id: id.to_string(),
            entity_index: submission.entity_index,
            annotator: annotator.to_string(),
            label: submission.label,
        })
    }

    pub fn set_flags(&self, id: &str, flags: PromptFlags) -> Result<PromptFlags, ReviewError> {
        {
            let mut map = self.exchanges.write().unwrap();
            let ex = map.get_mut(id).ok_or_else(|| ReviewError::UnknownExchange(id.to_string()))?;
            ex.annotated.flags = flags;
        }
        self.persist();
        Ok(flags)
    }

    /// Current state as AnnotatedPrompt records, sorted by id.
    pub fn annotated(&self) -> Vec<AnnotatedPrompt> {
        self.exchanges.read().unwrap().values().map(|ex| ex.annotated.clone()).collect()
    }

    fn persist(&self) {
        let Some(path) = &self.labels_path else { return };
        let records = self.annotated();
        let result = std::fs::File::create(path)
            .map_err(CorpusError::from)
            .and_then(|f| write_jsonl(std::io::BufWriter::new(f), &records));
        if let Err(e) = result {
            log::error!("cannot save labels to {}: {e}", path.display());
        }
    }
}
