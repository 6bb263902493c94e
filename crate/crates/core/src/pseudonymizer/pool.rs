use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::model::EntityClass;
use crate::text;

use super::PseudonymError;

/// Same-class substitutes for one entity class, in file order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PseudonymPool {
    pub class: EntityClass,
    pub candidates: Vec<String>,
    pub source: PathBuf,
}

impl PseudonymPool {
    /// Same file format as gazetteers. Candidates are deduplicated
    /// case-insensitively, keeping the first spelling.
    pub fn parse(contents: &str, class: EntityClass, source: impl Into<PathBuf>) -> Result<Self, PseudonymError> {
        let source = source.into();
        let mut candidates: Vec<String> = Vec::new();
        let mut seen = std::collections::HashSet::new();
        for line in contents.lines() {
            let entry = line.trim();
            if entry.is_empty() || entry.starts_with('#') {
                continue;
            }
            if seen.insert(text::fold(entry)) {
                candidates.push(entry.to_string());
            }
        }
        if candidates.is_empty() {
            return Err(PseudonymError::EmptyPool { class, path: source });
        }
        Ok(Self { class, candidates, source })
    }

    pub fn from_candidates<I, S>(class: EntityClass, candidates: I) -> Result<Self, PseudonymError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let joined: Vec<String> = candidates.into_iter().map(|c| c.as_ref().to_string()).collect();
        Self::parse(&joined.join("\n"), class, "<inline>")
    }

    pub fn load(path: impl AsRef<Path>, class: EntityClass) -> Result<Self, PseudonymError> {
        let path = path.as_ref();
        let contents = std::fs::read_to_string(path)
            .map_err(|e| PseudonymError::Io { path: path.to_path_buf(), message: e.to_string() })?;
        Self::parse(&contents, class, path)
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSource {
    pub class: EntityClass,
    pub path: PathBuf,
}

/// One pool per entity class.
#[derive(Debug, Clone, Default)]
pub struct PoolSet {
    pools: BTreeMap<EntityClass, PseudonymPool>,
}

impl PoolSet {
    pub fn new(pools: impl IntoIterator<Item = PseudonymPool>) -> Self {
        Self { pools: pools.into_iter().map(|p| (p.class.clone(), p)).collect() }
    }

    pub fn load(sources: &[PoolSource], base_dir: Option<&Path>) -> Result<Self, PseudonymError> {
        let pools = sources
            .iter()
            .map(|src| {
                let path = match base_dir {
                    Some(dir) if src.path.is_relative() => dir.join(&src.path),
                    _ => src.path.clone(),
                };
                PseudonymPool::load(path, src.class.clone())
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::new(pools))
    }

    pub fn get(&self, class: &EntityClass) -> Result<&PseudonymPool, PseudonymError> {
        self.pools.get(class).ok_or_else(|| PseudonymError::NoPool { class: class.clone() })
    }

    pub fn classes(&self) -> impl Iterator<Item = &EntityClass> {
        self.pools.keys()
    }
}
