//! Layered entity detection: regex rules, gazetteer lookup and an optional
//! external NER backend. Overlaps between layers resolve to the longest span,
//! ties going to the higher-priority layer (external > gazetteer > regex).

mod gazetteer;
mod rules;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use gazetteer::{load_gazetteer, Gazetteer};
pub use rules::RegexRules;

use crate::backend::BackendError;
use crate::model::{EntityClass, EntitySpan};
use crate::text;

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("gazetteer {path} is empty")]
    EmptyGazetteer { path: PathBuf },
    #[error("gazetteer {path}:{line}: {reason}")]
    MalformedGazetteer { path: PathBuf, line: usize, reason: String },
    #[error("no detection layer enabled")]
    NoLayers,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GazetteerSource {
    pub class: EntityClass,
    pub path: PathBuf,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OverlapPolicy {
    #[default]
    LongestMatch,
}

fn default_true() -> bool {
    true
}

fn default_timeout_ms() -> u64 {
    2000
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectorConfig {
    #[serde(default)]
    pub gazetteers: Vec<GazetteerSource>,
    #[serde(default = "default_true")]
    pub email: bool,
    #[serde(default = "default_true")]
    pub phone: bool,
    #[serde(default)]
    pub external_endpoint: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub external_timeout_ms: u64,
    #[serde(default)]
    pub overlap_policy: OverlapPolicy,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            gazetteers: Vec::new(),
            email: true,
            phone: true,
            external_endpoint: None,
            external_timeout_ms: default_timeout_ms(),
            overlap_policy: OverlapPolicy::LongestMatch,
        }
    }
}

/// An external NER service. Request `{"text"}`, response `{"entities": [...]}`.
pub trait EntityBackend: Send + Sync {
    fn detect(&self, text: &str) -> Result<Vec<EntitySpan>, BackendError>;
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectRequest {
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectResponse {
    pub entities: Vec<EntitySpan>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Detection {
    pub spans: Vec<EntitySpan>,
    /// The external layer failed and only local layers contributed.
    pub degraded: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Layer {
    Regex = 0,
    Gazetteer = 1,
    External = 2,
}

#[derive(Debug, Clone)]
struct Candidate {
    start: usize,
    end: usize,
    class: EntityClass,
    layer: Layer,
}

#[derive(Debug, Default, Clone)]
struct TrieNode {
    children: Vec<(char, u32)>,
    class: Option<EntityClass>,
}

/// Char trie over folded gazetteer entries. When the same entry appears in
/// several gazetteers the first one loaded wins.
#[derive(Debug, Clone)]
struct Trie {
    nodes: Vec<TrieNode>,
}

impl Trie {
    fn new() -> Self {
        Self { nodes: vec![TrieNode::default()] }
    }

    fn insert(&mut self, entry: &str, class: &EntityClass) {
        let mut node = 0usize;
        for c in entry.chars() {
            node = match self.nodes[node].children.iter().find(|(k, _)| *k == c) {
                Some(&(_, next)) => next as usize,
                None => {
                    let next = self.nodes.len();
                    self.nodes.push(TrieNode::default());
                    self.nodes[node].children.push((c, next as u32));
                    next
                }
            };
        }
        if self.nodes[node].class.is_none() {
            self.nodes[node].class = Some(class.clone());
        }
    }

    fn child(&self, node: usize, c: char) -> Option<usize> {
        self.nodes[node].children.iter().find(|(k, _)| *k == c).map(|&(_, n)| n as usize)
    }
}

pub struct Detector {
    gazetteers: Vec<Gazetteer>,
    trie: Trie,
    rules: RegexRules,
    external: Option<Arc<dyn EntityBackend>>,
}

impl std::fmt::Debug for Detector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Detector")
            .field("gazetteers", &self.gazetteers.iter().map(|g| (&g.class, g.len())).collect::<Vec<_>>())
            .field("rules", &self.rules)
            .field("external", &self.external.is_some())
            .finish()
    }
}

impl Detector {
    pub fn new(gazetteers: Vec<Gazetteer>, rules: RegexRules) -> Result<Self, DetectorError> {
        if gazetteers.is_empty() && !rules.any_enabled() {
            return Err(DetectorError::NoLayers);
        }
        Ok(Self::build(gazetteers, rules))
    }

    fn build(gazetteers: Vec<Gazetteer>, rules: RegexRules) -> Self {
        let mut trie = Trie::new();
        for g in &gazetteers {
            for entry in &g.entries {
                trie.insert(entry, &g.class);
            }
        }
        Self { gazetteers, trie, rules, external: None }
    }

    /// Loads every configured gazetteer, resolving relative paths against `base_dir`.
    pub fn from_config(config: &DetectorConfig, base_dir: Option<&Path>) -> Result<Self, DetectorError> {
        let gazetteers = config
            .gazetteers
            .iter()
            .map(|src| {
                let path = match base_dir {
                    Some(dir) if src.path.is_relative() => dir.join(&src.path),
                    _ => src.path.clone(),
                };
                load_gazetteer(path, src.class.clone())
            })
            .collect::<Result<Vec<_>, _>>()?;
        let rules = RegexRules::new(config.email, config.phone);
        if gazetteers.is_empty() && !rules.any_enabled() && config.external_endpoint.is_none() {
            return Err(DetectorError::NoLayers);
        }
        Ok(Self::build(gazetteers, rules))
    }

    pub fn with_external(mut self, backend: Arc<dyn EntityBackend>) -> Self {
        self.external = Some(backend);
        self
    }

    pub fn gazetteers(&self) -> &[Gazetteer] {
        &self.gazetteers
    }

    pub fn detect_entities(&self, text: &str) -> Detection {
        let chars: Vec<char> = text.chars().collect();
        let mut candidates = Vec::new();
        let mut degraded = false;

        if let Some(backend) = &self.external {
            match backend.detect(text).and_then(|spans| validate_external(text, spans)) {
                Ok(spans) => candidates.extend(spans.into_iter().map(|s| Candidate {
                    start: s.start,
                    end: s.end,
                    class: s.class,
                    layer: Layer::External,
                })),
                Err(err) => {
                    log::warn!("external detector failed, using local layers: {err}");
                    degraded = true;
                }
            }
        }

        self.scan_gazetteers(&chars, &mut candidates);
        for (start, end, class) in self.rules.find(text) {
            candidates.push(Candidate { start, end, class, layer: Layer::Regex });
        }

        let spans = resolve(candidates)
            .into_iter()
            .map(|c| EntitySpan {
                text: chars[c.start..c.end].iter().collect(),
                class: c.class,
                start: c.start,
                end: c.end,
            })
            .collect();
        Detection { spans, degraded }
    }

    fn scan_gazetteers(&self, chars: &[char], out: &mut Vec<Candidate>) {
        for start in 0..chars.len() {
            if start > 0 && text::is_word_char(chars[start - 1]) {
                continue;
            }
            let mut node = 0usize;
            for (offset, &c) in chars[start..].iter().enumerate() {
                let Some(next) = self.trie.child(node, text::fold_char(c)) else {
                    break;
                };
                node = next;
                let end = start + offset + 1;
                if let Some(class) = &self.trie.nodes[node].class {
                    if text::is_word_bounded(chars, start, end) {
                        out.push(Candidate { start, end, class: class.clone(), layer: Layer::Gazetteer });
                    }
                }
            }
        }
    }
}

/// Convenience wrapper over [`Detector::detect_entities`].
pub fn detect_entities(text: &str, detector: &Detector) -> Detection {
    detector.detect_entities(text)
}

fn validate_external(text: &str, spans: Vec<EntitySpan>) -> Result<Vec<EntitySpan>, BackendError> {
    for span in &spans {
        span.validate(text).map_err(|e| BackendError::Malformed(e.to_string()))?;
    }
    Ok(spans)
}

/// Greedy longest-match resolution: longer spans first, then higher layer, then
/// leftmost. Output is sorted by start.
fn resolve(mut candidates: Vec<Candidate>) -> Vec<Candidate> {
    candidates.sort_by(|a, b| {
        (b.end - b.start)
            .cmp(&(a.end - a.start))
            .then(b.layer.cmp(&a.layer))
            .then(a.start.cmp(&b.start))
    });
    let mut accepted: Vec<Candidate> = Vec::new();
    for cand in candidates {
        if accepted.iter().all(|a| cand.end <= a.start || a.end <= cand.start) {
            accepted.push(cand);
        }
    }
    accepted.sort_by_key(|c| c.start);
    accepted
}
