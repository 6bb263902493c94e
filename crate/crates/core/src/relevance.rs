//! Reference relevance heuristic. An entity is relevant when substituting it
//! would change what the prompt asks for.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{EntityClass, EntitySpan, RelevanceLabel};
use crate::text;

const BUILTIN: &str = include_str!("../../../data/relevance.toml");

/// A marker only applies to entities in its own sentence.
const SENTENCE_END: [char; 4] = ['.', '?', '!', '\n'];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("invalid relevance config: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassPrior {
    pub relevant: u64,
    pub irrelevant: u64,
}

impl ClassPrior {
    pub fn relevant_share(&self) -> f64 {
        let total = self.relevant + self.irrelevant;
        if total == 0 {
            0.0
        } else {
            self.relevant as f64 / total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceConfig {
    pub markers: Vec<String>,
    pub window: usize,
    pub prior_threshold: f64,
    pub default_label: RelevanceLabel,
    #[serde(default)]
    pub class_priors: BTreeMap<EntityClass, ClassPrior>,
    #[serde(default)]
    pub overrides: BTreeMap<String, RelevanceLabel>,
}

impl Default for RelevanceConfig {
    /// The configuration shipped in `data/relevance.toml`.
    fn default() -> Self {
        Self::parse(BUILTIN).expect("bundled relevance.toml is valid")
    }
}

impl RelevanceConfig {
    pub fn parse(toml_src: &str) -> Result<Self, ConfigError> {
        toml::from_str(toml_src).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let src = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
        Self::parse(&src)
    }

    pub fn with_override(mut self, surface: &str, label: RelevanceLabel) -> Self {
        self.overrides.insert(surface.to_string(), label);
        self
    }

    fn override_for(&self, surface: &str) -> Option<RelevanceLabel> {
        self.overrides.iter().find(|(k, _)| text::eq_ci(k, surface)).map(|(_, v)| *v)
    }
}

/// Labels one detected span. Total and deterministic.
pub fn classify_relevance(prompt: &str, span: &EntitySpan, config: &RelevanceConfig) -> RelevanceLabel {
    if let Some(label) = config.override_for(&span.text) {
        return label;
    }

    let chars: Vec<char> = prompt.chars().collect();
    let window_start = span.start.saturating_sub(config.window);
    for marker in &config.markers {
        let len = text::char_len(marker);
        let hit = text::find_word_bounded_ci(&chars, marker).into_iter().any(|at| {
            at >= window_start
                && at + len <= span.start
                && !chars[at + len..span.start].iter().any(|c| SENTENCE_END.contains(c))
        });
        if hit {
            return RelevanceLabel::Relevant;
        }
    }

    match config.class_priors.get(&span.class) {
        Some(prior) if prior.relevant_share() > config.prior_threshold => RelevanceLabel::Relevant,
        Some(_) => RelevanceLabel::Irrelevant,
        None => config.default_label,
    }
}
