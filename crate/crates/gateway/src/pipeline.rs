//! Detect -> pseudonymize -> (forward) -> restore, independent of HTTP.

use std::sync::Arc;
use std::time::Instant;

use pseudogate_core::detector::{DetectorError, RegexRules};
use pseudogate_core::pseudonymizer::{
    call_external_pseudonymizer, ExternalError, PseudonymError, PseudonymizerBackend, PseudonymizerKind,
};
use pseudogate_core::relevance::ConfigError as RelevanceError;
use pseudogate_core::substituter::{RestoreRequest, SubstituterBackend};
use pseudogate_core::{
    bundled, restore, text, Detector, EntityMapping, EntitySpan, PoolSet, PseudonymizationResult, Pseudonymizer,
    RelevanceConfig, ReplacementMode, RestorePlan, Seed,
};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::backends::{HttpEntityBackend, HttpPseudonymizer, HttpSubstituter};
use crate::config::{GatewayConfig, PrivacyMode};

#[derive(Debug, Error)]
pub enum BuildError {
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Pools(#[from] PseudonymError),
    #[error(transparent)]
    Relevance(#[from] RelevanceError),
}

/// Messages carry no entity text so they can go back to the client and into logs.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("pseudonymization failed: {0}")]
    Pseudonymize(String),
    #[error("{0} detected entities would have been sent unprotected")]
    Unprotected(usize),
}

impl From<PseudonymError> for PipelineError {
    fn from(e: PseudonymError) -> Self {
        PipelineError::Pseudonymize(match e {
            PseudonymError::InvalidSpan(_) => "detector produced a span that does not match the prompt".into(),
            other => other.to_string(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct Protected {
    pub result: PseudonymizationResult,
    pub detected: usize,
    /// A configured external backend failed and a local fallback was used.
    pub degraded: bool,
    pub detect_ms: f64,
    pub pseudonymize_ms: f64,
}

impl Protected {
    pub fn replaced(&self) -> usize {
        self.result.mapping.replaced_pairs().count()
    }

    pub fn kept(&self) -> usize {
        self.result.mapping.kept_pairs().count()
    }
}

pub struct Pipeline {
    pub mode: PrivacyMode,
    detector: Detector,
    pseudonymizer: Pseudonymizer,
    external: Option<Arc<dyn PseudonymizerBackend>>,
    substituter: Option<Arc<dyn SubstituterBackend>>,
}

impl std::fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pipeline")
            .field("mode", &self.mode)
            .field("external_pseudonymizer", &self.external.is_some())
            .field("external_substituter", &self.substituter.is_some())
            .finish()
    }
}

pub fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1000.0
}

/// Per-session seed: the configured seed hashed with the session id.
pub fn session_seed(seed: u64, session_id: &str) -> Seed {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(session_id.as_bytes());
    let digest = h.finalize();
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    Seed(u64::from_le_bytes(head))
}

impl Pipeline {
    pub fn new(detector: Detector, relevance: RelevanceConfig, pools: PoolSet, mode: PrivacyMode) -> Self {
        let replacement = if mode == PrivacyMode::Strict { ReplacementMode::Strict } else { ReplacementMode::Gated };
        Self {
            mode,
            detector,
            pseudonymizer: Pseudonymizer::new(relevance, pools, replacement),
            external: None,
            substituter: None,
        }
    }

    /// Bundled gazetteers, pools and relevance config.
    pub fn bundled(mode: PrivacyMode) -> Result<Self, BuildError> {
        Ok(Self::new(bundled::detector()?, bundled::relevance()?, bundled::pools()?, mode))
    }

    pub fn from_config(cfg: &GatewayConfig) -> Result<Self, BuildError> {
        let base = cfg.base_dir.as_deref();
        let mut detector = if cfg.detector.gazetteers.is_empty() {
            Detector::new(bundled::gazetteers()?, RegexRules::new(cfg.detector.email, cfg.detector.phone))?
        } else {
            Detector::from_config(&cfg.detector, base)?
        };
        if let Some(url) = &cfg.detector.external_endpoint {
            detector = detector.with_external(Arc::new(HttpEntityBackend::new(url, cfg.detector.external_timeout_ms)));
        }
        let relevance = match &cfg.relevance {
            Some(path) => RelevanceConfig::load(cfg.resolve(path))?,
            None => bundled::relevance()?,
        };
        let pools = if cfg.pools.is_empty() { bundled::pools()? } else { PoolSet::load(&cfg.pools, base)? };
        let mut pipeline = Self::new(detector, relevance, pools, cfg.mode);
        if let Some(url) = &cfg.pseudonymizer.endpoint {
            pipeline.external = Some(Arc::new(HttpPseudonymizer::new(url, cfg.pseudonymizer.timeout_ms.unwrap_or(5000))));
        }
        if let Some(url) = &cfg.substituter.endpoint {
            pipeline.substituter = Some(Arc::new(HttpSubstituter::new(url, cfg.substituter.timeout_ms.unwrap_or(5000))));
        }
        Ok(pipeline)
    }

    pub fn with_external_pseudonymizer(mut self, backend: Arc<dyn PseudonymizerBackend>) -> Self {
        self.external = Some(backend);
        self
    }

    pub fn with_substituter(mut self, backend: Arc<dyn SubstituterBackend>) -> Self {
        self.substituter = Some(backend);
        self
    }

    pub fn detector(&self) -> &Detector {
        &self.detector
    }

    pub fn pseudonymizer(&self) -> &Pseudonymizer {
        &self.pseudonymizer
    }

    pub fn backend_name(&self) -> &'static str {
        match (self.mode, &self.external) {
            (PrivacyMode::Off, _) => "none",
            (PrivacyMode::Gated, Some(_)) => "external",
            _ => "reference",
        }
    }

    /// Pseudonymizes one message. `history` holds the session's earlier pairs.
    /// May block on external backends.
    pub fn protect(&self, prompt: &str, seed: Seed, history: &EntityMapping) -> Result<Protected, PipelineError> {
        let t = Instant::now();
        let detection = self.detector.detect_entities(prompt);
        let detect_ms = ms_since(t);
        let mut degraded = detection.degraded;
        let t = Instant::now();

        let result = if self.mode == PrivacyMode::Off {
            PseudonymizationResult::unchanged(prompt, PseudonymizerKind::Reference)
        } else {
            let external = match (&self.external, self.mode) {
                (Some(backend), PrivacyMode::Gated) => {
                    match call_external_pseudonymizer(prompt, backend.as_ref(), &detection.spans) {
                        Ok(r) => Some(r),
                        Err(e) => {
                            log::warn!("external pseudonymizer failed ({}); using reference path", external_kind(&e));
                            degraded = true;
                            None
                        }
                    }
                }
                _ => None,
            };
            match external {
                Some(r) => r,
                None => self.pseudonymizer.pseudonymize(prompt, &detection.spans, seed, history)?,
            }
        };
        let mut result = result;
        result.degraded = degraded;

        if self.mode != PrivacyMode::Off {
            let exposed = unprotected(&detection.spans, &result);
            if exposed > 0 {
                return Err(PipelineError::Unprotected(exposed));
            }
        }
        Ok(Protected { result, detected: detection.spans.len(), degraded, detect_ms, pseudonymize_ms: ms_since(t) })
    }

    /// Restores a complete response. Falls back to the rule-based path when
    /// the external substituter fails; the flag reports that.
    pub fn restore(&self, response: &str, plan: &RestorePlan) -> (String, bool) {
        if plan.is_empty() {
            return (response.to_string(), false);
        }
        if let Some(backend) = &self.substituter {
            match backend.restore(&RestoreRequest::new(response, plan)) {
                Ok(r) => return (r.restored, false),
                Err(e) => {
                    log::warn!("external substituter failed: {}", backend_kind(&e));
                    return (restore(response, plan), true);
                }
            }
        }
        (restore(response, plan), false)
    }
}

fn backend_kind(e: &pseudogate_core::BackendError) -> &'static str {
    use pseudogate_core::BackendError::*;
    match e {
        Timeout(_) => "timeout",
        Unavailable(_) => "unavailable",
        Malformed(_) => "malformed response",
        Status { .. } => "error status",
    }
}

fn external_kind(e: &ExternalError) -> &'static str {
    match e {
        ExternalError::Transport(b) => backend_kind(b),
        ExternalError::MalformedJson(_) => "malformed JSON",
        ExternalError::InvariantViolation(_) => "invariant violation",
    }
}

/// Counts detected spans that are either missing from the mapping or whose
/// original still shows up in the outgoing text outside a kept entity.
fn unprotected(spans: &[EntitySpan], result: &PseudonymizationResult) -> usize {
    let modified: Vec<char> = result.modified_prompt.chars().collect();
    let kept_regions: Vec<(usize, usize)> = result
        .mapping
        .kept_pairs()
        .flat_map(|p| {
            let len = text::char_len(&p.original);
            text::find_word_bounded_ci(&modified, &p.original).into_iter().map(move |at| (at, at + len))
        })
        .collect();
    spans
        .iter()
        .filter(|span| {
            let pairs: Vec<_> = result.mapping.pairs.iter().filter(|p| text::eq_ci(&p.original, &span.text)).collect();
            if pairs.is_empty() {
                return true;
            }
            if !pairs.iter().any(|p| p.replaced) {
                return false;
            }
            let len = text::char_len(&span.text);
            text::find_word_bounded_ci(&modified, &span.text)
                .into_iter()
                .any(|at| !kept_regions.iter().any(|&(s, e)| s <= at && at + len <= e))
        })
        .count()
}
