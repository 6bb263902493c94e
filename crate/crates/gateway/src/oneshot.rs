//! One prompt through the whole loop, without the HTTP server.

use pseudogate_core::{BackendError, EntityMapping, RestorePlan, Seed};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::ChatClient;
use crate::pipeline::{Pipeline, PipelineError};

#[derive(Debug, Error)]
pub enum OneShotError {
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("upstream: {0}")]
    Upstream(#[from] BackendError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneShot {
    pub modified_prompt: String,
    pub mapping: EntityMapping,
    pub detected: usize,
    pub degraded: bool,
    /// What the upstream saw come back; the modified prompt when echoing.
    pub upstream_response: String,
    pub restored_response: String,
}

/// With no upstream the modified prompt is echoed back as the response.
pub fn run_once(pipeline: &Pipeline, prompt: &str, seed: Seed, upstream: Option<&ChatClient>) -> Result<OneShot, OneShotError> {
    let protected = pipeline.protect(prompt, seed, &EntityMapping::new())?;
    let modified = protected.result.modified_prompt.clone();
    let upstream_response = match upstream {
        Some(client) => client.complete(&modified)?,
        None => modified.clone(),
    };
    let plan = RestorePlan::from_mapping(&protected.result.mapping).without_pseudonyms_in(prompt);
    let (restored_response, restore_degraded) = pipeline.restore(&upstream_response, &plan);
    Ok(OneShot {
        modified_prompt: modified,
        mapping: protected.result.mapping,
        detected: protected.detected,
        degraded: protected.degraded || restore_degraded,
        upstream_response,
        restored_response,
    })
}

impl OneShot {
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str("modified prompt:\n  ");
        out.push_str(&self.modified_prompt);
        out.push_str(&format!("\nmapping ({} detected):\n", self.detected));
        if self.mapping.pairs.is_empty() {
            out.push_str("  (none)\n");
        }
        for p in &self.mapping.pairs {
            if p.replaced {
                out.push_str(&format!("  {} -> {} ({}, {})\n", p.original, p.pseudonym, p.class, p.relevance));
            } else {
                out.push_str(&format!("  {} kept ({}, {})\n", p.original, p.class, p.relevance));
            }
        }
        out.push_str("restored response:\n  ");
        out.push_str(&self.restored_response);
        out.push('\n');
        if self.degraded {
            out.push_str("(degraded: an external backend failed and a local fallback was used)\n");
        }
        out
    }
}
