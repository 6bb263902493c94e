//! LLM-as-a-judge client. Only the protocol lives here; the judge model is
//! whatever the backend talks to.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::BackendError;

pub const JUDGE_TEMPLATE_VERSION: &str = "v1";
pub const JUDGE_TEMPLATE: &str = include_str!("../../assets/judge_prompt_v1.txt");

pub trait JudgeBackend: Send + Sync {
    /// Sends a fully rendered judge prompt and returns the reply text.
    fn complete(&self, prompt: &str) -> Result<String, BackendError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub score: u8,
    pub raw: String,
    pub attempts: u8,
    pub template_version: String,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum JudgeError {
    #[error("judge backend unavailable: {0}")]
    Unavailable(BackendError),
    #[error("judge reply has no 1-10 score after {attempts} attempts; last reply: {raw:?}")]
    Unparseable { raw: String, attempts: u8 },
}

pub fn render_judge_prompt(reference: &str, candidate: &str) -> String {
    JUDGE_TEMPLATE.replace("{{reference}}", reference).replace("{{candidate}}", candidate)
}

fn labelled_score() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\b(?:score|rating)\b\s*[:=]?\s*(\d{1,2})\b").unwrap())
}

fn out_of_ten() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b(\d{1,2})\s*/\s*10\b").unwrap())
}

fn in_range(s: &str) -> Option<u8> {
    s.parse::<u8>().ok().filter(|n| (1..=10).contains(n))
}

/// Extracts a 1-10 score: `Score: N`, then `N/10`, then a bare integer reply.
pub fn parse_score(reply: &str) -> Option<u8> {
    if let Some(c) = labelled_score().captures(reply) {
        return in_range(&c[1]);
    }
    if let Some(c) = out_of_ten().captures(reply) {
        return in_range(&c[1]);
    }
    in_range(reply.trim().trim_end_matches('.'))
}

/// Asks the judge to rate `candidate` against `reference`. An unparseable
/// reply is retried once.
pub fn judge_score(reference: &str, candidate: &str, backend: &dyn JudgeBackend) -> Result<JudgeVerdict, JudgeError> {
    let prompt = render_judge_prompt(reference, candidate);
    let mut raw = String::new();
    for attempt in 1..=2u8 {
        raw = backend.complete(&prompt).map_err(JudgeError::Unavailable)?;
        if let Some(score) = parse_score(&raw) {
            return Ok(JudgeVerdict { score, raw, attempts: attempt, template_version: JUDGE_TEMPLATE_VERSION.into() });
        }
        log::warn!("judge reply unparseable on attempt {attempt}");
    }
    Err(JudgeError::Unparseable { raw, attempts: 2 })
}
