//! Corpus-level evaluation: per-prompt metrics aggregated into an [`EvalReport`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::AnnotatedPrompt;
use crate::model::{EntityClass, EntityMapping, EntitySpan, RelevanceLabel};

use super::errors::{privacy_utility_errors, AlignmentError, ErrorCounts};
use super::judge::{judge_score, JudgeBackend, JudgeError};
use super::metrics::{score_pair, PairScores};

/// One gold-labelled entity of an eval record; `label` is `None` when the
/// vote was inconclusive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldEntity {
    pub text: String,
    pub class: EntityClass,
    pub start: usize,
    pub end: usize,
    pub label: Option<RelevanceLabel>,
}

/// One line of the eval input JSONL.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub id: String,
    pub original_prompt: String,
    pub modified_prompt: String,
    pub original_response: String,
    pub pipeline_response: String,
    pub mapping: EntityMapping,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_labels: Option<Vec<GoldEntity>>,
}

impl EvalRecord {
    fn gold_prompt(&self) -> Option<AnnotatedPrompt> {
        let gold = self.gold_labels.as_ref()?;
        let spans = gold.iter().map(|g| EntitySpan::new(g.text.clone(), g.class.clone(), g.start, g.end)).collect();
        let mut ap = AnnotatedPrompt::new(self.id.clone(), self.original_prompt.clone(), spans);
        ap.gold = Some(gold.iter().map(|g| g.label).collect());
        Some(ap)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptScores {
    pub id: String,
    #[serde(flatten)]
    pub scores: PairScores,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub errors: Option<ErrorCounts>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub judge_score: Option<u8>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportCounts {
    pub prompts: u64,
    pub empty_references: u64,
    pub gold_prompts: u64,
    pub errors: ErrorCounts,
    pub judged: u64,
    pub judge_score_sum: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rouge_1: f64,
    pub rouge_2: f64,
    pub rouge_l: f64,
    pub bleu: [f64; 4],
    pub privacy_error: Option<f64>,
    pub utility_error: Option<f64>,
    pub judge_score: Option<f64>,
    pub counts: ReportCounts,
    pub per_prompt: Vec<PromptScores>,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("record {id}: {source}")]
    Alignment { id: String, source: AlignmentError },
    #[error("record {id}: {source}")]
    Judge { id: String, source: JudgeError },
}

/// Scores every record (pipeline response against original response) in id
/// order. Judge scoring stops for the rest of the run once the backend is
/// unavailable; the report then carries no judge score.
pub fn evaluate(records: &[EvalRecord], judge: Option<&dyn JudgeBackend>) -> Result<EvalReport, EvalError> {
    let mut ordered: Vec<&EvalRecord> = records.iter().collect();
    ordered.sort_by(|a, b| a.id.cmp(&b.id));

    let mut counts = ReportCounts::default();
    let mut sums = [0.0f64; 7];
    let mut per_prompt = Vec::with_capacity(ordered.len());
    let mut judge = judge;

    for rec in ordered {
        let scores = score_pair(&rec.pipeline_response, &rec.original_response);
        counts.prompts += 1;
        if scores.empty_reference {
            log::warn!("record {}: empty reference response; ROUGE set to 0", rec.id);
            counts.empty_references += 1;
        }
        let values = [scores.rouge_1, scores.rouge_2, scores.rouge_l, scores.bleu[0], scores.bleu[1], scores.bleu[2], scores.bleu[3]];
        for (s, v) in sums.iter_mut().zip(values) {
            *s += v;
        }

        let errors = match rec.gold_prompt() {
            Some(gold) => {
                let rates = privacy_utility_errors(&gold, &rec.mapping)
                    .map_err(|source| EvalError::Alignment { id: rec.id.clone(), source })?;
                counts.gold_prompts += 1;
                counts.errors.add(&rates.counts);
                Some(rates.counts)
            }
            None => None,
        };

        let mut judged = None;
        if let Some(backend) = judge {
            match judge_score(&rec.original_response, &rec.pipeline_response, backend) {
                Ok(v) => {
                    counts.judged += 1;
                    counts.judge_score_sum += u64::from(v.score);
                    judged = Some(v.score);
                }
                Err(JudgeError::Unavailable(e)) => {
                    log::warn!("judge unavailable, skipping judge scores: {e}");
                    judge = None;
                }
                Err(source) => return Err(EvalError::Judge { id: rec.id.clone(), source }),
            }
        }

        per_prompt.push(PromptScores { id: rec.id.clone(), scores, errors, judge_score: judged });
    }

    let n = counts.prompts.max(1) as f64;
    let mean = |i: usize| sums[i] / n;
    Ok(EvalReport {
        rouge_1: mean(0),
        rouge_2: mean(1),
        rouge_l: mean(2),
        bleu: [mean(3), mean(4), mean(5), mean(6)],
        privacy_error: counts.errors.privacy_error(),
        utility_error: counts.errors.utility_error(),
        judge_score: (judge.is_some() && counts.judged > 0).then(|| counts.judge_score_sum as f64 / counts.judged as f64),
        counts,
        per_prompt,
    })
}

fn cell(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "N/A".to_string(), |x| format!("{x:.digits$}"))
}

/// Markdown table: one row per system, metric columns plus the two error rates.
pub fn render_table(rows: &[(&str, &EvalReport)]) -> String {
    let mut out = String::from(
        "| System | ROUGE-1 | ROUGE-2 | ROUGE-L | BLEU-1 | BLEU-2 | BLEU-3 | BLEU-4 | LLM-as-a-Judge | Privacy Err. | Utility Err. |\n\
         |---|---|---|---|---|---|---|---|---|---|---|\n",
    );
    for (name, r) in rows {
        out.push_str(&format!(
            "| {name} | {:.4} | {:.4} | {:.4} | {:.4} | {:.4} | {:.4} | {:.4} | {} | {} | {} |\n",
            r.rouge_1,
            r.rouge_2,
            r.rouge_l,
            r.bleu[0],
            r.bleu[1],
            r.bleu[2],
            r.bleu[3],
            cell(r.judge_score, 2),
            cell(r.privacy_error, 4),
            cell(r.utility_error, 4),
        ));
    }
    out
}
