//! Response-similarity metrics, privacy/utility error rates, annotator
//! agreement, judge client and syntheticity export.

pub mod agreement;
pub mod errors;
pub mod judge;
pub mod metrics;
pub mod report;
pub mod syntheticity;

pub use agreement::{
    agreement_items, apply_majority_vote, free_marginal_kappa, kappa_from_agreement, majority_vote, vote,
    AgreementError, Kappa, MajorityVote, Vote,
};
pub use errors::{privacy_utility_errors, AlignmentError, ErrorCounts, ErrorRates};
pub use judge::{judge_score, parse_score, JudgeBackend, JudgeError, JudgeVerdict};
pub use metrics::{bleu_n, rouge_l, rouge_n, score_pair, tokenize, PairScores, Score};
pub use report::{evaluate, render_table, EvalError, EvalRecord, EvalReport, GoldEntity};
pub use syntheticity::{export_syntheticity_corpus, SynthError};
