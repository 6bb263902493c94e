//! ROUGE-N, ROUGE-L and BLEU over pre-tokenized sequences.
//!
//! Tokenization is fixed: case-fold, drop punctuation, split on whitespace.
//! BLEU is single-reference and unsmoothed: any zero n-gram precision gives 0.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

/// Lowercase, remove every char that is neither alphanumeric nor whitespace,
/// then split on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    let cleaned: String = text
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .flat_map(char::to_lowercase)
        .collect();
    cleaned.split_whitespace().map(str::to_string).collect()
}

/// A metric value in [0, 1]. `degenerate` marks inputs for which the metric
/// is undefined (empty reference for ROUGE, empty candidate for BLEU) and the
/// value was set to 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub value: f64,
    pub degenerate: bool,
}

impl Score {
    fn of(value: f64) -> Self {
        Self { value, degenerate: false }
    }

    fn undefined() -> Self {
        Self { value: 0.0, degenerate: true }
    }
}

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// Sum over n-gram types of `min(count in a, count in b)`.
fn clipped_overlap<T: Eq + Hash>(a: &HashMap<&[T], usize>, b: &HashMap<&[T], usize>) -> usize {
    a.iter().map(|(gram, &ca)| ca.min(b.get(gram).copied().unwrap_or(0))).sum()
}

/// Clipped n-gram overlap divided by the number of reference n-grams (recall).
pub fn rouge_n<T: Eq + Hash>(candidate: &[T], reference: &[T], n: usize) -> Score {
    if n == 0 || reference.len() < n {
        return Score::undefined();
    }
    let ref_counts = ngram_counts(reference, n);
    let cand_counts = ngram_counts(candidate, n);
    let total = reference.len() - n + 1;
    Score::of(clipped_overlap(&cand_counts, &ref_counts) as f64 / total as f64)
}

pub fn lcs_len<T: Eq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS-based F-measure with beta = 1, i.e. `2·LCS / (|candidate| + |reference|)`.
pub fn rouge_l<T: Eq>(candidate: &[T], reference: &[T]) -> Score {
    if reference.is_empty() {
        return Score::undefined();
    }
    if candidate.is_empty() {
        return Score::of(0.0);
    }
    let lcs = lcs_len(candidate, reference);
    Score::of((2 * lcs) as f64 / (candidate.len() + reference.len()) as f64)
}

/// Precision, recall and F1 of the LCS, for reporting.
pub fn rouge_l_parts<T: Eq>(candidate: &[T], reference: &[T]) -> (f64, f64, f64) {
    let lcs = lcs_len(candidate, reference) as f64;
    let p = if candidate.is_empty() { 0.0 } else { lcs / candidate.len() as f64 };
    let r = if reference.is_empty() { 0.0 } else { lcs / reference.len() as f64 };
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

/// Geometric mean of clipped k-gram precisions for k = 1..=n, times the
/// brevity penalty `exp(1 - |ref| / |cand|)` when the candidate is shorter.
pub fn bleu_n<T: Eq + Hash>(candidate: &[T], reference: &[T], n: usize) -> Score {
    if candidate.is_empty() {
        return Score::undefined();
    }
    if n == 0 {
        return Score::of(0.0);
    }
    let mut precisions = Vec::with_capacity(n);
    for k in 1..=n {
        if candidate.len() < k {
            return Score::of(0.0);
        }
        let total = candidate.len() - k + 1;
        let clipped = clipped_overlap(&ngram_counts(candidate, k), &ngram_counts(reference, k));
        if clipped == 0 {
            return Score::of(0.0);
        }
        precisions.push(clipped as f64 / total as f64);
    }
    let geo = if n == 1 {
        precisions[0]
    } else {
        (precisions.iter().map(|p| p.ln()).sum::<f64>() / n as f64).exp()
    };
    let (c, r) = (candidate.len() as f64, reference.len() as f64);
    let bp = if c < r { (1.0 - r / c).exp() } else { 1.0 };
    Score::of(geo * bp)
}

/// ROUGE-1/2/L and BLEU-1..4 for one (candidate, reference) text pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairScores {
    pub rouge_1: f64,
    pub rouge_2: f64,
    pub rouge_l: f64,
    pub bleu: [f64; 4],
    pub empty_reference: bool,
}

pub fn score_pair(candidate: &str, reference: &str) -> PairScores {
    let cand = tokenize(candidate);
    let refr = tokenize(reference);
    let r1 = rouge_n(&cand, &refr, 1);
    PairScores {
        rouge_1: r1.value,
        rouge_2: rouge_n(&cand, &refr, 2).value,
        rouge_l: rouge_l(&cand, &refr).value,
        bleu: [1, 2, 3, 4].map(|n| bleu_n(&cand, &refr, n).value),
        empty_reference: refr.is_empty(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn tokenizer_is_pinned() {
        assert_eq!(toks("The Cat, sat!  on   the mat."), vec!["the", "cat", "sat", "on", "the", "mat"]);
        assert_eq!(toks("don't stop"), vec!["dont", "stop"]);
        assert!(toks(" ... ").is_empty());
    }

    #[test]
    fn identical_sequences_score_one() {
        let x = toks("the quick brown fox jumps");
        for n in 1..=2 {
            assert_eq!(rouge_n(&x, &x, n).value, 1.0);
        }
        assert_eq!(rouge_l(&x, &x).value, 1.0);
        for n in 1..=4 {
            assert_eq!(bleu_n(&x, &x, n).value, 1.0);
        }
    }

    #[test]
    fn hand_counted_fixtures() {
        // unigram recall: "the", "cat" of 3 reference unigrams
        assert_eq!(rouge_n(&toks("the cat"), &toks("the cat sat"), 1).value, 2.0 / 3.0);
        // LCS("a c d", "a b c d") = 3; P = 1, R = 3/4, F1 = 6/7
        let (p, r, f) = rouge_l_parts(&toks("a c d"), &toks("a b c d"));
        assert_eq!((p, r), (1.0, 0.75));
        assert_eq!(rouge_l(&toks("a c d"), &toks("a b c d")).value, 6.0 / 7.0);
        assert!((f - 6.0 / 7.0).abs() < 1e-15);
        // candidate longer than reference: BP = 1, precision 2/3
        assert_eq!(bleu_n(&toks("the cat sat"), &toks("the cat"), 1).value, 2.0 / 3.0);
        // clipping: "the" counts at most once
        assert_eq!(bleu_n(&toks("the the the"), &toks("the cat"), 1).value, 1.0 / 3.0);
    }

    #[test]
    fn degenerate_inputs() {
        let empty: Vec<String> = Vec::new();
        let x = toks("a b");
        assert_eq!(rouge_n(&x, &empty, 1), Score { value: 0.0, degenerate: true });
        assert!(rouge_l(&x, &empty).degenerate);
        assert!(bleu_n(&empty, &x, 1).degenerate);
        assert_eq!(bleu_n(&x, &x, 3).value, 0.0);
        assert_eq!(rouge_n(&empty, &x, 1), Score { value: 0.0, degenerate: false });
    }

    #[test]
    fn brevity_penalty_applies() {
        let c = toks("a b");
        let r = toks("a b c d");
        let expected = (1.0f64 - 2.0).exp();
        assert!((bleu_n(&c, &r, 1).value - expected).abs() < 1e-15);
    }
}
