//! Majority vote over annotator labels and free-marginal (Randolph) kappa.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::AnnotatedPrompt;
use crate::model::RelevanceLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "outcome", content = "label")]
pub enum Vote {
    Decided(RelevanceLabel),
    /// Even split between the labels present.
    Tied,
    /// Fewer than two annotators labelled the entity.
    TooFewAnnotators,
}

impl Vote {
    pub fn label(self) -> Option<RelevanceLabel> {
        match self {
            Vote::Decided(l) => Some(l),
            _ => None,
        }
    }
}

/// Votes on one entity. Missing labels (`None`) are ignored.
pub fn vote(labels: &[Option<RelevanceLabel>]) -> Vote {
    let present: Vec<RelevanceLabel> = labels.iter().flatten().copied().collect();
    if present.len() < 2 {
        return Vote::TooFewAnnotators;
    }
    let relevant = present.iter().filter(|l| **l == RelevanceLabel::Relevant).count();
    let irrelevant = present.len() - relevant;
    match relevant.cmp(&irrelevant) {
        std::cmp::Ordering::Greater => Vote::Decided(RelevanceLabel::Relevant),
        std::cmp::Ordering::Less => Vote::Decided(RelevanceLabel::Irrelevant),
        std::cmp::Ordering::Equal => Vote::Tied,
    }
}

/// Gold labels for one prompt: per entity, the strict-majority label or `None`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MajorityVote {
    pub gold: Vec<Option<RelevanceLabel>>,
    pub votes: Vec<Vote>,
}

impl MajorityVote {
    pub fn needs_review(&self) -> bool {
        self.votes.iter().any(|v| v.label().is_none())
    }
}

/// Runs the vote for every entity of `prompt`. `labels` maps annotator to a
/// list aligned with the entities.
pub fn majority_vote(labels: &[&[Option<RelevanceLabel>]], entity_count: usize) -> MajorityVote {
    let votes: Vec<Vote> = (0..entity_count)
        .map(|i| {
            let column: Vec<Option<RelevanceLabel>> = labels.iter().map(|l| l.get(i).copied().flatten()).collect();
            vote(&column)
        })
        .collect();
    MajorityVote { gold: votes.iter().map(|v| v.label()).collect(), votes }
}

/// Sets `gold` and `flags.needs_review` on the prompt from its annotator labels.
pub fn apply_majority_vote(prompt: &mut AnnotatedPrompt) -> MajorityVote {
    let lists: Vec<&[Option<RelevanceLabel>]> = prompt.labels.values().map(Vec::as_slice).collect();
    let result = majority_vote(&lists, prompt.entities.len());
    prompt.gold = Some(result.gold.clone());
    if result.needs_review() {
        prompt.flags.needs_review = true;
    }
    result
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum AgreementError {
    #[error("kappa needs at least 2 categories, got {0}")]
    TooFewCategories(usize),
    #[error("item {item} has {raters} rater(s); kappa needs at least 2")]
    TooFewRaters { item: usize, raters: usize },
    #[error("no items to compute agreement over")]
    NoItems,
    #[error("observed agreement {0} is outside [0, 1]")]
    InvalidAgreement(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kappa {
    pub kappa: f64,
    pub observed_agreement: f64,
    pub categories: usize,
    pub items: usize,
}

/// `(p_o - 1/k) / (1 - 1/k)`.
pub fn kappa_from_agreement(observed_agreement: f64, k: usize) -> Result<f64, AgreementError> {
    if k < 2 {
        return Err(AgreementError::TooFewCategories(k));
    }
    if !(0.0..=1.0).contains(&observed_agreement) {
        return Err(AgreementError::InvalidAgreement(observed_agreement));
    }
    let chance = 1.0 / k as f64;
    Ok((observed_agreement - chance) / (1.0 - chance))
}

/// Free-marginal kappa over items, each a list of the labels its raters gave.
/// Per-item agreement is the share of agreeing rater pairs; P̄_o is the mean.
pub fn free_marginal_kappa<T: Eq + Hash>(items: &[Vec<T>], k: usize) -> Result<Kappa, AgreementError> {
    if k < 2 {
        return Err(AgreementError::TooFewCategories(k));
    }
    if items.is_empty() {
        return Err(AgreementError::NoItems);
    }
    let mut total = 0.0;
    for (item, labels) in items.iter().enumerate() {
        let n = labels.len();
        if n < 2 {
            return Err(AgreementError::TooFewRaters { item, raters: n });
        }
        let mut counts: HashMap<&T, usize> = HashMap::new();
        for l in labels {
            *counts.entry(l).or_insert(0) += 1;
        }
        let agreeing: usize = counts.values().map(|c| c * (c - 1)).sum();
        total += agreeing as f64 / (n * (n - 1)) as f64;
    }
    let observed = total / items.len() as f64;
    Ok(Kappa { kappa: kappa_from_agreement(observed, k)?, observed_agreement: observed, categories: k, items: items.len() })
}

/// Label columns from every entity that at least two annotators labelled.
pub fn agreement_items(prompts: &[AnnotatedPrompt]) -> Vec<Vec<RelevanceLabel>> {
    let mut items = Vec::new();
    for p in prompts {
        for i in 0..p.entities.len() {
            let column: Vec<RelevanceLabel> = p.labels.values().filter_map(|l| l.get(i).copied().flatten()).collect();
            if column.len() >= 2 {
                items.push(column);
            }
        }
    }
    items
}

#[cfg(test)]
mod tests {
    use super::*;
    use RelevanceLabel::{Irrelevant as I, Relevant as R};

    #[test]
    fn two_of_three_decides() {
        assert_eq!(vote(&[Some(R), Some(R), Some(I)]), Vote::Decided(R));
        assert_eq!(vote(&[Some(I), Some(I), Some(I)]), Vote::Decided(I));
        assert_eq!(vote(&[Some(R), Some(I), None]), Vote::Tied);
        assert_eq!(vote(&[Some(R), None, None]), Vote::TooFewAnnotators);
    }

    #[test]
    fn per_entity_gold() {
        let a = [Some(R), Some(I)];
        let b = [Some(R), Some(R)];
        let c = [Some(I), None];
        let mv = majority_vote(&[&a, &b, &c], 2);
        assert_eq!(mv.gold, vec![Some(R), None]);
        assert!(mv.needs_review());
    }

    #[test]
    fn kappa_closed_form() {
        assert!((kappa_from_agreement(0.82, 2).unwrap() - 0.64).abs() < 1e-9);
        assert_eq!(kappa_from_agreement(0.5, 2).unwrap(), 0.0);
        assert_eq!(kappa_from_agreement(1.0, 2).unwrap(), 1.0);
        assert_eq!(kappa_from_agreement(0.75, 2).unwrap(), 0.5);
        assert!(kappa_from_agreement(0.9, 1).is_err());
    }

    #[test]
    fn kappa_from_items() {
        let unanimous = vec![vec![R, R, R], vec![I, I, I]];
        assert_eq!(free_marginal_kappa(&unanimous, 2).unwrap().kappa, 1.0);
        // (R,R,I): 1 of 3 pairs agree
        let k = free_marginal_kappa(&[vec![R, R, I]], 2).unwrap();
        assert!((k.observed_agreement - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(
            free_marginal_kappa(&[vec![R]], 2).unwrap_err(),
            AgreementError::TooFewRaters { item: 0, raters: 1 }
        );
    }
}
