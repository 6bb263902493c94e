use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{EntityClass, RelevanceLabel};

use super::AnnotatedPrompt;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub relevant: u64,
    pub irrelevant: u64,
    /// Entities without a gold label.
    pub unlabelled: u64,
}

/// Count-only corpus statistics. Every derived figure is a ratio of these
/// counts, so merging two stats records is plain addition (max for
/// `max_entities`).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub prompts: u64,
    pub entities: u64,
    pub word_tokens: u64,
    pub entity_chars: u64,
    pub max_entities: u64,
    pub needs_review: u64,
    pub rejected: u64,
    pub per_class: BTreeMap<EntityClass, ClassCounts>,
}

fn mean(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl CorpusStats {
    pub fn relevant(&self) -> u64 {
        self.per_class.values().map(|c| c.relevant).sum()
    }

    pub fn irrelevant(&self) -> u64 {
        self.per_class.values().map(|c| c.irrelevant).sum()
    }

    pub fn entities_per_prompt(&self) -> Option<f64> {
        mean(self.entities, self.prompts)
    }

    /// Whitespace tokens per prompt.
    pub fn avg_word_tokens(&self) -> Option<f64> {
        mean(self.word_tokens, self.prompts)
    }

    /// Characters per entity.
    pub fn avg_entity_length(&self) -> Option<f64> {
        mean(self.entity_chars, self.entities)
    }

    /// relevant : irrelevant.
    pub fn ratio(&self) -> Option<f64> {
        mean(self.relevant(), self.irrelevant())
    }

    /// irrelevant / (relevant + irrelevant).
    pub fn irrelevant_share(&self) -> Option<f64> {
        mean(self.irrelevant(), self.relevant() + self.irrelevant())
    }

    pub fn merge(&mut self, other: &CorpusStats) {
        self.prompts += other.prompts;
        self.entities += other.entities;
        self.word_tokens += other.word_tokens;
        self.entity_chars += other.entity_chars;
        self.max_entities = self.max_entities.max(other.max_entities);
        self.needs_review += other.needs_review;
        self.rejected += other.rejected;
        for (class, c) in &other.per_class {
            let e = self.per_class.entry(class.clone()).or_default();
            e.relevant += c.relevant;
            e.irrelevant += c.irrelevant;
            e.unlabelled += c.unlabelled;
        }
    }

    pub fn summary(&self) -> StatsSummary {
        StatsSummary {
            counts: self.clone(),
            relevant: self.relevant(),
            irrelevant: self.irrelevant(),
            entities_per_prompt: self.entities_per_prompt(),
            avg_word_tokens: self.avg_word_tokens(),
            avg_entity_length: self.avg_entity_length(),
            relevant_to_irrelevant: self.ratio(),
            irrelevant_share: self.irrelevant_share(),
        }
    }

    /// Plain-text rendering of the dataset and per-class counts.
    pub fn render(&self) -> String {
        let f = |v: Option<f64>| v.map_or_else(|| "N/A".into(), |x| format!("{x:.2}"));
        let mut out = String::new();
        out.push_str(&format!("# of Prompts            {}\n", self.prompts));
        out.push_str(&format!("# of Entities           {}\n", self.entities));
        out.push_str(&format!("Entities per Prompt     {}\n", f(self.entities_per_prompt())));
        out.push_str(&format!("Avg # of Word Tokens    {}\n", f(self.avg_word_tokens())));
        out.push_str(&format!("Avg Entity Length       {}\n", f(self.avg_entity_length())));
        out.push_str(&format!("Max Entities in Prompt  {}\n", self.max_entities));
        out.push_str(&format!("# Prompts Req. Review   {}\n", self.needs_review));
        out.push_str(&format!("Rejections              {}\n\n", self.rejected));
        out.push_str("Class          Relevant  Irrelevant\n");
        for (class, c) in &self.per_class {
            out.push_str(&format!("{:<14} {:>8}  {:>10}\n", class.label(), c.relevant, c.irrelevant));
        }
        out.push_str(&format!("{:<14} {:>8}  {:>10}\n", "Total", self.relevant(), self.irrelevant()));
        out.push_str(&format!(
            "relevant:irrelevant {}  irrelevant share {}\n",
            f(self.ratio()),
            self.irrelevant_share().map_or_else(|| "N/A".into(), |x| format!("{:.1}%", x * 100.0))
        ));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsSummary {
    #[serde(flatten)]
    pub counts: CorpusStats,
    pub relevant: u64,
    pub irrelevant: u64,
    pub entities_per_prompt: Option<f64>,
    pub avg_word_tokens: Option<f64>,
    pub avg_entity_length: Option<f64>,
    pub relevant_to_irrelevant: Option<f64>,
    pub irrelevant_share: Option<f64>,
}

/// Per-class relevance counts use the gold labels.
pub fn corpus_stats(dataset: &[AnnotatedPrompt]) -> CorpusStats {
    let mut s = CorpusStats::default();
    for p in dataset {
        s.prompts += 1;
        s.entities += p.entities.len() as u64;
        s.word_tokens += p.prompt.split_whitespace().count() as u64;
        s.max_entities = s.max_entities.max(p.entities.len() as u64);
        s.needs_review += u64::from(p.flags.needs_review);
        s.rejected += u64::from(p.flags.rejected);
        for (i, e) in p.entities.iter().enumerate() {
            s.entity_chars += e.text.chars().count() as u64;
            let c = s.per_class.entry(e.class.clone()).or_default();
            match p.gold.as_ref().and_then(|g| g.get(i).copied().flatten()) {
                Some(RelevanceLabel::Relevant) => c.relevant += 1,
                Some(RelevanceLabel::Irrelevant) => c.irrelevant += 1,
                None => c.unlabelled += 1,
            }
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::EntitySpan;

    fn prompt(id: &str, n: usize) -> AnnotatedPrompt {
        let text = (0..n).map(|i| format!("Name{i}")).collect::<Vec<_>>().join(" ");
        let mut at = 0;
        let spans = (0..n)
            .map(|i| {
                let t = format!("Name{i}");
                let len = t.chars().count();
                let s = EntitySpan::new(t, EntityClass::Person, at, at + len);
                at += len + 1;
                s
            })
            .collect();
        AnnotatedPrompt::new(id, text, spans)
    }

    #[test]
    fn single_prompt_single_entity() {
        let s = corpus_stats(&[prompt("a", 1)]);
        assert_eq!(s.entities_per_prompt(), Some(1.0));
        assert_eq!(s.avg_entity_length(), Some(5.0));
    }

    #[test]
    fn max_and_mean() {
        let s = corpus_stats(&[prompt("a", 1), prompt("b", 3)]);
        assert_eq!(s.max_entities, 3);
        assert_eq!(s.entities_per_prompt(), Some(2.0));
        assert_eq!(s.per_class[&EntityClass::Person].unlabelled, 4);
        assert_eq!(s.ratio(), None);
    }

    #[test]
    fn merge_equals_union() {
        let a = [prompt("a", 1), prompt("b", 3)];
        let b = [prompt("c", 2)];
        let mut merged = corpus_stats(&a);
        merged.merge(&corpus_stats(&b));
        let all: Vec<_> = a.iter().chain(b.iter()).cloned().collect();
        assert_eq!(merged, corpus_stats(&all));
    }
}
