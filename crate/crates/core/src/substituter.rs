//! Restores original entities into upstream responses using the reverse
//! mapping, both for whole responses and for chunked streams.
//!
//! Matching is word-bounded and case-insensitive. At each position the longest
//! pseudonym wins; among equal-length candidates an exact-case match is
//! preferred. Casing of the matched text carries over to the original:
//!
//! | matched text            | emitted                   |
//! |-------------------------|---------------------------|
//! | exact pseudonym casing  | original as stored        |
//! | ALL-CAPS (2+ letters)   | original uppercased       |
//! | anything else           | original as stored        |
//!
//! Text following a match (possessive `'s`, punctuation) is left untouched.

use serde::{Deserialize, Serialize};

use crate::backend::BackendError;
use crate::model::EntityMapping;
use crate::text::{self, Casing};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RestoreRule {
    pub pseudonym: String,
    pub original: String,
    folded: Vec<char>,
    exact: Vec<char>,
}

impl RestoreRule {
    pub fn new(pseudonym: impl Into<String>, original: impl Into<String>) -> Self {
        let pseudonym = pseudonym.into();
        Self {
            folded: text::fold_chars(&pseudonym),
            exact: pseudonym.chars().collect(),
            original: original.into(),
            pseudonym,
        }
    }

    fn len(&self) -> usize {
        self.exact.len()
    }
}

/// Reverse-mapping rules sorted by pseudonym length, longest first.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RestorePlan {
    rules: Vec<RestoreRule>,
    max_pseudonym_len: usize,
}

impl RestorePlan {
    /// Builds a plan from `(pseudonym, original)` pairs. Empty pseudonyms are
    /// dropped; when a pseudonym repeats, the first pair wins.
    pub fn from_pairs<I, P, O>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (P, O)>,
        P: Into<String>,
        O: Into<String>,
    {
        let mut rules: Vec<RestoreRule> = Vec::new();
        for (p, o) in pairs {
            let rule = RestoreRule::new(p, o);
            if rule.len() > 0 && !rules.iter().any(|r| r.pseudonym == rule.pseudonym) {
                rules.push(rule);
            }
        }
        rules.sort_by_key(|r| std::cmp::Reverse(r.len()));
        let max_pseudonym_len = rules.first().map_or(0, RestoreRule::len);
        Self { rules, max_pseudonym_len }
    }

    /// The reverse map of a mapping's replaced pairs.
    pub fn from_mapping(mapping: &EntityMapping) -> Self {
        Self::from_pairs(mapping.replaced_pairs().map(|p| (p.pseudonym.clone(), p.original.clone())))
    }

    pub fn from_mappings<'a>(mappings: impl IntoIterator<Item = &'a EntityMapping>) -> Self {
        Self::from_pairs(
            mappings
                .into_iter()
                .flat_map(|m| m.replaced_pairs())
                .map(|p| (p.pseudonym.clone(), p.original.clone())),
        )
    }

    pub fn rules(&self) -> &[RestoreRule] {
        &self.rules
    }

    pub fn max_pseudonym_len(&self) -> usize {
        self.max_pseudonym_len
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Drops rules whose pseudonym occurs as a word in `text`. Used when a new
    /// prompt legitimately contains a word that an earlier turn used as a
    /// pseudonym.
    pub fn without_pseudonyms_in(mut self, text: &str) -> Self {
        let chars: Vec<char> = text.chars().collect();
        self.rules.retain(|r| text::find_word_bounded_ci(&chars, &r.pseudonym).is_empty());
        self.max_pseudonym_len = self.rules.iter().map(RestoreRule::len).max().unwrap_or(0);
        self
    }

    fn best_match(&self, chars: &[char], at: usize) -> Option<(usize, String)> {
        let mut i = 0;
        while i < self.rules.len() {
            let len = self.rules[i].len();
            let group_end = self.rules[i..].iter().position(|r| r.len() != len).map_or(self.rules.len(), |p| i + p);
            if at + len <= chars.len() && (at + len == chars.len() || !text::is_word_char(chars[at + len])) {
                let window = &chars[at..at + len];
                let mut found: Option<&RestoreRule> = None;
                for rule in &self.rules[i..group_end] {
                    if window == rule.exact.as_slice() {
                        found = Some(rule);
                        break;
                    }
                    if found.is_none() && text::matches_folded_at(chars, at, &rule.folded) {
                        found = Some(rule);
                    }
                }
                if let Some(rule) = found {
                    let matched: String = window.iter().collect();
                    let rendered = if window == rule.exact.as_slice() {
                        rule.original.clone()
                    } else if text::casing_of(&matched) == Casing::AllCaps {
                        rule.original.to_uppercase()
                    } else {
                        rule.original.clone()
                    };
                    return Some((len, rendered));
                }
            }
            i = group_end;
        }
        None
    }

    /// Scans `chars` left to right, writing restored text to `out`. `prev` is
    /// the input char preceding `chars[0]`. Unless `at_end`, stops at the first
    /// position whose decision needs chars not yet seen. Returns the number of
    /// input chars consumed.
    fn scan(&self, chars: &[char], prev: Option<char>, at_end: bool, out: &mut String) -> usize {
        let lookahead = self.max_pseudonym_len + 1;
        let mut i = 0;
        while i < chars.len() {
            if !at_end && i + lookahead > chars.len() {
                break;
            }
            let left = if i == 0 { prev } else { Some(chars[i - 1]) };
            if left.is_none_or(|c| !text::is_word_char(c)) {
                if let Some((len, rendered)) = self.best_match(chars, i) {
                    out.push_str(&rendered);
                    i += len;
                    continue;
                }
            }
            out.push(chars[i]);
            i += 1;
        }
        i
    }
}

/// Restores every pseudonym in `response` to its original.
pub fn restore(response: &str, plan: &RestorePlan) -> String {
    if plan.is_empty() {
        return response.to_string();
    }
    let chars: Vec<char> = response.chars().collect();
    let mut out = String::with_capacity(response.len());
    plan.scan(&chars, None, true, &mut out);
    out
}

/// Incremental restorer for one stream. Holds back at most
/// `max_pseudonym_len + 1` chars between pushes.
#[derive(Debug, Clone)]
pub struct StreamRestorer {
    plan: RestorePlan,
    pending: Vec<char>,
    prev: Option<char>,
}

impl StreamRestorer {
    pub fn new(plan: RestorePlan) -> Self {
        Self { plan, pending: Vec::new(), prev: None }
    }

    pub fn held_back(&self) -> usize {
        self.pending.len()
    }

    /// Feeds one chunk; returns the text that can be emitted now.
    pub fn push(&mut self, chunk: &str) -> String {
        if self.plan.is_empty() && self.pending.is_empty() {
            return chunk.to_string();
        }
        self.pending.extend(chunk.chars());
        let mut out = String::new();
        let consumed = self.plan.scan(&self.pending, self.prev, false, &mut out);
        if consumed > 0 {
            self.prev = Some(self.pending[consumed - 1]);
            self.pending.drain(..consumed);
        }
        out
    }

    /// End of stream: resolves and emits everything held back.
    pub fn finish(&mut self) -> String {
        let mut out = String::new();
        let consumed = self.plan.scan(&self.pending, self.prev, true, &mut out);
        if consumed > 0 {
            self.prev = Some(self.pending[consumed - 1]);
        }
        self.pending.clear();
        out
    }

    /// Stream aborted: emits held-back text verbatim.
    pub fn abort(&mut self) -> String {
        self.pending.drain(..).collect()
    }
}

/// Restores a sequence of chunks. The concatenated output equals
/// `restore(concatenated input)`.
pub fn restore_stream<I, S>(chunks: I, plan: &RestorePlan) -> Vec<String>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut restorer = StreamRestorer::new(plan.clone());
    let mut out: Vec<String> = chunks.into_iter().map(|c| restorer.push(c.as_ref())).collect();
    out.push(restorer.finish());
    out
}

/// Optional learned substitution backend. Request `{"response", "pairs"}`,
/// response `{"restored"}`.
pub trait SubstituterBackend: Send + Sync {
    fn restore(&self, request: &RestoreRequest) -> Result<RestoreResponse, BackendError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RestorePair {
    pub pseudonym: String,
    pub original: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RestoreRequest {
    pub response: String,
    pub pairs: Vec<RestorePair>,
}

impl RestoreRequest {
    pub fn new(response: &str, plan: &RestorePlan) -> Self {
        Self {
            response: response.to_string(),
            pairs: plan
                .rules()
                .iter()
                .map(|r| RestorePair { pseudonym: r.pseudonym.clone(), original: r.original.clone() })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RestoreResponse {
    pub restored: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan(pairs: &[(&str, &str)]) -> RestorePlan {
        RestorePlan::from_pairs(pairs.iter().copied())
    }

    #[test]
    fn weather_in_san_jose() {
        let p = plan(&[("San Jose", "Palo Alto")]);
        assert_eq!(restore("The weather in San Jose is sunny.", &p), "The weather in Palo Alto is sunny.");
    }

    #[test]
    fn empty_plan_is_identity() {
        let p = RestorePlan::default();
        for t in ["", "anything at all", "Shadow's"] {
            assert_eq!(restore(t, &p), t);
        }
    }

    #[test]
    fn casing_transfer_by_hand() {
        // "SHADOW" is all-caps -> "RAVEN"; "'s" stays. "shadow" is lower -> stored "Raven".
        let p = plan(&[("Shadow", "Raven")]);
        assert_eq!(restore("SHADOW's leash. shadow ran.", &p), "RAVEN's leash. Raven ran.");
    }

    #[test]
    fn word_boundary_blocks_partial_match() {
        let p = plan(&[("Shadow", "Raven")]);
        assert_eq!(restore("Shadowland is near", &p), "Shadowland is near");
        assert_eq!(restore("the_Shadow", &p), "the_Raven");
        assert_eq!(restore("x2Shadow", &p), "x2Shadow");
    }

    #[test]
    fn longest_pseudonym_first() {
        let p = plan(&[("San", "Bob"), ("San Jose", "Palo Alto")]);
        assert_eq!(p.rules()[0].pseudonym, "San Jose");
        assert_eq!(restore("San Jose and San", &p), "Palo Alto and Bob");
    }

    #[test]
    fn exact_case_preferred_among_variants() {
        let p = plan(&[("Shadow", "Raven"), ("shadow", "raven"), ("SHADOW", "RAVEN")]);
        assert_eq!(restore("shadow Shadow SHADOW sHADOW", &p), "raven Raven RAVEN Raven");
    }

    #[test]
    fn streaming_split_inside_pseudonym() {
        let p = plan(&[("San Jose", "Palo Alto")]);
        let out = restore_stream(["The weather in San ", "Jose is sunny."], &p);
        assert_eq!(out.concat(), "The weather in Palo Alto is sunny.");
    }

    #[test]
    fn single_chunk_stream_matches_restore() {
        let p = plan(&[("Shadow", "Raven")]);
        let text = "SHADOW's leash. shadow ran.";
        assert_eq!(restore_stream([text], &p).concat(), restore(text, &p));
    }

    #[test]
    fn empty_plan_stream_is_identity() {
        let chunks = ["Sha", "dowl", "and ", "is n", "ear"];
        assert_eq!(restore_stream(chunks, &RestorePlan::default()).concat(), chunks.concat());
    }

    #[test]
    fn holdback_bound() {
        let p = plan(&[("Shadow", "Raven")]);
        let mut r = StreamRestorer::new(p.clone());
        for c in "a very long response without any pseudonym in it".chars() {
            r.push(&c.to_string());
            assert!(r.held_back() <= p.max_pseudonym_len() + 2);
        }
    }

    #[test]
    fn abort_flushes_verbatim() {
        let mut r = StreamRestorer::new(plan(&[("Shadow", "Raven")]));
        let head = r.push("hello Shad");
        assert_eq!(head + &r.abort(), "hello Shad");
    }

    #[test]
    fn session_plan_drops_words_present_in_prompt() {
        let p = plan(&[("Shadow", "Raven"), ("Boston", "Chicago")]).without_pseudonyms_in("I like Boston");
        assert_eq!(p.rules().len(), 1);
        assert_eq!(p.max_pseudonym_len(), 6);
    }

    #[test]
    fn backend_wire_shape() {
        let req = RestoreRequest::new("hi Shadow", &plan(&[("Shadow", "Raven")]));
        assert_eq!(
            serde_json::to_value(&req).unwrap(),
            serde_json::json!({"response": "hi Shadow", "pairs": [{"pseudonym": "Shadow", "original": "Raven"}]})
        );
        let resp: RestoreResponse = serde_json::from_str(r#"{"restored":"hi Raven"}"#).unwrap();
        assert_eq!(resp.restored, "hi Raven");
    }
}
