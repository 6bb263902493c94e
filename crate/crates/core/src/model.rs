//! Domain types shared across the pipeline.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::text;

/// Entity taxonomy. The first six variants are the annotated classes that
/// dataset statistics are reported over; `Email`, `Phone` and `Other` exist for
/// detector extensibility and are excluded from those statistics.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EntityClass {
    Person,
    Organization,
    Facility,
    /// Cities, countries, states.
    Gpe,
    Landmark,
    /// Nationalities, religious and political groups.
    Demographic,
    Email,
    Phone,
    Other(String),
}

impl EntityClass {
    pub const TABLE_CLASSES: [EntityClass; 6] = [
        EntityClass::Person,
        EntityClass::Organization,
        EntityClass::Facility,
        EntityClass::Gpe,
        EntityClass::Landmark,
        EntityClass::Demographic,
    ];

    pub fn is_table_class(&self) -> bool {
        Self::TABLE_CLASSES.contains(self)
    }

    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for EntityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EntityClass::Person => f.write_str("PERSON"),
            EntityClass::Organization => f.write_str("ORGANIZATION"),
            EntityClass::Facility => f.write_str("FACILITY"),
            EntityClass::Gpe => f.write_str("GPE"),
            EntityClass::Landmark => f.write_str("LANDMARK"),
            EntityClass::Demographic => f.write_str("DEMOGRAPHIC"),
            EntityClass::Email => f.write_str("EMAIL"),
            EntityClass::Phone => f.write_str("PHONE"),
            EntityClass::Other(tag) => write!(f, "OTHER:{tag}"),
        }
    }
}

impl FromStr for EntityClass {
    type Err = std::convert::Infallible;

    /// Accepts the canonical labels plus common spaCy aliases. Anything else
    /// becomes `Other(tag)`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(tag) = s.strip_prefix("OTHER:") {
            return Ok(EntityClass::Other(tag.to_string()));
        }
        Ok(match s.to_ascii_uppercase().as_str() {
            "PERSON" | "PER" => EntityClass::Person,
            "ORGANIZATION" | "ORG" => EntityClass::Organization,
            "FACILITY" | "FAC" => EntityClass::Facility,
            "GPE" | "CITY/COUNTRY" => EntityClass::Gpe,
            "LANDMARK" | "LOC" => EntityClass::Landmark,
            "DEMOGRAPHIC" | "NORP" => EntityClass::Demographic,
            "EMAIL" => EntityClass::Email,
            "PHONE" => EntityClass::Phone,
            _ => EntityClass::Other(s.to_string()),
        })
    }
}

impl Serialize for EntityClass {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for EntityClass {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Ok(s.parse().unwrap_or_else(|never| match never {}))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RelevanceLabel {
    /// Substituting the entity would alter the meaning of the prompt.
    Relevant,
    Irrelevant,
}

impl fmt::Display for RelevanceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RelevanceLabel::Relevant => "RELEVANT",
            RelevanceLabel::Irrelevant => "IRRELEVANT",
        })
    }
}

impl FromStr for RelevanceLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "RELEVANT" | "R" => Ok(RelevanceLabel::Relevant),
            "IRRELEVANT" | "I" => Ok(RelevanceLabel::Irrelevant),
            other => Err(format!("unknown relevance label `{other}`")),
        }
    }
}

/// A detected entity. `start`/`end` are char offsets into the source text,
/// end-exclusive.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EntitySpan {
    pub text: String,
    pub class: EntityClass,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SpanError {
    #[error("span [{start}, {end}) is empty or out of bounds for text of {len} chars")]
    OutOfBounds { start: usize, end: usize, len: usize },
    #[error("span text {expected:?} does not match source slice {actual:?}")]
    TextMismatch { expected: String, actual: String },
}

impl EntitySpan {
    pub fn new(text: impl Into<String>, class: EntityClass, start: usize, end: usize) -> Self {
        Self { text: text.into(), class, start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn overlaps(&self, other: &EntitySpan) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn validate(&self, source: &str) -> Result<(), SpanError> {
        let len = text::char_len(source);
        if self.start >= self.end || self.end > len {
            return Err(SpanError::OutOfBounds { start: self.start, end: self.end, len });
        }
        let actual = text::char_slice(source, self.start, self.end);
        if actual != self.text {
            return Err(SpanError::TextMismatch {
                expected: self.text.clone(),
                actual: actual.to_string(),
            });
        }
        Ok(())
    }
}

/// One (original, pseudonym) pair. Kept entities carry `replaced == false` and a
/// pseudonym equal to the original.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingPair {
    pub original: String,
    pub pseudonym: String,
    pub class: EntityClass,
    pub relevance: RelevanceLabel,
    pub replaced: bool,
}

impl MappingPair {
    pub fn replaced(original: impl Into<String>, pseudonym: impl Into<String>, class: EntityClass) -> Self {
        Self {
            original: original.into(),
            pseudonym: pseudonym.into(),
            class,
            relevance: RelevanceLabel::Irrelevant,
            replaced: true,
        }
    }

    pub fn kept(original: impl Into<String>, class: EntityClass, relevance: RelevanceLabel) -> Self {
        let original = original.into();
        Self { pseudonym: original.clone(), original, class, relevance, replaced: false }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MappingError {
    #[error("pseudonym {pseudonym:?} is shared by {first:?} and {second:?}")]
    SharedPseudonym { pseudonym: String, first: String, second: String },
    #[error("original {original:?} maps to both {first:?} and {second:?}")]
    SharedOriginal { original: String, first: String, second: String },
    #[error("pseudonym for {original:?} equals the original")]
    IdentityPseudonym { original: String },
    #[error("{original:?} is marked replaced but labelled RELEVANT")]
    RelevantReplaced { original: String },
}

/// The entity pairs produced for one exchange, in first-occurrence order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityMapping {
    pub pairs: Vec<MappingPair>,
}

impl EntityMapping {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn replaced_pairs(&self) -> impl Iterator<Item = &MappingPair> {
        self.pairs.iter().filter(|p| p.replaced)
    }

    pub fn kept_pairs(&self) -> impl Iterator<Item = &MappingPair> {
        self.pairs.iter().filter(|p| !p.replaced)
    }

    /// Pseudonym for an exact original surface form.
    pub fn forward(&self, original: &str) -> Option<&str> {
        self.replaced_pairs().find(|p| p.original == original).map(|p| p.pseudonym.as_str())
    }

    /// Original for an exact pseudonym surface form (the reverse mapping).
    pub fn reverse(&self, pseudonym: &str) -> Option<&str> {
        self.replaced_pairs().find(|p| p.pseudonym == pseudonym).map(|p| p.original.as_str())
    }

    /// Checks injectivity, non-identity and the relevance gate over replaced pairs.
    pub fn validate(&self) -> Result<(), MappingError> {
        let replaced: Vec<&MappingPair> = self.replaced_pairs().collect();
        for (i, a) in replaced.iter().enumerate() {
            if text::eq_ci(&a.original, &a.pseudonym) {
                return Err(MappingError::IdentityPseudonym { original: a.original.clone() });
            }
            if a.relevance == RelevanceLabel::Relevant {
                return Err(MappingError::RelevantReplaced { original: a.original.clone() });
            }
            for b in &replaced[i + 1..] {
                // Case variants of one entity may share a folded pseudonym; distinct
                // entities may not, or restoration becomes ambiguous.
                let ci_clash = text::eq_ci(&a.pseudonym, &b.pseudonym)
                    && !text::eq_ci(&a.original, &b.original);
                if a.pseudonym == b.pseudonym || ci_clash {
                    return Err(MappingError::SharedPseudonym {
                        pseudonym: a.pseudonym.clone(),
                        first: a.original.clone(),
                        second: b.original.clone(),
                    });
                }
                if a.original == b.original {
                    return Err(MappingError::SharedOriginal {
                        original: a.original.clone(),
                        first: a.pseudonym.clone(),
                        second: b.pseudonym.clone(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Per-conversation state held by the local session store.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    /// One mapping per processed turn.
    pub mappings: Vec<EntityMapping>,
    pub created_at: DateTime<Utc>,
    pub last_used: DateTime<Utc>,
    /// Idle lifetime in seconds.
    pub ttl: u64,
}

impl SessionRecord {
    pub fn new(session_id: impl Into<String>, now: DateTime<Utc>, ttl: u64) -> Self {
        Self { session_id: session_id.into(), mappings: Vec::new(), created_at: now, last_used: now, ttl }
    }

    pub fn is_expired(&self, now: DateTime<Utc>) -> bool {
        now - self.last_used > Duration::seconds(self.ttl as i64)
    }

    pub fn touch(&mut self, now: DateTime<Utc>) {
        self.last_used = now;
    }

    /// All replaced pairs across turns, most recent turn first.
    pub fn replaced_pairs_recent_first(&self) -> impl Iterator<Item = &MappingPair> {
        self.mappings.iter().rev().flat_map(|m| m.replaced_pairs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn class_labels_round_trip() {
        let mut all: Vec<EntityClass> = EntityClass::TABLE_CLASSES.to_vec();
        all.extend([EntityClass::Email, EntityClass::Phone, EntityClass::Other("DATE".into())]);
        for class in all {
            let json = serde_json::to_string(&class).unwrap();
            let back: EntityClass = serde_json::from_str(&json).unwrap();
            assert_eq!(back, class);
        }
        assert_eq!("NORP".parse::<EntityClass>().unwrap(), EntityClass::Demographic);
        assert_eq!("ORG".parse::<EntityClass>().unwrap(), EntityClass::Organization);
        assert_eq!("MONEY".parse::<EntityClass>().unwrap(), EntityClass::Other("MONEY".into()));
        assert!(!EntityClass::Email.is_table_class());
    }

    #[test]
    fn span_json_shape() {
        let span = EntitySpan::new("Chicago", EntityClass::Gpe, 26, 33);
        let v = serde_json::to_value(&span).unwrap();
        assert_eq!(v, serde_json::json!({"text": "Chicago", "class": "GPE", "start": 26, "end": 33}));
        span.validate("What is the population of Chicago?").unwrap();
        assert!(span.validate("short").is_err());
    }

    #[test]
    fn mapping_validation() {
        let mut m = EntityMapping::new();
        m.pairs.push(MappingPair::replaced("Raven", "Shadow", EntityClass::Person));
        m.pairs.push(MappingPair::kept("Chicago", EntityClass::Gpe, RelevanceLabel::Relevant));
        m.validate().unwrap();
        assert_eq!(m.forward("Raven"), Some("Shadow"));
        assert_eq!(m.reverse("Shadow"), Some("Raven"));

        m.pairs.push(MappingPair::replaced("Bob", "Shadow", EntityClass::Person));
        assert!(matches!(m.validate(), Err(MappingError::SharedPseudonym { .. })));

        let mut m = EntityMapping::new();
        m.pairs.push(MappingPair::replaced("Raven", "raven", EntityClass::Person));
        assert!(matches!(m.validate(), Err(MappingError::IdentityPseudonym { .. })));

        let mut m = EntityMapping::new();
        let mut p = MappingPair::replaced("Raven", "Shadow", EntityClass::Person);
        p.relevance = RelevanceLabel::Relevant;
        m.pairs.push(p);
        assert!(matches!(m.validate(), Err(MappingError::RelevantReplaced { .. })));
    }

    #[test]
    fn session_expiry() {
        let t0 = DateTime::<Utc>::from_timestamp(1_700_000_000, 0).unwrap();
        let mut rec = SessionRecord::new("s1", t0, 60);
        assert!(!rec.is_expired(t0 + Duration::seconds(60)));
        assert!(rec.is_expired(t0 + Duration::seconds(61)));
        rec.touch(t0 + Duration::seconds(50));
        assert!(!rec.is_expired(t0 + Duration::seconds(100)));
    }

    fn class_strategy() -> impl Strategy<Value = EntityClass> {
        prop_oneof![
            Just(EntityClass::Person),
            Just(EntityClass::Gpe),
            Just(EntityClass::Email),
            "[A-Z]{1,6}".prop_map(EntityClass::Other),
        ]
    }

    fn pair_strategy() -> impl Strategy<Value = MappingPair> {
        (".{1,12}", ".{1,12}", class_strategy(), any::<bool>(), any::<bool>()).prop_map(
            |(original, pseudonym, class, relevant, replaced)| MappingPair {
                original,
                pseudonym,
                class,
                relevance: if relevant { RelevanceLabel::Relevant } else { RelevanceLabel::Irrelevant },
                replaced,
            },
        )
    }

    proptest! {
        #[test]
        fn serde_round_trip(pairs in prop::collection::vec(pair_strategy(), 0..6),
                            secs in 0i64..4_000_000_000, ttl in 0u64..100_000,
                            text in ".{0,20}", start in 0usize..50, len in 1usize..10) {
            let mapping = EntityMapping { pairs };
            let json = serde_json::to_string(&mapping).unwrap();
            prop_assert_eq!(&serde_json::from_str::<EntityMapping>(&json).unwrap(), &mapping);

            let now = DateTime::<Utc>::from_timestamp(secs, 0).unwrap();
            let mut rec = SessionRecord::new("sess", now, ttl);
            rec.mappings.push(mapping);
            let json = serde_json::to_string(&rec).unwrap();
            prop_assert_eq!(serde_json::from_str::<SessionRecord>(&json).unwrap(), rec);

            let span = EntitySpan::new(text, EntityClass::Landmark, start, start + len);
            let json = serde_json::to_string(&span).unwrap();
            prop_assert_eq!(serde_json::from_str::<EntitySpan>(&json).unwrap(), span);
        }

        #[test]
        fn forward_then_reverse_is_identity(names in prop::collection::btree_set("[a-z]{2,8}", 1..8)) {
            let mut mapping = EntityMapping::new();
            for (i, name) in names.iter().enumerate() {
                mapping.pairs.push(MappingPair::replaced(name.clone(), format!("Pseudo{i}"), EntityClass::Person));
            }
            mapping.validate().unwrap();
            for name in &names {
                let pseudo = mapping.forward(name).unwrap();
                prop_assert_eq!(mapping.reverse(pseudo), Some(name.as_str()));
            }
        }
    }
}
