//! Relevance-gated pseudonymization. Produces a modified prompt and the entity
//! mapping needed to undo it.
//!
//! Irrelevant entities are replaced by a same-class pseudonym from a pool at
//! every word-bounded occurrence; relevant entities are kept and recorded with
//! `replaced == false`. An entity with several occurrences is relevant if any of
//! its occurrences is.

mod external;
mod pool;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use external::{
    call_external_pseudonymizer, ChangedEntity, ExternalError, ExternalPseudonymization, PseudonymizeRequest,
    PseudonymizerBackend,
};
pub use pool::{PoolSet, PoolSource, PseudonymPool};

use crate::model::{EntityClass, EntityMapping, EntitySpan, MappingPair, RelevanceLabel, SpanError};
use crate::relevance::{classify_relevance, RelevanceConfig};
use crate::substituter::{restore, RestorePlan};
use crate::text::{self, Casing};

/// Re-draws with a different salt when a draw cannot be reversed exactly.
const MAX_ATTEMPTS: u64 = 16;

#[derive(Debug, Error)]
pub enum PseudonymError {
    #[error("pseudonym pool for {class} is exhausted: every candidate conflicts")]
    PoolExhausted { class: EntityClass },
    #[error("no pseudonym pool configured for {class}")]
    NoPool { class: EntityClass },
    #[error("pool for {pool} cannot serve class {requested}")]
    ClassMismatch { pool: EntityClass, requested: EntityClass },
    #[error("pseudonym pool {path} for {class} is empty")]
    EmptyPool { class: EntityClass, path: PathBuf },
    #[error("cannot read {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("invalid span: {0}")]
    InvalidSpan(#[from] SpanError),
    #[error("spans overlap or are unsorted at offset {0}")]
    UnorderedSpans(usize),
    #[error("could not find a reversible pseudonymization after {0} attempts")]
    Irreversible(u64),
}

/// Session-scoped seed; the gateway owns it and passes it in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Seed(pub u64);

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ReplacementMode {
    /// Replace only entities labelled irrelevant.
    #[default]
    Gated,
    /// Replace every detected entity regardless of relevance.
    Strict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PseudonymizerKind {
    Reference,
    External,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudonymizationResult {
    pub modified_prompt: String,
    pub mapping: EntityMapping,
    pub backend: PseudonymizerKind,
    pub degraded: bool,
    /// Replaced regions located in `modified_prompt` (char offsets).
    #[serde(default)]
    pub spans: Vec<EntitySpan>,
}

impl PseudonymizationResult {
    pub fn unchanged(prompt: &str, backend: PseudonymizerKind) -> Self {
        Self {
            modified_prompt: prompt.to_string(),
            mapping: EntityMapping::new(),
            backend,
            degraded: false,
            spans: Vec::new(),
        }
    }

    /// Applies the reverse mapping to the modified prompt.
    pub fn reverse(&self) -> String {
        restore(&self.modified_prompt, &RestorePlan::from_mapping(&self.mapping))
    }
}

/// Picks a pseudonym for `original`.
///
/// The start index is a seeded hash of `(seed, class, original)`; the probe
/// walks forward past candidates that contain the original as a whole word,
/// occur in the prompt, or are already taken in `mapping_so_far`. If the
/// original already has a usable pseudonym in `mapping_so_far`, that one is
/// returned.
pub fn generate_pseudonym(
    original: &str,
    class: &EntityClass,
    prompt: &str,
    mapping_so_far: &EntityMapping,
    pool: &PseudonymPool,
    seed: Seed,
) -> Result<String, PseudonymError> {
    generate_salted(original, class, prompt, mapping_so_far, pool, seed, 0, &[])
}

#[allow(clippy::too_many_arguments)]
fn generate_salted(
    original: &str,
    class: &EntityClass,
    prompt: &str,
    mapping_so_far: &EntityMapping,
    pool: &PseudonymPool,
    seed: Seed,
    salt: u64,
    avoid: &[&str],
) -> Result<String, PseudonymError> {
    if &pool.class != class {
        return Err(PseudonymError::ClassMismatch { pool: pool.class.clone(), requested: class.clone() });
    }
    if let Some(existing) = mapping_so_far.forward(original) {
        let chars: Vec<char> = existing.chars().collect();
        let leaks = avoid.iter().any(|o| !text::find_word_bounded_ci(&chars, o).is_empty());
        if !text::contains_ci(prompt, existing) && !leaks {
            return Ok(existing.to_string());
        }
    }

    let n = pool.candidates.len();
    let start = (seeded_index(seed, class, original, salt) % n as u64) as usize;
    for step in 0..n {
        let candidate = &pool.candidates[(start + step) % n];
        if candidate_ok(candidate, original, prompt, mapping_so_far, avoid) {
            return Ok(candidate.clone());
        }
    }
    Err(PseudonymError::PoolExhausted { class: class.clone() })
}

/// `avoid` lists other originals of the prompt; a candidate containing one of
/// them as a whole word would leak it.
fn candidate_ok(candidate: &str, original: &str, prompt: &str, mapping_so_far: &EntityMapping, avoid: &[&str]) -> bool {
    if candidate.is_empty() || text::contains_ci(prompt, candidate) {
        return false;
    }
    let chars: Vec<char> = candidate.chars().collect();
    let leaks = |o: &str| !o.is_empty() && !text::find_word_bounded_ci(&chars, o).is_empty();
    if leaks(original) || avoid.iter().any(|o| leaks(o)) {
        return false;
    }
    mapping_so_far.pairs.iter().all(|p| {
        let same_entity = text::eq_ci(&p.original, original);
        let taken = p.replaced && text::eq_ci(&p.pseudonym, candidate) && !same_entity;
        !taken && !leaks(&p.original)
    })
}

fn seeded_index(seed: Seed, class: &EntityClass, original: &str, salt: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.0.to_le_bytes());
    h.update(class.to_string().as_bytes());
    h.update([0u8]);
    h.update(text::fold(original).as_bytes());
    h.update(salt.to_le_bytes());
    let digest = h.finalize();
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(head)
}

/// Reference implementation of the pseudonymization contract.
#[derive(Debug, Clone)]
pub struct Pseudonymizer {
    pub relevance: RelevanceConfig,
    pub pools: PoolSet,
    pub mode: ReplacementMode,
}

struct Entity {
    class: EntityClass,
    label: RelevanceLabel,
    /// Distinct surface forms in order of first occurrence.
    surfaces: Vec<String>,
}

struct Region {
    start: usize,
    end: usize,
    entity: usize,
}

impl Pseudonymizer {
    pub fn new(relevance: RelevanceConfig, pools: PoolSet, mode: ReplacementMode) -> Self {
        Self { relevance, pools, mode }
    }

    /// Pseudonymizes `prompt` given detector output. `history` holds pairs from
    /// earlier turns of the same session so pseudonyms stay stable across turns.
    pub fn pseudonymize(
        &self,
        prompt: &str,
        spans: &[EntitySpan],
        seed: Seed,
        history: &EntityMapping,
    ) -> Result<PseudonymizationResult, PseudonymError> {
        let mut last_end = 0;
        for span in spans {
            span.validate(prompt)?;
            if span.start < last_end {
                return Err(PseudonymError::UnorderedSpans(span.start));
            }
            last_end = span.end;
        }
        if spans.is_empty() {
            return Ok(PseudonymizationResult::unchanged(prompt, PseudonymizerKind::Reference));
        }

        let chars: Vec<char> = prompt.chars().collect();
        let (entities, mut regions) = self.group_entities(prompt, spans);

        // extend replaced entities to every word-bounded occurrence
        let mut order: Vec<usize> = (0..entities.len()).filter(|&i| entities[i].label == RelevanceLabel::Irrelevant).collect();
        order.sort_by_key(|&i| std::cmp::Reverse(text::char_len(&entities[i].surfaces[0])));
        let mut entities = entities;
        for idx in order {
            let needle = entities[idx].surfaces[0].clone();
            let len = text::char_len(&needle);
            for at in text::find_word_bounded_ci(&chars, &needle) {
                if regions.iter().all(|r| at + len <= r.start || r.end <= at) {
                    regions.push(Region { start: at, end: at + len, entity: idx });
                    let surface: String = chars[at..at + len].iter().collect();
                    if !entities[idx].surfaces.contains(&surface) {
                        entities[idx].surfaces.push(surface);
                    }
                }
            }
        }
        regions.sort_by_key(|r| r.start);

        for salt in 0..MAX_ATTEMPTS {
            let mapping = self.draw_mapping(prompt, &entities, seed, history, salt)?;
            let (modified_prompt, out_spans) = apply(&chars, &regions, &entities, &mapping);
            let result = PseudonymizationResult {
                modified_prompt,
                mapping,
                backend: PseudonymizerKind::Reference,
                degraded: false,
                spans: out_spans,
            };
            if result.mapping.validate().is_ok() && result.reverse() == prompt {
                return Ok(result);
            }
            log::debug!("pseudonym draw {salt} not reversible, redrawing");
        }
        Err(PseudonymError::Irreversible(MAX_ATTEMPTS))
    }

    fn group_entities(&self, prompt: &str, spans: &[EntitySpan]) -> (Vec<Entity>, Vec<Region>) {
        let mut entities: Vec<Entity> = Vec::new();
        let mut regions = Vec::with_capacity(spans.len());
        for span in spans {
            let label = match self.mode {
                ReplacementMode::Strict => RelevanceLabel::Irrelevant,
                ReplacementMode::Gated => classify_relevance(prompt, span, &self.relevance),
            };
            let idx = match entities.iter().position(|e| text::eq_ci(&e.surfaces[0], &span.text)) {
                Some(i) => i,
                None => {
                    entities.push(Entity { class: span.class.clone(), label, surfaces: vec![span.text.clone()] });
                    entities.len() - 1
                }
            };
            let entity = &mut entities[idx];
            if label == RelevanceLabel::Relevant {
                entity.label = RelevanceLabel::Relevant;
            }
            if !entity.surfaces.contains(&span.text) {
                entity.surfaces.push(span.text.clone());
            }
            regions.push(Region { start: span.start, end: span.end, entity: idx });
        }
        (entities, regions)
    }

    fn draw_mapping(
        &self,
        prompt: &str,
        entities: &[Entity],
        seed: Seed,
        history: &EntityMapping,
        salt: u64,
    ) -> Result<EntityMapping, PseudonymError> {
        let mut mapping = EntityMapping::new();
        let mut taken = history.clone();
        let originals: Vec<&str> = entities.iter().flat_map(|e| e.surfaces.iter().map(String::as_str)).collect();
        for entity in entities {
            if entity.label == RelevanceLabel::Relevant {
                mapping.pairs.push(MappingPair::kept(entity.surfaces[0].clone(), entity.class.clone(), entity.label));
                continue;
            }
            let pool = self.pools.get(&entity.class)?;
            let canonical = &entity.surfaces[0];
            let pseudonym = generate_salted(canonical, &entity.class, prompt, &taken, pool, seed, salt, &originals)?;
            let mut entity_pairs = vec![MappingPair::replaced(canonical.clone(), pseudonym.clone(), entity.class.clone())];

            for surface in &entity.surfaces[1..] {
                let variant = match text::casing_of(surface) {
                    Casing::AllCaps => Some(pseudonym.to_uppercase()),
                    Casing::Lower => Some(pseudonym.to_lowercase()),
                    Casing::Title => Some(text::title_case(&pseudonym)),
                    Casing::Mixed => None,
                }
                .filter(|v| text::eq_ci(v, &pseudonym) && !entity_pairs.iter().any(|p| &p.pseudonym == v));
                let variant = match variant {
                    Some(v) => v,
                    None => {
                        // this spelling needs a pseudonym distinct from the entity's other spellings,
                        // so their pairs are entered without an original
                        let mut scratch = taken.clone();
                        scratch.pairs.extend(
                            entity_pairs.iter().map(|p| MappingPair::replaced(String::new(), p.pseudonym.clone(), p.class.clone())),
                        );
                        generate_salted(surface, &entity.class, prompt, &scratch, pool, seed, salt, &originals)?
                    }
                };
                entity_pairs.push(MappingPair::replaced(surface.clone(), variant, entity.class.clone()));
            }
            taken.pairs.extend(entity_pairs.iter().cloned());
            mapping.pairs.extend(entity_pairs);
        }
        Ok(mapping)
    }
}

fn apply(chars: &[char], regions: &[Region], entities: &[Entity], mapping: &EntityMapping) -> (String, Vec<EntitySpan>) {
    let mut out = String::with_capacity(chars.len());
    let mut spans = Vec::new();
    let mut out_len = 0usize;
    let mut cursor = 0usize;
    for region in regions {
        for &c in &chars[cursor..region.start] {
            out.push(c);
        }
        out_len += region.start - cursor;
        let surface: String = chars[region.start..region.end].iter().collect();
        let entity = &entities[region.entity];
        let pair = mapping.pairs.iter().find(|p| p.original == surface);
        match pair {
            Some(p) if p.replaced => {
                let len = text::char_len(&p.pseudonym);
                out.push_str(&p.pseudonym);
                spans.push(EntitySpan::new(p.pseudonym.clone(), entity.class.clone(), out_len, out_len + len));
                out_len += len;
            }
            _ => {
                out.push_str(&surface);
                out_len += region.end - region.start;
            }
        }
        cursor = region.end;
    }
    for &c in &chars[cursor..] {
        out.push(c);
    }
    (out, spans)
}
