//! Paired corpus of original and pipeline responses for training a
//! syntheticity classifier elsewhere.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Original,
    Pipeline,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthHeader {
    pub seed: u64,
    pub records: usize,
    pub shuffle: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthRecord {
    pub text: String,
    pub label: Origin,
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("{originals} original responses but {pipeline} pipeline responses")]
    LengthMismatch { originals: usize, pipeline: usize },
    #[error("write failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization failed: {0}")]
    Json(#[from] serde_json::Error),
}

/// Writes a header line `{seed, records, shuffle}` followed by one
/// `{text, label}` line per response, shuffled with ChaCha8 from `seed`.
/// Returns the record count.
pub fn export_syntheticity_corpus(
    originals: &[String],
    pipeline: &[String],
    seed: u64,
    out: &mut impl Write,
) -> Result<usize, SynthError> {
    if originals.len() != pipeline.len() {
        return Err(SynthError::LengthMismatch { originals: originals.len(), pipeline: pipeline.len() });
    }
    let mut records: Vec<SynthRecord> = originals
        .iter()
        .map(|t| SynthRecord { text: t.clone(), label: Origin::Original })
        .chain(pipeline.iter().map(|t| SynthRecord { text: t.clone(), label: Origin::Pipeline }))
        .collect();
    records.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let header = SynthHeader { seed, records: records.len(), shuffle: "chacha8".into() };
    serde_json::to_writer(&mut *out, &header)?;
    out.write_all(b"\n")?;
    for r in &records {
        serde_json::to_writer(&mut *out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(records.len())
}
