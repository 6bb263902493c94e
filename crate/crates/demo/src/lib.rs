//! In-browser demo over the bundled gazetteers and pools. Every export
//! returns a JSON string; errors surface as thrown JS strings.

use pseudogate_core::evaluator::score_pair;
use pseudogate_core::{
    bundled, restore, Detector, EntityMapping, Pseudonymizer, ReplacementMode, RestorePlan, Seed,
};
use serde_json::json;
use wasm_bindgen::prelude::*;

struct Bundle {
    detector: Detector,
    gated: Pseudonymizer,
    strict: Pseudonymizer,
}

impl Bundle {
    fn load() -> Result<Self, String> {
        let detector = bundled::detector().map_err(|e| e.to_string())?;
        let relevance = bundled::relevance().map_err(|e| e.to_string())?;
        let pools = bundled::pools().map_err(|e| e.to_string())?;
        Ok(Self {
            detector,
            gated: Pseudonymizer::new(relevance.clone(), pools.clone(), ReplacementMode::Gated),
            strict: Pseudonymizer::new(relevance, pools, ReplacementMode::Strict),
        })
    }
}

thread_local! {
    static BUNDLE: Result<Bundle, String> = Bundle::load();
}

fn with_bundle<T>(f: impl FnOnce(&Bundle) -> Result<T, String>) -> Result<T, String> {
    BUNDLE.with(|b| match b {
        Ok(b) => f(b),
        Err(e) => Err(format!("bundled data failed to load: {e}")),
    })
}

pub fn detect_json(prompt: &str) -> Result<String, String> {
    with_bundle(|b| Ok(json!({"spans": b.detector.detect_entities(prompt).spans}).to_string()))
}

/// Pseudonymizes `prompt`, then restores `response` (the modified prompt
/// itself when empty, as an echoing model would return it).
pub fn round_trip_json(prompt: &str, response: &str, strict: bool, seed: u32) -> Result<String, String> {
    with_bundle(|b| {
        let spans = b.detector.detect_entities(prompt).spans;
        let p = if strict { &b.strict } else { &b.gated };
        let result = p.pseudonymize(prompt, &spans, Seed(u64::from(seed)), &EntityMapping::new()).map_err(|e| e.to_string())?;
        let response = if response.is_empty() { result.modified_prompt.as_str() } else { response };
        let plan = RestorePlan::from_mapping(&result.mapping).without_pseudonyms_in(prompt);
        Ok(json!({
            "modified_prompt": result.modified_prompt,
            "mapping": result.mapping,
            "response": response,
            "restored": restore(response, &plan),
        })
        .to_string())
    })
}

pub fn score_json(candidate: &str, reference: &str) -> String {
    serde_json::to_string(&score_pair(candidate, reference)).expect("scores serialize")
}

#[wasm_bindgen]
pub fn detect(prompt: &str) -> Result<String, JsValue> {
    detect_json(prompt).map_err(JsValue::from)
}

#[wasm_bindgen(js_name = roundTrip)]
pub fn round_trip(prompt: &str, response: &str, strict: bool, seed: u32) -> Result<String, JsValue> {
    round_trip_json(prompt, response, strict, seed).map_err(JsValue::from)
}

#[wasm_bindgen]
pub fn score(candidate: &str, reference: &str) -> String {
    score_json(candidate, reference)
}
