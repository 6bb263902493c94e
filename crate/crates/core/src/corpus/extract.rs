use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::CorpusError;

/// One message of a ShareGPT-shaped conversation. `role`/`content` are
/// accepted as aliases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    #[serde(alias = "role")]
    pub from: String,
    #[serde(alias = "content")]
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conversation {
    #[serde(default)]
    pub id: Option<String>,
    #[serde(alias = "messages")]
    pub conversations: Vec<Message>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub id: String,
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Extraction {
    pub prompts: Vec<PromptRecord>,
    /// Conversations without any human message.
    pub skipped: usize,
}

pub fn parse_conversations(json: &str) -> Result<Vec<Conversation>, CorpusError> {
    serde_json::from_str(json).map_err(|e| CorpusError::Conversations(e.to_string()))
}

fn is_human(role: &str) -> bool {
    matches!(role.to_ascii_lowercase().as_str(), "human" | "user")
}

/// First human message of each conversation, in input order. Ids come from
/// the record when present, else from its position; repeats get a `#n` suffix.
pub fn extract_first_turns(conversations: &[Conversation]) -> Extraction {
    let mut out = Extraction::default();
    let mut seen = HashSet::new();
    for (index, conv) in conversations.iter().enumerate() {
        let Some(first) = conv.conversations.iter().find(|m| is_human(&m.from)) else {
            out.skipped += 1;
            continue;
        };
        let base = conv.id.clone().unwrap_or_else(|| format!("conv-{index:06}"));
        let mut id = base.clone();
        let mut n = 1;
        while !seen.insert(id.clone()) {
            n += 1;
            id = format!("{base}#{n}");
        }
        out.prompts.push(PromptRecord { id, prompt: first.value.clone() });
    }
    out
}
