//! Append-only JSONL audit log. Entries hold counts and timings only; nothing
//! from the prompt or the mapping is ever written here.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::config::PrivacyMode;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Latency {
    pub detect_ms: f64,
    pub pseudonymize_ms: f64,
    pub upstream_ms: f64,
    pub restore_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditCounts {
    /// Detected spans in the processed message.
    pub detected: usize,
    /// Mapping pairs replaced / kept (one per distinct spelling).
    pub replaced: usize,
    pub kept: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub timestamp: DateTime<Utc>,
    pub session_id: String,
    pub mode: PrivacyMode,
    /// False when the request went out untouched (OFF mode) or was rejected.
    pub protected: bool,
    pub counts: AuditCounts,
    pub backend: String,
    pub degraded: bool,
    pub stream: bool,
    /// Upstream status; absent when nothing was sent.
    pub status: Option<u16>,
    /// Short diagnostic for locally rejected or failed requests.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub latency: Latency,
}

#[derive(Debug, Default)]
pub struct AuditLog {
    file: Option<Mutex<File>>,
}

impl AuditLog {
    pub fn disabled() -> Self {
        Self { file: None }
    }

    pub fn open(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let path = path.as_ref();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { file: Some(Mutex::new(file)) })
    }

    pub fn record(&self, entry: &AuditEntry) {
        let Some(file) = &self.file else { return };
        let mut line = match serde_json::to_vec(entry) {
            Ok(l) => l,
            Err(e) => return log::error!("audit entry not serializable: {e}"),
        };
        line.push(b'\n');
        if let Err(e) = file.lock().unwrap().write_all(&line) {
            log::error!("audit write failed: {e}");
        }
    }
}
