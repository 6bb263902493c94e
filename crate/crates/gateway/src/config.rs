use std::fmt;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use pseudogate_core::pseudonymizer::PoolSource;
use pseudogate_core::DetectorConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {message}")]
    Parse { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PrivacyMode {
    /// Replace entities the relevance policy marks irrelevant.
    #[default]
    Gated,
    /// Replace every detected entity.
    Strict,
    /// Forward untouched; audit entries still record that nothing was done.
    Off,
}

impl fmt::Display for PrivacyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PrivacyMode::Gated => "GATED",
            PrivacyMode::Strict => "STRICT",
            PrivacyMode::Off => "OFF",
        })
    }
}

impl FromStr for PrivacyMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "GATED" => Ok(PrivacyMode::Gated),
            "STRICT" => Ok(PrivacyMode::Strict),
            "OFF" => Ok(PrivacyMode::Off),
            other => Err(format!("unknown privacy mode {other:?} (expected GATED, STRICT or OFF)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UpstreamConfig {
    /// Base URL including the API prefix, e.g. `https://api.openai.com/v1`.
    pub base_url: String,
    /// Name of the environment variable holding the bearer token.
    pub token_env: String,
    pub timeout_ms: u64,
}

impl Default for UpstreamConfig {
    fn default() -> Self {
        Self { base_url: "http://127.0.0.1:8000/v1".into(), token_env: "PSEUDOGATE_UPSTREAM_TOKEN".into(), timeout_ms: 120_000 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendEndpoint {
    pub endpoint: Option<String>,
    pub timeout_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub ttl_secs: u64,
    pub sweep_interval_secs: u64,
    /// Sessions are written here after every update and loaded at startup.
    pub persist_path: Option<PathBuf>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self { ttl_secs: 3600, sweep_interval_secs: 60, persist_path: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReviewConfig {
    /// Annotation tasks (JSONL from `make-tasks`) served by the review API.
    pub tasks_path: Option<PathBuf>,
    /// Submitted labels, rewritten as AnnotatedPrompt JSONL on every submit.
    pub labels_path: Option<PathBuf>,
    /// Static annotation UI served under `/ui`.
    pub ui_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    pub listen: SocketAddr,
    pub mode: PrivacyMode,
    pub upstream: UpstreamConfig,
    /// Empty `gazetteers` means the bundled lists.
    pub detector: DetectorConfig,
    /// Relevance TOML; the bundled one when unset.
    pub relevance: Option<PathBuf>,
    /// Empty means the bundled pools.
    pub pools: Vec<PoolSource>,
    pub pseudonymizer: BackendEndpoint,
    pub substituter: BackendEndpoint,
    pub session: SessionConfig,
    pub audit_path: Option<PathBuf>,
    pub review: ReviewConfig,
    /// Mixed with the session id to seed pseudonym draws.
    pub seed: u64,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            listen: SocketAddr::from(([127, 0, 0, 1], 8088)),
            mode: PrivacyMode::Gated,
            upstream: UpstreamConfig::default(),
            detector: DetectorConfig::default(),
            relevance: None,
            pools: Vec::new(),
            pseudonymizer: BackendEndpoint::default(),
            substituter: BackendEndpoint::default(),
            session: SessionConfig::default(),
            audit_path: None,
            review: ReviewConfig::default(),
            seed: 0,
            base_dir: None,
        }
    }
}

impl GatewayConfig {
    pub fn parse(src: &str, path: &Path) -> Result<Self, ConfigError> {
        let mut cfg: GatewayConfig =
            toml::from_str(src).map_err(|e| ConfigError::Parse { path: path.to_path_buf(), message: e.to_string() })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    /// Relative paths in the file resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let src = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&src, path)
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        match &self.base_dir {
            Some(base) if path.is_relative() => base.join(path),
            _ => path.to_path_buf(),
        }
    }

    pub fn upstream_token(&self) -> Option<Secret> {
        std::env::var(&self.upstream.token_env).ok().filter(|t| !t.is_empty()).map(Secret)
    }
}

/// Bearer token; never printed.
#[derive(Clone)]
pub struct Secret(String);

impl Secret {
    pub fn new(value: impl Into<String>) -> Self {
        Secret(value.into())
    }

    pub fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Secret(***)")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let cfg = GatewayConfig::parse(
            r#"
listen = "127.0.0.1:9000"
mode = "STRICT"
relevance = "relevance.toml"

[upstream]
base_url = "http://localhost:1234/v1"

[session]
ttl_secs = 10

[[pools]]
class = "PERSON"
path = "/abs/person.txt"
"#,
            Path::new("/etc/pg/gateway.toml"),
        )
        .unwrap();
        assert_eq!(cfg.mode, PrivacyMode::Strict);
        assert_eq!(cfg.session.ttl_secs, 10);
        assert_eq!(cfg.session.sweep_interval_secs, 60);
        assert_eq!(cfg.upstream.token_env, "PSEUDOGATE_UPSTREAM_TOKEN");
        assert_eq!(cfg.resolve(cfg.relevance.as_deref().unwrap()), PathBuf::from("/etc/pg/relevance.toml"));
        assert_eq!(cfg.resolve(&cfg.pools[0].path), PathBuf::from("/abs/person.txt"));
    }

    #[test]
    fn default_ttl_is_an_hour() {
        assert_eq!(GatewayConfig::default().session.ttl_secs, 3600);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(GatewayConfig::parse("lisen = \"x\"", Path::new("g.toml")).is_err());
    }

    #[test]
    fn secret_debug_is_redacted() {
        assert_eq!(format!("{:?}", Secret::new("sk-live-123")), "Secret(***)");
    }

    #[test]
    fn mode_parses_case_insensitively() {
        assert_eq!("off".parse::<PrivacyMode>().unwrap(), PrivacyMode::Off);
        assert!("loose".parse::<PrivacyMode>().is_err());
    }
}
