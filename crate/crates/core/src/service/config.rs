use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::ServiceError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Role {
    /// Answers encrypted queries against the infected vector.
    QueryServer,
    /// Public-key directory only. Holds no ciphertexts and no trajectories.
    KeyExchange,
    /// Publishes the infected vector under its own key and decrypts blinded
    /// results for clients that evaluate on-device.
    DecryptServer,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateLimitConfig {
    #[serde(default = "default_quota")]
    pub quota: u32,
    #[serde(default = "default_window")]
    pub window_secs: u64,
}

impl Default for RateLimitConfig {
    fn default() -> Self {
        RateLimitConfig {
            quota: default_quota(),
            window_secs: default_window(),
        }
    }
}

fn default_quota() -> u32 {
    1
}

fn default_window() -> u64 {
    86_400
}

fn default_key_bits() -> u64 {
    1024
}

/// Server configuration file (TOML). Relative paths resolve against the
/// directory holding the file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerConfig {
    pub listen: String,
    pub role: Role,
    /// Grid spec file; required unless the role is `KEY_EXCHANGE`.
    pub grid: Option<PathBuf>,
    #[serde(default = "default_key_bits")]
    pub key_bits: u64,
    pub ingest_token: Option<String>,
    pub state_dir: Option<PathBuf>,
    #[serde(default)]
    pub rate_limit: RateLimitConfig,
    /// Tokens accepted on decryption requests. Empty accepts any token.
    #[serde(default)]
    pub client_tokens: Vec<String>,
}

impl ServerConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ServiceError> {
        let mut cfg: ServerConfig =
            toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))?;
        cfg.grid = cfg.grid.map(|p| base_dir.join(p));
        cfg.state_dir = cfg.state_dir.map(|p| base_dir.join(p));
        if cfg.role != Role::KeyExchange && cfg.grid.is_none() {
            return Err(ServiceError::Config(
                "`grid` is required for this role".into(),
            ));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }
}
