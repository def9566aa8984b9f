use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use acgan_core::conditioning::ExtractionConfig;
use acgan_core::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: SocketAddr,
    pub checkpoint: Option<PathBuf>,
    pub session_ttl_secs: u64,
    /// Sessions are mirrored here and reloaded on startup when set.
    pub session_dir: Option<PathBuf>,
    pub max_body_bytes: usize,
    pub extraction: ExtractionConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            bind: "127.0.0.1:8080".parse().unwrap(),
            checkpoint: None,
            session_ttl_secs: 3600,
            session_dir: None,
            max_body_bytes: 16 << 20,
            extraction: ExtractionConfig::default(),
        }
    }
}

pub const ENV_BIND: &str = "ACGAN_BIND";
pub const ENV_CHECKPOINT: &str = "ACGAN_CHECKPOINT";
pub const ENV_SESSION_TTL: &str = "ACGAN_SESSION_TTL";
pub const ENV_SESSION_DIR: &str = "ACGAN_SESSION_DIR";
pub const ENV_MAX_BODY: &str = "ACGAN_MAX_BODY";

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// File settings (if any) overridden by `ACGAN_*` variables from `env`.
    pub fn load(path: Option<&Path>, env: impl Fn(&str) -> Option<String>) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => Self::from_toml(&std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?)?,
            None => Self::default(),
        };
        let bad = |k: &str, v: &str| Error::Config(format!("{k}={v} is invalid"));
        if let Some(v) = env(ENV_BIND) {
            cfg.bind = v.parse().map_err(|_| bad(ENV_BIND, &v))?;
        }
        if let Some(v) = env(ENV_CHECKPOINT) {
            cfg.checkpoint = (!v.is_empty()).then(|| PathBuf::from(v));
        }
        if let Some(v) = env(ENV_SESSION_TTL) {
            cfg.session_ttl_secs = v.parse().map_err(|_| bad(ENV_SESSION_TTL, &v))?;
        }
        if let Some(v) = env(ENV_SESSION_DIR) {
            cfg.session_dir = (!v.is_empty()).then(|| PathBuf::from(v));
        }
        if let Some(v) = env(ENV_MAX_BODY) {
            cfg.max_body_bytes = v.parse().map_err(|_| bad(ENV_MAX_BODY, &v))?;
        }
        Ok(cfg)
    }

    pub fn from_env(path: Option<&Path>) -> Result<Self> {
        Self::load(path, |k| std::env::var(k).ok())
    }

    pub fn ttl(&self) -> Duration {
        Duration::from_secs(self.session_ttl_secs)
    }
}
