//! Service configuration: one TOML file, each key overridable from the
//! environment.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

pub const ENV_PREFIX: &str = "PATCHSWIPE_";

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub listen_addr: SocketAddr,
    pub blob_store_path: PathBuf,
    pub database_path: PathBuf,
    /// Largest accepted request body, in bytes. Applies to archive uploads.
    pub upload_cap_bytes: u64,
    pub token_ttl_secs: u64,
    /// Directory holding the built swipe UI, served at `/`.
    pub static_dir: Option<PathBuf>,
    /// Admin account created at startup if no user of that name exists.
    pub bootstrap_admin: Option<BootstrapAdmin>,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapAdmin {
    pub username: String,
    pub password: String,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            listen_addr: SocketAddr::from(([127, 0, 0, 1], 8080)),
            blob_store_path: PathBuf::from("data/blobs"),
            database_path: PathBuf::from("data/patchswipe.sqlite3"),
            upload_cap_bytes: 2 * 1024 * 1024 * 1024,
            token_ttl_secs: 12 * 60 * 60,
            static_dir: None,
            bootstrap_admin: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing {path}: {source}")]
    Parse {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("environment variable {name}: {message}")]
    Env { name: String, message: String },
}

impl Config {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|source| ConfigError::Parse {
            path: path.to_owned(),
            source,
        })
    }

    /// Reads `path` (defaults apply when it is `None`), then applies
    /// environment overrides.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let base = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                    path: p.to_owned(),
                    source,
                })?;
                Self::from_toml(&text, p)?
            }
            None => Self::default(),
        };
        base.with_env(|k| std::env::var(k).ok())
    }

    /// Applies `PATCHSWIPE_*` overrides read through `lookup`.
    pub fn with_env<F>(mut self, lookup: F) -> Result<Self, ConfigError>
    where
        F: Fn(&str) -> Option<String>,
    {
        let get = |key: &str| lookup(&format!("{ENV_PREFIX}{key}"));
        let bad = |key: &str, message: String| ConfigError::Env {
            name: format!("{ENV_PREFIX}{key}"),
            message,
        };

        if let Some(v) = get("LISTEN_ADDR") {
            self.listen_addr = v.parse().map_err(|e| bad("LISTEN_ADDR", format!("{e}")))?;
        }
        if let Some(v) = get("BLOB_STORE_PATH") {
            self.blob_store_path = v.into();
        }
        if let Some(v) = get("DATABASE_PATH") {
            self.database_path = v.into();
        }
        if let Some(v) = get("UPLOAD_CAP_BYTES") {
            self.upload_cap_bytes = v.parse().map_err(|e| bad("UPLOAD_CAP_BYTES", format!("{e}")))?;
        }
        if let Some(v) = get("TOKEN_TTL_SECS") {
            self.token_ttl_secs = v.parse().map_err(|e| bad("TOKEN_TTL_SECS", format!("{e}")))?;
        }
        if let Some(v) = get("STATIC_DIR") {
            self.static_dir = (!v.is_empty()).then(|| v.into());
        }
        match (get("ADMIN_USERNAME"), get("ADMIN_PASSWORD")) {
            (Some(username), Some(password)) => {
                self.bootstrap_admin = Some(BootstrapAdmin { username, password });
            }
            (None, None) => {}
            _ => {
                return Err(bad(
                    "ADMIN_USERNAME",
                    "ADMIN_USERNAME and ADMIN_PASSWORD must be set together".into(),
                ))
            }
        }
        Ok(self)
    }
}
