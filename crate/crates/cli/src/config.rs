//! Settings from an optional TOML file, overridden by `ATLAS_*` environment
//! variables, overridden in turn by command-line flags.
//!
//! Environment keys map onto the file's keys: `ATLAS_SEED` sets `seed`, and a
//! double underscore descends into a table, so `ATLAS_SERVE__BIND` sets
//! `bind` under `[serve]`. Values are read as TOML scalars when they parse as
//! one and as plain strings otherwise.
//!
//! ```toml
//! backend = "toy"            # or "http:http://127.0.0.1:9000/embed"
//! dim = 512                  # required for http backends
//! backend_name = "clip-b32"  # name recorded in stores built over http
//! seed = 0
//! workers = 0                # 0 = all cores, 1 = sequential
//! batch_size = 64
//!
//! [serve]
//! bind = "127.0.0.1:8080"
//! cache_dir = ".atlas-cache"
//! corpora = [{ name = "paris", store = "paris.catl" }]
//!
//! [street]
//! endpoint = "https://maps.googleapis.com/maps/api/streetview"
//! api_key_env = "STREET_API_KEY"
//! size = [640, 640]
//! concurrency = 4
//! retry = { attempts = 3, initial_backoff_secs = 1.0, multiplier = 2.0 }
//! ```

use std::path::{Path, PathBuf};

use atlas_core::street::RetryPolicy;
use serde::{Deserialize, Serialize};

use crate::AppError;

pub const ENV_PREFIX: &str = "ATLAS_";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub backend: String,
    pub dim: Option<usize>,
    pub backend_name: Option<String>,
    pub seed: u64,
    pub workers: usize,
    pub batch_size: usize,
    pub serve: ServeConfig,
    pub street: StreetConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            backend: "toy".into(),
            dim: None,
            backend_name: None,
            seed: 0,
            workers: 0,
            batch_size: 64,
            serve: ServeConfig::default(),
            street: StreetConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeConfig {
    pub bind: String,
    pub cache_dir: PathBuf,
    pub corpora: Vec<CorpusEntry>,
}

impl Default for ServeConfig {
    fn default() -> Self {
        ServeConfig {
            bind: "127.0.0.1:8080".into(),
            cache_dir: PathBuf::from(".atlas-cache"),
            corpora: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusEntry {
    pub name: String,
    pub store: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StreetConfig {
    pub endpoint: String,
    pub api_key_env: String,
    pub size: (u32, u32),
    pub concurrency: usize,
    pub retry: RetryPolicy,
}

impl Default for StreetConfig {
    fn default() -> Self {
        StreetConfig {
            endpoint: "https://maps.googleapis.com/maps/api/streetview".into(),
            api_key_env: "STREET_API_KEY".into(),
            size: (640, 640),
            concurrency: 4,
            retry: RetryPolicy::default(),
        }
    }
}

impl Config {
    /// Reads `path` (if any) and applies overrides from `vars`.
    pub fn load<I>(path: Option<&Path>, vars: I) -> Result<Self, AppError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| AppError::Config(format!("reading {}: {e}", p.display())))?;
                text.parse::<toml::Table>()
                    .map_err(|e| AppError::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for (key, value) in vars {
            let Some(rest) = key.strip_prefix(ENV_PREFIX) else {
                continue;
            };
            let path: Vec<String> = rest.split("__").map(str::to_ascii_lowercase).collect();
            if path.iter().any(String::is_empty) {
                continue;
            }
            set_path(&mut table, &path, parse_scalar(&value))
                .map_err(|m| AppError::Config(format!("{key}: {m}")))?;
        }
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| AppError::Config(e.message().to_string()))
    }

    /// Reads `path` (if any) with overrides from the process environment.
    pub fn from_env(path: Option<&Path>) -> Result<Self, AppError> {
        Self::load(path, std::env::vars())
    }
}

fn parse_scalar(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(table: &mut toml::Table, path: &[String], value: toml::Value) -> Result<(), String> {
    let (last, parents) = path.split_last().expect("non-empty key path");
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| format!("{p} is not a table"))?;
    }
    cur.insert(last.clone(), value);
    Ok(())
}
