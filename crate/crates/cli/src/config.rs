use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const SEED_ENV: &str = "SCL_SEED";

/// Values from `--config file.json`; explicit flags take precedence.
#[derive(Debug, Default)]
pub struct FileConfig {
    values: Map<String, Value>,
    path: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {} is not valid JSON: {e}", path.display())))?;
        let Value::Object(values) = value else {
            return Err(CliError::Usage(format!("config {} must be a JSON object", path.display())));
        };
        Ok(FileConfig {
            values,
            path: Some(path.to_path_buf()),
        })
    }

    pub fn get<T: DeserializeOwned>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.values.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => serde_json::from_value(v.clone()).map(Some).map_err(|e| {
                let p = self.path.as_deref().map(|p| p.display().to_string()).unwrap_or_default();
                CliError::Usage(format!("config {p}: bad value for {key:?}: {e}"))
            }),
        }
    }

    /// Flag value, else config value, else `default`.
    pub fn pick<T: DeserializeOwned>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError> {
        Ok(match flag {
            Some(v) => v,
            None => self.get(key)?.unwrap_or(default),
        })
    }

    pub fn pick_opt<T: DeserializeOwned>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError> {
        Ok(match flag {
            Some(v) => Some(v),
            None => self.get(key)?,
        })
    }

    /// Seed from the flag, the config file or `SCL_SEED`, in that order.
    pub fn seed(&self, flag: Option<u64>) -> Result<Option<u64>, CliError> {
        if let Some(s) = self.pick_opt(flag, "seed")? {
            return Ok(Some(s));
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map(Some)
                .map_err(|_| CliError::Usage(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
            Err(_) => Ok(None),
        }
    }

    pub fn require_seed(&self, flag: Option<u64>, command: &str) -> Result<u64, CliError> {
        self.seed(flag)?
            .ok_or_else(|| CliError::Usage(format!("{command} requires --seed (or {SEED_ENV}, or \"seed\" in --config)")))
    }
}

/// Header attached to every output: tool version, seed and a hash of the
/// resolved configuration.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub config_hash: String,
}

impl Provenance {
    pub fn new<C: Serialize>(command: &str, seed: Option<u64>, resolved: &C) -> Self {
        let canonical = serde_json::to_string(resolved).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        Provenance {
            tool: "scl".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed,
            config_hash: hex::encode(digest),
        }
    }
}
