//! Session configuration, read from TOML:
//!
//! ```toml
//! backend = "kv"                  # "kv" or "toc"
//! storage_root = "/data/fdb"      # engine root (embedded kv) or toc tree
//! pool = "default"
//! root_container = "root"
//! oid_batch_size = 64
//! engine_address = "127.0.0.1:7447"   # kv only: use a wire server instead of an embedded engine
//! axis_pruning = true
//! schema = "schema.txt"           # optional; relative paths resolve against the config file
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backends::{DEFAULT_OID_BATCH, DEFAULT_POOL, DEFAULT_ROOT_CONTAINER};
use crate::error::{Error, Result};
use crate::schema::Schema;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Kv,
    Toc,
}

impl std::str::FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kv" => Ok(BackendKind::Kv),
            "toc" => Ok(BackendKind::Toc),
            other => Err(Error::Config(format!("unknown backend `{other}` (expected kv or toc)"))),
        }
    }
}

impl std::fmt::Display for BackendKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BackendKind::Kv => "kv",
            BackendKind::Toc => "toc",
        })
    }
}

fn default_pool() -> String {
    DEFAULT_POOL.to_string()
}

fn default_root_container() -> String {
    DEFAULT_ROOT_CONTAINER.to_string()
}

fn default_batch() -> u64 {
    DEFAULT_OID_BATCH
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub backend: BackendKind,
    #[serde(default)]
    pub storage_root: Option<PathBuf>,
    #[serde(default = "default_pool")]
    pub pool: String,
    #[serde(default = "default_root_container")]
    pub root_container: String,
    #[serde(default = "default_batch")]
    pub oid_batch_size: u64,
    #[serde(default)]
    pub engine_address: Option<String>,
    #[serde(default = "yes")]
    pub axis_pruning: bool,
    #[serde(default)]
    pub schema: Option<PathBuf>,
}

impl Config {
    pub fn new(backend: BackendKind, storage_root: impl Into<PathBuf>) -> Self {
        Config {
            backend,
            storage_root: Some(storage_root.into()),
            pool: default_pool(),
            root_container: default_root_container(),
            oid_batch_size: DEFAULT_OID_BATCH,
            engine_address: None,
            axis_pruning: true,
            schema: None,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let c: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    /// Reads a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut c = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut c.storage_root, &mut c.schema].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serialisable")
    }

    pub fn validate(&self) -> Result<()> {
        if self.oid_batch_size == 0 {
            return Err(Error::Config("oid_batch_size must be positive".into()));
        }
        if self.pool.is_empty() || self.root_container.is_empty() {
            return Err(Error::Config("pool and root_container must be non-empty".into()));
        }
        match self.backend {
            BackendKind::Toc if self.engine_address.is_some() => {
                Err(Error::Config("engine_address only applies to the kv backend".into()))
            }
            BackendKind::Kv if self.engine_address.is_some() => Ok(()),
            _ if self.storage_root.is_none() => Err(Error::Config(format!(
                "backend {} needs storage_root",
                self.backend
            ))),
            _ => Ok(()),
        }
    }

    /// The schema named by the config, if any.
    pub fn load_schema(&self) -> Result<Option<Schema>> {
        let Some(path) = &self.schema else {
            return Ok(None);
        };
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read schema {}: {e}", path.display())))?;
        Ok(Some(Schema::parse(&text)?))
    }
}
