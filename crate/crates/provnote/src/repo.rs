//! On-disk repository of one site: configuration, data model, keys, fabric,
//! provenance store and journal.

use std::fs::File;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ed25519_dalek::VerifyingKey;
use provnote_core::glp::{default_glp_spec, DataModelSpec};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fabric::FabricRepo;
use crate::files::{read_json, system_clock, write_json_atomic, Clock};
use crate::journal::Journal;
use crate::keys::{load_registry, save_registry, Identity};
use crate::notebook::Notebook;
use crate::provenance::LocalProvenance;

pub const CONFIG_FILE: &str = "config.json";
pub const LOCK_FILE: &str = "repo.lock";
pub const DEFAULT_LISTEN: &str = "127.0.0.1:7420";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Config {
    pub site_id: String,
    pub listen: String,
    #[serde(default)]
    pub peers: Vec<String>,
    /// Relative paths are resolved against the repository root.
    pub key_registry: PathBuf,
    pub spec: PathBuf,
    pub identity: PathBuf,
    #[serde(default = "default_sync_interval")]
    pub sync_interval_secs: u64,
}

fn default_sync_interval() -> u64 {
    30
}

impl Config {
    pub fn new(site_id: &str) -> Self {
        Config {
            site_id: site_id.into(),
            listen: DEFAULT_LISTEN.into(),
            peers: Vec::new(),
            key_registry: "keys.json".into(),
            spec: "glp-spec.json".into(),
            identity: "identity.json".into(),
            sync_interval_secs: default_sync_interval(),
        }
    }
}

pub struct Repository {
    root: PathBuf,
    _lock: File,
    pub config: Config,
    pub identity: Identity,
    pub notebook: Arc<Notebook>,
}

impl Repository {
    /// Creates a repository with the default data model and a fresh
    /// identity for `dn`, registered in the key registry.
    pub fn init(root: &Path, dn: &str, site_id: &str) -> Result<Self> {
        if root.join(CONFIG_FILE).exists() {
            return Err(Error::InvalidArgument(format!(
                "{} already holds a repository",
                root.display()
            )));
        }
        let config = Config::new(site_id);
        write_json_atomic(&root.join(&config.spec), &default_glp_spec())?;
        let identity = Identity::generate(dn);
        identity.save(&root.join(&config.identity))?;
        let mut registry = load_registry(&root.join(&config.key_registry))?;
        registry.register(dn, &identity.secret_key.verifying_key());
        save_registry(&root.join(&config.key_registry), &registry)?;
        write_json_atomic(&root.join(CONFIG_FILE), &config)?;
        Self::open(root)
    }

    pub fn open(root: &Path) -> Result<Self> {
        Self::open_with_clock(root, system_clock())
    }

    pub fn open_with_clock(root: &Path, clock: Clock) -> Result<Self> {
        let config: Config = read_json(&root.join(CONFIG_FILE))?;
        let lock = File::create(root.join(LOCK_FILE))?;
        lock.try_lock().map_err(|_| {
            Error::InvalidArgument(format!("{} is in use by another process", root.display()))
        })?;
        let resolve = |p: &Path| {
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                root.join(p)
            }
        };
        let spec: DataModelSpec = read_json(&resolve(&config.spec))?;
        let keys = load_registry(&resolve(&config.key_registry))?;
        let identity = Identity::load(&resolve(&config.identity))?;
        let fabric = Arc::new(FabricRepo::open(
            &root.join("fabric"),
            &config.site_id,
            clock,
        )?);
        let provenance = Arc::new(LocalProvenance::open(
            &root.join("provenance").join("store.snap"),
        )?);
        let journal = Journal::open(&root.join("journal.log"))?;
        let notebook = Arc::new(Notebook::new(spec, fabric, provenance, journal, keys)?);
        Ok(Repository {
            root: root.into(),
            _lock: lock,
            config,
            identity,
            notebook,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    /// Registers a public key in the notebook and in the registry file.
    pub fn register_key(&self, dn: &str, key: &VerifyingKey) -> Result<()> {
        self.notebook.register_key(dn, key);
        save_registry(
            &self.resolve(&self.config.key_registry),
            &self.notebook.keys(),
        )
    }

    pub fn save_config(&self) -> Result<()> {
        Ok(write_json_atomic(
            &self.root.join(CONFIG_FILE),
            &self.config,
        )?)
    }
}
