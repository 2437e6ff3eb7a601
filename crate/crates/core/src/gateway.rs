//! Shared gateway state: the ObsCore catalog snapshot, the provenance store
//! and the data directory, with the persistence rules every front end uses.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use serde::Deserialize;
use thiserror::Error;

use crate::adql::{evaluate, parse_query, AdqlError, QueryResult};
use crate::dl3::{read_dl3_bytes, validate_dl3, Dl3Error, Finding, Severity};
use crate::obscore::{load_catalog_file, save_catalog_file, to_obscore, write_atomic, Catalog, ObsCoreConfig, ObsCoreError};
use crate::processing::{self, data_path, ActivityRegistry, CommitContext, ProcessingError, RunOutcome};
use crate::provenance::{decode_cards, extract_on_top, load_store_file, save_store_file, ProvEntity, ProvError, ProvGraph};

pub const DEFAULT_MAXREC: usize = 10_000;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("DL3 validation failed: {}", .0.iter().map(|f| format!("{}: {}", f.field, f.message)).collect::<Vec<_>>().join("; "))]
    Validation(Vec<Finding>),
    #[error(transparent)]
    Dl3(#[from] Dl3Error),
    #[error(transparent)]
    ObsCore(#[from] ObsCoreError),
    #[error(transparent)]
    Prov(#[from] ProvError),
    #[error(transparent)]
    Processing(#[from] ProcessingError),
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> GatewayError {
    GatewayError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    pub catalog_path: PathBuf,
    pub store_path: PathBuf,
    pub data_dir: PathBuf,
    /// Public URL of the service root; `access_url`s point at `{base_url}/data`.
    pub base_url: String,
    /// Address `serve` binds to.
    pub host: String,
    pub port: u16,
    pub authority: String,
    pub collection: String,
    pub title: String,
    pub facility: String,
    pub instrument: String,
    pub e_min: f64,
    pub e_max: f64,
    pub fov: f64,
    /// Agent recorded for runs that do not name one.
    pub agent: String,
    pub workflow: Option<String>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        let o = ObsCoreConfig::default();
        GatewayConfig {
            catalog_path: "gateway-data/catalog.jsonl".into(),
            store_path: "gateway-data/provenance.json".into(),
            data_dir: "gateway-data/files".into(),
            base_url: "http://localhost:8080".into(),
            host: "127.0.0.1".into(),
            port: 8080,
            authority: o.authority,
            collection: o.collection,
            title: "Gamma-ray DL3 gateway".into(),
            facility: o.facility,
            instrument: o.instrument,
            e_min: o.e_min,
            e_max: o.e_max,
            fov: o.fov,
            agent: "gateway".into(),
            workflow: None,
        }
    }
}

impl GatewayConfig {
    pub fn validate(&self) -> Result<(), GatewayError> {
        for (name, p) in [
            ("catalog_path", &self.catalog_path),
            ("store_path", &self.store_path),
            ("data_dir", &self.data_dir),
        ] {
            if p.as_os_str().is_empty() {
                return Err(GatewayError::InvalidConfig(format!("{name} is empty")));
            }
        }
        if self.port == 0 {
            return Err(GatewayError::InvalidConfig("port must be in 1..=65535".into()));
        }
        if self.agent.is_empty() {
            return Err(GatewayError::InvalidConfig("agent is empty".into()));
        }
        self.obscore().validate()?;
        Ok(())
    }

    pub fn obscore(&self) -> ObsCoreConfig {
        ObsCoreConfig {
            collection: self.collection.clone(),
            authority: self.authority.clone(),
            access_base_url: format!("{}/data", self.base_url.trim_end_matches('/')),
            e_min: self.e_min,
            e_max: self.e_max,
            fov: self.fov,
            facility: self.facility.clone(),
            instrument: self.instrument.clone(),
            target_name: None,
        }
    }
}

/// Ids become file names, so they are limited to a safe alphabet.
pub fn check_id(id: &str) -> Result<(), GatewayError> {
    let ok = !id.is_empty()
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'));
    if ok {
        Ok(())
    } else {
        Err(GatewayError::Invalid(format!(
            "id {id:?} must be non-empty, not start with '.', and use only A-Z a-z 0-9 . _ -"
        )))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestReport {
    pub obs_id: String,
    pub warnings: Vec<Finding>,
    /// True when a record with the same DID was replaced.
    pub replaced: bool,
}

/// Catalog and store behind locks. Queries work on an `Arc` snapshot of the
/// catalog; mutations build a new catalog and swap it in, so readers never see
/// a partial update. The store lock is taken first and serialises writers.
#[derive(Debug)]
pub struct Gateway {
    config: GatewayConfig,
    obscore: ObsCoreConfig,
    registry: ActivityRegistry,
    catalog: RwLock<Arc<Catalog>>,
    store: RwLock<ProvGraph>,
}

impl Gateway {
    /// Loads catalog and store from their files; missing files start empty.
    pub fn open(config: GatewayConfig) -> Result<Self, GatewayError> {
        config.validate()?;
        let catalog = load_catalog_file(&config.catalog_path)?;
        let store = load_store_file(&config.store_path)?;
        Ok(Gateway {
            obscore: config.obscore(),
            config,
            registry: ActivityRegistry::builtin(),
            catalog: RwLock::new(Arc::new(catalog)),
            store: RwLock::new(store),
        })
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn registry(&self) -> &ActivityRegistry {
        &self.registry
    }

    pub fn catalog(&self) -> Arc<Catalog> {
        self.catalog.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn store(&self) -> ProvGraph {
        self.store.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn with_store<T>(&self, f: impl FnOnce(&ProvGraph) -> T) -> T {
        f(&self.store.read().unwrap_or_else(|e| e.into_inner()))
    }

    pub fn query(&self, adql: &str, maxrec: Option<usize>) -> Result<QueryResult, AdqlError> {
        let q = parse_query(adql)?;
        evaluate(&q, &self.catalog(), maxrec)
    }

    /// Re-reads the catalog file and swaps it in as one step.
    pub fn reload(&self) -> Result<usize, GatewayError> {
        let _store = self.store.write().unwrap_or_else(|e| e.into_inner());
        let fresh = load_catalog_file(&self.config.catalog_path)?;
        let n = fresh.len();
        *self.catalog.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(fresh);
        Ok(n)
    }

    /// Stored file for `id`, if the id is catalogued or known to the store.
    pub fn data_file(&self, id: &str) -> Option<PathBuf> {
        check_id(id).ok()?;
        let known = self.catalog().find_obs_id(id).is_some()
            || self.with_store(|g| g.entities.get(id).is_some_and(|e| !e.is_stub()));
        let path = data_path(&self.config.data_dir, id);
        (known && path.is_file()).then_some(path)
    }

    pub fn ingest_file(&self, path: &Path) -> Result<IngestReport, GatewayError> {
        let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
        self.ingest_bytes(&bytes)
    }

    /// Parses, validates and catalogues one DL3 file, copies it into the data
    /// directory and merges its embedded last step into the store.
    pub fn ingest_bytes(&self, bytes: &[u8]) -> Result<IngestReport, GatewayError> {
        let obs = read_dl3_bytes(bytes)?;
        let findings = validate_dl3(&obs);
        let (errors, warnings): (Vec<_>, Vec<_>) = findings.into_iter().partition(|f| f.severity == Severity::Error);
        if !errors.is_empty() {
            return Err(GatewayError::Validation(errors));
        }
        check_id(&obs.obs_id)?;
        if let Some(step) = decode_cards(&obs.extra_cards)? {
            if step.entity_id != obs.obs_id {
                return Err(GatewayError::Invalid(format!(
                    "PRVENTID {} does not match OBS_ID {}",
                    step.entity_id, obs.obs_id
                )));
            }
        }
        let record = to_obscore(&obs, &self.obscore)?;
        let target = data_path(&self.config.data_dir, &obs.obs_id);

        let mut fragment = extract_on_top(&obs.extra_cards)?;
        let location = target.display().to_string();
        match fragment.entities.get_mut(&obs.obs_id) {
            Some(e) => e.location = Some(location),
            None => {
                fragment.entities.insert(
                    obs.obs_id.clone(),
                    ProvEntity {
                        location: Some(location),
                        ..ProvEntity::new(obs.obs_id.clone(), obs.obs_id.clone())
                    },
                );
            }
        }

        let mut store = self.store.write().unwrap_or_else(|e| e.into_inner());
        let mut graph = store.clone();
        graph.merge(&fragment)?;
        let mut catalog = Catalog::clone(&self.catalog());
        let replaced = catalog.get(&record.obs_publisher_did).is_some();
        catalog.ingest(record);

        let previous = std::fs::read(&target).ok();
        write_atomic(&target, bytes).map_err(|e| io_err(&target, e))?;
        if let Err(e) = self.persist(&catalog, &graph) {
            match previous {
                Some(old) => {
                    let _ = write_atomic(&target, &old);
                }
                None => {
                    let _ = std::fs::remove_file(&target);
                }
            }
            return Err(e);
        }
        *store = graph;
        *self.catalog.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(catalog);
        Ok(IngestReport {
            obs_id: obs.obs_id,
            warnings,
            replaced,
        })
    }

    /// Runs a registered activity: the transform runs without locks, the
    /// commit (ids, files, catalog, store, persistence) under the store lock.
    pub fn run(
        &self,
        activity: &str,
        parameters: BTreeMap<String, String>,
        inputs: &[String],
        agent: Option<&str>,
    ) -> Result<RunOutcome, GatewayError> {
        let agent = agent.unwrap_or(&self.config.agent);
        if agent.is_empty() {
            return Err(GatewayError::Invalid("empty agent".into()));
        }
        let prepared = processing::execute(
            &self.registry,
            &self.catalog(),
            &self.config.data_dir,
            activity,
            parameters,
            inputs,
        )?;

        let mut store = self.store.write().unwrap_or_else(|e| e.into_inner());
        let mut graph = store.clone();
        let mut catalog = Catalog::clone(&self.catalog());
        let ctx = CommitContext {
            data_dir: &self.config.data_dir,
            obscore: &self.obscore,
            agent,
            workflow: self.config.workflow.clone(),
            instrument: Some(self.config.instrument.clone()),
        };
        let outcome = processing::commit(&self.registry, prepared, &mut graph, &mut catalog, &ctx)?;
        if let Err(e) = self.persist(&catalog, &graph) {
            for f in &outcome.files {
                let _ = std::fs::remove_file(f);
            }
            return Err(e);
        }
        *store = graph;
        *self.catalog.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(catalog);
        Ok(outcome)
    }

    fn persist(&self, catalog: &Catalog, store: &ProvGraph) -> Result<(), GatewayError> {
        save_catalog_file(catalog, &self.config.catalog_path)?;
        save_store_file(store, &self.config.store_path)?;
        Ok(())
    }
}
