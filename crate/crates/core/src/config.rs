//! TOML engine configuration.
//!
//! ```toml
//! fixtures = "fixtures.json"       # needed when any endpoint uses the fixture backend
//! routing_table = "routing.json"   # optional; the shipped table otherwise
//!
//! [pipeline]
//! region_concurrency = 8
//! image_concurrency = 4
//! fail_policy = "degrade"
//!
//! [geometry]
//! nms_iou_threshold = 0.75
//!
//! [endpoints.llm_compose]
//! backend = "remote"
//! base_url = "http://composer:8000"
//! model_name = "Qwen2-72B-AWQ"
//! ```
//!
//! Relative paths resolve against the config file's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use crate::geometry::GeometryConfig;
use crate::pipeline::{FailPolicy, PipelineConfig};
use crate::specialists::{
    FixtureError, FixtureStore, RoutingTable, SpecialistEndpoint, SpecialistError, SpecialistKind,
    Specialists,
};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("endpoint table {name:?}: {detail}")]
    Endpoint { name: String, detail: String },
    #[error("missing endpoint for {}", .0.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(", "))]
    MissingEndpoints(Vec<SpecialistKind>),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Fixtures(#[from] FixtureError),
    #[error("routing table: {0}")]
    Routing(String),
    #[error(transparent)]
    Specialist(#[from] SpecialistError),
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PipelineSection {
    region_concurrency: usize,
    image_concurrency: usize,
    fail_policy: FailPolicy,
}

impl Default for PipelineSection {
    fn default() -> Self {
        let d = PipelineConfig::default();
        PipelineSection {
            region_concurrency: d.region_concurrency,
            image_concurrency: d.image_concurrency,
            fail_policy: d.fail_policy,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    fixtures: Option<PathBuf>,
    routing_table: Option<PathBuf>,
    #[serde(default)]
    pipeline: PipelineSection,
    #[serde(default)]
    geometry: GeometryConfig,
    #[serde(default)]
    endpoints: BTreeMap<String, toml::Table>,
}

/// A loaded config file: the pipeline settings plus resolved asset paths.
#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub pipeline: PipelineConfig,
    pub fixtures: Option<PathBuf>,
    pub routing_table: Option<PathBuf>,
}

impl EngineConfig {
    /// Parses config text. Relative paths resolve against `base_dir`.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let file: ConfigFile = toml::from_str(text)?;
        let mut endpoints = BTreeMap::new();
        for (name, mut table) in file.endpoints {
            let kind: SpecialistKind = name.parse().map_err(|_| ConfigError::Endpoint {
                name: name.clone(),
                detail: "not a specialist kind".into(),
            })?;
            table.insert("kind".into(), toml::Value::String(name.clone()));
            let ep: SpecialistEndpoint = table.try_into().map_err(|e: toml::de::Error| ConfigError::Endpoint {
                name: name.clone(),
                detail: e.to_string(),
            })?;
            endpoints.insert(kind, ep);
        }
        let pipeline = PipelineConfig {
            geometry: file.geometry,
            endpoints,
            region_concurrency: file.pipeline.region_concurrency,
            image_concurrency: file.pipeline.image_concurrency,
            fail_policy: file.pipeline.fail_policy,
        };
        let resolve = |p: PathBuf| if p.is_absolute() { p } else { base_dir.join(p) };
        Ok(EngineConfig {
            pipeline,
            fixtures: file.fixtures.map(resolve),
            routing_table: file.routing_table.map(resolve),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        EngineConfig::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Checks that every kind has an endpoint and that settings are in range.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let missing = self.pipeline.missing_endpoints();
        if !missing.is_empty() {
            return Err(ConfigError::MissingEndpoints(missing));
        }
        self.pipeline
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        for (kind, ep) in &self.pipeline.endpoints {
            if ep.backend == crate::specialists::Backend::Remote && ep.base_url.is_none() {
                return Err(ConfigError::Invalid(format!(
                    "endpoint {kind}: remote backend requires base_url"
                )));
            }
        }
        let needs_fixtures = self
            .pipeline
            .endpoints
            .values()
            .any(|e| e.backend == crate::specialists::Backend::Fixture);
        if needs_fixtures && self.fixtures.is_none() {
            return Err(ConfigError::Invalid(
                "fixture endpoints configured but no `fixtures` file given".into(),
            ));
        }
        Ok(())
    }

    pub fn load_fixtures(&self) -> Result<Option<Arc<FixtureStore>>, ConfigError> {
        match &self.fixtures {
            Some(p) => Ok(Some(Arc::new(FixtureStore::load(p)?))),
            None => Ok(None),
        }
    }

    pub fn load_routing(&self) -> Result<RoutingTable, ConfigError> {
        match &self.routing_table {
            Some(p) => RoutingTable::load(p).map_err(|e| ConfigError::Routing(e.to_string())),
            None => Ok(RoutingTable::shipped().clone()),
        }
    }

    /// Builds clients for every configured endpoint.
    pub fn specialists(&self) -> Result<Specialists, ConfigError> {
        let fixtures = self.load_fixtures()?;
        Ok(Specialists::from_endpoints(
            self.pipeline.endpoints.values(),
            fixtures.as_ref(),
        )?)
    }
}
