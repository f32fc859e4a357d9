//! JSON pipeline configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use vigil_core::annotate::LabellerConfig;
use vigil_core::bgsub::BgSubConfig;
use vigil_core::detect::{load_cascade, load_hog, ScanParams};
use vigil_core::ingest::FetcherConfig;
use vigil_core::pipeline::{PipelineSettings, SCALABLE_NODES};
use vigil_core::runtime::topology::{DEFAULT_MESSAGE_TIMEOUT_MS, DEFAULT_QUEUE_CAPACITY};
use vigil_core::sink::{ChunkerConfig, SinkConfig};

pub const WORKERS_ENV: &str = "VIGIL_WORKERS";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{}: cannot read: {reason}", path.display())]
    Read { path: PathBuf, reason: String },
    #[error("{}: {reason}", path.display())]
    Parse { path: PathBuf, reason: String },
    #[error("{}: {key}: {reason}", path.display())]
    Invalid { path: PathBuf, key: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct ScanSection {
    pub face: ScanParams,
    pub person: ScanParams,
}

impl Default for ScanSection {
    fn default() -> Self {
        ScanSection { face: ScanParams::face_defaults(), person: ScanParams::person_defaults() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct RuntimeSection {
    /// Per-node parallelism overrides, keyed by node id.
    pub parallelism: BTreeMap<String, usize>,
    pub message_timeout_ms: u64,
    pub queue_capacity: usize,
    /// Default parallelism of the scalable nodes.
    pub worker_count: usize,
}

impl Default for RuntimeSection {
    fn default() -> Self {
        RuntimeSection {
            parallelism: BTreeMap::new(),
            message_timeout_ms: DEFAULT_MESSAGE_TIMEOUT_MS,
            queue_capacity: DEFAULT_QUEUE_CAPACITY,
            worker_count: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub source: FetcherConfig,
    pub bgsub: BgSubConfig,
    pub face_model_path: PathBuf,
    pub person_model_path: PathBuf,
    pub scan: ScanSection,
    pub labeller: LabellerConfig,
    pub sink: SinkConfig,
    pub chunker: ChunkerConfig,
    pub runtime: RuntimeSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            source: FetcherConfig::default(),
            bgsub: BgSubConfig::default(),
            face_model_path: PathBuf::from("models/frontal_face.haar"),
            person_model_path: PathBuf::from("models/person.hog"),
            scan: ScanSection::default(),
            labeller: LabellerConfig::default(),
            sink: SinkConfig::default(),
            chunker: ChunkerConfig::default(),
            runtime: RuntimeSection::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str, path: &Path) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Parse { path: path.to_path_buf(), reason: e.to_string() })
    }

    /// Reads a config file. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Read { path: path.to_path_buf(), reason: e.to_string() })?;
        let mut cfg = Self::from_json(&text, path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [&mut self.source.path, &mut self.face_model_path, &mut self.person_model_path, &mut self.sink.out_root] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is always serializable")
    }

    /// Checks ranges and paths and loads the detector models.
    pub fn settings(&self, path: &Path) -> Result<PipelineSettings, ConfigError> {
        let invalid = |key: &str, reason: String| ConfigError::Invalid { path: path.to_path_buf(), key: key.to_string(), reason };
        self.source.validate().map_err(|e| invalid("source", e.to_string()))?;
        self.bgsub.validate().map_err(|e| invalid("bgsub", e.to_string()))?;
        self.scan.face.validate().map_err(|e| invalid("scan.face", e.to_string()))?;
        self.scan.person.validate().map_err(|e| invalid("scan.person", e.to_string()))?;
        self.chunker.frames_per_chunk().map_err(|e| invalid("chunker", e.to_string()))?;
        if self.labeller.join_timeout_ms == 0 {
            return Err(invalid("labeller.joinTimeoutMs", "must be positive".into()));
        }
        if self.runtime.worker_count == 0 {
            return Err(invalid("runtime.workerCount", "must be positive".into()));
        }
        for (node, &n) in &self.runtime.parallelism {
            if !SCALABLE_NODES.contains(&node.as_str()) {
                return Err(invalid(&format!("runtime.parallelism.{node}"), "not a node with adjustable parallelism".into()));
            }
            if n == 0 {
                return Err(invalid(&format!("runtime.parallelism.{node}"), "must be positive".into()));
            }
        }
        if !self.face_model_path.is_file() {
            return Err(invalid("faceModelPath", format!("{} does not exist", self.face_model_path.display())));
        }
        if !self.person_model_path.is_file() {
            return Err(invalid("personModelPath", format!("{} does not exist", self.person_model_path.display())));
        }
        let cascade = load_cascade(&self.face_model_path).map_err(|e| invalid("faceModelPath", e.to_string()))?;
        let person = load_hog(&self.person_model_path).map_err(|e| invalid("personModelPath", e.to_string()))?;
        Ok(PipelineSettings {
            fetcher: self.source.clone(),
            bgsub: self.bgsub.clone(),
            cascade: Arc::new(cascade),
            face_scan: self.scan.face,
            person_model: Arc::new(person),
            person_scan: self.scan.person,
            labeller: self.labeller.clone(),
            sink: self.sink.clone(),
            chunker: self.chunker.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = PipelineConfig::default();
        let back = PipelineConfig::from_json(&cfg.to_json(), Path::new("x")).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_document_gets_defaults() {
        let cfg = PipelineConfig::from_json(r#"{"bgsub": {"alpha": 0.1}}"#, Path::new("x")).unwrap();
        assert_eq!(cfg.bgsub.alpha, 0.1);
        assert_eq!(cfg.bgsub.diff_threshold, 25);
        assert_eq!(cfg.chunker, ChunkerConfig::default());
        assert!(PipelineConfig::from_json(r#"{"bogus": 1}"#, Path::new("x")).is_err());
    }
}
