use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ablation::KeepCount;
use crate::error::{Error, Result};
use crate::evidence::DEFAULT_BACKEND;
use crate::fusion::FusionStrategy;
use crate::metrics::Cutoffs;

/// Environment variables that override the configured endpoints.
pub const ENDPOINT_ENV: [(&str, Service); 3] = [
    ("SUBFUSE_DECOMPOSER_URL", Service::Decomposer),
    ("SUBFUSE_RETRIEVER_URL", Service::Retriever),
    ("SUBFUSE_RERANKER_URL", Service::Reranker),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Service {
    Decomposer,
    Retriever,
    Reranker,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Endpoints {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decomposer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retriever: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reranker: Option<String>,
}

impl Endpoints {
    pub fn get(&self, service: Service) -> Option<&str> {
        match service {
            Service::Decomposer => self.decomposer.as_deref(),
            Service::Retriever => self.retriever.as_deref(),
            Service::Reranker => self.reranker.as_deref(),
        }
    }

    fn slot(&mut self, service: Service) -> &mut Option<String> {
        match service {
            Service::Decomposer => &mut self.decomposer,
            Service::Retriever => &mut self.retriever,
            Service::Reranker => &mut self.reranker,
        }
    }
}

/// Input files, as written in the config (relative to the config file).
///
/// A fixture file, when present, wins over the matching endpoint.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    /// Query records (JSONL), needed when decomposing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub queries: Option<String>,
    /// A ready sub-query map (JSONL); skips decomposition.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subqueries: Option<String>,
    /// Recorded decomposer responses (JSONL).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decompositions: Option<String>,
    /// First-stage run keyed by sub-query id.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sub_runs: Option<String>,
    /// Rerank scores as a run file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rerank: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qrels: Option<String>,
    /// Calibrated evidence (JSONL) to filter at `filter_threshold`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence: Option<String>,
}

impl Inputs {
    /// `(name, relative path)` for every configured input, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, &str)> {
        [
            ("queries", &self.queries),
            ("subqueries", &self.subqueries),
            ("decompositions", &self.decompositions),
            ("sub_runs", &self.sub_runs),
            ("rerank", &self.rerank),
            ("qrels", &self.qrels),
            ("evidence", &self.evidence),
        ]
        .into_iter()
        .filter_map(|(name, path)| path.as_deref().map(|p| (name, p)))
        .collect()
    }
}

fn default_strategy() -> String {
    "rrf".into()
}
fn default_first_stage_depth() -> usize {
    1000
}
fn default_rerank_depth() -> usize {
    100
}
fn default_cutoffs() -> Vec<usize> {
    Cutoffs::standard().values().to_vec()
}
fn default_threshold() -> f64 {
    0.5
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_backend() -> String {
    DEFAULT_BACKEND.into()
}

/// The on-disk (TOML) shape of a pipeline configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default = "default_strategy")]
    pub strategy: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<i64>,
    #[serde(default = "default_first_stage_depth")]
    pub first_stage_depth: usize,
    #[serde(default = "default_rerank_depth")]
    pub rerank_depth: usize,
    #[serde(default = "default_cutoffs")]
    pub cutoffs: Vec<usize>,
    #[serde(default = "default_threshold")]
    pub filter_threshold: f64,
    #[serde(default = "default_backend")]
    pub calibration_backend: String,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub ablation_keep: Vec<KeepCount>,
    #[serde(default)]
    pub endpoints: Endpoints,
    #[serde(default)]
    pub inputs: Inputs,
}

/// A validated pipeline configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub strategy: FusionStrategy,
    pub first_stage_depth: usize,
    pub rerank_depth: usize,
    pub cutoffs: Cutoffs,
    pub filter_threshold: f64,
    pub calibration_backend: String,
    pub seeds: Vec<u64>,
    pub ablation_keep: Vec<KeepCount>,
    pub endpoints: Endpoints,
    pub inputs: Inputs,
    /// Directory that relative input paths resolve against.
    pub base_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::from_file(toml::from_str("").expect("empty config parses"), PathBuf::from("."))
            .expect("defaults are valid")
    }
}

impl PipelineConfig {
    pub fn from_file(file: ConfigFile, base_dir: PathBuf) -> Result<Self> {
        let strategy = FusionStrategy::from_parts(&file.strategy, file.k)?;
        if file.first_stage_depth == 0 || file.rerank_depth == 0 {
            return Err(Error::Config("depths must be positive".into()));
        }
        if file.rerank_depth > file.first_stage_depth {
            return Err(Error::Config(format!(
                "rerank_depth {} exceeds first_stage_depth {}",
                file.rerank_depth, file.first_stage_depth
            )));
        }
        if !(0.0..=1.0).contains(&file.filter_threshold) {
            return Err(Error::Config(format!(
                "filter_threshold {} is outside [0, 1]",
                file.filter_threshold
            )));
        }
        if file.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        Ok(Self {
            strategy,
            first_stage_depth: file.first_stage_depth,
            rerank_depth: file.rerank_depth,
            cutoffs: Cutoffs::new(file.cutoffs)?,
            filter_threshold: file.filter_threshold,
            calibration_backend: file.calibration_backend,
            seeds: file.seeds,
            ablation_keep: file.ablation_keep,
            endpoints: file.endpoints,
            inputs: file.inputs,
            base_dir,
        })
    }

    /// Parses TOML text; relative input paths resolve against `base_dir`.
    pub fn from_toml(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_file(file, base_dir.into())
    }

    /// Reads a config file and applies endpoint overrides from the
    /// environment.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut config = Self::from_toml(&text, base)?;
        config.apply_env(|name| std::env::var(name).ok());
        Ok(config)
    }

    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) {
        for (var, service) in ENDPOINT_ENV {
            if let Some(url) = lookup(var).filter(|u| !u.trim().is_empty()) {
                *self.endpoints.slot(service) = Some(url);
            }
        }
    }

    pub fn resolve(&self, relative: &str) -> PathBuf {
        self.base_dir.join(relative)
    }

    /// The configuration in its file shape, as echoed into manifests.
    pub fn to_file(&self) -> ConfigFile {
        ConfigFile {
            strategy: self.strategy.kind().to_owned(),
            k: self.strategy.k().map(i64::from),
            first_stage_depth: self.first_stage_depth,
            rerank_depth: self.rerank_depth,
            cutoffs: self.cutoffs.values().to_vec(),
            filter_threshold: self.filter_threshold,
            calibration_backend: self.calibration_backend.clone(),
            seeds: self.seeds.clone(),
            ablation_keep: self.ablation_keep.clone(),
            endpoints: self.endpoints.clone(),
            inputs: self.inputs.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = PipelineConfig::default();
        assert_eq!(c.strategy, FusionStrategy::Rrf { k: 60 });
        assert_eq!((c.first_stage_depth, c.rerank_depth), (1000, 100));
        assert_eq!(c.cutoffs, Cutoffs::standard());
        assert_eq!(c.filter_threshold, 0.5);
    }

    #[test]
    fn rerank_depth_bounded_by_first_stage() {
        let err = PipelineConfig::from_toml("first_stage_depth = 50\nrerank_depth = 100", ".").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(PipelineConfig::from_toml("filter_threshold = 1.5", ".").is_err());
        assert!(PipelineConfig::from_toml("strategy = \"rrf\"\nk = 0", ".").is_err());
        assert!(PipelineConfig::from_toml("depth = 3", ".").is_err());
    }

    #[test]
    fn env_overrides_endpoints() {
        let mut c = PipelineConfig::from_toml("[endpoints]\nretriever = \"http://a\"", ".").unwrap();
        c.apply_env(|v| (v == "SUBFUSE_RETRIEVER_URL").then(|| "http://b".to_owned()));
        assert_eq!(c.endpoints.retriever.as_deref(), Some("http://b"));
        assert_eq!(c.endpoints.decomposer, None);
    }

    #[test]
    fn file_round_trip() {
        let text = "strategy = \"max_sim\"\ncutoffs = [5, 10]\nseeds = [1, 2]\nablation_keep = [\"1\", \"all\"]\n[inputs]\nsub_runs = \"runs.txt\"\n";
        let c = PipelineConfig::from_toml(text, "/tmp/x").unwrap();
        assert_eq!(c.resolve("runs.txt"), PathBuf::from("/tmp/x/runs.txt"));
        let again = PipelineConfig::from_file(c.to_file(), c.base_dir.clone()).unwrap();
        assert_eq!(again, c);
    }
}
