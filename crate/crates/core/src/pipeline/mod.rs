//! End-to-end retrieval runs: decomposition, first-stage retrieval, fusion,
//! rerank injection, and optional evaluation, ablation and evidence
//! filtering, with every stage written to disk next to a manifest.
//!
//! Output directory layout:
//!
//! | file                     | content                                       |
//! |--------------------------|-----------------------------------------------|
//! | `subqueries.jsonl`       | sub-query map used for the run                |
//! | `decompositions.jsonl`   | decomposer results (only when decomposing)    |
//! | `stage1_subquery.run`    | first-stage lists, keyed by sub-query id      |
//! | `stage2_fused.run`       | fused lists                                   |
//! | `stage3_reranked.run`    | fused lists after rerank injection            |
//! | `eval.jsonl`             | report records for stages 2 and 3 (qrels)     |
//! | `ablation.json`          | sub-query drop ablation (qrels + keep counts) |
//! | `evidence_kept.jsonl`    | evidence at or above the threshold            |
//! | `evidence_audit.jsonl`   | one audit record per dropped artifact         |
//! | `manifest.json`          | config echo, seeds, input and output digests  |
//!
//! No file carries a timestamp, so identical inputs give identical bytes.

mod clients;
mod config;
mod decompose;
mod rerank;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::thread;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use clients::{
    Decomposer, HttpDecomposer, HttpEndpoint, HttpReranker, HttpRetriever, ReplayDecomposer, ReplayReranker,
    ReplayRetriever, Reranker, Retriever,
};
pub use config::{ConfigFile, Endpoints, Inputs, PipelineConfig, Service, ENDPOINT_ENV};
pub use decompose::{
    decompose, parse_decomposition, sub_query_id, to_subquery_map, DecompositionResult, QueryRecord,
    MAX_SUB_QUERIES,
};
pub use rerank::inject_rerank;

use crate::ablation::{run_ablation, AblationConfig, AblationReport};
use crate::error::{Error, Result};
use crate::evidence::{filter_by_threshold, parse_evidence_jsonl, write_evidence_jsonl, CalibratedArtifact};
use crate::fusion::{fuse, gather_input};
use crate::metrics::{evaluate, write_report_records, EvalReport};
use crate::ranked::{parse_qrels, parse_run, parse_subquery_map, write_run, write_subquery_map, Qrels, RunSet, SubQuery, SubQueryMap};

pub const SUBQUERY_FILE: &str = "subqueries.jsonl";
pub const DECOMPOSITION_FILE: &str = "decompositions.jsonl";
pub const STAGE1_FILE: &str = "stage1_subquery.run";
pub const STAGE2_FILE: &str = "stage2_fused.run";
pub const STAGE3_FILE: &str = "stage3_reranked.run";
pub const EVAL_FILE: &str = "eval.jsonl";
pub const ABLATION_FILE: &str = "ablation.json";
pub const EVIDENCE_KEPT_FILE: &str = "evidence_kept.jsonl";
pub const EVIDENCE_AUDIT_FILE: &str = "evidence_audit.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Where the sub-query map comes from.
pub enum Decomposition {
    Map(SubQueryMap),
    Live {
        queries: Vec<QueryRecord>,
        client: Box<dyn Decomposer>,
    },
}

/// Everything a run consumes, already loaded.
pub struct Stages {
    pub decomposition: Decomposition,
    pub retriever: Box<dyn Retriever>,
    pub reranker: Option<Box<dyn Reranker>>,
    pub qrels: Option<Qrels>,
    pub evidence: Option<Vec<CalibratedArtifact>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub name: String,
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputDigest {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Toolkit {
    pub name: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunStats {
    pub queries: usize,
    pub sub_queries: usize,
    pub fallbacks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub toolkit: Toolkit,
    pub config: ConfigFile,
    pub seeds: Vec<u64>,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<OutputDigest>,
    pub stats: RunStats,
}

impl Manifest {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        Ok(serde_json::from_slice(bytes)?)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub sub_map: SubQueryMap,
    pub decompositions: Vec<DecompositionResult>,
    pub stage1: RunSet,
    pub fused: RunSet,
    pub reranked: RunSet,
    pub eval: Vec<EvalReport>,
    pub ablation: Option<AblationReport>,
    pub manifest: Manifest,
    pub out_dir: PathBuf,
}

fn read_input(config: &PipelineConfig, name: &'static str, rel: &str, digests: &mut Vec<InputDigest>) -> Result<Vec<u8>> {
    let bytes = fs::read(config.resolve(rel))
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("input {name} ({rel}): {e}"))))?;
    digests.push(InputDigest {
        name: name.to_owned(),
        path: rel.to_owned(),
        sha256: sha256_hex(&bytes),
    });
    Ok(bytes)
}

impl Stages {
    /// Loads fixtures and builds clients as the config directs. Returns the
    /// digests of every file read.
    pub fn from_config(config: &PipelineConfig) -> Result<(Stages, Vec<InputDigest>)> {
        let inputs = &config.inputs;
        let mut digests = Vec::new();
        let load = |name, rel: &Option<String>, digests: &mut Vec<InputDigest>| -> Result<Option<Vec<u8>>> {
            rel.as_deref().map(|r| read_input(config, name, r, digests)).transpose()
        };
        let in_stage = |stage: &'static str| move |e: Error| e.in_stage(stage, None);

        let queries = load("queries", &inputs.queries, &mut digests)?;
        let map = load("subqueries", &inputs.subqueries, &mut digests)?;
        let replays = load("decompositions", &inputs.decompositions, &mut digests)?;
        let decomposition = match (map, queries) {
            (Some(bytes), _) => Decomposition::Map(parse_subquery_map(&bytes).map_err(in_stage("decompose"))?),
            (None, Some(q)) => {
                let queries = QueryRecord::parse_jsonl(&q).map_err(in_stage("decompose"))?;
                let client: Box<dyn Decomposer> = match (replays, config.endpoints.get(Service::Decomposer)) {
                    (Some(bytes), _) => Box::new(ReplayDecomposer::parse_jsonl(&bytes).map_err(in_stage("decompose"))?),
                    (None, Some(url)) => Box::new(HttpDecomposer(HttpEndpoint::new(url))),
                    (None, None) => {
                        return Err(Error::Config(
                            "decomposition needs inputs.decompositions or endpoints.decomposer".into(),
                        ))
                    }
                };
                Decomposition::Live { queries, client }
            }
            (None, None) => return Err(Error::Config("set inputs.subqueries or inputs.queries".into())),
        };

        let retriever: Box<dyn Retriever> = match (
            load("sub_runs", &inputs.sub_runs, &mut digests)?,
            config.endpoints.get(Service::Retriever),
        ) {
            (Some(bytes), _) => Box::new(ReplayRetriever::new(parse_run(&bytes).map_err(in_stage("retrieve"))?)),
            (None, Some(url)) => Box::new(HttpRetriever(HttpEndpoint::new(url))),
            (None, None) => return Err(Error::Config("set inputs.sub_runs or endpoints.retriever".into())),
        };

        let reranker: Option<Box<dyn Reranker>> = match (
            load("rerank", &inputs.rerank, &mut digests)?,
            config.endpoints.get(Service::Reranker),
        ) {
            (Some(bytes), _) => Some(Box::new(ReplayReranker::new(parse_run(&bytes).map_err(in_stage("rerank"))?))),
            (None, Some(url)) => Some(Box::new(HttpReranker(HttpEndpoint::new(url)))),
            (None, None) => None,
        };

        let qrels = load("qrels", &inputs.qrels, &mut digests)?
            .map(|b| parse_qrels(&b).map_err(in_stage("evaluate")))
            .transpose()?;
        let evidence = load("evidence", &inputs.evidence, &mut digests)?
            .map(|b| parse_evidence_jsonl(&b).map_err(|e| Error::from(e).in_stage("filter", None)))
            .transpose()?;

        Ok((
            Stages {
                decomposition,
                retriever,
                reranker,
                qrels,
                evidence,
            },
            digests,
        ))
    }
}

/// Applies `f` to every item on a few scoped threads, keeping input order.
/// The first error in input order wins.
fn ordered_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> Result<U> + Sync) -> Result<Vec<U>> {
    let workers = thread::available_parallelism().map_or(1, |n| n.get()).min(8);
    if workers <= 1 || items.len() < 2 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(workers);
    let f = &f;
    thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| s.spawn(move || part.iter().map(f).collect::<Vec<_>>()))
            .collect();
        let mut out = Vec::with_capacity(items.len());
        for h in handles {
            for r in h.join().expect("pipeline worker panicked") {
                out.push(r?);
            }
        }
        Ok(out)
    })
}

/// Runs every stage and writes the outputs and manifest into `out_dir`.
pub fn run_retrieval_pipeline(
    config: &PipelineConfig,
    stages: &Stages,
    inputs: Vec<InputDigest>,
    out_dir: &Path,
) -> Result<PipelineOutput> {
    fs::create_dir_all(out_dir)?;

    let (sub_map, decompositions) = match &stages.decomposition {
        Decomposition::Map(map) => (map.clone(), Vec::new()),
        Decomposition::Live { queries, client } => {
            let results = ordered_map(queries, |q| {
                decompose(q, client.as_ref()).map_err(|e| e.in_stage("decompose", Some(q.query_id.as_str())))
            })?;
            (to_subquery_map(&results).map_err(|e| e.in_stage("decompose", None))?, results)
        }
    };

    let subs: Vec<&SubQuery> = sub_map.iter().flat_map(|(_, g)| g.iter()).collect();
    let lists = ordered_map(&subs, |sub| {
        stages
            .retriever
            .retrieve(sub, config.first_stage_depth)
            .map_err(|e| e.in_stage("retrieve", Some(sub.id.as_str())))
    })?;
    let mut stage1 = RunSet::new("stage1");
    for (sub, list) in subs.iter().zip(lists) {
        stage1.insert(sub.id.clone(), list);
    }

    let mut fused = RunSet::new(config.strategy.to_string());
    for (query, _) in sub_map.iter() {
        let list = gather_input(&sub_map, &stage1, query)
            .and_then(|input| fuse(&input, config.strategy, config.first_stage_depth))
            .map_err(|e| e.in_stage("fuse", Some(query.as_str())))?;
        fused.insert(query.clone(), list);
    }

    let mut rerank_scores = RunSet::new("rerank");
    if let Some(reranker) = &stages.reranker {
        let queries: Vec<_> = fused.iter().collect();
        let scored = ordered_map(&queries, |(query, list)| {
            let head: Vec<_> = list.docs().take(config.rerank_depth).cloned().collect();
            reranker
                .rerank(query, &head)
                .map_err(|e| e.in_stage("rerank", Some(query.as_str())))
        })?;
        for ((query, _), scores) in queries.iter().zip(scored) {
            rerank_scores.insert((*query).clone(), scores);
        }
    }
    let mut reranked = inject_rerank(&fused, &rerank_scores, config.rerank_depth)?;
    reranked.tag = format!("{}+rerank", fused.tag);

    let mut files: Vec<(&'static str, Vec<u8>)> = vec![(SUBQUERY_FILE, write_subquery_map(&sub_map))];
    if !decompositions.is_empty() {
        let mut jsonl = Vec::new();
        for r in &decompositions {
            serde_json::to_writer(&mut jsonl, r)?;
            jsonl.push(b'\n');
        }
        files.push((DECOMPOSITION_FILE, jsonl));
    }
    files.push((STAGE1_FILE, write_run(&stage1, config.first_stage_depth)));
    files.push((STAGE2_FILE, write_run(&fused, config.first_stage_depth)));
    files.push((STAGE3_FILE, write_run(&reranked, config.first_stage_depth)));

    let mut eval = Vec::new();
    let mut ablation = None;
    if let Some(qrels) = &stages.qrels {
        for run in [&fused, &reranked] {
            eval.push(evaluate(run, qrels, &config.cutoffs).map_err(|e| e.in_stage("evaluate", None))?);
        }
        files.push((EVAL_FILE, write_report_records(&eval, true)));
        if !config.ablation_keep.is_empty() {
            let ab_config = AblationConfig::new(
                config.ablation_keep.clone(),
                config.seeds.clone(),
                config.strategy,
                config.first_stage_depth,
            )?;
            let report = run_ablation(&sub_map, &stage1, qrels, &ab_config, &config.cutoffs)
                .map_err(|e| e.in_stage("ablate", None))?;
            let mut json = serde_json::to_vec_pretty(&report)?;
            json.push(b'\n');
            files.push((ABLATION_FILE, json));
            ablation = Some(report);
        }
    }

    if let Some(evidence) = &stages.evidence {
        let outcome = filter_by_threshold(evidence.clone(), config.filter_threshold, &config.calibration_backend)
            .map_err(|e| Error::from(e).in_stage("filter", None))?;
        files.push((EVIDENCE_KEPT_FILE, write_evidence_jsonl(&outcome.kept)));
        files.push((EVIDENCE_AUDIT_FILE, outcome.audit_jsonl()));
    }

    let mut outputs = Vec::with_capacity(files.len());
    for (name, bytes) in &files {
        write_atomic(&out_dir.join(name), bytes).map_err(|e| e.in_stage("write", None))?;
        outputs.push(OutputDigest {
            file: (*name).to_owned(),
            sha256: sha256_hex(bytes),
        });
    }

    let manifest = Manifest {
        toolkit: Toolkit {
            name: env!("CARGO_PKG_NAME").to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
        },
        config: config.to_file(),
        seeds: config.seeds.clone(),
        inputs,
        outputs,
        stats: RunStats {
            queries: sub_map.len(),
            sub_queries: sub_map.total(),
            fallbacks: decompositions.iter().filter(|d| d.fallback_used).count(),
        },
    };
    write_atomic(&out_dir.join(MANIFEST_FILE), manifest.to_json().as_bytes()).map_err(|e| e.in_stage("write", None))?;

    Ok(PipelineOutput {
        sub_map,
        decompositions,
        stage1,
        fused,
        reranked,
        eval,
        ablation,
        manifest,
        out_dir: out_dir.to_path_buf(),
    })
}

/// Loads `config_path`, runs the pipeline into `out_dir`, and returns the
/// outputs.
pub fn run_from_config(config_path: &Path, out_dir: &Path) -> Result<PipelineOutput> {
    let config = PipelineConfig::load(config_path)?;
    let (stages, digests) = Stages::from_config(&config)?;
    run_retrieval_pipeline(&config, &stages, digests, out_dir)
}

/// Per-file digests of a manifest's outputs.
pub fn output_digests(manifest: &Manifest) -> BTreeMap<&str, &str> {
    manifest
        .outputs
        .iter()
        .map(|o| (o.file.as_str(), o.sha256.as_str()))
        .collect()
}
