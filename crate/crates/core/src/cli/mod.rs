mod memory_repl;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use subfuse::ablation::{run_ablation, AblationConfig, KeepCount};
use subfuse::evidence::{attach, filter_by_threshold, parse_evidence_jsonl, write_evidence_jsonl, Prediction, DEFAULT_BACKEND};
use subfuse::fusion::{fuse_run_set, FusionStrategy};
use subfuse::metrics::{
    delta_report, evaluate_with, parse_report_records, render_delta_table, render_table, write_report_records, Cutoffs,
    EvalOptions, Gain, MismatchPolicy,
};
use subfuse::pipeline::{
    decompose, run_from_config, to_subquery_map, write_atomic, Decomposer, HttpDecomposer, HttpEndpoint, QueryRecord,
    ReplayDecomposer, MANIFEST_FILE,
};
use subfuse::ranked::{parse_qrels, parse_run, parse_subquery_map, write_run, write_subquery_map};
use subfuse::{Error, ErrorKind, Result};

pub const EXIT_VALIDATION: u8 = 1;
pub const EXIT_IO: u8 = 2;

/// Sub-query rank fusion, evaluation, evidence filtering and memory tools.
#[derive(Debug, Parser)]
#[command(name = "subfuse", version)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fuse per-sub-query runs into one run per original query.
    Fuse(FuseArgs),
    /// Reorder the head of a fused run by external rerank scores.
    RerankInject(RerankArgs),
    /// Score runs against qrels.
    Eval(EvalArgs),
    /// Percentage changes between report-record files.
    Delta(DeltaArgs),
    /// Random sub-query drop ablation.
    Ablate(AblateArgs),
    /// Evidence record tools.
    Claims {
        #[command(subcommand)]
        command: ClaimsCommand,
    },
    /// Apply memory-bank operators to a bank file.
    Memory(memory_repl::MemoryArgs),
    /// Run the whole retrieval pipeline from a config file.
    Pipeline(PipelineArgs),
    /// Decompose queries into sub-queries.
    Decompose(DecomposeArgs),
}

#[derive(Debug, Args)]
struct StrategyArgs {
    /// rrf, weighted_rrf, sum_sim, max_sim or mean_sim.
    #[arg(long, default_value = "rrf")]
    strategy: String,
    /// RRF smoothing constant.
    #[arg(long)]
    k: Option<i64>,
}

impl StrategyArgs {
    fn strategy(&self) -> Result<FusionStrategy> {
        FusionStrategy::from_parts(&self.strategy, self.k)
    }
}

#[derive(Debug, Args)]
struct FuseArgs {
    /// Sub-query map (JSONL).
    #[arg(long)]
    map: PathBuf,
    /// Run file keyed by sub-query id.
    #[arg(long)]
    runs: PathBuf,
    #[command(flatten)]
    strategy: StrategyArgs,
    /// Documents kept per fused list.
    #[arg(long, default_value_t = 1000)]
    depth: usize,
    /// Run tag; defaults to the strategy name.
    #[arg(long)]
    tag: Option<String>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RerankArgs {
    #[arg(long)]
    fused: PathBuf,
    /// Rerank scores as a run file.
    #[arg(long)]
    scores: PathBuf,
    #[arg(long, default_value_t = 100)]
    depth: usize,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GainArg {
    Exponential,
    Linear,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ReportFormat {
    Table,
    Jsonl,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// One or more run files.
    #[arg(long = "run", required = true)]
    runs: Vec<PathBuf>,
    #[arg(long)]
    qrels: PathBuf,
    #[arg(long, default_value = "10,20,100")]
    cutoffs: Cutoffs,
    #[arg(long, value_enum, default_value = "exponential")]
    gain: GainArg,
    /// Leave out run queries that have no judgments instead of failing.
    #[arg(long)]
    skip_unjudged: bool,
    /// Leave out queries with no relevant document instead of scoring 0.
    #[arg(long)]
    exclude_no_relevant: bool,
    #[arg(long, value_enum, default_value = "table")]
    format: ReportFormat,
    /// Include per-query rows in JSONL output.
    #[arg(long)]
    per_query: bool,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

impl EvalArgs {
    fn options(&self) -> EvalOptions {
        EvalOptions {
            on_mismatch: if self.skip_unjudged {
                MismatchPolicy::Skip
            } else {
                MismatchPolicy::Error
            },
            exclude_no_relevant: self.exclude_no_relevant,
            gain: match self.gain {
                GainArg::Exponential => Gain::Exponential,
                GainArg::Linear => Gain::Linear,
            },
        }
    }
}

#[derive(Debug, Args)]
struct DeltaArgs {
    /// Report records of the baseline run(s).
    #[arg(long)]
    baseline: PathBuf,
    /// Report records of the candidate runs. Paired with the baseline runs
    /// by order, or all against a single baseline run.
    #[arg(long)]
    candidate: PathBuf,
    #[arg(long, value_enum, default_value = "table")]
    format: ReportFormat,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AblateArgs {
    #[arg(long)]
    map: PathBuf,
    #[arg(long)]
    runs: PathBuf,
    #[arg(long)]
    qrels: PathBuf,
    /// Comma-separated keep counts; `all` for the full map.
    #[arg(long, value_delimiter = ',', default_value = "1,5,10,all")]
    keep: Vec<KeepCount>,
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    seeds: Vec<u64>,
    #[command(flatten)]
    strategy: StrategyArgs,
    #[arg(long, default_value_t = 1000)]
    depth: usize,
    #[arg(long, default_value = "10,20,100")]
    cutoffs: Cutoffs,
    /// Print the report as JSON instead of a table.
    #[arg(long)]
    json: bool,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum ClaimsCommand {
    /// Check every record of an evidence file.
    Validate { file: PathBuf },
    /// Attach calibration predictions to evidence records.
    Attach {
        #[arg(long)]
        evidence: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        /// Backend label for predictions that carry none.
        #[arg(long, default_value = DEFAULT_BACKEND)]
        backend: String,
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Write predictions that matched nothing here (JSONL).
        #[arg(long)]
        orphans: Option<PathBuf>,
        /// Write ids of artifacts that received no prediction here, one per line.
        #[arg(long)]
        unmatched: Option<PathBuf>,
    },
    /// Keep records whose support probability reaches a threshold.
    Filter {
        #[arg(long)]
        evidence: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long, default_value = DEFAULT_BACKEND)]
        backend: String,
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Write one audit record per dropped artifact here (JSONL).
        #[arg(long)]
        audit: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct PipelineArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory for stage files and the manifest.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct DecomposeArgs {
    /// Query records (JSONL).
    #[arg(long)]
    queries: PathBuf,
    /// Recorded decomposer responses (JSONL).
    #[arg(long, conflicts_with = "endpoint", required_unless_present = "endpoint")]
    replay: Option<PathBuf>,
    /// Decomposer URL.
    #[arg(long, env = "SUBFUSE_DECOMPOSER_URL")]
    endpoint: Option<String>,
    /// Write the resulting sub-query map here.
    #[arg(long)]
    map_out: Option<PathBuf>,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

pub(crate) fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

/// Writes to `out` atomically, or to standard output.
pub(crate) fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => write_atomic(path, bytes),
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn error_kind_name(kind: ErrorKind) -> &'static str {
    match kind {
        ErrorKind::Validation => "validation",
        ErrorKind::Io => "io",
    }
}

/// Prints a JSON error record on standard error and returns the exit code.
pub fn report_error(err: &Error) -> u8 {
    let mut record = json!({"error": error_kind_name(err.kind()), "message": err.to_string()});
    if let Error::Stage { stage, query, .. } = err {
        record["stage"] = json!(stage);
        if let Some(q) = query {
            record["query"] = json!(q);
        }
    }
    eprintln!("{record}");
    match err.kind() {
        ErrorKind::Validation => EXIT_VALIDATION,
        ErrorKind::Io => EXIT_IO,
    }
}

pub fn report_usage_error(err: &clap::Error) {
    let message = err.render().to_string();
    eprintln!("{}", json!({"error": "usage", "message": message.trim_end()}));
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fuse(a) => {
            let map = parse_subquery_map(&read(&a.map)?)?;
            let runs = parse_run(&read(&a.runs)?)?;
            let strategy = a.strategy.strategy()?;
            let tag = a.tag.unwrap_or_else(|| strategy.to_string());
            let fused = fuse_run_set(&map, &runs, strategy, a.depth, tag)?;
            emit(a.out.as_deref(), &write_run(&fused, a.depth))
        }
        Command::RerankInject(a) => {
            let fused = parse_run(&read(&a.fused)?)?;
            let scores = parse_run(&read(&a.scores)?)?;
            let out = subfuse::pipeline::inject_rerank(&fused, &scores, a.depth)?;
            emit(a.out.as_deref(), &write_run(&out, usize::MAX))
        }
        Command::Eval(a) => {
            let qrels = parse_qrels(&read(&a.qrels)?)?;
            let mut reports = Vec::new();
            for path in &a.runs {
                let run = parse_run(&read(path)?)?;
                reports.push(evaluate_with(&run, &qrels, &a.cutoffs, a.options())?);
            }
            let bytes = match a.format {
                ReportFormat::Table => render_table(&reports).into_bytes(),
                ReportFormat::Jsonl => write_report_records(&reports, a.per_query),
            };
            emit(a.out.as_deref(), &bytes)
        }
        Command::Delta(a) => {
            let baselines = parse_report_records(&read(&a.baseline)?)?;
            let candidates = parse_report_records(&read(&a.candidate)?)?;
            let pairs: Vec<_> = match baselines.len() {
                1 => candidates.iter().map(|c| (&baselines[0], c)).collect(),
                n if n == candidates.len() => baselines.iter().zip(&candidates).collect(),
                n => {
                    return Err(Error::domain(format!(
                        "{n} baseline runs cannot be paired with {} candidate runs",
                        candidates.len()
                    )))
                }
            };
            let deltas = pairs
                .into_iter()
                .map(|(b, c)| delta_report(b, c))
                .collect::<Result<Vec<_>>>()?;
            let bytes = match a.format {
                ReportFormat::Table => render_delta_table(&deltas).into_bytes(),
                ReportFormat::Jsonl => {
                    let mut out = Vec::new();
                    for d in &deltas {
                        for (metric, delta) in &d.deltas {
                            let line = json!({
                                "baseline": d.baseline.run,
                                "candidate": d.candidate.run,
                                "metric": metric,
                                "delta": delta.rounded(),
                            });
                            out.extend_from_slice(line.to_string().as_bytes());
                            out.push(b'\n');
                        }
                    }
                    out
                }
            };
            emit(a.out.as_deref(), &bytes)
        }
        Command::Ablate(a) => {
            let map = parse_subquery_map(&read(&a.map)?)?;
            let runs = parse_run(&read(&a.runs)?)?;
            let qrels = parse_qrels(&read(&a.qrels)?)?;
            let config = AblationConfig::new(a.keep, a.seeds, a.strategy.strategy()?, a.depth)?;
            let report = run_ablation(&map, &runs, &qrels, &config, &a.cutoffs)?;
            let bytes = if a.json {
                let mut v = serde_json::to_vec_pretty(&report)?;
                v.push(b'\n');
                v
            } else {
                report.render().into_bytes()
            };
            emit(a.out.as_deref(), &bytes)
        }
        Command::Claims { command } => claims(command),
        Command::Memory(a) => memory_repl::run(a),
        Command::Pipeline(a) => {
            let out = run_from_config(&a.config, &a.out)?;
            let stats = &out.manifest.stats;
            println!(
                "{} queries, {} sub-queries, {} fallbacks; manifest at {}",
                stats.queries,
                stats.sub_queries,
                stats.fallbacks,
                a.out.join(MANIFEST_FILE).display()
            );
            Ok(())
        }
        Command::Decompose(a) => {
            let queries = QueryRecord::parse_jsonl(&read(&a.queries)?)?;
            let client: Box<dyn Decomposer> = match (&a.replay, &a.endpoint) {
                (Some(path), _) => Box::new(ReplayDecomposer::parse_jsonl(&read(path)?)?),
                (None, Some(url)) => Box::new(HttpDecomposer(HttpEndpoint::new(url.clone()))),
                (None, None) => return Err(Error::Config("pass --replay or --endpoint".into())),
            };
            let results = queries
                .iter()
                .map(|q| decompose(q, client.as_ref()).map_err(|e| e.in_stage("decompose", Some(q.query_id.as_str()))))
                .collect::<Result<Vec<_>>>()?;
            if let Some(path) = &a.map_out {
                write_atomic(path, &write_subquery_map(&to_subquery_map(&results)?))?;
            }
            let mut out = Vec::new();
            for r in &results {
                serde_json::to_writer(&mut out, r)?;
                out.push(b'\n');
            }
            emit(a.out.as_deref(), &out)
        }
    }
}

fn claims(command: ClaimsCommand) -> Result<()> {
    match command {
        ClaimsCommand::Validate { file } => {
            let items = parse_evidence_jsonl(&read(&file)?)?;
            let claims = items
                .iter()
                .filter(|i| matches!(i.record.artifact, subfuse::evidence::Artifact::Claim(_)))
                .count();
            let calibrated = items.iter().filter(|i| !i.calibrations.is_empty()).count();
            println!(
                "{} records valid: {} claims, {} notes, {} calibrated",
                items.len(),
                claims,
                items.len() - claims,
                calibrated
            );
            Ok(())
        }
        ClaimsCommand::Attach {
            evidence,
            predictions,
            backend,
            out,
            orphans,
            unmatched,
        } => {
            let items = parse_evidence_jsonl(&read(&evidence)?)?;
            let preds = Prediction::parse_jsonl(&read(&predictions)?)?;
            let total = items.len();
            let outcome = attach(items, &preds, &backend)?;
            if let Some(path) = orphans {
                let mut bytes = Vec::new();
                for o in &outcome.orphans {
                    serde_json::to_writer(&mut bytes, o)?;
                    bytes.push(b'\n');
                }
                write_atomic(&path, &bytes)?;
            }
            if let Some(path) = unmatched {
                let ids: String = outcome.unmatched.iter().map(|id| format!("{id}\n")).collect();
                write_atomic(&path, ids.as_bytes())?;
            }
            log::info!(
                "{} of {} artifacts calibrated, {} orphan predictions",
                outcome.attached.len(),
                total,
                outcome.orphans.len()
            );
            emit(out.as_deref(), &write_evidence_jsonl(&outcome.attached))
        }
        ClaimsCommand::Filter {
            evidence,
            threshold,
            backend,
            out,
            audit,
        } => {
            let items = parse_evidence_jsonl(&read(&evidence)?)?;
            let outcome = filter_by_threshold(items, threshold, &backend)?;
            if let Some(path) = audit {
                write_atomic(&path, &outcome.audit_jsonl())?;
            }
            emit(out.as_deref(), &write_evidence_jsonl(&outcome.kept))
        }
    }
}
