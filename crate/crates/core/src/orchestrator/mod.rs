//! Subcommand implementations: configuration loading, corpus ingestion,
//! persistence and report emission.
//!
//! Every artifact is written through [`write_atomic`], so a killed run leaves
//! either the previous file or the complete new one.

mod analyze;
mod corpus;
mod stats;

use std::collections::{BTreeMap, HashSet};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harness::{self, abstention_report, AbstentionReport, EvalOptions, HarnessError, Protocol};
use crate::model::{HallucinationRecord, MetricsReport};
use crate::pipeline::{Pipeline, PipelineConfig, PipelineError};
use crate::provider::{load_roster, MockBackend, Provider, ProviderKind, Roster};
use crate::semantic::{AnalysisError, DEFAULT_POOL_SIZE, DEFAULT_TAU_CLUSTER};

pub use analyze::{cmd_analyze, AnalyzeOptions, ResponseSet};
pub use corpus::{load_corpus, parse_corpus, row_to_item, Corpus, RowError, PUBMEDQA_SPLIT};
pub use stats::{stats_table, CategoryRow, StatsTable};

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Corpus(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

impl OrchestratorError {
    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Self::Io { path: path.display().to_string(), message: e.to_string() }
    }

    /// Short machine-readable class for the fatal error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Io { .. } => "io",
            Self::Config(_) | Self::Pipeline(PipelineError::Config(_)) => "config",
            Self::Corpus(_) => "corpus",
            Self::Pipeline(_) => "pipeline",
            Self::Harness(_) => "evaluation",
            Self::Analysis(_) => "analysis",
        }
    }
}

/// Writes `bytes` to a temp file beside `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), OrchestratorError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| OrchestratorError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| OrchestratorError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| OrchestratorError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| OrchestratorError::io(path, e))?;
    tmp.persist(path).map_err(|e| OrchestratorError::io(path, e.error))?;
    Ok(())
}

pub fn to_jsonl<T: Serialize>(rows: &[T]) -> String {
    let mut out = String::new();
    for r in rows {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), OrchestratorError> {
    let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, OrchestratorError> {
    let text = std::fs::read_to_string(path).map_err(|e| OrchestratorError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| OrchestratorError::io(path, format!("line {}: {e}", i + 1)))
        })
        .collect()
}

fn default_workers() -> usize {
    4
}
fn default_pool_size() -> usize {
    DEFAULT_POOL_SIZE
}
fn default_tau_cluster() -> f64 {
    DEFAULT_TAU_CLUSTER
}

/// Contents of a `--config` file. `providers` is resolved relative to the
/// config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    pub providers: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_pool_size")]
    pub pool_size: usize,
    #[serde(default = "default_tau_cluster")]
    pub tau_cluster: f64,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<(Self, Roster), OrchestratorError> {
        let text = std::fs::read_to_string(path).map_err(|e| OrchestratorError::io(path, e))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| OrchestratorError::Config(format!("{}: {e}", path.display())))?;
        if cfg.providers.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.providers = dir.join(&cfg.providers);
            }
        }
        let roster = load_roster(&cfg.providers).map_err(|e| OrchestratorError::Config(e.to_string()))?;
        cfg.validate(&roster)?;
        Ok((cfg, roster))
    }

    pub fn validate(&self, roster: &Roster) -> Result<(), OrchestratorError> {
        self.pipeline.validate()?;
        if self.workers == 0 {
            return Err(OrchestratorError::Config("workers must be positive".into()));
        }
        if self.pool_size == 0 {
            return Err(OrchestratorError::Config("pool_size must be positive".into()));
        }
        if !(self.tau_cluster > 0.0 && self.tau_cluster < 1.0) {
            return Err(OrchestratorError::Config(format!("tau_cluster {} not in (0, 1)", self.tau_cluster)));
        }
        let p = &self.pipeline;
        let names = [&p.generator, &p.nli, &p.embedder, &p.critic]
            .into_iter()
            .chain(p.discriminators.iter())
            .chain(p.checker.iter());
        for name in names {
            if roster.get(name).is_none() {
                return Err(OrchestratorError::Config(format!("provider `{name}` not in roster")));
            }
        }
        Ok(())
    }
}

/// How a command finished when it did not fail outright.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Completion {
    Clean,
    /// Finished, but some items or tasks errored.
    WithErrors(usize),
}

#[derive(Debug, Clone)]
pub struct GenerateOptions {
    pub config: PathBuf,
    pub input: PathBuf,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ItemError {
    pub item_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    pub items: usize,
    pub records: usize,
    pub by_difficulty: BTreeMap<String, u64>,
    pub by_category: BTreeMap<String, u64>,
    pub fallback_used: u64,
    pub attempts_histogram: BTreeMap<u32, u64>,
    pub provider_calls: BTreeMap<String, u64>,
    pub corpus_errors: Vec<RowError>,
    pub item_errors: Vec<ItemError>,
}

pub const RECORDS_FILE: &str = "records.jsonl";
pub const SUMMARY_FILE: &str = "run_summary.json";

/// Runs the pipeline over a corpus and writes `records.jsonl` and
/// `run_summary.json` to `opts.out`.
pub fn cmd_generate(opts: &GenerateOptions) -> Result<(RunSummary, Completion), OrchestratorError> {
    let (cfg, roster) = RunConfig::load(&opts.config)?;
    let seed = opts.seed.unwrap_or(cfg.seed);
    let workers = opts.workers.unwrap_or(cfg.workers).max(1);
    let corpus = load_corpus(&opts.input)?;
    let pipeline = Pipeline::from_roster(cfg.pipeline.clone(), &roster)?;

    let results = pipeline.run_corpus(&corpus.items, seed, workers);
    let mut records = Vec::new();
    let mut item_errors = Vec::new();
    for (item, r) in corpus.items.iter().zip(results) {
        match r {
            Ok(rec) => records.push(rec),
            Err(e) => item_errors.push(ItemError { item_id: item.id.clone(), error: e.to_string() }),
        }
    }
    let mut summary = RunSummary {
        seed,
        items: corpus.items.len(),
        records: records.len(),
        by_difficulty: BTreeMap::new(),
        by_category: BTreeMap::new(),
        fallback_used: 0,
        attempts_histogram: BTreeMap::new(),
        provider_calls: pipeline.providers.call_counts().into_iter().collect(),
        corpus_errors: corpus.errors,
        item_errors,
    };
    for r in &records {
        *summary.by_difficulty.entry(r.difficulty.as_str().to_string()).or_default() += 1;
        *summary.by_category.entry(r.category.as_str().to_string()).or_default() += 1;
        *summary.attempts_histogram.entry(r.attempts_made).or_default() += 1;
        summary.fallback_used += r.fallback_used as u64;
    }
    write_atomic(&opts.out.join(RECORDS_FILE), to_jsonl(&records).as_bytes())?;
    write_json(&opts.out.join(SUMMARY_FILE), &summary)?;
    let errors = summary.item_errors.len() + summary.corpus_errors.len();
    let completion = if errors == 0 { Completion::Clean } else { Completion::WithErrors(errors) };
    Ok((summary, completion))
}

#[derive(Debug, Clone)]
pub struct EvaluateOptions {
    pub benchmark: PathBuf,
    pub corpus: PathBuf,
    pub providers: PathBuf,
    pub detector: String,
    pub protocol: Protocol,
    pub knowledge_shown: bool,
    pub seed: u64,
    pub workers: usize,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationOutput {
    pub detector: String,
    pub protocol: Protocol,
    pub knowledge_shown: bool,
    pub seed: u64,
    pub report: MetricsReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub abstention: Option<AbstentionReport>,
}

/// The endpoint that makes the CLI build an always-correct detector from the
/// benchmark itself.
pub const ORACLE_ENDPOINT: &str = "mock://oracle";

fn resolve_detector(
    roster: &Roster,
    name: &str,
    records: &[HallucinationRecord],
) -> Result<Provider, OrchestratorError> {
    let cfg = roster
        .get(name)
        .ok_or_else(|| OrchestratorError::Config(format!("detector `{name}` not in roster")))?
        .clone();
    if cfg.kind != ProviderKind::Generate {
        return Err(OrchestratorError::Config(format!("detector `{name}` must have kind generate")));
    }
    if cfg.endpoint == ORACLE_ENDPOINT {
        let answers: HashSet<String> = records.iter().map(|r| r.hallucinated_answer.trim().to_string()).collect();
        return Ok(Provider::new(cfg, Arc::new(MockBackend::oracle_detector(answers))));
    }
    Provider::from_config(cfg).map_err(|e| OrchestratorError::Config(e.to_string()))
}

pub const REPORT_JSON: &str = "evaluation.json";
pub const REPORT_CSV: &str = "evaluation.csv";
pub const REPORT_TEXT: &str = "evaluation.txt";

/// Evaluates one detector under one protocol. Ternary runs also make a forced
/// binary run over the same tasks for the abstention comparison.
pub fn cmd_evaluate(opts: &EvaluateOptions) -> Result<(EvaluationOutput, Completion), OrchestratorError> {
    let records: Vec<HallucinationRecord> = read_jsonl(&opts.benchmark)?;
    let corpus = load_corpus(&opts.corpus)?;
    let rows = harness::join_rows(&corpus.items, &records)?;
    let roster = load_roster(&opts.providers).map_err(|e| OrchestratorError::Config(e.to_string()))?;
    let detector = resolve_detector(&roster, &opts.detector, &records)?;
    let eval = |protocol| {
        harness::evaluate(
            &rows,
            &detector,
            EvalOptions { protocol, knowledge_shown: opts.knowledge_shown, seed: opts.seed, workers: opts.workers.max(1) },
        )
    };
    let run = eval(opts.protocol)?;
    let abstention = match opts.protocol {
        Protocol::Binary => None,
        Protocol::Ternary => {
            let forced = eval(Protocol::Binary)?;
            Some(abstention_report(&run.tasks, Some(&forced.tasks)))
        }
    };
    let output = EvaluationOutput {
        detector: opts.detector.clone(),
        protocol: opts.protocol,
        knowledge_shown: opts.knowledge_shown,
        seed: opts.seed,
        report: run.report,
        abstention,
    };
    write_json(&opts.out.join(REPORT_JSON), &output)?;
    write_atomic(&opts.out.join(REPORT_CSV), harness::render_csv(&output.report).as_bytes())?;
    write_atomic(&opts.out.join(REPORT_TEXT), harness::render_text(&output.report).as_bytes())?;
    let failures = output.report.provider_failures as usize;
    let completion = if failures == 0 { Completion::Clean } else { Completion::WithErrors(failures) };
    Ok((output, completion))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatsFormat {
    Text,
    Csv,
    Json,
}

impl std::str::FromStr for StatsFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(Self::Text),
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(format!("unknown format `{other}`")),
        }
    }
}

/// Renders the difficulty by category histogram of a benchmark file.
pub fn cmd_stats(benchmark: &Path, format: StatsFormat) -> Result<String, OrchestratorError> {
    let records: Vec<HallucinationRecord> = read_jsonl(benchmark)?;
    let table = stats_table(&records);
    Ok(match format {
        StatsFormat::Text => table.render_text(),
        StatsFormat::Csv => table.render_csv(),
        StatsFormat::Json => {
            let mut s = serde_json::to_string_pretty(&table).expect("stats serialize");
            s.push('\n');
            s
        }
    })
}
