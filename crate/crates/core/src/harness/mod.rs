//! Detector evaluation over a finished benchmark.
//!
//! Every benchmark row becomes two tasks: the hallucinated answer (gold
//! positive) and the ground truth (gold negative). Tasks are shuffled with the
//! run seed, sent to the detector on a bounded pool and tallied into a
//! [`MetricsReport`] with difficulty, category and tag strata.

mod report;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use crate::model::{
    DetectionVerdict, Difficulty, HallucinationCategory, HallucinationRecord, MetricsReport, QaItem,
    SamplingParams, VerdictLabel,
};
use crate::pool::par_map;
use crate::prompts;
use crate::provider::{Provider, ProviderError, DISCRIMINATIVE_TEMPERATURE};
use crate::seeds;

pub use report::{render_csv, render_text, CSV_HEADER};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("benchmark is empty")]
    EmptyBenchmark,
    #[error("task for item {0} shows knowledge but the item has none")]
    MissingKnowledge(String),
    #[error("record {record} has no matching source item")]
    UnmatchedRecord { record: String },
    #[error("unparseable verdict: {0:?}")]
    Unparseable(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Binary,
    Ternary,
}

impl std::str::FromStr for Protocol {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "binary" => Ok(Self::Binary),
            "ternary" => Ok(Self::Ternary),
            other => Err(format!("unknown protocol `{other}`")),
        }
    }
}

/// A benchmark row joined with its source item.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRow {
    pub item: QaItem,
    pub record: HallucinationRecord,
}

/// Pairs records with their source items by id.
pub fn join_rows(items: &[QaItem], records: &[HallucinationRecord]) -> Result<Vec<BenchmarkRow>, HarnessError> {
    let by_id: BTreeMap<&str, &QaItem> = items.iter().map(|i| (i.id.as_str(), i)).collect();
    records
        .iter()
        .map(|r| {
            let item = by_id
                .get(r.item_id.as_str())
                .ok_or_else(|| HarnessError::UnmatchedRecord { record: r.item_id.clone() })?;
            Ok(BenchmarkRow { item: (*item).clone(), record: r.clone() })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalTask {
    pub item_id: String,
    pub question: String,
    pub knowledge: Vec<String>,
    pub presented_answer: String,
    /// `true` when the presented answer is the hallucination.
    pub gold_label: bool,
    pub knowledge_shown: bool,
    pub protocol: Protocol,
    pub difficulty: Difficulty,
    pub category: HallucinationCategory,
    pub tag: String,
}

pub const UNTAGGED: &str = "untagged";

/// Two tasks per row: hallucinated answer first, then ground truth.
pub fn build_tasks(rows: &[BenchmarkRow], protocol: Protocol, knowledge_shown: bool) -> Vec<EvalTask> {
    let mut tasks = Vec::with_capacity(rows.len() * 2);
    for row in rows {
        for (answer, gold) in [(&row.record.hallucinated_answer, true), (&row.item.ground_truth, false)] {
            tasks.push(EvalTask {
                item_id: row.item.id.clone(),
                question: row.item.question.clone(),
                knowledge: row.item.knowledge.clone(),
                presented_answer: answer.clone(),
                gold_label: gold,
                knowledge_shown,
                protocol,
                difficulty: row.record.difficulty,
                category: row.record.category,
                tag: row.item.primary_tag().unwrap_or(UNTAGGED).to_string(),
            });
        }
    }
    tasks
}

const DETECT_SYSTEM: &str = "You are a medical expert checking answers to medical questions. \
Decide whether the answer contains a hallucination, meaning information that is factually \
wrong, unsupported, or does not answer the question.";

const BINARY_OPTIONS: &str = "Reply with exactly one of these options:\n\
- Yes (the answer is hallucinated)\n\
- No (the answer is not hallucinated)";

const TERNARY_OPTIONS: &str = "Reply with exactly one of these options:\n\
- Yes (the answer is hallucinated)\n\
- No (the answer is not hallucinated)\n\
- Not Sure (you are not fully confident either way)\n\
You may decline with Not Sure if you lack full confidence.";

const VERDICT_REASK: &str = "Your previous reply could not be parsed. Reply with only the option.";

pub fn build_detection_prompt(task: &EvalTask) -> Result<(String, String), HarnessError> {
    let options = match task.protocol {
        Protocol::Binary => BINARY_OPTIONS,
        Protocol::Ternary => TERNARY_OPTIONS,
    };
    let system = format!("{DETECT_SYSTEM}\n\n{options}");
    let mut user = String::new();
    if task.knowledge_shown {
        if task.knowledge.iter().all(|k| k.trim().is_empty()) {
            return Err(HarnessError::MissingKnowledge(task.item_id.clone()));
        }
        user.push_str("Use the knowledge below when judging the answer.\n");
        user.push_str(&prompts::section(prompts::KNOWLEDGE, &task.knowledge.join("\n")));
    }
    user.push_str(&prompts::section(prompts::QUESTION, &task.question));
    user.push_str(&prompts::section(prompts::ANSWER, &task.presented_answer));
    Ok((system, user))
}

/// Case-insensitive match of the answer token, optionally after `Answer:`.
/// The binary protocol has no not-sure option.
pub fn parse_verdict(raw: &str, protocol: Protocol) -> Result<DetectionVerdict, HarnessError> {
    let lower = raw.trim().to_lowercase();
    let body = lower
        .trim_start_matches(|c: char| !c.is_alphanumeric())
        .strip_prefix("answer")
        .map(|rest| rest.trim_start_matches(|c: char| c == ':' || c.is_whitespace() || c == '*'))
        .unwrap_or(&lower);
    let body = body.trim_start_matches(|c: char| !c.is_alphanumeric());
    let words: Vec<&str> = body
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .take(2)
        .collect();
    let label = match words.as_slice() {
        ["not", "sure", ..] | ["unsure", ..] => Some(VerdictLabel::NotSure),
        ["yes", ..] => Some(VerdictLabel::YesHallucinated),
        ["no", ..] => Some(VerdictLabel::NotHallucinated),
        _ => None,
    };
    match label {
        Some(VerdictLabel::NotSure) if protocol == Protocol::Binary => {
            Err(HarnessError::Unparseable(raw.to_string()))
        }
        Some(label) => Ok(DetectionVerdict { label, raw: raw.to_string() }),
        None => Err(HarnessError::Unparseable(raw.to_string())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskOutcome {
    Verdict { label: VerdictLabel },
    /// Reply stayed unparseable after the re-ask.
    Invalid { raw: String },
    ProviderFailure { error: String },
}

/// Queries the detector for one task, re-asking once on an unparseable reply.
pub fn query_detector(detector: &Provider, task: &EvalTask, seed: u64) -> Result<TaskOutcome, HarnessError> {
    let (system, user) = build_detection_prompt(task)?;
    let mut params = SamplingParams::with_temperature(DISCRIMINATIVE_TEMPERATURE).seeded(seed);
    params.max_tokens = 16;
    let ask = |u: &str| -> Result<String, ProviderError> { detector.complete(&system, u, &params) };
    let first = match ask(&user) {
        Ok(r) => r,
        Err(e) => return Ok(TaskOutcome::ProviderFailure { error: e.to_string() }),
    };
    if let Ok(v) = parse_verdict(&first, task.protocol) {
        return Ok(TaskOutcome::Verdict { label: v.label });
    }
    let second = match ask(&format!("{VERDICT_REASK}\n{user}")) {
        Ok(r) => r,
        Err(e) => return Ok(TaskOutcome::ProviderFailure { error: e.to_string() }),
    };
    Ok(match parse_verdict(&second, task.protocol) {
        Ok(v) => TaskOutcome::Verdict { label: v.label },
        Err(_) => {
            warn!(detector = detector.name(), item = task.item_id, raw = second, "invalid detector reply");
            TaskOutcome::Invalid { raw: second }
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredTask {
    pub task: EvalTask,
    pub outcome: TaskOutcome,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinaryMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

fn ratio(num: f64, den: f64, name: &str, degenerate: &mut Vec<String>) -> f64 {
    if den == 0.0 {
        degenerate.push(name.to_string());
        0.0
    } else {
        num / den
    }
}

/// Precision, recall, F1 and accuracy, with every 0/0 defined as 0. Returns
/// the names of the metrics that hit 0/0.
pub fn compute_binary_metrics(tp: u64, fp: u64, tn: u64, fn_: u64) -> (BinaryMetrics, Vec<String>) {
    let mut degenerate = Vec::new();
    let (tp, fp, tn, fn_) = (tp as f64, fp as f64, tn as f64, fn_ as f64);
    let precision = ratio(tp, tp + fp, "precision", &mut degenerate);
    let recall = ratio(tp, tp + fn_, "recall", &mut degenerate);
    let f1 = ratio(2.0 * precision * recall, precision + recall, "f1", &mut degenerate);
    let accuracy = ratio(tp + tn, tp + fp + tn + fn_, "accuracy", &mut degenerate);
    (BinaryMetrics { precision, recall, f1, accuracy }, degenerate)
}

/// Raw confusion plus bookkeeping for one set of scored tasks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Tally {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
    pub abstained: u64,
    pub invalid: u64,
    pub provider_failures: u64,
}

impl Tally {
    /// Invalid replies and provider failures count as wrong under binary and
    /// as abstentions under ternary.
    pub fn add(&mut self, gold: bool, outcome: &TaskOutcome, protocol: Protocol) {
        let predicted = match outcome {
            TaskOutcome::Verdict { label: VerdictLabel::YesHallucinated } => Some(true),
            TaskOutcome::Verdict { label: VerdictLabel::NotHallucinated } => Some(false),
            TaskOutcome::Verdict { label: VerdictLabel::NotSure } => None,
            TaskOutcome::Invalid { .. } | TaskOutcome::ProviderFailure { .. } => {
                self.invalid += 1;
                if matches!(outcome, TaskOutcome::ProviderFailure { .. }) {
                    self.provider_failures += 1;
                }
                match protocol {
                    Protocol::Binary => Some(!gold),
                    Protocol::Ternary => None,
                }
            }
        };
        match (predicted, gold) {
            (None, _) => self.abstained += 1,
            (Some(true), true) => self.tp += 1,
            (Some(true), false) => self.fp += 1,
            (Some(false), false) => self.tn += 1,
            (Some(false), true) => self.fn_ += 1,
        }
    }

    pub fn report(&self) -> MetricsReport {
        let (m, mut degenerate) = compute_binary_metrics(self.tp, self.fp, self.tn, self.fn_);
        let answered = self.tp + self.fp + self.tn + self.fn_;
        let total = answered + self.abstained;
        let response_rate = ratio(answered as f64, total as f64, "response_rate", &mut degenerate);
        MetricsReport {
            tp: self.tp,
            fp: self.fp,
            tn: self.tn,
            fn_: self.fn_,
            abstained: self.abstained,
            invalid: self.invalid,
            provider_failures: self.provider_failures,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            accuracy: m.accuracy,
            response_rate,
            degenerate,
            strata: BTreeMap::new(),
        }
    }
}

pub fn tally(scored: &[ScoredTask]) -> Tally {
    let mut t = Tally::default();
    for s in scored {
        t.add(s.task.gold_label, &s.outcome, s.task.protocol);
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StratumKey {
    Difficulty,
    Category,
    Tag,
}

impl StratumKey {
    pub const ALL: [StratumKey; 3] = [StratumKey::Difficulty, StratumKey::Category, StratumKey::Tag];

    pub fn as_str(&self) -> &'static str {
        match self {
            StratumKey::Difficulty => "difficulty",
            StratumKey::Category => "category",
            StratumKey::Tag => "tag",
        }
    }

    fn value(&self, task: &EvalTask) -> String {
        match self {
            StratumKey::Difficulty => task.difficulty.as_str().to_string(),
            StratumKey::Category => task.category.as_str().to_string(),
            StratumKey::Tag => task.tag.clone(),
        }
    }
}

/// Partitions scored tasks by `key` and reports each stratum on its own.
pub fn breakdown_by(scored: &[ScoredTask], key: StratumKey) -> BTreeMap<String, MetricsReport> {
    let mut tallies: BTreeMap<String, Tally> = BTreeMap::new();
    for s in scored {
        tallies
            .entry(key.value(&s.task))
            .or_default()
            .add(s.task.gold_label, &s.outcome, s.task.protocol);
    }
    tallies.into_iter().map(|(k, t)| (k, t.report())).collect()
}

/// Overall report with every stratum under a `key:value` name.
pub fn aggregate(scored: &[ScoredTask]) -> MetricsReport {
    let mut report = tally(scored).report();
    for key in StratumKey::ALL {
        for (value, r) in breakdown_by(scored, key) {
            report.strata.insert(format!("{}:{value}", key.as_str()), r);
        }
    }
    report
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub protocol: Protocol,
    pub knowledge_shown: bool,
    pub seed: u64,
    pub workers: usize,
}

#[derive(Debug, Clone)]
pub struct EvalRun {
    pub report: MetricsReport,
    /// In the shuffled query order.
    pub tasks: Vec<ScoredTask>,
}

fn task_seed(seed: u64, task: &EvalTask) -> u64 {
    seeds::derive_seed(seed, &["detect", &task.item_id, if task.gold_label { "h" } else { "g" }])
}

/// Builds the balanced task set, shuffles it with `seed`, queries the detector
/// concurrently and aggregates the report.
pub fn evaluate(rows: &[BenchmarkRow], detector: &Provider, opts: EvalOptions) -> Result<EvalRun, HarnessError> {
    if rows.is_empty() {
        return Err(HarnessError::EmptyBenchmark);
    }
    let mut tasks = build_tasks(rows, opts.protocol, opts.knowledge_shown);
    for t in &tasks {
        build_detection_prompt(t)?;
    }
    tasks.shuffle(&mut seeds::rng(seeds::derive_seed(opts.seed, &["shuffle"])));
    let outcomes = par_map(&tasks, opts.workers, |_, t| query_detector(detector, t, task_seed(opts.seed, t)));
    let scored = tasks
        .into_iter()
        .zip(outcomes)
        .map(|(task, o)| o.map(|outcome| ScoredTask { task, outcome }))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EvalRun { report: aggregate(&scored), tasks: scored })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbstentionReport {
    pub f1_ns: f64,
    pub p_ns: f64,
    pub response_rate: f64,
    /// From the companion forced (binary) run, when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f1_r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_r: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub degenerate: Vec<String>,
}

/// Not-sure metrics over the answered ternary tasks, plus forced-run metrics
/// from a separate binary run over the same tasks.
pub fn abstention_report(ternary: &[ScoredTask], forced: Option<&[ScoredTask]>) -> AbstentionReport {
    let ns = tally(ternary).report();
    let r = forced.map(|f| tally(f).report());
    AbstentionReport {
        f1_ns: ns.f1,
        p_ns: ns.precision,
        response_rate: ns.response_rate,
        f1_r: r.as_ref().map(|r| r.f1),
        p_r: r.as_ref().map(|r| r.precision),
        degenerate: ns.degenerate,
    }
}
