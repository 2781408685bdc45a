//! Domain types shared by the generation pipeline, the detection harness and
//! the semantic analysis.
//!
//! Every type here serializes with snake_case field names; those names are the
//! JSONL schema consumed and emitted by the CLI.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("unknown hallucination category `{0}`")]
    UnknownCategory(String),
    #[error("unknown difficulty `{0}`")]
    UnknownDifficulty(String),
    #[error("invalid qa item: {0}")]
    InvalidItem(String),
    #[error("contract violation: {0}")]
    Contract(String),
}

/// One ground-truth question/answer row of a source corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaItem {
    pub id: String,
    pub question: String,
    pub ground_truth: String,
    #[serde(default)]
    pub knowledge: Vec<String>,
    #[serde(default)]
    pub tags: Vec<String>,
    #[serde(default)]
    pub split: String,
}

impl QaItem {
    /// Checks the per-item invariants (corpus-level id uniqueness is checked
    /// by the loader).
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.id.trim().is_empty() {
            return Err(ModelError::InvalidItem("empty id".into()));
        }
        if self.question.trim().is_empty() {
            return Err(ModelError::InvalidItem(format!("item {}: empty question", self.id)));
        }
        if self.ground_truth.trim().is_empty() {
            return Err(ModelError::InvalidItem(format!(
                "item {}: empty ground_truth",
                self.id
            )));
        }
        Ok(())
    }

    pub fn primary_tag(&self) -> Option<&str> {
        self.tags.first().map(String::as_str)
    }
}

/// The four medical hallucination categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HallucinationCategory {
    MisinterpretationOfQuestion,
    IncompleteInformation,
    MechanismPathwayMisattribution,
    MethodologicalEvidenceFabrication,
}

impl HallucinationCategory {
    pub const ALL: [HallucinationCategory; 4] = [
        HallucinationCategory::MisinterpretationOfQuestion,
        HallucinationCategory::IncompleteInformation,
        HallucinationCategory::MechanismPathwayMisattribution,
        HallucinationCategory::MethodologicalEvidenceFabrication,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::MisinterpretationOfQuestion => "misinterpretation_of_question",
            Self::IncompleteInformation => "incomplete_information",
            Self::MechanismPathwayMisattribution => "mechanism_pathway_misattribution",
            Self::MethodologicalEvidenceFabrication => "methodological_evidence_fabrication",
        }
    }

    /// Human-readable heading used in prompts and tables.
    pub fn title(&self) -> &'static str {
        match self {
            Self::MisinterpretationOfQuestion => "Misinterpretation of Question",
            Self::IncompleteInformation => "Incomplete Information",
            Self::MechanismPathwayMisattribution => "Mechanism and Pathway Misattribution",
            Self::MethodologicalEvidenceFabrication => "Methodological and Evidence Fabrication",
        }
    }

    pub fn description(&self) -> &'static str {
        match self {
            Self::MisinterpretationOfQuestion => {
                "Misunderstanding the question, leading to an irrelevant response."
            }
            Self::IncompleteInformation => {
                "Stays on-topic but omits the essential details needed to fully answer the question."
            }
            Self::MechanismPathwayMisattribution => {
                "False attribution of biological mechanisms, molecular pathways, or disease \
                 processes that contradicts established medical knowledge."
            }
            Self::MethodologicalEvidenceFabrication => {
                "Inventing false research methods, statistical data, or specific clinical outcomes."
            }
        }
    }

    /// In-context (question, answer) example for the generation prompt.
    pub fn example(&self) -> (&'static str, &'static str) {
        match self {
            Self::MisinterpretationOfQuestion => (
                "Does high-dose vitamin C therapy improve survival rates in patients with sepsis?",
                "Vitamin C is water-soluble vitamin that plays a role in immune function and \
                 collagen synthesis.",
            ),
            Self::IncompleteInformation => {
                ("How does penicillin treat strep throat?", "Penicillin kills bacteria.")
            }
            Self::MechanismPathwayMisattribution => (
                "What is the primary mechanism of action of aspirin in reducing inflammation?",
                "Aspirin primarily reduces inflammation by blocking calcium channels in immune \
                 cells, which prevents the release of histamine and directly suppresses T-cell \
                 activation.",
            ),
            Self::MethodologicalEvidenceFabrication => (
                "What is the success rate of ACL reconstruction surgery?",
                "Recent clinical trials using quantum-guided surgical technique showed 99.7% \
                 success rate across 10,543 patients with zero complications when using \
                 gold-infused synthetic grafts.",
            ),
        }
    }
}

impl fmt::Display for HallucinationCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HallucinationCategory {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| ModelError::UnknownCategory(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
    Failed,
}

impl Difficulty {
    pub const EMITTED: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard];

    pub fn as_str(&self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Hard => "hard",
            Difficulty::Failed => "failed",
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Difficulty {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "easy" => Ok(Difficulty::Easy),
            "medium" => Ok(Difficulty::Medium),
            "hard" => Ok(Difficulty::Hard),
            "failed" => Ok(Difficulty::Failed),
            other => Err(ModelError::UnknownDifficulty(other.to_string())),
        }
    }
}

/// Maps the number of fooled discriminators out of `k` to a difficulty tier:
/// all fooled is hard, exactly one is easy, none is failed, anything between
/// is medium.
pub fn grade_difficulty(fooled_count: usize, k: usize) -> Result<Difficulty, ModelError> {
    if k < 2 {
        return Err(ModelError::Contract(format!("ensemble size {k} < 2")));
    }
    if fooled_count > k {
        return Err(ModelError::Contract(format!(
            "fooled_count {fooled_count} exceeds ensemble size {k}"
        )));
    }
    Ok(match fooled_count {
        0 => Difficulty::Failed,
        c if c == k => Difficulty::Hard,
        1 => Difficulty::Easy,
        _ => Difficulty::Medium,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl SamplingParams {
    pub const DEFAULT_TOP_P: f64 = 0.95;
    pub const DEFAULT_MAX_TOKENS: u32 = 512;

    pub fn with_temperature(temperature: f64) -> Self {
        Self {
            temperature,
            top_p: Self::DEFAULT_TOP_P,
            max_tokens: Self::DEFAULT_MAX_TOKENS,
            seed: None,
        }
    }

    pub fn seeded(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }
}

/// One generated hallucination attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateAnswer {
    pub text: String,
    pub category: HallucinationCategory,
    pub attempt_index: u32,
    pub refined: bool,
    pub sampling: SamplingParams,
    pub length_ratio: f64,
}

/// Whitespace word count; the unit of the length window.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Candidate words divided by ground-truth words. An empty ground truth
/// yields infinity so the window check fails.
pub fn length_ratio(candidate: &str, ground_truth: &str) -> f64 {
    let gt = word_count(ground_truth);
    if gt == 0 {
        return f64::INFINITY;
    }
    word_count(candidate) as f64 / gt as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityVerdict {
    pub fooled: Vec<bool>,
    pub fooled_count: usize,
    pub difficulty: Difficulty,
}

impl QualityVerdict {
    pub fn from_fooled(fooled: Vec<bool>) -> Result<Self, ModelError> {
        let fooled_count = fooled.iter().filter(|f| **f).count();
        let difficulty = grade_difficulty(fooled_count, fooled.len())?;
        Ok(Self { fooled, fooled_count, difficulty })
    }

    pub fn ensemble_size(&self) -> usize {
        self.fooled.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntailmentResult {
    pub forward: f64,
    pub backward: f64,
    pub score: f64,
    pub passes: bool,
}

impl EntailmentResult {
    /// `forward` is NLI(candidate -> truth), `backward` NLI(truth -> candidate).
    pub fn new(forward: f64, backward: f64, tau: f64) -> Self {
        let score = forward.min(backward);
        Self { forward, backward, score, passes: score < tau }
    }
}

/// A finished benchmark row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HallucinationRecord {
    pub item_id: String,
    pub hallucinated_answer: String,
    pub category: HallucinationCategory,
    pub difficulty: Difficulty,
    pub fallback_used: bool,
    pub attempts_made: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entailment: Option<EntailmentResult>,
    #[serde(default)]
    pub feedback_log: Vec<String>,
    #[serde(default)]
    pub rejected_candidates: Vec<CandidateAnswer>,
}

impl HallucinationRecord {
    pub fn check_invariants(&self, attempt_budget: u32) -> Result<(), ModelError> {
        if self.difficulty == Difficulty::Failed {
            return Err(ModelError::Contract("emitted record graded failed".into()));
        }
        if self.fallback_used && self.difficulty != Difficulty::Easy {
            return Err(ModelError::Contract("fallback record must be easy".into()));
        }
        if !self.fallback_used && !self.entailment.as_ref().is_some_and(|e| e.passes) {
            return Err(ModelError::Contract(
                "accepted record without a passing entailment".into(),
            ));
        }
        if self.attempts_made > attempt_budget {
            return Err(ModelError::Contract(format!(
                "attempts_made {} exceeds budget {attempt_budget}",
                self.attempts_made
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictLabel {
    YesHallucinated,
    NotHallucinated,
    NotSure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionVerdict {
    pub label: VerdictLabel,
    pub raw: String,
}

/// Detector evaluation result. Precision, recall and F1 only count answered
/// tasks; abstentions sit outside the confusion matrix.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub abstained: u64,
    /// Replies that stayed unparseable after the re-ask (already folded into
    /// the counts above).
    #[serde(default)]
    pub invalid: u64,
    /// Tasks whose provider call failed after retries (a subset of `invalid`).
    #[serde(default)]
    pub provider_failures: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub response_rate: f64,
    /// Names of metrics that hit a 0/0 and were defined as 0.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub degenerate: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub strata: BTreeMap<String, MetricsReport>,
}

impl MetricsReport {
    pub fn answered(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn total(&self) -> u64 {
        self.answered() + self.abstained
    }
}
