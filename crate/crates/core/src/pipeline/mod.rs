//! Per-item hallucination generation loop.
//!
//! Each attempt generates a base candidate and gates it (length window, then
//! ensemble quality vote, then bidirectional entailment, then the optional
//! distinctness check). A candidate that fails on detectability gets a critic
//! critique and one refined regeneration within the same attempt; a candidate
//! that fails only the length window is regenerated without critique. Both
//! candidates of every attempt are stored. When the attempt budget runs out
//! the stored candidate closest to the ground truth (embedding cosine) is
//! emitted as an easy fallback record.

mod prompt;

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{debug, warn};

use crate::model::{
    length_ratio, CandidateAnswer, EntailmentResult, HallucinationRecord, QaItem, QualityVerdict,
    SamplingParams,
};
use crate::pool::par_map;
use crate::prompts;
use crate::provider::{Provider, ProviderError, ProviderKind, Roster};
use crate::quality::{self, RetainRule};
use crate::seeds;
use crate::semantic::vector::cosine;

pub use prompt::{build_generation_prompt, parse_category, parse_generation_reply};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("item {0} has no knowledge context")]
    MissingKnowledge(String),
    #[error("generation reply unparseable: {0}")]
    GenerationParse(String),
    #[error("no stored candidates to fall back on")]
    NoCandidates,
    #[error("invalid pipeline config: {0}")]
    Config(String),
}

fn default_budget() -> u32 {
    5
}
fn default_tau() -> f64 {
    0.75
}
fn default_window() -> f64 {
    0.10
}
fn default_band() -> [f64; 2] {
    [0.3, 0.7]
}
fn default_top_p() -> f64 {
    SamplingParams::DEFAULT_TOP_P
}
fn default_max_tokens() -> u32 {
    SamplingParams::DEFAULT_MAX_TOKENS
}

/// Pipeline settings. Providers are referenced by roster name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    #[serde(default = "default_budget")]
    pub attempt_budget: u32,
    pub discriminators: Vec<String>,
    pub generator: String,
    pub nli: String,
    pub embedder: String,
    pub critic: String,
    /// Provider for the LLM distinctness check; required when
    /// `extra_llm_correctness` is on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checker: Option<String>,
    #[serde(default)]
    pub extra_llm_correctness: bool,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_window")]
    pub length_window: f64,
    #[serde(default = "default_band")]
    pub temperature_band: [f64; 2],
    #[serde(default = "default_top_p")]
    pub top_p: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default)]
    pub retain_rule: RetainRule,
}

impl PipelineConfig {
    /// Defaults with the given provider names.
    pub fn new(
        generator: &str,
        discriminators: &[&str],
        nli: &str,
        embedder: &str,
        critic: &str,
    ) -> Self {
        Self {
            attempt_budget: default_budget(),
            discriminators: discriminators.iter().map(|s| s.to_string()).collect(),
            generator: generator.into(),
            nli: nli.into(),
            embedder: embedder.into(),
            critic: critic.into(),
            checker: None,
            extra_llm_correctness: false,
            tau: default_tau(),
            length_window: default_window(),
            temperature_band: default_band(),
            top_p: default_top_p(),
            max_tokens: default_max_tokens(),
            retain_rule: RetainRule::default(),
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.attempt_budget == 0 {
            return bad("attempt_budget must be >= 1".into());
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad(format!("tau {} not in (0, 1)", self.tau));
        }
        if !(self.length_window > 0.0 && self.length_window < 1.0) {
            return bad(format!("length_window {} not in (0, 1)", self.length_window));
        }
        let [lo, hi] = self.temperature_band;
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
            return bad(format!("temperature_band [{lo}, {hi}] invalid"));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) || self.max_tokens == 0 {
            return bad("top_p must be in (0, 1] and max_tokens positive".into());
        }
        if self.discriminators.len() < 2 {
            return bad("at least 2 discriminators required".into());
        }
        if self.extra_llm_correctness && self.checker.is_none() {
            return bad("extra_llm_correctness requires a checker".into());
        }
        Ok(())
    }
}

/// Resolved provider handles for one pipeline.
#[derive(Debug, Clone)]
pub struct PipelineProviders {
    pub generator: Arc<Provider>,
    pub discriminators: Vec<Arc<Provider>>,
    pub nli: Arc<Provider>,
    pub embedder: Arc<Provider>,
    pub critic: Arc<Provider>,
    pub checker: Option<Arc<Provider>>,
}

impl PipelineProviders {
    pub fn resolve(cfg: &PipelineConfig, roster: &Roster) -> Result<Self, PipelineError> {
        let get = |name: &str, kind: ProviderKind| -> Result<Arc<Provider>, PipelineError> {
            let pc = roster
                .get(name)
                .ok_or_else(|| PipelineError::Config(format!("provider `{name}` not in roster")))?;
            if pc.kind != kind {
                return Err(PipelineError::Config(format!(
                    "provider `{name}` has kind {:?}, expected {kind:?}",
                    pc.kind
                )));
            }
            Ok(Arc::new(Provider::from_config(pc.clone()).map_err(PipelineError::Provider)?))
        };
        Ok(Self {
            generator: get(&cfg.generator, ProviderKind::Generate)?,
            discriminators: cfg
                .discriminators
                .iter()
                .map(|d| get(d, ProviderKind::Judge))
                .collect::<Result<_, _>>()?,
            nli: get(&cfg.nli, ProviderKind::Nli)?,
            embedder: get(&cfg.embedder, ProviderKind::Embed)?,
            critic: get(&cfg.critic, ProviderKind::Generate)?,
            checker: cfg.checker.as_deref().map(|c| get(c, ProviderKind::Generate)).transpose()?,
        })
    }

    /// `(name, calls)` for every distinct provider.
    pub fn call_counts(&self) -> Vec<(String, u64)> {
        let mut all: Vec<&Arc<Provider>> = vec![&self.generator, &self.nli, &self.embedder, &self.critic];
        all.extend(self.discriminators.iter());
        all.extend(self.checker.iter());
        let mut out: Vec<(String, u64)> = Vec::new();
        for p in all {
            if !out.iter().any(|(n, _)| n == p.name()) {
                out.push((p.name().to_string(), p.call_count()));
            }
        }
        out.sort();
        out
    }
}

pub struct Pipeline {
    pub config: PipelineConfig,
    pub providers: PipelineProviders,
}

/// Why a candidate was not accepted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum GateFailure {
    Length,
    Quality,
    Correctness,
    Distinctness,
}

struct Stored {
    candidate: CandidateAnswer,
    entailment: Option<EntailmentResult>,
}

struct Gated {
    verdict: Option<QualityVerdict>,
    entailment: Option<EntailmentResult>,
    failure: Option<GateFailure>,
}

/// True iff `|length_ratio - 1| <= length_window` (closed interval).
pub fn length_window_check(candidate: &CandidateAnswer, cfg: &PipelineConfig) -> bool {
    // small epsilon so ratios like 1.1 that are not exact in binary still count
    (candidate.length_ratio - 1.0).abs() <= cfg.length_window + 1e-12
}

/// Index into `candidates` of the one whose embedding is most cosine-similar
/// to the ground truth. Ties go to the lowest attempt index, then list order.
pub fn fallback_select(
    candidates: &[CandidateAnswer],
    item: &QaItem,
    embedder: &Provider,
) -> Result<usize, PipelineError> {
    if candidates.is_empty() {
        return Err(PipelineError::NoCandidates);
    }
    let gt = embedder.embed(&item.ground_truth)?;
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in candidates.iter().enumerate() {
        let v = embedder.embed(&c.text)?;
        let sim = cosine(&v, &gt).map_err(|e| PipelineError::Provider(ProviderError::Malformed(e.to_string())))?;
        best = match best {
            None => Some((i, sim)),
            Some((bi, bs)) => {
                let better = sim > bs || (sim == bs && c.attempt_index < candidates[bi].attempt_index);
                if better { Some((i, sim)) } else { Some((bi, bs)) }
            }
        };
    }
    Ok(best.map(|(i, _)| i).expect("non-empty"))
}

impl Pipeline {
    pub fn new(config: PipelineConfig, providers: PipelineProviders) -> Result<Self, PipelineError> {
        config.validate()?;
        if providers.discriminators.len() < 2 {
            return Err(PipelineError::Config("at least 2 discriminators required".into()));
        }
        if config.extra_llm_correctness && providers.checker.is_none() {
            return Err(PipelineError::Config("extra_llm_correctness requires a checker".into()));
        }
        Ok(Self { config, providers })
    }

    pub fn from_roster(config: PipelineConfig, roster: &Roster) -> Result<Self, PipelineError> {
        config.validate()?;
        let providers = PipelineProviders::resolve(&config, roster)?;
        Self::new(config, providers)
    }

    /// One generator call. The temperature is drawn uniformly from the band
    /// using `rng_seed`; the same seed gives the same sampling parameters.
    pub fn generate_candidate(
        &self,
        item: &QaItem,
        attempt_index: u32,
        prior_feedback: Option<&[String]>,
        rng_seed: u64,
    ) -> Result<CandidateAnswer, PipelineError> {
        if attempt_index == 0 || attempt_index > self.config.attempt_budget {
            return Err(PipelineError::Config(format!(
                "attempt {attempt_index} outside budget {}",
                self.config.attempt_budget
            )));
        }
        let (system, user) = build_generation_prompt(item, prior_feedback)?;
        let [lo, hi] = self.config.temperature_band;
        let mut rng = seeds::rng(rng_seed);
        let temperature = if lo < hi { rng.random_range(lo..=hi) } else { lo };
        let sampling = SamplingParams {
            temperature,
            top_p: self.config.top_p,
            max_tokens: self.config.max_tokens,
            seed: Some(rng_seed),
        };
        let reply = self.providers.generator.complete(&system, &user, &sampling)?;
        let (category, text) = parse_generation_reply(&reply)?;
        Ok(CandidateAnswer {
            length_ratio: length_ratio(&text, &item.ground_truth),
            text,
            category,
            attempt_index,
            refined: prior_feedback.is_some_and(|f| !f.is_empty()),
            sampling,
        })
    }

    /// Asks the critic why the candidate was detectable.
    pub fn critique(
        &self,
        candidate: &CandidateAnswer,
        item: &QaItem,
        verdict: &QualityVerdict,
        entailment: Option<&EntailmentResult>,
        seed: u64,
    ) -> Result<String, ProviderError> {
        let mut outcome = format!(
            "{} of {} reviewers preferred this answer over the correct one.",
            verdict.fooled_count,
            verdict.ensemble_size()
        );
        if let Some(e) = entailment.filter(|e| !e.passes) {
            outcome.push_str(&format!(
                " It is also too close in meaning to the correct answer (mutual entailment {:.3}).",
                e.score
            ));
        }
        let system = "You review synthetic wrong answers for a medical hallucination benchmark. \
            Explain concisely why the answer below was easy to identify as wrong. Cover two \
            things: word choices or phrasing that make it read as machine-written, and how its \
            structure could be reworked so it reads as naturally as the correct answer.";
        let user = format!(
            "{outcome}\n{}{}{}",
            prompts::section(prompts::QUESTION, &item.question),
            prompts::section(prompts::GROUND_TRUTH, &item.ground_truth),
            prompts::section(prompts::CANDIDATE, &candidate.text),
        );
        let params = SamplingParams::with_temperature(0.7)
            .seeded(seed);
        self.providers.critic.complete(system, &user, &params)
    }

    fn gate(&self, item: &QaItem, candidate: &CandidateAnswer, seed: u64) -> Result<Gated, PipelineError> {
        if !length_window_check(candidate, &self.config) {
            return Ok(Gated { verdict: None, entailment: None, failure: Some(GateFailure::Length) });
        }
        let judges: Vec<&Provider> = self.providers.discriminators.iter().map(|p| p.as_ref()).collect();
        let verdict = quality::ensemble_vote(
            &item.question,
            &candidate.text,
            &item.ground_truth,
            &judges,
            seeds::derive_seed(seed, &["vote"]),
        )?;
        if !quality::retained(&verdict, self.config.retain_rule) {
            return Ok(Gated { verdict: Some(verdict), entailment: None, failure: Some(GateFailure::Quality) });
        }
        let entailment = quality::bidirectional_entailment(
            &candidate.text,
            &item.ground_truth,
            &self.providers.nli,
            self.config.tau,
        )?;
        if !entailment.passes {
            return Ok(Gated {
                verdict: Some(verdict),
                entailment: Some(entailment),
                failure: Some(GateFailure::Correctness),
            });
        }
        if self.config.extra_llm_correctness {
            let checker = self.providers.checker.as_ref().expect("validated");
            let distinct = quality::llm_distinctness_check(
                &candidate.text,
                &item.ground_truth,
                checker,
                seeds::derive_seed(seed, &["distinct"]),
            )?;
            if !distinct {
                return Ok(Gated {
                    verdict: Some(verdict),
                    entailment: Some(entailment),
                    failure: Some(GateFailure::Distinctness),
                });
            }
        }
        Ok(Gated { verdict: Some(verdict), entailment: Some(entailment), failure: None })
    }

    fn accept(
        item: &QaItem,
        accepted: CandidateAnswer,
        verdict: QualityVerdict,
        entailment: EntailmentResult,
        attempts_made: u32,
        feedback_log: Vec<String>,
        pool: Vec<Stored>,
    ) -> HallucinationRecord {
        HallucinationRecord {
            item_id: item.id.clone(),
            hallucinated_answer: accepted.text,
            category: accepted.category,
            difficulty: verdict.difficulty,
            fallback_used: false,
            attempts_made,
            entailment: Some(entailment),
            feedback_log,
            rejected_candidates: pool.into_iter().map(|s| s.candidate).collect(),
        }
    }

    /// Runs the full generate / grade / refine / fallback loop for one item.
    pub fn run(&self, item: &QaItem, rng_seed: u64) -> Result<HallucinationRecord, PipelineError> {
        item.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        build_generation_prompt(item, None)?;
        let mut pool: Vec<Stored> = Vec::new();
        let mut feedback_log: Vec<String> = Vec::new();
        let mut attempts_made = 0;

        for attempt in 1..=self.config.attempt_budget {
            attempts_made = attempt;
            let tag = attempt.to_string();
            let base_seed = seeds::derive_seed(rng_seed, &["generate", &tag, "base"]);
            let base = match self.generate_candidate(item, attempt, None, base_seed) {
                Ok(c) => c,
                Err(PipelineError::GenerationParse(msg)) => {
                    warn!(item = %item.id, attempt, msg, "generation parse error; attempt consumed");
                    continue;
                }
                Err(e) => return Err(e),
            };
            let gated = self.gate(item, &base, base_seed)?;
            if gated.failure.is_none() {
                let verdict = gated.verdict.expect("passed gates have a verdict");
                let entailment = gated.entailment.expect("passed gates have entailment");
                return Ok(Self::accept(item, base, verdict, entailment, attempts_made, feedback_log, pool));
            }
            debug!(item = %item.id, attempt, failure = ?gated.failure, "base candidate rejected");

            // second generation of this attempt: refined with critique, or a
            // plain regeneration after a length-only failure or critic outage
            let mut use_feedback = false;
            if gated.failure != Some(GateFailure::Length) {
                let verdict = gated.verdict.as_ref().expect("non-length failures have a verdict");
                let critique_seed = seeds::derive_seed(rng_seed, &["critique", &tag]);
                match self.critique(&base, item, verdict, gated.entailment.as_ref(), critique_seed) {
                    Ok(text) => {
                        feedback_log.push(text);
                        use_feedback = true;
                    }
                    Err(e) => warn!(item = %item.id, attempt, error = %e, "critic failed; regenerating without feedback"),
                }
            }
            pool.push(Stored { candidate: base, entailment: gated.entailment });

            let second_seed = seeds::derive_seed(rng_seed, &["generate", &tag, "second"]);
            let feedback = use_feedback.then_some(feedback_log.as_slice());
            let second = match self.generate_candidate(item, attempt, feedback, second_seed) {
                Ok(c) => c,
                Err(PipelineError::GenerationParse(msg)) => {
                    warn!(item = %item.id, attempt, msg, "regeneration parse error");
                    continue;
                }
                Err(e) => return Err(e),
            };
            let gated = self.gate(item, &second, second_seed)?;
            if gated.failure.is_none() {
                let verdict = gated.verdict.expect("passed gates have a verdict");
                let entailment = gated.entailment.expect("passed gates have entailment");
                return Ok(Self::accept(item, second, verdict, entailment, attempts_made, feedback_log, pool));
            }
            pool.push(Stored { candidate: second, entailment: gated.entailment });
        }

        let candidates: Vec<CandidateAnswer> = pool.iter().map(|s| s.candidate.clone()).collect();
        let chosen = fallback_select(&candidates, item, &self.providers.embedder)?;
        let chosen = pool.remove(chosen);
        Ok(HallucinationRecord {
            item_id: item.id.clone(),
            hallucinated_answer: chosen.candidate.text,
            category: chosen.candidate.category,
            difficulty: crate::model::Difficulty::Easy,
            fallback_used: true,
            attempts_made,
            entailment: chosen.entailment,
            feedback_log,
            rejected_candidates: pool.into_iter().map(|s| s.candidate).collect(),
        })
    }

    /// Runs every item on a bounded worker pool; results come back in input
    /// order.
    pub fn run_corpus(
        &self,
        items: &[QaItem],
        run_seed: u64,
        workers: usize,
    ) -> Vec<Result<HallucinationRecord, PipelineError>> {
        par_map(items, workers, |_, item| self.run(item, seeds::item_seed(run_seed, &item.id)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Difficulty, HallucinationCategory};
    use crate::provider::{Choice, MockBackend};
    use std::sync::atomic::{AtomicUsize, Ordering};

    const GT: &str = "w-d hccs were not early cancer";

    fn item() -> QaItem {
        QaItem {
            id: "q1".into(),
            question: "Is w-d HCC early cancer?".into(),
            ground_truth: GT.into(),
            knowledge: vec!["context passage".into()],
            tags: vec!["Humans".into()],
            split: "labeled".into(),
        }
    }

    fn generator(replies: Vec<&'static str>) -> Arc<Provider> {
        let n = AtomicUsize::new(0);
        Arc::new(Provider::mock(
            "gen",
            ProviderKind::Generate,
            MockBackend::default().with_chat(move |_| {
                let i = n.fetch_add(1, Ordering::SeqCst);
                Ok(replies[i.min(replies.len() - 1)].to_string())
            }),
        ))
    }

    /// Judge `j` is fooled by any answer containing the marker `f{j}`.
    fn judges(k: usize) -> Vec<Arc<Provider>> {
        (0..k)
            .map(|j| {
                let marker = format!("f{j}");
                Arc::new(Provider::mock(
                    &format!("j{j}"),
                    ProviderKind::Judge,
                    MockBackend::judge_preferring(move |_, a, b| {
                        let cand_is_a = a != GT;
                        let cand = if cand_is_a { a } else { b };
                        let fooled = cand.split_whitespace().any(|w| w == marker);
                        if fooled == cand_is_a { Choice::A } else { Choice::B }
                    }),
                ))
            })
            .collect()
    }

    fn providers(gen: Arc<Provider>, nli: f64) -> PipelineProviders {
        PipelineProviders {
            generator: gen,
            discriminators: judges(3),
            nli: Arc::new(Provider::mock(
                "nli",
                ProviderKind::Nli,
                MockBackend::default().with_nli(move |_, _| Ok(nli)),
            )),
            embedder: Arc::new(Provider::mock("emb", ProviderKind::Embed, MockBackend::default())),
            critic: Arc::new(Provider::mock("critic", ProviderKind::Generate, MockBackend::constant_reply("too blunt"))),
            checker: None,
        }
    }

    fn cfg(budget: u32) -> PipelineConfig {
        let mut c = PipelineConfig::new("gen", &["j0", "j1", "j2"], "nli", "emb", "critic");
        c.attempt_budget = budget;
        c
    }

    #[test]
    fn all_fooled_first_attempt_is_hard() {
        let gen = generator(vec!["category: misinterpretation_of_question\nanswer: f0 f1 f2 x y z"]);
        let p = Pipeline::new(cfg(5), providers(gen, 0.3)).unwrap();
        let r = p.run(&item(), 1).unwrap();
        assert_eq!((r.difficulty, r.attempts_made, r.fallback_used), (Difficulty::Hard, 1, false));
        assert!(r.rejected_candidates.is_empty() && r.feedback_log.is_empty());
        r.check_invariants(5).unwrap();
    }

    #[test]
    fn never_fooled_falls_back() {
        let gen = generator(vec!["category: incomplete_information\nanswer: a b c d e f"]);
        let p = Pipeline::new(cfg(2), providers(gen.clone(), 0.3)).unwrap();
        let r = p.run(&item(), 1).unwrap();
        assert_eq!((r.difficulty, r.attempts_made, r.fallback_used), (Difficulty::Easy, 2, true));
        assert_eq!(r.feedback_log, vec!["too blunt", "too blunt"]);
        assert_eq!(r.rejected_candidates.len(), 3);
        assert_eq!(gen.call_count(), 4);
    }

    #[test]
    fn always_entailed_never_passes_correctness() {
        let gen = generator(vec!["category: incomplete_information\nanswer: f0 f1 f2 d e f"]);
        let p = Pipeline::new(cfg(3), providers(gen, 0.9)).unwrap();
        let r = p.run(&item(), 1).unwrap();
        assert!(r.fallback_used);
        assert_eq!(r.attempts_made, 3);
        assert!(r.entailment.as_ref().is_some_and(|e| !e.passes));
        assert_eq!(r.category, HallucinationCategory::IncompleteInformation);
    }

    #[test]
    fn length_window_boundaries() {
        let c = |ratio| CandidateAnswer {
            text: "x".into(),
            category: HallucinationCategory::IncompleteInformation,
            attempt_index: 1,
            refined: false,
            sampling: SamplingParams::with_temperature(0.5),
            length_ratio: ratio,
        };
        let cfg = cfg(5);
        assert!(length_window_check(&c(1.05), &cfg));
        assert!(!length_window_check(&c(0.85), &cfg));
        assert!(length_window_check(&c(1.10), &cfg));
        assert!(length_window_check(&c(0.90), &cfg));
        assert!(!length_window_check(&c(1.11), &cfg));
    }

    #[test]
    fn temperature_is_seeded_and_in_band() {
        let gen = generator(vec!["category: incomplete_information\nanswer: Penicillin kills bacteria."]);
        let p = Pipeline::new(cfg(5), providers(gen, 0.3)).unwrap();
        let a = p.generate_candidate(&item(), 1, None, 42).unwrap();
        let b = p.generate_candidate(&item(), 1, None, 42).unwrap();
        assert_eq!(a.sampling, b.sampling);
        assert!((0.3..=0.7).contains(&a.sampling.temperature));
        assert_eq!(a.sampling.top_p, 0.95);
        assert_eq!(a.sampling.max_tokens, 512);
        assert_eq!(a.text, "Penicillin kills bacteria.");
        assert!(!a.refined);
        assert!(p.generate_candidate(&item(), 6, None, 1).is_err());
    }

    #[test]
    fn fallback_prefers_highest_cosine_then_earliest() {
        let embedder = Provider::mock(
            "emb",
            ProviderKind::Embed,
            MockBackend::default().with_embed(|t| {
                Ok(match t {
                    "near" | "near twin" => vec![0.9, (1.0f64 - 0.81).sqrt()],
                    "far" => vec![0.4, (1.0f64 - 0.16).sqrt()],
                    _ => vec![1.0, 0.0],
                })
            }),
        );
        let mk = |text: &str, attempt| CandidateAnswer {
            text: text.into(),
            category: HallucinationCategory::IncompleteInformation,
            attempt_index: attempt,
            refined: false,
            sampling: SamplingParams::with_temperature(0.5),
            length_ratio: 1.0,
        };
        let cands = vec![mk("far", 1), mk("near", 2)];
        assert_eq!(fallback_select(&cands, &item(), &embedder).unwrap(), 1);
        let tie = vec![mk("near twin", 3), mk("near", 2)];
        assert_eq!(fallback_select(&tie, &item(), &embedder).unwrap(), 1);
        assert!(matches!(fallback_select(&[], &item(), &embedder), Err(PipelineError::NoCandidates)));
    }

    #[test]
    fn config_validation() {
        let mut c = cfg(5);
        c.tau = 1.0;
        assert!(c.validate().is_err());
        let mut c = cfg(5);
        c.discriminators.truncate(1);
        assert!(c.validate().is_err());
        let mut c = cfg(5);
        c.temperature_band = [0.8, 0.2];
        assert!(c.validate().is_err());
        let mut c = cfg(5);
        c.extra_llm_correctness = true;
        assert!(c.validate().is_err());
        let json = r#"{"discriminators":["a","b"],"generator":"g","nli":"n","embedder":"e","critic":"c"}"#;
        let parsed: PipelineConfig = serde_json::from_str(json).unwrap();
        assert_eq!(parsed.attempt_budget, 5);
        assert_eq!(parsed.tau, 0.75);
        assert_eq!(parsed.length_window, 0.10);
        assert_eq!(parsed.temperature_band, [0.3, 0.7]);
        assert_eq!(parsed.retain_rule, RetainRule::AnyFooled);
    }
}
