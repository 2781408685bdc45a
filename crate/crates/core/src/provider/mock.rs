//! Deterministic scripted backends.
//!
//! A [`MockBackend`] is three closures, one per capability. Scenario tests
//! script them directly; the CLI resolves `mock://<behavior>` endpoints to the
//! built-in behaviors of [`MockBackend::builtin`], all of which are pure
//! functions of the request.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::Rng;

use super::{Backend, ChatRequest, Choice, ProviderError};
use crate::model::HallucinationCategory;
use crate::prompts;
use crate::seeds;
use crate::semantic::rouge::tokenize;

type ChatFn = dyn Fn(&ChatRequest) -> Result<String, ProviderError> + Send + Sync;
type NliFn = dyn Fn(&str, &str) -> Result<f64, ProviderError> + Send + Sync;
type EmbedFn = dyn Fn(&str) -> Result<Vec<f64>, ProviderError> + Send + Sync;

#[derive(Clone)]
pub struct MockBackend {
    chat: Arc<ChatFn>,
    nli: Arc<NliFn>,
    embed: Arc<EmbedFn>,
}

impl Default for MockBackend {
    /// No chat script, token-containment NLI, hashing-projection embeddings.
    fn default() -> Self {
        Self {
            chat: Arc::new(|_| Err(ProviderError::Rejected("mock has no chat script".into()))),
            nli: Arc::new(|p, h| Ok(containment_entailment(p, h))),
            embed: Arc::new(|t| Ok(hashing_embedding(t, DEFAULT_EMBED_DIM))),
        }
    }
}

pub const DEFAULT_EMBED_DIM: usize = 64;

impl MockBackend {
    pub fn with_chat(
        mut self,
        f: impl Fn(&ChatRequest) -> Result<String, ProviderError> + Send + Sync + 'static,
    ) -> Self {
        self.chat = Arc::new(f);
        self
    }

    pub fn with_nli(
        mut self,
        f: impl Fn(&str, &str) -> Result<f64, ProviderError> + Send + Sync + 'static,
    ) -> Self {
        self.nli = Arc::new(f);
        self
    }

    pub fn with_embed(
        mut self,
        f: impl Fn(&str) -> Result<Vec<f64>, ProviderError> + Send + Sync + 'static,
    ) -> Self {
        self.embed = Arc::new(f);
        self
    }

    /// Replies with the user prompt.
    pub fn echo() -> Self {
        Self::default().with_chat(|req| Ok(req.user().to_string()))
    }

    pub fn constant_reply(reply: &str) -> Self {
        let reply = reply.to_string();
        Self::default().with_chat(move |_| Ok(reply.clone()))
    }

    /// Looks the user prompt up in `table`; unknown prompts are rejected.
    pub fn reply_table(table: HashMap<String, String>) -> Self {
        Self::default().with_chat(move |req| {
            table
                .get(req.user())
                .cloned()
                .ok_or_else(|| ProviderError::Rejected("prompt not in reply table".into()))
        })
    }

    /// Judge that extracts the question and both answers from the prompt and
    /// answers with `prefer(question, answer_a, answer_b)`.
    pub fn judge_preferring(
        prefer: impl Fn(&str, &str, &str) -> Choice + Send + Sync + 'static,
    ) -> Self {
        Self::default().with_chat(move |req| {
            let user = req.user();
            let q = prompts::extract_section(user, prompts::QUESTION).unwrap_or_default();
            let a = prompts::extract_section(user, prompts::ANSWER_A)
                .ok_or_else(|| ProviderError::Malformed("judge prompt without answer A".into()))?;
            let b = prompts::extract_section(user, prompts::ANSWER_B)
                .ok_or_else(|| ProviderError::Malformed("judge prompt without answer B".into()))?;
            Ok(match prefer(&q, &a, &b) {
                Choice::A => "A".into(),
                Choice::B => "B".into(),
            })
        })
    }

    /// Detector that answers "Yes" exactly for the given hallucinated answers.
    pub fn oracle_detector(hallucinated: HashSet<String>) -> Self {
        Self::default().with_chat(move |req| {
            let answer = prompts::extract_section(req.user(), prompts::ANSWER).unwrap_or_default();
            Ok(if hallucinated.contains(answer.trim()) { "Yes".into() } else { "No".into() })
        })
    }

    /// Resolves a built-in behavior by name (the part after `mock://`).
    /// `model_id` salts the behaviors that should differ between providers.
    pub fn builtin(behavior: &str, model_id: &str) -> Option<Self> {
        let salt = model_id.to_string();
        let backend = match behavior {
            "echo" => Self::echo(),
            "generator" => Self::default().with_chat(builtin_generator),
            "judge" => Self::judge_preferring(move |_, a, b| {
                let ha = seeds::derive_seed(0, &[&salt, a]);
                let hb = seeds::derive_seed(0, &[&salt, b]);
                if ha >= hb { Choice::A } else { Choice::B }
            }),
            "critic" => Self::default().with_chat(|req| {
                let candidate = prompts::extract_section(req.user(), prompts::CANDIDATE).unwrap_or_default();
                Ok(format!(
                    "Linguistic patterns: the answer ({} words) hedges less than the source and \
                     reads as templated. Structure: restate the key finding before the claim so \
                     it mirrors the reference phrasing.",
                    candidate.split_whitespace().count()
                ))
            }),
            "checker" => Self::default().with_chat(|req| {
                let a = prompts::extract_section(req.user(), prompts::FIRST).unwrap_or_default();
                let b = prompts::extract_section(req.user(), prompts::SECOND).unwrap_or_default();
                Ok(if tokenize(&a) == tokenize(&b) { "same".into() } else { "different".into() })
            }),
            "detector-yes" => Self::constant_reply("Yes"),
            "detector-no" => Self::constant_reply("No"),
            "detector-unsure" => Self::constant_reply("Not Sure"),
            "nli" | "embed" => Self::default(),
            _ => return None,
        };
        Some(backend)
    }
}

impl Backend for MockBackend {
    fn chat(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        (self.chat)(request)
    }

    fn nli(&self, premise: &str, hypothesis: &str) -> Result<f64, ProviderError> {
        (self.nli)(premise, hypothesis)
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, ProviderError> {
        (self.embed)(text)
    }
}

/// Fraction of the hypothesis' tokens (with multiplicity) found in the
/// premise. Identical texts score 1.0.
pub fn containment_entailment(premise: &str, hypothesis: &str) -> f64 {
    let h = tokenize(hypothesis);
    if h.is_empty() {
        return if tokenize(premise).is_empty() { 1.0 } else { 0.0 };
    }
    let mut pool: HashMap<String, usize> = HashMap::new();
    for t in tokenize(premise) {
        *pool.entry(t).or_default() += 1;
    }
    let mut hit = 0usize;
    for t in &h {
        if let Some(n) = pool.get_mut(t) {
            if *n > 0 {
                *n -= 1;
                hit += 1;
            }
        }
    }
    hit as f64 / h.len() as f64
}

/// Feature-hashing embedding: signed token buckets plus a few whole-text hash
/// coordinates so that distinct strings map to distinct vectors.
pub fn hashing_embedding(text: &str, dim: usize) -> Vec<f64> {
    let text_dims = (dim / 4).max(1);
    let token_dims = dim - text_dims;
    let mut v = vec![0.0; dim];
    for tok in tokenize(text) {
        let h = seeds::stable_hash(tok.as_bytes());
        let idx = (h % token_dims.max(1) as u64) as usize;
        let sign = if (h >> 63) & 1 == 1 { -1.0 } else { 1.0 };
        if token_dims > 0 {
            v[idx] += sign;
        }
    }
    let whole = seeds::stable_hash(text.as_bytes());
    for i in 0..text_dims {
        let bit = (seeds::derive_seed(whole, &[&i.to_string()]) & 1) as f64;
        v[token_dims + i] = 0.1 + 0.1 * bit;
    }
    v
}

const SUBSTITUTES: &[&str] = &[
    "significantly", "rarely", "increased", "reduced", "chronic", "acute", "primarily",
    "independent", "associated", "inflammatory", "early", "late", "not", "consistently",
    "mitochondrial", "receptor", "moderate", "minimal",
];

/// Built-in generator: perturbs the ground truth in place (same word count)
/// and declares a category. Deterministic in (seed, prompt).
fn builtin_generator(req: &ChatRequest) -> Result<String, ProviderError> {
    let user = req.user();
    let gt = prompts::extract_section(user, prompts::GROUND_TRUTH)
        .ok_or_else(|| ProviderError::Malformed("generation prompt without ground truth".into()))?;
    let critiques = prompts::extract_all(user, prompts::CRITIQUE).len();
    let seed = seeds::derive_seed(req.seed.unwrap_or(0), &[&gt, &critiques.to_string()]);
    let mut rng = seeds::rng(seed);
    let category = {
        let roll: f64 = rng.random();
        match roll {
            r if r < 0.70 => HallucinationCategory::MisinterpretationOfQuestion,
            r if r < 0.82 => HallucinationCategory::IncompleteInformation,
            r if r < 0.97 => HallucinationCategory::MechanismPathwayMisattribution,
            _ => HallucinationCategory::MethodologicalEvidenceFabrication,
        }
    };
    let mut words: Vec<String> = gt.split_whitespace().map(str::to_string).collect();
    let rate = 0.2 + 0.1 * rng.random::<f64>();
    for w in words.iter_mut() {
        if rng.random::<f64>() < rate {
            *w = SUBSTITUTES.choose(&mut rng).copied().unwrap_or("not").to_string();
        }
    }
    // occasionally overshoot the length window
    if rng.random::<f64>() < 0.1 {
        let extra = words.len() / 2 + 1;
        for _ in 0..extra {
            words.push(SUBSTITUTES.choose(&mut rng).copied().unwrap_or("not").to_string());
        }
    }
    Ok(format!("category: {}\nanswer: {}", category.as_str(), words.join(" ")))
}
