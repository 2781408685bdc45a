//! Uniform access to external model capabilities: chat generation, pairwise
//! judging, NLI entailment and text embedding.
//!
//! A [`Provider`] couples a [`ProviderConfig`] with a [`Backend`]. The backend
//! is either [`HttpBackend`] (OpenAI-style chat completions plus small JSON
//! bodies for NLI and embeddings) or a scripted [`MockBackend`]. Retries, rate
//! limiting and response validation live in `Provider` so they behave the same
//! for both.

mod config;
mod http;
pub mod mock;
mod retry;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, OnceLock};
use std::time::Duration;

use serde::Serialize;
use thiserror::Error;

use crate::model::SamplingParams;
use crate::prompts;

pub use config::{load_roster, ProviderConfig, ProviderKind, Roster};
pub use http::HttpBackend;
pub use mock::MockBackend;
pub use retry::RateLimiter;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    /// Network failure, timeout, 429 or 5xx. Retried.
    #[error("transport error: {0}")]
    Transport(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("request rejected: {0}")]
    Rejected(String),
    #[error("empty reply from `{0}`")]
    EmptyReply(String),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("unparseable verdict after re-ask: {0:?}")]
    JudgeParse(String),
    #[error("entailment score {0} outside [0, 1]")]
    Range(f64),
    #[error("embedding dimension {got} does not match {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("provider `{name}` has kind {actual:?}, expected {expected:?}")]
    WrongKind { name: String, expected: ProviderKind, actual: ProviderKind },
}

impl ProviderError {
    pub fn is_transient(&self) -> bool {
        matches!(self, ProviderError::Transport(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatMessage {
    pub role: &'static str,
    pub content: String,
}

/// Body of a chat-completion request, in wire order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ChatRequest {
    pub fn new(model: &str, system: &str, user: &str, params: &SamplingParams) -> Self {
        Self {
            model: model.to_string(),
            messages: vec![
                ChatMessage { role: "system", content: system.to_string() },
                ChatMessage { role: "user", content: user.to_string() },
            ],
            temperature: params.temperature,
            top_p: params.top_p,
            max_tokens: params.max_tokens,
            seed: params.seed,
        }
    }

    pub fn system(&self) -> &str {
        self.message("system")
    }

    pub fn user(&self) -> &str {
        self.message("user")
    }

    fn message(&self, role: &str) -> &str {
        self.messages
            .iter()
            .find(|m| m.role == role)
            .map(|m| m.content.as_str())
            .unwrap_or("")
    }
}

/// Raw capability calls. Implementations do no retrying or validation.
pub trait Backend: Send + Sync {
    fn chat(&self, request: &ChatRequest) -> Result<String, ProviderError>;
    fn nli(&self, premise: &str, hypothesis: &str) -> Result<f64, ProviderError>;
    fn embed(&self, text: &str) -> Result<Vec<f64>, ProviderError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Choice {
    A,
    B,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PairChoice {
    pub chosen: Choice,
    pub raw: String,
}

/// Temperature used for discriminative calls (judging, detection, checks).
pub const DISCRIMINATIVE_TEMPERATURE: f64 = 0.25;

const JUDGE_SYSTEM: &str = "You are a careful medical expert. You will see a question and two \
candidate answers. Decide which answer is more factually accurate. Reply with exactly one \
letter: A or B.";

const JUDGE_REASK: &str = "Your previous reply could not be parsed. Reply with exactly one \
letter, A or B, and nothing else.";

pub struct Provider {
    config: ProviderConfig,
    backend: Arc<dyn Backend>,
    limiter: RateLimiter,
    backoff_base: Duration,
    embed_dim: OnceLock<usize>,
    calls: AtomicU64,
}

impl std::fmt::Debug for Provider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Provider").field("config", &self.config).finish_non_exhaustive()
    }
}

impl Provider {
    pub fn new(config: ProviderConfig, backend: Arc<dyn Backend>) -> Self {
        let limiter = RateLimiter::new(config.rate_limit_rps);
        Self {
            config,
            backend,
            limiter,
            backoff_base: Duration::from_millis(250),
            embed_dim: OnceLock::new(),
            calls: AtomicU64::new(0),
        }
    }

    /// Builds the backend named by the config endpoint: `mock://<behavior>`
    /// resolves a built-in mock, anything else goes over HTTP.
    pub fn from_config(config: ProviderConfig) -> Result<Self, ProviderError> {
        config.validate().map_err(ProviderError::Precondition)?;
        let backend: Arc<dyn Backend> = match config.endpoint.strip_prefix("mock://") {
            Some(behavior) => Arc::new(MockBackend::builtin(behavior, &config.model_id).ok_or_else(
                || ProviderError::Precondition(format!("unknown mock behavior `{behavior}`")),
            )?),
            None => Arc::new(HttpBackend::new(&config)),
        };
        Ok(Self::new(config, backend))
    }

    /// Shorthand for a mock-backed provider with zero backoff.
    pub fn mock(name: &str, kind: ProviderKind, backend: MockBackend) -> Self {
        Self::new(ProviderConfig::mock(name, kind), Arc::new(backend)).with_backoff(Duration::ZERO)
    }

    pub fn with_backoff(mut self, base: Duration) -> Self {
        self.backoff_base = base;
        self
    }

    pub fn name(&self) -> &str {
        &self.config.name
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    /// Backend calls issued so far, retries included.
    pub fn call_count(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    fn require_kind(&self, expected: &[ProviderKind]) -> Result<(), ProviderError> {
        if expected.contains(&self.config.kind) {
            Ok(())
        } else {
            Err(ProviderError::WrongKind {
                name: self.config.name.clone(),
                expected: expected[0],
                actual: self.config.kind,
            })
        }
    }

    fn call<T>(
        &self,
        mut f: impl FnMut(&dyn Backend) -> Result<T, ProviderError>,
    ) -> Result<T, ProviderError> {
        retry::with_retry(self.config.max_retries, self.backoff_base, || {
            self.limiter.acquire();
            self.calls.fetch_add(1, Ordering::Relaxed);
            f(self.backend.as_ref())
        })
    }

    fn chat(&self, system: &str, user: &str, params: &SamplingParams) -> Result<String, ProviderError> {
        let request = ChatRequest::new(&self.config.model_id, system, user, params);
        let reply = self.call(|b| b.chat(&request))?;
        if reply.trim().is_empty() {
            return Err(ProviderError::EmptyReply(self.config.name.clone()));
        }
        Ok(reply)
    }

    /// Free-text generation.
    pub fn complete(
        &self,
        system_prompt: &str,
        user_prompt: &str,
        params: &SamplingParams,
    ) -> Result<String, ProviderError> {
        self.require_kind(&[ProviderKind::Generate])?;
        if system_prompt.trim().is_empty() || user_prompt.trim().is_empty() {
            return Err(ProviderError::Precondition("empty prompt".into()));
        }
        self.chat(system_prompt, user_prompt, params)
    }

    /// Asks which of two answers is more factually accurate. No knowledge
    /// context is sent. Position randomization is the caller's job.
    pub fn judge_pair(
        &self,
        question: &str,
        answer_a: &str,
        answer_b: &str,
        seed: Option<u64>,
    ) -> Result<PairChoice, ProviderError> {
        self.require_kind(&[ProviderKind::Judge])?;
        let user = format!(
            "Which answer is more factually accurate? Reply with A or B.\n{}{}{}",
            prompts::section(prompts::QUESTION, question),
            prompts::section(prompts::ANSWER_A, answer_a),
            prompts::section(prompts::ANSWER_B, answer_b),
        );
        let mut params = SamplingParams::with_temperature(DISCRIMINATIVE_TEMPERATURE);
        params.max_tokens = 8;
        params.seed = seed;
        let first = self.chat(JUDGE_SYSTEM, &user, &params)?;
        if let Some(chosen) = parse_pair_choice(&first) {
            return Ok(PairChoice { chosen, raw: first });
        }
        let reask = format!("{JUDGE_REASK}\n{user}");
        let second = self.chat(JUDGE_SYSTEM, &reask, &params)?;
        match parse_pair_choice(&second) {
            Some(chosen) => Ok(PairChoice { chosen, raw: second }),
            None => Err(ProviderError::JudgeParse(second)),
        }
    }

    /// Entailment-class probability of NLI(premise -> hypothesis).
    pub fn nli_entail(&self, premise: &str, hypothesis: &str) -> Result<f64, ProviderError> {
        self.require_kind(&[ProviderKind::Nli])?;
        let p = self.call(|b| b.nli(premise, hypothesis))?;
        if !(0.0..=1.0).contains(&p) {
            return Err(ProviderError::Range(p));
        }
        Ok(p)
    }

    /// Fixed-dimension embedding; the first successful call pins the dimension.
    pub fn embed(&self, text: &str) -> Result<Vec<f64>, ProviderError> {
        self.require_kind(&[ProviderKind::Embed])?;
        if text.trim().is_empty() {
            return Err(ProviderError::Precondition("empty text for embedding".into()));
        }
        let v = self.call(|b| b.embed(text))?;
        if v.is_empty() {
            return Err(ProviderError::Malformed("empty embedding".into()));
        }
        let expected = *self.embed_dim.get_or_init(|| v.len());
        if expected != v.len() {
            return Err(ProviderError::Dimension { expected, got: v.len() });
        }
        Ok(v)
    }
}

/// Exact-match parse of a judge reply: `A`, `B`, optionally wrapped as
/// `Answer: A`, quoted, or followed by a period.
pub fn parse_pair_choice(raw: &str) -> Option<Choice> {
    let mut s = raw.trim().to_ascii_lowercase();
    if let Some(rest) = s.strip_prefix("answer") {
        s = rest.trim_start_matches([':', ' ']).to_string();
    }
    let s = s.trim_matches(|c: char| !c.is_ascii_alphanumeric());
    match s {
        "a" => Some(Choice::A),
        "b" => Some(Choice::B),
        _ => None,
    }
}
