use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;
use ureq::Agent;

use super::{Backend, ChatRequest, ProviderConfig, ProviderError};

/// HTTP backend. Chat calls speak the OpenAI-style chat-completions schema;
/// NLI posts `{premise, hypothesis}` and reads `{entailment}`; embedding posts
/// `{text}` and reads `{vector}`. The endpoint in the config is the full URL
/// for the provider's kind.
pub struct HttpBackend {
    agent: Agent,
    endpoint: String,
    auth_env_var: String,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatReplyMessage,
}

#[derive(Deserialize)]
struct ChatReplyMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct NliResponse {
    entailment: f64,
}

#[derive(Deserialize)]
struct EmbedResponse {
    vector: Vec<f64>,
}

impl HttpBackend {
    pub fn new(config: &ProviderConfig) -> Self {
        let agent: Agent = Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_s)))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            agent,
            endpoint: config.endpoint.clone(),
            auth_env_var: config.auth_env_var.clone(),
        }
    }

    fn post<T: DeserializeOwned>(&self, body: serde_json::Value) -> Result<T, ProviderError> {
        let mut req = self.agent.post(&self.endpoint);
        if !self.auth_env_var.is_empty() {
            let token = std::env::var(&self.auth_env_var).map_err(|_| {
                ProviderError::Auth(format!("environment variable {} is not set", self.auth_env_var))
            })?;
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = req.send_json(&body).map_err(classify)?;
        let status = resp.status().as_u16();
        match status {
            200..=299 => {}
            401 | 403 => return Err(ProviderError::Auth(format!("HTTP {status}"))),
            408 | 429 | 500..=599 => return Err(ProviderError::Transport(format!("HTTP {status}"))),
            _ => {
                let text = resp.body_mut().read_to_string().unwrap_or_default();
                return Err(ProviderError::Rejected(format!("HTTP {status}: {text}")));
            }
        }
        resp.body_mut().read_json::<T>().map_err(|e| match e {
            ureq::Error::Json(e) => ProviderError::Malformed(e.to_string()),
            other => classify(other),
        })
    }
}

fn classify(err: ureq::Error) -> ProviderError {
    match err {
        ureq::Error::BadUri(u) => ProviderError::Rejected(format!("bad uri {u}")),
        ureq::Error::Json(e) => ProviderError::Malformed(e.to_string()),
        other => ProviderError::Transport(other.to_string()),
    }
}

impl Backend for HttpBackend {
    fn chat(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        let body = serde_json::to_value(request).map_err(|e| ProviderError::Malformed(e.to_string()))?;
        let resp: ChatResponse = self.post(body)?;
        resp.choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| ProviderError::Malformed("no choices[0].message.content".into()))
    }

    fn nli(&self, premise: &str, hypothesis: &str) -> Result<f64, ProviderError> {
        let resp: NliResponse = self.post(json!({ "premise": premise, "hypothesis": hypothesis }))?;
        Ok(resp.entailment)
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, ProviderError> {
        let resp: EmbedResponse = self.post(json!({ "text": text }))?;
        Ok(resp.vector)
    }
}
