use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ProviderError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Generate,
    Judge,
    Nli,
    Embed,
}

/// One entry of the provider roster. Credentials are never stored here, only
/// the name of the environment variable that holds them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub name: String,
    pub kind: ProviderKind,
    pub endpoint: String,
    pub model_id: String,
    #[serde(default)]
    pub auth_env_var: String,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_limit_rps: Option<f64>,
}

fn default_timeout() -> f64 {
    60.0
}

fn default_retries() -> u32 {
    3
}

impl ProviderConfig {
    pub fn mock(name: &str, kind: ProviderKind) -> Self {
        Self {
            name: name.to_string(),
            kind,
            endpoint: format!("mock://{name}"),
            model_id: name.to_string(),
            auth_env_var: String::new(),
            timeout_s: default_timeout(),
            max_retries: default_retries(),
            rate_limit_rps: None,
        }
    }

    pub fn is_mock(&self) -> bool {
        self.endpoint.starts_with("mock://")
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.name.trim().is_empty() {
            return Err("provider with empty name".into());
        }
        if !(self.timeout_s > 0.0) {
            return Err(format!("{}: timeout_s must be positive", self.name));
        }
        if let Some(rps) = self.rate_limit_rps {
            if !(rps > 0.0) {
                return Err(format!("{}: rate_limit_rps must be positive", self.name));
            }
        }
        if !self.is_mock() && !self.endpoint.starts_with("http://") && !self.endpoint.starts_with("https://") {
            return Err(format!("{}: unsupported endpoint `{}`", self.name, self.endpoint));
        }
        Ok(())
    }
}

/// Provider configs keyed by name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Roster {
    entries: BTreeMap<String, ProviderConfig>,
}

impl Roster {
    pub fn from_configs(configs: Vec<ProviderConfig>) -> Result<Self, ProviderError> {
        let mut entries = BTreeMap::new();
        for cfg in configs {
            cfg.validate().map_err(ProviderError::Precondition)?;
            let name = cfg.name.clone();
            if entries.insert(name.clone(), cfg).is_some() {
                return Err(ProviderError::Precondition(format!("duplicate provider `{name}`")));
            }
        }
        Ok(Self { entries })
    }

    pub fn get(&self, name: &str) -> Option<&ProviderConfig> {
        self.entries.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

/// Reads a roster file: a JSON array of provider configs.
pub fn load_roster(path: &Path) -> Result<Roster, ProviderError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ProviderError::Precondition(format!("{}: {e}", path.display())))?;
    let configs: Vec<ProviderConfig> = serde_json::from_str(&text)
        .map_err(|e| ProviderError::Precondition(format!("{}: {e}", path.display())))?;
    Roster::from_configs(configs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roster_parses_with_defaults() {
        let json = r#"[{"name":"nli","kind":"nli","endpoint":"http://localhost:8080/nli","model_id":"m"}]"#;
        let configs: Vec<ProviderConfig> = serde_json::from_str(json).unwrap();
        let roster = Roster::from_configs(configs).unwrap();
        let cfg = roster.get("nli").unwrap();
        assert_eq!(cfg.max_retries, 3);
        assert_eq!(cfg.auth_env_var, "");
        assert_eq!(cfg.rate_limit_rps, None);
    }

    #[test]
    fn roster_rejects_duplicates_and_bad_endpoints() {
        let a = ProviderConfig::mock("a", ProviderKind::Judge);
        assert!(Roster::from_configs(vec![a.clone(), a.clone()]).is_err());
        let mut bad = a;
        bad.endpoint = "ftp://x".into();
        assert!(Roster::from_configs(vec![bad]).is_err());
    }
}
