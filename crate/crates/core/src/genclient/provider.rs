//! Completion endpoints.
//!
//! The HTTP adapter speaks a JSON completion protocol:
//!
//! ```text
//! POST <base_url>
//! { "model": str, "prompt": str, "temperature": float, "n": int, "max_tokens": int }
//! -> 200 { "choices": [ { "text": str }, ... ] }
//! ```
//!
//! The credential, if any, is read from an environment variable and sent as
//! a bearer token; it is never written anywhere.

use std::collections::BTreeMap;
use std::path::Path;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::GenError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompletionRequest {
    pub model: String,
    pub prompt: String,
    pub temperature: f64,
    pub n: usize,
    pub max_tokens: u32,
}

#[derive(Debug, Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    text: String,
}

pub trait CompletionProvider: Send + Sync {
    fn model_name(&self) -> &str;

    /// Requests up to `request.n` completions for `problem_id`.
    fn complete(&self, problem_id: &str, request: &CompletionRequest) -> Result<Vec<String>, GenError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub base_url: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: Option<String>,
    pub model_name: String,
    #[serde(with = "secs")]
    pub request_timeout: Duration,
    pub max_retries: u32,
    #[serde(with = "secs")]
    pub retry_backoff: Duration,
    pub max_tokens: u32,
}

mod secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Duration::try_from_secs_f64(f64::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            base_url: String::new(),
            api_key_env: None,
            model_name: String::new(),
            request_timeout: Duration::from_secs(120),
            max_retries: 4,
            retry_backoff: Duration::from_secs(2),
            max_tokens: 2048,
        }
    }
}

pub struct HttpProvider {
    agent: ureq::Agent,
    config: ProviderConfig,
    credential: Option<String>,
}

impl HttpProvider {
    pub fn new(config: ProviderConfig) -> Result<Self, GenError> {
        if config.base_url.trim().is_empty() {
            return Err(GenError::Config("base_url is empty".into()));
        }
        if config.model_name.trim().is_empty() {
            return Err(GenError::Config("model name is empty".into()));
        }
        let credential = match &config.api_key_env {
            Some(var) => Some(
                std::env::var(var).map_err(|_| GenError::Config(format!("environment variable {var} is not set")))?,
            ),
            None => None,
        };
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.request_timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(HttpProvider {
            agent,
            config,
            credential,
        })
    }

    fn attempt(&self, request: &CompletionRequest) -> Result<Vec<String>, Attempt> {
        let mut call = self.agent.post(&self.config.base_url);
        if let Some(key) = &self.credential {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = call
            .send_json(request)
            .map_err(|e| Attempt::Retry(format!("transport: {e}")))?;
        let status = response.status().as_u16();
        if status == 429 || status >= 500 {
            return Err(Attempt::Retry(format!("HTTP {status}")));
        }
        if status >= 400 {
            return Err(Attempt::Fatal(format!("HTTP {status}")));
        }
        let body: CompletionResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| Attempt::Fatal(format!("unreadable response: {e}")))?;
        Ok(body.choices.into_iter().map(|c| c.text).collect())
    }
}

enum Attempt {
    Retry(String),
    Fatal(String),
}

impl CompletionProvider for HttpProvider {
    fn model_name(&self) -> &str {
        &self.config.model_name
    }

    fn complete(&self, _problem_id: &str, request: &CompletionRequest) -> Result<Vec<String>, GenError> {
        let attempts = self.config.max_retries + 1;
        let mut last = String::new();
        for i in 0..attempts {
            match self.attempt(request) {
                Ok(texts) => return Ok(texts),
                Err(Attempt::Fatal(msg)) => return Err(GenError::Endpoint { attempts: i + 1, message: msg }),
                Err(Attempt::Retry(msg)) => last = msg,
            }
            if i + 1 < attempts {
                thread::sleep(self.config.retry_backoff * (i + 1));
            }
        }
        Err(GenError::Endpoint {
            attempts,
            message: last,
        })
    }
}

/// Offline endpoint serving canned completions per problem.
///
/// At temperature 0 every candidate is the first canned completion; above 0
/// candidates cycle through the list in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockProvider {
    pub model: String,
    pub completions: BTreeMap<String, Vec<String>>,
}

impl MockProvider {
    pub fn load(path: &Path) -> Result<Self, GenError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GenError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| GenError::Config(format!("{}: {e}", path.display())))
    }
}

impl CompletionProvider for MockProvider {
    fn model_name(&self) -> &str {
        &self.model
    }

    fn complete(&self, problem_id: &str, request: &CompletionRequest) -> Result<Vec<String>, GenError> {
        let canned = self
            .completions
            .get(problem_id)
            .filter(|c| !c.is_empty())
            .ok_or_else(|| GenError::Endpoint {
                attempts: 1,
                message: format!("mock has no completions for {problem_id:?}"),
            })?;
        Ok((0..request.n)
            .map(|i| {
                if request.temperature == 0.0 {
                    canned[0].clone()
                } else {
                    canned[i % canned.len()].clone()
                }
            })
            .collect())
    }
}
