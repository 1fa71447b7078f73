//! Chat-completion endpoints: the HTTP client used for real models and the
//! deterministic mocks used for calibration and wiring tests.

use std::path::Path;

use base64::Engine;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::qa::QAItem;
use crate::scene::{catalog, object_name};
use crate::util::derive_seed;

use super::PromptBundle;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub backoff_base_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_retries: 3, backoff_base_ms: 250 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model_name: String,
    /// Name of the environment variable holding the bearer token.
    pub auth_token_env: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_output_tokens: u32,
    #[serde(default = "default_timeout")]
    pub request_timeout_secs: u64,
    #[serde(default = "default_parallel")]
    pub max_parallel: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
}

fn default_max_tokens() -> u32 {
    1024
}
fn default_timeout() -> u64 {
    60
}
fn default_parallel() -> usize {
    4
}

impl EndpointConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_parallel == 0 {
            return Err(Error::Config("max_parallel must be >= 1".to_string()));
        }
        if self.temperature < 0.0 {
            return Err(Error::Config("temperature must be >= 0".to_string()));
        }
        Ok(())
    }
}

/// Request handed to an endpoint. The effective item rides along so that
/// oracle mocks can look up ground truth; the HTTP client only reads the
/// prompt.
#[derive(Debug, Clone)]
pub struct ChatRequest {
    pub prompt: PromptBundle,
    pub item: QAItem,
    pub sub_index: Option<usize>,
}

pub trait Endpoint: Sync {
    fn id(&self) -> String;
    fn complete(&self, request: &ChatRequest) -> Result<String>;
}

/// HTTP POST of a chat-completion request with bearer-token auth.
pub struct HttpEndpoint {
    config: EndpointConfig,
    client: reqwest::blocking::Client,
    token: Option<String>,
}

impl HttpEndpoint {
    pub fn new(config: EndpointConfig) -> Result<Self> {
        config.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(config.request_timeout_secs))
            .build()
            .map_err(|e| Error::Transport(e.to_string()))?;
        let token = std::env::var(&config.auth_token_env).ok();
        Ok(HttpEndpoint { config, client, token })
    }

    fn message_content(&self, prompt: &PromptBundle) -> serde_json::Value {
        let text = prompt.render();
        if prompt.media.is_empty() {
            return json!(text);
        }
        let mut parts = vec![json!({"type": "text", "text": text})];
        for path in &prompt.media {
            match std::fs::read(Path::new(path)) {
                Ok(bytes) => {
                    let encoded = base64::engine::general_purpose::STANDARD.encode(bytes);
                    parts.push(json!({
                        "type": "image_url",
                        "image_url": {"url": format!("data:image/png;base64,{encoded}")}
                    }));
                }
                Err(e) => {
                    // PCB-only (text) evaluation stays valid without media.
                    eprintln!("warning: dropping media {path}: {e}");
                }
            }
        }
        json!(parts)
    }

    fn post_once(&self, body: &serde_json::Value) -> Result<String> {
        let mut request = self.client.post(&self.config.base_url).json(body);
        if let Some(token) = &self.token {
            request = request.bearer_auth(token);
        }
        let response = request.send().map_err(|e| Error::Transport(e.to_string()))?;
        let status = response.status();
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err(Error::Config(format!(
                "authentication failed against {} (HTTP {status})",
                self.config.base_url
            )));
        }
        if !status.is_success() {
            return Err(Error::Transport(format!("HTTP {status}")));
        }
        let value: serde_json::Value =
            response.json().map_err(|e| Error::Transport(e.to_string()))?;
        extract_first_choice(&value)
            .ok_or_else(|| Error::Transport("response carried no message content".to_string()))
    }
}

fn extract_first_choice(value: &serde_json::Value) -> Option<String> {
    let content = value.get("choices")?.get(0)?.get("message")?.get("content")?;
    if let Some(text) = content.as_str() {
        return Some(text.to_string());
    }
    // Some servers return content parts.
    let parts = content.as_array()?;
    let mut out = String::new();
    for part in parts {
        if let Some(text) = part.get("text").and_then(|t| t.as_str()) {
            out.push_str(text);
        }
    }
    Some(out)
}

impl Endpoint for HttpEndpoint {
    fn id(&self) -> String {
        format!("{}@{}", self.config.model_name, self.config.base_url)
    }

    fn complete(&self, request: &ChatRequest) -> Result<String> {
        let body = json!({
            "model": self.config.model_name,
            "messages": [{"role": "user", "content": self.message_content(&request.prompt)}],
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_output_tokens,
        });
        let mut attempt = 0;
        loop {
            match self.post_once(&body) {
                Ok(text) => return Ok(text),
                Err(Error::Transport(message)) => {
                    if attempt >= self.config.retry.max_retries {
                        return Err(Error::Transport(format!(
                            "{message} (after {attempt} retries)"
                        )));
                    }
                    let backoff = self.config.retry.backoff_base_ms << attempt;
                    std::thread::sleep(std::time::Duration::from_millis(backoff));
                    attempt += 1;
                }
                Err(other) => return Err(other),
            }
        }
    }
}

fn cot_wrap(answer: &str) -> String {
    format!("Considering the stack configuration step by step.\nAnswer: {answer}")
}

/// Always answers the ground truth.
pub struct OracleMock;

impl Endpoint for OracleMock {
    fn id(&self) -> String {
        "mock:oracle".to_string()
    }

    fn complete(&self, request: &ChatRequest) -> Result<String> {
        Ok(cot_wrap(&request.item.answer[0]))
    }
}

/// Picks uniformly among the options, seeded per (qa, sub-question) so the
/// outcome is independent of dispatch order and parallelism.
pub struct RandomMock {
    pub seed: u64,
}

impl Endpoint for RandomMock {
    fn id(&self) -> String {
        format!("mock:random:{}", self.seed)
    }

    fn complete(&self, request: &ChatRequest) -> Result<String> {
        let tag = format!("{}#{:?}", request.item.qa_id, request.sub_index);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &tag));
        let choice = request.item.options.choose(&mut rng).expect("non-empty options");
        Ok(cot_wrap(choice))
    }
}

/// Answers the truth except on the first sub-question (or, unreframed, the
/// whole item), which it gets wrong. On k-option items this yields
/// per-question 0 and per-option (k-1)/k.
pub struct FlipFirstMock;

impl Endpoint for FlipFirstMock {
    fn id(&self) -> String {
        "mock:flip-first".to_string()
    }

    fn complete(&self, request: &ChatRequest) -> Result<String> {
        let truth = &request.item.answer[0];
        let answer = if request.sub_index == Some(0) || request.sub_index.is_none() {
            request
                .item
                .options
                .iter()
                .find(|o| *o != truth)
                .cloned()
                .unwrap_or_else(|| truth.clone())
        } else {
            truth.clone()
        };
        Ok(cot_wrap(&answer))
    }
}

/// Answers "True" to every binary sub-question: the pathological reframed
/// behavior of selecting every option as correct.
pub struct BothTrueMock;

impl Endpoint for BothTrueMock {
    fn id(&self) -> String {
        "mock:both-true".to_string()
    }

    fn complete(&self, request: &ChatRequest) -> Result<String> {
        let answer = if request.item.options.iter().any(|o| o == "True") {
            "True".to_string()
        } else {
            request.item.answer[0].clone()
        };
        Ok(cot_wrap(&answer))
    }
}

/// Answers stability questions by string-matching the narration's
/// stability sentences in the prompt context; everything else (and any
/// question without context) falls back to a seeded uniform guess.
pub struct ContextReaderMock {
    pub seed: u64,
}

impl ContextReaderMock {
    fn random_answer(&self, request: &ChatRequest) -> String {
        let tag = format!("{}#{:?}", request.item.qa_id, request.sub_index);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &tag));
        request.item.options.choose(&mut rng).expect("non-empty options").clone()
    }

    /// Strip the binary-reframing wrapper, if present, returning the
    /// probed option and the inner question.
    fn unwrap_reframed(question: &str) -> Option<(String, String)> {
        let rest = question.strip_prefix("Is '")?;
        let (option, rest) = rest.split_once("' a correct answer to: ")?;
        let inner = rest.strip_suffix('?')?;
        Some((option.to_string(), inner.to_string()))
    }

    fn stays_stationary(context: &str, inner_question: &str) -> Option<bool> {
        let subject = if inner_question.contains("collection of objects") {
            "This collection of objects".to_string()
        } else {
            let name = catalog()
                .into_iter()
                .map(|(s, c)| object_name(c, s))
                .find(|n| inner_question.contains(n.as_str()))?;
            format!("The {name}")
        };
        if context.contains(&format!("{subject} will not stay stationary.")) {
            Some(false)
        } else if context.contains(&format!("{subject} will stay stationary.")) {
            Some(true)
        } else {
            None
        }
    }
}

impl Endpoint for ContextReaderMock {
    fn id(&self) -> String {
        format!("mock:context-reader:{}", self.seed)
    }

    fn complete(&self, request: &ChatRequest) -> Result<String> {
        if !request.item.category.is_stability() || request.prompt.context_text.is_empty() {
            return Ok(cot_wrap(&self.random_answer(request)));
        }
        let (probed_option, inner) = match Self::unwrap_reframed(&request.item.question) {
            Some((option, inner)) => (Some(option), inner),
            None => (None, request.item.question.clone()),
        };
        let Some(stays) = Self::stays_stationary(&request.prompt.context_text, &inner) else {
            return Ok(cot_wrap(&self.random_answer(request)));
        };
        let inner_answer = if stays { "True" } else { "False" };
        let answer = match probed_option {
            Some(option) => {
                if option == inner_answer {
                    "True"
                } else {
                    "False"
                }
            }
            None => inner_answer,
        };
        Ok(cot_wrap(answer))
    }
}

/// Resolve an endpoint name: `mock:` prefixes map to built-ins, anything
/// else must appear in the configured endpoint table.
pub fn resolve_endpoint(
    name: &str,
    configured: &std::collections::BTreeMap<String, EndpointConfig>,
) -> Result<Box<dyn Endpoint>> {
    if let Some(rest) = name.strip_prefix("mock:") {
        let mut parts = rest.splitn(2, ':');
        let kind = parts.next().unwrap_or_default();
        let arg = parts.next();
        let seed = arg.map(|a| a.parse::<u64>()).transpose().map_err(|_| {
            Error::Config(format!("mock endpoint seed must be an integer, got {arg:?}"))
        })?;
        return match kind {
            "oracle" => Ok(Box::new(OracleMock)),
            "random" => Ok(Box::new(RandomMock { seed: seed.unwrap_or(0) })),
            "flip-first" => Ok(Box::new(FlipFirstMock)),
            "both-true" => Ok(Box::new(BothTrueMock)),
            "context-reader" => Ok(Box::new(ContextReaderMock { seed: seed.unwrap_or(0) })),
            other => Err(Error::Config(format!("unknown mock endpoint '{other}'"))),
        };
    }
    let config = configured
        .get(name)
        .ok_or_else(|| Error::Config(format!("endpoint '{name}' not configured")))?;
    Ok(Box::new(HttpEndpoint::new(config.clone())?))
}
