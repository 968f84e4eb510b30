//! Model backends: an OpenAI-compatible chat-completions client plus two
//! deterministic mocks (a perfect oracle and a seeded corruptor) used for
//! offline testing and decode-rate calibration.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::grouping::substream_rng;
use crate::parser::serialize_canonical;
use crate::prompt::RenderedPrompt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    HttpChat,
    MockOracle,
    MockCorruptor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptorMode {
    /// Cut the oracle output at a random interior byte; always undecodable.
    Truncate,
    /// Drop the final double quote; a syntax-level decode error.
    QuoteMismatch,
    /// Rename "Q1" so the object decodes but carries key anomalies.
    KeyRename,
    /// Remove one random key; decodes with a MissingKey anomaly.
    DropRandomKeys,
    /// Prepend prose before the object; still decodable by extraction.
    NonJsonPreamble,
}

fn default_timeout() -> f64 {
    60.0
}
fn default_max_parallel() -> usize {
    4
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(default)]
    pub endpoint: Option<String>,
    pub model_name: String,
    /// Name of the environment variable holding the API key; the key itself
    /// never appears in config files.
    #[serde(default)]
    pub credentials_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default)]
    pub max_retries: u32,
    #[serde(default = "default_max_parallel")]
    pub max_parallel: usize,
    #[serde(default)]
    pub temperature: f64,
    /// Corruptor settings, ignored by other kinds.
    #[serde(default)]
    pub corrupt_rate: f64,
    #[serde(default)]
    pub corrupt_mode: Option<CorruptorMode>,
    #[serde(default)]
    pub corrupt_seed: u64,
}

impl BackendConfig {
    pub fn mock_oracle(model_name: &str) -> Self {
        BackendConfig {
            kind: BackendKind::MockOracle,
            endpoint: None,
            model_name: model_name.to_string(),
            credentials_env: None,
            timeout_secs: default_timeout(),
            max_retries: 0,
            max_parallel: default_max_parallel(),
            temperature: 0.0,
            corrupt_rate: 0.0,
            corrupt_mode: None,
            corrupt_seed: 0,
        }
    }

    pub fn mock_corruptor(model_name: &str, rate: f64, mode: CorruptorMode, seed: u64) -> Self {
        BackendConfig {
            kind: BackendKind::MockCorruptor,
            corrupt_rate: rate,
            corrupt_mode: Some(mode),
            corrupt_seed: seed,
            ..BackendConfig::mock_oracle(model_name)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_parallel < 1 {
            return Err(Error::Config("max_parallel must be >= 1".into()));
        }
        if self.timeout_secs <= 0.0 {
            return Err(Error::Config("timeout must be positive".into()));
        }
        if self.kind == BackendKind::HttpChat && self.endpoint.is_none() {
            return Err(Error::Config("http_chat backend needs an endpoint".into()));
        }
        if !(0.0..=1.0).contains(&self.corrupt_rate) {
            return Err(Error::Config("corrupt_rate must be in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Completion {
    pub raw_text: String,
    pub latency_ms: u64,
    pub request_id: String,
    pub usage: Option<TokenUsage>,
}

pub trait Backend: Send + Sync {
    fn complete(&self, prompt: &RenderedPrompt) -> Result<Completion>;
    fn name(&self) -> &str;
}

fn prompt_request_id(prompt: &RenderedPrompt) -> String {
    let mut hasher = Sha256::new();
    hasher.update(prompt.text.as_bytes());
    let digest = hasher.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Emits the exact canonical answer object for every question in the prompt,
/// straight from the reference map. Pure in (references, question ids).
pub struct MockOracle {
    model_name: String,
    /// (transcript_id, question_id) -> (judgment text, navigation string)
    references: HashMap<(String, String), (String, String)>,
}

impl MockOracle {
    pub fn from_corpus(corpus: &Corpus, model_name: &str) -> Self {
        let references = corpus
            .references
            .iter()
            .map(|r| {
                (
                    (r.transcript_id.clone(), r.question_id.clone()),
                    (r.judgment.to_string(), r.navigation.to_string()),
                )
            })
            .collect();
        MockOracle {
            model_name: model_name.to_string(),
            references,
        }
    }

    fn answer_text(&self, prompt: &RenderedPrompt) -> Result<String> {
        let parts: Vec<(String, String)> = prompt
            .question_ids
            .iter()
            .map(|qid| {
                self.references
                    .get(&(prompt.transcript_id.clone(), qid.clone()))
                    .cloned()
                    .ok_or_else(|| {
                        Error::AlignmentError(format!(
                            "no reference for ({}, {qid})",
                            prompt.transcript_id
                        ))
                    })
            })
            .collect::<Result<_>>()?;
        Ok(serialize_canonical(&parts))
    }
}

impl Backend for MockOracle {
    fn complete(&self, prompt: &RenderedPrompt) -> Result<Completion> {
        Ok(Completion {
            raw_text: self.answer_text(prompt)?,
            latency_ms: 0,
            request_id: prompt_request_id(prompt),
            usage: None,
        })
    }

    fn name(&self) -> &str {
        &self.model_name
    }
}

/// Wraps the oracle and injects malformations at a configured rate. The
/// corruption decision and site are seeded per prompt, so runs reproduce
/// regardless of dispatch order.
pub struct MockCorruptor {
    oracle: MockOracle,
    rate: f64,
    mode: CorruptorMode,
    seed: u64,
}

impl MockCorruptor {
    pub fn new(oracle: MockOracle, rate: f64, mode: CorruptorMode, seed: u64) -> Self {
        MockCorruptor {
            oracle,
            rate,
            mode,
            seed,
        }
    }

    fn corrupt(&self, text: &str, rng: &mut impl Rng) -> String {
        match self.mode {
            CorruptorMode::Truncate => {
                let cut = rng.random_range(1..text.len());
                let mut cut = cut;
                while !text.is_char_boundary(cut) {
                    cut -= 1;
                }
                text[..cut].to_string()
            }
            CorruptorMode::QuoteMismatch => match text.rfind('"') {
                Some(pos) => format!("{}{}", &text[..pos], &text[pos + 1..]),
                None => text.to_string(),
            },
            CorruptorMode::KeyRename => text.replacen("\"Q1\"", "\"Question1\"", 1),
            CorruptorMode::DropRandomKeys => {
                let Ok(serde_json::Value::Object(mut map)) = serde_json::from_str(text) else {
                    return text.to_string();
                };
                if map.is_empty() {
                    return text.to_string();
                }
                let keys: Vec<String> = map.keys().cloned().collect();
                map.remove(&keys[rng.random_range(0..keys.len())]);
                serde_json::Value::Object(map).to_string()
            }
            CorruptorMode::NonJsonPreamble => {
                format!("Sure, here are the answers you asked for:\n\n{text}")
            }
        }
    }
}

impl Backend for MockCorruptor {
    fn complete(&self, prompt: &RenderedPrompt) -> Result<Completion> {
        let clean = self.oracle.answer_text(prompt)?;
        let mut rng = substream_rng(self.seed, 0xc0, &prompt_request_id(prompt));
        let raw_text = if rng.random_bool(self.rate) {
            self.corrupt(&clean, &mut rng)
        } else {
            clean
        };
        Ok(Completion {
            raw_text,
            latency_ms: 0,
            request_id: prompt_request_id(prompt),
            usage: None,
        })
    }

    fn name(&self) -> &str {
        &self.oracle.model_name
    }
}

/// OpenAI-compatible chat-completions client. The whole rendered prompt goes
/// out as a single user message; transient failures (connect/timeout, 429,
/// 5xx) are retried with exponential backoff and jitter, malformed requests
/// are not.
pub struct HttpChatBackend {
    config: BackendConfig,
    client: reqwest::blocking::Client,
    api_key: Option<String>,
}

impl HttpChatBackend {
    pub fn new(config: BackendConfig) -> Result<Self> {
        config.validate()?;
        let api_key = match &config.credentials_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                Error::Auth(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_secs))
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(HttpChatBackend {
            config,
            client,
            api_key,
        })
    }

    fn attempt(&self, prompt: &RenderedPrompt) -> std::result::Result<Completion, (bool, String)> {
        let endpoint = self.config.endpoint.as_deref().unwrap_or_default();
        let url = format!("{}/chat/completions", endpoint.trim_end_matches('/'));
        let body = serde_json::json!({
            "model": self.config.model_name,
            "messages": [{"role": "user", "content": prompt.text}],
            "temperature": self.config.temperature,
        });
        let start = Instant::now();
        let mut request = self.client.post(&url).json(&body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request
            .send()
            .map_err(|e| (true, format!("request failed: {e}")))?;
        let status = response.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Err((true, format!("retryable status {status}")));
        }
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err((false, format!("auth rejected: {status}")));
        }
        if !status.is_success() {
            return Err((false, format!("bad request: {status}")));
        }
        let payload: serde_json::Value = response
            .json()
            .map_err(|e| (false, format!("unreadable response body: {e}")))?;
        let raw_text = payload["choices"][0]["message"]["content"]
            .as_str()
            .unwrap_or_default()
            .to_string();
        let usage = payload.get("usage").map(|u| TokenUsage {
            prompt_tokens: u["prompt_tokens"].as_u64().unwrap_or(0),
            completion_tokens: u["completion_tokens"].as_u64().unwrap_or(0),
        });
        let request_id = payload["id"]
            .as_str()
            .map(str::to_string)
            .unwrap_or_else(|| prompt_request_id(prompt));
        Ok(Completion {
            raw_text,
            latency_ms: start.elapsed().as_millis() as u64,
            request_id,
            usage,
        })
    }
}

impl Backend for HttpChatBackend {
    fn complete(&self, prompt: &RenderedPrompt) -> Result<Completion> {
        let mut last_reason = String::new();
        for attempt in 0..=self.config.max_retries {
            match self.attempt(prompt) {
                Ok(completion) => return Ok(completion),
                Err((retryable, reason)) => {
                    if !retryable {
                        return if reason.starts_with("auth") {
                            Err(Error::Auth(reason))
                        } else {
                            Err(Error::BadRequest(reason))
                        };
                    }
                    last_reason = reason;
                    if attempt < self.config.max_retries {
                        let base = 200u64 << attempt.min(6);
                        let jitter = rand::rng().random_range(0..base / 2 + 1);
                        std::thread::sleep(Duration::from_millis(base + jitter));
                    }
                }
            }
        }
        Err(Error::Transport {
            attempts: self.config.max_retries + 1,
            reason: last_reason,
        })
    }

    fn name(&self) -> &str {
        &self.config.model_name
    }
}

pub fn build_backend(config: &BackendConfig, corpus: &Corpus) -> Result<Box<dyn Backend>> {
    config.validate()?;
    match config.kind {
        BackendKind::MockOracle => Ok(Box::new(MockOracle::from_corpus(corpus, &config.model_name))),
        BackendKind::MockCorruptor => {
            let mode = config
                .corrupt_mode
                .ok_or_else(|| Error::Config("corruptor backend needs corrupt_mode".into()))?;
            Ok(Box::new(MockCorruptor::new(
                MockOracle::from_corpus(corpus, &config.model_name),
                config.corrupt_rate,
                mode,
                config.corrupt_seed,
            )))
        }
        BackendKind::HttpChat => Ok(Box::new(HttpChatBackend::new(config.clone())?)),
    }
}

/// Dispatch prompts with at most `max_parallel` in flight. Output order equals
/// input order; per-item failures are captured in place and never abort the
/// batch.
pub fn complete_batch(
    backend: &dyn Backend,
    prompts: &[RenderedPrompt],
    max_parallel: usize,
) -> Vec<Result<Completion>> {
    assert!(max_parallel >= 1);
    if prompts.is_empty() {
        return Vec::new();
    }
    let next = AtomicUsize::new(0);
    let results: Vec<Mutex<Option<Result<Completion>>>> =
        prompts.iter().map(|_| Mutex::new(None)).collect();
    let workers = max_parallel.min(prompts.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= prompts.len() {
                    break;
                }
                let result = backend.complete(&prompts[i]);
                *results[i].lock().unwrap() = Some(result);
            });
        }
    });
    results
        .into_iter()
        .map(|slot| slot.into_inner().unwrap().expect("worker filled every slot"))
        .collect()
}
