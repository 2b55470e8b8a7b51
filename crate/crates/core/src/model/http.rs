use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{apply_stop, GenParams, Model, ModelError};

pub const ENDPOINT_ENV: &str = "MODEL_ENDPOINT";
pub const API_KEY_ENV: &str = "MODEL_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpConfig {
    pub endpoint: String,
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub max_attempts: u32,
    pub backoff: Duration,
    pub max_in_flight: usize,
}

impl HttpConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            api_key: None,
            timeout: Duration::from_secs(120),
            max_attempts: 3,
            backoff: Duration::from_millis(500),
            max_in_flight: 8,
        }
    }

    /// Reads `MODEL_ENDPOINT` (required) and `MODEL_API_KEY` (optional).
    pub fn from_env() -> Option<Self> {
        let endpoint = std::env::var(ENDPOINT_ENV).ok().filter(|s| !s.is_empty())?;
        let mut cfg = Self::new(endpoint);
        cfg.api_key = std::env::var(API_KEY_ENV).ok().filter(|s| !s.is_empty());
        Some(cfg)
    }
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    prompt: &'a str,
    temperature: f64,
    max_tokens: usize,
    n: usize,
    stop: Vec<String>,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    text: String,
}

/// Counting semaphore bounding concurrent requests.
struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

struct SlotGuard<'a>(&'a Slots);

impl Slots {
    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().expect("slot lock");
        while *free == 0 {
            free = self.cv.wait(free).expect("slot lock");
        }
        *free -= 1;
        SlotGuard(self)
    }
}

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("slot lock") += 1;
        self.0.cv.notify_one();
    }
}

/// Completion-style HTTP client: POSTs `{prompt, temperature, max_tokens,
/// n, stop}` and expects `{"choices": [{"text": ...}, ...]}`.
pub struct HttpModel {
    config: HttpConfig,
    agent: ureq::Agent,
    slots: Slots,
}

impl HttpModel {
    pub fn new(config: HttpConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .build()
            .into();
        let slots = Slots {
            free: Mutex::new(config.max_in_flight.max(1)),
            cv: Condvar::new(),
        };
        Self { config, agent, slots }
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    fn attempt(&self, body: &CompletionRequest<'_>) -> Result<Vec<String>, (bool, String)> {
        let _slot = self.slots.acquire();
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body).map_err(|e| match e {
            ureq::Error::StatusCode(code) => (code >= 500 || code == 429, format!("http status {code}")),
            other => (true, other.to_string()),
        })?;
        let parsed: CompletionResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| (false, format!("cannot decode response: {e}")))?;
        Ok(parsed.choices.into_iter().map(|c| c.text).collect())
    }
}

impl Model for HttpModel {
    fn name(&self) -> &str {
        "http"
    }

    fn generate(&self, prompt: &str, params: &GenParams) -> Result<Vec<String>, ModelError> {
        params.validate()?;
        let body = CompletionRequest {
            prompt,
            temperature: params.temperature,
            max_tokens: params.max_tokens,
            n: params.n_samples,
            stop: params.stop_sequences(),
        };
        let max_attempts = self.config.max_attempts.max(1);
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(&body) {
                Ok(texts) if texts.len() == params.n_samples => {
                    return Ok(texts.iter().map(|t| apply_stop(t, params)).collect())
                }
                Ok(texts) => {
                    return Err(ModelError::Protocol(format!(
                        "expected {} choices, got {}",
                        params.n_samples,
                        texts.len()
                    )))
                }
                Err((false, message)) => return Err(ModelError::Protocol(message)),
                Err((true, message)) if attempts >= max_attempts => {
                    return Err(ModelError::Transport { attempts, message })
                }
                Err((true, message)) => {
                    log::warn!("model request attempt {attempts} failed: {message}; retrying");
                    std::thread::sleep(self.config.backoff * attempts);
                }
            }
        }
    }
}
