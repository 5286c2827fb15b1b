use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{Backend, BackendConfig, BackendError, ChatMessage, CompletionRequest, Role};

#[derive(Serialize)]
struct ChatCompletionRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct ChatCompletionResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    content: Option<String>,
}

/// Client for `POST {endpoint_url}/chat/completions`.
pub struct LiveBackend {
    client: reqwest::blocking::Client,
    url: String,
    model: String,
    api_key: Option<String>,
    max_retries: u32,
    base_delay: Duration,
    limiter: Option<TokenBucket>,
    in_flight: Semaphore,
}

impl LiveBackend {
    pub fn new(cfg: &BackendConfig) -> Result<Self, BackendError> {
        let endpoint = cfg
            .endpoint_url
            .as_deref()
            .ok_or_else(|| BackendError::Config("live mode requires endpoint_url".into()))?;
        let model = cfg
            .model_name
            .clone()
            .ok_or_else(|| BackendError::Config("live mode requires model_name".into()))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(cfg.request_timeout_secs.max(0.001)))
            .build()
            .map_err(|e| BackendError::Config(format!("http client: {e}")))?;
        Ok(Self {
            client,
            url: format!("{}/chat/completions", endpoint.trim_end_matches('/')),
            model,
            api_key: std::env::var(&cfg.api_key_env_var).ok().filter(|k| !k.is_empty()),
            max_retries: cfg.max_retries,
            base_delay: Duration::from_millis(cfg.retry_base_delay_ms),
            limiter: cfg.requests_per_minute.filter(|&r| r > 0).map(TokenBucket::per_minute),
            in_flight: Semaphore::new(cfg.max_in_flight.max(1)),
        })
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    fn attempt(&self, body: &ChatCompletionRequest<'_>) -> Result<ChatMessage, Attempt> {
        if let Some(limiter) = &self.limiter {
            limiter.acquire();
        }
        let _permit = self.in_flight.acquire();
        let mut req = self.client.post(&self.url).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Attempt::Retry(format!("transport: {e}")))?;
        let status = resp.status();
        let raw = resp.text().map_err(|e| Attempt::Retry(format!("reading body: {e}")))?;
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(Attempt::Retry(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(Attempt::Fatal(BackendError::Protocol { message: format!("HTTP {status}"), raw }));
        }
        parse_response(&raw).map_err(Attempt::Fatal)
    }
}

enum Attempt {
    Retry(String),
    Fatal(BackendError),
}

fn parse_response(raw: &str) -> Result<ChatMessage, BackendError> {
    let parsed: ChatCompletionResponse = serde_json::from_str(raw)
        .map_err(|e| BackendError::Protocol { message: format!("malformed response: {e}"), raw: raw.to_string() })?;
    let content = parsed
        .choices
        .into_iter()
        .next()
        .and_then(|c| c.message.content)
        .ok_or_else(|| BackendError::Protocol { message: "response has no message content".into(), raw: raw.to_string() })?;
    Ok(ChatMessage { role: Role::Assistant, content })
}

impl Backend for LiveBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<ChatMessage, BackendError> {
        request.check()?;
        let body = ChatCompletionRequest {
            model: &self.model,
            messages: &request.messages,
            temperature: request.temperature,
            max_tokens: request.max_tokens,
        };
        let mut last = String::new();
        for attempt in 0..=self.max_retries {
            if attempt > 0 {
                thread::sleep(self.base_delay.saturating_mul(1 << (attempt - 1).min(16)));
            }
            match self.attempt(&body) {
                Ok(msg) => return Ok(msg),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(reason)) => last = reason,
            }
        }
        Err(BackendError::Unavailable { attempts: self.max_retries + 1, last })
    }
}

/// Client-side token bucket holding up to one minute's worth of requests.
struct TokenBucket {
    capacity: f64,
    per_second: f64,
    state: Mutex<(f64, Instant)>,
}

impl TokenBucket {
    fn per_minute(rpm: u32) -> Self {
        let capacity = f64::from(rpm);
        Self { capacity, per_second: capacity / 60.0, state: Mutex::new((capacity, Instant::now())) }
    }

    fn acquire(&self) {
        loop {
            let wait = {
                let mut state = self.state.lock().expect("limiter lock");
                let now = Instant::now();
                let refill = now.duration_since(state.1).as_secs_f64() * self.per_second;
                state.0 = (state.0 + refill).min(self.capacity);
                state.1 = now;
                if state.0 >= 1.0 {
                    state.0 -= 1.0;
                    return;
                }
                (1.0 - state.0) / self.per_second
            };
            thread::sleep(Duration::from_secs_f64(wait));
        }
    }
}

struct Semaphore {
    free: Mutex<usize>,
    cond: Condvar,
}

struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    fn new(permits: usize) -> Self {
        Self { free: Mutex::new(permits), cond: Condvar::new() }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().expect("semaphore lock");
        while *free == 0 {
            free = self.cond.wait(free).expect("semaphore lock");
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("semaphore lock") += 1;
        self.0.cond.notify_one();
    }
}
