//! Chat-completions access with record/replay and code extraction.

mod extract;
mod request;
mod store;
mod transport;

use std::time::Duration;

use serde_json::Value;
use thiserror::Error;

pub use extract::{extract_code, ExtractError, ExtractedCode, Fallback};
pub use request::{CompletionRequest, RequestError, DEFAULT_TEMPERATURE};
pub use store::{CompletionRecord, Mode, RecordSource, ReplayStore, StoreError};
pub use transport::{HttpResponse, NoNetwork, Transport, TransportError, UreqTransport};

pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1/chat/completions";
pub const ENDPOINT_ENV: &str = "MIGRATE_LLM_ENDPOINT";
pub const API_KEY_ENV: &str = "MIGRATE_LLM_API_KEY";
pub const FALLBACK_API_KEY_ENV: &str = "OPENAI_API_KEY";

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("no replay record for request {digest}")]
    ReplayMiss { digest: String },
    #[error("transport failed after {attempts} attempt(s): {source}")]
    TransportError { attempts: u32, source: TransportError },
    #[error("endpoint returned HTTP {status}: {body}")]
    EndpointError { status: u16, body: String },
    #[error("endpoint response has no first choice content: {0}")]
    MalformedResponse(String),
    #[error("{0} mode needs endpoint credentials ({API_KEY_ENV} or {FALLBACK_API_KEY_ENV})")]
    MissingCredentials(Mode),
    #[error("{0} mode needs a replay store")]
    MissingStore(Mode),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Endpoint {
    pub url: String,
    pub api_key: Option<String>,
}

impl Endpoint {
    /// Reads the endpoint from the environment; the key is optional here and
    /// checked when a live call is made.
    pub fn from_env() -> Self {
        let url = std::env::var(ENDPOINT_ENV).unwrap_or_else(|_| DEFAULT_ENDPOINT.to_string());
        let api_key = std::env::var(API_KEY_ENV)
            .or_else(|_| std::env::var(FALLBACK_API_KEY_ENV))
            .ok()
            .filter(|k| !k.is_empty());
        Endpoint { url, api_key }
    }
}

/// Exponential backoff for connection failures. Responses are never retried.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(8),
        }
    }
}

impl RetryPolicy {
    pub fn delay_for(&self, retry: u32) -> Duration {
        self.base_delay
            .saturating_mul(2u32.saturating_pow(retry))
            .min(self.max_delay)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub raw: String,
    pub record: CompletionRecord,
}

type Sleeper = Box<dyn Fn(Duration) + Send + Sync>;

pub struct Gateway {
    endpoint: Option<Endpoint>,
    store: Option<ReplayStore>,
    transport: Box<dyn Transport>,
    retry: RetryPolicy,
    sleep: Sleeper,
}

impl Gateway {
    pub fn new(transport: Box<dyn Transport>) -> Self {
        Gateway {
            endpoint: None,
            store: None,
            transport,
            retry: RetryPolicy::default(),
            sleep: Box::new(std::thread::sleep),
        }
    }

    /// A gateway that can only serve from `store`.
    pub fn replay_only(store: ReplayStore) -> Self {
        Gateway::new(Box::new(NoNetwork)).with_store(store)
    }

    pub fn with_endpoint(mut self, endpoint: Endpoint) -> Self {
        self.endpoint = Some(endpoint);
        self
    }

    pub fn with_store(mut self, store: ReplayStore) -> Self {
        self.store = Some(store);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_sleeper(mut self, sleep: impl Fn(Duration) + Send + Sync + 'static) -> Self {
        self.sleep = Box::new(sleep);
        self
    }

    pub fn store(&self) -> Option<&ReplayStore> {
        self.store.as_ref()
    }

    pub fn complete(&self, request: &CompletionRequest, mode: Mode) -> Result<Completion, GatewayError> {
        let digest = request.digest();
        match mode {
            Mode::Replay => {
                let store = self.store.as_ref().ok_or(GatewayError::MissingStore(mode))?;
                let record = store.get(&digest)?.ok_or(GatewayError::ReplayMiss { digest })?;
                Ok(Completion {
                    raw: record.raw_response.clone(),
                    record,
                })
            }
            Mode::Live | Mode::Record => {
                if mode == Mode::Record && self.store.is_none() {
                    return Err(GatewayError::MissingStore(mode));
                }
                let raw = self.call_endpoint(request, mode)?;
                let created_at = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
                if let (Mode::Record, Some(store)) = (mode, &self.store) {
                    store.put(request, &raw, &created_at)?;
                }
                Ok(Completion {
                    raw: raw.clone(),
                    record: CompletionRecord {
                        request_digest: digest,
                        raw_response: raw,
                        created_at,
                        mode: RecordSource::Live,
                    },
                })
            }
        }
    }

    fn call_endpoint(&self, request: &CompletionRequest, mode: Mode) -> Result<String, GatewayError> {
        let endpoint = self.endpoint.as_ref().ok_or(GatewayError::MissingCredentials(mode))?;
        let key = endpoint
            .api_key
            .as_deref()
            .ok_or(GatewayError::MissingCredentials(mode))?;
        let body = request.to_canonical().to_string();

        let mut attempt = 0;
        let response = loop {
            match self.transport.post_json(&endpoint.url, Some(key), &body) {
                Ok(resp) => break resp,
                Err(err) if attempt < self.retry.max_retries => {
                    let delay = self.retry.delay_for(attempt);
                    log::warn!("completion transport error ({err}); retrying in {delay:?}");
                    (self.sleep)(delay);
                    attempt += 1;
                }
                Err(source) => {
                    return Err(GatewayError::TransportError {
                        attempts: attempt + 1,
                        source,
                    })
                }
            }
        };
        if !(200..300).contains(&response.status) {
            return Err(GatewayError::EndpointError {
                status: response.status,
                body: response.body,
            });
        }
        first_choice_content(&response.body)
    }
}

/// `choices[0].message.content` of a chat-completions response body.
pub fn first_choice_content(body: &str) -> Result<String, GatewayError> {
    let value: Value =
        serde_json::from_str(body).map_err(|e| GatewayError::MalformedResponse(e.to_string()))?;
    value["choices"][0]["message"]["content"]
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| GatewayError::MalformedResponse(truncate(body, 200)))
}

fn truncate(s: &str, max: usize) -> String {
    match s.char_indices().nth(max) {
        Some((i, _)) => format!("{}...", &s[..i]),
        None => s.to_string(),
    }
}
