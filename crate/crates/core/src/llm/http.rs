//! OpenAI-compatible chat-completions client with bounded retries.

use std::sync::{Arc, OnceLock};
use std::time::Duration;

use async_trait::async_trait;
use serde::Serialize;
use serde_json::Value;
use tokio::sync::Semaphore;

use super::{Backend, BackendConfig, BackendError, BackendKind, CompletionRequest, Generation};

pub const API_KEY_VAR: &str = "LLM_API_KEY";
pub const BASE_URL_VAR: &str = "LLM_BASE_URL";
pub const MODEL_ID_VAR: &str = "LLM_MODEL_ID";
pub const DEFAULT_HTTP_PARALLELISM: usize = 4;
const DEFAULT_RETRY_BASE: Duration = Duration::from_millis(500);

/// Process-wide bound on in-flight HTTP completions.
pub fn global_http_permits() -> Arc<Semaphore> {
    static PERMITS: OnceLock<Arc<Semaphore>> = OnceLock::new();
    PERMITS
        .get_or_init(|| Arc::new(Semaphore::new(DEFAULT_HTTP_PARALLELISM)))
        .clone()
}

/// Environment accessor, injectable for tests.
pub type EnvLookup<'a> = &'a dyn Fn(&str) -> Option<String>;

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

pub struct HttpChatBackend {
    client: reqwest::Client,
    endpoint: String,
    api_key: String,
    config: BackendConfig,
    permits: Arc<Semaphore>,
    retry_base: Duration,
}

enum Attempt {
    Done(Generation),
    Retry(BackendError),
    Fatal(BackendError),
}

impl HttpChatBackend {
    /// Builds a client from the process environment (`LLM_API_KEY`,
    /// `LLM_BASE_URL`, `LLM_MODEL_ID`).
    pub fn from_env(config: BackendConfig) -> Result<Self, BackendError> {
        Self::from_lookup(config, &|name| std::env::var(name).ok())
    }

    pub fn from_lookup(mut config: BackendConfig, env: EnvLookup<'_>) -> Result<Self, BackendError> {
        if let Some(url) = env(BASE_URL_VAR).filter(|u| !u.is_empty()) {
            config.base_url = Some(url);
        }
        if config.model_id.is_empty() {
            config.model_id = env(MODEL_ID_VAR).unwrap_or_default();
        }
        let api_key = env(API_KEY_VAR)
            .filter(|k| !k.is_empty())
            .ok_or(BackendError::MissingCredentials(API_KEY_VAR))?;
        Self::with_credentials(config, api_key, global_http_permits())
    }

    pub fn with_credentials(
        config: BackendConfig,
        api_key: impl Into<String>,
        permits: Arc<Semaphore>,
    ) -> Result<Self, BackendError> {
        config.validate()?;
        let base = config
            .base_url
            .as_deref()
            .filter(|u| !u.is_empty())
            .ok_or_else(|| BackendError::InvalidConfig("http_chat requires a base_url".into()))?;
        if config.model_id.is_empty() {
            return Err(BackendError::InvalidConfig("http_chat requires a model_id".into()));
        }
        let endpoint = format!("{}/chat/completions", base.trim_end_matches('/'));
        let client = reqwest::Client::builder()
            .timeout(config.timeout())
            .build()
            .map_err(|e| BackendError::InvalidConfig(e.to_string()))?;
        Ok(Self {
            client,
            endpoint,
            api_key: api_key.into(),
            config,
            permits,
            retry_base: DEFAULT_RETRY_BASE,
        })
    }

    /// Base delay of the exponential backoff (delay before retry k is
    /// `base * 2^k`).
    pub fn with_retry_base(mut self, base: Duration) -> Self {
        self.retry_base = base;
        self
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn body(&self, request: &CompletionRequest) -> String {
        let body = ChatRequest {
            model: &self.config.model_id,
            messages: [ChatMessage {
                role: "user",
                content: &request.prompt,
            }],
            temperature: self.config.temperature,
            seed: request.seed.or(self.config.seed),
        };
        serde_json::to_string(&body).expect("chat request serializes")
    }

    async fn attempt(&self, body: &str, attempt_no: u32) -> Attempt {
        let mut builder = self
            .client
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .header(reqwest::header::CONTENT_TYPE, "application/json");
        for (k, v) in &self.config.headers {
            builder = builder.header(k.as_str(), v.as_str());
        }
        let response = match builder.body(body.to_string()).send().await {
            Ok(r) => r,
            Err(e) if e.is_timeout() => return Attempt::Retry(BackendError::Timeout { attempts: attempt_no }),
            Err(e) => {
                return Attempt::Retry(BackendError::Transport {
                    attempts: attempt_no,
                    message: e.to_string(),
                })
            }
        };
        let status = response.status();
        let text = match response.text().await {
            Ok(t) => t,
            Err(e) if e.is_timeout() => return Attempt::Retry(BackendError::Timeout { attempts: attempt_no }),
            Err(e) => {
                return Attempt::Retry(BackendError::Transport {
                    attempts: attempt_no,
                    message: e.to_string(),
                })
            }
        };
        if !status.is_success() {
            let err = BackendError::Provider {
                status: status.as_u16(),
                body: text,
            };
            return if status.is_server_error() || status.as_u16() == 429 {
                Attempt::Retry(err)
            } else {
                Attempt::Fatal(err)
            };
        }
        match extract_content(&text) {
            Ok(content) => Attempt::Done(Generation {
                text: content,
                raw_provider_payload: Some(text),
            }),
            Err(e) => Attempt::Fatal(e),
        }
    }
}

fn extract_content(payload: &str) -> Result<String, BackendError> {
    let value: Value = serde_json::from_str(payload).map_err(|e| BackendError::MalformedResponse(e.to_string()))?;
    match value.pointer("/choices/0/message/content") {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(Value::Null) => Ok(String::new()),
        _ => Err(BackendError::MalformedResponse(
            "missing choices[0].message.content".into(),
        )),
    }
}

#[async_trait]
impl Backend for HttpChatBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::HttpChat
    }

    async fn generate(&self, request: &CompletionRequest) -> Result<Generation, BackendError> {
        let body = self.body(request);
        let _permit = self
            .permits
            .acquire()
            .await
            .map_err(|_| BackendError::InvalidConfig("HTTP semaphore closed".into()))?;
        let attempts = self.config.max_retries + 1;
        let mut last = None;
        for attempt_no in 1..=attempts {
            match self.attempt(&body, attempt_no).await {
                Attempt::Done(g) => return Ok(g),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry(e) => {
                    last = Some(e);
                    if attempt_no < attempts {
                        tokio::time::sleep(self.retry_base * 2u32.pow(attempt_no - 1)).await;
                    }
                }
            }
        }
        Err(last.expect("at least one attempt"))
    }
}
