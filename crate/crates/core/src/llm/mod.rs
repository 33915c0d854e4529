//! Uniform completion interface over real and simulated language models.

mod factory;
mod http;
mod scripted;
mod transcript;
mod truthful;

use std::sync::Arc;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::guideline::NodeId;
use crate::prompt::{PromptBundle, PromptKind};
use crate::strategies::MethodKind;

pub use factory::BackendFactory;
pub use http::{global_http_permits, EnvLookup, HttpChatBackend, DEFAULT_HTTP_PARALLELISM};
pub use scripted::{ReplayBackend, ScriptedBackend, ScriptedRule};
pub use transcript::{TranscriptEntry, TranscriptSink};
pub use truthful::TruthfulSim;

pub const MAX_RETRIES_LIMIT: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    HttpChat,
    Scripted,
    TruthfulSim,
}

impl std::fmt::Display for BackendKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BackendKind::HttpChat => "http_chat",
            BackendKind::Scripted => "scripted",
            BackendKind::TruthfulSim => "truthful_sim",
        })
    }
}

impl std::str::FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "http_chat" | "http" => Ok(BackendKind::HttpChat),
            "scripted" => Ok(BackendKind::Scripted),
            "truthful_sim" | "truthful" | "sim" => Ok(BackendKind::TruthfulSim),
            other => Err(format!(
                "unknown backend `{other}` (expected http_chat, scripted or truthful_sim)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    #[serde(default)]
    pub model_id: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    /// Extra provider-specific headers for the chat endpoint.
    #[serde(default, skip_serializing_if = "std::collections::BTreeMap::is_empty")]
    pub headers: std::collections::BTreeMap<String, String>,
}

fn default_timeout_ms() -> u64 {
    60_000
}

fn default_max_retries() -> u32 {
    3
}

impl BackendConfig {
    pub fn new(kind: BackendKind) -> Self {
        Self {
            kind,
            base_url: None,
            model_id: match kind {
                BackendKind::HttpChat => String::new(),
                BackendKind::Scripted => "scripted".into(),
                BackendKind::TruthfulSim => "truthful-sim".into(),
            },
            temperature: 0.0,
            seed: None,
            timeout_ms: default_timeout_ms(),
            max_retries: default_max_retries(),
            headers: Default::default(),
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(BackendError::InvalidConfig(format!(
                "temperature must be in [0, 2], got {}",
                self.temperature
            )));
        }
        if self.max_retries > MAX_RETRIES_LIMIT {
            return Err(BackendError::InvalidConfig(format!(
                "max_retries must be at most {MAX_RETRIES_LIMIT}, got {}",
                self.max_retries
            )));
        }
        if self.timeout_ms == 0 {
            return Err(BackendError::InvalidConfig("timeout must be positive".into()));
        }
        Ok(())
    }
}

/// Logging context attached to a request. Simulated backends also use it to
/// attribute a prompt to a tree node.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RequestMetadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub case_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<MethodKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_id: Option<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_kind: Option<PromptKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub seed: Option<u64>,
    pub metadata: RequestMetadata,
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            seed: None,
            metadata: RequestMetadata::default(),
        }
    }

    pub fn from_bundle(bundle: &PromptBundle) -> Self {
        let mut req = Self::new(bundle.text());
        req.metadata.prompt_kind = Some(bundle.kind());
        req
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_node(mut self, node: &NodeId) -> Self {
        self.metadata.node_id = Some(node.clone());
        self
    }

    pub fn with_method(mut self, method: MethodKind) -> Self {
        self.metadata.method = Some(method);
        self
    }

    pub fn with_case(mut self, case_id: Option<&str>) -> Self {
        self.metadata.case_id = case_id.map(str::to_string);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub text: String,
    #[serde(with = "duration_ms")]
    pub latency: Duration,
    pub backend_kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_provider_payload: Option<String>,
}

/// What a backend produced, before the client normalizes it.
#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    pub text: String,
    pub raw_provider_payload: Option<String>,
}

impl Generation {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            raw_provider_payload: None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("provider returned status {status}: {body}")]
    Provider { status: u16, body: String },
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("missing credentials: environment variable {0} is not set")]
    MissingCredentials(&'static str),
    #[error("invalid backend configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
    #[error("no scripted rule matches the prompt")]
    NoScriptedResponse,
    #[error("{count} scripted rules tie at priority {priority}")]
    AmbiguousScript { priority: i32, count: usize },
    #[error("invalid script: {0}")]
    Script(String),
    #[error("prompt cannot be attributed to a canonical node: {0}")]
    Unattributable(String),
    #[error("prompt is empty")]
    EmptyPrompt,
}

#[async_trait]
pub trait Backend: Send + Sync {
    fn kind(&self) -> BackendKind;

    async fn generate(&self, request: &CompletionRequest) -> Result<Generation, BackendError>;
}

/// Wraps a backend with latency measurement, trailing-whitespace
/// normalization and optional transcript logging.
#[derive(Clone)]
pub struct LlmClient {
    backend: Arc<dyn Backend>,
    transcript: Option<Arc<TranscriptSink>>,
}

impl LlmClient {
    pub fn new(backend: Arc<dyn Backend>) -> Self {
        Self {
            backend,
            transcript: None,
        }
    }

    pub fn with_transcript(mut self, sink: Arc<TranscriptSink>) -> Self {
        self.transcript = Some(sink);
        self
    }

    pub fn kind(&self) -> BackendKind {
        self.backend.kind()
    }

    pub async fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        if request.prompt.is_empty() {
            return Err(BackendError::EmptyPrompt);
        }
        let started = Instant::now();
        let outcome = self.backend.generate(request).await;
        let latency = started.elapsed();
        let outcome = outcome.map(|g| CompletionResult {
            text: g.text.trim_end().to_string(),
            latency,
            backend_kind: self.backend.kind(),
            raw_provider_payload: g.raw_provider_payload,
        });
        if let Some(sink) = &self.transcript {
            sink.record(self.backend.kind(), request, &outcome, latency);
        }
        outcome
    }
}

impl std::fmt::Debug for LlmClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LlmClient").field("kind", &self.kind()).finish()
    }
}

pub(crate) mod duration_ms {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64() * 1000.0)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let ms = f64::deserialize(d)?;
        Ok(Duration::from_secs_f64(ms.max(0.0) / 1000.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Echo;

    #[async_trait]
    impl Backend for Echo {
        fn kind(&self) -> BackendKind {
            BackendKind::Scripted
        }

        async fn generate(&self, request: &CompletionRequest) -> Result<Generation, BackendError> {
            Ok(Generation::text(format!("  {}  \n\n", request.prompt)))
        }
    }

    #[test]
    fn config_validation() {
        let mut c = BackendConfig::new(BackendKind::Scripted);
        assert!(c.validate().is_ok());
        c.temperature = 2.5;
        assert!(c.validate().is_err());
        c.temperature = 2.0;
        c.max_retries = 6;
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_rejects_unknown_fields() {
        let err = serde_json::from_str::<BackendConfig>(r#"{"kind":"scripted","colour":"red"}"#);
        assert!(err.is_err());
        let ok: BackendConfig = serde_json::from_str(r#"{"kind":"truthful_sim"}"#).unwrap();
        assert_eq!(ok.max_retries, 3);
        assert_eq!(ok.temperature, 0.0);
    }

    #[tokio::test]
    async fn client_trims_trailing_whitespace_only() {
        let client = LlmClient::new(Arc::new(Echo));
        let out = client.complete(&CompletionRequest::new("hi")).await.unwrap();
        assert_eq!(out.text, "  hi");
        assert_eq!(
            client.complete(&CompletionRequest::new("")).await,
            Err(BackendError::EmptyPrompt)
        );
    }
}
