use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{BackendError, BackendKind, CompletionRequest, CompletionResult, RequestMetadata};

/// One JSON-lines transcript record.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub backend: Option<BackendKind>,
    #[serde(flatten)]
    pub metadata: RequestMetadata,
    pub seed: Option<u64>,
    pub prompt: String,
    pub response: Option<String>,
    pub error: Option<String>,
    pub latency_ms: f64,
}

/// Appends request/response pairs to a JSON-lines file.
pub struct TranscriptSink {
    out: Mutex<Box<dyn Write + Send>>,
}

impl TranscriptSink {
    pub fn create(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let file = File::create(path)?;
        Ok(Self::from_writer(BufWriter::new(file)))
    }

    pub fn from_writer(w: impl Write + Send + 'static) -> Self {
        Self {
            out: Mutex::new(Box::new(w)),
        }
    }

    pub(super) fn record(
        &self,
        backend: BackendKind,
        request: &CompletionRequest,
        outcome: &Result<CompletionResult, BackendError>,
        latency: Duration,
    ) {
        let entry = TranscriptEntry {
            backend: Some(backend),
            metadata: request.metadata.clone(),
            seed: request.seed,
            prompt: request.prompt.clone(),
            response: outcome.as_ref().ok().map(|r| r.text.clone()),
            error: outcome.as_ref().err().map(|e| e.to_string()),
            latency_ms: latency.as_secs_f64() * 1000.0,
        };
        let line = serde_json::to_string(&entry).expect("transcript entry serializes");
        let mut out = self.out.lock().unwrap_or_else(|p| p.into_inner());
        // transcripts are best effort; a full disk must not fail the run
        let _ = writeln!(out, "{line}").and_then(|_| out.flush());
    }
}
