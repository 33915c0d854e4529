//! Request and response bodies.

use cpg_cds::dataset::PatientCase;
use cpg_cds::evaluation::BenchmarkReport;
use cpg_cds::guideline::{NodeId, StructuredPatientFacts};
use cpg_cds::llm::{BackendConfig, BackendKind, ScriptedRule};
use cpg_cds::strategies::{MethodKind, RecommendationTrace};
use serde::{Deserialize, Serialize};

/// Backend selection accepted from clients. Transport settings (base URL,
/// credentials, timeouts) stay server-side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSpec {
    pub kind: BackendKind,
    #[serde(default)]
    pub model_id: Option<String>,
    #[serde(default)]
    pub temperature: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Inline rules for the scripted backend.
    #[serde(default)]
    pub script: Option<Vec<ScriptedRule>>,
}

impl BackendSpec {
    pub fn config(&self) -> BackendConfig {
        let mut config = BackendConfig::new(self.kind);
        if let Some(model) = &self.model_id {
            config.model_id = model.clone();
        }
        if let Some(t) = self.temperature {
            config.temperature = t;
        }
        config.seed = self.seed;
        config
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecommendRequest {
    pub patient_description: String,
    pub method: MethodKind,
    pub backend: BackendSpec,
    /// Structured twin for the simulator. When absent, the simulator looks
    /// the patient up in the loaded corpus by `case_id` or by description.
    #[serde(default)]
    pub facts: Option<StructuredPatientFacts>,
    #[serde(default)]
    pub case_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendResponse {
    pub recommendation: Option<String>,
    pub leaf_id: Option<NodeId>,
    pub failure: Option<Failure>,
    pub trace: Option<RecommendationTrace>,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CorpusInput {
    Inline(Vec<PatientCase>),
    Path { path: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateRequest {
    /// Defaults to the loaded corpus.
    #[serde(default)]
    pub corpus: Option<CorpusInput>,
    pub methods: Vec<MethodKind>,
    /// Defaults to the four canonical seeds.
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    pub backend: BackendSpec,
    #[serde(default)]
    pub parallelism: Option<usize>,
    #[serde(default)]
    pub include_predictions: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateResponse {
    pub report: BenchmarkReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predictions: Option<Vec<cpg_cds::evaluation::PredictionRecord>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusResponse {
    pub source: String,
    pub total: usize,
    pub cases: Vec<PatientCase>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}
