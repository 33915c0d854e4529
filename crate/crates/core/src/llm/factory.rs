use std::sync::Arc;

use super::{
    Backend, BackendConfig, BackendError, BackendKind, HttpChatBackend, LlmClient, ScriptedBackend, TranscriptSink,
    TruthfulSim,
};
use crate::guideline::{GuidelineTree, PredicateBindings, StructuredPatientFacts};

/// Builds one client per patient case. Real and scripted backends are shared
/// across cases; the simulator is instantiated with each case's facts.
#[derive(Clone)]
pub struct BackendFactory {
    config: BackendConfig,
    tree: Arc<GuidelineTree>,
    bindings: Arc<PredicateBindings>,
    shared: Option<Arc<dyn Backend>>,
    transcript: Option<Arc<TranscriptSink>>,
}

impl BackendFactory {
    /// Validates the configuration and sets up shared backends up front, so
    /// configuration errors surface before any completion is requested.
    pub fn new(
        config: BackendConfig,
        tree: Arc<GuidelineTree>,
        bindings: Arc<PredicateBindings>,
        script: Option<ScriptedBackend>,
    ) -> Result<Self, BackendError> {
        config.validate()?;
        let shared: Option<Arc<dyn Backend>> = match config.kind {
            BackendKind::HttpChat => Some(Arc::new(HttpChatBackend::from_env(config.clone())?)),
            BackendKind::Scripted => {
                Some(Arc::new(script.ok_or_else(|| {
                    BackendError::InvalidConfig("scripted backend requires a script file".into())
                })?))
            }
            BackendKind::TruthfulSim => {
                bindings
                    .check_against(&tree)
                    .map_err(|e| BackendError::InvalidConfig(e.to_string()))?;
                None
            }
        };
        Ok(Self {
            config,
            tree,
            bindings,
            shared,
            transcript: None,
        })
    }

    /// Uses an already constructed backend for every case.
    pub fn from_backend(config: BackendConfig, tree: Arc<GuidelineTree>, backend: Arc<dyn Backend>) -> Self {
        Self {
            config,
            tree,
            bindings: Arc::new(PredicateBindings::default()),
            shared: Some(backend),
            transcript: None,
        }
    }

    pub fn with_transcript(mut self, sink: Arc<TranscriptSink>) -> Self {
        self.transcript = Some(sink);
        self
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    pub fn client(&self, facts: Option<&StructuredPatientFacts>) -> Result<LlmClient, BackendError> {
        let backend: Arc<dyn Backend> = match &self.shared {
            Some(b) => b.clone(),
            None => {
                let facts = facts.ok_or_else(|| {
                    BackendError::InvalidConfig("truthful_sim needs structured facts for the patient".into())
                })?;
                Arc::new(TruthfulSim::new(self.tree.clone(), self.bindings.clone(), *facts))
            }
        };
        let client = LlmClient::new(backend);
        Ok(match &self.transcript {
            Some(sink) => client.with_transcript(sink.clone()),
            None => client,
        })
    }
}
