//! Multi-seed benchmark execution, F-score metrics and method selection,
//! and annotation statistics.

mod agreement;
mod human;
mod metrics;
mod report;
mod selection;

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Corpus;
use crate::guideline::{GuidelineTree, NodeId};
use crate::llm::{BackendConfig, BackendFactory};
use crate::prompt::TemplateSet;
use crate::strategies::{run_method, MethodKind, RecommendationTrace, RunContext};

pub use agreement::{
    gwet_ac1, interpret_landis_koch, parse_annotations, AgreementError, AgreementReport, AnnotationRecord,
    CategoryAgreement, LandisKochBand, SeverityCategory,
};
pub use human::{aggregate_human_eval, round_half_up, HumanEvalError, HumanEvalSummary};
pub use metrics::{compute_metrics, ClassMetrics, ConfusionMatrix, MetricReport, MetricsError, SeedScore};
pub use report::{render_markdown, write_reports, BenchmarkReport, ReportMetadata};
pub use selection::{apply_selection, select_methods, RankedEntry, ScoreEntry, SELECTION_THRESHOLD};

pub const CANONICAL_SEEDS: [u64; 4] = [9631, 4603, 6367, 4057];
pub const DEFAULT_PARALLELISM: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seeds: Vec<u64>,
    pub methods: Vec<MethodKind>,
    pub backend: BackendConfig,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
}

fn default_parallelism() -> usize {
    DEFAULT_PARALLELISM
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("at least one seed is required")]
    NoSeeds,
    #[error("seed {0} is listed twice")]
    DuplicateSeed(u64),
    #[error("at least one method is required")]
    NoMethods,
    #[error("method {0} is listed twice")]
    DuplicateMethod(MethodKind),
    #[error("parallelism must be between 1 and 64")]
    Parallelism,
}

impl RunConfig {
    pub fn new(methods: Vec<MethodKind>, backend: BackendConfig) -> Self {
        Self {
            seeds: CANONICAL_SEEDS.to_vec(),
            methods,
            backend,
            parallelism: DEFAULT_PARALLELISM,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.seeds.is_empty() {
            return Err(ConfigError::NoSeeds);
        }
        for (i, s) in self.seeds.iter().enumerate() {
            if self.seeds[..i].contains(s) {
                return Err(ConfigError::DuplicateSeed(*s));
            }
        }
        if self.methods.is_empty() {
            return Err(ConfigError::NoMethods);
        }
        for (i, m) in self.methods.iter().enumerate() {
            if self.methods[..i].contains(m) {
                return Err(ConfigError::DuplicateMethod(*m));
            }
        }
        if !(1..=64).contains(&self.parallelism) {
            return Err(ConfigError::Parallelism);
        }
        Ok(())
    }
}

/// Why a triple produced no prediction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureMarker {
    pub kind: String,
    pub message: String,
}

/// Outcome of one (case, method, seed) triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub case_id: String,
    pub seed: u64,
    pub method: MethodKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted: Option<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<FailureMarker>,
    pub gold: NodeId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<RecommendationTrace>,
}

impl PredictionRecord {
    pub fn is_correct(&self) -> bool {
        self.predicted.as_ref() == Some(&self.gold)
    }
}

#[derive(Debug, Error)]
pub enum BenchmarkError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("case `{0}` has a gold label outside the guideline")]
    UnknownGold(String),
}

/// Runs every (method, seed, case) triple. Per-case failures become failure
/// markers; records come back in method, seed, case order regardless of
/// completion order.
pub async fn run_benchmark(
    corpus: &Corpus,
    config: &RunConfig,
    tree: &GuidelineTree,
    templates: &TemplateSet,
    backends: &BackendFactory,
) -> Result<Vec<PredictionRecord>, BenchmarkError> {
    config.validate()?;
    let mut jobs = Vec::new();
    for &method in &config.methods {
        for &seed in &config.seeds {
            for case in &corpus.cases {
                let gold = tree
                    .leaf_by_label(&case.gold_label)
                    .ok_or_else(|| BenchmarkError::UnknownGold(case.id.clone()))?
                    .id
                    .clone();
                jobs.push((method, seed, case, gold));
            }
        }
    }
    let runs: Vec<_> = jobs
        .into_iter()
        .map(|(method, seed, case, gold)| async move {
            let ctx = RunContext {
                seed: Some(seed),
                case_id: Some(case.id.clone()),
            };
            let outcome = match backends.client(case.facts.as_ref()) {
                Ok(client) => run_method(method, tree, &case.description, templates, &client, &ctx)
                    .await
                    .map_err(|e| {
                        let marker = FailureMarker {
                            kind: e.kind().into(),
                            message: e.to_string(),
                        };
                        (marker, e.trace().cloned())
                    }),
                Err(e) => Err((
                    FailureMarker {
                        kind: "backend_error".into(),
                        message: e.to_string(),
                    },
                    None,
                )),
            };
            let (predicted, failure, trace) = match outcome {
                Ok(trace) => (trace.final_leaf.as_ref().map(|l| l.id.clone()), None, Some(trace)),
                Err((marker, trace)) => (None, Some(marker), trace),
            };
            PredictionRecord {
                case_id: case.id.clone(),
                seed,
                method,
                predicted,
                failure,
                gold,
                trace,
            }
        })
        .collect();
    let records = stream::iter(runs).buffered(config.parallelism).collect().await;
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assets;
    use crate::llm::{BackendKind, ScriptedBackend, ScriptedRule};
    use std::sync::Arc;

    fn factory(kind: BackendKind, script: Option<ScriptedBackend>) -> BackendFactory {
        BackendFactory::new(
            BackendConfig::new(kind),
            Arc::new(assets::canonical_tree().clone()),
            Arc::new(assets::canonical_bindings().clone()),
            script,
        )
        .unwrap()
    }

    fn one_case() -> Corpus {
        let mut c = assets::canonical_corpus().clone();
        c.cases.truncate(1);
        c
    }

    #[test]
    fn config_validation() {
        let mut c = RunConfig::new(vec![MethodKind::Bdt], BackendConfig::new(BackendKind::TruthfulSim));
        assert_eq!(c.validate(), Ok(()));
        c.seeds = vec![1, 1];
        assert_eq!(c.validate(), Err(ConfigError::DuplicateSeed(1)));
        c.seeds.clear();
        assert_eq!(c.validate(), Err(ConfigError::NoSeeds));
        c.seeds = vec![1];
        c.methods.clear();
        assert_eq!(c.validate(), Err(ConfigError::NoMethods));
    }

    #[tokio::test]
    async fn cardinality_is_cases_times_seeds() {
        let mut config = RunConfig::new(vec![MethodKind::Bdt], BackendConfig::new(BackendKind::TruthfulSim));
        config.seeds = vec![9631, 4603];
        let records = run_benchmark(
            &one_case(),
            &config,
            assets::canonical_tree(),
            assets::canonical_templates(),
            &factory(BackendKind::TruthfulSim, None),
        )
        .await
        .unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[0].seed, 9631);
        assert!(records.iter().all(PredictionRecord::is_correct));
    }

    #[tokio::test]
    async fn unmatched_script_yields_failure_markers() {
        let script = ScriptedBackend::new(vec![ScriptedRule::new("no prompt contains this", "YES")]).unwrap();
        let config = RunConfig::new(MethodKind::ALL.to_vec(), BackendConfig::new(BackendKind::Scripted));
        let records = run_benchmark(
            &one_case(),
            &config,
            assets::canonical_tree(),
            assets::canonical_templates(),
            &factory(BackendKind::Scripted, Some(script)),
        )
        .await
        .unwrap();
        assert_eq!(records.len(), 16);
        for r in &records {
            assert!(r.predicted.is_none());
            assert_eq!(r.failure.as_ref().unwrap().kind, "backend_error");
        }
    }
}
