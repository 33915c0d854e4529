use std::sync::Arc;

use async_trait::async_trait;

use super::{Backend, BackendError, BackendKind, CompletionRequest, Generation};
use crate::assets;
use crate::guideline::{GuidelineTree, PredicateBindings, StructuredPatientFacts};
use crate::prompt::{PromptKind, QUESTION_LABEL, RESPONSE_LABEL};

/// Simulated model that answers from structured facts.
///
/// Question prompts get a one-sentence affirmation or denial of the node's
/// bound predicate, classification prompts get exactly `YES` or `NO` read off
/// the embedded response, and single-call prompts get the oracle leaf label.
pub struct TruthfulSim {
    tree: Arc<GuidelineTree>,
    bindings: Arc<PredicateBindings>,
    facts: StructuredPatientFacts,
}

impl TruthfulSim {
    pub fn new(tree: Arc<GuidelineTree>, bindings: Arc<PredicateBindings>, facts: StructuredPatientFacts) -> Self {
        Self { tree, bindings, facts }
    }

    pub fn canonical(facts: StructuredPatientFacts) -> Self {
        Self::new(
            Arc::new(assets::canonical_tree().clone()),
            Arc::new(assets::canonical_bindings().clone()),
            facts,
        )
    }

    pub fn answer(&self, request: &CompletionRequest) -> Result<String, BackendError> {
        let kind = request
            .metadata
            .prompt_kind
            .ok_or_else(|| BackendError::Unattributable("request carries no prompt kind".into()))?;
        match kind {
            PromptKind::BdtQuestion => {
                let (_, predicate) = self.node_for(request)?;
                let holds = predicate.holds(&self.facts);
                Ok(format!(
                    "{}, {}.",
                    if holds { "YES" } else { "NO" },
                    predicate.statement(holds)
                ))
            }
            PromptKind::BdtYesNo => {
                let (node, _) = self.node_for(request)?;
                let anchor = format!("{QUESTION_LABEL}{}", node);
                let after_question = request
                    .prompt
                    .find(&anchor)
                    .map(|i| &request.prompt[i + anchor.len()..])
                    .ok_or_else(|| BackendError::Unattributable("question not found in prompt".into()))?;
                let response = after_question
                    .find(RESPONSE_LABEL)
                    .map(|i| &after_question[i + RESPONSE_LABEL.len()..])
                    .ok_or_else(|| BackendError::Unattributable("response not found in prompt".into()))?;
                let first: String = response
                    .trim_start()
                    .chars()
                    .take_while(|c| c.is_ascii_alphabetic())
                    .collect::<String>()
                    .to_ascii_uppercase();
                match first.as_str() {
                    "YES" => Ok("YES".into()),
                    "NO" => Ok("NO".into()),
                    _ => Err(BackendError::Unattributable(
                        "embedded response is neither an affirmation nor a denial".into(),
                    )),
                }
            }
            PromptKind::CotFsp | PromptKind::Pagc | PromptKind::Zsp => {
                let (leaf, _) = self
                    .tree
                    .evaluate_facts(&self.bindings, &self.facts)
                    .map_err(|e| BackendError::Unattributable(e.to_string()))?;
                Ok(format!("Recommendation: {}", leaf.label))
            }
        }
    }

    /// Resolves the node named in the request metadata and checks that its
    /// question actually occurs in the prompt.
    fn node_for(&self, request: &CompletionRequest) -> Result<(&str, crate::guideline::Predicate), BackendError> {
        let id = request
            .metadata
            .node_id
            .as_ref()
            .ok_or_else(|| BackendError::Unattributable("request carries no node id".into()))?;
        let node = self
            .tree
            .node(id.as_str())
            .ok_or_else(|| BackendError::Unattributable(format!("unknown node `{id}`")))?;
        let predicate = self
            .bindings
            .get(id.as_str())
            .ok_or_else(|| BackendError::Unattributable(format!("node `{id}` has no bound predicate")))?;
        if !request.prompt.contains(&node.question) {
            return Err(BackendError::Unattributable(format!(
                "prompt does not contain the question of `{id}`"
            )));
        }
        Ok((node.question.as_str(), predicate))
    }
}

#[async_trait]
impl Backend for TruthfulSim {
    fn kind(&self) -> BackendKind {
        BackendKind::TruthfulSim
    }

    async fn generate(&self, request: &CompletionRequest) -> Result<Generation, BackendError> {
        self.answer(request).map(Generation::text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::Renderer;

    fn facts() -> StructuredPatientFacts {
        StructuredPatientFacts {
            covid_positive: true,
            needs_hospitalization_or_oxygen: false,
            high_risk: true,
            egfr_ml_min: 29.0,
            severe_hepatic_impairment: false,
            unmanageable_paxlovid_interactions: false,
            remdesivir_accessible: false,
            weight_kg: 42.0,
            age_years: 19,
        }
    }

    fn question_request(node_id: &str, facts: StructuredPatientFacts) -> (TruthfulSim, CompletionRequest) {
        let tree = assets::canonical_tree();
        let node = tree.node(node_id).unwrap();
        let bundle = Renderer::new(assets::canonical_templates())
            .bdt_question("some patient", node)
            .unwrap();
        (
            TruthfulSim::canonical(facts),
            CompletionRequest::from_bundle(&bundle).with_node(&node.id),
        )
    }

    #[test]
    fn affirms_covid_positive() {
        let (sim, req) = question_request("covid_positive", facts());
        let text = sim.answer(&req).unwrap();
        assert!(text.starts_with("YES"), "{text}");
        assert!(text.contains("tested positive"));
    }

    #[test]
    fn denies_hospitalization() {
        let (sim, req) = question_request("needs_hospitalization", facts());
        assert!(sim.answer(&req).unwrap().starts_with("NO,"));
    }

    #[test]
    fn yesno_reads_embedded_response() {
        let tree = assets::canonical_tree();
        let node = tree.node("high_risk").unwrap();
        let sim = TruthfulSim::canonical(facts());
        let r = Renderer::new(assets::canonical_templates());
        for (response, expected) in [("YES, it holds.", "YES"), ("NO, it does not.", "NO")] {
            let bundle = r.bdt_yesno(node, response).unwrap();
            let req = CompletionRequest::from_bundle(&bundle).with_node(&node.id);
            assert_eq!(sim.answer(&req).unwrap(), expected);
        }
    }

    #[test]
    fn unattributable_prompts_are_errors() {
        let sim = TruthfulSim::canonical(facts());
        let mut req = CompletionRequest::new("What is the capital of France?");
        assert!(matches!(sim.answer(&req), Err(BackendError::Unattributable(_))));
        req.metadata.prompt_kind = Some(PromptKind::BdtQuestion);
        req.metadata.node_id = Some("covid_positive".into());
        assert!(matches!(sim.answer(&req), Err(BackendError::Unattributable(_))));
    }

    #[test]
    fn single_call_prompts_get_the_oracle_label() {
        let sim = TruthfulSim::canonical(facts());
        let mut req = CompletionRequest::new("anything");
        req.metadata.prompt_kind = Some(PromptKind::CotFsp);
        assert_eq!(
            sim.answer(&req).unwrap(),
            "Recommendation: Molnupiravir dosing: 800 mg (four 200 mg capsules) orally twice daily for 5 days"
        );
    }
}
