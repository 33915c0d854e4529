//! The four recommendation strategies: decision-tree traversal (BDT),
//! chain-of-thought few-shot (CoT-FSP), graph-program prompting (PAGC) and
//! the zero-shot baseline (ZSP).

mod canonical;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::guideline::{DecisionNode, GuidelineTree, LeafRecommendation, NodeId, Target};
use crate::llm::{BackendError, CompletionRequest, LlmClient};
use crate::prompt::{PromptBundle, PromptKind, RenderError, Renderer, TemplateSet};

pub use canonical::{
    canonicalize_answer, normalize, CanonicalAnswer, CanonicalizeError, Canonicalizer, ACCEPT_THRESHOLD,
    MARGIN_THRESHOLD,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    Bdt,
    CotFsp,
    Pagc,
    Zsp,
}

impl MethodKind {
    pub const ALL: [MethodKind; 4] = [MethodKind::Bdt, MethodKind::CotFsp, MethodKind::Pagc, MethodKind::Zsp];

    pub fn as_str(self) -> &'static str {
        match self {
            MethodKind::Bdt => "bdt",
            MethodKind::CotFsp => "cot_fsp",
            MethodKind::Pagc => "pagc",
            MethodKind::Zsp => "zsp",
        }
    }

    /// Short display name (BDT, CoT-FSP, PAGC, ZSP).
    pub fn display_name(self) -> &'static str {
        match self {
            MethodKind::Bdt => "BDT",
            MethodKind::CotFsp => "CoT-FSP",
            MethodKind::Pagc => "PAGC",
            MethodKind::Zsp => "ZSP",
        }
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "bdt" => Ok(MethodKind::Bdt),
            "cot_fsp" | "cot" => Ok(MethodKind::CotFsp),
            "pagc" => Ok(MethodKind::Pagc),
            "zsp" => Ok(MethodKind::Zsp),
            other => Err(format!("unknown method `{other}` (expected bdt, cot_fsp, pagc or zsp)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Yes,
    No,
    Ambiguous,
}

/// Reads a YES/NO reply. Only the first alphabetic token counts, after
/// dropping HTML-ish tags; anything else is ambiguous.
pub fn parse_verdict(reply: &str) -> Verdict {
    let mut stripped = String::with_capacity(reply.len());
    let mut in_tag = false;
    for c in reply.chars() {
        match c {
            '<' => in_tag = true,
            '>' if in_tag => in_tag = false,
            _ if !in_tag => stripped.push(c),
            _ => {}
        }
    }
    let token: String = stripped
        .chars()
        .skip_while(|c| !c.is_alphabetic())
        .take_while(|c| c.is_alphabetic())
        .collect();
    match token.to_uppercase().as_str() {
        "YES" => Verdict::Yes,
        "NO" => Verdict::No,
        _ => Verdict::Ambiguous,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_id: Option<NodeId>,
    pub prompt_kind: PromptKind,
    pub prompt_text: String,
    pub response_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationTrace {
    pub method: MethodKind,
    pub seed: Option<u64>,
    pub steps: Vec<TraceStep>,
    pub final_leaf: Option<LeafRecommendation>,
}

impl RecommendationTrace {
    pub fn new(method: MethodKind, seed: Option<u64>) -> Self {
        Self {
            method,
            seed,
            steps: Vec::new(),
            final_leaf: None,
        }
    }

    /// Nodes visited by a BDT run, in order, with the branch taken.
    pub fn visited_nodes(&self) -> Vec<(&NodeId, Verdict)> {
        self.steps
            .iter()
            .filter(|s| s.prompt_kind == PromptKind::BdtYesNo)
            .filter_map(|s| Some((s.node_id.as_ref()?, s.verdict?)))
            .collect()
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("trace serializes")
    }
}

#[derive(Debug, Error)]
pub enum StrategyError {
    #[error("invalid input: {0}")]
    Render(#[from] RenderError),
    #[error("could not classify the reply at node `{node}` as YES or NO")]
    Classification {
        node: NodeId,
        trace: Box<RecommendationTrace>,
    },
    #[error("backend failed: {source}")]
    Backend {
        source: BackendError,
        trace: Box<RecommendationTrace>,
    },
    #[error("unresolved answer: {reason}")]
    Unresolved {
        reason: CanonicalizeError,
        raw_text: String,
        trace: Box<RecommendationTrace>,
    },
    #[error("guideline tree references unknown entry `{0}`")]
    BrokenTree(NodeId),
}

impl StrategyError {
    /// Partial trace recorded before the failure, when there is one.
    pub fn trace(&self) -> Option<&RecommendationTrace> {
        match self {
            StrategyError::Classification { trace, .. }
            | StrategyError::Backend { trace, .. }
            | StrategyError::Unresolved { trace, .. } => Some(trace),
            StrategyError::Render(_) | StrategyError::BrokenTree(_) => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            StrategyError::Render(_) => "invalid_input",
            StrategyError::Classification { .. } => "classification_failure",
            StrategyError::Backend { .. } => "backend_error",
            StrategyError::Unresolved { .. } => "unresolved_answer",
            StrategyError::BrokenTree(_) => "broken_tree",
        }
    }
}

/// Per-run context forwarded to the backend.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunContext {
    pub seed: Option<u64>,
    pub case_id: Option<String>,
}

impl RunContext {
    pub fn seeded(seed: u64) -> Self {
        Self {
            seed: Some(seed),
            case_id: None,
        }
    }
}

struct Call<'a> {
    client: &'a LlmClient,
    ctx: &'a RunContext,
    method: MethodKind,
}

impl Call<'_> {
    async fn send(&self, bundle: &PromptBundle, node: Option<&NodeId>) -> Result<String, BackendError> {
        let mut req = CompletionRequest::from_bundle(bundle)
            .with_seed(self.ctx.seed)
            .with_method(self.method)
            .with_case(self.ctx.case_id.as_deref());
        if let Some(node) = node {
            req = req.with_node(node);
        }
        self.client.complete(&req).await.map(|r| r.text)
    }
}

/// Renders the classification prompt for `response`, calls the backend and
/// maps the reply to a verdict.
pub async fn classify_yes_no(
    templates: &TemplateSet,
    node: &DecisionNode,
    response: &str,
    client: &LlmClient,
    ctx: &RunContext,
) -> Result<Verdict, StrategyError> {
    let mut trace = RecommendationTrace::new(MethodKind::Bdt, ctx.seed);
    let call = Call {
        client,
        ctx,
        method: MethodKind::Bdt,
    };
    classify_step(&Renderer::new(templates), node, response, &call, &mut trace).await
}

async fn classify_step(
    renderer: &Renderer<'_>,
    node: &DecisionNode,
    response: &str,
    call: &Call<'_>,
    trace: &mut RecommendationTrace,
) -> Result<Verdict, StrategyError> {
    let bundle = renderer.bdt_yesno(node, response)?;
    let reply = match call.send(&bundle, Some(&node.id)).await {
        Ok(r) => r,
        Err(source) => {
            return Err(StrategyError::Backend {
                source,
                trace: Box::new(trace.clone()),
            })
        }
    };
    let verdict = parse_verdict(&reply);
    trace.steps.push(TraceStep {
        node_id: Some(node.id.clone()),
        prompt_kind: PromptKind::BdtYesNo,
        prompt_text: bundle.into_text(),
        response_text: reply,
        verdict: Some(verdict),
    });
    Ok(verdict)
}

/// Walks the tree from the root: per node, one question prompt and one
/// classification prompt, then follows the YES or NO edge.
pub async fn run_bdt(
    tree: &GuidelineTree,
    patient: &str,
    templates: &TemplateSet,
    client: &LlmClient,
    ctx: &RunContext,
) -> Result<RecommendationTrace, StrategyError> {
    let renderer = Renderer::new(templates);
    let call = Call {
        client,
        ctx,
        method: MethodKind::Bdt,
    };
    let mut trace = RecommendationTrace::new(MethodKind::Bdt, ctx.seed);
    let mut current = tree.root().clone();
    loop {
        let node = match tree.resolve(current.as_str()) {
            Some(Target::Node(node)) => node,
            Some(Target::Leaf(leaf)) => {
                trace.final_leaf = Some(leaf.clone());
                return Ok(trace);
            }
            None => return Err(StrategyError::BrokenTree(current)),
        };
        let bundle = renderer.bdt_question(patient, node)?;
        let answer = match call.send(&bundle, Some(&node.id)).await {
            Ok(a) => a,
            Err(source) => {
                return Err(StrategyError::Backend {
                    source,
                    trace: Box::new(trace),
                })
            }
        };
        trace.steps.push(TraceStep {
            node_id: Some(node.id.clone()),
            prompt_kind: PromptKind::BdtQuestion,
            prompt_text: bundle.into_text(),
            response_text: answer.clone(),
            verdict: None,
        });
        if answer.trim().is_empty() {
            return Err(StrategyError::Classification {
                node: node.id.clone(),
                trace: Box::new(trace),
            });
        }
        let branch = match classify_step(&renderer, node, &answer, &call, &mut trace).await? {
            Verdict::Yes => crate::guideline::Branch::Yes,
            Verdict::No => crate::guideline::Branch::No,
            Verdict::Ambiguous => {
                return Err(StrategyError::Classification {
                    node: node.id.clone(),
                    trace: Box::new(trace),
                })
            }
        };
        current = node.target(branch).clone();
    }
}

async fn single_call(
    method: MethodKind,
    bundle: PromptBundle,
    tree: &GuidelineTree,
    client: &LlmClient,
    ctx: &RunContext,
) -> Result<RecommendationTrace, StrategyError> {
    let mut trace = RecommendationTrace::new(method, ctx.seed);
    let call = Call { client, ctx, method };
    let reply = match call.send(&bundle, None).await {
        Ok(r) => r,
        Err(source) => {
            return Err(StrategyError::Backend {
                source,
                trace: Box::new(trace),
            })
        }
    };
    trace.steps.push(TraceStep {
        node_id: None,
        prompt_kind: bundle.kind(),
        prompt_text: bundle.into_text(),
        response_text: reply.clone(),
        verdict: None,
    });
    let leaves: Vec<LeafRecommendation> = tree.leaves().cloned().collect();
    let outcome = Canonicalizer::new(&leaves).and_then(|c| c.canonicalize(&reply));
    match outcome {
        Ok(answer) => {
            trace.final_leaf = Some(answer.leaf);
            Ok(trace)
        }
        Err(reason) => Err(StrategyError::Unresolved {
            reason,
            raw_text: reply,
            trace: Box::new(trace),
        }),
    }
}

pub async fn run_cot_fsp(
    tree: &GuidelineTree,
    patient: &str,
    templates: &TemplateSet,
    client: &LlmClient,
    ctx: &RunContext,
) -> Result<RecommendationTrace, StrategyError> {
    let bundle = Renderer::new(templates).cot(patient, tree)?;
    single_call(MethodKind::CotFsp, bundle, tree, client, ctx).await
}

pub async fn run_pagc(
    tree: &GuidelineTree,
    patient: &str,
    templates: &TemplateSet,
    client: &LlmClient,
    ctx: &RunContext,
) -> Result<RecommendationTrace, StrategyError> {
    let bundle = Renderer::new(templates).pagc(patient, tree)?;
    single_call(MethodKind::Pagc, bundle, tree, client, ctx).await
}

/// Zero-shot baseline. The prompt carries no guideline content; the tree is
/// only used to map the answer onto a leaf.
pub async fn run_zsp(
    tree: &GuidelineTree,
    patient: &str,
    templates: &TemplateSet,
    client: &LlmClient,
    ctx: &RunContext,
) -> Result<RecommendationTrace, StrategyError> {
    let bundle = Renderer::new(templates).zsp(patient)?;
    single_call(MethodKind::Zsp, bundle, tree, client, ctx).await
}

pub async fn run_method(
    method: MethodKind,
    tree: &GuidelineTree,
    patient: &str,
    templates: &TemplateSet,
    client: &LlmClient,
    ctx: &RunContext,
) -> Result<RecommendationTrace, StrategyError> {
    match method {
        MethodKind::Bdt => run_bdt(tree, patient, templates, client, ctx).await,
        MethodKind::CotFsp => run_cot_fsp(tree, patient, templates, client, ctx).await,
        MethodKind::Pagc => run_pagc(tree, patient, templates, client, ctx).await,
        MethodKind::Zsp => run_zsp(tree, patient, templates, client, ctx).await,
    }
}
