//! Prompt compilation for the four strategies.
//!
//! Every renderer is a pure function of its inputs. Sections are joined with
//! the template set's separator (a blank line and a `###` fence by default).

mod ifelse;
mod program;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::guideline::{DecisionNode, GuidelineTree};

pub use ifelse::render_ifelse_description;
pub use program::render_graph_program;

/// First line of every BDT classification prompt.
pub const YES_NO_INSTRUCTION: &str = "Response YES or NO?";
pub const DEFAULT_MAX_CHARS: usize = 24_000;
pub const DEFAULT_SEPARATOR: &str = "\n\n###\n";

/// Section labels shared with the simulated backend, which locates the
/// embedded question/response pair by them.
pub const QUESTION_LABEL: &str = "Question: ";
pub const RESPONSE_LABEL: &str = "Response: ";
pub const PATIENT_LABEL: &str = "Patient description:\n";

#[derive(Debug, Error, PartialEq)]
pub enum RenderError {
    #[error("{0} must not be empty")]
    EmptyInput(&'static str),
    #[error("{kind} prompt is {len} characters, over the budget of {max}")]
    BudgetExceeded { kind: PromptKind, len: usize, max: usize },
    #[error("invalid template set: {0}")]
    Template(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FewShotExample {
    pub input_text: String,
    pub output_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateSet {
    pub task_description: String,
    pub yesno_task_description: String,
    /// Closing instruction for single-call prompts.
    pub query: String,
    pub few_shot_bdt: Vec<FewShotExample>,
    pub few_shot_cot: Vec<FewShotExample>,
    pub few_shot_pagc: Vec<FewShotExample>,
    #[serde(default = "default_separator")]
    pub section_separator: String,
}

fn default_separator() -> String {
    DEFAULT_SEPARATOR.to_string()
}

impl TemplateSet {
    pub fn parse(content: &str) -> Result<Self, RenderError> {
        let set: TemplateSet = serde_json::from_str(content).map_err(|e| RenderError::Template(e.to_string()))?;
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<(), RenderError> {
        let texts = [
            ("task_description", &self.task_description),
            ("yesno_task_description", &self.yesno_task_description),
            ("query", &self.query),
        ];
        for (name, text) in texts {
            if text.trim().is_empty() {
                return Err(RenderError::Template(format!("{name} is empty")));
            }
        }
        // whitespace-only separators are legitimate
        if self.section_separator.is_empty() {
            return Err(RenderError::Template("section_separator is empty".into()));
        }
        let groups = [
            ("few_shot_bdt", &self.few_shot_bdt),
            ("few_shot_cot", &self.few_shot_cot),
            ("few_shot_pagc", &self.few_shot_pagc),
        ];
        for (name, examples) in groups {
            for (i, ex) in examples.iter().enumerate() {
                if ex.input_text.trim().is_empty() || ex.output_text.trim().is_empty() {
                    return Err(RenderError::Template(format!("{name}[{i}] has empty text")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    /// P1 + node question.
    BdtQuestion,
    /// Classification prompt over a question/response pair.
    BdtYesNo,
    /// P1 + P2 (few-shot + if-else description).
    CotFsp,
    /// P + C (task and patient + graph program).
    Pagc,
    /// P only.
    Zsp,
}

impl fmt::Display for PromptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PromptKind::BdtQuestion => "bdt_question",
            PromptKind::BdtYesNo => "bdt_yesno",
            PromptKind::CotFsp => "cot_fsp",
            PromptKind::Pagc => "pagc",
            PromptKind::Zsp => "zsp",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    kind: PromptKind,
    text: String,
}

impl PromptBundle {
    pub fn kind(&self) -> PromptKind {
        self.kind
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn into_text(self) -> String {
        self.text
    }
}

/// Renders prompts from one template set under a character budget.
#[derive(Debug, Clone, Copy)]
pub struct Renderer<'a> {
    templates: &'a TemplateSet,
    max_chars: usize,
}

impl<'a> Renderer<'a> {
    pub fn new(templates: &'a TemplateSet) -> Self {
        Self {
            templates,
            max_chars: DEFAULT_MAX_CHARS,
        }
    }

    pub fn with_budget(mut self, max_chars: usize) -> Self {
        self.max_chars = max_chars;
        self
    }

    pub fn templates(&self) -> &'a TemplateSet {
        self.templates
    }

    /// Task description, shared BDT few-shot examples, patient, then the
    /// node question.
    pub fn bdt_question(&self, patient: &str, node: &DecisionNode) -> Result<PromptBundle, RenderError> {
        non_empty(patient, "patient description")?;
        let mut sections = vec![self.templates.task_description.clone()];
        sections.extend(few_shot_sections(&self.templates.few_shot_bdt));
        sections.push(format!("{PATIENT_LABEL}{patient}"));
        sections.push(format!("{QUESTION_LABEL}{}", node.question));
        self.finish(PromptKind::BdtQuestion, sections)
    }

    pub fn bdt_yesno(&self, node: &DecisionNode, model_response: &str) -> Result<PromptBundle, RenderError> {
        non_empty(model_response, "model response")?;
        let sections = vec![
            YES_NO_INSTRUCTION.to_string(),
            self.templates.yesno_task_description.clone(),
            format!("{QUESTION_LABEL}{}", node.question),
            format!("{RESPONSE_LABEL}{model_response}"),
        ];
        self.finish(PromptKind::BdtYesNo, sections)
    }

    /// Task description, the CoT few-shot examples, the if-else rendering of
    /// the tree, then the patient.
    pub fn cot(&self, patient: &str, tree: &GuidelineTree) -> Result<PromptBundle, RenderError> {
        non_empty(patient, "patient description")?;
        let mut sections = vec![self.templates.task_description.clone()];
        sections.extend(few_shot_sections(&self.templates.few_shot_cot));
        sections.push(render_ifelse_description(tree));
        sections.push(format!("{PATIENT_LABEL}{patient}"));
        self.finish(PromptKind::CotFsp, sections)
    }

    /// Task and patient (P) followed by the graph program, its worked
    /// candidate-selection examples and the query (C).
    pub fn pagc(&self, patient: &str, tree: &GuidelineTree) -> Result<PromptBundle, RenderError> {
        non_empty(patient, "patient description")?;
        let mut sections = vec![
            self.templates.task_description.clone(),
            format!("{PATIENT_LABEL}{patient}"),
            render_graph_program(tree),
        ];
        sections.extend(few_shot_sections(&self.templates.few_shot_pagc));
        sections.push(self.templates.query.clone());
        self.finish(PromptKind::Pagc, sections)
    }

    pub fn zsp(&self, patient: &str) -> Result<PromptBundle, RenderError> {
        non_empty(patient, "patient description")?;
        let sections = vec![
            self.templates.task_description.clone(),
            format!("{PATIENT_LABEL}{patient}"),
            self.templates.query.clone(),
        ];
        self.finish(PromptKind::Zsp, sections)
    }

    fn finish(&self, kind: PromptKind, sections: Vec<String>) -> Result<PromptBundle, RenderError> {
        let text = sections.join(&self.templates.section_separator);
        let len = text.chars().count();
        if len > self.max_chars {
            return Err(RenderError::BudgetExceeded {
                kind,
                len,
                max: self.max_chars,
            });
        }
        Ok(PromptBundle { kind, text })
    }
}

pub fn render_bdt_question(
    templates: &TemplateSet,
    patient: &str,
    node: &DecisionNode,
) -> Result<PromptBundle, RenderError> {
    Renderer::new(templates).bdt_question(patient, node)
}

pub fn render_bdt_yesno(
    templates: &TemplateSet,
    node: &DecisionNode,
    model_response: &str,
) -> Result<PromptBundle, RenderError> {
    Renderer::new(templates).bdt_yesno(node, model_response)
}

pub fn render_cot_prompt(
    templates: &TemplateSet,
    patient: &str,
    tree: &GuidelineTree,
) -> Result<PromptBundle, RenderError> {
    Renderer::new(templates).cot(patient, tree)
}

pub fn render_pagc_prompt(
    templates: &TemplateSet,
    patient: &str,
    tree: &GuidelineTree,
) -> Result<PromptBundle, RenderError> {
    Renderer::new(templates).pagc(patient, tree)
}

pub fn render_zsp_prompt(templates: &TemplateSet, patient: &str) -> Result<PromptBundle, RenderError> {
    Renderer::new(templates).zsp(patient)
}

/// Header line that opens each few-shot block.
pub fn example_header(index: usize) -> String {
    format!("Example {index}:")
}

fn few_shot_sections(examples: &[FewShotExample]) -> impl Iterator<Item = String> + '_ {
    examples.iter().enumerate().map(|(i, ex)| {
        format!(
            "{}\n{}\nAnswer:\n{}",
            example_header(i + 1),
            ex.input_text,
            ex.output_text
        )
    })
}

fn non_empty(text: &str, what: &'static str) -> Result<(), RenderError> {
    if text.trim().is_empty() {
        Err(RenderError::EmptyInput(what))
    } else {
        Ok(())
    }
}
