//! Numbered if-else rendering of the guideline for chain-of-thought prompts.
//!
//! Steps are laid out in narrative order (depth first, NO continuation before
//! YES continuation). Two layout rules keep the step list close to how a
//! clinician reads the guideline:
//!
//! * a chain of nodes linked by their NO branches that all share one YES
//!   target becomes a single "any of the following" step;
//! * a single-parent node reached through a YES branch whose two branches
//!   both end in leaves is inlined as a nested condition.

use std::collections::HashMap;
use std::fmt::Write;

use crate::guideline::{DecisionNode, GuidelineTree, NodeId, Target};

pub const STEP_PREAMBLE: &str = "Work through the following steps in order. Each step either gives the final \
recommendation, which ends the process, or sends you to another step.";

struct Step<'t> {
    conditions: Vec<&'t DecisionNode>,
}

impl<'t> Step<'t> {
    fn head(&self) -> &'t DecisionNode {
        self.conditions[0]
    }

    fn yes_target(&self) -> &'t NodeId {
        &self.head().yes_target
    }

    fn no_target(&self) -> &'t NodeId {
        &self.conditions.last().expect("non-empty step").no_target
    }
}

struct Layout<'t> {
    tree: &'t GuidelineTree,
    parents: HashMap<&'t str, usize>,
    steps: Vec<Step<'t>>,
    step_of: HashMap<&'t str, usize>,
}

impl<'t> Layout<'t> {
    fn new(tree: &'t GuidelineTree) -> Self {
        let mut parents: HashMap<&str, usize> = HashMap::new();
        for node in tree.nodes() {
            *parents.entry(node.yes_target.as_str()).or_default() += 1;
            *parents.entry(node.no_target.as_str()).or_default() += 1;
        }
        let mut layout = Layout {
            tree,
            parents,
            steps: Vec::new(),
            step_of: HashMap::new(),
        };
        if let Some(Target::Node(root)) = tree.resolve(tree.root().as_str()) {
            layout.visit(root);
        }
        layout
    }

    fn parent_count(&self, id: &str) -> usize {
        self.parents.get(id).copied().unwrap_or(0)
    }

    fn internal(&self, id: &NodeId) -> Option<&'t DecisionNode> {
        match self.tree.resolve(id.as_str()) {
            Some(Target::Node(n)) => Some(n),
            _ => None,
        }
    }

    fn is_leaf(&self, id: &NodeId) -> bool {
        matches!(self.tree.resolve(id.as_str()), Some(Target::Leaf(_)))
    }

    /// A node inlined under the YES branch of its parent step.
    fn inlined(&self, id: &NodeId) -> Option<&'t DecisionNode> {
        self.internal(id).filter(|n| {
            self.parent_count(n.id.as_str()) == 1 && self.is_leaf(&n.yes_target) && self.is_leaf(&n.no_target)
        })
    }

    fn visit(&mut self, head: &'t DecisionNode) {
        if self.step_of.contains_key(head.id.as_str()) {
            return;
        }
        let mut conditions = vec![head];
        while let Some(next) = self.internal(&conditions.last().unwrap().no_target) {
            let joinable = next.yes_target == head.yes_target
                && self.parent_count(next.id.as_str()) == 1
                && !self.step_of.contains_key(next.id.as_str());
            if !joinable {
                break;
            }
            conditions.push(next);
        }
        let index = self.steps.len();
        for c in &conditions {
            self.step_of.insert(c.id.as_str(), index);
        }
        let step = Step { conditions };
        let (yes, no) = (step.yes_target(), step.no_target());
        self.steps.push(step);

        if let Some(n) = self.internal(no) {
            self.visit(n);
        }
        match self.inlined(yes) {
            Some(nested) => {
                self.step_of.insert(nested.id.as_str(), index);
            }
            None => {
                if let Some(n) = self.internal(yes) {
                    self.visit(n);
                }
            }
        }
    }

    fn leaf_label(&self, id: &NodeId) -> &'t str {
        match self.tree.resolve(id.as_str()) {
            Some(Target::Leaf(l)) => &l.label,
            _ => unreachable!("caller checked for a leaf"),
        }
    }

    fn action(&self, id: &NodeId) -> String {
        if self.is_leaf(id) {
            format!("recommend \"{}\". Stop.", self.leaf_label(id))
        } else {
            format!("go to Step {}.", self.step_of[id.as_str()] + 1)
        }
    }

    fn render(&self) -> String {
        let mut out = String::from(STEP_PREAMBLE);
        for (i, step) in self.steps.iter().enumerate() {
            out.push('\n');
            let any = step.conditions.len() > 1;
            if any {
                let _ = write!(out, "Step {}: Does any of the following apply?", i + 1);
                for (j, c) in step.conditions.iter().enumerate() {
                    let _ = write!(out, "\n  ({}) {}", (b'a' + j as u8) as char, c.question);
                }
            } else {
                let _ = write!(out, "Step {}: {}", i + 1, step.head().question);
            }
            let (yes_word, no_word) = if any {
                ("If YES to any", "If NO to all")
            } else {
                ("If YES", "If NO")
            };
            match self.inlined(step.yes_target()) {
                Some(nested) => {
                    let _ = write!(out, "\n  - {yes_word}: ask \"{}\"", nested.question);
                    let _ = write!(out, "\n      - If YES: {}", self.action(&nested.yes_target));
                    let _ = write!(out, "\n      - If NO: {}", self.action(&nested.no_target));
                }
                None => {
                    let _ = write!(out, "\n  - {yes_word}: {}", self.action(step.yes_target()));
                }
            }
            let _ = write!(out, "\n  - {no_word}: {}", self.action(step.no_target()));
        }
        out
    }
}

/// Renders the tree as a numbered if-else step list.
pub fn render_ifelse_description(tree: &GuidelineTree) -> String {
    match tree.resolve(tree.root().as_str()) {
        Some(Target::Leaf(leaf)) => format!("{STEP_PREAMBLE}\nStep 1: recommend \"{}\". Stop.", leaf.label),
        _ => Layout::new(tree).render(),
    }
}
