use std::collections::HashSet;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use super::{Branch, DecisionNode, GuidelineTree, LeafRecommendation, NodeId, Target};

#[derive(Debug, Error, PartialEq)]
pub enum GuidelineError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("node `{id}` is not binary: {detail}")]
    NonBinary { id: String, detail: String },
    #[error("`{from}` references undeclared id `{id}`")]
    Dangling { from: String, id: String },
    #[error("cycle detected through node `{id}`")]
    Cycle { id: String },
    #[error("leaf `{id}` repeats label {label:?}")]
    DuplicateLabel { id: String, label: String },
    #[error("`{id}` is declared both as a node and as a leaf")]
    DuplicateId { id: String },
    #[error("`{id}` is not reachable from the root")]
    Unreachable { id: String },
    #[error("`{id}` has empty {field}")]
    EmptyText { id: String, field: &'static str },
}

impl GuidelineError {
    /// The offending id for semantic errors.
    pub fn id(&self) -> Option<&str> {
        match self {
            GuidelineError::Syntax { .. } => None,
            GuidelineError::NonBinary { id, .. }
            | GuidelineError::Dangling { id, .. }
            | GuidelineError::Cycle { id }
            | GuidelineError::DuplicateLabel { id, .. }
            | GuidelineError::DuplicateId { id }
            | GuidelineError::Unreachable { id }
            | GuidelineError::EmptyText { id, .. } => Some(id),
        }
    }
}

impl From<serde_json::Error> for GuidelineError {
    fn from(e: serde_json::Error) -> Self {
        GuidelineError::Syntax {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(super) struct GuidelineFile {
    version: String,
    root: String,
    nodes: IndexMap<String, Value>,
    leaves: IndexMap<String, LeafEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LeafEntry {
    label: String,
}

#[derive(Debug, Serialize)]
struct NodeEntry<'a> {
    question: &'a str,
    yes: &'a str,
    no: &'a str,
}

impl GuidelineFile {
    pub(super) fn from_tree(tree: &GuidelineTree) -> Self {
        let nodes = tree
            .nodes
            .values()
            .map(|n| {
                let entry = NodeEntry {
                    question: &n.question,
                    yes: n.yes_target.as_str(),
                    no: n.no_target.as_str(),
                };
                (n.id.to_string(), serde_json::to_value(entry).expect("node entry"))
            })
            .collect();
        let leaves = tree
            .leaves
            .values()
            .map(|l| (l.id.to_string(), LeafEntry { label: l.label.clone() }))
            .collect();
        GuidelineFile {
            version: tree.version.clone(),
            root: tree.root.to_string(),
            nodes,
            leaves,
        }
    }
}

/// Parses and validates a guideline file.
pub fn parse_guideline(content: &str) -> Result<GuidelineTree, GuidelineError> {
    let file: GuidelineFile = serde_json::from_str(content)?;

    let mut nodes = IndexMap::new();
    for (id, raw) in &file.nodes {
        nodes.insert(NodeId::new(id.as_str()), decision_node(id, raw)?);
    }

    let mut leaves = IndexMap::new();
    let mut labels = HashSet::new();
    for (id, entry) in &file.leaves {
        if nodes.contains_key(id.as_str()) {
            return Err(GuidelineError::DuplicateId { id: id.clone() });
        }
        if entry.label.trim().is_empty() {
            return Err(GuidelineError::EmptyText {
                id: id.clone(),
                field: "label",
            });
        }
        if !labels.insert(entry.label.as_str()) {
            return Err(GuidelineError::DuplicateLabel {
                id: id.clone(),
                label: entry.label.clone(),
            });
        }
        leaves.insert(
            NodeId::new(id.as_str()),
            LeafRecommendation {
                id: NodeId::new(id.as_str()),
                label: entry.label.clone(),
            },
        );
    }

    let tree = GuidelineTree {
        version: file.version,
        root: NodeId::new(file.root),
        nodes,
        leaves,
    };
    validate_structure(&tree)?;
    Ok(tree)
}

fn decision_node(id: &str, raw: &Value) -> Result<DecisionNode, GuidelineError> {
    let non_binary = |detail: String| GuidelineError::NonBinary {
        id: id.to_string(),
        detail,
    };
    let obj: &Map<String, Value> = raw
        .as_object()
        .ok_or_else(|| non_binary("node entry must be an object".into()))?;
    if let Some(extra) = obj.keys().find(|k| !matches!(k.as_str(), "question" | "yes" | "no")) {
        return Err(non_binary(format!("unexpected branch or field `{extra}`")));
    }
    let text = |key: &str| -> Result<String, GuidelineError> {
        match obj.get(key) {
            Some(Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(non_binary(format!("`{key}` must be a string"))),
            None => Err(non_binary(format!("missing `{key}`"))),
        }
    };
    let question = text("question")?;
    if question.trim().is_empty() {
        return Err(GuidelineError::EmptyText {
            id: id.to_string(),
            field: "question",
        });
    }
    let yes = text("yes")?;
    let no = text("no")?;
    if yes == id || no == id {
        return Err(GuidelineError::Cycle { id: id.to_string() });
    }
    Ok(DecisionNode {
        id: NodeId::new(id),
        question,
        yes_target: NodeId::new(yes),
        no_target: NodeId::new(no),
    })
}

fn validate_structure(tree: &GuidelineTree) -> Result<(), GuidelineError> {
    if tree.resolve(tree.root.as_str()).is_none() {
        return Err(GuidelineError::Dangling {
            from: "root".into(),
            id: tree.root.to_string(),
        });
    }
    for node in tree.nodes.values() {
        for branch in [Branch::Yes, Branch::No] {
            let target = node.target(branch);
            if tree.resolve(target.as_str()).is_none() {
                return Err(GuidelineError::Dangling {
                    from: node.id.to_string(),
                    id: target.to_string(),
                });
            }
        }
    }

    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Unvisited,
        Active,
        Done,
    }
    let mut marks: IndexMap<&str, Mark> = tree
        .nodes
        .keys()
        .chain(tree.leaves.keys())
        .map(|id| (id.as_str(), Mark::Unvisited))
        .collect();

    // Iterative DFS; a back edge to an Active node is a cycle.
    let mut stack: Vec<(&str, bool)> = vec![(tree.root.as_str(), false)];
    while let Some((id, exiting)) = stack.pop() {
        if exiting {
            marks[id] = Mark::Done;
            continue;
        }
        match marks[id] {
            Mark::Done => continue,
            Mark::Active => return Err(GuidelineError::Cycle { id: id.to_string() }),
            Mark::Unvisited => {}
        }
        marks[id] = Mark::Active;
        stack.push((id, true));
        if let Some(Target::Node(node)) = tree.resolve(id) {
            for target in [&node.no_target, &node.yes_target] {
                match marks[target.as_str()] {
                    Mark::Active => return Err(GuidelineError::Cycle { id: target.to_string() }),
                    Mark::Unvisited => stack.push((target.as_str(), false)),
                    Mark::Done => {}
                }
            }
        }
    }

    match marks.iter().find(|(_, m)| **m == Mark::Unvisited) {
        Some((id, _)) => Err(GuidelineError::Unreachable { id: id.to_string() }),
        None => Ok(()),
    }
}
