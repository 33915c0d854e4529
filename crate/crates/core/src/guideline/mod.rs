//! Guideline decision tree: parsing, validation, path enumeration and
//! deterministic evaluation against structured patient facts.

mod facts;
mod parse;

use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

pub use facts::{FactsError, Predicate, PredicateBindings, StructuredPatientFacts};
pub use parse::{parse_guideline, GuidelineError};

/// Identifier shared by decision nodes and leaves (one namespace).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::borrow::Borrow<str> for NodeId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

/// Internal yes/no checkpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionNode {
    pub id: NodeId,
    pub question: String,
    pub yes_target: NodeId,
    pub no_target: NodeId,
}

impl DecisionNode {
    pub fn target(&self, branch: Branch) -> &NodeId {
        match branch {
            Branch::Yes => &self.yes_target,
            Branch::No => &self.no_target,
        }
    }
}

/// Terminal treatment recommendation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LeafRecommendation {
    pub id: NodeId,
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Branch {
    Yes,
    No,
}

impl Branch {
    pub fn from_bool(answer: bool) -> Self {
        if answer {
            Branch::Yes
        } else {
            Branch::No
        }
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Branch::Yes => "YES",
            Branch::No => "NO",
        })
    }
}

/// One step of a root-to-leaf walk.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PathStep {
    pub node: NodeId,
    pub branch: Branch,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PathDescriptor {
    pub steps: Vec<PathStep>,
    pub leaf: NodeId,
}

impl PathDescriptor {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

impl fmt::Display for PathDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for step in &self.steps {
            write!(f, "{} -{}-> ", step.node, step.branch)?;
        }
        write!(f, "{}", self.leaf)
    }
}

/// Resolved reference into the tree.
#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    Node(&'a DecisionNode),
    Leaf(&'a LeafRecommendation),
}

/// Validated, immutable binary decision tree. Subtrees may be shared
/// (a node can have several parents) but the graph is acyclic and every
/// entry is reachable from the root.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidelineTree {
    version: String,
    root: NodeId,
    nodes: IndexMap<NodeId, DecisionNode>,
    leaves: IndexMap<NodeId, LeafRecommendation>,
}

impl GuidelineTree {
    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn root(&self) -> &NodeId {
        &self.root
    }

    pub fn nodes(&self) -> impl Iterator<Item = &DecisionNode> {
        self.nodes.values()
    }

    pub fn leaves(&self) -> impl Iterator<Item = &LeafRecommendation> {
        self.leaves.values()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves.len()
    }

    pub fn node(&self, id: &str) -> Option<&DecisionNode> {
        self.nodes.get(id)
    }

    pub fn leaf(&self, id: &str) -> Option<&LeafRecommendation> {
        self.leaves.get(id)
    }

    pub fn leaf_by_label(&self, label: &str) -> Option<&LeafRecommendation> {
        self.leaves.values().find(|l| l.label == label)
    }

    pub fn resolve(&self, id: &str) -> Option<Target<'_>> {
        if let Some(node) = self.nodes.get(id) {
            Some(Target::Node(node))
        } else {
            self.leaves.get(id).map(Target::Leaf)
        }
    }

    /// Number of decision nodes on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        self.enumerate_paths()
            .iter()
            .map(PathDescriptor::len)
            .max()
            .unwrap_or(0)
    }

    /// Every distinct root-to-leaf path, YES branch explored before NO.
    pub fn enumerate_paths(&self) -> Vec<PathDescriptor> {
        let mut out = Vec::new();
        let mut prefix = Vec::new();
        self.collect_paths(&self.root, &mut prefix, &mut out);
        out
    }

    fn collect_paths(&self, id: &NodeId, prefix: &mut Vec<PathStep>, out: &mut Vec<PathDescriptor>) {
        match self.resolve(id.as_str()) {
            Some(Target::Leaf(leaf)) => out.push(PathDescriptor {
                steps: prefix.clone(),
                leaf: leaf.id.clone(),
            }),
            Some(Target::Node(node)) => {
                for branch in [Branch::Yes, Branch::No] {
                    prefix.push(PathStep {
                        node: node.id.clone(),
                        branch,
                    });
                    self.collect_paths(node.target(branch), prefix, out);
                    prefix.pop();
                }
            }
            None => unreachable!("validated tree has no dangling ids"),
        }
    }

    /// Walks the tree answering each question with its bound predicate.
    pub fn evaluate_facts(
        &self,
        bindings: &PredicateBindings,
        facts: &StructuredPatientFacts,
    ) -> Result<(&LeafRecommendation, PathDescriptor), FactsError> {
        facts.validate()?;
        let mut steps = Vec::new();
        let mut current = &self.root;
        loop {
            match self.resolve(current.as_str()) {
                Some(Target::Leaf(leaf)) => {
                    return Ok((
                        leaf,
                        PathDescriptor {
                            steps,
                            leaf: leaf.id.clone(),
                        },
                    ))
                }
                Some(Target::Node(node)) => {
                    let predicate = bindings
                        .get(node.id.as_str())
                        .ok_or_else(|| FactsError::UnboundPredicate(node.id.clone()))?;
                    let branch = Branch::from_bool(predicate.holds(facts));
                    steps.push(PathStep {
                        node: node.id.clone(),
                        branch,
                    });
                    current = node.target(branch);
                }
                None => unreachable!("validated tree has no dangling ids"),
            }
        }
    }

    /// Serializes back to the guideline file format.
    pub fn to_json(&self) -> String {
        let file = parse::GuidelineFile::from_tree(self);
        let mut text = serde_json::to_string_pretty(&file).expect("tree serializes");
        text.push('\n');
        text
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assets;

    fn canonical() -> GuidelineTree {
        assets::canonical_tree().clone()
    }

    #[test]
    fn canonical_counts() {
        let tree = canonical();
        assert_eq!(tree.leaf_count(), 8);
        assert_eq!(tree.enumerate_paths().len(), 13);
        assert_eq!(tree.node_count(), 9);
        assert_eq!(tree.depth(), 7);
    }

    #[test]
    fn paths_are_distinct_and_yes_first() {
        let tree = canonical();
        let paths = tree.enumerate_paths();
        let unique: std::collections::HashSet<_> = paths.iter().collect();
        assert_eq!(unique.len(), paths.len());
        assert_eq!(paths[0].steps[0].branch, Branch::Yes);
        assert_eq!(
            paths.last().unwrap().steps,
            vec![PathStep {
                node: "covid_positive".into(),
                branch: Branch::No
            }]
        );
        assert_eq!(paths.last().unwrap().leaf.as_str(), "vaccination");
        for p in &paths {
            assert_eq!(p.steps[0].node, *tree.root());
            for pair in p.steps.windows(2) {
                let parent = tree.node(pair[0].node.as_str()).unwrap();
                assert_eq!(parent.target(pair[0].branch), &pair[1].node);
            }
            let last = p.steps.last().unwrap();
            assert_eq!(tree.node(last.node.as_str()).unwrap().target(last.branch), &p.leaf);
        }
    }

    #[test]
    fn single_leaf_tree_has_one_empty_path() {
        let tree =
            parse_guideline(r#"{"version":"x","root":"only","nodes":{},"leaves":{"only":{"label":"Rest"}}}"#).unwrap();
        let paths = tree.enumerate_paths();
        assert_eq!(paths.len(), 1);
        assert!(paths[0].is_empty());
        assert_eq!(tree.depth(), 0);
    }

    #[test]
    fn full_depth_two_tree_has_four_paths() {
        let src = r#"{"version":"t","root":"a","nodes":{
            "a":{"question":"A?","yes":"b","no":"c"},
            "b":{"question":"B?","yes":"l1","no":"l2"},
            "c":{"question":"C?","yes":"l3","no":"l4"}},
            "leaves":{"l1":{"label":"one"},"l2":{"label":"two"},"l3":{"label":"three"},"l4":{"label":"four"}}}"#;
        let tree = parse_guideline(src).unwrap();
        let leaves: Vec<_> = tree.enumerate_paths().into_iter().map(|p| p.leaf.to_string()).collect();
        assert_eq!(leaves, ["l1", "l2", "l3", "l4"]);
    }

    #[test]
    fn round_trip_is_structurally_identical() {
        let tree = canonical();
        let again = parse_guideline(&tree.to_json()).unwrap();
        assert_eq!(tree, again);
    }

    #[test]
    fn appendix_examples_evaluate_to_gold() {
        let tree = canonical();
        let bindings = assets::canonical_bindings();
        let base = StructuredPatientFacts {
            covid_positive: true,
            needs_hospitalization_or_oxygen: false,
            high_risk: true,
            egfr_ml_min: 32.0,
            severe_hepatic_impairment: false,
            unmanageable_paxlovid_interactions: false,
            remdesivir_accessible: true,
            weight_kg: 40.0,
            age_years: 31,
        };
        let label = |f: &StructuredPatientFacts| tree.evaluate_facts(bindings, f).unwrap().0.label.clone();

        assert_eq!(
            label(&StructuredPatientFacts {
                covid_positive: false,
                ..base
            }),
            "Vaccination and booster is recommended"
        );
        assert_eq!(
            label(&StructuredPatientFacts {
                needs_hospitalization_or_oxygen: true,
                ..base
            }),
            "Check CDC/IDSA/NIH Guidance"
        );
        assert_eq!(
            label(&base),
            "Paxlovid Dosing: Nirmatrelvir 150 mg 2x daily for 5 days and Ritonavir 100 mg 2x daily for 5 days"
        );
        let molnupiravir = StructuredPatientFacts {
            egfr_ml_min: 29.0,
            remdesivir_accessible: false,
            age_years: 19,
            weight_kg: 42.0,
            ..base
        };
        assert_eq!(
            label(&molnupiravir),
            "Molnupiravir dosing: 800 mg (four 200 mg capsules) orally twice daily for 5 days"
        );
        // interactions are irrelevant once renal impairment routes to remdesivir
        assert_eq!(
            label(&StructuredPatientFacts {
                unmanageable_paxlovid_interactions: true,
                ..molnupiravir
            }),
            label(&molnupiravir)
        );
    }

    #[test]
    fn thresholds_are_inclusive() {
        let tree = canonical();
        let bindings = assets::canonical_bindings();
        let f = StructuredPatientFacts {
            covid_positive: true,
            needs_hospitalization_or_oxygen: false,
            high_risk: true,
            egfr_ml_min: 60.0,
            severe_hepatic_impairment: false,
            unmanageable_paxlovid_interactions: false,
            remdesivir_accessible: true,
            weight_kg: 40.0,
            age_years: 18,
        };
        let leaf = |f: &StructuredPatientFacts| tree.evaluate_facts(bindings, f).unwrap().0.id.to_string();
        assert_eq!(leaf(&f), "paxlovid_full_dose");
        assert_eq!(
            leaf(&StructuredPatientFacts { egfr_ml_min: 30.0, ..f }),
            "paxlovid_reduced_dose"
        );
        assert_eq!(
            leaf(&StructuredPatientFacts { egfr_ml_min: 29.9, ..f }),
            "remdesivir_fixed_dose"
        );
        assert_eq!(
            leaf(&StructuredPatientFacts {
                egfr_ml_min: 29.9,
                weight_kg: 39.9,
                ..f
            }),
            "remdesivir_weight_based"
        );
        let no_remdesivir = StructuredPatientFacts {
            egfr_ml_min: 10.0,
            remdesivir_accessible: false,
            ..f
        };
        assert_eq!(leaf(&no_remdesivir), "molnupiravir");
        assert_eq!(
            leaf(&StructuredPatientFacts {
                age_years: 17,
                ..no_remdesivir
            }),
            "supportive_care"
        );
    }

    #[test]
    fn unbound_predicate_is_reported() {
        let tree = canonical();
        let bindings = PredicateBindings::default();
        let facts = StructuredPatientFacts {
            covid_positive: true,
            needs_hospitalization_or_oxygen: false,
            high_risk: false,
            egfr_ml_min: 90.0,
            severe_hepatic_impairment: false,
            unmanageable_paxlovid_interactions: false,
            remdesivir_accessible: false,
            weight_kg: 70.0,
            age_years: 40,
        };
        match tree.evaluate_facts(&bindings, &facts) {
            Err(FactsError::UnboundPredicate(id)) => assert_eq!(id.as_str(), "covid_positive"),
            other => panic!("expected unbound predicate, got {other:?}"),
        }
    }
}
