//! Program-style node/edge listing of the guideline graph with a
//! candidate-selection routine, for program-aided prompts.

use std::fmt::Write;

use crate::guideline::{Branch, GuidelineTree};

fn quoted(s: &str) -> String {
    serde_json::to_string(s).expect("string literal")
}

/// Renders the tree as pseudo-program declarations. Every decision node is
/// declared with `node(...)`, every leaf with `leaf(...)` and every labeled
/// branch with `edge(...)`.
pub fn render_graph_program(tree: &GuidelineTree) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Guideline graph ({})", tree.version());
    out.push_str("graph = DirectedGraph()\n");

    out.push_str("\n# Decision nodes: patient conditions checked by the guideline\n");
    for node in tree.nodes() {
        let _ = writeln!(
            out,
            "node({}, question={})",
            quoted(node.id.as_str()),
            quoted(&node.question)
        );
    }

    out.push_str("\n# Leaf nodes: treatment suggestions\n");
    for leaf in tree.leaves() {
        let _ = writeln!(
            out,
            "leaf({}, recommendation={})",
            quoted(leaf.id.as_str()),
            quoted(&leaf.label)
        );
    }

    out.push_str("\n# Edges, labeled with the answer that leads along them\n");
    for node in tree.nodes() {
        for branch in [Branch::Yes, Branch::No] {
            let _ = writeln!(
                out,
                "edge({}, {}, answer={})",
                quoted(node.id.as_str()),
                quoted(node.target(branch).as_str()),
                quoted(&branch.to_string())
            );
        }
    }

    let _ = writeln!(out, "\nroot = {}", quoted(tree.root().as_str()));
    out.push_str(
        "\ndef select_candidates(patient_description):
    # 1. For each decision node, decide from the patient description whether
    #    its condition holds (YES) or not (NO). Ignore unrelated details.
    # 2. Mark every node whose answer is supported by the description as a
    #    candidate, recording the answer.
    # 3. Starting at root, follow the edge whose answer matches the candidate
    #    decision at each node until a leaf is reached.
    # 4. Return the candidates, the traced path and the leaf recommendation,
    #    quoted verbatim.
    candidates = mark_matching_nodes(graph, patient_description)
    path = trace_path(graph, root, candidates)
    return candidates, path, graph.recommendation(path[-1])",
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assets;

    fn count_prefix(text: &str, prefix: &str) -> usize {
        text.lines().filter(|l| l.starts_with(prefix)).count()
    }

    #[test]
    fn declares_eight_leaves_once_each() {
        let tree = assets::canonical_tree();
        let text = render_graph_program(tree);
        assert_eq!(count_prefix(&text, "leaf("), 8);
        for leaf in tree.leaves() {
            assert_eq!(text.matches(&quoted(&leaf.label)).count(), 1);
        }
    }

    #[test]
    fn two_edges_per_internal_node() {
        let tree = assets::canonical_tree();
        let text = render_graph_program(tree);
        assert_eq!(count_prefix(&text, "edge("), 2 * tree.node_count());
        assert_eq!(count_prefix(&text, "node("), tree.node_count());
    }

    #[test]
    fn deterministic() {
        let tree = assets::canonical_tree();
        assert_eq!(render_graph_program(tree), render_graph_program(tree));
    }

    #[test]
    fn labels_with_quotes_are_escaped() {
        let tree = crate::guideline::parse_guideline(
            r#"{"version":"q","root":"l","nodes":{},"leaves":{"l":{"label":"say \"hi\""}}}"#,
        )
        .unwrap();
        assert!(render_graph_program(&tree).contains(r#"leaf("l", recommendation="say \"hi\"")"#));
    }
}
