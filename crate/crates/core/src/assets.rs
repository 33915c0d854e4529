//! Canonical data files compiled into the library so that tools and tests
//! work independently of the working directory.

use std::sync::OnceLock;

use crate::dataset::Corpus;
use crate::guideline::{parse_guideline, GuidelineTree, PredicateBindings};
use crate::prompt::TemplateSet;

pub const GUIDELINE_JSON: &str = include_str!("../../../data/guideline.json");
pub const PREDICATES_JSON: &str = include_str!("../../../data/predicates.json");
pub const CORPUS_JSONL: &str = include_str!("../../../data/corpus.jsonl");
pub const TEMPLATES_JSON: &str = include_str!("../../../data/templates/canonical.json");

pub fn canonical_tree() -> &'static GuidelineTree {
    static TREE: OnceLock<GuidelineTree> = OnceLock::new();
    TREE.get_or_init(|| parse_guideline(GUIDELINE_JSON).expect("shipped guideline is valid"))
}

pub fn canonical_bindings() -> &'static PredicateBindings {
    static BINDINGS: OnceLock<PredicateBindings> = OnceLock::new();
    BINDINGS.get_or_init(|| {
        let bindings = PredicateBindings::parse(PREDICATES_JSON).expect("shipped bindings parse");
        bindings
            .check_against(canonical_tree())
            .expect("shipped bindings match the tree");
        bindings
    })
}

pub fn canonical_templates() -> &'static TemplateSet {
    static TEMPLATES: OnceLock<TemplateSet> = OnceLock::new();
    TEMPLATES.get_or_init(|| TemplateSet::parse(TEMPLATES_JSON).expect("shipped templates are valid"))
}

pub fn canonical_corpus() -> &'static Corpus {
    static CORPUS: OnceLock<Corpus> = OnceLock::new();
    CORPUS.get_or_init(|| {
        Corpus::parse_canonical(CORPUS_JSONL, "data/corpus.jsonl", canonical_tree()).expect("shipped corpus is valid")
    })
}
