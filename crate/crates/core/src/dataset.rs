//! Synthetic patient corpus (JSON-lines, one case per line).

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::guideline::{GuidelineTree, StructuredPatientFacts};

pub const CANONICAL_CASES: usize = 39;
pub const CANONICAL_CASES_PER_DIFFICULTY: usize = 13;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("case `{id}` has unknown gold label {label:?}")]
    UnknownLabel { id: String, label: String },
    #[error("case `{id}` has an empty description")]
    EmptyDescription { id: String },
    #[error("duplicate case id `{0}`")]
    DuplicateId(String),
    #[error("canonical corpus shape violated: {0}")]
    Shape(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard];

    pub fn as_str(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Hard => "hard",
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Difficulty {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Difficulty::ALL
            .into_iter()
            .find(|d| d.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown difficulty `{s}` (expected easy, medium or hard)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatientCase {
    pub id: String,
    pub description: String,
    pub gold_label: String,
    pub difficulty: Difficulty,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub facts: Option<StructuredPatientFacts>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Corpus {
    pub cases: Vec<PatientCase>,
    pub source_path: String,
}

impl Corpus {
    /// Loads a corpus file, checking labels against `tree`. Shape checks
    /// apply only when `canonical` is set.
    pub fn load(path: impl AsRef<Path>, tree: &GuidelineTree, canonical: bool) -> Result<Self, DatasetError> {
        let path = path.as_ref();
        let content = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let source_path = path.display().to_string();
        if canonical {
            Self::parse_canonical(&content, &source_path, tree)
        } else {
            Self::parse(&content, &source_path, tree)
        }
    }

    pub fn parse(content: &str, source_path: &str, tree: &GuidelineTree) -> Result<Self, DatasetError> {
        let mut cases = Vec::new();
        for (idx, line) in content.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            cases.push(serde_json::from_str(line).map_err(|source| DatasetError::Parse { line: idx + 1, source })?);
        }
        Self::from_cases(cases, source_path, tree)
    }

    /// Validates already deserialized cases (labels, descriptions, ids).
    pub fn from_cases(cases: Vec<PatientCase>, source_path: &str, tree: &GuidelineTree) -> Result<Self, DatasetError> {
        for (i, case) in cases.iter().enumerate() {
            if case.description.trim().is_empty() {
                return Err(DatasetError::EmptyDescription { id: case.id.clone() });
            }
            if tree.leaf_by_label(&case.gold_label).is_none() {
                return Err(DatasetError::UnknownLabel {
                    id: case.id.clone(),
                    label: case.gold_label.clone(),
                });
            }
            if cases[..i].iter().any(|c| c.id == case.id) {
                return Err(DatasetError::DuplicateId(case.id.clone()));
            }
        }
        Ok(Corpus {
            cases,
            source_path: source_path.to_string(),
        })
    }

    /// As [`Corpus::parse`], additionally enforcing 39 cases with 13 per
    /// difficulty level.
    pub fn parse_canonical(content: &str, source_path: &str, tree: &GuidelineTree) -> Result<Self, DatasetError> {
        let corpus = Self::parse(content, source_path, tree)?;
        if corpus.len() != CANONICAL_CASES {
            return Err(DatasetError::Shape(format!(
                "expected {CANONICAL_CASES} cases, found {}",
                corpus.len()
            )));
        }
        for d in Difficulty::ALL {
            let n = corpus.cases.iter().filter(|c| c.difficulty == d).count();
            if n != CANONICAL_CASES_PER_DIFFICULTY {
                return Err(DatasetError::Shape(format!(
                    "expected {CANONICAL_CASES_PER_DIFFICULTY} {d} cases, found {n}"
                )));
            }
        }
        Ok(corpus)
    }

    /// Order-preserving subset with the given difficulty.
    pub fn stratify(&self, difficulty: Difficulty) -> Corpus {
        Corpus {
            cases: self
                .cases
                .iter()
                .filter(|c| c.difficulty == difficulty)
                .cloned()
                .collect(),
            source_path: self.source_path.clone(),
        }
    }

    pub fn get(&self, id: &str) -> Option<&PatientCase> {
        self.cases.iter().find(|c| c.id == id)
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assets;

    #[test]
    fn canonical_shape() {
        let corpus = assets::canonical_corpus();
        assert_eq!(corpus.len(), 39);
        for d in Difficulty::ALL {
            assert_eq!(corpus.stratify(d).len(), 13);
        }
    }

    #[test]
    fn easy_stratum_starts_with_oxygen_case() {
        let easy = assets::canonical_corpus().stratify(Difficulty::Easy);
        assert_eq!(easy.cases[0].gold_label, "Check CDC/IDSA/NIH Guidance");
        assert!(easy.cases[0]
            .description
            .contains("oxygen saturation (Sp02) at room air is low"));
    }

    #[test]
    fn unknown_label_is_rejected() {
        let line = r#"{"id":"x","description":"d","gold_label":"Aspirin","difficulty":"easy"}"#;
        let err = Corpus::parse(line, "inline", assets::canonical_tree()).unwrap_err();
        assert!(matches!(err, DatasetError::UnknownLabel { label, .. } if label == "Aspirin"));
    }

    #[test]
    fn empty_non_canonical_file_is_allowed() {
        let corpus = Corpus::parse("", "empty", assets::canonical_tree()).unwrap();
        assert!(corpus.is_empty());
        assert!(corpus.stratify(Difficulty::Hard).is_empty());
        assert!(matches!(
            Corpus::parse_canonical("", "empty", assets::canonical_tree()),
            Err(DatasetError::Shape(_))
        ));
    }

    #[test]
    fn every_twin_reaches_its_gold_label() {
        let tree = assets::canonical_tree();
        let bindings = assets::canonical_bindings();
        for case in &assets::canonical_corpus().cases {
            let facts = case.facts.as_ref().expect("canonical cases carry facts");
            let (leaf, _) = tree.evaluate_facts(bindings, facts).unwrap();
            assert_eq!(leaf.label, case.gold_label, "case {}", case.id);
        }
    }

    #[test]
    fn loading_is_idempotent() {
        let tree = assets::canonical_tree();
        let a = Corpus::parse(assets::CORPUS_JSONL, "a", tree).unwrap();
        let b = Corpus::parse(assets::CORPUS_JSONL, "a", tree).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.cases[0].id, "hard-01");
    }
}
