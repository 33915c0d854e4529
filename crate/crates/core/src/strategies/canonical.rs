//! Maps free-text model answers onto guideline leaves.
//!
//! Each leaf label is reduced to three feature classes: therapy concepts
//! (drug or care-pathway names, matched through an alias lexicon), dosage
//! figures (tokens containing a digit) and remaining generic words. A leaf's
//! score is the weighted coverage of its own features by the answer, with
//! figure and generic tokens weighted by `ln(1 + N/df)` across the leaf set.

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::guideline::LeafRecommendation;

pub const ACCEPT_THRESHOLD: f64 = 0.5;
pub const MARGIN_THRESHOLD: f64 = 0.1;

const THERAPY_WEIGHT: f64 = 0.6;
const FIGURE_WEIGHT: f64 = 0.3;
const GENERIC_WEIGHT: f64 = 0.1;

const THERAPY_LEXICON: &[(&str, &[&str])] = &[
    ("paxlovid", &["paxlovid", "nirmatrelvir", "ritonavir"]),
    ("remdesivir", &["remdesivir", "veklury"]),
    ("molnupiravir", &["molnupiravir", "lagevrio"]),
    ("vaccination", &["vaccination", "vaccine", "booster"]),
    ("supportive", &["supportive care", "monitoring"]),
    ("guidance", &["cdc", "idsa", "nih", "guidance"]),
];

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "the", "or", "of", "in", "on", "to", "for", "is", "are", "be", "by", "with", "from", "not",
    "this", "that", "it", "as", "at",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalAnswer {
    pub leaf: LeafRecommendation,
    pub match_score: f64,
    pub matched_phrases: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CanonicalizeError {
    #[error("answer matches no recommendation (best score {best:.3})")]
    NoMatch { best: f64 },
    #[error("answer is ambiguous between `{first}` ({first_score:.3}) and `{second}` ({second_score:.3})")]
    Ambiguous {
        first: String,
        first_score: f64,
        second: String,
        second_score: f64,
    },
    #[error("leaf set must be non-empty with distinct labels")]
    InvalidLeaves,
}

/// Lowercases, keeps periods only between two digits, and turns every other
/// non-alphanumeric character into whitespace.
pub fn normalize(text: &str) -> String {
    let chars: Vec<char> = text.to_lowercase().chars().collect();
    let mut out = String::with_capacity(chars.len());
    for (i, &c) in chars.iter().enumerate() {
        let keep = match c {
            'a'..='z' | '0'..='9' => true,
            '.' => i > 0 && chars[i - 1].is_ascii_digit() && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit()),
            _ => false,
        };
        out.push(if keep { c } else { ' ' });
    }
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn contains_phrase(normalized: &str, phrase: &str) -> bool {
    normalized.match_indices(phrase).any(|(i, _)| {
        let before = i == 0 || normalized.as_bytes()[i - 1] == b' ';
        let end = i + phrase.len();
        let after = end == normalized.len() || normalized.as_bytes()[end] == b' ';
        before && after
    })
}

#[derive(Debug, Clone)]
struct LeafFeatures {
    concepts: BTreeSet<&'static str>,
    figures: BTreeSet<String>,
    generic: BTreeSet<String>,
}

/// Precomputed scorer over a fixed leaf set.
#[derive(Debug, Clone)]
pub struct Canonicalizer {
    leaves: Vec<LeafRecommendation>,
    features: Vec<LeafFeatures>,
    figure_idf: HashMap<String, f64>,
    generic_idf: HashMap<String, f64>,
}

impl Canonicalizer {
    pub fn new(leaves: &[LeafRecommendation]) -> Result<Self, CanonicalizeError> {
        let labels: HashSet<&str> = leaves.iter().map(|l| l.label.as_str()).collect();
        if leaves.is_empty() || labels.len() != leaves.len() {
            return Err(CanonicalizeError::InvalidLeaves);
        }
        let therapy_words: HashSet<&str> = THERAPY_LEXICON
            .iter()
            .flat_map(|(_, aliases)| aliases.iter().flat_map(|a| a.split(' ')))
            .collect();
        let features: Vec<LeafFeatures> = leaves
            .iter()
            .map(|leaf| {
                let n = normalize(&leaf.label);
                let concepts = THERAPY_LEXICON
                    .iter()
                    .filter(|(_, aliases)| aliases.iter().any(|a| contains_phrase(&n, a)))
                    .map(|(c, _)| *c)
                    .collect();
                let mut figures = BTreeSet::new();
                let mut generic = BTreeSet::new();
                for w in n.split(' ').filter(|w| !w.is_empty()) {
                    if STOPWORDS.contains(&w) || therapy_words.contains(w) {
                        continue;
                    }
                    if w.chars().any(|c| c.is_ascii_digit()) {
                        figures.insert(w.to_string());
                    } else {
                        generic.insert(w.to_string());
                    }
                }
                LeafFeatures {
                    concepts,
                    figures,
                    generic,
                }
            })
            .collect();
        let n = leaves.len() as f64;
        let idf = |select: fn(&LeafFeatures) -> &BTreeSet<String>| {
            let mut df: HashMap<String, usize> = HashMap::new();
            for f in &features {
                for w in select(f) {
                    *df.entry(w.clone()).or_default() += 1;
                }
            }
            df.into_iter()
                .map(|(w, d)| (w, (1.0 + n / d as f64).ln()))
                .collect::<HashMap<_, _>>()
        };
        let figure_idf = idf(|f| &f.figures);
        let generic_idf = idf(|f| &f.generic);
        Ok(Self {
            leaves: leaves.to_vec(),
            features,
            figure_idf,
            generic_idf,
        })
    }

    /// Per-leaf scores in leaf order, with the features each leaf matched.
    pub fn scores(&self, text: &str) -> Vec<(f64, Vec<String>)> {
        let n = normalize(text);
        let tokens: HashSet<&str> = n.split(' ').collect();
        self.features
            .iter()
            .map(|f| {
                let mut parts = Vec::new();
                let mut matched = Vec::new();
                if !f.concepts.is_empty() {
                    let mut hit = 0usize;
                    for (concept, aliases) in THERAPY_LEXICON.iter().filter(|(c, _)| f.concepts.contains(c)) {
                        let found: Vec<&str> = aliases.iter().copied().filter(|a| contains_phrase(&n, a)).collect();
                        if !found.is_empty() {
                            hit += 1;
                            matched.extend(found.iter().map(|a| a.to_string()));
                        }
                        let _ = concept;
                    }
                    parts.push((THERAPY_WEIGHT, hit as f64 / f.concepts.len() as f64));
                }
                for (weight, words, idf) in [
                    (FIGURE_WEIGHT, &f.figures, &self.figure_idf),
                    (GENERIC_WEIGHT, &f.generic, &self.generic_idf),
                ] {
                    if words.is_empty() {
                        continue;
                    }
                    let total: f64 = words.iter().map(|w| idf[w]).sum();
                    let mut got = 0.0;
                    for w in words.iter().filter(|w| tokens.contains(w.as_str())) {
                        got += idf[w];
                        matched.push(w.clone());
                    }
                    parts.push((weight, got / total));
                }
                let weight: f64 = parts.iter().map(|p| p.0).sum();
                let score = if weight > 0.0 {
                    parts.iter().map(|(w, s)| w * s).sum::<f64>() / weight
                } else {
                    0.0
                };
                (score, matched)
            })
            .collect()
    }

    pub fn canonicalize(&self, text: &str) -> Result<CanonicalAnswer, CanonicalizeError> {
        let scored = self.scores(text);
        let mut order: Vec<usize> = (0..scored.len()).collect();
        order.sort_by(|&a, &b| scored[b].0.total_cmp(&scored[a].0).then(a.cmp(&b)));
        let top = order[0];
        let best = scored[top].0;
        if best < ACCEPT_THRESHOLD {
            return Err(CanonicalizeError::NoMatch { best });
        }
        if let Some(&second) = order.get(1) {
            // small epsilon so a margin of exactly 0.1 is not lost to rounding
            if best - scored[second].0 < MARGIN_THRESHOLD - 1e-12 {
                return Err(CanonicalizeError::Ambiguous {
                    first: self.leaves[top].label.clone(),
                    first_score: best,
                    second: self.leaves[second].label.clone(),
                    second_score: scored[second].0,
                });
            }
        }
        Ok(CanonicalAnswer {
            leaf: self.leaves[top].clone(),
            match_score: best,
            matched_phrases: scored[top].1.clone(),
        })
    }
}

pub fn canonicalize_answer(text: &str, leaves: &[LeafRecommendation]) -> Result<CanonicalAnswer, CanonicalizeError> {
    Canonicalizer::new(leaves)?.canonicalize(text)
}
