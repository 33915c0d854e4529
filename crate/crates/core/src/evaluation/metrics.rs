use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::PredictionRecord;
use crate::guideline::{LeafRecommendation, NodeId};
use crate::strategies::MethodKind;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no prediction records")]
    Empty,
    #[error("records mix methods {0} and {1}")]
    MixedMethods(MethodKind, MethodKind),
    #[error("record for case `{case}` names `{leaf}`, which is not in the leaf set")]
    UnknownLeaf { case: String, leaf: NodeId },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedScore {
    pub seed: u64,
    pub macro_f1: f64,
    pub accuracy: f64,
    pub cases: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub leaf: NodeId,
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// Rows are gold leaves, columns are predicted leaves plus a trailing
/// failure column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub leaves: Vec<NodeId>,
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn failure_column(&self) -> usize {
        self.leaves.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub model: String,
    pub method: MethodKind,
    pub per_seed: Vec<SeedScore>,
    pub mean_macro_f1: f64,
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    pub confusion: ConfusionMatrix,
    pub failures: usize,
    pub selected: bool,
    pub rank: Option<usize>,
    #[serde(default)]
    pub tied: bool,
}

#[derive(Default, Clone, Copy)]
struct Counts {
    tp: usize,
    fp: usize,
    fn_: usize,
}

impl Counts {
    fn prf(self) -> (f64, f64, f64) {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let p = ratio(self.tp, self.tp + self.fp);
        let r = ratio(self.tp, self.tp + self.fn_);
        let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        (p, r, f)
    }
}

fn class_counts<'a>(records: impl Iterator<Item = &'a PredictionRecord>) -> HashMap<&'a NodeId, Counts> {
    let mut counts: HashMap<&NodeId, Counts> = HashMap::new();
    for r in records {
        match &r.predicted {
            Some(p) if *p == r.gold => counts.entry(p).or_default().tp += 1,
            Some(p) => {
                counts.entry(p).or_default().fp += 1;
                counts.entry(&r.gold).or_default().fn_ += 1;
            }
            None => counts.entry(&r.gold).or_default().fn_ += 1,
        }
    }
    counts
}

/// Unweighted mean of per-class F1 over the classes that occur in gold.
/// Failures count as wrong.
fn macro_f1(records: &[&PredictionRecord]) -> f64 {
    let counts = class_counts(records.iter().copied());
    let mut gold: Vec<&NodeId> = records.iter().map(|r| &r.gold).collect();
    gold.sort();
    gold.dedup();
    if gold.is_empty() {
        return 0.0;
    }
    gold.iter().map(|g| counts[g].prf().2).sum::<f64>() / gold.len() as f64
}

fn accuracy(records: &[&PredictionRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().filter(|r| r.is_correct()).count() as f64 / records.len() as f64
}

/// Scores one method's records. Macro-F1 is computed per seed and then
/// averaged; per-class figures and the confusion matrix pool all seeds.
pub fn compute_metrics(
    records: &[PredictionRecord],
    leaves: &[LeafRecommendation],
    model: &str,
) -> Result<MetricReport, MetricsError> {
    let first = records.first().ok_or(MetricsError::Empty)?;
    let method = first.method;
    let index: HashMap<&NodeId, usize> = leaves.iter().enumerate().map(|(i, l)| (&l.id, i)).collect();
    let mut confusion = vec![vec![0usize; leaves.len() + 1]; leaves.len()];
    for r in records {
        if r.method != method {
            return Err(MetricsError::MixedMethods(method, r.method));
        }
        let unknown = |leaf: &NodeId| MetricsError::UnknownLeaf {
            case: r.case_id.clone(),
            leaf: leaf.clone(),
        };
        let row = *index.get(&r.gold).ok_or_else(|| unknown(&r.gold))?;
        let col = match &r.predicted {
            Some(p) => *index.get(p).ok_or_else(|| unknown(p))?,
            None => leaves.len(),
        };
        confusion[row][col] += 1;
    }

    let mut by_seed: BTreeMap<u64, Vec<&PredictionRecord>> = BTreeMap::new();
    let mut seed_order = Vec::new();
    for r in records {
        by_seed
            .entry(r.seed)
            .or_insert_with(|| {
                seed_order.push(r.seed);
                Vec::new()
            })
            .push(r);
    }
    let per_seed: Vec<SeedScore> = seed_order
        .iter()
        .map(|seed| {
            let rs = &by_seed[seed];
            SeedScore {
                seed: *seed,
                macro_f1: macro_f1(rs),
                accuracy: accuracy(rs),
                cases: rs.len(),
                failures: rs.iter().filter(|r| r.predicted.is_none()).count(),
            }
        })
        .collect();
    let mean_macro_f1 = per_seed.iter().map(|s| s.macro_f1).sum::<f64>() / per_seed.len() as f64;

    let all: Vec<&PredictionRecord> = records.iter().collect();
    let pooled = class_counts(records.iter());
    let per_class = leaves
        .iter()
        .map(|leaf| {
            let c = pooled.get(&leaf.id).copied().unwrap_or_default();
            let (precision, recall, f1) = c.prf();
            ClassMetrics {
                leaf: leaf.id.clone(),
                label: leaf.label.clone(),
                precision,
                recall,
                f1,
                support: c.tp + c.fn_,
            }
        })
        .collect();

    Ok(MetricReport {
        model: model.to_string(),
        method,
        per_seed,
        mean_macro_f1,
        accuracy: accuracy(&all),
        per_class,
        confusion: ConfusionMatrix {
            leaves: leaves.iter().map(|l| l.id.clone()).collect(),
            counts: confusion,
        },
        failures: records.iter().filter(|r| r.predicted.is_none()).count(),
        selected: mean_macro_f1 > super::SELECTION_THRESHOLD,
        rank: None,
        tied: false,
    })
}
