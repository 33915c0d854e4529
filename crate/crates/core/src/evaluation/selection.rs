use serde::{Deserialize, Serialize};

use super::MetricReport;

/// A method is selected when its mean macro-F1 is strictly above this.
pub const SELECTION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    pub model: String,
    pub method: String,
    pub mean_f1: f64,
}

impl ScoreEntry {
    pub fn new(model: impl Into<String>, method: impl Into<String>, mean_f1: f64) -> Self {
        Self {
            model: model.into(),
            method: method.into(),
            mean_f1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub rank: usize,
    pub model: String,
    pub method: String,
    pub mean_f1: f64,
    /// Another selected entry has exactly the same score.
    pub tied: bool,
}

/// Keeps entries above the threshold, sorted by descending score with
/// ties broken by (model, method) name, and numbers them from 1.
pub fn select_methods(entries: &[ScoreEntry]) -> Vec<RankedEntry> {
    let mut kept: Vec<&ScoreEntry> = entries.iter().filter(|e| e.mean_f1 > SELECTION_THRESHOLD).collect();
    kept.sort_by(|a, b| {
        b.mean_f1
            .total_cmp(&a.mean_f1)
            .then_with(|| a.model.cmp(&b.model))
            .then_with(|| a.method.cmp(&b.method))
    });
    kept.iter()
        .enumerate()
        .map(|(i, e)| RankedEntry {
            rank: i + 1,
            model: e.model.clone(),
            method: e.method.clone(),
            mean_f1: e.mean_f1,
            tied: kept.iter().filter(|o| o.mean_f1 == e.mean_f1).count() > 1,
        })
        .collect()
}

/// Writes `selected`, `rank` and `tied` back into the reports.
pub fn apply_selection(reports: &mut [MetricReport]) -> Vec<RankedEntry> {
    let entries: Vec<ScoreEntry> = reports
        .iter()
        .map(|r| ScoreEntry::new(r.model.clone(), r.method.as_str(), r.mean_macro_f1))
        .collect();
    let ranked = select_methods(&entries);
    for report in reports.iter_mut() {
        let hit = ranked
            .iter()
            .find(|e| e.model == report.model && e.method == report.method.as_str());
        report.selected = hit.is_some();
        report.rank = hit.map(|e| e.rank);
        report.tied = hit.is_some_and(|e| e.tied);
    }
    ranked
}
