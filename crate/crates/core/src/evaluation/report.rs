use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    apply_selection, compute_metrics, round_half_up, MetricReport, MetricsError, PredictionRecord, RankedEntry,
    RunConfig, SELECTION_THRESHOLD,
};
use crate::guideline::{GuidelineTree, LeafRecommendation};
use crate::llm::BackendKind;
use crate::strategies::{MethodKind, ACCEPT_THRESHOLD, MARGIN_THRESHOLD};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub guideline_version: String,
    pub backend: BackendKind,
    pub model: String,
    pub seeds: Vec<u64>,
    pub methods: Vec<MethodKind>,
    pub cases: usize,
    pub canonical_accept_threshold: f64,
    pub canonical_margin_threshold: f64,
    pub selection_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub metadata: ReportMetadata,
    pub methods: Vec<MetricReport>,
    pub ranking: Vec<RankedEntry>,
}

impl BenchmarkReport {
    /// Scores each configured method and applies the selection rule.
    pub fn build(records: &[PredictionRecord], config: &RunConfig, tree: &GuidelineTree) -> Result<Self, MetricsError> {
        let leaves: Vec<LeafRecommendation> = tree.leaves().cloned().collect();
        let model = config.backend.model_id.clone();
        let mut methods = Vec::new();
        for &method in &config.methods {
            let subset: Vec<PredictionRecord> = records.iter().filter(|r| r.method == method).cloned().collect();
            if subset.is_empty() {
                continue;
            }
            methods.push(compute_metrics(&subset, &leaves, &model)?);
        }
        let ranking = apply_selection(&mut methods);
        let mut cases: Vec<&str> = records.iter().map(|r| r.case_id.as_str()).collect();
        cases.sort_unstable();
        cases.dedup();
        Ok(Self {
            metadata: ReportMetadata {
                guideline_version: tree.version().to_string(),
                backend: config.backend.kind,
                model,
                seeds: config.seeds.clone(),
                methods: config.methods.clone(),
                cases: cases.len(),
                canonical_accept_threshold: ACCEPT_THRESHOLD,
                canonical_margin_threshold: MARGIN_THRESHOLD,
                selection_threshold: SELECTION_THRESHOLD,
            },
            methods,
            ranking,
        })
    }

    pub fn method(&self, method: MethodKind) -> Option<&MetricReport> {
        self.methods.iter().find(|m| m.method == method)
    }
}

fn two(x: f64) -> String {
    format!("{:.2}", round_half_up(x, 2))
}

/// Markdown summary: an F-score table (one row per model, ranks as
/// superscripts), per-seed scores and per-class figures.
pub fn render_markdown(report: &BenchmarkReport) -> String {
    let m = &report.metadata;
    let mut out = String::new();
    let _ = writeln!(out, "# Benchmark report\n");
    let _ = writeln!(
        out,
        "Backend `{}`, model `{}`, guideline `{}`, {} cases, seeds {}.\n",
        m.backend,
        m.model,
        m.guideline_version,
        m.cases,
        m.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(", ")
    );
    let _ = writeln!(out, "## Mean macro-F1\n");
    let header: Vec<&str> = report.methods.iter().map(|r| r.method.display_name()).collect();
    let _ = writeln!(out, "| Model | {} |", header.join(" | "));
    let _ = writeln!(out, "|---|{}", "---|".repeat(header.len()));
    let cells: Vec<String> = report
        .methods
        .iter()
        .map(|r| match r.rank {
            Some(rank) => format!("{}<sup>{rank}</sup>", two(r.mean_macro_f1)),
            None => two(r.mean_macro_f1),
        })
        .collect();
    let _ = writeln!(out, "| {} | {} |\n", m.model, cells.join(" | "));
    let _ = writeln!(
        out,
        "Methods with mean macro-F1 > {} are selected and ranked.\n",
        m.selection_threshold
    );

    let _ = writeln!(out, "## Per seed\n");
    let _ = writeln!(out, "| Method | Seed | Macro-F1 | Accuracy | Failures |");
    let _ = writeln!(out, "|---|---|---|---|---|");
    for r in &report.methods {
        for s in &r.per_seed {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} |",
                r.method.display_name(),
                s.seed,
                two(s.macro_f1),
                two(s.accuracy),
                s.failures
            );
        }
    }

    for r in &report.methods {
        let _ = writeln!(out, "\n## {} per class\n", r.method.display_name());
        let _ = writeln!(out, "| Recommendation | Precision | Recall | F1 | Support |");
        let _ = writeln!(out, "|---|---|---|---|---|");
        for c in &r.per_class {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} |",
                c.label,
                two(c.precision),
                two(c.recall),
                two(c.f1),
                c.support
            );
        }
    }
    out
}

/// Writes `report.json`, `report.md` and `predictions.jsonl` into `dir`.
pub fn write_reports(
    dir: impl AsRef<Path>,
    report: &BenchmarkReport,
    records: &[PredictionRecord],
) -> io::Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let json_path = dir.join("report.json");
    let md_path = dir.join("report.md");
    let pred_path = dir.join("predictions.jsonl");
    fs::write(
        &json_path,
        serde_json::to_string_pretty(report).map_err(io::Error::other)? + "\n",
    )?;
    fs::write(&md_path, render_markdown(report))?;
    let mut w = io::BufWriter::new(fs::File::create(&pred_path)?);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(io::Error::other)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(vec![json_path, md_path, pred_path])
}
