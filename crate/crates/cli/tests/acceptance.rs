//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::collections::{BTreeMap, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use cpg_cds::assets;
use cpg_cds::dataset::Difficulty;
use cpg_cds::evaluation::{
    aggregate_human_eval, gwet_ac1, interpret_landis_koch, run_benchmark, select_methods, AnnotationRecord,
    BenchmarkReport, HumanEvalSummary, RunConfig, ScoreEntry, SeverityCategory,
};
use cpg_cds::guideline::{Branch, PathDescriptor, PathStep, StructuredPatientFacts};
use cpg_cds::llm::{BackendConfig, BackendFactory, BackendKind, LlmClient, ScriptedBackend, ScriptedRule, TruthfulSim};
use cpg_cds::prompt::{render_graph_program, render_ifelse_description, Renderer};
use cpg_cds::strategies::{run_bdt, MethodKind, RunContext, Verdict};

type Check = Result<(), String>;
type Criterion = (&'static str, fn() -> Check, Duration);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn rt() -> tokio::runtime::Runtime {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .unwrap()
}

fn factory(kind: BackendKind, script: Option<ScriptedBackend>) -> BackendFactory {
    BackendFactory::new(
        BackendConfig::new(kind),
        Arc::new(assets::canonical_tree().clone()),
        Arc::new(assets::canonical_bindings().clone()),
        script,
    )
    .unwrap()
}

fn structural_fidelity() -> Check {
    let tree = assets::canonical_tree();
    let leaves: HashSet<_> = tree.leaves().map(|l| l.id.clone()).collect();
    ensure!(leaves.len() == 8, "{} leaves", leaves.len());
    let paths = tree.enumerate_paths();
    ensure!(paths.len() == 13, "{} paths", paths.len());
    let guideline = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/guideline.json");
    let out = Command::new(env!("CARGO_BIN_EXE_cpg-cds"))
        .args(["validate", "-g"])
        .arg(&guideline)
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(out.status.code() == Some(0), "validate exited {:?}", out.status.code());
    let stdout = String::from_utf8_lossy(&out.stdout);
    ensure!(
        stdout.starts_with("leaves: 8, paths: 13\n"),
        "validate printed {stdout:?}"
    );
    Ok(())
}

fn corpus_fidelity() -> Check {
    let corpus = assets::canonical_corpus();
    ensure!(corpus.len() == 39, "{} cases", corpus.len());
    for d in [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard] {
        let n = corpus.stratify(d).len();
        ensure!(n == 13, "{} {} cases", n, d.as_str());
    }
    let tree = assets::canonical_tree();
    let mut ok = 0;
    for case in &corpus.cases {
        let facts = case
            .facts
            .ok_or_else(|| format!("{} has no structured twin", case.id))?;
        let (leaf, _) = tree
            .evaluate_facts(assets::canonical_bindings(), &facts)
            .map_err(|e| e.to_string())?;
        if leaf.label == case.gold_label {
            ok += 1;
        }
    }
    ensure!(ok == 39, "{ok}/39 twins reach their gold label");
    Ok(())
}

fn fact_grid() -> Vec<StructuredPatientFacts> {
    let mut out = Vec::new();
    for bits in 0u32..64 {
        for egfr in [20.0, 45.0, 90.0] {
            for weight in [35.0, 70.0] {
                for age in [15, 40] {
                    let b = |i: u32| bits & (1 << i) != 0;
                    out.push(StructuredPatientFacts {
                        covid_positive: b(0),
                        needs_hospitalization_or_oxygen: b(1),
                        high_risk: b(2),
                        severe_hepatic_impairment: b(3),
                        unmanageable_paxlovid_interactions: b(4),
                        remdesivir_accessible: b(5),
                        egfr_ml_min: egfr,
                        weight_kg: weight,
                        age_years: age,
                    });
                }
            }
        }
    }
    out
}

fn oracle_equivalence() -> Check {
    let tree = assets::canonical_tree();
    let grid = fact_grid();
    ensure!(grid.len() == 768, "grid has {} combinations", grid.len());
    let mut seen = HashSet::new();
    let rt = rt();
    for facts in grid {
        let client = LlmClient::new(Arc::new(TruthfulSim::canonical(facts)));
        let trace = rt
            .block_on(run_bdt(
                tree,
                "Synthetic patient.",
                assets::canonical_templates(),
                &client,
                &RunContext::default(),
            ))
            .map_err(|e| format!("{facts:?}: {e}"))?;
        let (leaf, path) = tree
            .evaluate_facts(assets::canonical_bindings(), &facts)
            .map_err(|e| e.to_string())?;
        ensure!(trace.final_leaf.as_ref() == Some(leaf), "leaf differs for {facts:?}");
        let got = PathDescriptor {
            steps: trace
                .visited_nodes()
                .into_iter()
                .map(|(node, v)| PathStep {
                    node: node.clone(),
                    branch: Branch::from_bool(v == Verdict::Yes),
                })
                .collect(),
            leaf: leaf.id.clone(),
        };
        ensure!(got == path, "path differs for {facts:?}");
        seen.insert(path);
    }
    ensure!(seen.len() == 13, "{} of 13 paths exercised", seen.len());
    Ok(())
}

fn published_scores() -> Vec<ScoreEntry> {
    let rows = [
        ("GPT-4", [1.00, 0.97, 0.83, 0.47]),
        ("GPT-3.5 Turbo", [0.85, 0.69, 0.38, 0.26]),
        ("LLaMA-13b", [0.37, 0.31, 0.42, 0.31]),
        ("PaLM 2", [0.71, 0.58, 0.41, 0.01]),
    ];
    let methods = ["BDT", "CoT-FSP", "PAGC", "ZSP"];
    rows.iter()
        .flat_map(|(model, scores)| {
            methods
                .iter()
                .zip(scores)
                .map(move |(m, s)| ScoreEntry::new(*model, *m, *s))
        })
        .collect()
}

fn table_two_pipeline() -> Check {
    let ranked = select_methods(&published_scores());
    let got: Vec<(usize, &str, &str)> = ranked
        .iter()
        .map(|r| (r.rank, r.model.as_str(), r.method.as_str()))
        .collect();
    let expected = [
        (1, "GPT-4", "BDT"),
        (2, "GPT-4", "CoT-FSP"),
        (3, "GPT-3.5 Turbo", "BDT"),
        (4, "GPT-4", "PAGC"),
        (5, "PaLM 2", "BDT"),
        (6, "GPT-3.5 Turbo", "CoT-FSP"),
        (7, "PaLM 2", "CoT-FSP"),
    ];
    ensure!(got == expected, "selection was {got:?}");

    let config = RunConfig::new(vec![MethodKind::Bdt], BackendConfig::new(BackendKind::TruthfulSim));
    let records = rt()
        .block_on(run_benchmark(
            assets::canonical_corpus(),
            &config,
            assets::canonical_tree(),
            assets::canonical_templates(),
            &factory(BackendKind::TruthfulSim, None),
        ))
        .map_err(|e| e.to_string())?;
    ensure!(records.len() == 39 * 4, "{} predictions", records.len());
    let report = BenchmarkReport::build(&records, &config, assets::canonical_tree()).map_err(|e| e.to_string())?;
    let bdt = report.method(MethodKind::Bdt).ok_or("no BDT row")?;
    ensure!(bdt.mean_macro_f1 == 1.0, "mean macro-F1 {}", bdt.mean_macro_f1);
    ensure!(
        bdt.per_seed.iter().all(|s| s.macro_f1 == 1.0),
        "per-seed spread {:?}",
        bdt.per_seed
    );
    Ok(())
}

fn agreement_statistics() -> Check {
    for (score, label) in [
        (0.87, "Almost Perfect"),
        (0.77, "Substantial"),
        (0.60, "Moderate"),
        (0.61, "Substantial"),
    ] {
        let band = interpret_landis_koch(score).map_err(|e| e.to_string())?;
        ensure!(band.label() == label, "{score} -> {}", band.label());
    }
    let a = [2, 2, 2, 2, 2, 2, 2, 2, 2, 1];
    let ac1 = gwet_ac1(&a, &[2; 10], 3).map_err(|e| e.to_string())?;
    ensure!((ac1 - 0.8950).abs() < 1e-4, "fixture AC1 {ac1}");
    let full = gwet_ac1(&[0, 1, 2, 2], &[0, 1, 2, 2], 3).map_err(|e| e.to_string())?;
    ensure!(full == 1.0, "full agreement AC1 {full}");
    Ok(())
}

fn table_three_aggregation() -> Check {
    let summary = HumanEvalSummary::from_means(&[
        (SeverityCategory::IncorrectMedicalContent, 1.71),
        (SeverityCategory::OmissionOfContent, 2.00),
        (SeverityCategory::HarmfulContent, 1.86),
    ])
    .map_err(|e| e.to_string())?;
    ensure!(
        summary.display_overall() == "1.86",
        "overall {}",
        summary.display_overall()
    );

    let records: Vec<AnnotationRecord> = (0..7)
        .flat_map(|i| {
            SeverityCategory::ALL.into_iter().map(move |category| AnnotationRecord {
                response_id: format!("r{i}"),
                rater_id: "a".into(),
                category,
                rating: 2,
            })
        })
        .collect();
    let perfect = aggregate_human_eval(&records).map_err(|e| e.to_string())?;
    for c in SeverityCategory::ALL {
        let shown = perfect.display_mean(c);
        ensure!(shown.as_deref() == Some("2.00"), "{c:?} shows {shown:?}");
    }
    ensure!(
        perfect.display_overall() == "2.00",
        "overall {}",
        perfect.display_overall()
    );
    Ok(())
}

fn prompt_contracts() -> Check {
    const PATIENT: &str = "A 67-year-old woman tested positive for COVID-19 yesterday. She has type 2 diabetes, \
eGFR 48 mL/min, no liver disease, takes no interacting medications and breathes comfortably on room air.";
    let tree = assets::canonical_tree();
    let r = Renderer::new(assets::canonical_templates());
    let zsp = r.zsp(PATIENT).map_err(|e| e.to_string())?;
    for node in tree.nodes() {
        ensure!(!zsp.text().contains(&node.question), "ZSP contains `{}`", node.question);
    }
    let cot = r.cot(PATIENT, tree).map_err(|e| e.to_string())?;
    let shots = cot.text().matches("\nAnswer:\n").count();
    ensure!(shots == 5, "CoT has {shots} few-shot blocks");
    let ifelse = render_ifelse_description(tree);
    ensure!(
        cot.text().contains(&ifelse) && ifelse.contains("Step 7") && !ifelse.contains("Step 8"),
        "CoT if-else section is not 7 steps"
    );
    let pagc = r.pagc(PATIENT, tree).map_err(|e| e.to_string())?;
    let leaves = render_graph_program(tree).matches("\nleaf(").count();
    ensure!(leaves == 8, "PAGC program declares {leaves} leaves");

    let golden = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden");
    for (name, text) in [
        ("zsp.txt", zsp.text()),
        ("cot_fsp.txt", cot.text()),
        ("pagc.txt", pagc.text()),
    ] {
        let expected = std::fs::read_to_string(golden.join(name)).map_err(|e| format!("{name}: {e}"))?;
        ensure!(expected == text, "{name} differs from its snapshot");
    }
    let again = r.pagc(PATIENT, tree).map_err(|e| e.to_string())?;
    ensure!(again.text() == pagc.text(), "PAGC rendering is not deterministic");
    Ok(())
}

fn robustness() -> Check {
    let script = ScriptedBackend::new(vec![
        ScriptedRule::new("Question: ", "YES, that is stated."),
        ScriptedRule::new("Response YES or NO?", "Unclear from the record.").with_priority(1),
    ])
    .map_err(|e| e.to_string())?;
    let mut config = RunConfig::new(vec![MethodKind::Bdt], BackendConfig::new(BackendKind::Scripted));
    config.seeds = vec![9631];
    let records = rt()
        .block_on(run_benchmark(
            assets::canonical_corpus(),
            &config,
            assets::canonical_tree(),
            assets::canonical_templates(),
            &factory(BackendKind::Scripted, Some(script)),
        ))
        .map_err(|e| e.to_string())?;
    ensure!(records.len() == 39, "batch produced {} predictions", records.len());
    let kinds: BTreeMap<String, usize> = records.iter().fold(BTreeMap::new(), |mut m, r| {
        let k = r.failure.as_ref().map_or("none".to_string(), |f| f.kind.clone());
        *m.entry(k).or_default() += 1;
        m
    });
    ensure!(
        kinds.get("classification_failure") == Some(&39),
        "failure kinds {kinds:?}"
    );
    ensure!(
        records.iter().all(|r| !r.is_correct()),
        "a failed case was scored correct"
    );
    Ok(())
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("structural fidelity", structural_fidelity, Duration::from_secs(1)),
        ("corpus fidelity", corpus_fidelity, Duration::from_secs(1)),
        ("oracle equivalence", oracle_equivalence, Duration::from_secs(30)),
        (
            "selection pipeline and simulator benchmark",
            table_two_pipeline,
            Duration::from_secs(30),
        ),
        ("agreement statistics", agreement_statistics, Duration::from_secs(1)),
        (
            "human evaluation aggregation",
            table_three_aggregation,
            Duration::from_secs(1),
        ),
        ("prompt contracts", prompt_contracts, Duration::from_secs(5)),
        ("robustness", robustness, Duration::from_secs(30)),
    ];
    let mut failed = 0;
    for (name, check, budget) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let outcome = outcome.and_then(|()| {
            if elapsed <= budget {
                Ok(())
            } else {
                Err(format!("exceeded {budget:?}"))
            }
        });
        match outcome {
            Ok(()) => println!("PASS  {name} ({} ms)", elapsed.as_millis()),
            Err(e) => {
                failed += 1;
                println!("FAIL  {name} ({} ms): {e}", elapsed.as_millis());
            }
        }
    }
    println!("{} of 8 criteria passed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
