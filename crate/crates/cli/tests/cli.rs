use std::process::{Command, Output};
use std::sync::Arc;

use cpg_cds::assets;
use cpg_cds::evaluation::{parse_annotations, round_half_up, AgreementReport};
use cpg_cds::llm::{LlmClient, TruthfulSim};
use cpg_cds::prompt::Renderer;
use cpg_cds::strategies::{run_method, MethodKind, RunContext};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cpg-cds")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn in_process(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let argv = std::iter::once("cpg-cds").chain(args.iter().copied());
    let code = cpg_cds_cli::run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

#[test]
fn validate_prints_counts() {
    let o = cli(&["validate"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "leaves: 8, paths: 13\nnodes: 9, depth: 7\n");
}

#[test]
fn invalid_guideline_is_a_domain_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"root\": \"missing\", \"nodes\": [], \"leaves\": []}").unwrap();
    let (code, _, err) = in_process(&["validate", "-g", bad.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(err.starts_with("error: "));
    let (code, _, _) = in_process(&["validate", "-g", "/nonexistent/guideline.json"]);
    assert_eq!(code, 1);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(cli(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(cli(&["render", "--method", "nope"]).status.code(), Some(2));
    assert_eq!(cli(&["bench", "--seeds", "x"]).status.code(), Some(2));
    assert_eq!(cli(&["--help"]).status.code(), Some(0));
}

#[test]
fn paths_lists_every_path() {
    let (code, out, _) = in_process(&["paths"]);
    assert_eq!(code, 0);
    let paths = assets::canonical_tree().enumerate_paths();
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), paths.len());
    for (line, path) in lines.iter().zip(&paths) {
        assert!(line.contains(&path.to_string()), "{line}");
    }
}

#[test]
fn render_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let patient = dir.path().join("patient.txt");
    let text = "A 52-year-old man with COVID-19 and chronic kidney disease.";
    std::fs::write(&patient, format!("{text}\n")).unwrap();
    let r = Renderer::new(assets::canonical_templates());
    let tree = assets::canonical_tree();
    for (method, expected) in [
        ("zsp", r.zsp(text).unwrap()),
        ("cot_fsp", r.cot(text, tree).unwrap()),
        ("pagc", r.pagc(text, tree).unwrap()),
        (
            "bdt",
            r.bdt_question(text, tree.node(tree.root().as_str()).unwrap()).unwrap(),
        ),
    ] {
        let (code, out, _) = in_process(&[
            "render",
            "--method",
            method,
            "--patient-file",
            patient.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        assert_eq!(out, format!("{}\n", expected.text()), "{method}");
    }
}

#[test]
fn recommend_matches_library() {
    let case = &assets::canonical_corpus().cases[5];
    let dir = tempfile::tempdir().unwrap();
    let patient = dir.path().join("patient.txt");
    let facts = dir.path().join("facts.json");
    std::fs::write(&patient, &case.description).unwrap();
    std::fs::write(&facts, serde_json::to_string(&case.facts.unwrap()).unwrap()).unwrap();
    let (code, out, _) = in_process(&[
        "recommend",
        "--method",
        "bdt",
        "--backend",
        "truthful_sim",
        "--patient-file",
        patient.to_str().unwrap(),
        "--facts",
        facts.to_str().unwrap(),
        "--seed",
        "9631",
    ]);
    assert_eq!(code, 0);
    assert_eq!(
        out.lines().next().unwrap(),
        format!("recommendation: {}", case.gold_label)
    );

    let client = LlmClient::new(Arc::new(TruthfulSim::canonical(case.facts.unwrap())));
    let direct = tokio::runtime::Runtime::new()
        .unwrap()
        .block_on(run_method(
            MethodKind::Bdt,
            assets::canonical_tree(),
            &case.description,
            assets::canonical_templates(),
            &client,
            &RunContext::seeded(9631),
        ))
        .unwrap();
    let json_start = out.find('{').unwrap();
    let trace: serde_json::Value = serde_json::from_str(&out[json_start..]).unwrap();
    assert_eq!(trace, serde_json::to_value(&direct).unwrap());
}

#[test]
fn recommend_failure_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let patient = dir.path().join("patient.txt");
    let script = dir.path().join("script.json");
    std::fs::write(&patient, "A patient.").unwrap();
    std::fs::write(
        &script,
        r#"[{"matcher": "Question: ", "response": "Possibly."},
            {"matcher": "Response YES or NO?", "response": "maybe", "priority": 1}]"#,
    )
    .unwrap();
    let (code, out, err) = in_process(&[
        "recommend",
        "--method",
        "bdt",
        "--backend",
        "scripted",
        "--script",
        script.to_str().unwrap(),
        "--patient-file",
        patient.to_str().unwrap(),
    ]);
    assert_eq!(code, 1);
    assert!(err.contains("classification_failure"), "{err}");
    assert!(out.contains("\"steps\""));
}

#[test]
fn agreement_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let ratings = dir.path().join("ratings.csv");
    let mut csv = String::from("response_id,rater_id,category,rating\n");
    for i in 0..10 {
        for category in ["INCORRECT_MEDICAL_CONTENT", "OMISSION_OF_CONTENT", "HARMFUL_CONTENT"] {
            let a = if i == 9 && category == "HARMFUL_CONTENT" { 1 } else { 2 };
            csv.push_str(&format!("r{i},alice,{category},{a}\nr{i},bob,{category},2\n"));
        }
    }
    std::fs::write(&ratings, &csv).unwrap();
    let (code, out, _) = in_process(&["agreement", "--ratings", ratings.to_str().unwrap()]);
    assert_eq!(code, 0);

    let report = AgreementReport::from_records(&parse_annotations(&csv).unwrap()).unwrap();
    for c in &report.categories {
        let line = format!("{}: {:.2} ({})", c.category, round_half_up(c.ac1, 2), c.band);
        assert!(out.lines().any(|l| l == line), "missing `{line}` in\n{out}");
    }
    assert!(out.contains(": 0.90 (Almost Perfect)"));
    assert!(out.contains(": 1.00 (Almost Perfect)"));
}

#[test]
fn bench_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let (code, out, err) = in_process(&[
        "bench",
        "--methods",
        "bdt,zsp",
        "--seeds",
        "9631",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(out.starts_with("BDT      mean macro-F1 1.00"), "{out}");
    for f in ["report.json", "report.md", "predictions.jsonl"] {
        assert!(out_dir.join(f).is_file(), "{f}");
    }
    let lines = std::fs::read_to_string(out_dir.join("predictions.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 39 * 2);

    let (code, _, _) = in_process(&["bench", "--seeds", "1,1", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code, 1);
}
