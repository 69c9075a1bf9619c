mod common;

use common::{fixtures, prepare_e2e, read};
use perfhint_core::evaluator::{load_candidates, RunOptions};
use perfhint_core::gateway::{EndpointConfig, GenerationRequest, LiveGateway, TextGenerator};
use perfhint_core::pipeline::{
    evaluate_problems, extract_candidate, run_e2e, PipelineConfig, PromptContext, PromptMode,
};
use perfhint_core::GatewayError;

fn quick() -> RunOptions {
    RunOptions { reps: 3, ..RunOptions::default() }
}

#[test]
fn mock_run_scores_and_writes_candidates() {
    let setup = prepare_e2e(2, quick(), true);
    let (gateway, templates) = setup.context();
    let ctx = PromptContext {
        config: &setup.config,
        rules: &setup.rules,
        templates: &templates,
        db: Some(&setup.db),
        gateway: Some(&gateway),
    };
    let report = run_e2e(&setup.problems, PromptMode::Eco, &ctx);
    assert!(report.failures.is_empty(), "{:?}", report.failures);
    assert_eq!(report.samples.len(), 3);
    for s in &report.samples {
        assert_eq!(s.records.len(), 2);
        assert!(s.records[0].correct, "{:?}", s.records[0]);
        assert!(!s.records[1].correct);
        assert!(s.records[1].note.as_deref().unwrap().contains("no code block"));
    }
    let rows: Vec<&str> = report.summary.iter().map(|(name, _)| name.as_str()).collect();
    assert_eq!(rows, ["Best@1", "Best@2"]);
    assert_eq!(report.summary[1].1.acc_percent, 100.0);

    let work = setup.config.paths.work_dir.clone().unwrap().join("candidates");
    let written = load_candidates(&work, "hash_chain_fnv", "orig", 5).unwrap();
    assert_eq!(written.len(), 1);
    let expected = read(fixtures().join("e2e/candidates/hash_chain_fnv.cpp"));
    assert_eq!(written[0].as_ref().unwrap().text(), expected);

    let (samples, failures) = evaluate_problems(&setup.problems, &work, &setup.config.eval);
    assert!(failures.is_empty());
    assert!(samples.iter().all(|s| s.records[0].correct));
}

#[test]
fn mock_summary_is_deterministic_apart_from_timing() {
    let shape = |r: &perfhint_core::pipeline::E2eReport| {
        r.samples
            .iter()
            .map(|s| (s.problem_id.clone(), s.records.iter().map(|x| (x.correct, x.note.clone())).collect::<Vec<_>>()))
            .collect::<Vec<_>>()
    };
    let setup = prepare_e2e(2, quick(), true);
    let (gateway, templates) = setup.context();
    let ctx = PromptContext {
        config: &setup.config,
        rules: &setup.rules,
        templates: &templates,
        db: Some(&setup.db),
        gateway: Some(&gateway),
    };
    let a = run_e2e(&setup.problems, PromptMode::Eco, &ctx);
    let b = run_e2e(&setup.problems, PromptMode::Eco, &ctx);
    assert_eq!(shape(&a), shape(&b));
    assert_eq!(
        a.summary.iter().map(|r| r.1.acc_percent).collect::<Vec<_>>(),
        b.summary.iter().map(|r| r.1.acc_percent).collect::<Vec<_>>()
    );
}

#[test]
fn unreachable_live_gateway_fails_each_program() {
    let setup = prepare_e2e(1, quick(), true);
    let mut config = setup.config.clone();
    config.gateway.endpoint = EndpointConfig {
        base_url: "http://127.0.0.1:9".into(),
        retries: 0,
        timeout_secs: 2.0,
        ..EndpointConfig::default()
    };
    let gateway = LiveGateway::new(config.gateway.endpoint.clone());
    let templates = perfhint_core::composer::PromptTemplates::builtin();
    let ctx =
        PromptContext { config: &config, rules: &setup.rules, templates, db: Some(&setup.db), gateway: Some(&gateway) };
    let report = run_e2e(&setup.problems, PromptMode::Eco, &ctx);
    assert!(report.samples.is_empty());
    assert_eq!(report.failures.len(), 3);
    assert!(report.failures.iter().all(|f| f.stage == "prompt" || f.stage == "generate"));
    assert!(matches!(
        gateway.complete(&GenerationRequest::new("m", "p")),
        Err(GatewayError::Endpoint(_) | GatewayError::Timeout(_))
    ));
    assert!(report.to_table().contains("failed: 3"));
}

#[test]
fn missing_fixture_is_isolated_per_program() {
    let mut setup = prepare_e2e(1, quick(), true);
    setup.config.paths.fixtures = Some(setup.dir.path().join("empty"));
    std::fs::create_dir_all(setup.dir.path().join("empty")).unwrap();
    let gateway = setup.config.gateway().unwrap();
    let templates = perfhint_core::composer::PromptTemplates::builtin();
    let ctx = PromptContext {
        config: &setup.config,
        rules: &setup.rules,
        templates,
        db: Some(&setup.db),
        gateway: Some(gateway.as_ref()),
    };
    let report = run_e2e(&setup.problems, PromptMode::Eco, &ctx);
    assert_eq!(report.failures.len(), 3);
    assert!(report.failures[0].error.contains("no mock fixture"));
}

#[test]
fn config_file_drives_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("perfhint.toml");
    std::fs::create_dir(dir.path().join("mock")).unwrap();
    let problems = fixtures().join("e2e/problems");
    std::fs::write(
        &path,
        format!(
            "workers = 1\n[paths]\nfixtures = \"mock\"\nproblems = {:?}\n[eval]\nk = 3\n[eval.run]\nreps = 3\n[retrieval]\ntop_k = 1\nanalysis = \"rules\"\n[gateway.endpoint]\nmodel = \"m\"\n",
            problems.display().to_string()
        ),
    )
    .unwrap();
    let c = PipelineConfig::load(&path).unwrap();
    assert_eq!((c.workers, c.eval.k, c.retrieval.top_k), (1, 3, 1));
    assert_eq!(c.paths.fixtures.as_deref(), Some(dir.path().join("mock").as_path()));
    assert_eq!(c.gateway.endpoint.model, "m");
}

#[test]
fn extraction_takes_block_after_marker() {
    let reply = "Explanation with `inline` code.\n```text\nnot this\n```\n### Optimized Code:\n```cpp\nint main() { return 0; }\n```\n";
    assert_eq!(extract_candidate(reply).as_deref(), Some("int main() { return 0; }\n"));
}
