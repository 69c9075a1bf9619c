#![allow(dead_code)]

use std::path::{Path, PathBuf};

use perfhint_core::advisor::RuleSet;
use perfhint_core::composer::PromptTemplates;
use perfhint_core::evaluator::{load_problems, CaseOrigin, Problem, RunOptions, TestCase};
use perfhint_core::gateway::MockGateway;
use perfhint_core::pipeline::{AnalysisMode, GatewayMode, PipelineConfig, PromptContext, PromptMode};
use perfhint_core::retriever::analysis_prompt;
use perfhint_core::roi_store::{
    build_db, distill_prompt, load_pairs, parse_instruction, BuildOptions, CodePair, RoiDatabase, RoiTriplet,
};
use perfhint_core::SourceUnit;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn read(path: impl AsRef<Path>) -> String {
    let path = path.as_ref();
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn snippet(name: &str) -> SourceUnit {
    SourceUnit::from_file(&fixtures().join("snippets").join(format!("{name}.cpp"))).unwrap()
}

pub fn golden(name: &str) -> String {
    read(fixtures().join("prompts").join(name))
}

fn triplet(id: &str, slow: &str, fast: &str, response: &str) -> RoiTriplet {
    RoiTriplet {
        pair: CodePair::new(id, id, slow, fast).unwrap(),
        instruction: parse_instruction(response, "</think>"),
        embedding: None,
    }
}

/// The two examples the golden prompts are written against.
pub fn golden_triplets() -> Vec<RoiTriplet> {
    vec![
        triplet(
            "io",
            "cin >> n;\n",
            "scanf(\"%d\", &n);\n",
            r#"[{"description": "Replaced cin with scanf to avoid stream synchronization overhead.", "runtime_improvement": 6, "category": "System Interaction"}]"#,
        ),
        triplet(
            "fib",
            "int f(int n){return n<2?n:f(n-1)+f(n-2);}\n",
            "int f(int n){int a=0,b=1;while(n--){int c=a+b;a=b;b=c;}return a;}\n",
            r#"<think>compare</think>[
              {"description": "Replaced exponential recursion with an iterative loop.", "runtime_improvement": 9, "category": "Algorithm"},
              {"description": "Removed call overhead from the hot path.", "runtime_improvement": 3, "category": "Code Execution"}
            ]"#,
        ),
    ]
}

/// Canned distillation replies for the pairs under `fixtures/e2e/pairs`.
pub fn distill_reply(problem_id: &str) -> &'static str {
    match problem_id {
        "repeated_work" => {
            "<think>The slow code runs the same loop twice.</think>\n[{\"description\": \"Removed a second identical loop that recomputed the same value; computing the result once halves the work.\", \"runtime_improvement\": 8, \"category\": \"Code Execution\"}]"
        }
        "stream_io" => {
            "<think>Stream I/O.</think>\n[{\"description\": \"Replaced cin and cout with scanf and printf to cut stream overhead.\", \"runtime_improvement\": 5, \"category\": \"System Interaction\"}]"
        }
        "fibonacci" => {
            "<think>Recursion.</think>\n[{\"description\": \"Replaced exponential recursion with a linear loop.\", \"runtime_improvement\": 10, \"category\": \"Algorithm\"}]"
        }
        other => panic!("no canned reply for {other}"),
    }
}

pub const ANALYSIS_REPLY: &str = "1. The same hash chain is computed twice and the second result is only compared with the first; this repeated work doubles the runtime (impact 9/10).\n2. I/O is a single scanf and printf (impact 1/10).";

/// A temporary workspace with a distilled database, mock fixtures for every
/// prompt of an eco run, and the problem corpus.
pub struct E2eSetup {
    pub dir: tempfile::TempDir,
    pub config: PipelineConfig,
    pub db: RoiDatabase,
    pub problems: Vec<Problem>,
    pub rules: RuleSet,
}

impl E2eSetup {
    pub fn context(&self) -> (MockGateway, PromptTemplates) {
        (MockGateway::new(self.config.paths.fixtures.clone().unwrap()), PromptTemplates::builtin().clone())
    }
}

/// `small_only` keeps only the tiny test case of each problem.
pub fn prepare_e2e(k: usize, run: RunOptions, small_only: bool) -> E2eSetup {
    let dir = tempfile::tempdir().unwrap();
    let mock_dir = dir.path().join("mock");
    std::fs::create_dir_all(&mock_dir).unwrap();

    let pairs = load_pairs(&fixtures().join("e2e/pairs")).unwrap();
    for p in &pairs {
        MockGateway::record(&mock_dir, &distill_prompt(p), None, distill_reply(&p.problem_id)).unwrap();
    }
    let gateway = MockGateway::new(&mock_dir);
    let mut db = RoiDatabase::default();
    let report = build_db(&mut db, &pairs, &gateway, &BuildOptions::default()).unwrap();
    assert_eq!(report.added, pairs.len());
    db.build_index(512);

    let mut problems = load_problems(&fixtures().join("e2e/problems")).unwrap();
    if small_only {
        for p in &mut problems {
            p.cases.retain(|c: &TestCase| c.case_id == "1" && c.origin == CaseOrigin::Official);
        }
    }

    let mut config = PipelineConfig::default();
    config.gateway.mode = GatewayMode::Mock;
    config.paths.fixtures = Some(mock_dir.clone());
    config.paths.work_dir = Some(dir.path().join("work"));
    config.retrieval.analysis = AnalysisMode::Gateway;
    config.eval.k = k;
    config.eval.run = run;
    config.validate().unwrap();

    let rules = RuleSet::builtin();
    for p in &problems {
        for (_, src) in &p.sources {
            MockGateway::record(&mock_dir, &analysis_prompt(src), None, ANALYSIS_REPLY).unwrap();
        }
    }
    let templates = PromptTemplates::builtin();
    let ctx = PromptContext { config: &config, rules: &rules, templates, db: Some(&db), gateway: Some(&gateway) };
    for p in &problems {
        let candidate = read(fixtures().join("e2e/candidates").join(format!("{}.cpp", p.problem_id)));
        for (_, src) in &p.sources {
            let prompt = ctx.compose(PromptMode::Eco, src).unwrap();
            let sent = config.request(&prompt.text).prompt;
            let good = format!(
                "The chain was computed twice; once is enough.\n\n### Optimized Code:\n```cpp\n{candidate}```\n"
            );
            MockGateway::record(&mock_dir, &sent, Some(0), &good).unwrap();
            MockGateway::record(&mock_dir, &sent, None, "The program already looks efficient to me.").unwrap();
        }
    }
    E2eSetup { dir, config, db, problems, rules }
}
