mod common;

use common::{golden, golden_triplets, snippet};
use perfhint_core::advisor::{advise, AdviseOptions, RuleSet};
use perfhint_core::composer::{
    compose_baseline, compose_combined, compose_retrieval, compose_retrieval_baseline, compose_symbolic, PromptKind,
    PromptTemplates,
};

fn inputs() -> (perfhint_core::SourceUnit, Vec<perfhint_core::advisor::BottleneckDiagnosis>) {
    let src = snippet("slow_io_slow");
    let diagnoses = advise(&src, &RuleSet::builtin(), AdviseOptions::default()).unwrap().diagnoses;
    assert_eq!(diagnoses.len(), 1);
    (src, diagnoses)
}

#[test]
fn symbolic_prompt_matches_golden() {
    let (src, d) = inputs();
    assert_eq!(compose_symbolic(&d, &src).text, golden("symbolic.txt"));
}

#[test]
fn retrieval_prompts_match_golden() {
    let (src, _) = inputs();
    let t = golden_triplets();
    let refs: Vec<_> = t.iter().collect();
    assert_eq!(compose_retrieval(&refs, &src).unwrap().text, golden("retrieval.txt"));
    assert_eq!(compose_retrieval_baseline(&refs, &src).unwrap().text, golden("retrieval_baseline.txt"));
}

#[test]
fn combined_prompt_matches_golden_with_source_once_at_end() {
    let (src, d) = inputs();
    let t = golden_triplets();
    let refs: Vec<_> = t.iter().collect();
    let p = compose_combined(&d, &refs, &src).unwrap();
    assert_eq!(p.kind, PromptKind::Combined);
    assert_eq!(p.text, golden("combined.txt"));
    let body = src.text().trim_end();
    assert_eq!(p.text.matches(body).count(), 1);
    assert!(p.text.ends_with(&format!("{body}\n\n### Optimized Code:")));
}

#[test]
fn baseline_prompts_match_golden() {
    let (src, _) = inputs();
    assert_eq!(compose_baseline(PromptKind::InstructionOnly, &src).text, golden("instruction_only.txt"));
    assert_eq!(compose_baseline(PromptKind::Cot, &src).text, golden("cot.txt"));
}

#[test]
fn asset_directory_matches_builtin_templates() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/prompts");
    assert_eq!(&PromptTemplates::load(&dir).unwrap(), PromptTemplates::builtin());
}
