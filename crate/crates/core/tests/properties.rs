mod common;

use proptest::prelude::*;

use common::snippet;
use perfhint_core::advisor::{advise, AdviseOptions, RuleSet};
use perfhint_core::curator::{dedup_cases, ngram_similarity};
use perfhint_core::evaluator::{opt_flag, speedup, CaseOrigin, TestCase};
use perfhint_core::gateway::{estimate_tokens, truncate_to_budget};
use perfhint_core::pipeline::extract_candidate;
use perfhint_core::retriever::{cosine, embed, Embedder};
use perfhint_core::roi_store::{load_db, parse_instruction, save_db, CodePair, RoiDatabase, RoiTriplet};
use perfhint_core::template::fill;

const SNIPPETS: [&str; 8] = [
    "recursion_slow",
    "recursion_fast",
    "static_vector_slow",
    "static_vector_fast",
    "slow_io_slow",
    "slow_io_fast",
    "loop_invariant_slow",
    "loop_invariant_fast",
];

fn case_strategy() -> impl Strategy<Value = TestCase> {
    ("[ab ]{0,12}", any::<bool>()).prop_map(|(input, official)| TestCase {
        case_id: String::new(),
        input,
        expected_output: String::new(),
        origin: if official { CaseOrigin::Official } else { CaseOrigin::Generated },
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn rule_subsets_yield_diagnosis_subsets(which in 0..SNIPPETS.len(), mask in 0u8..32) {
        let src = snippet(SNIPPETS[which]);
        let full = RuleSet::builtin();
        let ids: Vec<&str> = full.rules().iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, r)| r.rule_id.as_str()).collect();
        let subset = full.subset(&ids);
        let all = advise(&src, &full, AdviseOptions::default()).unwrap().diagnoses;
        let some = advise(&src, &subset, AdviseOptions::default()).unwrap().diagnoses;
        let filtered: Vec<_> = all.iter().filter(|d| ids.contains(&d.rule_id.as_str())).cloned().collect();
        prop_assert_eq!(some, filtered);
        prop_assert_eq!(advise(&src, &full, AdviseOptions::default()).unwrap().diagnoses, all);
    }

    #[test]
    fn fill_inserts_values_verbatim(a in ".*", b in ".*") {
        prop_assert_eq!(fill("<{a}|{b}>", &[("a", &a), ("b", &b)]), format!("<{a}|{b}>"));
    }

    #[test]
    fn truncation_is_a_prefix_within_budget(text in "[a-z(){};= \n]{0,200}", max in 0usize..60) {
        let cut = truncate_to_budget(&text, max);
        prop_assert!(text.starts_with(cut));
        prop_assert!(estimate_tokens(cut) <= max);
        if estimate_tokens(&text) <= max {
            prop_assert_eq!(cut, text.as_str());
        }
    }

    #[test]
    fn embeddings_are_unit_or_zero_and_cosine_bounded(a in "[a-z ]{0,40}", b in "[a-z ]{0,40}") {
        let e = Embedder::fit(64, [a.as_str(), b.as_str()]);
        let (va, vb) = (e.embed(&a), e.embed(&b));
        for v in [&va, &vb] {
            let n = v.norm();
            prop_assert!(n == 0.0 || (n - 1.0).abs() < 1e-9);
        }
        let c = cosine(&va, &vb);
        prop_assert!((-1.0..=1.0).contains(&c));
        prop_assert_eq!(embed(&a), embed(&a));
    }

    #[test]
    fn similarity_is_symmetric_and_bounded(a in "[abc]{0,10}", b in "[abc]{0,10}", n in 1usize..4) {
        let s = ngram_similarity(&a, &b, n);
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert_eq!(s, ngram_similarity(&b, &a, n));
        prop_assert_eq!(ngram_similarity(&a, &a, n), 1.0);
    }

    #[test]
    fn dedup_is_a_bounded_idempotent_subset(cases in prop::collection::vec(case_strategy(), 0..25), threshold in 0.05f64..=1.0, max_keep in 1usize..12) {
        let kept = dedup_cases(&cases, 2, threshold, max_keep);
        prop_assert!(kept.len() <= max_keep);
        prop_assert!(kept.iter().all(|k| cases.contains(k)));
        for i in 0..kept.len() {
            for j in i + 1..kept.len() {
                prop_assert!(ngram_similarity(&kept[i].input, &kept[j].input, 2) < threshold);
            }
        }
        prop_assert_eq!(dedup_cases(&kept, 2, threshold, max_keep), kept);
    }

    #[test]
    fn metric_algebra(t_o in 1e-6f64..10.0, t_n in 1e-6f64..10.0, correct in any::<bool>()) {
        let sp = speedup(t_o, t_n, correct).unwrap();
        let opt = opt_flag(t_o, t_n, correct).unwrap();
        prop_assert!(sp >= 1.0);
        prop_assert!(!opt || correct);
        prop_assert!(!opt || sp > 1.0);
    }

    #[test]
    fn instruction_parsing_never_panics(text in ".{0,200}") {
        let parsed = parse_instruction(&text, "</think>");
        prop_assert!(parsed.points.iter().all(|p| (1..=10).contains(&p.runtime_improvement)));
    }

    #[test]
    fn extraction_never_panics(text in "(```|Optimized Code|\n|[a-z ])*") {
        if let Some(code) = extract_candidate(&text) {
            prop_assert!(code.lines().all(|l| !l.trim_start().starts_with("```")));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn database_round_trips_arbitrary_text(slow in "\\PC{1,40}", fast in "\\PC{1,40}", raw in ".{0,60}") {
        prop_assume!(!slow.trim().is_empty() && !fast.trim().is_empty());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("db.jsonl");
        let mut db = RoiDatabase::default();
        db.triplets.push(RoiTriplet {
            pair: CodePair::new("p/a", "p", &slow, &fast).unwrap(),
            instruction: parse_instruction(&raw, "</think>"),
            embedding: None,
        });
        db.build_index(32);
        save_db(&db, &path).unwrap();
        let (loaded, errors) = load_db(&path).unwrap();
        prop_assert!(errors.is_empty());
        prop_assert_eq!(loaded, db);
    }
}
