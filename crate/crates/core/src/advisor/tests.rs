use super::*;

const SNIPPETS: [(&str, &str, &str); 4] = [
    (
        "ALG-001",
        include_str!("../../tests/fixtures/snippets/recursion_slow.cpp"),
        include_str!("../../tests/fixtures/snippets/recursion_fast.cpp"),
    ),
    (
        "DS-001",
        include_str!("../../tests/fixtures/snippets/static_vector_slow.cpp"),
        include_str!("../../tests/fixtures/snippets/static_vector_fast.cpp"),
    ),
    (
        "LIB-001",
        include_str!("../../tests/fixtures/snippets/slow_io_slow.cpp"),
        include_str!("../../tests/fixtures/snippets/slow_io_fast.cpp"),
    ),
    (
        "LOOP-001",
        include_str!("../../tests/fixtures/snippets/loop_invariant_slow.cpp"),
        include_str!("../../tests/fixtures/snippets/loop_invariant_fast.cpp"),
    ),
];

fn unit(src: &str) -> SourceUnit {
    SourceUnit::new(src).unwrap()
}

fn diagnoses(src: &str) -> Vec<BottleneckDiagnosis> {
    advise(&unit(src), &RuleSet::builtin(), AdviseOptions { strict: true }).unwrap().diagnoses
}

fn ids(src: &str) -> Vec<String> {
    diagnoses(src).into_iter().map(|d| d.rule_id).collect()
}

#[test]
fn builtin_rules_cover_all_categories() {
    let rules = RuleSet::builtin();
    let cats: BTreeSet<Category> = rules.rules().iter().map(|r| r.category).collect();
    assert_eq!(cats.len(), 4);
    let ids: Vec<&str> = rules.rules().iter().map(|r| r.rule_id.as_str()).collect();
    assert_eq!(ids, ["ALG-001", "DS-001", "LIB-001", "LIB-002", "LOOP-001"]);
}

#[test]
fn snippet_diagnoses() {
    let expected = [
        "The following methods are purely recursive: [{method: fib, lines: 1--4}]. Applying memoization or dynamic programming can significantly reduce its execution time.",
        "The following vectors do not use dynamic operations: [{variable: v, lines: 2--4}]. Replacing them with a static array or fixed-size container can improve performance.",
        "The following I/O library calls rely on slow operations: [{call: cin, lines: 2--2}, {call: cout, lines: 4--4}]. Replacing them with faster alternatives (scanf, printf) can improve performance.",
        "The following redundant calls are placed inside loops: [{call: sort, lines: 3--4}]. Moving these calls outside the loop, or caching their results, can eliminate redundant work and improve efficiency.",
    ];
    for ((rule, slow, fast), text) in SNIPPETS.iter().zip(expected) {
        let d = diagnoses(slow);
        assert_eq!(d.len(), 1, "{rule}: {d:?}");
        assert_eq!(d[0].rule_id, *rule);
        assert_eq!(d[0].text, text);
        assert!(diagnoses(fast).is_empty(), "{rule} fast: {:?}", diagnoses(fast));
    }
}

#[test]
fn instantiate_requires_entities_and_known_placeholders() {
    let rules = RuleSet::builtin();
    let rule = rules.get("ALG-001").unwrap();
    let empty = RuleMatch { rule_id: "ALG-001".into(), entities: vec![] };
    assert!(matches!(instantiate(rule, &empty), Err(AdvisorError::EmptyMatch(_))));
    let mut bad = rule.clone();
    bad.template = "Slow: {entities} in {file}".into();
    let m = RuleMatch {
        rule_id: "ALG-001".into(),
        entities: vec![Entity { kind: EntityKind::Method, name: "f".into(), span: LineSpan::line(1) }],
    };
    assert!(matches!(instantiate(&bad, &m), Err(AdvisorError::MissingPlaceholder(p)) if p == "file"));
    bad.template = "No slot".into();
    assert!(matches!(instantiate(&bad, &m), Err(AdvisorError::MissingPlaceholder(p)) if p == "entities"));
}

#[test]
fn recursion_rule_cases() {
    assert!(ids("int f(int n){ int s = 0; for(int i=0;i<n;i++) s += i; return s; }").is_empty());
    // locally declared table does not count as memoization
    let local = "int f(int n){ int t[50]; if (n < 2) return n; t[n] = f(n-1); return t[n] + f(n-2); }";
    assert_eq!(ids(local), ["ALG-001"]);
    // table passed by reference does
    let by_ref = "long long f(int n, vector<long long>& memo){ if (n < 2) return n; if (memo[n]) return memo[n]; return memo[n] = f(n-1, memo) + f(n-2, memo); }";
    assert!(ids(by_ref).is_empty());
    let map_memo = "map<int,long long> memo;\nlong long f(int n){ if (n < 2) return n; if (memo.count(n)) return memo[n]; return memo[n] = f(n-1) + f(n-2); }";
    assert!(ids(map_memo).is_empty());
}

#[test]
fn container_rule_cases() {
    let insert = "int main(){\n vector<int> v;\n v.push_back(1);\n v.insert(v.begin(), 2);\n return v[0];\n}\n";
    assert!(ids(insert).is_empty());
    let two = "int main(){\n int n = 5;\n vector<int> a;\n vector<int> b;\n for (int i = 0; i < n; i++) { a.push_back(i); b.push_back(i); }\n b.pop_back();\n return a[0] + b.size();\n}\n";
    let d = diagnoses(two);
    assert_eq!(d.len(), 1);
    assert_eq!(d[0].entities, [Entity { kind: EntityKind::Variable, name: "a".into(), span: LineSpan::new(3, 7) }]);
    let escapes = "int sum(vector<int> v);\nint main(){ vector<int> v; v.push_back(1); return sum(v); }";
    assert!(ids(escapes).is_empty());
    let nested = "int main(){ vector<vector<int>> g; g.push_back({}); return g.size(); }";
    assert!(ids(nested).is_empty());
}

#[test]
fn slow_call_rule_cases() {
    assert!(ids("int main(){ int x; scanf(\"%d\", &x); printf(\"%d\\n\", x); }").is_empty());
    let pow_int = "int main(){ double x = 3; double y = pow(x, 2); printf(\"%f\", y); }";
    let d = diagnoses(pow_int);
    assert_eq!(d.len(), 1);
    assert_eq!(d[0].rule_id, "LIB-002");
    assert_eq!(d[0].category, Category::LibraryUsage);
    assert!(ids("int main(){ double x = 3, e = 0.5; printf(\"%f\", pow(x, e)); }").is_empty());
    let untied = "int main(){ ios::sync_with_stdio(false); int x; cin >> x; cout << x; }";
    assert!(ids(untied).is_empty());
}

#[test]
fn loop_rule_cases() {
    let before = "int res = 0;\nstd::sort(a, a + n);\nfor(int i=0;i<q;++i) {\n  res += a[0];\n}\n";
    assert!(ids(before).is_empty());
    let counter = "int main(){ double s = 0; for (int i = 1; i < 100; i++) s += sqrt(i); printf(\"%f\", s); }";
    assert!(ids(counter).is_empty());
    let mutated = "int main(){ int a[10], n = 10; for (int i = 0; i < n; i++) { a[i] = i; sort(a, a + n); } }";
    assert!(ids(mutated).is_empty());
    let pure_user = "int cost(int x){ return x * x; }\nint main(){\n int k = 7, s = 0;\n for (int i = 0; i < 10; i++) {\n  s += cost(k);\n }\n printf(\"%d\", s);\n}\n";
    let d = diagnoses(pure_user);
    assert_eq!(d.len(), 1);
    assert_eq!(d[0].entities[0].span, LineSpan::line(5));
    let impure = "int calls = 0;\nint cost(int x){ calls++; return x * x; }\nint main(){ int k = 7, s = 0; for (int i = 0; i < 10; i++) s += cost(k); }";
    assert!(ids(impure).is_empty());
}

#[test]
fn two_categories_two_diagnoses_in_rule_order() {
    let src = "int fib(int n){ if (n < 2) return n; return fib(n-1) + fib(n-2); }\nint main(){ int n; cin >> n; cout << fib(n); }\n";
    assert_eq!(ids(src), ["ALG-001", "LIB-001"]);
}

#[test]
fn histogram_over_snippets() {
    let corpus: Vec<SourceUnit> = SNIPPETS.iter().map(|(_, slow, _)| unit(slow)).collect();
    let h = bottleneck_histogram(&corpus, &RuleSet::builtin());
    let expected: BTreeMap<Category, usize> = [
        (Category::InefficientAlgorithm, 1),
        (Category::DataStructureUsage, 1),
        (Category::LibraryUsage, 2),
        (Category::LoopStructure, 1),
    ]
    .into();
    assert_eq!(h.counts, expected);
    assert_eq!(h.total(), 5);
    let empty = bottleneck_histogram(&[], &RuleSet::builtin());
    assert!(empty.counts.values().all(|c| *c == 0) && empty.counts.len() == 4);
}

#[test]
fn resolved_checks() {
    let rules = RuleSet::builtin();
    let (_, slow, fast) = SNIPPETS[2];
    assert!(check_resolved(&rules, "LIB-001", &unit(fast)).unwrap());
    assert!(!check_resolved(&rules, "LIB-001", &unit(slow)).unwrap());
    let partial = "int x, y;\nscanf(\"%d %d\", &x, &y);\nint res = gcd(x, y);\ncout << res << endl;\n";
    assert!(!check_resolved(&rules, "LIB-001", &unit(partial)).unwrap());
    assert!(matches!(check_resolved(&rules, "NOPE", &unit(fast)), Err(AdvisorError::UnknownRule(_))));
}

#[test]
fn rule_set_validation() {
    assert!(matches!(RuleSet::from_toml("version = 2"), Err(AdvisorError::InvalidRuleSet(_))));
    let dup = r#"
version = 1
[[rule]]
id = "X"
category = "LoopStructure"
template = "[{entities}]"
[rule.detector]
kind = "recursion_without_memoization"
[[rule]]
id = "X"
category = "LoopStructure"
template = "[{entities}]"
[rule.detector]
kind = "recursion_without_memoization"
"#;
    assert!(matches!(RuleSet::from_toml(dup), Err(AdvisorError::InvalidRuleSet(_))));
    let bad_cat = "version = 1\n[[rule]]\nid = \"X\"\ncategory = \"Other\"\ntemplate = \"{entities}\"\n[rule.detector]\nkind = \"recursion_without_memoization\"\n";
    assert!(RuleSet::from_toml(bad_cat).is_err());
}

#[test]
fn subset_rules_give_subset_diagnoses() {
    let src = "int fib(int n){ if (n < 2) return n; return fib(n-1) + fib(n-2); }\nint main(){ int n; cin >> n; cout << fib(n); }\n";
    let all = RuleSet::builtin();
    let some = all.subset(&["LIB-001"]);
    let full = advise(&unit(src), &all, AdviseOptions::default()).unwrap().diagnoses;
    let part = advise(&unit(src), &some, AdviseOptions::default()).unwrap().diagnoses;
    assert!(part.iter().all(|d| full.contains(d)));
    assert_eq!(part.len(), 1);
}
