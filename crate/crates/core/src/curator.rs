//! Corpus rebalancing and test-case de-duplication.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::evaluator::{Problem, TestCase};
use crate::source::SourceUnit;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProblemSample {
    pub problem_id: String,
    pub sample_id: String,
    pub source: SourceUnit,
    pub cases: Vec<TestCase>,
}

/// Keeps at most `cap` samples per problem, lowest sample ids first.
/// Problems stay in order of first appearance.
pub fn cap_per_problem(samples: &[ProblemSample], cap: usize) -> Vec<ProblemSample> {
    let cap = cap.max(1);
    let mut problems: Vec<&str> = Vec::new();
    for s in samples {
        if !problems.contains(&s.problem_id.as_str()) {
            problems.push(&s.problem_id);
        }
    }
    let mut out = Vec::new();
    for p in problems {
        let mut group: Vec<&ProblemSample> = samples.iter().filter(|s| s.problem_id == p).collect();
        group.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
        out.extend(group.into_iter().take(cap).cloned());
    }
    out
}

/// Character `n`-grams; a non-empty text shorter than `n` is its own gram.
pub fn ngrams(text: &str, n: usize) -> BTreeSet<String> {
    assert!(n >= 1, "n-gram size must be positive");
    let chars: Vec<char> = text.chars().collect();
    if chars.is_empty() {
        return BTreeSet::new();
    }
    if chars.len() < n {
        return BTreeSet::from([text.to_string()]);
    }
    chars.windows(n).map(|w| w.iter().collect()).collect()
}

/// Jaccard similarity of character `n`-gram sets; two empty texts are identical.
pub fn ngram_similarity(a: &str, b: &str, n: usize) -> f64 {
    jaccard(&ngrams(a, n), &ngrams(b, n))
}

fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let shared = a.intersection(b).count();
    shared as f64 / (a.len() + b.len() - shared) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurationOptions {
    pub n: usize,
    pub threshold: f64,
    pub max_keep: usize,
    pub cap: usize,
}

impl Default for CurationOptions {
    fn default() -> Self {
        CurationOptions { n: 4, threshold: 0.9, max_keep: 10, cap: 10 }
    }
}

/// Greedy pass over official then generated cases (stable within each),
/// keeping a case iff its input is less than `threshold` similar to every
/// case kept so far, up to `max_keep` cases.
pub fn dedup_cases(cases: &[TestCase], n: usize, threshold: f64, max_keep: usize) -> Vec<TestCase> {
    assert!(threshold > 0.0 && threshold <= 1.0, "threshold must be in (0, 1]");
    let mut order: Vec<&TestCase> = cases.iter().collect();
    order.sort_by_key(|c| c.origin);
    let mut kept: Vec<(&TestCase, BTreeSet<String>)> = Vec::new();
    for c in order {
        if kept.len() >= max_keep {
            break;
        }
        let grams = ngrams(&c.input, n);
        if kept.iter().all(|(_, k)| jaccard(&grams, k) < threshold) {
            kept.push((c, grams));
        }
    }
    kept.into_iter().map(|(c, _)| c.clone()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemReport {
    pub problem_id: String,
    pub samples_in: usize,
    pub samples_kept: usize,
    pub cases_in: usize,
    pub cases_kept: usize,
    /// Highest pairwise input similarity among kept cases.
    pub max_similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurationReport {
    pub options: CurationOptions,
    pub problems: Vec<ProblemReport>,
}

impl CurationReport {
    pub fn to_table(&self) -> String {
        let o = &self.options;
        let mut out = format!(
            "n = {}, threshold = {}, max_keep = {}, cap = {}\n{:<20} {:>8} {:>8} {:>8} {:>8} {:>8}\n",
            o.n, o.threshold, o.max_keep, o.cap, "problem", "samples", "kept", "cases", "kept", "max_sim"
        );
        for p in &self.problems {
            let _ = writeln!(
                out,
                "{:<20} {:>8} {:>8} {:>8} {:>8} {:>8.3}",
                p.problem_id, p.samples_in, p.samples_kept, p.cases_in, p.cases_kept, p.max_similarity
            );
        }
        let total = |f: fn(&ProblemReport) -> usize| self.problems.iter().map(f).sum::<usize>();
        let _ = writeln!(
            out,
            "{:<20} {:>8} {:>8} {:>8} {:>8}",
            "total",
            total(|p| p.samples_in),
            total(|p| p.samples_kept),
            total(|p| p.cases_in),
            total(|p| p.cases_kept)
        );
        out
    }
}

fn max_pairwise(cases: &[TestCase], n: usize) -> f64 {
    let grams: Vec<BTreeSet<String>> = cases.iter().map(|c| ngrams(&c.input, n)).collect();
    let mut max = 0.0f64;
    for i in 0..grams.len() {
        for j in i + 1..grams.len() {
            max = max.max(jaccard(&grams[i], &grams[j]));
        }
    }
    max
}

/// Caps programs and de-duplicates cases of every problem.
pub fn curate_problems(problems: &[Problem], opts: &CurationOptions) -> (Vec<Problem>, CurationReport) {
    let results: Vec<(Problem, ProblemReport)> = problems
        .par_iter()
        .map(|p| {
            let mut sources = p.sources.clone();
            sources.sort_by(|a, b| a.0.cmp(&b.0));
            sources.truncate(opts.cap.max(1));
            let cases = dedup_cases(&p.cases, opts.n, opts.threshold, opts.max_keep);
            let report = ProblemReport {
                problem_id: p.problem_id.clone(),
                samples_in: p.sources.len(),
                samples_kept: sources.len(),
                cases_in: p.cases.len(),
                cases_kept: cases.len(),
                max_similarity: max_pairwise(&cases, opts.n),
            };
            (Problem { problem_id: p.problem_id.clone(), cases, sources }, report)
        })
        .collect();
    let (curated, reports) = results.into_iter().unzip();
    (curated, CurationReport { options: opts.clone(), problems: reports })
}
