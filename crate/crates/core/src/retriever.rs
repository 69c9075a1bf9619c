//! Performance analysis of input code, lexical embeddings, and top-k ROI
//! retrieval by cosine similarity.

use std::collections::{BTreeMap, BTreeSet};
use std::hash::Hasher;

use fnv::FnvHasher;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::advisor::{advise, AdviseOptions, RuleSet};
use crate::error::{GatewayError, RetrievalError, SourceError};
use crate::gateway::{truncate_to_budget, GenerationRequest, TextGenerator};
use crate::roi_store::{RoiDatabase, RoiTriplet};
use crate::source::SourceUnit;
use crate::template::fill;

pub const DEFAULT_DIMENSION: usize = 512;
pub const DEFAULT_TOP_K: usize = 2;
pub const ANALYSIS_TEMPLATE: &str = include_str!("../assets/prompts/analysis.txt");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn zeros(dimension: usize) -> Self {
        EmbeddingVector(vec![0.0; dimension])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &EmbeddingVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }
}

impl From<Vec<f64>> for EmbeddingVector {
    fn from(values: Vec<f64>) -> Self {
        EmbeddingVector(values)
    }
}

/// Cosine similarity; zero when either vector is zero.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    let denom = a.norm() * b.norm();
    if denom == 0.0 {
        return 0.0;
    }
    (a.dot(b) / denom).clamp(-1.0, 1.0)
}

/// Lowercased word tokens (`w:`) and character trigrams (`c:`) of the text
/// with whitespace collapsed and one space of padding on each side.
pub fn features(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    let mut out: Vec<String> = lower
        .split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|w| !w.is_empty())
        .map(|w| format!("w:{w}"))
        .collect();
    let collapsed = lower.split_whitespace().collect::<Vec<_>>().join(" ");
    if text.is_empty() {
        return out;
    }
    let mut padded: Vec<char> = format!(" {collapsed} ").chars().collect();
    // whitespace-only text still yields one gram
    padded.resize(padded.len().max(3), ' ');
    out.extend(padded.windows(3).map(|w| format!("c:{}", w.iter().collect::<String>())));
    out
}

pub fn bucket(feature: &str, dimension: usize) -> usize {
    let mut h = FnvHasher::default();
    h.write(feature.as_bytes());
    (h.finish() % dimension as u64) as usize
}

/// Hashed TF-IDF embedding with smoothed inverse document frequencies
/// `ln((1 + N) / (1 + df)) + 1` per bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedder {
    dimension: usize,
    documents: usize,
    idf: Vec<f64>,
}

impl Embedder {
    /// Uniform weights; what [`embed`] uses without a corpus.
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Embedder { dimension, documents: 0, idf: vec![1.0; dimension] }
    }

    pub fn fit<'a>(dimension: usize, corpus: impl IntoIterator<Item = &'a str>) -> Self {
        let mut e = Embedder::new(dimension);
        let mut df = vec![0usize; dimension];
        for doc in corpus {
            e.documents += 1;
            let present: BTreeSet<usize> = features(doc).iter().map(|f| bucket(f, dimension)).collect();
            for b in present {
                df[b] += 1;
            }
        }
        let n = e.documents as f64;
        e.idf = df.iter().map(|&d| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0).collect();
        e
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn documents(&self) -> usize {
        self.documents
    }

    pub fn idf(&self) -> &[f64] {
        &self.idf
    }

    pub fn embed(&self, text: &str) -> EmbeddingVector {
        let mut v = vec![0.0; self.dimension];
        for f in features(text) {
            v[bucket(&f, self.dimension)] += 1.0;
        }
        for (x, w) in v.iter_mut().zip(&self.idf) {
            *x *= w;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        EmbeddingVector(v)
    }
}

/// Embeds with uniform weights at the default dimension.
pub fn embed(text: &str) -> EmbeddingVector {
    Embedder::new(DEFAULT_DIMENSION).embed(text)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerformanceAnalysis {
    pub text: String,
    pub source_id: String,
}

pub fn analysis_prompt(src: &SourceUnit) -> String {
    fill(ANALYSIS_TEMPLATE, &[("src_code", src.text().trim_end_matches('\n'))])
}

/// Asks the model for a bottleneck analysis of `src`.
pub fn analyze_performance(
    src: &SourceUnit,
    gateway: &dyn TextGenerator,
    model: &str,
    max_input_tokens: usize,
) -> Result<PerformanceAnalysis, RetrievalError> {
    if src.text().trim().is_empty() {
        return Err(SourceError::Empty.into());
    }
    let prompt = analysis_prompt(src);
    let req = GenerationRequest::new(model, truncate_to_budget(&prompt, max_input_tokens));
    let resp = gateway.complete(&req)?;
    if resp.text.trim().is_empty() {
        return Err(GatewayError::Endpoint("empty analysis".into()).into());
    }
    Ok(PerformanceAnalysis { text: resp.text, source_id: src.label().to_string() })
}

/// Offline analysis: the advisor's diagnoses, one per line.
pub fn analyze_with_rules(src: &SourceUnit, rules: &RuleSet) -> PerformanceAnalysis {
    let text = match advise(src, rules, AdviseOptions::default()) {
        Ok(advice) if !advice.diagnoses.is_empty() => {
            advice.diagnoses.iter().map(|d| d.text.as_str()).collect::<Vec<_>>().join("\n")
        }
        Ok(_) => "No rule-detected bottlenecks.".to_string(),
        Err(e) => format!("Static analysis unavailable: {e}"),
    };
    PerformanceAnalysis { text, source_id: src.label().to_string() }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit<'a> {
    /// Position of the triplet in the database.
    pub index: usize,
    pub triplet: &'a RoiTriplet,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult<'a> {
    pub ranked: Vec<Hit<'a>>,
}

/// Full-scan cosine ranking; equal scores keep database order.
pub fn retrieve<'a>(
    analysis: &PerformanceAnalysis,
    db: &'a RoiDatabase,
    k: usize,
) -> Result<RetrievalResult<'a>, RetrievalError> {
    if k == 0 {
        return Err(RetrievalError::InvalidK);
    }
    if db.is_empty() {
        return Err(RetrievalError::EmptyDatabase);
    }
    let embedder = db.embedder.as_ref().filter(|_| db.is_indexed()).ok_or(RetrievalError::MissingEmbeddings)?;
    let query = embedder.embed(&analysis.text);
    rank(&query, db, k)
}

/// Ranks the database against an already embedded query.
pub fn rank<'a>(query: &EmbeddingVector, db: &'a RoiDatabase, k: usize) -> Result<RetrievalResult<'a>, RetrievalError> {
    if k == 0 {
        return Err(RetrievalError::InvalidK);
    }
    let vectors: Vec<&EmbeddingVector> = db
        .triplets
        .iter()
        .map(|t| t.embedding.as_ref().ok_or(RetrievalError::MissingEmbeddings))
        .collect::<Result<_, _>>()?;
    if let Some(v) = vectors.iter().find(|v| v.dimension() != query.dimension()) {
        return Err(RetrievalError::DimensionMismatch { index: v.dimension(), query: query.dimension() });
    }
    let scores: Vec<f64> = vectors.par_iter().map(|v| cosine(query, v)).collect();
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let ranked =
        order.into_iter().take(k).map(|i| Hit { index: i, triplet: &db.triplets[i], score: scores[i] }).collect();
    Ok(RetrievalResult { ranked })
}

fn code_tokens(text: &str) -> Vec<&str> {
    text.split(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
        .filter(|w| w.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_'))
        .collect()
}

/// Keywords present in both the input and some retrieved program, weighted
/// by their mean TF-IDF over all documents (input first), highest first.
///
/// TF is count over document length; IDF is `ln((1 + N) / (1 + df)) + 1`.
pub fn keyword_overlap_report(input: &SourceUnit, retrieved: &[SourceUnit], n_top: usize) -> Vec<(String, f64)> {
    if retrieved.is_empty() {
        return Vec::new();
    }
    let docs: Vec<Vec<&str>> = std::iter::once(input).chain(retrieved).map(|s| code_tokens(s.text())).collect();
    let counts: Vec<BTreeMap<&str, usize>> = docs
        .iter()
        .map(|d| {
            let mut m = BTreeMap::new();
            for t in d {
                *m.entry(*t).or_insert(0) += 1;
            }
            m
        })
        .collect();
    let n = docs.len() as f64;
    let in_retrieved: BTreeSet<&str> = counts[1..].iter().flat_map(|m| m.keys().copied()).collect();
    let mut report: Vec<(String, f64)> = counts[0]
        .keys()
        .filter(|k| in_retrieved.contains(*k))
        .map(|&k| {
            let df = counts.iter().filter(|m| m.contains_key(k)).count() as f64;
            let idf = ((1.0 + n) / (1.0 + df)).ln() + 1.0;
            let total: f64 =
                counts.iter().zip(&docs).map(|(m, d)| m.get(k).map_or(0.0, |&c| c as f64 / d.len() as f64) * idf).sum();
            (k.to_string(), total / n)
        })
        .collect();
    report.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    report.truncate(n_top);
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::MockGateway;
    use crate::roi_store::{parse_instruction, CodePair};

    fn db_of(texts: &[&str], dim: usize) -> RoiDatabase {
        let mut db = RoiDatabase::default();
        for (i, t) in texts.iter().enumerate() {
            let pair = CodePair::new(&format!("p{i}"), "x", "int main(){}", "int main(){}").unwrap();
            db.triplets.push(RoiTriplet { pair, instruction: parse_instruction(t, "</think>"), embedding: None });
        }
        db.build_index(dim);
        db
    }

    fn analysis(text: &str) -> PerformanceAnalysis {
        PerformanceAnalysis { text: text.into(), source_id: "q".into() }
    }

    #[test]
    fn embeddings_are_unit_or_zero() {
        for t in ["a", "!", "   ", "cin >> x; cout << x;"] {
            assert!((embed(t).norm() - 1.0).abs() < 1e-12, "{t:?}");
            assert!((cosine(&embed(t), &embed(t)) - 1.0).abs() < 1e-12);
        }
        assert_eq!(embed(""), EmbeddingVector::zeros(DEFAULT_DIMENSION));
        assert_eq!(embed("same text"), embed("same text"));
    }

    #[test]
    fn texts_with_disjoint_features_score_zero() {
        let (a, b) = ("aaa", "bbb");
        let fa: BTreeSet<String> = features(a).into_iter().collect();
        let fb: BTreeSet<String> = features(b).into_iter().collect();
        assert!(fa.is_disjoint(&fb));
        let ba: BTreeSet<usize> = fa.iter().map(|f| bucket(f, DEFAULT_DIMENSION)).collect();
        let bb: BTreeSet<usize> = fb.iter().map(|f| bucket(f, DEFAULT_DIMENSION)).collect();
        assert!(ba.is_disjoint(&bb), "pick texts whose buckets do not collide");
        assert_eq!(cosine(&embed(a), &embed(b)), 0.0);
    }

    #[test]
    fn similarity_is_symmetric_and_bounded() {
        let e = Embedder::fit(128, ["slow cin cout", "vector push back", "sort inside loop"]);
        let xs = ["cin cout slow io", "loop sort", "push_back vector", "unrelated words"];
        for a in xs {
            for b in xs {
                let (va, vb) = (e.embed(a), e.embed(b));
                assert_eq!(cosine(&va, &vb), cosine(&vb, &va));
                assert!((0.0..=1.0).contains(&cosine(&va, &vb)));
            }
        }
    }

    #[test]
    fn idf_follows_smoothed_formula() {
        let e = Embedder::fit(DEFAULT_DIMENSION, ["x y", "x"]);
        let bx = bucket("w:x", DEFAULT_DIMENSION);
        assert!((e.idf()[bx] - 1.0).abs() < 1e-12);
        let unused = (0..DEFAULT_DIMENSION)
            .find(|b| ["x y", "x"].iter().all(|d| features(d).iter().all(|f| bucket(f, DEFAULT_DIMENSION) != *b)))
            .unwrap();
        assert!((e.idf()[unused] - (3.0f64.ln() + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn retrieve_cases() {
        let db = db_of(&["fast io with scanf", "memoize recursion", "hoist sort out of loop"], DEFAULT_DIMENSION);
        let r = retrieve(&analysis("memoize recursion"), &db, 2).unwrap();
        assert_eq!(r.ranked.len(), 2);
        assert_eq!(r.ranked[0].index, 1);
        assert!((r.ranked[0].score - 1.0).abs() < 1e-12);
        assert!(r.ranked.windows(2).all(|w| w[0].score >= w[1].score));
        assert_eq!(retrieve(&analysis("x"), &db, 10).unwrap().ranked.len(), 3);

        let single = db_of(&["only entry"], 32);
        let r = retrieve(&analysis("zzzz qqqq"), &single, 2).unwrap();
        assert_eq!(r.ranked.len(), 1);
        assert!(matches!(retrieve(&analysis("x"), &db, 0), Err(RetrievalError::InvalidK)));
        assert!(matches!(retrieve(&analysis("x"), &RoiDatabase::default(), 1), Err(RetrievalError::EmptyDatabase)));
        let mut unindexed = db.clone();
        unindexed.embedder = None;
        assert!(matches!(retrieve(&analysis("x"), &unindexed, 1), Err(RetrievalError::MissingEmbeddings)));
    }

    #[test]
    fn ties_keep_insertion_order() {
        let db = db_of(&["dup text", "other", "dup text", "dup text"], 64);
        let r = retrieve(&analysis("dup text"), &db, 3).unwrap();
        let idx: Vec<usize> = r.ranked.iter().map(|h| h.index).collect();
        assert_eq!(idx, [0, 2, 3]);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let db = db_of(&["a"], 16);
        assert!(matches!(
            rank(&EmbeddingVector::zeros(8), &db, 1),
            Err(RetrievalError::DimensionMismatch { index: 16, query: 8 })
        ));
    }

    #[test]
    fn analysis_prompt_fences_source() {
        let src = SourceUnit::new("int main(){}\n").unwrap();
        let p = analysis_prompt(&src);
        assert!(p.starts_with("You are a competitive-programming performance analyst.\n\n### Task\n"));
        assert!(p.contains("do **NOT** propose fixes or rewrites."));
        assert!(p.ends_with("(10 = largest slowdown factor).\n\n```cpp\nint main(){}\n```"));
    }

    #[test]
    fn analysis_via_gateway() {
        let dir = tempfile::tempdir().unwrap();
        let src = SourceUnit::new("int k; string s;\ncin >> k >> s;\ncout << s;\n").unwrap();
        let canned = "1. Stream I/O with cin/cout dominates runtime (impact 8).";
        MockGateway::record(dir.path(), &analysis_prompt(&src), None, canned).unwrap();
        let gw = MockGateway::new(dir.path());
        let a = analyze_performance(&src, &gw, "m", 4096).unwrap();
        assert_eq!(a.text, canned);
        assert!(a.text.contains("cin/cout"));
    }

    #[test]
    fn rule_analysis_lists_diagnoses() {
        let src = SourceUnit::new("int x;\ncin >> x;\ncout << x;\n").unwrap();
        let a = analyze_with_rules(&src, &RuleSet::builtin());
        assert!(a.text.starts_with("The following I/O library calls rely on slow operations"));
    }

    #[test]
    fn keyword_overlap_matches_hand_computation() {
        let input = SourceUnit::new("cin x cin").unwrap();
        let r1 = SourceUnit::new("cin y").unwrap();
        let r2 = SourceUnit::new("x z z z").unwrap();
        let report = keyword_overlap_report(&input, &[r1, r2], 10);
        // N = 3; cin: df 2, tf 2/3 and 1/2; x: df 2, tf 1/3 and 1/4
        let idf2 = (4.0f64 / 3.0).ln() + 1.0;
        let cin = (2.0 / 3.0 + 1.0 / 2.0) * idf2 / 3.0;
        let x = (1.0 / 3.0 + 1.0 / 4.0) * idf2 / 3.0;
        assert_eq!(report.len(), 2);
        assert_eq!(report[0].0, "cin");
        assert!((report[0].1 - cin).abs() < 1e-12);
        assert_eq!(report[1].0, "x");
        assert!((report[1].1 - x).abs() < 1e-12);
        assert_eq!(
            keyword_overlap_report(&SourceUnit::new("cin x cin").unwrap(), &[SourceUnit::new("cin").unwrap()], 0).len(),
            0
        );
    }

    #[test]
    fn keyword_overlap_edge_cases() {
        let code = SourceUnit::new("int main(){ int n; cin >> n; cout << n; }").unwrap();
        let all = keyword_overlap_report(&code, std::slice::from_ref(&code), 100);
        let distinct: BTreeSet<&str> = code_tokens(code.text()).into_iter().collect();
        assert_eq!(all.len(), distinct.len());
        let other = SourceUnit::new("foo bar").unwrap();
        assert!(keyword_overlap_report(&code, &[other], 10).is_empty());
        assert!(keyword_overlap_report(&code, &[], 10).is_empty());
    }
}
