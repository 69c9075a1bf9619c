//! Configuration and the end-to-end flow: advise, analyze, retrieve, compose,
//! generate, extract, evaluate.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::advisor::{advise, AdviseOptions, RuleSet};
use crate::composer::{PromptBundle, PromptKind, PromptTemplates};
use crate::curator::CurationOptions;
use crate::error::{ConfigError, RetrievalError};
use crate::evaluator::{
    best_at_summaries, evaluate_sample, load_candidates, summary_table, Candidate, EvalConfig, MetricsSummary, Problem,
    SampleEval,
};
use crate::gateway::{
    truncate_to_budget, EndpointConfig, GenerationRequest, LiveGateway, MockGateway, TextGenerator,
    DEFAULT_MAX_INPUT_TOKENS, DEFAULT_MAX_OUTPUT_TOKENS, DEFAULT_TEMPERATURE,
};
use crate::retriever::{
    analyze_performance, analyze_with_rules, rank, retrieve, Embedder, PerformanceAnalysis, DEFAULT_DIMENSION,
    DEFAULT_TOP_K,
};
use crate::roi_store::{load_db, RoiDatabase, RoiTriplet};
use crate::source::SourceUnit;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub rules: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub db: Option<PathBuf>,
    pub problems: Option<PathBuf>,
    pub fixtures: Option<PathBuf>,
    /// Where generated candidates are written; nothing is written when unset.
    pub work_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GatewayMode {
    #[default]
    Mock,
    Live,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    pub mode: GatewayMode,
    pub endpoint: EndpointConfig,
    pub temperature: f64,
    pub max_input_tokens: usize,
    pub max_output_tokens: usize,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            mode: GatewayMode::Mock,
            endpoint: EndpointConfig::default(),
            temperature: DEFAULT_TEMPERATURE,
            max_input_tokens: DEFAULT_MAX_INPUT_TOKENS,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
        }
    }
}

/// Source of the performance analysis that drives retrieval.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnalysisMode {
    /// Ask the model with the analysis prompt.
    #[default]
    Gateway,
    /// Summarize the advisor's diagnoses; no model call.
    Rules,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    pub top_k: usize,
    pub dimension: usize,
    pub analysis: AnalysisMode,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig { top_k: DEFAULT_TOP_K, dimension: DEFAULT_DIMENSION, analysis: AnalysisMode::Gateway }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: PathsConfig,
    pub gateway: GatewayConfig,
    pub retrieval: RetrievalConfig,
    pub eval: EvalConfig,
    pub curation: CurationOptions,
    /// Programs processed concurrently in the end-to-end run.
    pub workers: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            paths: PathsConfig::default(),
            gateway: GatewayConfig::default(),
            retrieval: RetrievalConfig::default(),
            eval: EvalConfig::default(),
            curation: CurationOptions::default(),
            workers: 2,
        }
    }
}

fn out_of_range(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::OutOfRange { key: key.into(), message: message.into() }
}

impl PipelineConfig {
    /// Parses a TOML config; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<PipelineConfig, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let mut config = PipelineConfig::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.resolve_paths(base);
        config.validate()?;
        Ok(config)
    }

    pub fn from_toml(text: &str) -> Result<PipelineConfig, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    fn resolve_paths(&mut self, base: &Path) {
        let p = &mut self.paths;
        for slot in [&mut p.rules, &mut p.templates, &mut p.db, &mut p.problems, &mut p.fixtures, &mut p.work_dir] {
            if let Some(path) = slot.as_mut().filter(|p| p.is_relative()) {
                *path = base.join(&*path);
            }
        }
    }

    /// Checks numeric ranges and that every configured input path exists.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = &self.paths;
        for (key, path) in [
            ("paths.rules", &p.rules),
            ("paths.templates", &p.templates),
            ("paths.db", &p.db),
            ("paths.problems", &p.problems),
            ("paths.fixtures", &p.fixtures),
        ] {
            if let Some(path) = path.as_ref().filter(|p| !p.exists()) {
                return Err(ConfigError::MissingPath { key: key.into(), path: path.clone() });
            }
        }
        if !(1..=crate::composer::MAX_EXAMPLES).contains(&self.retrieval.top_k) {
            return Err(out_of_range("retrieval.top_k", format!("must be 1..={}", crate::composer::MAX_EXAMPLES)));
        }
        if self.retrieval.dimension == 0 {
            return Err(out_of_range("retrieval.dimension", "must be positive"));
        }
        if self.eval.k == 0 {
            return Err(out_of_range("eval.k", "must be at least 1"));
        }
        if self.eval.run.reps < 3 || self.eval.run.reps.is_multiple_of(2) {
            return Err(out_of_range("eval.run.reps", "must be odd and at least 3"));
        }
        let timeout = self.eval.run.timeout_secs;
        if timeout.is_nan() || timeout <= 0.0 {
            return Err(out_of_range("eval.run.timeout_secs", "must be positive"));
        }
        let c = &self.curation;
        if c.threshold.is_nan() || c.threshold <= 0.0 || c.threshold > 1.0 {
            return Err(out_of_range("curation.threshold", "must be in (0, 1]"));
        }
        if c.n == 0 || c.cap == 0 || c.max_keep == 0 {
            return Err(out_of_range("curation", "n, cap and max_keep must be positive"));
        }
        let g = &self.gateway;
        if g.temperature.is_nan() || g.temperature < 0.0 || g.max_input_tokens == 0 || g.max_output_tokens == 0 {
            return Err(out_of_range("gateway", "temperature must be >= 0 and token budgets positive"));
        }
        if self.workers == 0 {
            return Err(out_of_range("workers", "must be at least 1"));
        }
        Ok(())
    }

    pub fn gateway(&self) -> Result<Box<dyn TextGenerator>, ConfigError> {
        match self.gateway.mode {
            GatewayMode::Mock => {
                let dir = self
                    .paths
                    .fixtures
                    .clone()
                    .ok_or_else(|| ConfigError::Unset { key: "paths.fixtures (or --mock)".into() })?;
                Ok(Box::new(MockGateway::new(dir)))
            }
            GatewayMode::Live => Ok(Box::new(LiveGateway::new(self.gateway.endpoint.clone()))),
        }
    }

    pub fn rules(&self) -> Result<RuleSet, crate::error::AdvisorError> {
        match &self.paths.rules {
            Some(path) => RuleSet::load(path),
            None => Ok(RuleSet::builtin()),
        }
    }

    pub fn templates(&self) -> Result<PromptTemplates, crate::error::ComposeError> {
        match &self.paths.templates {
            Some(dir) => PromptTemplates::load(dir),
            None => Ok(PromptTemplates::builtin().clone()),
        }
    }

    pub fn request(&self, prompt: &str) -> GenerationRequest {
        let mut req = GenerationRequest::new(
            &self.gateway.endpoint.model,
            truncate_to_budget(prompt, self.gateway.max_input_tokens),
        );
        req.temperature = self.gateway.temperature;
        req.max_output_tokens = self.gateway.max_output_tokens;
        req
    }
}

/// Loads the database and indexes it in memory when no index was saved.
pub fn load_indexed_db(path: &Path, dimension: usize) -> Result<RoiDatabase, crate::error::StoreError> {
    let (mut db, errors) = load_db(path)?;
    for e in errors {
        log::warn!("{}: {e}", path.display());
    }
    if !db.is_indexed() || db.embedder.as_ref().is_some_and(|e| e.dimension() != dimension) {
        db.build_index(dimension);
    }
    Ok(db)
}

/// Prompt styles: ours plus the baselines they are compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    /// Diagnoses and analysis-retrieved instructions combined.
    Eco,
    Symbolic,
    /// Analysis-retrieved examples with their instructions.
    Retrieval,
    /// The first database pairs as fixed demonstrations, no instructions.
    Icl,
    /// Pairs whose slow code is most similar to the input, no instructions.
    Rag,
    Cot,
    Base,
}

impl PromptMode {
    pub fn needs_db(self) -> bool {
        matches!(self, PromptMode::Eco | PromptMode::Retrieval | PromptMode::Icl | PromptMode::Rag)
    }

    pub fn needs_analysis(self) -> bool {
        matches!(self, PromptMode::Eco | PromptMode::Retrieval)
    }
}

/// Everything a prompt needs besides the input program.
pub struct PromptContext<'a> {
    pub config: &'a PipelineConfig,
    pub rules: &'a RuleSet,
    pub templates: &'a PromptTemplates,
    pub db: Option<&'a RoiDatabase>,
    pub gateway: Option<&'a dyn TextGenerator>,
}

impl PromptContext<'_> {
    pub fn analysis(&self, src: &SourceUnit) -> Result<PerformanceAnalysis, RetrievalError> {
        match (self.config.retrieval.analysis, self.gateway) {
            (AnalysisMode::Gateway, Some(gw)) => {
                analyze_performance(src, gw, &self.config.gateway.endpoint.model, self.config.gateway.max_input_tokens)
            }
            (AnalysisMode::Gateway, None) => Err(RetrievalError::Gateway(crate::error::GatewayError::InvalidRequest(
                "analysis needs a gateway".into(),
            ))),
            (AnalysisMode::Rules, _) => Ok(analyze_with_rules(src, self.rules)),
        }
    }

    fn examples(&self, mode: PromptMode, src: &SourceUnit) -> Result<Vec<&RoiTriplet>, PipelineError> {
        let db = self.db.ok_or(PipelineError::NoDatabase)?;
        if db.is_empty() {
            return Err(RetrievalError::EmptyDatabase.into());
        }
        let k = self.config.retrieval.top_k;
        Ok(match mode {
            PromptMode::Icl => db.triplets.iter().take(k).collect(),
            PromptMode::Rag => {
                let slow: Vec<&str> = db.triplets.iter().map(|t| t.pair.slow.text()).collect();
                let embedder = Embedder::fit(self.config.retrieval.dimension, slow.iter().copied());
                let mut by_code = db.clone();
                for (t, text) in by_code.triplets.iter_mut().zip(&slow) {
                    t.embedding = Some(embedder.embed(text));
                }
                let hits = rank(&embedder.embed(src.text()), &by_code, k)?;
                hits.ranked.iter().map(|h| &db.triplets[h.index]).collect()
            }
            _ => {
                let analysis = self.analysis(src)?;
                retrieve(&analysis, db, k)?.ranked.into_iter().map(|h| h.triplet).collect()
            }
        })
    }

    pub fn compose(&self, mode: PromptMode, src: &SourceUnit) -> Result<PromptBundle, PipelineError> {
        let diagnoses =
            || -> Result<_, PipelineError> { Ok(advise(src, self.rules, AdviseOptions::default())?.diagnoses) };
        let t = self.templates;
        Ok(match mode {
            PromptMode::Eco => {
                let ex = self.examples(mode, src)?;
                t.compose_combined(&diagnoses()?, &ex, src)?
            }
            PromptMode::Symbolic => t.compose_symbolic(&diagnoses()?, src),
            PromptMode::Retrieval => t.compose_retrieval(&self.examples(mode, src)?, src)?,
            PromptMode::Icl | PromptMode::Rag => t.compose_retrieval_baseline(&self.examples(mode, src)?, src)?,
            PromptMode::Cot => t.compose_baseline(PromptKind::Cot, src),
            PromptMode::Base => t.compose_baseline(PromptKind::InstructionOnly, src),
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Advisor(#[from] crate::error::AdvisorError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Compose(#[from] crate::error::ComposeError),
    #[error(transparent)]
    Gateway(#[from] crate::error::GatewayError),
    #[error(transparent)]
    Eval(#[from] crate::error::EvalError),
    #[error("this prompt mode needs an ROI database")]
    NoDatabase,
}

/// Body of the first fenced code block after the first "Optimized Code"
/// marker, or after the start of the text when the marker is absent.
pub fn extract_candidate(response: &str) -> Option<String> {
    let start = response.find("Optimized Code").unwrap_or(0);
    let rest = &response[start..];
    let open = rest.find("```")?;
    let after_open = &rest[open + 3..];
    let body_start = after_open.find('\n')? + 1;
    let body = &after_open[body_start..];
    let mut end = None;
    let mut offset = 0;
    for line in body.split_inclusive('\n') {
        if line.trim_start().starts_with("```") {
            end = Some(offset);
            break;
        }
        offset += line.len();
    }
    let code = &body[..end?];
    (!code.trim().is_empty()).then(|| code.to_string())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageFailure {
    pub problem_id: String,
    pub sample_id: String,
    pub stage: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct E2eReport {
    pub mode: PromptMode,
    pub k: usize,
    pub samples: Vec<SampleEval>,
    pub failures: Vec<StageFailure>,
    pub summary: Vec<(String, MetricsSummary)>,
}

impl E2eReport {
    pub fn to_table(&self) -> String {
        let mut out = summary_table(&self.summary);
        let _ = writeln!(out, "programs evaluated: {}, failed: {}", self.samples.len(), self.failures.len());
        for f in &self.failures {
            let _ = writeln!(out, "  {}/{} [{}]: {}", f.problem_id, f.sample_id, f.stage, f.error);
        }
        out
    }
}

/// Runs every original program of every problem through the pipeline.
/// Failures are isolated per program and listed in the report.
pub fn run_e2e(problems: &[Problem], mode: PromptMode, ctx: &PromptContext<'_>) -> E2eReport {
    let config = ctx.config;
    let jobs: Vec<(&Problem, &String, &SourceUnit)> =
        problems.iter().flat_map(|p| p.sources.iter().map(move |(id, src)| (p, id, src))).collect();
    let run = |(problem, sample_id, src): &(&Problem, &String, &SourceUnit)| -> Result<SampleEval, StageFailure> {
        let fail = |stage: &str, e: &dyn std::fmt::Display| StageFailure {
            problem_id: problem.problem_id.clone(),
            sample_id: sample_id.to_string(),
            stage: stage.into(),
            error: e.to_string(),
        };
        let prompt = ctx.compose(mode, src).map_err(|e| fail("prompt", &e))?;
        let gateway = ctx.gateway.ok_or_else(|| fail("generate", &"no gateway configured"))?;
        let request = config.request(&prompt.text);
        let mut candidates: Vec<Candidate> = Vec::with_capacity(config.eval.k);
        for i in 0..config.eval.k {
            let resp = gateway.complete(&request.clone().with_sample(i as u32)).map_err(|e| fail("generate", &e))?;
            candidates.push(match extract_candidate(&resp.text) {
                Some(code) => SourceUnit::new(code).map_err(|e| e.to_string()),
                None => Err("no code block in response".into()),
            });
        }
        if let Some(dir) = &config.paths.work_dir {
            write_candidates(dir, &problem.problem_id, sample_id, &candidates).map_err(|e| fail("write", &e))?;
        }
        evaluate_sample(problem, sample_id, src, &candidates, &config.eval).map_err(|e| fail("eval", &e))
    };
    let results: Vec<Result<SampleEval, StageFailure>> =
        match rayon::ThreadPoolBuilder::new().num_threads(config.workers).build() {
            Ok(pool) => pool.install(|| jobs.par_iter().map(run).collect()),
            Err(_) => jobs.iter().map(run).collect(),
        };
    let mut samples = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(s) => samples.push(s),
            Err(f) => failures.push(f),
        }
    }
    let summary =
        if samples.is_empty() { Vec::new() } else { best_at_summaries(&samples, config.eval.k).unwrap_or_default() };
    E2eReport { mode, k: config.eval.k, samples, failures, summary }
}

/// Evaluates the candidates under `<candidates>/<problem>/<sample>/` for every
/// original program; failures are isolated per program.
pub fn evaluate_problems(
    problems: &[Problem],
    candidates: &Path,
    config: &EvalConfig,
) -> (Vec<SampleEval>, Vec<StageFailure>) {
    let mut samples = Vec::new();
    let mut failures = Vec::new();
    for problem in problems {
        for (sample_id, src) in &problem.sources {
            let result = load_candidates(candidates, &problem.problem_id, sample_id, config.k)
                .and_then(|c| evaluate_sample(problem, sample_id, src, &c, config));
            match result {
                Ok(s) => samples.push(s),
                Err(e) => failures.push(StageFailure {
                    problem_id: problem.problem_id.clone(),
                    sample_id: sample_id.clone(),
                    stage: "eval".into(),
                    error: e.to_string(),
                }),
            }
        }
    }
    (samples, failures)
}

fn write_candidates(root: &Path, problem: &str, sample: &str, candidates: &[Candidate]) -> std::io::Result<()> {
    let dir = root.join("candidates").join(problem).join(sample);
    std::fs::create_dir_all(&dir)?;
    for (i, c) in candidates.iter().enumerate() {
        if let Ok(src) = c {
            std::fs::write(dir.join(format!("cand_{i:02}.cpp")), src.text())?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips_through_toml() {
        let c = PipelineConfig::default();
        let text = toml::to_string(&c).unwrap();
        assert_eq!(PipelineConfig::from_toml(&text).unwrap(), c);
        assert_eq!(c.gateway.temperature, 0.7);
        assert_eq!((c.gateway.max_input_tokens, c.gateway.max_output_tokens), (4096, 8192));
        assert_eq!((c.retrieval.top_k, c.eval.k, c.eval.run.reps), (2, 5, 5));
        assert_eq!(c.eval.compiler.flags, ["-std=c++17", "-O3"]);
    }

    #[test]
    fn config_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::create_dir(dir.path().join("fx")).unwrap();
        std::fs::write(&path, "[paths]\nfixtures = \"fx\"\n").unwrap();
        let c = PipelineConfig::load(&path).unwrap();
        assert_eq!(c.paths.fixtures.unwrap(), dir.path().join("fx"));

        std::fs::write(&path, "[paths]\nfixtures = \"fx\"\ndb = \"missing.jsonl\"\n").unwrap();
        assert!(matches!(PipelineConfig::load(&path), Err(ConfigError::MissingPath { key, .. }) if key == "paths.db"));
        std::fs::write(&path, "[paths]\nfixtures = \"fx\"\n[eval.run]\nreps = 4\n").unwrap();
        assert!(matches!(PipelineConfig::load(&path), Err(ConfigError::OutOfRange { .. })));
        std::fs::write(&path, "[retrieval]\ntop_k = 3\n").unwrap();
        assert!(matches!(PipelineConfig::load(&path), Err(ConfigError::OutOfRange { .. })));
        std::fs::write(&path, "unknown = 1\n").unwrap();
        assert!(matches!(PipelineConfig::load(&path), Err(ConfigError::Parse(_))));
        std::fs::write(&path, "").unwrap();
        let bare = PipelineConfig::load(&path).unwrap();
        assert!(matches!(bare.gateway(), Err(ConfigError::Unset { .. })));
    }

    #[test]
    fn extraction_rule() {
        let r = "Here is why.\n### Optimized Code:\n```cpp\nint main(){}\n```\nmore\n```\nx\n```";
        assert_eq!(extract_candidate(r).unwrap(), "int main(){}\n");
        let before = "```\nold\n```\nOptimized Code\n```c++\nnew\n```";
        assert_eq!(extract_candidate(before).unwrap(), "new\n");
        assert_eq!(extract_candidate("```\nonly\n```").unwrap(), "only\n");
        assert!(extract_candidate("no code here").is_none());
        assert!(extract_candidate("```cpp\nunterminated").is_none());
        assert!(extract_candidate("```\n\n```").is_none());
    }

    #[test]
    fn prompt_modes_without_database() {
        let config = PipelineConfig {
            retrieval: RetrievalConfig { analysis: AnalysisMode::Rules, ..Default::default() },
            ..Default::default()
        };
        let rules = RuleSet::builtin();
        let ctx = PromptContext {
            config: &config,
            rules: &rules,
            templates: PromptTemplates::builtin(),
            db: None,
            gateway: None,
        };
        let src = SourceUnit::new("int x;\ncin >> x;\n").unwrap();
        assert!(ctx.compose(PromptMode::Symbolic, &src).unwrap().text.contains("1. The following I/O"));
        assert_eq!(ctx.compose(PromptMode::Cot, &src).unwrap().kind, PromptKind::Cot);
        assert!(matches!(ctx.compose(PromptMode::Eco, &src), Err(PipelineError::NoDatabase)));
    }
}
