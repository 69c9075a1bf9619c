use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use perfhint_core::advisor::{advise, bottleneck_histogram, AdviseOptions};
use perfhint_core::curator::curate_problems;
use perfhint_core::evaluator::{best_at_summaries, load_problems, summary_table, write_problem};
use perfhint_core::gateway::TextGenerator;
use perfhint_core::pipeline::{
    evaluate_problems, load_indexed_db, run_e2e, AnalysisMode, GatewayMode, PipelineConfig, PromptContext, PromptMode,
    StageFailure,
};
use perfhint_core::retriever::retrieve;
use perfhint_core::roi_store::{build_db_file, load_pairs, save_db, BuildOptions};
use perfhint_core::{ConfigError, SourceUnit};

#[derive(Parser)]
#[command(name = "perfhint", version, about = "Performance-aware prompting toolkit for C++ programs")]
struct Cli {
    /// Pipeline config (TOML); command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Diagnose bottlenecks in C++ programs.
    Advise {
        #[arg(long, required = true, num_args = 1..)]
        code: Vec<PathBuf>,
        /// Emit one JSON record per diagnosis.
        #[arg(long)]
        json: bool,
        /// Fail on unsupported syntax instead of skipping it.
        #[arg(long)]
        strict: bool,
    },
    /// Distill slow/fast pairs into an indexed ROI database.
    Distill {
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        mock: Option<PathBuf>,
        #[arg(long)]
        model: Option<String>,
        #[arg(long, default_value_t = 4)]
        threads: usize,
    },
    /// Retrieve the optimization instructions most relevant to a program.
    Retrieve {
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        code: PathBuf,
        #[arg(short, default_value_t = 2)]
        k: usize,
        #[arg(long)]
        mock: Option<PathBuf>,
        #[arg(long, value_enum)]
        analysis: Option<AnalysisArg>,
        #[arg(long)]
        json: bool,
    },
    /// Print the prompt for a program in the chosen style.
    Prompt {
        #[arg(long, value_enum, default_value = "eco")]
        mode: ModeArg,
        #[arg(long)]
        code: PathBuf,
        #[arg(long)]
        db: Option<PathBuf>,
        #[arg(long)]
        mock: Option<PathBuf>,
        #[arg(long, value_enum)]
        analysis: Option<AnalysisArg>,
    },
    /// Compile, run and score candidate programs.
    Eval {
        #[arg(long)]
        problems: Option<PathBuf>,
        #[arg(long)]
        candidates: PathBuf,
        #[arg(short)]
        k: Option<usize>,
        #[arg(long)]
        reps: Option<usize>,
        /// Per-run timeout in seconds.
        #[arg(long)]
        timeout: Option<f64>,
        /// Write per-program records as JSON lines to this file.
        #[arg(long)]
        records: Option<PathBuf>,
    },
    /// Cap programs per problem and de-duplicate test cases.
    Curate {
        #[arg(long)]
        problems: Option<PathBuf>,
        /// Write the curated problem directories here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        max_keep: Option<usize>,
        #[arg(long)]
        cap: Option<usize>,
    },
    /// Count detected bottlenecks per category over files or directories.
    Histogram {
        #[arg(required = true, num_args = 1..)]
        paths: Vec<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Run the whole pipeline over a problem corpus.
    E2e {
        #[arg(long, value_enum, default_value = "eco")]
        mode: ModeArg,
        #[arg(long)]
        problems: Option<PathBuf>,
        #[arg(long)]
        db: Option<PathBuf>,
        #[arg(long)]
        mock: Option<PathBuf>,
        #[arg(long)]
        work_dir: Option<PathBuf>,
        /// Print the full report as JSON instead of the table.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AnalysisArg {
    Gateway,
    Rules,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Eco,
    Symbolic,
    Retrieval,
    Icl,
    Rag,
    Cot,
    Base,
}

impl From<ModeArg> for PromptMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Eco => PromptMode::Eco,
            ModeArg::Symbolic => PromptMode::Symbolic,
            ModeArg::Retrieval => PromptMode::Retrieval,
            ModeArg::Icl => PromptMode::Icl,
            ModeArg::Rag => PromptMode::Rag,
            ModeArg::Cot => PromptMode::Cot,
            ModeArg::Base => PromptMode::Base,
        }
    }
}

/// Command failed after reporting its own per-item errors.
#[derive(Debug)]
struct PartialFailure(usize);

impl std::fmt::Display for PartialFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} item(s) failed", self.0)
    }
}

impl std::error::Error for PartialFailure {}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = json!({ "error": error_kind(&e), "message": message(&e) });
            eprintln!("{record}");
            ExitCode::FAILURE
        }
    }
}

/// The error chain joined by ": ", skipping causes already quoted by their parent.
fn message(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn error_kind(e: &anyhow::Error) -> &'static str {
    use perfhint_core::*;
    for cause in e.chain() {
        let kind = if cause.is::<ConfigError>() {
            "config"
        } else if cause.is::<GatewayError>() {
            "gateway"
        } else if cause.is::<StoreError>() {
            "store"
        } else if cause.is::<RetrievalError>() {
            "retrieval"
        } else if cause.is::<ComposeError>() {
            "compose"
        } else if cause.is::<EvalError>() {
            "eval"
        } else if cause.is::<AdvisorError>() || cause.is::<ParseError>() {
            "advisor"
        } else if cause.is::<SourceError>() {
            "source"
        } else if cause.is::<PartialFailure>() {
            "partial_failure"
        } else {
            continue;
        };
        return kind;
    }
    "other"
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig> {
    Ok(match path {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    })
}

fn apply_mock(config: &mut PipelineConfig, mock: Option<PathBuf>) {
    if let Some(dir) = mock {
        config.gateway.mode = GatewayMode::Mock;
        config.paths.fixtures = Some(dir);
    }
}

fn apply_analysis(config: &mut PipelineConfig, analysis: Option<AnalysisArg>) {
    match analysis {
        Some(AnalysisArg::Gateway) => config.retrieval.analysis = AnalysisMode::Gateway,
        Some(AnalysisArg::Rules) => config.retrieval.analysis = AnalysisMode::Rules,
        None => {}
    }
}

fn require<'a>(path: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    path.as_deref().ok_or_else(|| ConfigError::Unset { key: key.into() }.into())
}

fn report_failures(failures: &[StageFailure]) -> Result<()> {
    for f in failures {
        eprintln!("{}", serde_json::to_string(f)?);
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(PartialFailure(failures.len()).into())
    }
}

fn collect_sources(paths: &[PathBuf]) -> Result<Vec<SourceUnit>> {
    let mut files = Vec::new();
    for p in paths {
        for entry in walkdir::WalkDir::new(p).sort_by_file_name() {
            let entry = entry.with_context(|| format!("reading {}", p.display()))?;
            let path = entry.path();
            if entry.file_type().is_file() && (path == p || path.extension().is_some_and(|e| e == "cpp" || e == "cc")) {
                files.push(path.to_path_buf());
            }
        }
    }
    files.iter().map(|f| SourceUnit::from_file(f).map_err(Into::into)).collect()
}

fn run(cli: Cli) -> Result<()> {
    let mut config = load_config(cli.config.as_deref())?;
    let mut out = std::io::stdout().lock();
    match cli.command {
        Command::Advise { code, json, strict } => {
            let rules = config.rules()?;
            for path in &code {
                let src = SourceUnit::from_path_or_stdin(path)?;
                let advice = advise(&src, &rules, AdviseOptions { strict })?;
                for w in &advice.warnings {
                    log::warn!("{}: skipped lines {}: {}", src.label(), w.span, w.reason);
                }
                for d in &advice.diagnoses {
                    if json {
                        let mut record = serde_json::to_value(d)?;
                        record["file"] = json!(src.label());
                        writeln!(out, "{record}")?;
                    } else {
                        writeln!(out, "[{}] {}\n{}\n", d.rule_id, d.category.as_str(), d.text)?;
                    }
                }
            }
        }
        Command::Distill { pairs, out: db_path, mock, model, threads } => {
            apply_mock(&mut config, mock);
            let gateway = config.gateway()?;
            let mut opts = BuildOptions { threads, ..BuildOptions::default() };
            opts.distill.model = model.unwrap_or(opts.distill.model);
            opts.distill.max_input_tokens = config.gateway.max_input_tokens;
            let pairs = load_pairs(&pairs)?;
            let (mut db, report) = build_db_file(&db_path, &pairs, gateway.as_ref(), &opts)?;
            db.build_index(config.retrieval.dimension);
            save_db(&db, &db_path)?;
            writeln!(
                out,
                "added {}, skipped {}, failed {}, total {}",
                report.added,
                report.skipped,
                report.failures.len(),
                db.len()
            )?;
            let failures: Vec<StageFailure> = report
                .failures
                .iter()
                .map(|(id, e)| StageFailure {
                    problem_id: id.clone(),
                    sample_id: String::new(),
                    stage: "distill".into(),
                    error: e.to_string(),
                })
                .collect();
            report_failures(&failures)?;
        }
        Command::Retrieve { db, code, k, mock, analysis, json } => {
            apply_mock(&mut config, mock);
            apply_analysis(&mut config, analysis);
            let db = load_indexed_db(&db, config.retrieval.dimension)?;
            let src = SourceUnit::from_path_or_stdin(&code)?;
            let rules = config.rules()?;
            let gateway = gateway_for(&config)?;
            let templates = config.templates()?;
            let ctx = PromptContext {
                config: &config,
                rules: &rules,
                templates: &templates,
                db: Some(&db),
                gateway: gateway.as_deref(),
            };
            let analysis = ctx.analysis(&src)?;
            let result = retrieve(&analysis, &db, k)?;
            for (rank, hit) in result.ranked.iter().enumerate() {
                let t = hit.triplet;
                if json {
                    let record = json!({
                        "rank": rank + 1,
                        "index": hit.index,
                        "pair_id": t.pair.pair_id,
                        "problem_id": t.pair.problem_id,
                        "score": hit.score,
                        "instruction": t.instruction.text(),
                    });
                    writeln!(out, "{record}")?;
                } else {
                    writeln!(
                        out,
                        "{}. {} (score {:.4})\n{}\n",
                        rank + 1,
                        t.pair.pair_id,
                        hit.score,
                        t.instruction.text()
                    )?;
                }
            }
        }
        Command::Prompt { mode, code, db, mock, analysis } => {
            apply_mock(&mut config, mock);
            apply_analysis(&mut config, analysis);
            let mode = PromptMode::from(mode);
            let db_path = db.or_else(|| config.paths.db.clone());
            let db = match (&db_path, mode.needs_db()) {
                (Some(p), true) => Some(load_indexed_db(p, config.retrieval.dimension)?),
                _ => None,
            };
            let src = SourceUnit::from_path_or_stdin(&code)?;
            let rules = config.rules()?;
            let templates = config.templates()?;
            let gateway = if mode.needs_analysis() { gateway_for(&config)? } else { None };
            let ctx = PromptContext {
                config: &config,
                rules: &rules,
                templates: &templates,
                db: db.as_ref(),
                gateway: gateway.as_deref(),
            };
            write!(out, "{}", ctx.compose(mode, &src)?.text)?;
        }
        Command::Eval { problems, candidates, k, reps, timeout, records } => {
            if let Some(p) = problems {
                config.paths.problems = Some(p);
            }
            config.eval.k = k.unwrap_or(config.eval.k);
            config.eval.run.reps = reps.unwrap_or(config.eval.run.reps);
            config.eval.run.timeout_secs = timeout.unwrap_or(config.eval.run.timeout_secs);
            config.validate()?;
            let problems = load_problems(require(&config.paths.problems, "paths.problems")?)?;
            let (samples, failures) = evaluate_problems(&problems, &candidates, &config.eval);
            if let Some(path) = records {
                let mut file = std::io::BufWriter::new(
                    std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?,
                );
                for s in &samples {
                    writeln!(file, "{}", serde_json::to_string(s)?)?;
                }
                file.flush()?;
            }
            if !samples.is_empty() {
                write!(out, "{}", summary_table(&best_at_summaries(&samples, config.eval.k)?))?;
            }
            writeln!(out, "programs evaluated: {}, failed: {}", samples.len(), failures.len())?;
            report_failures(&failures)?;
        }
        Command::Curate { problems, out: out_dir, n, threshold, max_keep, cap } => {
            if let Some(p) = problems {
                config.paths.problems = Some(p);
            }
            let c = &mut config.curation;
            c.n = n.unwrap_or(c.n);
            c.threshold = threshold.unwrap_or(c.threshold);
            c.max_keep = max_keep.unwrap_or(c.max_keep);
            c.cap = cap.unwrap_or(c.cap);
            config.validate()?;
            let problems = load_problems(require(&config.paths.problems, "paths.problems")?)?;
            let (curated, report) = curate_problems(&problems, &config.curation);
            if let Some(dir) = out_dir {
                for p in &curated {
                    write_problem(&dir, p)?;
                }
            }
            write!(out, "{}", report.to_table())?;
        }
        Command::Histogram { paths, json } => {
            let rules = config.rules()?;
            let corpus = collect_sources(&paths)?;
            let hist = bottleneck_histogram(&corpus, &rules);
            for (unit, why) in &hist.skipped {
                log::warn!("{unit}: skipped: {why}");
            }
            if json {
                let counts: serde_json::Map<String, serde_json::Value> =
                    hist.counts.iter().map(|(c, n)| (c.as_str().to_string(), json!(n))).collect();
                writeln!(out, "{}", json!({ "counts": counts, "units": hist.units, "skipped": hist.skipped.len() }))?;
            } else {
                for (c, n) in &hist.counts {
                    writeln!(out, "{:<24} {n}", c.as_str())?;
                }
                writeln!(
                    out,
                    "{:<24} {}\n{} programs, {} skipped",
                    "total",
                    hist.total(),
                    hist.units,
                    hist.skipped.len()
                )?;
            }
        }
        Command::E2e { mode, problems, db, mock, work_dir, json } => {
            apply_mock(&mut config, mock);
            if let Some(p) = problems {
                config.paths.problems = Some(p);
            }
            if let Some(p) = db {
                config.paths.db = Some(p);
            }
            if let Some(p) = work_dir {
                config.paths.work_dir = Some(p);
            }
            config.validate()?;
            let mode = PromptMode::from(mode);
            let gateway = config.gateway()?;
            let rules = config.rules()?;
            let templates = config.templates()?;
            let problems = load_problems(require(&config.paths.problems, "paths.problems")?)?;
            let db = match (&config.paths.db, mode.needs_db()) {
                (Some(p), true) => Some(load_indexed_db(p, config.retrieval.dimension)?),
                (None, true) => bail!(ConfigError::Unset { key: "paths.db".into() }),
                _ => None,
            };
            let ctx = PromptContext {
                config: &config,
                rules: &rules,
                templates: &templates,
                db: db.as_ref(),
                gateway: Some(gateway.as_ref()),
            };
            let report = run_e2e(&problems, mode, &ctx);
            if json {
                writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
            } else {
                write!(out, "{}", report.to_table())?;
            }
            out.flush()?;
            report_failures(&report.failures)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// The configured gateway when analysis needs one; none for rule analysis.
fn gateway_for(config: &PipelineConfig) -> Result<Option<Box<dyn TextGenerator>>> {
    Ok(match config.retrieval.analysis {
        AnalysisMode::Gateway => Some(config.gateway()?),
        AnalysisMode::Rules => None,
    })
}
