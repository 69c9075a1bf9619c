//! Compile-and-run judge: correctness against test cases, median wall-clock
//! timing, and the ACC / SP / OPT / best@k metrics.

use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::RwLock;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use wait_timeout::ChildExt;

use crate::error::EvalError;
use crate::source::SourceUnit;

/// OPT requires saving more than this fraction of the original runtime.
pub const OPT_MARGIN: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompilerConfig {
    pub command: String,
    pub flags: Vec<String>,
    pub timeout_secs: u64,
}

impl Default for CompilerConfig {
    fn default() -> Self {
        CompilerConfig { command: "g++".into(), flags: vec!["-std=c++17".into(), "-O3".into()], timeout_secs: 120 }
    }
}

/// A compiled program; the executable lives as long as this value.
#[derive(Debug)]
pub struct Binary {
    path: PathBuf,
    command: String,
    _dir: tempfile::TempDir,
}

impl Binary {
    pub fn path(&self) -> &Path {
        &self.path
    }

    /// The compiler invocation that produced this binary.
    pub fn command(&self) -> &str {
        &self.command
    }
}

pub fn compile(src: &SourceUnit, config: &CompilerConfig) -> Result<Binary, EvalError> {
    let dir = tempfile::tempdir()?;
    let source = dir.path().join("main.cpp");
    let path = dir.path().join("main");
    fs::write(&source, src.text())?;
    let _shared = TIMING.read().unwrap_or_else(|e| e.into_inner());
    let mut cmd = Command::new(&config.command);
    cmd.args(&config.flags).arg(&source).arg("-o").arg(&path);
    let command = format!("{} {} main.cpp -o main", config.command, config.flags.join(" "));
    let mut child = cmd.stdin(Stdio::null()).stdout(Stdio::null()).stderr(Stdio::piped()).spawn().map_err(|e| {
        EvalError::Compile { command: command.clone(), diagnostics: format!("cannot start compiler: {e}") }
    })?;
    let mut stderr = child.stderr.take().expect("piped stderr");
    let reader = std::thread::spawn(move || {
        let mut s = String::new();
        let _ = stderr.read_to_string(&mut s);
        s
    });
    let status = match child.wait_timeout(Duration::from_secs(config.timeout_secs))? {
        Some(status) => status,
        None => {
            let _ = child.kill();
            child.wait()?;
            return Err(EvalError::Compile { command, diagnostics: "compiler timed out".into() });
        }
    };
    let diagnostics = reader.join().unwrap_or_default();
    if !status.success() {
        return Err(EvalError::Compile { command, diagnostics });
    }
    Ok(Binary { path, command, _dir: dir })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseOrigin {
    Official,
    Generated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub case_id: String,
    pub input: String,
    pub expected_output: String,
    pub origin: CaseOrigin,
}

/// Strips trailing whitespace on every line and trailing blank lines.
pub fn normalize_output(text: &str) -> String {
    let lines: Vec<&str> = text.lines().map(str::trim_end).collect();
    let keep = lines.iter().rposition(|l| !l.is_empty()).map_or(0, |i| i + 1);
    lines[..keep].join("\n")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Exited(i32),
    Signaled,
    Timeout,
    OutputLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub case_id: String,
    pub passed: bool,
    /// Median wall-clock seconds over the repetitions.
    pub runtime: f64,
    pub status: RunStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunOptions {
    pub reps: usize,
    pub timeout_secs: f64,
    pub max_output_bytes: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { reps: 5, timeout_secs: 2.0, max_output_bytes: 64 << 20 }
    }
}

/// Timing runs hold this exclusively and compiles hold it shared, so a
/// measurement never overlaps another measurement or a compile.
static TIMING: RwLock<()> = RwLock::new(());

struct Outcome {
    status: RunStatus,
    stdout: Vec<u8>,
    elapsed: f64,
}

fn run_once(binary: &Path, input: &str, opts: &RunOptions) -> Result<Outcome, EvalError> {
    let timeout = Duration::from_secs_f64(opts.timeout_secs);
    let start = Instant::now();
    let mut child = Command::new(binary).stdin(Stdio::piped()).stdout(Stdio::piped()).stderr(Stdio::null()).spawn()?;
    let mut stdin = child.stdin.take().expect("piped stdin");
    let input = input.to_owned();
    let writer = std::thread::spawn(move || {
        // the program may exit without reading everything
        let _ = stdin.write_all(input.as_bytes());
    });
    let limit = opts.max_output_bytes as u64;
    let stdout = child.stdout.take().expect("piped stdout");
    let reader = std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stdout.take(limit + 1).read_to_end(&mut buf);
        buf
    });
    let status = child.wait_timeout(timeout)?;
    let elapsed = start.elapsed().as_secs_f64().max(f64::MIN_POSITIVE);
    let status = match status {
        Some(s) => match s.code() {
            Some(code) => RunStatus::Exited(code),
            None => RunStatus::Signaled,
        },
        None => {
            let _ = child.kill();
            child.wait()?;
            RunStatus::Timeout
        }
    };
    let _ = writer.join();
    let stdout = reader.join().unwrap_or_default();
    let status = if stdout.len() as u64 > limit { RunStatus::OutputLimit } else { status };
    Ok(Outcome { status, stdout, elapsed })
}

/// Runs `case` `reps` times (odd, at least 3); correctness must hold on every
/// repetition and the reported runtime is the median. Stops at the first
/// failing repetition.
pub fn run_case(binary: &Binary, case: &TestCase, opts: &RunOptions) -> Result<RunResult, EvalError> {
    if opts.reps < 3 || opts.reps.is_multiple_of(2) {
        return Err(EvalError::InvalidReps(opts.reps));
    }
    let expected = normalize_output(&case.expected_output);
    let _serial = TIMING.write().unwrap_or_else(|e| e.into_inner());
    let mut times = Vec::with_capacity(opts.reps);
    for _ in 0..opts.reps {
        let out = run_once(binary.path(), &case.input, opts)?;
        let ok =
            out.status == RunStatus::Exited(0) && normalize_output(&String::from_utf8_lossy(&out.stdout)) == expected;
        if !ok {
            let runtime = if out.status == RunStatus::Timeout { opts.timeout_secs } else { out.elapsed };
            return Ok(RunResult { case_id: case.case_id.clone(), passed: false, runtime, status: out.status });
        }
        times.push(out.elapsed);
    }
    Ok(RunResult {
        case_id: case.case_id.clone(),
        passed: true,
        runtime: median(&mut times),
        status: RunStatus::Exited(0),
    })
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs[xs.len() / 2]
}

/// True iff every case passed.
pub fn accuracy(results: &[RunResult]) -> Result<bool, EvalError> {
    if results.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(results.iter().all(|r| r.passed))
}

fn check_time(t: f64) -> Result<(), EvalError> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(EvalError::NonpositiveTime(t))
    }
}

/// `t_o / t_n` for a correct, faster candidate; 1.0 otherwise.
pub fn speedup(t_o: f64, t_n: f64, correct: bool) -> Result<f64, EvalError> {
    check_time(t_o)?;
    check_time(t_n)?;
    Ok(if correct && t_n < t_o { t_o / t_n } else { 1.0 })
}

/// Correct and at least 10% faster.
pub fn opt_flag(t_o: f64, t_n: f64, correct: bool) -> Result<bool, EvalError> {
    check_time(t_o)?;
    check_time(t_n)?;
    Ok(correct && t_o - t_n > OPT_MARGIN * t_o)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub candidate_id: usize,
    pub correct: bool,
    pub t_original: f64,
    pub t_new: f64,
    pub sp: f64,
    pub opt: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compile_command: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl EvalRecord {
    pub fn new(candidate_id: usize, correct: bool, t_original: f64, t_new: f64) -> Result<Self, EvalError> {
        Ok(EvalRecord {
            candidate_id,
            correct,
            t_original,
            t_new,
            sp: speedup(t_original, t_new, correct)?,
            opt: opt_flag(t_original, t_new, correct)?,
            compile_command: None,
            note: None,
        })
    }

    /// An incorrect candidate that could not be timed.
    pub fn failed(candidate_id: usize, t_original: f64, note: impl Into<String>) -> Result<Self, EvalError> {
        let mut r = EvalRecord::new(candidate_id, false, t_original, t_original)?;
        r.note = Some(note.into());
        Ok(r)
    }
}

/// Highest speedup; ties prefer correct candidates, then the lowest id.
pub fn best_at_k(records: &[EvalRecord]) -> Result<&EvalRecord, EvalError> {
    records
        .iter()
        .max_by(|a, b| a.sp.total_cmp(&b.sp).then(a.correct.cmp(&b.correct)).then(b.candidate_id.cmp(&a.candidate_id)))
        .ok_or(EvalError::Empty)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub acc_percent: f64,
    pub mean_sp: f64,
    pub opt_percent: f64,
}

pub fn summarize(records: &[EvalRecord]) -> Result<TrialSummary, EvalError> {
    if records.is_empty() {
        return Err(EvalError::Empty);
    }
    let n = records.len() as f64;
    Ok(TrialSummary {
        acc_percent: 100.0 * records.iter().filter(|r| r.correct).count() as f64 / n,
        mean_sp: records.iter().map(|r| r.sp).sum::<f64>() / n,
        opt_percent: 100.0 * records.iter().filter(|r| r.opt).count() as f64 / n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub acc_percent: f64,
    pub mean_sp: f64,
    pub opt_percent: f64,
    pub acc_std: f64,
    pub sp_std: f64,
    pub opt_std: f64,
    pub trials: usize,
}

/// Means of the per-trial summaries with sample standard deviations across
/// trials (zero for a single trial). Each trial holds one selected record per
/// program.
pub fn aggregate(trials: &[Vec<EvalRecord>]) -> Result<MetricsSummary, EvalError> {
    let per: Vec<TrialSummary> = trials.iter().map(|t| summarize(t)).collect::<Result<_, _>>()?;
    if per.is_empty() {
        return Err(EvalError::Empty);
    }
    let stats = |f: fn(&TrialSummary) -> f64| {
        let n = per.len() as f64;
        let mean = per.iter().map(f).sum::<f64>() / n;
        let var = if per.len() > 1 { per.iter().map(|s| (f(s) - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        (mean, var.sqrt())
    };
    let (acc_percent, acc_std) = stats(|s| s.acc_percent);
    let (mean_sp, sp_std) = stats(|s| s.mean_sp);
    let (opt_percent, opt_std) = stats(|s| s.opt_percent);
    Ok(MetricsSummary { acc_percent, mean_sp, opt_percent, acc_std, sp_std, opt_std, trials: per.len() })
}

/// Fixed-width table of labeled summaries.
pub fn summary_table(rows: &[(String, MetricsSummary)]) -> String {
    let mut out = format!("{:<10} {:>16} {:>16} {:>16}\n", "", "ACC (%)", "SP", "OPT (%)");
    for (label, s) in rows {
        let _ = writeln!(
            out,
            "{:<10} {:>16} {:>16} {:>16}",
            label,
            format!("{:.2} ± {:.2}", s.acc_percent, s.acc_std),
            format!("{:.2} ± {:.2}", s.mean_sp, s.sp_std),
            format!("{:.2} ± {:.2}", s.opt_percent, s.opt_std),
        );
    }
    out
}

/// One benchmark problem: `input.N.txt`/`output.N.txt` official cases,
/// `gen_input.N.txt`/`gen_output.N.txt` generated cases, and original
/// programs under `src/`.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub problem_id: String,
    pub cases: Vec<TestCase>,
    /// `(sample_id, program)` in file-name order; the sample id is the file stem.
    pub sources: Vec<(String, SourceUnit)>,
}

fn layout_err(path: &Path, e: impl std::fmt::Display) -> EvalError {
    EvalError::Layout(format!("{}: {e}", path.display()))
}

fn read(path: &Path) -> Result<String, EvalError> {
    fs::read_to_string(path).map_err(|e| layout_err(path, e))
}

fn sorted_dir(dir: &Path) -> Result<Vec<PathBuf>, EvalError> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| layout_err(dir, e))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(|e| layout_err(dir, e))?;
    out.sort();
    Ok(out)
}

fn case_number(name: &str, prefix: &str) -> Option<u64> {
    name.strip_prefix(prefix)?.strip_suffix(".txt")?.parse().ok()
}

pub fn load_problem(dir: &Path) -> Result<Problem, EvalError> {
    let problem_id = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .ok_or_else(|| layout_err(dir, "not a problem directory"))?;
    let mut numbered = Vec::new();
    for path in sorted_dir(dir)? {
        let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
        for (prefix, out_prefix, origin) in
            [("input.", "output.", CaseOrigin::Official), ("gen_input.", "gen_output.", CaseOrigin::Generated)]
        {
            if let Some(n) = case_number(&name, prefix) {
                let expected = dir.join(format!("{out_prefix}{n}.txt"));
                if !expected.exists() {
                    return Err(layout_err(&expected, "missing expected output"));
                }
                let case_id = if origin == CaseOrigin::Official { n.to_string() } else { format!("gen{n}") };
                numbered.push((
                    origin,
                    n,
                    TestCase { case_id, input: read(&path)?, expected_output: read(&expected)?, origin },
                ));
            }
        }
    }
    numbered.sort_by_key(|(origin, n, _)| (*origin, *n));
    let cases: Vec<TestCase> = numbered.into_iter().map(|(_, _, c)| c).collect();
    let src_dir = dir.join("src");
    let mut sources = Vec::new();
    if src_dir.is_dir() {
        for path in sorted_dir(&src_dir)? {
            if path.extension().is_some_and(|e| e == "cpp") {
                let stem = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                let unit = SourceUnit::from_file(&path).map_err(|e| layout_err(&path, e))?;
                sources.push((stem, unit));
            }
        }
    }
    Ok(Problem { problem_id, cases, sources })
}

/// Every subdirectory of `root` that holds at least one case, by name.
pub fn load_problems(root: &Path) -> Result<Vec<Problem>, EvalError> {
    let mut out = Vec::new();
    for dir in sorted_dir(root)? {
        if dir.is_dir() {
            let p = load_problem(&dir)?;
            if !p.cases.is_empty() {
                out.push(p);
            }
        }
    }
    if out.is_empty() {
        return Err(layout_err(root, "no problem directories with test cases"));
    }
    Ok(out)
}

/// Writes `problem` in the layout [`load_problem`] reads. Official cases are
/// renumbered from 0 and generated cases likewise.
pub fn write_problem(root: &Path, problem: &Problem) -> Result<PathBuf, EvalError> {
    let dir = root.join(&problem.problem_id);
    fs::create_dir_all(dir.join("src"))?;
    let (mut official, mut generated) = (0, 0);
    for c in &problem.cases {
        let (prefix, n) = match c.origin {
            CaseOrigin::Official => ("", &mut official),
            CaseOrigin::Generated => ("gen_", &mut generated),
        };
        fs::write(dir.join(format!("{prefix}input.{n}.txt")), &c.input)?;
        fs::write(dir.join(format!("{prefix}output.{n}.txt")), &c.expected_output)?;
        *n += 1;
    }
    for (sample_id, src) in &problem.sources {
        fs::write(dir.join("src").join(format!("{sample_id}.cpp")), src.text())?;
    }
    Ok(dir)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub compiler: CompilerConfig,
    pub run: RunOptions,
    /// Candidates considered per program.
    pub k: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { compiler: CompilerConfig::default(), run: RunOptions::default(), k: 5 }
    }
}

/// A candidate program, or the reason none could be produced.
pub type Candidate = Result<SourceUnit, String>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEval {
    pub problem_id: String,
    pub sample_id: String,
    /// Summed median runtime of the original over the cases it passes.
    pub t_original: f64,
    pub records: Vec<EvalRecord>,
}

impl SampleEval {
    /// Best of the first `k` candidates.
    pub fn best_of(&self, k: usize) -> Result<&EvalRecord, EvalError> {
        best_at_k(&self.records[..k.min(self.records.len())])
    }
}

/// Times the original, then judges each candidate on the cases. Candidates
/// compile in parallel; all timing is serialized.
pub fn evaluate_sample(
    problem: &Problem,
    sample_id: &str,
    original: &SourceUnit,
    candidates: &[Candidate],
    config: &EvalConfig,
) -> Result<SampleEval, EvalError> {
    if problem.cases.is_empty() {
        return Err(EvalError::Layout(format!("{}: no test cases", problem.problem_id)));
    }
    if candidates.is_empty() {
        return Err(EvalError::Empty);
    }
    let label = format!("{}/{sample_id}", problem.problem_id);
    let original_bin = compile(original, &config.compiler)?;
    let baseline: Vec<RunResult> =
        problem.cases.iter().map(|c| run_case(&original_bin, c, &config.run)).collect::<Result<_, _>>()?;
    let timed: Vec<usize> = (0..baseline.len()).filter(|&i| baseline[i].passed).collect();
    if timed.is_empty() {
        return Err(EvalError::OriginalFails(label));
    }
    if timed.len() < baseline.len() {
        log::warn!(
            "{label}: original fails {} of {} cases; they are not timed",
            baseline.len() - timed.len(),
            baseline.len()
        );
    }
    let t_original: f64 = timed.iter().map(|&i| baseline[i].runtime).sum();

    let binaries: Vec<Result<Binary, String>> = candidates
        .par_iter()
        .map(|c| match c {
            Ok(src) => compile(src, &config.compiler).map_err(|e| e.to_string()),
            Err(why) => Err(why.clone()),
        })
        .collect();
    let mut records = Vec::with_capacity(candidates.len());
    for (id, bin) in binaries.into_iter().enumerate() {
        let bin = match bin {
            Ok(b) => b,
            Err(why) => {
                records.push(EvalRecord::failed(id, t_original, why)?);
                continue;
            }
        };
        let mut t_new = 0.0;
        let mut failure = None;
        for (i, case) in problem.cases.iter().enumerate() {
            let r = run_case(&bin, case, &config.run)?;
            if !r.passed {
                failure = Some(format!("case {} failed ({:?})", r.case_id, r.status));
                break;
            }
            if baseline[i].passed {
                t_new += r.runtime;
            }
        }
        let mut record = match failure {
            Some(why) => EvalRecord::failed(id, t_original, why)?,
            None => EvalRecord::new(id, true, t_original, t_new)?,
        };
        record.compile_command = Some(bin.command().to_string());
        records.push(record);
    }
    Ok(SampleEval { problem_id: problem.problem_id.clone(), sample_id: sample_id.to_string(), t_original, records })
}

/// Candidates at `<root>/<problem>/<sample>/*.cpp` in file-name order, at most `k`.
pub fn load_candidates(root: &Path, problem_id: &str, sample_id: &str, k: usize) -> Result<Vec<Candidate>, EvalError> {
    let dir = root.join(problem_id).join(sample_id);
    if !dir.is_dir() {
        return Err(layout_err(&dir, "no candidate directory"));
    }
    let mut out = Vec::new();
    for path in sorted_dir(&dir)? {
        if out.len() == k {
            break;
        }
        if path.extension().is_some_and(|e| e == "cpp") {
            out.push(SourceUnit::from_file(&path).map_err(|e| e.to_string()));
        }
    }
    if out.is_empty() {
        return Err(layout_err(&dir, "no candidate programs"));
    }
    Ok(out)
}

/// Summaries for best@1 and best@k over one trial of sample evaluations.
pub fn best_at_summaries(evals: &[SampleEval], k: usize) -> Result<Vec<(String, MetricsSummary)>, EvalError> {
    let mut rows = Vec::new();
    let mut ks = vec![1];
    if k > 1 {
        ks.push(k);
    }
    for kk in ks {
        let best: Vec<EvalRecord> = evals.iter().map(|e| e.best_of(kk).cloned()).collect::<Result<_, _>>()?;
        rows.push((format!("Best@{kk}"), aggregate(&[best])?));
    }
    Ok(rows)
}
