//! Runtime-optimization instructions distilled from slow/fast code pairs,
//! persisted as one JSON record per line.

use std::collections::HashSet;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{GatewayError, StoreError};
use crate::gateway::{truncate_to_budget, GenerationRequest, TextGenerator, DEFAULT_MAX_INPUT_TOKENS};
use crate::retriever::{Embedder, EmbeddingVector};
use crate::source::SourceUnit;
use crate::template::fill;

pub const DISTILL_TEMPLATE: &str = include_str!("../assets/prompts/distill.txt");
pub const DEFAULT_REASONING_MARKER: &str = "</think>";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodePair {
    pub pair_id: String,
    pub problem_id: String,
    pub slow: SourceUnit,
    pub fast: SourceUnit,
}

impl CodePair {
    pub fn new(pair_id: &str, problem_id: &str, slow: &str, fast: &str) -> Result<Self, StoreError> {
        let unit = |text: &str, which: &str| {
            SourceUnit::new(text)
                .map_err(|_| StoreError::InvalidPair(pair_id.to_string(), format!("{which} code is empty")))
        };
        if pair_id.is_empty() {
            return Err(StoreError::InvalidPair(pair_id.to_string(), "pair_id is empty".into()));
        }
        Ok(CodePair {
            pair_id: pair_id.to_string(),
            problem_id: problem_id.to_string(),
            slow: unit(slow, "slow")?,
            fast: unit(fast, "fast")?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoiPoint {
    pub description: String,
    pub runtime_improvement: u8,
    pub category: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoiInstruction {
    /// Response text after the reasoning marker.
    pub raw_text: String,
    pub points: Vec<RoiPoint>,
}

impl RoiInstruction {
    /// Set when no rated optimization points could be parsed from the text.
    pub fn parse_warning(&self) -> bool {
        self.points.is_empty()
    }

    /// Text used for retrieval and prompts: the numbered point descriptions,
    /// or the raw text when nothing parsed.
    pub fn text(&self) -> String {
        if self.points.is_empty() {
            return self.raw_text.trim().to_string();
        }
        self.points
            .iter()
            .enumerate()
            .map(|(i, p)| format!("{}. {}", i + 1, p.description.trim()))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoiTriplet {
    pub pair: CodePair,
    pub instruction: RoiInstruction,
    pub embedding: Option<EmbeddingVector>,
}

#[derive(Debug, Clone)]
pub struct DistillOptions {
    pub model: String,
    pub marker: String,
    pub max_input_tokens: usize,
}

impl Default for DistillOptions {
    fn default() -> Self {
        DistillOptions {
            model: "deepseek-r1:32b".into(),
            marker: DEFAULT_REASONING_MARKER.into(),
            max_input_tokens: DEFAULT_MAX_INPUT_TOKENS,
        }
    }
}

pub fn distill_prompt(pair: &CodePair) -> String {
    fill(DISTILL_TEMPLATE, &[("slow_code", pair.slow.text()), ("fast_code", pair.fast.text())])
}

pub fn distill(
    pair: &CodePair,
    gateway: &dyn TextGenerator,
    opts: &DistillOptions,
) -> Result<RoiInstruction, GatewayError> {
    let prompt = distill_prompt(pair);
    let prompt = truncate_to_budget(&prompt, opts.max_input_tokens);
    let resp = gateway.complete(&GenerationRequest::new(&opts.model, prompt))?;
    let instruction = parse_instruction(&resp.text, &opts.marker);
    if instruction.parse_warning() {
        log::warn!("{}: no optimization points parsed", pair.pair_id);
    }
    Ok(instruction)
}

/// Keeps the text after the last `marker` (all of it when absent) and parses
/// the last well-formed array of optimization objects in it.
pub fn parse_instruction(response: &str, marker: &str) -> RoiInstruction {
    let kept = match response.rfind(marker) {
        Some(at) if !marker.is_empty() => &response[at + marker.len()..],
        _ => response,
    };
    let raw_text = kept.trim().to_string();
    let arrays = point_arrays(&raw_text);
    if arrays.len() > 1 {
        log::warn!("{} optimization arrays in one response; keeping the last", arrays.len());
    }
    let points = arrays.into_iter().last().unwrap_or_default();
    RoiInstruction { raw_text, points }
}

/// Every JSON array in `text` whose elements are all objects with a string
/// `description`, converted to points (out-of-range ratings dropped).
fn point_arrays(text: &str) -> Vec<Vec<RoiPoint>> {
    let mut out = Vec::new();
    let mut from = 0;
    while let Some(rel) = text[from..].find('[') {
        let at = from + rel;
        let mut stream = serde_json::Deserializer::from_str(&text[at..]).into_iter::<serde_json::Value>();
        if let Some(Ok(serde_json::Value::Array(items))) = stream.next() {
            if let Some(points) = to_points(&items) {
                out.push(points);
                from = at + stream.byte_offset();
                continue;
            }
        }
        from = at + 1;
    }
    out
}

fn to_points(items: &[serde_json::Value]) -> Option<Vec<RoiPoint>> {
    if items.is_empty() {
        return None;
    }
    let mut points = Vec::new();
    for item in items {
        let obj = item.as_object()?;
        let description = obj.get("description")?.as_str()?.to_string();
        let rating = match obj.get("runtime_improvement") {
            Some(serde_json::Value::Number(n)) => n.as_f64(),
            Some(serde_json::Value::String(s)) => s.trim().parse::<f64>().ok(),
            _ => None,
        };
        let category = obj.get("category").and_then(|c| c.as_str()).unwrap_or("Other").to_string();
        match rating {
            Some(r) if r.fract() == 0.0 && (1.0..=10.0).contains(&r) => {
                points.push(RoiPoint { description, runtime_improvement: r as u8, category })
            }
            _ => log::warn!("dropping optimization point without a 1-10 rating: {description}"),
        }
    }
    Some(points)
}

/// The triplet database plus the embedder that produced its vectors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RoiDatabase {
    pub triplets: Vec<RoiTriplet>,
    pub embedder: Option<Embedder>,
}

impl RoiDatabase {
    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    pub fn contains(&self, pair_id: &str) -> bool {
        self.triplets.iter().any(|t| t.pair.pair_id == pair_id)
    }

    /// Fits the embedder on the instruction texts and embeds every triplet.
    pub fn build_index(&mut self, dimension: usize) {
        let texts: Vec<String> = self.triplets.iter().map(|t| t.instruction.text()).collect();
        let embedder = Embedder::fit(dimension, texts.iter().map(String::as_str));
        let vectors: Vec<EmbeddingVector> = texts.par_iter().map(|t| embedder.embed(t)).collect();
        for (t, v) in self.triplets.iter_mut().zip(vectors) {
            t.embedding = Some(v);
        }
        self.embedder = Some(embedder);
    }

    pub fn is_indexed(&self) -> bool {
        self.embedder.is_some() && self.triplets.iter().all(|t| t.embedding.is_some())
    }
}

/// One line of the database file.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    pair_id: String,
    problem_id: String,
    slow: String,
    fast: String,
    roi_raw: String,
    points: Vec<RoiPoint>,
}

impl Record {
    fn from_triplet(t: &RoiTriplet) -> Record {
        Record {
            pair_id: t.pair.pair_id.clone(),
            problem_id: t.pair.problem_id.clone(),
            slow: t.pair.slow.text().to_string(),
            fast: t.pair.fast.text().to_string(),
            roi_raw: t.instruction.raw_text.clone(),
            points: t.instruction.points.clone(),
        }
    }

    fn into_triplet(self) -> Result<RoiTriplet, String> {
        if let Some(p) = self.points.iter().find(|p| !(1..=10).contains(&p.runtime_improvement)) {
            return Err(format!("runtime_improvement {} outside 1-10", p.runtime_improvement));
        }
        let pair = CodePair::new(&self.pair_id, &self.problem_id, &self.slow, &self.fast).map_err(|e| e.to_string())?;
        Ok(RoiTriplet {
            pair,
            instruction: RoiInstruction { raw_text: self.roi_raw, points: self.points },
            embedding: None,
        })
    }
}

fn record_line(t: &RoiTriplet) -> String {
    serde_json::to_string(&Record::from_triplet(t)).expect("records serialize")
}

/// Sidecar file holding the embedder and vectors: `<db>.index.json`.
pub fn index_path(db_path: &Path) -> PathBuf {
    let mut name = db_path.as_os_str().to_owned();
    name.push(".index.json");
    PathBuf::from(name)
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexFile {
    embedder: Embedder,
    entries: Vec<IndexEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexEntry {
    pair_id: String,
    vector: EmbeddingVector,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

/// Writes the database (and its index, when every triplet is embedded) atomically.
pub fn save_db(db: &RoiDatabase, path: &Path) -> Result<(), StoreError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        for t in &db.triplets {
            writeln!(w, "{}", record_line(t)).map_err(io_err(path))?;
        }
        w.flush().map_err(io_err(path))?;
    }
    tmp.persist(path).map_err(|e| StoreError::Io { path: path.to_path_buf(), source: e.error })?;

    let index = index_path(path);
    match (&db.embedder, db.is_indexed()) {
        (Some(embedder), true) => {
            let file = IndexFile {
                embedder: embedder.clone(),
                entries: db
                    .triplets
                    .iter()
                    .map(|t| IndexEntry {
                        pair_id: t.pair.pair_id.clone(),
                        vector: t.embedding.clone().expect("indexed"),
                    })
                    .collect(),
            };
            let text = serde_json::to_string(&file).expect("index serializes");
            fs::write(&index, text).map_err(io_err(&index))?;
        }
        _ => {
            if index.exists() {
                fs::remove_file(&index).map_err(io_err(&index))?;
            }
        }
    }
    Ok(())
}

/// Loads every well-formed record; malformed lines come back as
/// `CorruptRecord` errors alongside the database.
pub fn load_db(path: &Path) -> Result<(RoiDatabase, Vec<StoreError>), StoreError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut db = RoiDatabase::default();
    let mut errors = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<Record>(&line)
            .map_err(|e| e.to_string())
            .and_then(Record::into_triplet)
            .and_then(|t| {
                if seen.insert(t.pair.pair_id.clone()) {
                    Ok(t)
                } else {
                    Err(format!("duplicate pair_id `{}`", t.pair.pair_id))
                }
            });
        match parsed {
            Ok(t) => db.triplets.push(t),
            Err(message) => errors.push(StoreError::CorruptRecord { line: i + 1, message }),
        }
    }
    attach_index(&mut db, &index_path(path))?;
    Ok((db, errors))
}

fn attach_index(db: &mut RoiDatabase, index: &Path) -> Result<(), StoreError> {
    let text = match fs::read_to_string(index) {
        Ok(text) => text,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
        Err(e) => return Err(io_err(index)(e)),
    };
    let file: IndexFile = match serde_json::from_str(&text) {
        Ok(f) => f,
        Err(e) => {
            log::warn!("ignoring unreadable index {}: {e}", index.display());
            return Ok(());
        }
    };
    let aligned = file.entries.len() == db.triplets.len()
        && file.entries.iter().zip(&db.triplets).all(|(e, t)| e.pair_id == t.pair.pair_id)
        && file.entries.iter().all(|e| e.vector.dimension() == file.embedder.dimension());
    if !aligned {
        log::warn!("index {} does not match the database; rebuild it", index.display());
        return Ok(());
    }
    for (t, e) in db.triplets.iter_mut().zip(file.entries) {
        t.embedding = Some(e.vector);
    }
    db.embedder = Some(file.embedder);
    Ok(())
}

#[derive(Debug, Default)]
pub struct BuildReport {
    pub added: usize,
    pub skipped: usize,
    /// Pairs whose distillation failed, with the reason.
    pub failures: Vec<(String, StoreError)>,
}

#[derive(Debug, Clone)]
pub struct BuildOptions {
    pub distill: DistillOptions,
    pub threads: usize,
    /// Pairs distilled between appends to the database file.
    pub chunk: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions { distill: DistillOptions::default(), threads: 4, chunk: 64 }
    }
}

/// Distills every pair not yet in `db`, in input order.
pub fn build_db(
    db: &mut RoiDatabase,
    pairs: &[CodePair],
    gateway: &dyn TextGenerator,
    opts: &BuildOptions,
) -> Result<BuildReport, StoreError> {
    build_with(db, pairs, gateway, opts, |_| Ok(()))
}

/// Like [`build_db`] over the database at `path`, appending each finished
/// chunk to the file so an interrupted build resumes where it stopped.
pub fn build_db_file(
    path: &Path,
    pairs: &[CodePair],
    gateway: &dyn TextGenerator,
    opts: &BuildOptions,
) -> Result<(RoiDatabase, BuildReport), StoreError> {
    let mut db = if path.exists() {
        let (db, errors) = load_db(path)?;
        for e in errors {
            log::warn!("{}: {e}", path.display());
        }
        db
    } else {
        RoiDatabase::default()
    };
    let report = build_with(&mut db, pairs, gateway, opts, |added| {
        let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(io_err(path))?;
        for t in added {
            writeln!(f, "{}", record_line(t)).map_err(io_err(path))?;
        }
        Ok(())
    })?;
    Ok((db, report))
}

fn build_with(
    db: &mut RoiDatabase,
    pairs: &[CodePair],
    gateway: &dyn TextGenerator,
    opts: &BuildOptions,
    mut on_chunk: impl FnMut(&[RoiTriplet]) -> Result<(), StoreError>,
) -> Result<BuildReport, StoreError> {
    if pairs.is_empty() {
        return Err(StoreError::NoPairs);
    }
    let mut report = BuildReport::default();
    let mut seen: HashSet<String> = db.triplets.iter().map(|t| t.pair.pair_id.clone()).collect();
    let mut todo = Vec::new();
    for p in pairs {
        if seen.insert(p.pair_id.clone()) {
            todo.push(p);
        } else {
            report.skipped += 1;
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads.max(1))
        .build()
        .map_err(|e| StoreError::Io { path: PathBuf::new(), source: std::io::Error::other(e) })?;
    for chunk in todo.chunks(opts.chunk.max(1)) {
        let results: Vec<Result<RoiInstruction, GatewayError>> =
            pool.install(|| chunk.par_iter().map(|p| distill(p, gateway, &opts.distill)).collect());
        let start = db.triplets.len();
        for (pair, result) in chunk.iter().zip(results) {
            match result {
                Ok(instruction) => db.triplets.push(RoiTriplet { pair: (*pair).clone(), instruction, embedding: None }),
                Err(e) => {
                    log::warn!("{}: distillation failed: {e}", pair.pair_id);
                    report.failures.push((pair.pair_id.clone(), e.into()));
                }
            }
        }
        report.added += db.triplets.len() - start;
        on_chunk(&db.triplets[start..])?;
    }
    if report.added > 0 {
        db.embedder = None;
        for t in &mut db.triplets {
            t.embedding = None;
        }
    }
    Ok(report)
}

/// Reads `<dir>/<problem>/<name>.slow.cpp` with its `<name>.fast.cpp`
/// partner; the pair id is `<problem>/<name>`.
pub fn load_pairs(dir: &Path) -> Result<Vec<CodePair>, StoreError> {
    let mut pairs = Vec::new();
    for problem in sorted_entries(dir)? {
        if !problem.is_dir() {
            continue;
        }
        let problem_id = file_name(&problem);
        for slow in sorted_entries(&problem)? {
            let name = file_name(&slow);
            let Some(stem) = name.strip_suffix(".slow.cpp") else { continue };
            let fast = problem.join(format!("{stem}.fast.cpp"));
            let pair_id = format!("{problem_id}/{stem}");
            let read = |p: &Path| fs::read_to_string(p).map_err(io_err(p));
            if !fast.exists() {
                return Err(StoreError::InvalidPair(pair_id, format!("missing {}", fast.display())));
            }
            pairs.push(CodePair::new(&pair_id, &problem_id, &read(&slow)?, &read(&fast)?)?);
        }
    }
    if pairs.is_empty() {
        return Err(StoreError::NoPairs);
    }
    Ok(pairs)
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>, StoreError> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(io_err(dir))?;
    out.sort();
    Ok(out)
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::MockGateway;

    const ROI_RESPONSE: &str = r#"<think>
The slow code streams with cout; maybe [1, 2] matters.
</think>
The optimization points between the slow and fast code can be identified as follows:

1. **Replacing `cout` with `printf`:** lower overhead.

**JSON Output:**

{
"optimization_points": [
  {
    "description": "The slow code uses `cout` which is slower due to object overhead. The fast code switches to `printf`, improving I/O efficiency.",
    "runtime_improvement": 8,
    "category": "Algorithm"
  },
  {
    "description": "Precomputing the multiplication result (`mt = i * j`) before printing reduces redundant calculations in each loop iteration.",
    "runtime_improvement": 6,
    "category": "Algorithm"
  },
  {
    "description": "Using `i < 10` instead of `i <= 9` slightly improves loop condition efficiency, though the impact is minor.",
    "runtime_improvement": 3,
    "category": "Code Execution"
  }
]
}"#;

    fn pair(id: &str) -> CodePair {
        CodePair::new(id, "p1", &format!("// slow {id}\nint main(){{}}\n"), &format!("// fast {id}\nint main(){{}}\n"))
            .unwrap()
    }

    fn mock_for(pairs: &[CodePair], dir: &Path, response: &str) -> MockGateway {
        for p in pairs {
            MockGateway::record(dir, &distill_prompt(p), None, response).unwrap();
        }
        MockGateway::new(dir)
    }

    #[test]
    fn prompt_substitutes_codes() {
        let p = pair("a");
        let prompt = distill_prompt(&p);
        assert!(prompt.starts_with(
            "Identify each optimization in the Slow Code\nand explain how it speeds up the Fast Code. \n"
        ));
        assert!(prompt.ends_with("Slow Code:\n// slow a\nint main(){}\n\n\nFast Code:\n// fast a\nint main(){}\n"));
        assert!(prompt.contains("\"runtime_improvement\": \"Integer (1-10) rating of runtime gain.\","));
    }

    #[test]
    fn distill_parses_three_points_after_marker() {
        let dir = tempfile::tempdir().unwrap();
        let p = pair("a");
        let gw = mock_for(std::slice::from_ref(&p), dir.path(), ROI_RESPONSE);
        let roi = distill(&p, &gw, &DistillOptions::default()).unwrap();
        assert_eq!(roi.points.len(), 3);
        assert_eq!(roi.points[0].runtime_improvement, 8);
        assert_eq!(roi.points[0].category, "Algorithm");
        assert_eq!(roi.points[2].category, "Code Execution");
        assert!(!roi.raw_text.contains("<think>"));
        assert!(!roi.raw_text.contains("maybe [1, 2]"));
        assert!(roi.raw_text.starts_with("The optimization points"));
        assert!(!roi.parse_warning());
    }

    #[test]
    fn no_array_gives_warning() {
        let roi = parse_instruction("just prose, no json", DEFAULT_REASONING_MARKER);
        assert!(roi.points.is_empty() && roi.parse_warning());
        assert_eq!(roi.raw_text, "just prose, no json");
    }

    #[test]
    fn last_array_wins_and_ratings_are_bounded() {
        let text = r#"[{"description": "first", "runtime_improvement": 5, "category": "Other"}]
then [{"description": "second", "runtime_improvement": "7", "category": "Algorithm"},
      {"description": "bad", "runtime_improvement": 11},
      {"description": "frac", "runtime_improvement": 2.5}]"#;
        let roi = parse_instruction(text, DEFAULT_REASONING_MARKER);
        assert_eq!(
            roi.points,
            [RoiPoint { description: "second".into(), runtime_improvement: 7, category: "Algorithm".into() }]
        );
        let custom = parse_instruction("x END [{\"description\": \"d\", \"runtime_improvement\": 1}]", "END");
        assert_eq!(custom.points[0].category, "Other");
        assert!(!custom.raw_text.contains('x'));
    }

    #[test]
    fn build_is_idempotent_and_records_failures() {
        let dir = tempfile::tempdir().unwrap();
        let pairs: Vec<CodePair> = ["a", "b", "c"].iter().map(|id| pair(id)).collect();
        let gw = mock_for(&pairs, dir.path(), ROI_RESPONSE);
        let mut db = RoiDatabase::default();
        let r = build_db(&mut db, &pairs, &gw, &BuildOptions::default()).unwrap();
        assert_eq!((r.added, r.skipped, db.len()), (3, 0, 3));
        let ids: Vec<&str> = db.triplets.iter().map(|t| t.pair.pair_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        let r = build_db(&mut db, &pairs, &gw, &BuildOptions::default()).unwrap();
        assert_eq!((r.added, r.skipped, db.len()), (0, 3, 3));

        let mut more = pairs.clone();
        more.push(pair("d"));
        let r = build_db(&mut db, &more, &gw, &BuildOptions::default()).unwrap();
        assert_eq!(r.added, 0);
        assert_eq!(r.failures.len(), 1);
        assert!(matches!(r.failures[0].1, StoreError::Gateway(GatewayError::FixtureMiss { .. })));
        assert!(matches!(build_db(&mut db, &[], &gw, &BuildOptions::default()), Err(StoreError::NoPairs)));
    }

    #[test]
    fn file_build_appends_and_resumes() {
        let dir = tempfile::tempdir().unwrap();
        let fixtures = dir.path().join("fx");
        let pairs: Vec<CodePair> = ["a", "b", "c"].iter().map(|id| pair(id)).collect();
        let gw = mock_for(&pairs, &fixtures, ROI_RESPONSE);
        let path = dir.path().join("roi.jsonl");
        let opts = BuildOptions { chunk: 2, ..BuildOptions::default() };
        let (db, _) = build_db_file(&path, &pairs[..2], &gw, &opts).unwrap();
        assert_eq!(db.len(), 2);
        let (db, r) = build_db_file(&path, &pairs, &gw, &opts).unwrap();
        assert_eq!((db.len(), r.added, r.skipped), (3, 1, 2));
        let (loaded, errors) = load_db(&path).unwrap();
        assert!(errors.is_empty());
        assert_eq!(loaded, db);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("db.jsonl");
        save_db(&RoiDatabase::default(), &path).unwrap();
        let (empty, errors) = load_db(&path).unwrap();
        assert!(empty.is_empty() && errors.is_empty());

        let mut db = RoiDatabase::default();
        for id in ["a", "b", "c"] {
            let instruction = parse_instruction(ROI_RESPONSE, DEFAULT_REASONING_MARKER);
            db.triplets.push(RoiTriplet { pair: pair(id), instruction, embedding: None });
        }
        db.triplets[1].pair = CodePair::new("b", "p\"2", "line1\n\ttab \\ \"q\"\n", "ünïcode\n").unwrap();
        save_db(&db, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        let (loaded, errors) = load_db(&path).unwrap();
        assert!(errors.is_empty());
        assert_eq!(loaded, db);
        save_db(&loaded, &path).unwrap();
        assert_eq!(fs::read(&path).unwrap(), bytes);

        db.build_index(64);
        save_db(&db, &path).unwrap();
        assert!(index_path(&path).exists());
        let (indexed, _) = load_db(&path).unwrap();
        assert_eq!(indexed, db);
        assert!(indexed.is_indexed());
    }

    #[test]
    fn record_fields_are_in_documented_order() {
        let t =
            RoiTriplet { pair: pair("a"), instruction: parse_instruction(ROI_RESPONSE, "</think>"), embedding: None };
        let line = record_line(&t);
        let keys = ["\"pair_id\"", "\"problem_id\"", "\"slow\"", "\"fast\"", "\"roi_raw\"", "\"points\""];
        let at: Vec<usize> = keys.iter().map(|k| line.find(k).unwrap()).collect();
        assert!(at.windows(2).all(|w| w[0] < w[1]));
        assert!(!line.contains('\n'));
    }

    #[test]
    fn corrupt_line_is_reported_and_others_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("db.jsonl");
        let mut db = RoiDatabase::default();
        for id in ["a", "b"] {
            db.triplets.push(RoiTriplet {
                pair: pair(id),
                instruction: parse_instruction("x", "</think>"),
                embedding: None,
            });
        }
        let text =
            format!("{}\n{{\"pair_id\": \"broken\"\n{}\n", record_line(&db.triplets[0]), record_line(&db.triplets[1]));
        fs::write(&path, text).unwrap();
        let (loaded, errors) = load_db(&path).unwrap();
        assert_eq!(loaded.len(), 2);
        assert_eq!(errors.len(), 1);
        assert!(matches!(errors[0], StoreError::CorruptRecord { line: 2, .. }));
    }

    #[test]
    fn pairs_directory_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p100");
        fs::create_dir_all(&p).unwrap();
        fs::write(p.join("s1.slow.cpp"), "int main(){return 1;}\n").unwrap();
        fs::write(p.join("s1.fast.cpp"), "int main(){return 0;}\n").unwrap();
        let pairs = load_pairs(dir.path()).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!((pairs[0].pair_id.as_str(), pairs[0].problem_id.as_str()), ("p100/s1", "p100"));
        fs::write(p.join("s2.slow.cpp"), "int main(){}\n").unwrap();
        assert!(matches!(load_pairs(dir.path()), Err(StoreError::InvalidPair(..))));
    }

    #[test]
    fn instruction_text_prefers_points() {
        let roi = parse_instruction(ROI_RESPONSE, "</think>");
        let text = roi.text();
        assert!(text.starts_with("1. The slow code uses `cout`"));
        assert_eq!(text.lines().count(), 3);
        assert_eq!(parse_instruction("  plain  ", "</think>").text(), "plain");
    }
}
