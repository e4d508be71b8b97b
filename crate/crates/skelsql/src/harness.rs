//! Index building and evaluation runs.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use skelsql_core::exec::{exec_match, generate_with_fallback, FallbackContext};
use skelsql_core::index::{IndexEntry, IndexError};
use skelsql_core::prompt::{build_prompt, filter_schema, DEFAULT_TOKEN_CAP};
use skelsql_core::relevance::{desemanticize, Desemanticized};
use skelsql_core::sql::has_top_level_order_by;
use skelsql_core::{
    Completer, CompletionParams, DatabaseSchema, DemonstrationExample, EncoderBackend, EncoderError, Example,
    GenerationOutcome, LlmError, ReferenceBackend, RelevanceParams, SkeletonIndex, SqlRunner, ValueStore,
};

use crate::llm::{HttpCompleter, HttpLimits, MockCompleter, Recorder, Replay};
use crate::sidecar::SidecarBackend;
use crate::spider::{self, IngestError};
use crate::sqlite::SqliteRunner;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Reference,
    Sidecar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum LlmKind {
    Mock,
    Replay,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub tables: PathBuf,
    pub train: PathBuf,
    pub dev: Option<PathBuf>,
    pub db_dir: PathBuf,
    pub index: PathBuf,
    pub cassette: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub dump_relevance: Option<PathBuf>,
    /// JSON file of scripted mock responses: an array (one global queue) or
    /// an object mapping question text to a response list.
    pub mock_script: Option<PathBuf>,
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    pub tau: f64,
    pub theta: f64,
    pub max_fallbacks: usize,
    pub backend: BackendKind,
    pub sidecar_url: Option<String>,
    pub llm: LlmKind,
    pub llm_url: Option<String>,
    pub model: String,
    pub exclude_same_db: bool,
    pub seed: u64,
    pub dim: usize,
    pub workers: usize,
    pub query_timeout_secs: f64,
    pub value_cap: usize,
    pub token_cap: usize,
}

impl RunConfig {
    pub fn new(tables: impl Into<PathBuf>, train: impl Into<PathBuf>, db_dir: impl Into<PathBuf>, index: impl Into<PathBuf>) -> Self {
        RunConfig {
            tables: tables.into(),
            train: train.into(),
            dev: None,
            db_dir: db_dir.into(),
            index: index.into(),
            cassette: None,
            out: None,
            dump_relevance: None,
            mock_script: None,
            k: 8,
            alpha: 0.9,
            beta: 0.5,
            tau: 0.6,
            theta: 0.4,
            max_fallbacks: 3,
            backend: BackendKind::Reference,
            sidecar_url: None,
            llm: LlmKind::Mock,
            llm_url: None,
            model: CompletionParams::default().model,
            exclude_same_db: false,
            seed: 0,
            dim: 64,
            workers: 4,
            query_timeout_secs: 30.0,
            value_cap: 1000,
            token_cap: DEFAULT_TOKEN_CAP,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(HarnessError::Config(format!("{name} must lie in [0, 1], got {v}")))
            }
        };
        if self.k == 0 {
            return Err(HarnessError::Config("k must be at least 1".into()));
        }
        unit("alpha", self.alpha)?;
        unit("tau", self.tau)?;
        unit("theta", self.theta)?;
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(HarnessError::Config(format!("beta must be a finite non-negative number, got {}", self.beta)));
        }
        if self.workers == 0 || self.dim == 0 || self.value_cap == 0 {
            return Err(HarnessError::Config("workers, dim and value-cap must be positive".into()));
        }
        if !(self.query_timeout_secs > 0.0 && self.query_timeout_secs.is_finite()) {
            return Err(HarnessError::Config("query timeout must be positive".into()));
        }
        if self.backend == BackendKind::Sidecar && self.sidecar_url.is_none() {
            return Err(HarnessError::Config("--backend sidecar requires --sidecar-url".into()));
        }
        match self.llm {
            LlmKind::Replay if self.cassette.is_none() => {
                Err(HarnessError::Config("--llm replay requires --cassette".into()))
            }
            LlmKind::Http if self.llm_url.is_none() => Err(HarnessError::Config("--llm http requires --llm-url".into())),
            _ => Ok(()),
        }
    }

    pub fn relevance_params(&self) -> RelevanceParams {
        RelevanceParams { alpha: self.alpha, beta: self.beta, tau: self.tau }
    }

    pub fn completion_params(&self) -> CompletionParams {
        CompletionParams { model: self.model.clone(), ..CompletionParams::default() }
    }

    pub fn query_timeout(&self) -> Duration {
        Duration::from_secs_f64(self.query_timeout_secs)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error("encoder: {0}")]
    Encoder(#[from] EncoderError),
    #[error("example {index}: {reason}")]
    Example { index: usize, reason: String },
    #[error("completion backend: {0}")]
    Llm(#[from] LlmError),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl HarnessError {
    /// 2 for configuration errors, 3 for everything that aborts a run.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            _ => 3,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

pub struct Dataset {
    pub schemas: BTreeMap<String, DatabaseSchema>,
    pub values: ValueStore,
}

/// Loads schemas and scans values for the databases `examples` refer to.
pub fn load_dataset(cfg: &RunConfig, example_files: &[&Path]) -> Result<(Dataset, Vec<Vec<Example>>), HarnessError> {
    let schemas = spider::load_schemas(&cfg.tables, &cfg.db_dir)?;
    let splits = example_files.iter().map(|f| spider::load_examples(f, &schemas)).collect::<Result<Vec<_>, _>>()?;
    let used: BTreeSet<&str> = splits.iter().flatten().map(|e| e.db_id.as_str()).collect();
    let needed: Vec<DatabaseSchema> = schemas.iter().filter(|s| used.contains(s.db_id.as_str())).cloned().collect();
    let values = spider::load_values(&needed, cfg.value_cap)?;
    let schemas = schemas.into_iter().map(|s| (s.db_id.clone(), s)).collect();
    Ok((Dataset { schemas, values }, splits))
}

fn pool(workers: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(workers).build().expect("thread pool")
}

/// De-semanticizes and embeds every training example, writes the index to
/// `cfg.index`, and returns it. Entry ids are positions in the training file.
pub fn build_index(cfg: &RunConfig, backend: &dyn EncoderBackend) -> Result<SkeletonIndex, HarnessError> {
    cfg.validate()?;
    let (data, mut splits) = load_dataset(cfg, &[&cfg.train])?;
    let train = splits.remove(0);
    let params = cfg.relevance_params();
    let done = AtomicUsize::new(0);
    let total = train.len();
    let entries: Vec<IndexEntry> = pool(cfg.workers).install(|| {
        train
            .par_iter()
            .enumerate()
            .map(|(i, ex)| {
                let schema = &data.schemas[&ex.db_id];
                let d = desemanticize(ex, schema, &data.values, backend, &params)
                    .map_err(|e| HarnessError::Example { index: i, reason: e.to_string() })?;
                let text = d.skeleton.text();
                let v = backend.sentence_embed(&text)?;
                let n = done.fetch_add(1, Ordering::Relaxed) + 1;
                if n % 500 == 0 || n == total {
                    log::info!("embedded {n}/{total} training skeletons");
                }
                Ok(IndexEntry::from_f64(i as u64, &v, text))
            })
            .collect::<Result<Vec<_>, HarnessError>>()
    })?;
    let mut index = SkeletonIndex::new();
    for e in entries {
        index.add(e)?;
    }
    if let Some(parent) = cfg.index.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    index.save(&cfg.index)?;
    log::info!("wrote {} entries to {}", index.len(), cfg.index.display());
    Ok(index)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Retrieved {
    pub example_id: u64,
    pub similarity: f64,
    pub db_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub index: usize,
    pub db_id: String,
    pub question: String,
    pub gold_sql: String,
    pub skeleton: Option<String>,
    pub retrieved: Vec<Retrieved>,
    pub kept_schema: Vec<usize>,
    pub outcome: GenerationOutcome,
    pub gold_error: Option<String>,
    pub va: bool,
    pub ex: bool,
    /// Pipeline failure before generation, if any.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub questions: usize,
    pub va_count: usize,
    pub ex_count: usize,
    pub va_rate: f64,
    pub ex_rate: f64,
    pub fallback_count: usize,
    pub wall_time_ms: u64,
    pub config: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub records: Vec<QuestionRecord>,
    pub summary: Summary,
}

pub fn rate(count: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        count as f64 / total as f64
    }
}

struct EvalContext<'a> {
    cfg: &'a RunConfig,
    data: &'a Dataset,
    train: &'a [Example],
    index: &'a SkeletonIndex,
    backend: &'a dyn EncoderBackend,
    llm: &'a dyn Completer,
    params: CompletionParams,
}

/// Runs the full pipeline over the dev split with the given backends. Reports
/// are written when `cfg.out` is set.
pub fn evaluate_with(cfg: &RunConfig, backend: &dyn EncoderBackend, llm: &dyn Completer) -> Result<EvalReport, HarnessError> {
    cfg.validate()?;
    let dev_path = cfg.dev.as_deref().ok_or_else(|| HarnessError::Config("evaluate requires --dev".into()))?;
    let started = Instant::now();
    let (data, splits) = load_dataset(cfg, &[&cfg.train, dev_path])?;
    let (train, dev) = (&splits[0], &splits[1]);
    let index = SkeletonIndex::load(&cfg.index)?;
    if index.len() != train.len() {
        return Err(HarnessError::Config(format!(
            "index holds {} entries but the training split has {}; rebuild it",
            index.len(),
            train.len()
        )));
    }
    if index.dim().is_some_and(|d| d != backend.dim()) {
        return Err(HarnessError::Config(format!(
            "index dimension {:?} does not match backend dimension {}",
            index.dim(),
            backend.dim()
        )));
    }
    if let Some(dir) = &cfg.dump_relevance {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let ctx = EvalContext { cfg, data: &data, train, index: &index, backend, llm, params: cfg.completion_params() };
    let records: Vec<QuestionRecord> =
        pool(cfg.workers).install(|| dev.par_iter().enumerate().map(|(i, ex)| evaluate_one(&ctx, i, ex)).collect());

    let va_count = records.iter().filter(|r| r.va).count();
    let ex_count = records.iter().filter(|r| r.ex).count();
    let summary = Summary {
        questions: records.len(),
        va_count,
        ex_count,
        va_rate: rate(va_count, records.len()),
        ex_rate: rate(ex_count, records.len()),
        fallback_count: records.iter().filter(|r| r.outcome.fallback_used).count(),
        wall_time_ms: started.elapsed().as_millis() as u64,
        config: cfg.clone(),
    };
    let report = EvalReport { records, summary };
    if let Some(out) = &cfg.out {
        write_report(&report, out)?;
    }
    log::info!(
        "evaluated {} questions: VA {:.3}, EX {:.3}",
        report.summary.questions,
        report.summary.va_rate,
        report.summary.ex_rate
    );
    Ok(report)
}

fn empty_outcome() -> GenerationOutcome {
    GenerationOutcome { final_sql: None, attempts: vec![], fallback_used: false, attempts_count: 0 }
}

fn evaluate_one(ctx: &EvalContext<'_>, i: usize, ex: &Example) -> QuestionRecord {
    let mut rec = QuestionRecord {
        index: i,
        db_id: ex.db_id.clone(),
        question: ex.question_text.clone(),
        gold_sql: ex.gold_sql.clone(),
        skeleton: None,
        retrieved: vec![],
        kept_schema: vec![],
        outcome: empty_outcome(),
        gold_error: None,
        va: false,
        ex: false,
        error: None,
    };
    let cfg = ctx.cfg;
    let schema = &ctx.data.schemas[&ex.db_id];
    let values = &ctx.data.values;

    let des = match desemanticize(ex, schema, values, ctx.backend, &cfg.relevance_params()) {
        Ok(d) => d,
        Err(e) => {
            rec.error = Some(format!("de-semanticization failed: {e}"));
            return rec;
        }
    };
    if let Some(dir) = &cfg.dump_relevance {
        if let Err(e) = dump_relevance(dir, i, ex, &des) {
            log::warn!("question {i}: relevance dump failed: {e}");
        }
    }
    let skeleton = des.skeleton.text();
    rec.skeleton = Some(skeleton.clone());

    let demos = match retrieve(ctx, ex, &skeleton) {
        Ok(d) => d,
        Err(e) => {
            rec.error = Some(format!("retrieval failed: {e}"));
            return rec;
        }
    };
    rec.retrieved = demos
        .iter()
        .map(|d| Retrieved { example_id: d.example_id, similarity: d.similarity, db_id: d.db_id.clone() })
        .collect();

    let filtered = filter_schema(schema, &des.bundle.item_scores, cfg.theta).expect("one score per schema item");
    rec.kept_schema = filtered.kept.clone();
    let prompt = build_prompt(&demos, schema, &filtered, values, ex, cfg.token_cap);

    let runner = SqliteRunner::new(&schema.db_path, cfg.query_timeout());
    let fallback = FallbackContext { schema, values, question: ex };
    rec.outcome = generate_with_fallback(&prompt, &fallback, ctx.llm, &ctx.params, &runner, cfg.max_fallbacks);
    rec.va = rec.outcome.final_sql.is_some();

    let gold = match runner.execute(&ex.gold_sql) {
        Ok(g) if g.is_ok() => Some(g),
        Ok(g) => {
            rec.gold_error = g.error;
            None
        }
        Err(e) => {
            rec.gold_error = Some(e.to_string());
            None
        }
    };
    if let (Some(pred), Some(gold)) = (rec.outcome.final_result(), gold.as_ref()) {
        rec.ex = exec_match(pred, gold, has_top_level_order_by(&ex.gold_sql)).unwrap_or(false);
    }
    rec
}

fn retrieve(ctx: &EvalContext<'_>, ex: &Example, skeleton: &str) -> Result<Vec<DemonstrationExample>, HarnessError> {
    if ctx.index.is_empty() {
        return Ok(vec![]);
    }
    let query: Vec<f32> = ctx.backend.sentence_embed(skeleton)?.iter().map(|&x| x as f32).collect();
    let exclude = ctx.cfg.exclude_same_db;
    let neighbors = ctx.index.search_knn_filtered(&query, ctx.cfg.k, |e| {
        !exclude || ctx.train.get(e.example_id as usize).is_some_and(|t| t.db_id != ex.db_id)
    })?;
    let texts: BTreeMap<u64, &str> =
        ctx.index.entries().iter().map(|e| (e.example_id, e.skeleton_text.as_str())).collect();
    Ok(neighbors
        .iter()
        .filter_map(|n| {
            let t = ctx.train.get(n.example_id as usize)?;
            Some(DemonstrationExample {
                example_id: n.example_id,
                question: t.question_text.clone(),
                skeleton: texts.get(&n.example_id).copied().unwrap_or("").to_string(),
                sql: t.gold_sql.clone(),
                db_id: t.db_id.clone(),
                similarity: n.similarity,
            })
        })
        .collect())
}

fn dump_relevance(dir: &Path, i: usize, ex: &Example, des: &Desemanticized) -> std::io::Result<()> {
    let b = &des.bundle;
    let doc = serde_json::json!({
        "index": i,
        "question": ex.question_text,
        "tokens": ex.question_tokens,
        "d_p": b.d_p.to_rows(),
        "m_m": b.m_m.to_rows(),
        "r": b.r.to_rows(),
        "p": b.p,
        "q_sco": b.q_sco,
        "item_scores": b.item_scores,
        "skeleton": des.skeleton.text(),
    });
    fs::write(dir.join(format!("{i:05}.json")), serde_json::to_vec_pretty(&doc)?)
}

/// `report.jsonl` → `report.summary.json`
pub fn summary_path(out: &Path) -> PathBuf {
    out.with_extension("summary.json")
}

pub fn write_report(report: &EvalReport, out: &Path) -> Result<(), HarnessError> {
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let mut buf = Vec::new();
    for r in &report.records {
        serde_json::to_writer(&mut buf, r).expect("record serializes");
        buf.push(b'\n');
    }
    let mut f = fs::File::create(out).map_err(io_err(out))?;
    f.write_all(&buf).map_err(io_err(out))?;
    let sp = summary_path(out);
    let summary = serde_json::to_vec_pretty(&report.summary).expect("summary serializes");
    fs::write(&sp, summary).map_err(io_err(&sp))?;
    Ok(())
}

pub fn make_backend(cfg: &RunConfig) -> Result<Box<dyn EncoderBackend>, HarnessError> {
    Ok(match cfg.backend {
        BackendKind::Reference => Box::new(ReferenceBackend::new(cfg.dim, cfg.seed)),
        BackendKind::Sidecar => {
            let url = cfg.sidecar_url.as_deref().ok_or_else(|| HarnessError::Config("missing --sidecar-url".into()))?;
            Box::new(SidecarBackend::connect(url, 5, Duration::from_secs(1))?)
        }
    })
}

#[derive(Deserialize)]
#[serde(untagged)]
enum MockScript {
    Queue(Vec<String>),
    PerQuestion(BTreeMap<String, OneOrMany>),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

/// Builds the configured completer. Without a script, the mock answers each
/// dev question with its gold SQL.
pub fn make_llm(cfg: &RunConfig, dev: &[Example]) -> Result<Box<dyn Completer>, HarnessError> {
    match cfg.llm {
        LlmKind::Mock => match &cfg.mock_script {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
                let script: MockScript = serde_json::from_str(&text)
                    .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
                Ok(Box::new(match script {
                    MockScript::Queue(q) => MockCompleter::queue(q),
                    MockScript::PerQuestion(m) => MockCompleter::per_question(m.into_iter().map(|(q, r)| {
                        let r = match r {
                            OneOrMany::One(s) => vec![s],
                            OneOrMany::Many(v) => v,
                        };
                        (q, r)
                    })),
                }))
            }
            None => Ok(Box::new(MockCompleter::per_question(
                dev.iter().map(|e| (e.question_text.clone(), vec![e.gold_sql.clone()])),
            ))),
        },
        LlmKind::Replay => {
            let path = cfg.cassette.as_deref().ok_or_else(|| HarnessError::Config("missing --cassette".into()))?;
            Ok(Box::new(Replay::load(path).map_err(|e| HarnessError::Config(e.to_string()))?))
        }
        LlmKind::Http => {
            let url = cfg.llm_url.as_deref().ok_or_else(|| HarnessError::Config("missing --llm-url".into()))?;
            let client = HttpCompleter::from_env(url, HttpLimits::default())?;
            if !client.has_credential() {
                return Err(HarnessError::Config(format!("{} is not set", crate::llm::API_KEY_VAR)));
            }
            match &cfg.cassette {
                Some(path) => Ok(Box::new(Recorder::create(client, path)?)),
                None => Ok(Box::new(client)),
            }
        }
    }
}

/// `evaluate_with` using the backends selected in `cfg`.
pub fn evaluate(cfg: &RunConfig) -> Result<EvalReport, HarnessError> {
    cfg.validate()?;
    let dev_path = cfg.dev.as_deref().ok_or_else(|| HarnessError::Config("evaluate requires --dev".into()))?;
    let schemas = spider::load_schemas(&cfg.tables, &cfg.db_dir)?;
    let dev = spider::load_examples(dev_path, &schemas)?;
    let backend = make_backend(cfg)?;
    let llm = make_llm(cfg, &dev)?;
    evaluate_with(cfg, backend.as_ref(), llm.as_ref())
}
