//! Execution results, result comparison, and the fallback-revision loop.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::llm::{Completer, CompletionParams};
use crate::prompt::{build_fallback_prompt, Prompt};
use crate::schema::{DatabaseSchema, Example, ValueStore};
use crate::sql::extract_sql;

/// A result cell normalized for comparison. Reals are rounded to 1e-6 and
/// collapse to `Int` when integral; text is lowercased.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Null,
    Int(i64),
    Real(f64),
    Text(String),
    Blob(Vec<u8>),
}

impl Cell {
    pub fn real(x: f64) -> Cell {
        if !x.is_finite() {
            return Cell::Real(x);
        }
        let r = libm::round(x * 1e6) / 1e6;
        if r == libm::trunc(r) && r.abs() < 9.007_199_254_740_992e15 {
            Cell::Int(r as i64)
        } else {
            Cell::Real(r)
        }
    }

    pub fn text(s: &str) -> Cell {
        Cell::Text(s.to_lowercase())
    }

    fn rank(&self) -> u8 {
        match self {
            Cell::Null => 0,
            Cell::Int(_) => 1,
            Cell::Real(_) => 2,
            Cell::Text(_) => 3,
            Cell::Blob(_) => 4,
        }
    }
}

impl PartialEq for Cell {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Cell {}

impl PartialOrd for Cell {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cell {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Cell::Int(a), Cell::Int(b)) => a.cmp(b),
            (Cell::Real(a), Cell::Real(b)) => a.total_cmp(b),
            (Cell::Text(a), Cell::Text(b)) => a.cmp(b),
            (Cell::Blob(a), Cell::Blob(b)) => a.cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

impl Hash for Cell {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.rank().hash(state);
        match self {
            Cell::Null => {}
            Cell::Int(v) => v.hash(state),
            Cell::Real(v) => v.to_bits().hash(state),
            Cell::Text(v) => v.hash(state),
            Cell::Blob(v) => v.hash(state),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecStatus {
    Ok,
    SqlError,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub status: ExecStatus,
    /// Normalized rows; present iff `status == Ok`.
    pub rows: Option<Vec<Vec<Cell>>>,
    /// Rows as displayed by the database, for reports.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_rows: Option<Vec<Vec<String>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ExecutionResult {
    pub fn ok(rows: Vec<Vec<Cell>>, raw_rows: Vec<Vec<String>>) -> Self {
        ExecutionResult { status: ExecStatus::Ok, rows: Some(rows), raw_rows: Some(raw_rows), error: None }
    }

    pub fn sql_error(message: impl Into<String>) -> Self {
        let mut message = message.into();
        if message.is_empty() {
            message = "unknown SQL error".to_string();
        }
        ExecutionResult { status: ExecStatus::SqlError, rows: None, raw_rows: None, error: Some(message) }
    }

    pub fn timeout() -> Self {
        ExecutionResult {
            status: ExecStatus::Timeout,
            rows: None,
            raw_rows: None,
            error: Some("query timed out".to_string()),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == ExecStatus::Ok
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("result is not executable")]
pub struct NotExecutable;

/// Execution-accuracy comparison. Order-sensitive comparison is exact list
/// equality; otherwise rows are compared as multisets. Column order counts.
pub fn exec_match(pred: &ExecutionResult, gold: &ExecutionResult, order_sensitive: bool) -> Result<bool, NotExecutable> {
    let (Some(p), Some(g)) = (pred.rows.as_ref().filter(|_| pred.is_ok()), gold.rows.as_ref().filter(|_| gold.is_ok()))
    else {
        return Err(NotExecutable);
    };
    if p.len() != g.len() {
        return Ok(false);
    }
    if order_sensitive {
        return Ok(p == g);
    }
    let mut ps: Vec<&Vec<Cell>> = p.iter().collect();
    let mut gs: Vec<&Vec<Cell>> = g.iter().collect();
    ps.sort();
    gs.sort();
    Ok(ps == gs)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RunnerError {
    #[error("database unreadable: {0}")]
    DbUnreadable(String),
}

/// Executes read-only SQL against one database.
pub trait SqlRunner: Send + Sync {
    fn execute(&self, sql: &str) -> Result<ExecutionResult, RunnerError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptKind {
    Initial,
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub kind: PromptKind,
    pub raw_completion: String,
    /// Extracted statement, absent on extraction or completion failure.
    pub extracted_sql: Option<String>,
    pub execution: Option<ExecutionResult>,
    /// Failure description fed to the next fallback prompt.
    pub error: Option<String>,
    pub latency_ms: u64,
}

impl Attempt {
    pub fn succeeded(&self) -> bool {
        self.execution.as_ref().is_some_and(ExecutionResult::is_ok)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationOutcome {
    pub final_sql: Option<String>,
    pub attempts: Vec<Attempt>,
    pub fallback_used: bool,
    pub attempts_count: usize,
}

impl GenerationOutcome {
    /// Execution result of the successful final attempt.
    pub fn final_result(&self) -> Option<&ExecutionResult> {
        self.attempts.last().filter(|a| a.succeeded()).and_then(|a| a.execution.as_ref())
    }
}

pub struct FallbackContext<'a> {
    pub schema: &'a DatabaseSchema,
    pub values: &'a ValueStore,
    pub question: &'a Example,
}

/// Runs the initial prompt, then up to `max_fallbacks` revision prompts built
/// from the complete schema and the latest failure. Stops at the first
/// attempt whose SQL executes.
pub fn generate_with_fallback(
    initial: &Prompt,
    ctx: &FallbackContext<'_>,
    llm: &dyn Completer,
    params: &CompletionParams,
    runner: &dyn SqlRunner,
    max_fallbacks: usize,
) -> GenerationOutcome {
    let mut attempts = Vec::new();
    let mut prompt = initial.clone();
    let mut kind = PromptKind::Initial;
    let mut final_sql = None;

    for round in 0..=max_fallbacks {
        let attempt = run_attempt(&prompt.text, kind, llm, params, runner);
        let failed_sql = attempt.extracted_sql.clone().unwrap_or_else(|| attempt.raw_completion.clone());
        let error = attempt.error.clone();
        let done = attempt.succeeded();
        if done {
            final_sql = attempt.extracted_sql.clone();
        }
        attempts.push(attempt);
        if done || round == max_fallbacks {
            break;
        }
        prompt = build_fallback_prompt(
            ctx.schema,
            ctx.values,
            ctx.question,
            &failed_sql,
            error.as_deref().unwrap_or("unknown failure"),
        );
        kind = PromptKind::Fallback;
    }

    let fallback_used = attempts.iter().any(|a| a.kind == PromptKind::Fallback);
    GenerationOutcome { final_sql, attempts_count: attempts.len(), attempts, fallback_used }
}

fn run_attempt(
    prompt: &str,
    kind: PromptKind,
    llm: &dyn Completer,
    params: &CompletionParams,
    runner: &dyn SqlRunner,
) -> Attempt {
    let mut attempt =
        Attempt { kind, raw_completion: String::new(), extracted_sql: None, execution: None, error: None, latency_ms: 0 };
    let completion = match llm.complete(prompt, params) {
        Ok(c) => c,
        Err(e) => {
            attempt.error = Some(e.to_string());
            return attempt;
        }
    };
    attempt.latency_ms = completion.latency.as_millis() as u64;
    attempt.raw_completion = completion.text;
    let sql = match extract_sql(&attempt.raw_completion) {
        Ok(sql) => sql,
        Err(e) => {
            attempt.error = Some(e.to_string());
            return attempt;
        }
    };
    attempt.extracted_sql = Some(sql.clone());
    match runner.execute(&sql) {
        Ok(result) => {
            if !result.is_ok() {
                attempt.error = result.error.clone();
            }
            attempt.execution = Some(result);
        }
        Err(e) => attempt.error = Some(e.to_string()),
    }
    attempt
}
