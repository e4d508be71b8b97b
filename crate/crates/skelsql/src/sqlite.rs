//! Read-only SQLite execution with a per-query time limit.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rusqlite::types::ValueRef;
use rusqlite::{Connection, ErrorCode, OpenFlags};
use skelsql_core::exec::RunnerError;
use skelsql_core::{Cell, ExecutionResult, SqlRunner};

/// Virtual-machine instructions between time-limit checks.
const PROGRESS_STEPS: i32 = 1000;

pub const DEFAULT_QUERY_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone)]
pub struct SqliteRunner {
    path: PathBuf,
    timeout: Duration,
}

impl SqliteRunner {
    pub fn new(path: impl Into<PathBuf>, timeout: Duration) -> Self {
        SqliteRunner { path: path.into(), timeout }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn open(&self) -> Result<Connection, RunnerError> {
        let unreadable = |reason: String| RunnerError::DbUnreadable(format!("{}: {reason}", self.path.display()));
        if !self.path.is_file() {
            return Err(unreadable("no such file".into()));
        }
        Connection::open_with_flags(&self.path, OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_NO_MUTEX)
            .map_err(|e| unreadable(e.to_string()))
    }
}

fn cell(v: ValueRef<'_>) -> (Cell, String) {
    match v {
        ValueRef::Null => (Cell::Null, "NULL".into()),
        ValueRef::Integer(i) => (Cell::Int(i), i.to_string()),
        ValueRef::Real(x) => (Cell::real(x), x.to_string()),
        ValueRef::Text(t) => {
            let s = String::from_utf8_lossy(t);
            (Cell::text(&s), s.into_owned())
        }
        ValueRef::Blob(b) => (Cell::Blob(b.to_vec()), format!("<{} bytes>", b.len())),
    }
}

fn is_interrupt(e: &rusqlite::Error) -> bool {
    matches!(e, rusqlite::Error::SqliteFailure(f, _) if f.code == ErrorCode::OperationInterrupted)
}

impl SqlRunner for SqliteRunner {
    fn execute(&self, sql: &str) -> Result<ExecutionResult, RunnerError> {
        let conn = self.open()?;
        let deadline = Instant::now() + self.timeout;
        conn.progress_handler(PROGRESS_STEPS, Some(move || Instant::now() > deadline));

        let mut stmt = match conn.prepare(sql) {
            Ok(stmt) => stmt,
            Err(e) => return Ok(ExecutionResult::sql_error(e.to_string())),
        };
        if !stmt.readonly() {
            return Ok(ExecutionResult::sql_error("only read-only statements may be executed"));
        }
        let width = stmt.column_count();
        let mut rows = match stmt.query([]) {
            Ok(rows) => rows,
            Err(e) if is_interrupt(&e) => return Ok(ExecutionResult::timeout()),
            Err(e) => return Ok(ExecutionResult::sql_error(e.to_string())),
        };
        let mut cells = Vec::new();
        let mut raw = Vec::new();
        loop {
            match rows.next() {
                Ok(Some(row)) => {
                    let (c, r): (Vec<Cell>, Vec<String>) =
                        (0..width).map(|i| cell(row.get_ref(i).expect("column in range"))).unzip();
                    cells.push(c);
                    raw.push(r);
                }
                Ok(None) => break,
                Err(e) if is_interrupt(&e) => return Ok(ExecutionResult::timeout()),
                Err(e) => return Ok(ExecutionResult::sql_error(e.to_string())),
            }
        }
        Ok(ExecutionResult::ok(cells, raw))
    }
}
