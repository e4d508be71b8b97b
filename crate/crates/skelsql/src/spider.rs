//! Spider-format dataset loading.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use rusqlite::{Connection, OpenFlags};
use serde::Deserialize;
use skelsql_core::schema::{RawColumn, RawSchema, SchemaError};
use skelsql_core::{ColumnType, DatabaseSchema, Example, ItemKind, ValueStore};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("file not found: {0}")]
    FileMissing(PathBuf),
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path} is not valid JSON: {reason}")]
    InvalidJson { path: PathBuf, reason: String },
    #[error("malformed schema `{db_id}`: {reason}")]
    MalformedSchema { db_id: String, reason: String },
    #[error("example {index} references unknown database `{db_id}`")]
    UnknownDbId { index: usize, db_id: String },
    #[error("malformed example {index}: {reason}")]
    MalformedExample { index: usize, reason: String },
    #[error("database {path} unreadable: {reason}")]
    DbUnreadable { path: PathBuf, reason: String },
    #[error("schema item {0} is not a column")]
    NotAColumn(usize),
}

#[derive(Deserialize)]
struct TablesEntry {
    db_id: String,
    table_names_original: Vec<String>,
    column_names_original: Vec<(i64, String)>,
    column_types: Vec<String>,
    #[serde(default)]
    primary_keys: Vec<KeyRef>,
    #[serde(default)]
    foreign_keys: Vec<(usize, usize)>,
}

/// Newer Spider releases list composite primary keys as nested arrays.
#[derive(Deserialize)]
#[serde(untagged)]
enum KeyRef {
    One(usize),
    Many(Vec<usize>),
}

#[derive(Deserialize)]
struct ExampleEntry {
    question: Option<String>,
    query: Option<String>,
    db_id: Option<String>,
}

/// `<db_dir>/<db_id>/<db_id>.sqlite`
pub fn db_path(db_dir: &Path, db_id: &str) -> PathBuf {
    db_dir.join(db_id).join(format!("{db_id}.sqlite"))
}

fn read(path: &Path) -> Result<String, IngestError> {
    fs::read_to_string(path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            IngestError::FileMissing(path.to_path_buf())
        } else {
            IngestError::Io { path: path.to_path_buf(), source }
        }
    })
}

fn parse<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<T, IngestError> {
    serde_json::from_str(text).map_err(|e| IngestError::InvalidJson { path: path.to_path_buf(), reason: e.to_string() })
}

/// Loads every schema in `tables.json`, sorted by `db_id`. Database paths
/// are resolved under `db_dir`.
pub fn load_schemas(tables: &Path, db_dir: &Path) -> Result<Vec<DatabaseSchema>, IngestError> {
    let entries: Vec<serde_json::Value> = parse(tables, &read(tables)?)?;
    let mut schemas = Vec::with_capacity(entries.len());
    for value in entries {
        let db_id = value.get("db_id").and_then(|v| v.as_str()).unwrap_or("").to_string();
        let entry: TablesEntry = serde_json::from_value(value)
            .map_err(|e| IngestError::MalformedSchema { db_id: db_id.clone(), reason: e.to_string() })?;
        schemas.push(convert(entry, db_dir)?);
    }
    schemas.sort_by(|a, b| a.db_id.cmp(&b.db_id));
    Ok(schemas)
}

fn convert(entry: TablesEntry, db_dir: &Path) -> Result<DatabaseSchema, IngestError> {
    let malformed = |reason: String| IngestError::MalformedSchema { db_id: entry.db_id.clone(), reason };
    if entry.column_types.len() != entry.column_names_original.len() {
        return Err(malformed(format!(
            "{} column types for {} columns",
            entry.column_types.len(),
            entry.column_names_original.len()
        )));
    }
    // Source column index -> position in `columns`; the `*` pseudo-column
    // (table -1) has no position.
    let mut position = HashMap::new();
    let mut columns = Vec::new();
    for (src, ((table, name), ty)) in entry.column_names_original.iter().zip(&entry.column_types).enumerate() {
        if *table < 0 {
            continue;
        }
        position.insert(src, columns.len());
        columns.push(RawColumn { table: *table as usize, name: name.clone(), column_type: ColumnType::from_spider(ty) });
    }
    let lookup = |src: usize| position.get(&src).copied().ok_or_else(|| malformed(format!("key refers to column {src}")));
    let mut primary_keys = Vec::new();
    for key in &entry.primary_keys {
        match key {
            KeyRef::One(c) => primary_keys.push(lookup(*c)?),
            KeyRef::Many(cs) => {
                for c in cs {
                    primary_keys.push(lookup(*c)?);
                }
            }
        }
    }
    let foreign_keys =
        entry.foreign_keys.iter().map(|&(a, b)| Ok((lookup(a)?, lookup(b)?))).collect::<Result<Vec<_>, IngestError>>()?;

    let raw = RawSchema {
        db_id: entry.db_id.clone(),
        tables: entry.table_names_original.clone(),
        columns,
        primary_keys,
        foreign_keys,
        db_path: db_path(db_dir, &entry.db_id).to_string_lossy().into_owned(),
    };
    DatabaseSchema::from_raw(raw).map_err(|e| match e {
        SchemaError::Malformed { db_id, reason } => IngestError::MalformedSchema { db_id, reason },
        other => malformed(other.to_string()),
    })
}

/// Loads a Spider question file, preserving file order.
pub fn load_examples(file: &Path, schemas: &[DatabaseSchema]) -> Result<Vec<Example>, IngestError> {
    let entries: Vec<serde_json::Value> = parse(file, &read(file)?)?;
    let known: BTreeSet<&str> = schemas.iter().map(|s| s.db_id.as_str()).collect();
    entries
        .into_iter()
        .enumerate()
        .map(|(index, value)| {
            let bad = |reason: String| IngestError::MalformedExample { index, reason };
            let entry: ExampleEntry = serde_json::from_value(value).map_err(|e| bad(e.to_string()))?;
            let db_id = entry.db_id.ok_or_else(|| bad("missing db_id".into()))?;
            if !known.contains(db_id.as_str()) {
                return Err(IngestError::UnknownDbId { index, db_id });
            }
            let question = entry.question.unwrap_or_default();
            let query = entry.query.unwrap_or_default();
            Example::new(&question, &query, &db_id).map_err(|e| bad(e.to_string()))
        })
        .collect()
}

pub(crate) fn open_read_only(path: &Path) -> Result<Connection, IngestError> {
    if !path.is_file() {
        return Err(IngestError::DbUnreadable { path: path.to_path_buf(), reason: "no such file".into() });
    }
    Connection::open_with_flags(path, OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_NO_MUTEX)
        .map_err(|e| IngestError::DbUnreadable { path: path.to_path_buf(), reason: e.to_string() })
}

fn quote_ident(name: &str) -> String {
    format!("\"{}\"", name.replace('"', "\"\""))
}

/// Distinct values of one column: trimmed, lowercased, ascending, at most
/// `cap` of them.
pub fn column_values(schema: &DatabaseSchema, column: usize, cap: usize) -> Result<BTreeSet<String>, IngestError> {
    let item = schema.item(column).filter(|i| i.kind == ItemKind::Column).ok_or(IngestError::NotAColumn(column))?;
    let table = &schema.items[item.parent_table.expect("column has a parent")];
    let path = Path::new(&schema.db_path);
    let conn = open_read_only(path)?;
    let unreadable = |e: rusqlite::Error| IngestError::DbUnreadable { path: path.to_path_buf(), reason: e.to_string() };
    let col = quote_ident(&item.original_name);
    let sql = format!("SELECT DISTINCT CAST({col} AS TEXT) FROM {} WHERE {col} IS NOT NULL", quote_ident(&table.original_name));
    let mut stmt = conn.prepare(&sql).map_err(unreadable)?;
    let mut rows = stmt.query([]).map_err(unreadable)?;
    let mut out = BTreeSet::new();
    while let Some(row) = rows.next().map_err(unreadable)? {
        let v: Option<String> = row.get(0).unwrap_or(None);
        if let Some(v) = v.map(|v| v.trim().to_lowercase()).filter(|v| !v.is_empty()) {
            out.insert(v);
        }
    }
    while out.len() > cap {
        out.pop_last();
    }
    Ok(out)
}

/// Scans every column of every schema into a value store.
pub fn load_values(schemas: &[DatabaseSchema], cap: usize) -> Result<ValueStore, IngestError> {
    let mut store = ValueStore::new();
    for schema in schemas {
        for col in schema.columns().map(|c| c.id).collect::<Vec<_>>() {
            let values = column_values(schema, col, cap)?;
            store.insert_column(schema, col, values, cap);
        }
    }
    Ok(store)
}
