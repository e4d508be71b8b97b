//! Database schema, question and value data model.
//!
//! A schema is flattened into a single item sequence: every table in source
//! order, followed by the columns of each table in source order. All relevance
//! matrices index their second axis by this sequence.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::tokenize::tokenize;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SchemaError {
    #[error("malformed schema `{db_id}`: {reason}")]
    Malformed { db_id: String, reason: String },
    #[error("malformed example: {0}")]
    MalformedExample(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ItemKind {
    Table,
    Column,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    Text,
    Number,
    Time,
    Boolean,
    Other,
}

impl ColumnType {
    /// Maps a Spider `column_types` entry. Unknown names become `Other`.
    pub fn from_spider(raw: &str) -> Self {
        match raw.trim().to_ascii_lowercase().as_str() {
            "text" => ColumnType::Text,
            "number" | "int" | "integer" | "real" => ColumnType::Number,
            "time" | "date" | "datetime" => ColumnType::Time,
            "boolean" | "bool" => ColumnType::Boolean,
            _ => ColumnType::Other,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ColumnType::Text => "text",
            ColumnType::Number => "number",
            ColumnType::Time => "time",
            ColumnType::Boolean => "boolean",
            ColumnType::Other => "others",
        }
    }
}

impl fmt::Display for ColumnType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaItem {
    /// Position in the linearized item sequence.
    pub id: usize,
    pub kind: ItemKind,
    /// Lowercase display name, underscores replaced by spaces.
    pub name: String,
    pub original_name: String,
    pub parent_table: Option<usize>,
    pub column_type: Option<ColumnType>,
    pub is_primary_key: bool,
    pub foreign_key_to: Option<usize>,
}

impl SchemaItem {
    pub fn is_table(&self) -> bool {
        self.kind == ItemKind::Table
    }

    pub fn is_column(&self) -> bool {
        self.kind == ItemKind::Column
    }
}

/// Column description as it appears in a source schema file, before
/// linearization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawColumn {
    pub table: usize,
    pub name: String,
    pub column_type: ColumnType,
}

/// Source-order schema description. Column indices in `primary_keys` and
/// `foreign_keys` refer to positions in `columns`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RawSchema {
    pub db_id: String,
    pub tables: Vec<String>,
    pub columns: Vec<RawColumn>,
    pub primary_keys: Vec<usize>,
    pub foreign_keys: Vec<(usize, usize)>,
    pub db_path: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatabaseSchema {
    pub db_id: String,
    pub items: Vec<SchemaItem>,
    pub db_path: String,
}

/// Lowercases a raw identifier and turns `_` separators into single spaces.
pub fn display_name(original: &str) -> String {
    let lowered = original.to_lowercase().replace('_', " ");
    lowered.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl DatabaseSchema {
    /// Linearizes a source schema: tables first, then each table's columns.
    pub fn from_raw(raw: RawSchema) -> Result<Self, SchemaError> {
        let malformed = |reason: String| SchemaError::Malformed { db_id: raw.db_id.clone(), reason };
        if raw.db_id.is_empty() {
            return Err(malformed("empty db_id".into()));
        }
        for (i, col) in raw.columns.iter().enumerate() {
            if col.table >= raw.tables.len() {
                return Err(malformed(alloc::format!(
                    "column {i} (`{}`) references table index {} of {}",
                    col.name,
                    col.table,
                    raw.tables.len()
                )));
            }
        }

        let mut items = Vec::with_capacity(raw.tables.len() + raw.columns.len());
        for (t, name) in raw.tables.iter().enumerate() {
            items.push(SchemaItem {
                id: t,
                kind: ItemKind::Table,
                name: display_name(name),
                original_name: name.clone(),
                parent_table: None,
                column_type: None,
                is_primary_key: false,
                foreign_key_to: None,
            });
        }

        // raw column index -> linearized id
        let mut column_ids = alloc::vec![0usize; raw.columns.len()];
        for t in 0..raw.tables.len() {
            for (c, col) in raw.columns.iter().enumerate().filter(|(_, col)| col.table == t) {
                column_ids[c] = items.len();
                items.push(SchemaItem {
                    id: items.len(),
                    kind: ItemKind::Column,
                    name: display_name(&col.name),
                    original_name: col.name.clone(),
                    parent_table: Some(t),
                    column_type: Some(col.column_type),
                    is_primary_key: false,
                    foreign_key_to: None,
                });
            }
        }

        for &pk in &raw.primary_keys {
            let id = *column_ids
                .get(pk)
                .ok_or_else(|| malformed(alloc::format!("primary key references column {pk}")))?;
            items[id].is_primary_key = true;
        }
        for &(from, to) in &raw.foreign_keys {
            let (Some(&from_id), Some(&to_id)) = (column_ids.get(from), column_ids.get(to)) else {
                return Err(malformed(alloc::format!("foreign key ({from}, {to}) out of range")));
            };
            items[from_id].foreign_key_to = Some(to_id);
        }

        let schema = DatabaseSchema { db_id: raw.db_id, items, db_path: raw.db_path };
        schema.check_unique_names()?;
        Ok(schema)
    }

    fn check_unique_names(&self) -> Result<(), SchemaError> {
        let mut seen = BTreeSet::new();
        for item in &self.items {
            if !seen.insert((item.kind, item.parent_table, item.original_name.to_lowercase())) {
                return Err(SchemaError::Malformed {
                    db_id: self.db_id.clone(),
                    reason: alloc::format!("duplicate {:?} name `{}`", item.kind, item.original_name),
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn tables(&self) -> impl Iterator<Item = &SchemaItem> {
        self.items.iter().filter(|i| i.is_table())
    }

    pub fn columns(&self) -> impl Iterator<Item = &SchemaItem> {
        self.items.iter().filter(|i| i.is_column())
    }

    pub fn table_count(&self) -> usize {
        self.tables().count()
    }

    pub fn column_count(&self) -> usize {
        self.columns().count()
    }

    pub fn columns_of(&self, table: usize) -> impl Iterator<Item = &SchemaItem> {
        self.items.iter().filter(move |i| i.parent_table == Some(table))
    }

    pub fn item(&self, id: usize) -> Option<&SchemaItem> {
        self.items.get(id)
    }

    /// Display names in linearized order, as fed to an encoder.
    pub fn item_names(&self) -> Vec<String> {
        self.items.iter().map(|i| i.name.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub question_text: String,
    pub question_tokens: Vec<String>,
    pub gold_sql: String,
    pub db_id: String,
}

impl Example {
    pub fn new(question: &str, gold_sql: &str, db_id: &str) -> Result<Self, SchemaError> {
        let question_tokens = tokenize(question);
        if question_tokens.is_empty() {
            return Err(SchemaError::MalformedExample("empty question".into()));
        }
        if gold_sql.trim().is_empty() {
            return Err(SchemaError::MalformedExample("empty gold SQL".into()));
        }
        Ok(Example {
            question_text: question.trim().to_string(),
            question_tokens,
            gold_sql: gold_sql.trim().to_string(),
            db_id: db_id.to_string(),
        })
    }

    /// Normalized question: the tokens joined with single spaces.
    pub fn normalized_question(&self) -> String {
        self.question_tokens.join(" ")
    }
}

/// Retrieved training example rendered into a prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemonstrationExample {
    pub example_id: u64,
    pub question: String,
    pub skeleton: String,
    pub sql: String,
    pub db_id: String,
    pub similarity: f64,
}

/// Distinct cell values per `(db_id, column id)`, trimmed and lowercased.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValueStore {
    values: BTreeMap<String, BTreeMap<usize, BTreeSet<String>>>,
}

impl ValueStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Normalizes and stores values for a column, keeping the `cap` smallest
    /// after sorting. Returns false (and stores nothing) when `column` is not a
    /// column of `schema`.
    pub fn insert_column<I, S>(&mut self, schema: &DatabaseSchema, column: usize, values: I, cap: usize) -> bool
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        if !schema.item(column).is_some_and(SchemaItem::is_column) {
            return false;
        }
        let mut set: BTreeSet<String> = values
            .into_iter()
            .map(|v| v.as_ref().trim().to_lowercase())
            .filter(|v| !v.is_empty())
            .collect();
        while set.len() > cap {
            set.pop_last();
        }
        self.values.entry(schema.db_id.clone()).or_default().insert(column, set);
        true
    }

    pub fn column(&self, db_id: &str, column: usize) -> Option<&BTreeSet<String>> {
        self.values.get(db_id)?.get(&column)
    }

    /// Columns with stored values for a database, in id order.
    pub fn columns(&self, db_id: &str) -> impl Iterator<Item = (usize, &BTreeSet<String>)> {
        self.values.get(db_id).into_iter().flat_map(|m| m.iter().map(|(k, v)| (*k, v)))
    }

    pub fn has_db(&self, db_id: &str) -> bool {
        self.values.contains_key(db_id)
    }

    /// Whether `token` is a stored value of item `item_id`. A table item holds
    /// the union of its columns' values.
    pub fn item_contains(&self, schema: &DatabaseSchema, item_id: usize, token: &str) -> bool {
        let Some(item) = schema.item(item_id) else { return false };
        match item.kind {
            ItemKind::Column => self.column(&schema.db_id, item_id).is_some_and(|s| s.contains(token)),
            ItemKind::Table => schema
                .columns_of(item_id)
                .any(|c| self.column(&schema.db_id, c.id).is_some_and(|s| s.contains(token))),
        }
    }

    /// First `n` values of a column in ascending order.
    pub fn samples(&self, db_id: &str, column: usize, n: usize) -> Vec<&str> {
        self.column(db_id, column)
            .map(|s| s.iter().take(n).map(String::as_str).collect())
            .unwrap_or_default()
    }
}
