//! Schema filtering and prompt rendering.
//!
//! A prompt has three parts, always in this order, separated by a blank line:
//!
//! ```text
//! -- Question: <demo question>
//! <demo sql>;
//!
//! CREATE TABLE singer (singer_id number, name text);
//! -- FOREIGN KEY ...
//! -- name examples: v1, v2, v3
//!
//! -- Question: <question>
//! -- SQL:
//! ```
//!
//! The demonstration part is omitted when there are no demonstrations.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use crate::schema::{DatabaseSchema, DemonstrationExample, Example, ValueStore};

/// Sample values rendered per column.
pub const SAMPLE_VALUES: usize = 3;
/// Default prompt budget in estimated tokens.
pub const DEFAULT_TOKEN_CAP: usize = 6000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("expected {expected} item scores, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilteredSchema {
    /// Kept item ids, ascending.
    pub kept: Vec<usize>,
}

impl FilteredSchema {
    pub fn all(schema: &DatabaseSchema) -> Self {
        FilteredSchema { kept: (0..schema.len()).collect() }
    }

    pub fn contains(&self, id: usize) -> bool {
        self.kept.binary_search(&id).is_ok()
    }
}

/// Items scoring at least `theta`, closed under parent tables, primary keys
/// of kept tables, and foreign keys between kept tables. Returns an empty set
/// when nothing reaches the threshold.
pub fn threshold_with_closure(schema: &DatabaseSchema, item_scores: &[f64], theta: f64) -> BTreeSet<usize> {
    let seed: BTreeSet<usize> = item_scores.iter().enumerate().filter(|(_, &s)| s >= theta).map(|(j, _)| j).collect();
    close(schema, seed)
}

fn close(schema: &DatabaseSchema, mut kept: BTreeSet<usize>) -> BTreeSet<usize> {
    let parents: Vec<usize> = kept.iter().filter_map(|&j| schema.items[j].parent_table).collect();
    kept.extend(parents);
    let tables: BTreeSet<usize> = kept.iter().copied().filter(|&j| schema.items[j].is_table()).collect();
    for col in schema.columns() {
        let parent = col.parent_table.expect("column has a parent");
        if col.is_primary_key && tables.contains(&parent) {
            kept.insert(col.id);
        }
        if let Some(target) = col.foreign_key_to {
            let target_parent = schema.items[target].parent_table.expect("column has a parent");
            if tables.contains(&parent) && tables.contains(&target_parent) {
                kept.insert(col.id);
                kept.insert(target);
            }
        }
    }
    kept
}

/// Keeps items scoring at least `theta` plus their closure. If nothing
/// survives, keeps the table owning the top-scoring item together with all of
/// its columns.
pub fn filter_schema(schema: &DatabaseSchema, item_scores: &[f64], theta: f64) -> Result<FilteredSchema, PromptError> {
    if item_scores.len() != schema.len() {
        return Err(PromptError::ShapeMismatch { expected: schema.len(), got: item_scores.len() });
    }
    let mut kept = threshold_with_closure(schema, item_scores, theta);
    if kept.is_empty() {
        if let Some(best) = top_table(schema, item_scores) {
            kept.insert(best);
            kept.extend(schema.columns_of(best).map(|c| c.id));
        }
    }
    Ok(FilteredSchema { kept: kept.into_iter().collect() })
}

fn top_table(schema: &DatabaseSchema, item_scores: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for item in &schema.items {
        let score = item_scores[item.id];
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((item.parent_table.unwrap_or(item.id), score));
        }
    }
    best.map(|(t, _)| t)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub text: String,
    pub demonstrations: Range<usize>,
    pub schema: Range<usize>,
    pub question: Range<usize>,
    pub token_estimate: usize,
    /// Demonstrations actually rendered, after budget trimming.
    pub demo_count: usize,
}

impl Prompt {
    pub fn part(&self, range: &Range<usize>) -> &str {
        &self.text[range.clone()]
    }
}

/// Rough token count: one token per four characters, rounded up.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

fn sql_with_terminator(sql: &str) -> String {
    let mut s = String::from(sql.trim().trim_end_matches(';').trim_end());
    s.push(';');
    s
}

/// Renders demonstrations in descending similarity order, each as a
/// question comment line followed by its SQL, separated by blank lines.
pub fn render_demonstrations(demos: &[DemonstrationExample]) -> String {
    let mut sorted: Vec<&DemonstrationExample> = demos.iter().collect();
    sorted.sort_by(|a, b| b.similarity.partial_cmp(&a.similarity).unwrap_or(core::cmp::Ordering::Equal));
    let blocks: Vec<String> = sorted
        .iter()
        .map(|d| alloc::format!("-- Question: {}\n{}\n", one_line(&d.question), sql_with_terminator(&d.sql)))
        .collect();
    blocks.join("\n")
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// `CREATE TABLE` blocks for the kept items, with foreign-key and sample-value
/// comment lines.
pub fn render_schema(schema: &DatabaseSchema, filtered: &FilteredSchema, values: &ValueStore) -> String {
    let mut out = String::new();
    for table in schema.tables().filter(|t| filtered.contains(t.id)) {
        let cols: Vec<_> = schema.columns_of(table.id).filter(|c| filtered.contains(c.id)).collect();
        let defs: Vec<String> = cols
            .iter()
            .map(|c| alloc::format!("{} {}", c.original_name, c.column_type.map_or("others", |t| t.as_str())))
            .collect();
        let _ = writeln!(out, "CREATE TABLE {} ({});", table.original_name, defs.join(", "));
        for c in &cols {
            if let Some(target) = c.foreign_key_to.filter(|t| filtered.contains(*t)) {
                let target_col = &schema.items[target];
                let target_table = &schema.items[target_col.parent_table.expect("column has a parent")];
                let _ = writeln!(
                    out,
                    "-- FOREIGN KEY {}.{} REFERENCES {}.{}",
                    table.original_name, c.original_name, target_table.original_name, target_col.original_name
                );
            }
        }
        for c in &cols {
            let samples = values.samples(&schema.db_id, c.id, SAMPLE_VALUES);
            if !samples.is_empty() {
                let _ = writeln!(out, "-- {} examples: {}", c.original_name, samples.join(", "));
            }
        }
    }
    out
}

fn question_part(question: &Example) -> String {
    alloc::format!("-- Question: {}\n-- SQL:\n", one_line(&question.question_text))
}

fn assemble(demos: &str, schema: &str, question: &str) -> Prompt {
    let mut text = String::new();
    let d_start = 0;
    if !demos.is_empty() {
        text.push_str(demos);
        text.push('\n');
    }
    let d_end = text.len().saturating_sub(usize::from(!demos.is_empty()));
    let s_start = text.len();
    text.push_str(schema);
    let s_end = text.len();
    text.push('\n');
    let q_start = text.len();
    text.push_str(question);
    let token_estimate = estimate_tokens(&text);
    Prompt {
        demonstrations: d_start..d_end,
        schema: s_start..s_end,
        question: q_start..text.len(),
        token_estimate,
        demo_count: 0,
        text,
    }
}

/// Builds the initial prompt. Lowest-similarity demonstrations are dropped
/// until the estimate fits within `token_cap`.
pub fn build_prompt(
    demos: &[DemonstrationExample],
    schema: &DatabaseSchema,
    filtered: &FilteredSchema,
    values: &ValueStore,
    question: &Example,
    token_cap: usize,
) -> Prompt {
    let mut kept: Vec<DemonstrationExample> = demos.to_vec();
    kept.sort_by(|a, b| b.similarity.partial_cmp(&a.similarity).unwrap_or(core::cmp::Ordering::Equal));
    let schema_text = render_schema(schema, filtered, values);
    let question_text = question_part(question);
    loop {
        let mut prompt = assemble(&render_demonstrations(&kept), &schema_text, &question_text);
        prompt.demo_count = kept.len();
        if prompt.token_estimate <= token_cap || kept.is_empty() {
            return prompt;
        }
        kept.pop();
    }
}

/// Revision prompt: the complete schema, the failed SQL and the database
/// error, followed by the question. Carries no demonstrations.
pub fn build_fallback_prompt(
    schema: &DatabaseSchema,
    values: &ValueStore,
    question: &Example,
    failed_sql: &str,
    error: &str,
) -> Prompt {
    let mut schema_text = render_schema(schema, &FilteredSchema::all(schema), values);
    schema_text.push('\n');
    let _ = write!(
        schema_text,
        "-- The previous SQL query failed. Write a corrected SQL query using the complete schema above.\n\
         -- Failed SQL:\n{}\n-- Error: {}\n",
        failed_sql.trim_end(),
        one_line(error)
    );
    assemble("", &schema_text, &question_part(question))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{ColumnType, RawColumn, RawSchema};
    use alloc::string::ToString;
    use alloc::vec;

    fn schema() -> DatabaseSchema {
        DatabaseSchema::from_raw(RawSchema {
            db_id: "concert_singer".into(),
            tables: vec!["singer".into(), "concert".into()],
            columns: vec![
                RawColumn { table: 0, name: "Singer_ID".into(), column_type: ColumnType::Number },
                RawColumn { table: 0, name: "Name".into(), column_type: ColumnType::Text },
                RawColumn { table: 1, name: "concert_ID".into(), column_type: ColumnType::Number },
                RawColumn { table: 1, name: "Singer_ID".into(), column_type: ColumnType::Number },
                RawColumn { table: 1, name: "Year".into(), column_type: ColumnType::Number },
            ],
            primary_keys: vec![0, 2],
            foreign_keys: vec![(3, 0)],
            db_path: String::new(),
        })
        .unwrap()
    }

    fn demo(q: &str, sql: &str, sim: f64) -> DemonstrationExample {
        DemonstrationExample {
            example_id: 0,
            question: q.to_string(),
            skeleton: String::new(),
            sql: sql.to_string(),
            db_id: "x".into(),
            similarity: sim,
        }
    }

    // ids: 0 singer, 1 concert, 2 singer_id, 3 name, 4 concert_id, 5 singer_id, 6 year

    #[test]
    fn theta_zero_keeps_everything() {
        let s = schema();
        let f = filter_schema(&s, &[0.0; 7], 0.0).unwrap();
        assert_eq!(f.kept, (0..7).collect::<Vec<_>>());
    }

    #[test]
    fn nothing_survives_keeps_top_table() {
        let s = schema();
        let f = filter_schema(&s, &[0.2, 0.1, 0.0, 0.3, 0.0, 0.0, 1.0], 1.01).unwrap();
        assert_eq!(f.kept, [1, 4, 5, 6]);
    }

    #[test]
    fn closure_adds_parent_and_keys() {
        let s = schema();
        let f = filter_schema(&s, &[0.1, 0.0, 0.0, 0.9, 0.0, 0.0, 0.0], 0.4).unwrap();
        assert_eq!(f.kept, [0, 2, 3]);
        let f = filter_schema(&s, &[0.1, 0.0, 0.0, 0.9, 0.0, 0.0, 0.5], 0.4).unwrap();
        // both tables kept: primary keys and the foreign key pair join in
        assert_eq!(f.kept, [0, 1, 2, 3, 4, 5, 6]);
        assert!(filter_schema(&s, &[0.0; 3], 0.4).is_err());
    }

    #[test]
    fn demonstrations_render() {
        assert_eq!(render_demonstrations(&[]), "");
        assert_eq!(render_demonstrations(&[demo("How many?", "SELECT count(*) FROM t", 0.5)]), "-- Question: How many?\nSELECT count(*) FROM t;\n");
        let two = render_demonstrations(&[demo("a", "SELECT 1", 0.2), demo("b", "SELECT 2;", 0.9)]);
        assert_eq!(two, "-- Question: b\nSELECT 2;\n\n-- Question: a\nSELECT 1;\n");
    }

    #[test]
    fn prompt_without_demos_has_two_parts() {
        let s = schema();
        let q = Example::new("How many singers?", "SELECT count(*) FROM singer", "concert_singer").unwrap();
        let f = FilteredSchema { kept: vec![0, 2, 3] };
        let p = build_prompt(&[], &s, &f, &ValueStore::new(), &q, DEFAULT_TOKEN_CAP);
        assert_eq!(p.text, "CREATE TABLE singer (Singer_ID number, Name text);\n\n-- Question: How many singers?\n-- SQL:\n");
        assert!(p.demonstrations.is_empty());
        assert_eq!(p.part(&p.question), "-- Question: How many singers?\n-- SQL:\n");
    }

    #[test]
    fn foreign_keys_and_values_render() {
        let s = schema();
        let mut v = ValueStore::new();
        v.insert_column(&s, 3, ["Zed", "amy", "Bob", "carl"], 100);
        let text = render_schema(&s, &FilteredSchema::all(&s), &v);
        assert!(text.contains("CREATE TABLE concert (concert_ID number, Singer_ID number, Year number);"));
        assert!(text.contains("-- FOREIGN KEY concert.Singer_ID REFERENCES singer.Singer_ID\n"));
        assert!(text.contains("-- Name examples: amy, bob, carl\n"));
    }

    #[test]
    fn token_cap_drops_weakest_demos() {
        let s = schema();
        let q = Example::new("q", "SELECT 1", "concert_singer").unwrap();
        let f = FilteredSchema::all(&s);
        let demos = vec![demo("strong", "SELECT 1", 0.9), demo("weak", "SELECT 2", 0.1)];
        let full = build_prompt(&demos, &s, &f, &ValueStore::new(), &q, DEFAULT_TOKEN_CAP);
        assert_eq!(full.demo_count, 2);
        let cap = full.token_estimate - 1;
        let trimmed = build_prompt(&demos, &s, &f, &ValueStore::new(), &q, cap);
        assert_eq!(trimmed.demo_count, 1);
        assert!(trimmed.text.contains("strong") && !trimmed.text.contains("weak"));
    }

    #[test]
    fn fallback_prompt_has_everything() {
        let s = schema();
        let q = Example::new("q", "SELECT 1", "concert_singer").unwrap();
        let p = build_fallback_prompt(&s, &ValueStore::new(), &q, "SELEC *", "syntax error");
        assert!(p.text.contains("SELEC *\n") && p.text.contains("syntax error"));
        assert_eq!(p.text.matches("CREATE TABLE").count(), s.table_count());
        assert_eq!(p, build_fallback_prompt(&s, &ValueStore::new(), &q, "SELEC *", "syntax error"));
    }
}
