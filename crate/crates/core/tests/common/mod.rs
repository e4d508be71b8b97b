#![allow(dead_code)]

use skelsql_core::schema::{ColumnType, RawColumn, RawSchema};
use skelsql_core::{DatabaseSchema, ValueStore};

pub fn toks(words: &[&str]) -> Vec<String> {
    words.iter().map(|w| w.to_string()).collect()
}

pub fn schema(
    db_id: &str,
    tables: &[&str],
    columns: &[(usize, &str, ColumnType)],
    primary_keys: &[usize],
    foreign_keys: &[(usize, usize)],
) -> DatabaseSchema {
    DatabaseSchema::from_raw(RawSchema {
        db_id: db_id.into(),
        tables: tables.iter().map(|t| t.to_string()).collect(),
        columns: columns
            .iter()
            .map(|(t, n, ty)| RawColumn { table: *t, name: n.to_string(), column_type: *ty })
            .collect(),
        primary_keys: primary_keys.to_vec(),
        foreign_keys: foreign_keys.to_vec(),
        db_path: String::new(),
    })
    .expect("valid toy schema")
}

/// Table `singer` with columns `Name` and `Nationality`.
pub fn singer_toy() -> (DatabaseSchema, ValueStore) {
    let s = schema(
        "concert_singer",
        &["singer"],
        &[(0, "Name", ColumnType::Text), (0, "Nationality", ColumnType::Text)],
        &[],
        &[],
    );
    let mut values = ValueStore::new();
    values.insert_column(&s, 1, ["Joe Sharp", "Timbaland", "Rose White"], 1000);
    values.insert_column(&s, 2, ["French", "Dutch", "American"], 1000);
    (s, values)
}

/// Two tables joined by a foreign key, with sample values.
pub fn concert_schema() -> (DatabaseSchema, ValueStore) {
    use ColumnType::*;
    let s = schema(
        "concert_singer",
        &["singer", "concert"],
        &[
            (0, "Singer_ID", Number),
            (0, "Name", Text),
            (0, "Country", Text),
            (0, "Age", Number),
            (1, "concert_ID", Number),
            (1, "concert_Name", Text),
            (1, "Singer_ID", Number),
            (1, "Year", Number),
        ],
        &[0, 4],
        &[(6, 0)],
    );
    let mut values = ValueStore::new();
    let col = |name: &str, table: usize| {
        s.columns().find(|c| c.original_name == name && c.parent_table == Some(table)).unwrap().id
    };
    values.insert_column(&s, col("Name", 0), ["Joe Sharp", "Timbaland", "Justin Brown", "Rose White"], 1000);
    values.insert_column(&s, col("Country", 0), ["Netherlands", "United States", "France"], 1000);
    values.insert_column(&s, col("Age", 0), ["52", "32", "25", "41"], 1000);
    values.insert_column(&s, col("concert_Name", 1), ["Auditions", "Super bootcamp", "Home Visits"], 1000);
    values.insert_column(&s, col("Year", 1), ["2014", "2015"], 1000);
    (s, values)
}
