#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use rusqlite::Connection;
use skelsql::harness::RunConfig;
use tempfile::TempDir;

pub const DB_IDS: [&str; 3] = ["concert_singer", "orchestra", "pets_1"];

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join("mini_spider")
}

/// The mini-Spider fixture with its databases built from the seed SQL in a
/// scratch directory.
pub struct MiniSpider {
    pub dir: TempDir,
    pub tables: PathBuf,
    pub train: PathBuf,
    pub dev: PathBuf,
    pub db_dir: PathBuf,
    pub index: PathBuf,
}

impl MiniSpider {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().expect("tempdir");
        let src = fixture_dir();
        let db_dir = dir.path().join("database");
        for db in DB_IDS {
            let target = db_dir.join(db);
            fs::create_dir_all(&target).unwrap();
            let sql = fs::read_to_string(src.join("seed").join(format!("{db}.sql"))).unwrap();
            let conn = Connection::open(target.join(format!("{db}.sqlite"))).unwrap();
            conn.execute_batch(&sql).unwrap();
        }
        for name in ["tables.json", "train.json", "dev.json"] {
            fs::copy(src.join(name), dir.path().join(name)).unwrap();
        }
        MiniSpider {
            tables: dir.path().join("tables.json"),
            train: dir.path().join("train.json"),
            dev: dir.path().join("dev.json"),
            index: dir.path().join("index").join("train.skix"),
            db_dir,
            dir,
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn db(&self, db_id: &str) -> PathBuf {
        skelsql::spider::db_path(&self.db_dir, db_id)
    }

    /// Defaults with `--dev` set.
    pub fn config(&self) -> RunConfig {
        let mut cfg = RunConfig::new(&self.tables, &self.train, &self.db_dir, &self.index);
        cfg.dev = Some(self.dev.clone());
        cfg
    }

    pub fn dev_examples(&self) -> Vec<skelsql::core::Example> {
        let schemas = skelsql::spider::load_schemas(&self.tables, &self.db_dir).unwrap();
        skelsql::spider::load_examples(&self.dev, &schemas).unwrap()
    }
}

pub mod fake_server;
