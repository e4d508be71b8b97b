//! Spider ingest, SQLite execution, completion and encoder clients, and the
//! evaluation harness around `skelsql-core`.

pub mod harness;
pub mod llm;
pub mod net;
pub mod sidecar;
pub mod spider;
pub mod sqlite;

pub use skelsql_core as core;
